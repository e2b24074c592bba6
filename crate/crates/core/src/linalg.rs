//! Dense complex matrices, permanents and the unitaries used by the
//! distillation circuits.
//!
//! Matrices follow the scattering convention used throughout the crate: row
//! `i` is an input mode, column `j` an output mode, and `u[(i, j)]` is the
//! amplitude for a photon entering mode `i` to leave through mode `j`.
//! Circuits applied one after another therefore compose left to right.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::ops::{Deref, Index, IndexMut};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest matrix accepted by [`permanent`].
pub const MAX_PERMANENT_SIZE: usize = 24;
/// Largest matrix accepted by [`permanent_naive`].
pub const MAX_NAIVE_PERMANENT_SIZE: usize = 10;
/// Entrywise tolerance on `U U^dagger - I` for a matrix to count as unitary.
pub const UNITARITY_TOL: f64 = 1e-12;

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Entrywise `|a_ij|^2` as a (real-valued) complex matrix.
    pub fn abs_sq(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| C64::new(z.norm_sqr(), 0.0))
                .collect(),
        }
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "elementwise product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Block-diagonal sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let rows = self.rows + other.rows;
        let cols = self.cols + other.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out[(self.rows + i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// Selects rows and columns by index; repeated indices repeat the row or
    /// column.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(Error::Dimension(format!("row index {bad} out of range")));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::Dimension(format!("column index {bad} out of range")));
        }
        Ok(Self::from_fn(rows.len(), cols.len(), |i, j| {
            self[(rows[i], cols[j])]
        }))
    }

    /// Largest entrywise deviation of `A A^dagger` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self[(i, k)] * self[(j, k)].conj();
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i}, {j}) out of range"
        );
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i}, {j}) out of range"
        );
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// A matrix that has passed the unitarity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Unitary(ComplexMatrix);

impl Unitary {
    pub fn try_new(m: ComplexMatrix) -> Result<Self> {
        let dev = m.unitarity_deviation();
        if dev > UNITARITY_TOL {
            return Err(Error::Numerical(format!(
                "matrix is not unitary (deviation {dev:e})"
            )));
        }
        Ok(Self(m))
    }

    pub fn modes(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }
}

impl Deref for Unitary {
    type Target = ComplexMatrix;

    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

fn check_square(m: &ComplexMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "permanent of a non-square {}x{} matrix",
            m.rows, m.cols
        )));
    }
    Ok(m.rows)
}

/// Permanent by Ryser's inclusion-exclusion formula, visiting column subsets
/// in Gray-code order so each step updates the row sums by one column.
pub fn permanent(m: &ComplexMatrix) -> Result<C64> {
    let n = check_square(m)?;
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::SizeLimit {
            what: "permanent",
            size: n,
            limit: MAX_PERMANENT_SIZE,
        });
    }
    Ok(ryser(m, n))
}

fn ryser(m: &ComplexMatrix, n: usize) -> C64 {
    if n == 0 {
        return C64::new(1.0, 0.0);
    }
    // Column-major copy so a toggled column is contiguous.
    let columns: Vec<C64> = (0..n)
        .flat_map(|j| (0..n).map(move |i| m[(i, j)]))
        .collect();
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut total = C64::new(0.0, 0.0);
    let mut gray: u32 = 0;
    for step in 1u32..(1u32 << n) {
        let j = step.trailing_zeros() as usize;
        gray ^= 1 << j;
        let col = &columns[j * n..(j + 1) * n];
        if gray & (1 << j) != 0 {
            row_sums.iter_mut().zip(col).for_each(|(s, a)| *s += a);
        } else {
            row_sums.iter_mut().zip(col).for_each(|(s, a)| *s -= a);
        }
        let prod = row_sums.iter().fold(C64::new(1.0, 0.0), |acc, s| acc * s);
        if (n - gray.count_ones() as usize).is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

/// Permanent by explicit expansion over all `n!` permutations. Reference
/// implementation for small matrices.
pub fn permanent_naive(m: &ComplexMatrix) -> Result<C64> {
    let n = check_square(m)?;
    if n > MAX_NAIVE_PERMANENT_SIZE {
        return Err(Error::SizeLimit {
            what: "naive permanent",
            size: n,
            limit: MAX_NAIVE_PERMANENT_SIZE,
        });
    }
    fn expand(m: &ComplexMatrix, row: usize, used: &mut [bool], prefix: C64, acc: &mut C64) {
        let n = used.len();
        if row == n {
            *acc += prefix;
            return;
        }
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                expand(m, row + 1, used, prefix * m[(row, col)], acc);
                used[col] = false;
            }
        }
    }
    let mut acc = C64::new(0.0, 0.0);
    expand(m, 0, &mut vec![false; n], C64::new(1.0, 0.0), &mut acc);
    Ok(acc)
}

/// The `n`-mode discrete Fourier transform, `U_jk = exp(2πi jk/n)/√n` with
/// zero-based `j, k`.
pub fn fourier_unitary(n: usize) -> Result<Unitary> {
    if n == 0 {
        return Err(Error::Domain(
            "Fourier matrix needs at least one mode".into(),
        ));
    }
    let norm = 1.0 / (n as f64).sqrt();
    // Reduce the exponent mod n before scaling to keep the phases exact.
    let m = ComplexMatrix::from_fn(n, n, |j, k| {
        let phase = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
        C64::from_polar(norm, phase)
    });
    Unitary::try_new(m)
}

/// Balanced beamsplitter `(1/√2) [[1, i], [i, 1]]`.
pub fn beamsplitter() -> Unitary {
    let a = C64::new(FRAC_1_SQRT_2, 0.0);
    let b = C64::new(0.0, FRAC_1_SQRT_2);
    Unitary(ComplexMatrix {
        rows: 2,
        cols: 2,
        data: vec![a, b, b, a],
    })
}

/// Haar-random unitary drawn from a seeded ChaCha stream.
pub fn haar_unitary(n: usize, seed: u64) -> Result<Unitary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_unitary_with_rng(n, &mut rng)
}

/// Haar-random unitary from a complex Gaussian matrix: Gram-Schmidt QR keeps
/// the diagonal of R real and positive, which is the phase normalisation the
/// Haar measure needs.
pub fn haar_unitary_with_rng<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Unitary> {
    if n == 0 {
        return Err(Error::Domain("Haar unitary needs at least one mode".into()));
    }
    let mut cols: Vec<Vec<C64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im) * FRAC_1_SQRT_2
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        // Two passes of modified Gram-Schmidt for orthogonality to working precision.
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let q = &done[k];
                let v = &mut rest[0];
                let proj: C64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(q).for_each(|(b, a)| *b -= proj * a);
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::Numerical("degenerate Gaussian draw".into()));
        }
        cols[j].iter_mut().for_each(|z| *z /= norm);
    }
    // Column j of Q is the j-th orthonormal vector.
    Unitary::try_new(ComplexMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// The `(n+1)`-mode circuit of the visibility setup: the `n`-mode Fourier
/// transform on modes `1..n` (mode `n+1` untouched), followed by a balanced
/// beamsplitter between output modes `n` and `n+1`.
pub fn compose_distillation_circuit(n: usize) -> Result<Unitary> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "distillation circuit needs n >= 2, got {n}"
        )));
    }
    let stage1 = fourier_unitary(n)?
        .matrix()
        .direct_sum(&ComplexMatrix::identity(1));
    let bs = beamsplitter();
    let mut stage2 = ComplexMatrix::identity(n + 1);
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        stage2[(n - 1 + a, n - 1 + b)] = bs[(a, b)];
    }
    Unitary::try_new(stage1.matmul(&stage2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn rel_close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
    }

    #[test]
    fn identity_and_ones() {
        assert_eq!(
            permanent(&ComplexMatrix::identity(2)).unwrap(),
            C64::new(1.0, 0.0)
        );
        let mut fact = 1.0;
        for n in 1..=8 {
            fact *= n as f64;
            let ones = ComplexMatrix::from_fn(n, n, |_, _| C64::new(1.0, 0.0));
            let p = permanent(&ones).unwrap();
            assert!(
                (p.re - fact).abs() < 1e-9 * fact && p.im == 0.0,
                "n={n}: {p}"
            );
        }
    }

    #[test]
    fn empty_matrix_has_unit_permanent() {
        assert_eq!(
            permanent(&ComplexMatrix::zeros(0, 0)).unwrap(),
            C64::new(1.0, 0.0)
        );
    }

    #[test]
    fn constant_matrix() {
        // every entry 1/sqrt(N): perm = k!/N^{k/2}
        let big_n = 7.0f64;
        let mut fact = 1.0;
        for k in 1..=7 {
            fact *= k as f64;
            let m = ComplexMatrix::from_fn(k, k, |_, _| C64::new(1.0 / big_n.sqrt(), 0.0));
            let expect = fact / big_n.powf(k as f64 / 2.0);
            assert!(rel_close(
                permanent(&m).unwrap(),
                C64::new(expect, 0.0),
                1e-12
            ));
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            permanent(&ComplexMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            permanent(&ComplexMatrix::zeros(25, 25)),
            Err(Error::SizeLimit { size: 25, .. })
        ));
    }

    #[test]
    fn zero_row_gives_zero() {
        let mut m = random_matrix(6, 3);
        for j in 0..6 {
            m[(2, j)] = C64::new(0.0, 0.0);
        }
        assert!(permanent(&m).unwrap().norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn ryser_matches_naive(n in 1usize..=7, seed in any::<u64>()) {
            let m = random_matrix(n, seed);
            let fast = permanent(&m).unwrap();
            let slow = permanent_naive(&m).unwrap();
            prop_assert!((fast - slow).norm() <= 1e-10 * slow.norm().max(1e-3));
        }

        #[test]
        fn invariant_under_row_and_column_permutations(n in 2usize..=7, seed in any::<u64>()) {
            let m = random_matrix(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut rows: Vec<usize> = (0..n).collect();
            let mut cols: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            let p = permanent(&m).unwrap();
            let q = permanent(&m.select(&rows, &cols).unwrap()).unwrap();
            prop_assert!((p - q).norm() <= 1e-12 * p.norm().max(1e-3));
        }
    }

    #[test]
    fn fourier_small_cases() {
        let f1 = fourier_unitary(1).unwrap();
        assert!((f1[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);

        let f2 = fourier_unitary(2).unwrap();
        let s = FRAC_1_SQRT_2;
        let expect = ComplexMatrix::from_real_rows(&[vec![s, s], vec![s, -s]]).unwrap();
        assert!(f2.max_abs_diff(&expect) < 1e-15);

        let f3 = fourier_unitary(3).unwrap();
        let expect = C64::from_polar(1.0 / 3f64.sqrt(), 2.0 * PI / 3.0);
        assert!((f3[(1, 1)] - expect).norm() < 1e-15);

        assert!(matches!(fourier_unitary(0), Err(Error::Domain(_))));
    }

    #[test]
    fn fourier_is_unitary_up_to_24() {
        for n in 1..=24 {
            assert!(fourier_unitary(n).unwrap().unitarity_deviation() <= UNITARITY_TOL);
        }
    }

    #[test]
    fn haar_is_deterministic_and_unitary() {
        let a = haar_unitary(3, 42).unwrap();
        let b = haar_unitary(3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, haar_unitary(3, 43).unwrap());
        for n in [1, 2, 5, 10, 16] {
            assert!(haar_unitary(n, n as u64).unwrap().unitarity_deviation() <= UNITARITY_TOL);
        }
    }

    #[test]
    fn haar_first_moment() {
        // E|U_11|^2 = 1/n, Var = 2/(n(n+1)) - 1/n^2 for Haar unitaries.
        let n = 3;
        let samples = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mean = (0..samples)
            .map(|_| haar_unitary_with_rng(n, &mut rng).unwrap()[(0, 0)].norm_sqr())
            .sum::<f64>()
            / samples as f64;
        let nf = n as f64;
        let var = 2.0 / (nf * (nf + 1.0)) - 1.0 / (nf * nf);
        let sigma = (var / samples as f64).sqrt();
        assert!((mean - 1.0 / nf).abs() < 5.0 * sigma, "mean {mean}");
    }

    #[test]
    fn distillation_circuit_structure() {
        for n in 2..=8 {
            let u = compose_distillation_circuit(n).unwrap();
            assert_eq!(u.modes(), n + 1);
            assert!(u.unitarity_deviation() <= UNITARITY_TOL);
            let f = fourier_unitary(n).unwrap();
            // herald outputs 1..n-1 against Fourier inputs 1..n
            for out in 0..n - 1 {
                for inp in 0..n {
                    assert!((u[(inp, out)] - f[(out, inp)]).norm() < 1e-15);
                }
                assert_eq!(u[(n, out)], C64::new(0.0, 0.0));
            }
            // fresh photon only reaches the beamsplitter outputs
            assert!((u[(n, n - 1)] - C64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
            assert!((u[(n, n)] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        }
        assert!(compose_distillation_circuit(1).is_err());
    }

    #[test]
    fn direct_sum_and_select() {
        let a = ComplexMatrix::identity(2);
        let b = ComplexMatrix::from_real_rows(&[vec![2.0]]).unwrap();
        let s = a.direct_sum(&b);
        assert_eq!(s.rows(), 3);
        assert_eq!(s[(2, 2)], C64::new(2.0, 0.0));
        assert_eq!(s[(0, 2)], C64::new(0.0, 0.0));
        let r = s.select(&[2, 2], &[2, 0]).unwrap();
        assert_eq!(r[(1, 0)], C64::new(2.0, 0.0));
        assert!(s.select(&[3], &[0]).is_err());
    }
}
