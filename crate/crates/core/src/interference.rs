//! Outcome probabilities for partially distinguishable photons.
//!
//! Two models are used side by side. In the overlap model every pair of
//! photons has internal-state overlap `x = 1 - eps`; the outcome probability is
//! then a polynomial `q(x) = sum_j c_j x^j`, where `c_j` collects the
//! contributions of all row permutations with `j` non-fixed points. In the
//! bad-bit model every photon is independently replaced, with probability
//! `eps`, by a state orthogonal to everything else. Both give the same
//! probabilities; the second also tells which photon ended up where.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::OccupationVector;
use crate::linalg::{permanent, ComplexMatrix, C64, MAX_PERMANENT_SIZE};

/// Largest photon number accepted by [`coefficients_direct`].
pub const MAX_DIRECT_SIZE: usize = 8;

/// Largest photon number accepted by the bad-bit mixture routines, whose
/// tables grow as `4^N`.
pub const MAX_MIXTURE_SIZE: usize = 12;

/// Herald probabilities at or below this value make the conditional error
/// undefined.
pub const UNDEFINED_PROBABILITY: f64 = 1e-12;

/// Relative least-squares residual above which an interpolated fit is rejected.
pub const FIT_RESIDUAL_LIMIT: f64 = 1e-8;

const IMAG_TOL: f64 = 1e-12;

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const PHASE_CANDIDATES: usize = 8;

/// Interference coefficients `c_0..=c_N` of one outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    c: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Dimension("coefficient vector needs c_0".into()));
        }
        Ok(Self { c })
    }

    pub fn n_photons(&self) -> usize {
        self.c.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn get(&self, j: usize) -> f64 {
        self.c.get(j).copied().unwrap_or(0.0)
    }

    /// `sum_j c_j`, the probability for perfectly indistinguishable photons.
    pub fn sum(&self) -> f64 {
        self.c.iter().sum()
    }

    /// `sum_j j c_j`.
    pub fn weighted_sum(&self) -> f64 {
        self.c.iter().enumerate().map(|(j, c)| j as f64 * c).sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.c.iter().map(|c| c.abs()).sum()
    }

    /// `q(x)` by Horner's rule.
    pub fn eval(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Probability at error rate `eps`, i.e. `q(1 - eps)`.
    pub fn eval_eps(&self, eps: f64) -> f64 {
        self.eval(1.0 - eps)
    }

    /// `sum c_j - (sum j c_j) / N`: the probability of the outcome when one
    /// photon (averaged over which) is fully distinguishable.
    pub fn lambda(&self) -> f64 {
        let n = self.n_photons().max(1) as f64;
        self.sum() - self.weighted_sum() / n
    }

    /// `|sum j c_j - (N - 1) sum c_j|`.
    pub fn residual(&self) -> f64 {
        let n = self.n_photons() as f64;
        (self.weighted_sum() - (n - 1.0) * self.sum()).abs()
    }

    /// [`residual`](Self::residual) divided by `sum |c_j|` (0 for an all-zero vector).
    pub fn normalized_residual(&self) -> f64 {
        let scale = self.abs_sum();
        if scale == 0.0 {
            0.0
        } else {
            self.residual() / scale
        }
    }

    /// `(sum j c_j) / (sum c_j)`, if the sum is positive.
    pub fn ratio(&self) -> Option<f64> {
        let s = self.sum();
        (s > 0.0).then(|| self.weighted_sum() / s)
    }
}

fn require_single_photons(input: &OccupationVector) -> Result<()> {
    if input.counts().iter().any(|&c| c > 1) {
        return Err(Error::Unsupported(
            "only inputs with at most one photon per mode are supported".into(),
        ));
    }
    Ok(())
}

fn check_occupations(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<()> {
    if !u.is_square() {
        return Err(Error::Dimension(format!(
            "interferometer must be square, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    if input.modes() != u.rows() || output.modes() != u.cols() {
        return Err(Error::Dimension(format!(
            "occupations over {} and {} modes for a {}-mode interferometer",
            input.modes(),
            output.modes(),
            u.rows()
        )));
    }
    if input.total() != output.total() {
        return Err(Error::Domain(format!(
            "{} photons in, {} photons out",
            input.total(),
            output.total()
        )));
    }
    require_single_photons(input)
}

/// The `N x N` transfer matrix of an outcome: one row per input photon, one
/// column per output photon, so multiply occupied output modes repeat columns.
pub fn outcome_submatrix(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<ComplexMatrix> {
    check_occupations(u, input, output)?;
    u.select(&input.slots(), &output.slots())
}

fn multiplicity(input: &OccupationVector, output: &OccupationVector) -> f64 {
    input.multiplicity() * output.multiplicity()
}

/// Probability for perfectly indistinguishable photons, `|perm M|^2 / mu`.
pub fn indistinguishable_probability(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<f64> {
    let m = outcome_submatrix(u, input, output)?;
    Ok(permanent(&m)?.norm_sqr() / multiplicity(input, output))
}

/// Probability for fully distinguishable photons, `perm(|M|^2) / mu`.
pub fn distinguishable_probability(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<f64> {
    let m = outcome_submatrix(u, input, output)?;
    Ok(permanent(&m.abs_sq())?.re / multiplicity(input, output))
}

fn realify(sums: &[C64], scale: f64) -> Result<Vec<f64>> {
    let abs: f64 = sums.iter().map(|z| z.re.abs()).sum::<f64>() * scale;
    let worst = sums.iter().map(|z| z.im.abs()).fold(0.0, f64::max) * scale;
    if worst > IMAG_TOL * abs.max(1e-6) {
        return Err(Error::Numerical(format!(
            "interference coefficients keep an imaginary part of {worst:e}"
        )));
    }
    Ok(sums.iter().map(|z| z.re * scale).collect())
}

/// Exact coefficients from the permutation-class expansion
/// `c_j = (1/mu) sum_{sigma: j non-fixed points} perm(M o conj(M_sigma))`.
///
/// Each `perm(M o conj(M_sigma))` is expanded with Glynn's formula over the
/// output slots; for a fixed sign vector the sum over `sigma` runs over all
/// row permutations, built row by row with shared prefixes and binned by
/// the number of non-fixed points.
pub fn coefficients_direct(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<CoefficientVector> {
    let m = outcome_submatrix(u, input, output)?;
    let n = m.rows();
    if n > MAX_DIRECT_SIZE {
        return Err(Error::SizeLimit {
            what: "direct coefficient expansion (use coefficients_interpolated)",
            size: n,
            limit: MAX_DIRECT_SIZE,
        });
    }
    if n == 0 {
        return CoefficientVector::new(vec![1.0]);
    }
    let full = (1usize << n) - 1;
    let width = n + 1;
    let mut dp = vec![C64::new(0.0, 0.0); (1 << n) * width];
    let mut g = vec![C64::new(0.0, 0.0); n * n];
    let mut total = vec![C64::new(0.0, 0.0); width];
    let conj = m.conj();

    for signs in 0..(1usize << (n - 1)) {
        // slot 0 keeps sign +1; bit b flips slot b + 1
        let delta = |k: usize| {
            if k > 0 && signs >> (k - 1) & 1 == 1 {
                -1.0
            } else {
                1.0
            }
        };
        for i in 0..n {
            for l in 0..n {
                g[i * n + l] = (0..n).map(|k| m[(i, k)] * conj[(l, k)] * delta(k)).sum();
            }
        }
        dp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        dp[0] = C64::new(1.0, 0.0);
        for used in 0..full {
            let row = used.count_ones() as usize;
            let base = used * width;
            if dp[base..base + row + 1]
                .iter()
                .all(|z| z.re == 0.0 && z.im == 0.0)
            {
                continue;
            }
            for l in (0..n).filter(|&l| used >> l & 1 == 0) {
                let w = g[row * n + l];
                let moved = usize::from(l != row);
                let next = (used | 1 << l) * width;
                for j in 0..=row {
                    let v = dp[base + j] * w;
                    dp[next + j + moved] += v;
                }
            }
        }
        let sign = if signs.count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        for j in 0..width {
            total[j] += dp[full * width + j] * sign;
        }
    }
    let scale = 1.0 / (multiplicity(input, output) * (1u64 << (n - 1)) as f64);
    CoefficientVector::new(realify(&total, scale)?)
}

/// Outcome probability at uniform pairwise overlap `x`.
pub fn q_of_x(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
    x: f64,
) -> Result<f64> {
    Ok(q_of_x_batch(u, input, output, &[x])?[0])
}

/// [`q_of_x`] at several overlaps in one pass.
///
/// Uses the double Glynn expansion
/// `q = 4^{1-N}/mu * sum_{d,e} (prod d)(prod e) prod_k [x a_k(d) conj(a_k(e)) + (1-x) sum_a d_a e_a |M_ak|^2]`
/// with `a_k(d) = sum_a d_a M_ak`. Swapping `d` and `e` conjugates a term, so
/// only ordered pairs are visited; output slots in the same mode share a factor.
pub fn q_of_x_batch(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
    xs: &[f64],
) -> Result<Vec<f64>> {
    check_occupations(u, input, output)?;
    if let Some(&x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("overlap {x} outside [0, 1]")));
    }
    let rows = input.slots();
    let n = rows.len();
    if n == 0 {
        return Ok(vec![1.0; xs.len()]);
    }
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::SizeLimit {
            what: "photon number",
            size: n,
            limit: MAX_PERMANENT_SIZE,
        });
    }
    let modes: Vec<(usize, usize)> = output
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(m, &c)| (m, c))
        .collect();
    let width = modes.len();
    let half = 1usize << (n - 1);
    let sign_of = |mask: usize, a: usize| -> f64 {
        if a > 0 && mask >> (a - 1) & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    };

    let phases = balancing_phases(u, &rows, &modes);
    let mut alpha = vec![C64::new(0.0, 0.0); half * width];
    let mut dtab = vec![0.0; half * width];
    for mask in 0..half {
        for (k, &(mode, _)) in modes.iter().enumerate() {
            let mut a = C64::new(0.0, 0.0);
            let mut d = 0.0;
            for (r, &row) in rows.iter().enumerate() {
                let s = sign_of(mask, r);
                let z = u[(row, mode)] * phases[r];
                a += z * s;
                d += s * z.norm_sqr();
            }
            alpha[mask * width + k] = a;
            dtab[mask * width + k] = d;
        }
    }

    let mut acc = vec![0.0; xs.len()];
    let mut comp = vec![0.0; xs.len()];
    let mut p = vec![C64::new(0.0, 0.0); width];
    for da in 0..half {
        let ad = &alpha[da * width..(da + 1) * width];
        for eb in da..half {
            let s = da ^ eb;
            let ae = &alpha[eb * width..(eb + 1) * width];
            let dd = &dtab[s * width..(s + 1) * width];
            for k in 0..width {
                p[k] = ad[k] * ae[k].conj();
            }
            let mut weight = if s.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            if eb != da {
                weight *= 2.0;
            }
            for (t, &x) in xs.iter().enumerate() {
                let mut prod = C64::new(1.0, 0.0);
                for k in 0..width {
                    let f = p[k] * x + dd[k] * (1.0 - x);
                    for _ in 0..modes[k].1 {
                        prod *= f;
                    }
                }
                let (sum, err) = two_sum(acc[t], weight * prod.re);
                acc[t] = sum;
                comp[t] += err;
            }
        }
    }
    let scale = 1.0 / (multiplicity(input, output) * 4f64.powi(n as i32 - 1));
    Ok(acc
        .iter()
        .zip(&comp)
        .map(|(a, c)| (a + c) * scale)
        .collect())
}

/// Row phases for the Glynn sums. They cancel between `M` and `conj(M)`,
/// but they break up sign patterns that line up with the rows; among a few
/// quasi-random candidates the one with the smallest total Glynn magnitude
/// `sum_d prod_k |a_k(d)|^{n_k}` is kept, which bounds the cancellation.
fn balancing_phases(u: &ComplexMatrix, rows: &[usize], modes: &[(usize, usize)]) -> Vec<C64> {
    let n = rows.len();
    let half = 1usize << (n - 1);
    let candidate = |c: usize| -> Vec<C64> {
        (0..n)
            .map(|r| {
                let t = ((r * r + c * r) as f64 * GOLDEN).fract();
                C64::from_polar(1.0, std::f64::consts::TAU * t)
            })
            .collect()
    };
    let magnitude = |phases: &[C64]| -> f64 {
        (0..half)
            .map(|mask| {
                modes
                    .iter()
                    .map(|&(mode, count)| {
                        let a: C64 = rows
                            .iter()
                            .enumerate()
                            .map(|(r, &row)| {
                                let s = if r > 0 && mask >> (r - 1) & 1 == 1 {
                                    -1.0
                                } else {
                                    1.0
                                };
                                u[(row, mode)] * phases[r] * s
                            })
                            .sum();
                        a.norm().powi(count as i32)
                    })
                    .product::<f64>()
            })
            .sum()
    };
    (0..PHASE_CANDIDATES)
        .map(candidate)
        .map(|p| (magnitude(&p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
        .expect("at least one candidate")
}

/// Chebyshev points of the first kind mapped to `[0, 1]`.
pub fn chebyshev_nodes(count: usize) -> Vec<f64> {
    (0..count)
        .map(|t| {
            let theta = (2 * t + 1) as f64 * std::f64::consts::PI / (2 * count) as f64;
            0.5 * (1.0 + theta.cos())
        })
        .collect()
}

/// Monomial coefficients of the shifted Chebyshev polynomials
/// `T*_k(x) = T_k(2x - 1)`, `k = 0..=n`; row `k` holds `T*_k`.
fn shifted_chebyshev_table(n: usize) -> Vec<Vec<i128>> {
    let mut rows: Vec<Vec<i128>> = vec![vec![0; n + 1]; n + 1];
    rows[0][0] = 1;
    if n >= 1 {
        rows[1][0] = -1;
        rows[1][1] = 2;
    }
    for k in 1..n {
        for j in 0..=n {
            let shifted = if j > 0 { 4 * rows[k][j - 1] } else { 0 };
            rows[k + 1][j] = shifted - 2 * rows[k][j] - rows[k - 1][j];
        }
    }
    rows
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product evaluated as if in twice the working precision.
fn dot2(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut p = 0.0;
    let mut err = 0.0;
    for (a, b) in terms {
        let h = a * b;
        let r = a.mul_add(b, -h);
        let (sum, q) = two_sum(p, h);
        p = sum;
        err += q + r;
    }
    p + err
}

/// Coefficients fitted through `N + 1` evaluations of [`q_of_x_batch`] at
/// Chebyshev nodes.
///
/// The least-squares fit is carried out in the shifted Chebyshev basis with
/// the `x^1` coefficient constrained to zero, then converted to monomials
/// with exact integer basis coefficients and a compensated dot product; a
/// monomial Vandermonde solve loses several digits by `N = 10`.
pub fn coefficients_interpolated(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<CoefficientVector> {
    let n = input.total();
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::SizeLimit {
            what: "interpolated coefficient fit",
            size: n,
            limit: MAX_PERMANENT_SIZE,
        });
    }
    if n < 2 {
        let mut c = q_of_x_batch(u, input, output, &[0.0])?;
        c.resize(n + 1, 0.0);
        return CoefficientVector::new(c);
    }
    let nodes = chebyshev_nodes(n + 1);
    let values = q_of_x_batch(u, input, output, &nodes)?;
    let b = DVector::from_vec(values);
    let norm = b.norm();
    if norm == 0.0 {
        return CoefficientVector::new(vec![0.0; n + 1]);
    }

    let table = shifted_chebyshev_table(n);
    let basis = DMatrix::from_fn(nodes.len(), n + 1, |i, k| {
        let t = 2.0 * nodes[i] - 1.0;
        let (mut prev, mut cur) = (1.0, t);
        match k {
            0 => 1.0,
            _ => {
                for _ in 1..k {
                    (prev, cur) = (cur, 2.0 * t * cur - prev);
                }
                cur
            }
        }
    });
    // eliminate a_n through sum_k a_k [T*_k]_1 = 0
    let w: Vec<f64> = table.iter().map(|row| row[1] as f64).collect();
    let reduced = DMatrix::from_fn(nodes.len(), n, |i, k| {
        basis[(i, k)] - w[k] / w[n] * basis[(i, n)]
    });
    let qr = reduced.clone().qr();
    let rhs = qr.q().transpose() * &b;
    let sol = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("singular interpolation system".into()))?;
    let residual = (&reduced * &sol - &b).norm() / norm;
    if residual > FIT_RESIDUAL_LIMIT {
        return Err(Error::Conditioning { residual });
    }
    let mut a: Vec<f64> = sol.iter().copied().collect();
    a.push(-dot2(a.iter().zip(&w).map(|(&ak, &wk)| (ak, wk))) / w[n]);

    let c = (0..=n)
        .map(|j| {
            if j == 1 {
                return 0.0;
            }
            dot2(a.iter().zip(&table).flat_map(|(&ak, row)| {
                let hi = row[j] as f64;
                let lo = (row[j] - hi as i128) as f64;
                [(ak, hi), (ak, lo)]
            }))
        })
        .collect();
    CoefficientVector::new(c)
}

/// Permanents of every square submatrix `A[R, C]` (`|R| = |C|`), indexed by
/// `(R << n) + C` for row and column bitmasks `R`, `C`.
fn sub_permanents(a: &ComplexMatrix) -> Vec<C64> {
    let n = a.rows();
    let size = 1usize << n;
    let mut values = vec![C64::new(0.0, 0.0); size * size];
    values[0] = C64::new(1.0, 0.0);
    for r in 1..size {
        let top = usize::BITS as usize - 1 - r.leading_zeros() as usize;
        let rest = r & !(1 << top);
        let k = r.count_ones();
        for c in 1..size {
            if c.count_ones() != k {
                continue;
            }
            let mut sum = C64::new(0.0, 0.0);
            let mut bits = c;
            while bits != 0 {
                let col = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                sum += a[(top, col)] * values[rest * size + (c & !(1 << col))];
            }
            values[r * size + c] = sum;
        }
    }
    values
}

/// Permanent tables for the bad-bit model of one outcome.
struct MixtureTables {
    n: usize,
    /// `|perm M[R, C]|^2` for the interfering group.
    quantum: Vec<f64>,
    /// `perm |M[R, C]|^2` for the orthogonal photons.
    classical: Vec<f64>,
    mu: f64,
    m: ComplexMatrix,
}

impl MixtureTables {
    fn new(m: ComplexMatrix, mu: f64) -> Result<Self> {
        let n = m.rows();
        if n > MAX_MIXTURE_SIZE {
            return Err(Error::SizeLimit {
                what: "bad-bit mixture expansion",
                size: n,
                limit: MAX_MIXTURE_SIZE,
            });
        }
        let quantum = sub_permanents(&m).iter().map(|z| z.norm_sqr()).collect();
        let classical = sub_permanents(&m.abs_sq()).iter().map(|z| z.re).collect();
        Ok(Self {
            n,
            quantum,
            classical,
            mu,
            m,
        })
    }

    fn full(&self) -> usize {
        (1 << self.n) - 1
    }

    /// `mu * P`, for photons `rows` split into orthogonal `bad` and
    /// interfering `rows \ bad`, landing in output slots `cols`.
    fn weighted(&self, rows: usize, bad: usize, cols: usize) -> f64 {
        let good = rows & !bad;
        let k = bad.count_ones();
        let mut sum = 0.0;
        let mut sub = cols;
        // all subsets of cols with |sub| = |bad|
        loop {
            if sub.count_ones() == k {
                sum += self.classical[(bad << self.n) + sub]
                    * self.quantum[(good << self.n) + (cols & !sub)];
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & cols;
        }
        sum
    }

    /// Probability of the outcome with orthogonal photons `bad`.
    fn probability(&self, bad: usize) -> f64 {
        self.weighted(self.full(), bad, self.full()) / self.mu
    }

    /// Joint probability of the outcome and orthogonal photon `j` sitting in
    /// output slot `slot`.
    fn routed(&self, bad: usize, j: usize, slot: usize, slot_count: usize) -> f64 {
        let rest_rows = self.full() & !(1 << j);
        let rest_cols = self.full() & !(1 << slot);
        let w = self.weighted(rest_rows, bad & !(1 << j), rest_cols);
        // mu(n - e_m) = mu(n) / n_m
        self.m[(j, slot)].norm_sqr() * w * slot_count as f64 / self.mu
    }
}

/// Outcome probability in the bad-bit model with a fixed set of orthogonal photons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureOutcome {
    pub probability: f64,
    /// For each orthogonal photon (1-based input index), the joint
    /// probability of the outcome and that photon occupying the last mode.
    pub bad_in_last: Vec<(usize, f64)>,
    /// Joint probability of the outcome and the last-mode photon coming from
    /// the interfering group. Only meaningful when the last mode holds one photon.
    pub good_in_last: f64,
}

/// Outcome probability when the inputs listed in `error_set` (1-based) are
/// mutually orthogonal bad bits and the other photons are identical. The
/// input is one photon in every mode of `u`.
pub fn mixture_outcome(
    u: &ComplexMatrix,
    error_set: &[usize],
    output: &OccupationVector,
) -> Result<MixtureOutcome> {
    let input = OccupationVector::single_photons(u.rows());
    let m = outcome_submatrix(u, &input, output)?;
    let n = m.rows();
    let mut bad = 0usize;
    for &k in error_set {
        if k == 0 || k > n {
            return Err(Error::Domain(format!("input {k} outside 1..={n}")));
        }
        bad |= 1 << (k - 1);
    }
    let tables = MixtureTables::new(m, output.multiplicity())?;
    let probability = tables.probability(bad);
    let last_count = output.last();
    let mut bad_in_last = Vec::new();
    if last_count > 0 {
        let slot = n - 1;
        for j in (0..n).filter(|j| bad >> j & 1 == 1) {
            bad_in_last.push((j + 1, tables.routed(bad, j, slot, last_count)));
        }
    }
    let good_in_last = if last_count == 0 {
        0.0
    } else {
        probability - bad_in_last.iter().map(|(_, p)| p).sum::<f64>()
    };
    Ok(MixtureOutcome {
        probability,
        bad_in_last,
        good_in_last,
    })
}

/// Bad-bit aggregates of one outcome with a single photon in the last mode:
/// `f[k] = sum_{|E|=k} P_E` and `g[k] = sum_{|E|=k} sum_{j in E} P_E(j in last mode)`.
///
/// The error sets are visited in increasing bitmask order, so the sums are
/// reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillationProfile {
    n: usize,
    f: Vec<f64>,
    g: Vec<f64>,
}

/// Distilled error at one input error rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistilledError {
    /// Probability of the outcome.
    pub q: f64,
    /// Error of the photon in the last mode, `None` when the outcome has
    /// (numerically) zero probability.
    pub eps_prime: Option<f64>,
}

impl DistillationProfile {
    /// Profile of `output` for one photon in every mode of `u`. The last
    /// output mode must hold exactly one photon.
    pub fn new(u: &ComplexMatrix, output: &OccupationVector) -> Result<Self> {
        if output.last() != 1 {
            return Err(Error::Domain(format!(
                "outcome {output} must place exactly one photon in the last mode"
            )));
        }
        let input = OccupationVector::single_photons(u.rows());
        let m = outcome_submatrix(u, &input, output)?;
        let n = m.rows();
        let tables = MixtureTables::new(m, output.multiplicity())?;
        let mut f = vec![0.0; n + 1];
        let mut g = vec![0.0; n + 1];
        let slot = n - 1;
        for bad in 0..=tables.full() {
            let k = bad.count_ones() as usize;
            f[k] += tables.probability(bad);
            let mut bits = bad;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                g[k] += tables.routed(bad, j, slot, 1);
            }
        }
        Ok(Self { n, f, g })
    }

    pub fn n_photons(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    fn binomial_mix(v: &[f64], eps: f64) -> f64 {
        let n = v.len() - 1;
        v.iter()
            .enumerate()
            .map(|(k, &a)| a * eps.powi(k as i32) * (1.0 - eps).powi((n - k) as i32))
            .sum()
    }

    /// Outcome probability at error rate `eps`.
    pub fn q(&self, eps: f64) -> f64 {
        Self::binomial_mix(&self.f, eps)
    }

    /// Joint probability of the outcome and a bad photon in the last mode.
    pub fn bad(&self, eps: f64) -> f64 {
        Self::binomial_mix(&self.g, eps)
    }

    pub fn evaluate(&self, eps: f64) -> DistilledError {
        let q = self.q(eps);
        let eps_prime = (q > UNDEFINED_PROBABILITY).then(|| self.bad(eps) / q);
        DistilledError { q, eps_prime }
    }

    /// Probability with identical photons.
    pub fn q_i(&self) -> f64 {
        self.f[0]
    }

    /// Mean probability with exactly one photon made distinguishable.
    pub fn lambda(&self) -> f64 {
        self.f[1] / self.n as f64
    }

    /// Interference coefficients implied by the profile, from
    /// `q(x) = sum_k f_k (1-x)^k x^{N-k}`.
    pub fn coefficients(&self) -> CoefficientVector {
        let n = self.n;
        let mut c = vec![0.0; n + 1];
        for (k, &fk) in self.f.iter().enumerate() {
            // (1-x)^k x^{n-k} = sum_i C(k,i) (-1)^i x^{n-k+i}
            let mut binom = 1.0;
            for i in 0..=k {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                c[n - k + i] += fk * sign * binom;
                binom = binom * (k - i) as f64 / (i + 1) as f64;
            }
        }
        c[1] = 0.0;
        CoefficientVector { c }
    }
}

/// Builds the full outcome from a herald over the first `N - 1` modes.
pub fn herald_outcome(n_modes: usize, herald: &OccupationVector) -> Result<OccupationVector> {
    if n_modes < 2 || herald.modes() != n_modes - 1 || herald.total() != n_modes - 1 {
        return Err(Error::Domain(format!(
            "herald {herald} must place {} photons in modes 1..={}",
            n_modes.saturating_sub(1),
            n_modes.saturating_sub(1)
        )));
    }
    let mut counts = herald.counts().to_vec();
    counts.push(1);
    Ok(OccupationVector::new(counts))
}

/// Error of the photon left in the last mode after observing `herald`
/// (over modes `1..N-1`), with every input photon independently bad with
/// probability `eps`.
pub fn distilled_error(
    u: &ComplexMatrix,
    eps: f64,
    herald: &OccupationVector,
) -> Result<DistilledError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("error rate {eps} outside [0, 1]")));
    }
    let output = herald_outcome(u.rows(), herald)?;
    let profile = DistillationProfile::new(u, &output)?;
    let d = profile.evaluate(eps);
    if d.eps_prime.is_none() {
        return Err(Error::UndefinedConditional { probability: d.q });
    }
    Ok(d)
}

/// Probabilities of an outcome with exactly one photon made distinguishable:
/// entry `k` is the value when input `k` (0-based) is the odd one out.
pub fn single_error_probabilities(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<Vec<f64>> {
    let m = outcome_submatrix(u, input, output)?;
    let n = m.rows();
    let mu = multiplicity(input, output);
    let minors = permanent_minors(&m)?;
    Ok((0..n)
        .map(|k| {
            (0..n)
                .map(|c| m[(k, c)].norm_sqr() * minors[k * n + c].norm_sqr())
                .sum::<f64>()
                / mu
        })
        .collect())
}

/// `perm` of `m` with row `r` and column `c` removed, for every `(r, c)`,
/// by a single Ryser sweep over column subsets.
fn permanent_minors(m: &ComplexMatrix) -> Result<Vec<C64>> {
    let n = m.rows();
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::SizeLimit {
            what: "permanent",
            size: n,
            limit: MAX_PERMANENT_SIZE,
        });
    }
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    if n == 0 {
        return Ok(out);
    }
    if n == 1 {
        out[0] = C64::new(1.0, 0.0);
        return Ok(out);
    }
    let mut sums = vec![C64::new(0.0, 0.0); n];
    let mut prefix = vec![C64::new(0.0, 0.0); n + 1];
    let mut suffix = vec![C64::new(0.0, 0.0); n + 1];
    let mut gray = 0usize;
    for step in 1..(1usize << n) {
        let col = step.trailing_zeros() as usize;
        gray ^= 1 << col;
        let add = gray >> col & 1 == 1;
        for (i, s) in sums.iter_mut().enumerate() {
            if add {
                *s += m[(i, col)];
            } else {
                *s -= m[(i, col)];
            }
        }
        prefix[0] = C64::new(1.0, 0.0);
        for i in 0..n {
            prefix[i + 1] = prefix[i] * sums[i];
        }
        suffix[n] = C64::new(1.0, 0.0);
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * sums[i];
        }
        // Ryser on the (n-1)-row minor: sign (-1)^{n-1-|S|}, S avoiding column c
        let size = gray.count_ones() as usize;
        if size == n {
            continue;
        }
        let sign = if (n - 1 - size).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        for r in 0..n {
            let without = prefix[r] * suffix[r + 1] * sign;
            for c in (0..n).filter(|c| gray >> c & 1 == 0) {
                out[r * n + c] += without;
            }
        }
    }
    Ok(out)
}

/// Probability with identical photons together with the mean probability
/// when exactly one photon is distinguishable.
pub fn first_order(
    u: &ComplexMatrix,
    input: &OccupationVector,
    output: &OccupationVector,
) -> Result<(f64, f64)> {
    let q_i = indistinguishable_probability(u, input, output)?;
    let singles = single_error_probabilities(u, input, output)?;
    let lambda = singles.iter().sum::<f64>() / singles.len().max(1) as f64;
    Ok((q_i, lambda))
}
