//! Photon configurations: occupation vectors, mode-assignment lists,
//! enumeration, the Fourier zero-transmission law and symmetry classes.
//!
//! Mode indices are 1-based in every public encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Photon counts per mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupationVector {
    counts: Vec<usize>,
}

impl OccupationVector {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    /// One photon in each of `modes` modes.
    pub fn single_photons(modes: usize) -> Self {
        Self::new(vec![1; modes])
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn modes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `Π n_i!`, the bosonic multiplicity of the configuration.
    pub fn multiplicity(&self) -> f64 {
        self.counts
            .iter()
            .map(|&c| (1..=c).map(|k| k as f64).product::<f64>())
            .product()
    }

    /// Photons in the last mode (0 for a zero-mode vector).
    pub fn last(&self) -> usize {
        self.counts.last().copied().unwrap_or(0)
    }

    pub fn to_assignment(&self) -> ModeAssignment {
        let modes = self
            .counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i + 1, c))
            .collect();
        ModeAssignment { modes }
    }

    /// Zero-based output slot per photon, in mode order.
    pub(crate) fn slots(&self) -> Vec<usize> {
        self.to_assignment().modes.iter().map(|m| m - 1).collect()
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.counts.iter().map(usize::to_string).collect();
        write!(f, "|{}>", body.join(","))
    }
}

/// Sorted list of the (1-based) output mode of every photon.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeAssignment {
    modes: Vec<usize>,
}

impl ModeAssignment {
    pub fn new(modes: Vec<usize>) -> Result<Self> {
        if modes.contains(&0) {
            return Err(Error::Domain("mode indices are 1-based".into()));
        }
        if modes.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain(format!(
                "mode assignment {modes:?} is not nondecreasing"
            )));
        }
        Ok(Self { modes })
    }

    /// Sorts arbitrary 1-based mode labels into an assignment list.
    pub fn from_unsorted(mut modes: Vec<usize>) -> Result<Self> {
        modes.sort_unstable();
        Self::new(modes)
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn to_occupation(&self, n_modes: usize) -> Result<OccupationVector> {
        let mut counts = vec![0; n_modes];
        for &m in &self.modes {
            if m > n_modes {
                return Err(Error::Domain(format!("mode {m} outside 1..={n_modes}")));
            }
            counts[m - 1] += 1;
        }
        Ok(OccupationVector { counts })
    }

    /// `1;2;3` style label used in tables.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.modes.iter().map(usize::to_string).collect();
        parts.join(";")
    }
}

impl fmt::Display for ModeAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.modes.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All placements of `n_photons` photons in `n_modes` modes, in lexicographic
/// order of their mode-assignment lists. With `fixed_last = Some(k)` only
/// configurations with exactly `k` photons in the last mode are returned.
pub fn enumerate_outcomes(
    n_modes: usize,
    n_photons: usize,
    fixed_last: Option<usize>,
) -> Vec<OccupationVector> {
    match fixed_last {
        None => assignments(n_modes, n_photons)
            .into_iter()
            .map(|a| counts_from_slots(&a, n_modes))
            .collect(),
        Some(k) => {
            if n_modes == 0 || k > n_photons {
                return Vec::new();
            }
            assignments(n_modes - 1, n_photons - k)
                .into_iter()
                .map(|a| {
                    let mut occ = counts_from_slots(&a, n_modes);
                    occ.counts[n_modes - 1] = k;
                    occ
                })
                .collect()
        }
    }
}

/// Nondecreasing 0-based slot lists of length `k` over `m` modes, lexicographic.
fn assignments(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    loop {
        out.push(cur.clone());
        // advance to the next nondecreasing sequence
        let Some(pos) = (0..k).rev().find(|&i| cur[i] + 1 < m) else {
            break;
        };
        let v = cur[pos] + 1;
        cur[pos..].iter_mut().for_each(|c| *c = v);
    }
    out
}

fn counts_from_slots(slots: &[usize], n_modes: usize) -> OccupationVector {
    let mut counts = vec![0; n_modes];
    for &s in slots {
        counts[s] += 1;
    }
    OccupationVector { counts }
}

/// Zero-transmission-law class of an output of the Fourier interferometer fed
/// with one photon per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZtlClass {
    Allowed,
    Forbidden,
}

impl ZtlClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ZtlClass::Allowed => "allowed",
            ZtlClass::Forbidden => "forbidden",
        }
    }
}

/// Forbidden iff the mode-assignment sum is nonzero modulo the number of
/// modes. Allowed is necessary, not sufficient, for a nonzero probability.
pub fn classify_ztl(occ: &OccupationVector) -> ZtlClass {
    let n = occ.modes();
    if n == 0 {
        return ZtlClass::Allowed;
    }
    let sum: usize = occ.to_assignment().modes().iter().sum();
    if sum.is_multiple_of(n) {
        ZtlClass::Allowed
    } else {
        ZtlClass::Forbidden
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// All relabelings of the output modes that leave every outcome probability
/// of the single-photon-per-mode Fourier interferometer unchanged: on
/// zero-based labels, `k -> a*k + s (mod N)` for every unit `a` and shift `s`.
/// Shifts come from the row phases of the Fourier matrix, `a = -1` from
/// complex conjugation, the other units from permuting the (identical) inputs.
fn affine_maps(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..n.max(2))
        .filter(move |&a| n == 1 || gcd(a, n) == 1)
        .flat_map(move |a| (0..n.max(1)).map(move |s| (a % n.max(1), s)))
}

/// Every outcome in the symmetry orbit of `occ`, sorted and deduplicated.
pub fn symmetry_orbit(occ: &OccupationVector) -> Vec<OccupationVector> {
    let n = occ.modes();
    if n == 0 {
        return vec![occ.clone()];
    }
    let slots = occ.slots();
    let mut orbit: Vec<OccupationVector> = affine_maps(n)
        .map(|(a, s)| {
            let mapped: Vec<usize> = slots.iter().map(|&k| (a * k + s) % n).collect();
            counts_from_slots(&mapped, n)
        })
        .collect();
    orbit.sort_by_key(|x| x.to_assignment());
    orbit.dedup();
    orbit
}

/// Canonical representative of the symmetry orbit: the member with the
/// lexicographically least mode-assignment list.
pub fn symmetry_class(occ: &OccupationVector) -> OccupationVector {
    symmetry_orbit(occ)
        .into_iter()
        .next()
        .expect("orbit contains the outcome itself")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    fn occ(counts: &[usize]) -> OccupationVector {
        OccupationVector::new(counts.to_vec())
    }

    fn from_assignment(modes: &[usize], n: usize) -> OccupationVector {
        ModeAssignment::new(modes.to_vec())
            .unwrap()
            .to_occupation(n)
            .unwrap()
    }

    #[test]
    fn assignment_encoding() {
        assert_eq!(
            occ(&[1, 1, 1, 1, 1]).to_assignment().modes(),
            &[1, 2, 3, 4, 5]
        );
        assert_eq!(occ(&[3, 0]).to_assignment().modes(), &[1, 1, 1]);
        assert_eq!(occ(&[3, 0]).multiplicity(), 6.0);
        assert_eq!(occ(&[0, 2, 2]).multiplicity(), 4.0);
        assert!(ModeAssignment::new(vec![2, 1]).is_err());
        assert!(ModeAssignment::new(vec![0, 1]).is_err());
        assert!(ModeAssignment::new(vec![1, 4])
            .unwrap()
            .to_occupation(3)
            .is_err());
        assert_eq!(ModeAssignment::new(vec![1, 2, 2]).unwrap().label(), "1;2;2");
    }

    proptest! {
        #[test]
        fn assignment_round_trip(counts in proptest::collection::vec(0usize..4, 0..8)) {
            let o = OccupationVector::new(counts.clone());
            let back = o.to_assignment().to_occupation(counts.len()).unwrap();
            prop_assert_eq!(back, o);
        }

        #[test]
        fn symmetry_class_is_idempotent_and_orbit_invariant(
            modes in proptest::collection::vec(1usize..=6, 6)
        ) {
            let a = ModeAssignment::from_unsorted(modes).unwrap();
            let o = a.to_occupation(6).unwrap();
            let c = symmetry_class(&o);
            prop_assert_eq!(symmetry_class(&c), c.clone());
            for member in symmetry_orbit(&o) {
                prop_assert_eq!(symmetry_class(&member), c.clone());
            }
        }
    }

    #[test]
    fn outcome_counts() {
        assert_eq!(enumerate_outcomes(5, 5, None).len(), 126);
        assert_eq!(enumerate_outcomes(5, 5, Some(1)).len(), 35);
        assert_eq!(enumerate_outcomes(1, 4, None).len(), 1);
        assert_eq!(enumerate_outcomes(3, 0, None), vec![occ(&[0, 0, 0])]);
        assert!(enumerate_outcomes(3, 2, Some(3)).is_empty());
        for n in 1..=9u64 {
            let all = enumerate_outcomes(n as usize, n as usize, None);
            assert_eq!(all.len() as u64, binom(2 * n - 1, n));
            assert!(all.iter().all(|o| o.total() == n as usize));
            let last = enumerate_outcomes(n as usize, n as usize, Some(1));
            if n >= 2 {
                assert_eq!(last.len() as u64, binom(2 * n - 3, n - 1));
            }
            assert!(last.iter().all(|o| o.last() == 1));
        }
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let all = enumerate_outcomes(4, 3, None);
        let lists: Vec<_> = all.iter().map(OccupationVector::to_assignment).collect();
        assert!(lists.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(lists[0].modes(), &[1, 1, 1]);
        assert_eq!(lists.last().unwrap().modes(), &[4, 4, 4]);
    }

    #[test]
    fn zero_transmission_classification() {
        assert_eq!(
            classify_ztl(&from_assignment(&[1, 2, 3, 4, 5], 5)),
            ZtlClass::Allowed
        );
        assert_eq!(
            classify_ztl(&from_assignment(&[1, 1, 1, 1, 2], 5)),
            ZtlClass::Forbidden
        );
        let allowed = enumerate_outcomes(5, 5, Some(1))
            .iter()
            .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
            .count();
        assert_eq!(allowed, 7);
    }

    /// Number of size-`n` multisets of Z_n with sum 0, by dynamic programming
    /// over (photons placed, sum mod n) independent of the enumerator.
    fn allowed_count_dp(n: usize, fixed_last_one: bool) -> u64 {
        let modes: Vec<usize> = if fixed_last_one {
            (1..n).collect()
        } else {
            (1..=n).collect()
        };
        let size = if fixed_last_one { n - 1 } else { n };
        let mut dp = vec![vec![0u64; n]; size + 1];
        dp[0][0] = 1;
        for &m in &modes {
            let mut next = vec![vec![0u64; n]; size + 1];
            for k in 0..=size {
                for s in 0..n {
                    if dp[k][s] == 0 {
                        continue;
                    }
                    for c in 0..=(size - k) {
                        next[k + c][(s + c * m) % n] += dp[k][s];
                    }
                }
            }
            dp = next;
        }
        // a photon fixed in mode n adds n, so the remaining sum must also vanish mod n
        dp[size][0]
    }

    #[test]
    fn allowed_counts_match_independent_count() {
        for n in 2..=9 {
            let all = enumerate_outcomes(n, n, None);
            let allowed = all
                .iter()
                .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
                .count();
            assert_eq!(allowed as u64, allowed_count_dp(n, false), "n={n}");
            let last = enumerate_outcomes(n, n, Some(1));
            let allowed = last
                .iter()
                .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
                .count();
            assert_eq!(allowed as u64, allowed_count_dp(n, true), "n={n}");
        }
    }

    #[test]
    fn one_photon_allowed_counts() {
        let expect = [1, 2, 7, 20, 66, 212, 715, 2424];
        for (n, &e) in (3..=10).zip(&expect) {
            let count = enumerate_outcomes(n, n, Some(1))
                .iter()
                .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
                .count();
            assert_eq!(count, e, "n={n}");
        }
    }

    #[test]
    fn symmetry_examples() {
        let all_single = from_assignment(&[1, 2, 3, 4, 5], 5);
        assert_eq!(symmetry_class(&all_single), all_single);
        assert_eq!(symmetry_orbit(&all_single).len(), 1);
        let a = from_assignment(&[1, 1, 2, 3, 4], 5);
        let b = from_assignment(&[2, 2, 3, 4, 5], 5);
        assert_eq!(symmetry_class(&a), symmetry_class(&b));
        // shift and conjugation are part of the group
        let c = ModeAssignment::from_unsorted(vec![1, 1, 5, 4, 3])
            .unwrap()
            .to_occupation(5)
            .unwrap();
        assert_eq!(symmetry_class(&a), symmetry_class(&c));
    }

    #[test]
    fn symmetry_preserves_ztl_class() {
        for o in enumerate_outcomes(6, 6, None) {
            let class = classify_ztl(&o);
            for m in symmetry_orbit(&o) {
                assert_eq!(classify_ztl(&m), class);
            }
        }
    }
}
