//! Herald scans for the Fourier distillation scheme: distilled-error curves,
//! herald families, the interference-sum conjecture table, the two-photon
//! visibility cross-check and error thresholds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    classify_ztl, enumerate_outcomes, symmetry_class, ModeAssignment, OccupationVector, ZtlClass,
};
use crate::interference::{
    coefficients_direct, coefficients_interpolated, herald_outcome, indistinguishable_probability,
    q_of_x, CoefficientVector, DistillationProfile, MAX_DIRECT_SIZE, MAX_MIXTURE_SIZE,
    UNDEFINED_PROBABILITY,
};
use crate::linalg::{compose_distillation_circuit, fourier_unitary};

/// Smallest scheme handled by the scans.
pub const MIN_SCHEME_SIZE: usize = 3;

/// Largest scheme for the conjecture table.
pub const MAX_CONJECTURE_SIZE: usize = 10;

/// Absolute accuracy of threshold bisection.
pub const THRESHOLD_TOL: f64 = 1e-12;

const THRESHOLD_GRID: usize = 2000;

/// One sample of a distilled-error curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eps: f64,
    pub q: f64,
    pub eps_prime: Option<f64>,
}

/// Upper end of the error range where distillation helps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    /// `eps' < eps` on `(0, t)` and not just above `t`.
    At(f64),
    /// No crossing inside `(0, 1)`.
    Open,
}

impl Threshold {
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::At(t) => Some(t),
            Threshold::Open => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldReport {
    pub n: usize,
    /// Herald photons over modes `1..n-1`.
    pub herald: ModeAssignment,
    /// First herald (in scan order) of the same symmetry family.
    pub family_rep: ModeAssignment,
    pub ztl_class: ZtlClass,
    /// Allowed, yet with vanishing probability for identical photons.
    pub suppressed: bool,
    pub q_i: f64,
    pub lambda: f64,
    pub coefficients: CoefficientVector,
    pub curve: Vec<CurvePoint>,
    /// Only set for valid heralds.
    pub threshold_eps: Option<Threshold>,
}

impl HeraldReport {
    pub fn is_valid(&self) -> bool {
        self.ztl_class == ZtlClass::Allowed && !self.suppressed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjectureRow {
    pub n: usize,
    pub n_allowed: usize,
    pub delta_max: f64,
    pub n_herald: usize,
    pub pct: f64,
}

/// 60 log-spaced points on `[1e-5, 0.5]` followed by linear points up to 0.9.
pub fn default_eps_grid() -> Vec<f64> {
    let (lo, hi) = (1e-5f64.ln(), 0.5f64.ln());
    let mut grid: Vec<f64> = (0..60)
        .map(|k| (lo + (hi - lo) * k as f64 / 59.0).exp())
        .collect();
    grid.extend((1..=8).map(|k| 0.5 + 0.05 * k as f64));
    grid
}

fn check_scheme_size(n: usize, limit: usize) -> Result<()> {
    if n < MIN_SCHEME_SIZE {
        return Err(Error::Domain(format!(
            "scheme size {n} is below {MIN_SCHEME_SIZE}"
        )));
    }
    if n > limit {
        return Err(Error::SizeLimit {
            what: "scheme",
            size: n,
            limit,
        });
    }
    Ok(())
}

fn herald_of(output: &OccupationVector) -> OccupationVector {
    let counts = output.counts();
    OccupationVector::new(counts[..counts.len() - 1].to_vec())
}

/// Every outcome of the `n`-mode scheme with one photon in mode `n`, with a
/// map from each outcome to its family representative herald.
fn heralds_with_families(n: usize) -> Vec<(OccupationVector, ModeAssignment)> {
    let outcomes = enumerate_outcomes(n, n, Some(1));
    let mut first: BTreeMap<OccupationVector, ModeAssignment> = BTreeMap::new();
    outcomes
        .into_iter()
        .map(|o| {
            let rep = first
                .entry(symmetry_class(&o))
                .or_insert_with(|| herald_of(&o).to_assignment())
                .clone();
            (o, rep)
        })
        .collect()
}

/// Scans every herald of the `n`-photon Fourier scheme over `eps_grid`.
/// Reports come in lexicographic order of the heralds.
pub fn scan_heralds(n: usize, eps_grid: &[f64]) -> Result<Vec<HeraldReport>> {
    check_scheme_size(n, MAX_MIXTURE_SIZE)?;
    if let Some(e) = eps_grid.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(Error::Domain(format!("error rate {e} outside [0, 1)")));
    }
    let u = fourier_unitary(n)?;
    let items = heralds_with_families(n);
    items
        .into_par_iter()
        .map(|(output, family_rep)| {
            let profile = DistillationProfile::new(&u, &output)?;
            let ztl_class = classify_ztl(&output);
            let q_i = profile.q_i();
            let suppressed = ztl_class == ZtlClass::Allowed && q_i <= UNDEFINED_PROBABILITY;
            let curve = eps_grid
                .iter()
                .map(|&eps| {
                    let d = profile.evaluate(eps);
                    CurvePoint {
                        eps,
                        q: d.q,
                        eps_prime: d.eps_prime,
                    }
                })
                .collect();
            let valid = ztl_class == ZtlClass::Allowed && !suppressed;
            Ok(HeraldReport {
                n,
                herald: herald_of(&output).to_assignment(),
                family_rep,
                ztl_class,
                suppressed,
                q_i,
                lambda: profile.lambda(),
                coefficients: profile.coefficients(),
                curve,
                threshold_eps: valid.then(|| profile_threshold(&profile)),
            })
        })
        .collect()
}

/// Total probability of a valid herald with identical photons.
pub fn total_herald_probability(n: usize) -> Result<f64> {
    check_scheme_size(n, MAX_CONJECTURE_SIZE)?;
    let u = fourier_unitary(n)?;
    let input = OccupationVector::single_photons(n);
    let probs = enumerate_outcomes(n, n, Some(1))
        .into_par_iter()
        .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
        .map(|o| indistinguishable_probability(&u, &input, &o))
        .collect::<Result<Vec<f64>>>()?;
    Ok(probs
        .into_iter()
        .filter(|&q| q > UNDEFINED_PROBABILITY)
        .sum())
}

/// Largest normalized interference-sum residual and herald counts over the
/// allowed outcomes with one photon in mode `n`.
pub fn check_conjecture(n: usize) -> Result<ConjectureRow> {
    check_scheme_size(n, MAX_CONJECTURE_SIZE)?;
    let u = fourier_unitary(n)?;
    let input = OccupationVector::single_photons(n);
    let allowed: Vec<OccupationVector> = enumerate_outcomes(n, n, Some(1))
        .into_iter()
        .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
        .collect();
    let rows = allowed
        .par_iter()
        .map(|o| {
            let c = if n <= MAX_DIRECT_SIZE {
                coefficients_direct(&u, &input, o)?
            } else {
                coefficients_interpolated(&u, &input, o)?
            };
            let q_i = indistinguishable_probability(&u, &input, o)?;
            Ok((c.normalized_residual(), q_i > UNDEFINED_PROBABILITY))
        })
        .collect::<Result<Vec<(f64, bool)>>>()?;
    let delta_max = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let n_herald = rows.iter().filter(|r| r.1).count();
    let n_allowed = allowed.len();
    Ok(ConjectureRow {
        n,
        n_allowed,
        delta_max,
        n_herald,
        pct: 100.0 * n_herald as f64 / n_allowed as f64,
    })
}

fn check_error_rate(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Domain(format!("error rate {eps} outside [0, 1)")));
    }
    Ok(())
}

fn herald_occupation(n: usize, herald: &ModeAssignment) -> Result<OccupationVector> {
    let occ = herald.to_occupation(n - 1)?;
    herald_outcome(n, &occ)?;
    Ok(occ)
}

/// Distilled error read off a two-photon interference dip: the distilled
/// photon meets a fresh photon of error `eps` on a balanced beamsplitter,
/// and `eps' = 1 - V'/(1 - eps)` with `V' = 1 - 2 P(coincidence | herald)`.
pub fn hom_visibility_check(n: usize, eps: f64, herald: &ModeAssignment) -> Result<f64> {
    check_scheme_size(n, MAX_CONJECTURE_SIZE)?;
    check_error_rate(eps)?;
    let herald = herald_occupation(n, herald)?;
    let u = compose_distillation_circuit(n)?;
    let input = OccupationVector::single_photons(n + 1);
    let mut probs = [0.0; 3];
    for (a, p) in probs.iter_mut().enumerate() {
        let mut counts = herald.counts().to_vec();
        counts.extend([2 - a, a]);
        *p = q_of_x(&u, &input, &OccupationVector::new(counts), 1.0 - eps)?;
    }
    let heralded: f64 = probs.iter().sum();
    if heralded <= UNDEFINED_PROBABILITY {
        return Err(Error::UndefinedConditional {
            probability: heralded,
        });
    }
    let visibility = 1.0 - 2.0 * probs[1] / heralded;
    Ok(1.0 - visibility / (1.0 - eps))
}

fn profile_threshold(profile: &DistillationProfile) -> Threshold {
    let helps = |eps: f64| matches!(profile.evaluate(eps).eps_prime, Some(e) if e < eps);
    let mut lo = 0.0;
    for k in 1..THRESHOLD_GRID {
        let eps = k as f64 / THRESHOLD_GRID as f64;
        if !helps(eps) {
            let mut hi = eps;
            while hi - lo > THRESHOLD_TOL {
                let mid = 0.5 * (lo + hi);
                if helps(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Threshold::At(lo);
        }
        lo = eps;
    }
    Threshold::Open
}

/// First crossing of `eps' = eps` for a valid herald.
pub fn threshold_scan(n: usize, herald: &ModeAssignment) -> Result<Threshold> {
    check_scheme_size(n, MAX_MIXTURE_SIZE)?;
    let herald = herald_occupation(n, herald)?;
    let output = herald_outcome(n, &herald)?;
    if classify_ztl(&output) != ZtlClass::Allowed {
        return Err(Error::Domain(format!("herald {herald} is forbidden")));
    }
    let u = fourier_unitary(n)?;
    let profile = DistillationProfile::new(&u, &output)?;
    if profile.q_i() <= UNDEFINED_PROBABILITY {
        return Err(Error::UndefinedConditional {
            probability: profile.q_i(),
        });
    }
    Ok(profile_threshold(&profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::distilled_error;
    use crate::linalg::fourier_unitary;

    fn assignment(modes: &[usize]) -> ModeAssignment {
        ModeAssignment::new(modes.to_vec()).unwrap()
    }

    fn families(reports: &[HeraldReport]) -> Vec<ModeAssignment> {
        let mut reps: Vec<_> = reports
            .iter()
            .filter(|r| r.is_valid())
            .map(|r| r.family_rep.clone())
            .collect();
        reps.sort();
        reps.dedup();
        reps
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_eps_grid();
        assert_eq!(grid.len(), 68);
        assert!((grid[0] - 1e-5).abs() < 1e-18);
        assert!((grid[59] - 0.5).abs() < 1e-12);
        assert!((grid[67] - 0.9).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn five_photon_scan() {
        let reports = scan_heralds(5, &default_eps_grid()).unwrap();
        assert_eq!(reports.len(), 35);
        let valid: Vec<_> = reports.iter().filter(|r| r.is_valid()).collect();
        assert_eq!(valid.len(), 7);
        assert_eq!(
            families(&reports),
            vec![
                assignment(&[1, 1, 1, 2]),
                assignment(&[1, 1, 4, 4]),
                assignment(&[1, 2, 3, 4])
            ]
        );
        let total: f64 = valid.iter().map(|r| r.q_i).sum();
        assert!((total - 33.0 / 125.0).abs() < 1e-10);
        for r in &reports {
            if r.ztl_class == ZtlClass::Forbidden {
                assert!(r.q_i <= 1e-12);
                assert!(r.threshold_eps.is_none());
            }
        }
    }

    #[test]
    fn six_photon_suppression() {
        let reports = scan_heralds(6, &[1e-5]).unwrap();
        let allowed = reports
            .iter()
            .filter(|r| r.ztl_class == ZtlClass::Allowed)
            .count();
        let suppressed = reports.iter().filter(|r| r.suppressed).count();
        assert_eq!((allowed, suppressed), (20, 6));
    }

    #[test]
    fn valid_heralds_distill_at_rate_one_over_n() {
        for n in 3..=6 {
            let grid = [1e-5, 1e-3, 0.1];
            for r in scan_heralds(n, &grid)
                .unwrap()
                .iter()
                .filter(|r| r.is_valid())
            {
                let p = r.curve[0];
                let ratio = p.eps_prime.unwrap() / p.eps;
                let expect = 1.0 / n as f64;
                assert!(
                    (ratio - expect).abs() <= 1e-3 * expect,
                    "n={n} {}",
                    r.herald
                );
                assert!((r.lambda - r.q_i / n as f64).abs() < 1e-10);
                assert!((r.curve[0].q - r.coefficients.eval_eps(p.eps)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn families_share_curves() {
        for n in [5, 6] {
            let grid = default_eps_grid();
            let reports = scan_heralds(n, &grid).unwrap();
            for r in &reports {
                let rep = reports.iter().find(|x| x.herald == r.family_rep).unwrap();
                for (a, b) in r.curve.iter().zip(&rep.curve) {
                    assert!((a.q - b.q).abs() < 1e-12);
                    // the maps may move the distilled mode, so only q is
                    // shared by forbidden outcomes
                    if !r.is_valid() {
                        continue;
                    }
                    match (a.eps_prime, b.eps_prime) {
                        (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12, "{}", r.herald),
                        (None, None) => {}
                        _ => panic!("definedness differs within family of {}", r.herald),
                    }
                }
            }
        }
    }

    #[test]
    fn conjecture_table_small() {
        let expect = [
            (3, 1, 1),
            (4, 2, 2),
            (5, 7, 7),
            (6, 20, 14),
            (7, 66, 66),
            (8, 212, 212),
        ];
        for (n, allowed, herald) in expect {
            let row = check_conjecture(n).unwrap();
            assert_eq!((row.n_allowed, row.n_herald), (allowed, herald), "n={n}");
            assert!(row.delta_max < 1e-13, "n={n} {}", row.delta_max);
        }
        let row = check_conjecture(6).unwrap();
        assert!((row.pct - 70.0).abs() < 1e-12);
        assert!(matches!(check_conjecture(2), Err(Error::Domain(_))));
        assert!(matches!(check_conjecture(11), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn visibility_path_matches_bayesian_error() {
        for n in 3..=5 {
            let u = fourier_unitary(n).unwrap();
            for r in scan_heralds(n, &[])
                .unwrap()
                .iter()
                .filter(|r| r.is_valid())
            {
                assert!(hom_visibility_check(n, 0.0, &r.herald).unwrap().abs() < 1e-12);
                let occ = r.herald.to_occupation(n - 1).unwrap();
                for eps in [0.01, 0.05, 0.2] {
                    let hom = hom_visibility_check(n, eps, &r.herald).unwrap();
                    let bayes = distilled_error(&u, eps, &occ).unwrap().eps_prime.unwrap();
                    assert!((hom - bayes).abs() < 1e-8, "n={n} {} eps={eps}", r.herald);
                }
            }
        }
        let eps = 1e-5;
        let e = hom_visibility_check(3, eps, &assignment(&[1, 2])).unwrap();
        assert!((e / eps - 1.0 / 3.0).abs() < 1e-3 / 3.0);
    }

    #[test]
    fn visibility_path_rejects_bad_heralds() {
        assert!(matches!(
            hom_visibility_check(5, 0.0, &assignment(&[1, 1, 1, 1])),
            Err(Error::UndefinedConditional { .. })
        ));
        assert!(hom_visibility_check(5, 0.1, &assignment(&[1, 2, 3])).is_err());
        assert!(hom_visibility_check(5, 1.0, &assignment(&[1, 2, 3, 4])).is_err());
        assert!(hom_visibility_check(5, 0.1, &assignment(&[1, 2, 3, 5])).is_err());
    }

    #[test]
    fn thresholds_bracket_the_crossing() {
        let u = fourier_unitary(5).unwrap();
        let reports = scan_heralds(5, &[1e-4]).unwrap();
        let mut values = Vec::new();
        for r in reports.iter().filter(|r| r.is_valid()) {
            assert!(r.curve[0].eps_prime.unwrap() < 1e-4);
            let t = threshold_scan(5, &r.herald).unwrap();
            assert_eq!(Some(t), r.threshold_eps);
            let t = t.value().unwrap();
            let occ = r.herald.to_occupation(4).unwrap();
            let at = |eps: f64| distilled_error(&u, eps, &occ).unwrap().eps_prime.unwrap();
            assert!(at(t - 1e-6) < t - 1e-6);
            assert!(at(t + 1e-6) >= t + 1e-6);
            values.push(t);
        }
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        assert_eq!(values.len(), 3);
    }

    #[test]
    fn threshold_rejects_invalid_heralds() {
        assert!(threshold_scan(5, &assignment(&[1, 1, 1, 1])).is_err());
        let suppressed = scan_heralds(6, &[])
            .unwrap()
            .into_iter()
            .find(|r| r.suppressed)
            .unwrap();
        assert!(matches!(
            threshold_scan(6, &suppressed.herald),
            Err(Error::UndefinedConditional { .. })
        ));
    }

    #[test]
    fn scan_validates_inputs() {
        assert!(scan_heralds(2, &[0.1]).is_err());
        assert!(scan_heralds(5, &[1.0]).is_err());
        assert!(scan_heralds(5, &[-0.1]).is_err());
    }

    #[test]
    fn scan_is_deterministic() {
        let grid = default_eps_grid();
        assert_eq!(
            scan_heralds(5, &grid).unwrap(),
            scan_heralds(5, &grid).unwrap()
        );
    }

    #[test]
    fn total_probability_small_cases() {
        assert!((total_herald_probability(3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((total_herald_probability(5).unwrap() - 33.0 / 125.0).abs() < 1e-12);
    }
}
