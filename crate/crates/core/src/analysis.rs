//! Closed-form herald probability, resource scaling, the error-correction
//! trade-off, the single-error validity regime, the loss model and the
//! Haar-random comparison.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{classify_ztl, enumerate_outcomes, OccupationVector, ZtlClass};
use crate::interference::{
    indistinguishable_probability, single_error_probabilities, DistillationProfile,
    UNDEFINED_PROBABILITY,
};
use crate::linalg::{fourier_unitary, haar_unitary_with_rng};

/// Photons needed for a factor-100 error reduction by concatenating the
/// three-photon scheme (a literature value, not computed here).
pub const CONCATENATED_THREE_PHOTON_COST: f64 = 59_000.0;

/// Largest scheme for which the exact distilled error of the loss model is
/// computed.
pub const MAX_EXACT_LOSS_SIZE: usize = 10;

fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for t in terms {
        let u = s + t;
        c += if s.abs() >= t.abs() {
            (s - u) + t
        } else {
            (t - u) + s
        };
        s = u;
    }
    s + c
}

/// Total herald probability for identical photons,
/// `sum_{j<n} (-1)^j (j+1) prod_{i<=j} (1 - i/n)`.
pub fn herald_probability_closed(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("herald probability needs n >= 1".into()));
    }
    let nf = n as f64;
    let mut prod = 1.0;
    let terms = (0..n).map(|j| {
        if j > 0 {
            prod *= 1.0 - j as f64 / nf;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * (j + 1) as f64 * prod
    });
    Ok(neumaier_sum(terms))
}

/// Exact rational value of [`herald_probability_closed`].
pub fn herald_probability_rational(n: usize) -> Result<BigRational> {
    if n == 0 {
        return Err(Error::Domain("herald probability needs n >= 1".into()));
    }
    let big_n = BigInt::from(n);
    let mut prod = BigRational::from_integer(1.into());
    let mut total = BigRational::from_integer(0.into());
    for j in 0..n {
        if j > 0 {
            prod *= BigRational::new(BigInt::from(n - j), big_n.clone());
        }
        let term = &prod * BigRational::from_integer(BigInt::from(j + 1));
        if j % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    Ok(total)
}

/// Counting estimate `1 / (4 - 2/n)`. It has the right large-`n` limit but
/// differs from the exact herald probability at finite `n`.
pub fn herald_probability_counting(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain("counting estimate needs n >= 2".into()));
    }
    Ok(1.0 / (4.0 - 2.0 / n as f64))
}

/// `y = prefactor * x^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub prefactor: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLaw> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Dimension(format!(
            "power-law fit needs two equal-length series of at least 2 points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Domain(
            "power-law fit needs positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain(
            "power-law fit needs distinct x values".into(),
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(PowerLaw {
        prefactor: (my - exponent * mx).exp(),
        exponent,
    })
}

/// Fit of `p(n) - 1/4` over `n_lo..=n_hi`.
pub fn herald_probability_fit(n_lo: usize, n_hi: usize) -> Result<PowerLaw> {
    let ns: Vec<usize> = (n_lo.max(1)..=n_hi).collect();
    let ys = ns
        .iter()
        .map(|&n| herald_probability_closed(n).map(|p| p - 0.25))
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    fit_power_law(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub p: f64,
    /// `1 + log2(1/p) / log2(n)`.
    pub gamma: f64,
    /// Value of `gamma` at `p = 1/4`.
    pub gamma_bound: f64,
}

pub fn gamma(n: usize, p: f64) -> Result<ScalingPoint> {
    if n < 2 {
        return Err(Error::Domain("scaling exponent needs n >= 2".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "herald probability {p} outside (0, 1]"
        )));
    }
    let ln_n = (n as f64).ln();
    Ok(ScalingPoint {
        n,
        p,
        gamma: 1.0 + (1.0 / p).ln() / ln_n,
        gamma_bound: 1.0 + 4f64.ln() / ln_n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QecTradeoff {
    /// Photon cost of a logical qubit with distillation relative to error
    /// correction alone, at equal logical error.
    pub cost_ratio: f64,
    /// Smallest `p_error / p_th` at which distillation wins for this `n`.
    pub boundary: f64,
    pub advantageous: bool,
}

/// `(1/n)^{1/(2 sqrt(n) - 1)}`.
pub fn qec_boundary(n: f64) -> f64 {
    (1.0 / n).powf(1.0 / (2.0 * n.sqrt() - 1.0))
}

/// Comparison of an `n`-photon distillation step with a surface code, both
/// reducing the error by the same factor; `p_ratio = p_error / p_th`.
pub fn qec_tradeoff(p_ratio: f64, n: usize) -> Result<QecTradeoff> {
    if n < 2 {
        return Err(Error::Domain("trade-off needs n >= 2".into()));
    }
    if !(p_ratio > 0.0 && p_ratio < 1.0) {
        return Err(Error::Domain(format!(
            "error ratio {p_ratio} outside (0, 1): above threshold is not modeled"
        )));
    }
    let nf = n as f64;
    let lr = p_ratio.ln();
    let boundary = qec_boundary(nf);
    Ok(QecTradeoff {
        cost_ratio: (2.0 * nf.sqrt() * lr / (lr - nf.ln())).powi(2),
        boundary,
        advantageous: p_ratio > boundary,
    })
}

/// Integer `n` in `2..=n_max` minimizing [`qec_boundary`].
pub fn qec_boundary_minimum(n_max: usize) -> Result<(usize, f64)> {
    if n_max < 2 {
        return Err(Error::Domain("search range needs n_max >= 2".into()));
    }
    Ok((2..=n_max)
        .map(|n| (n, qec_boundary(n as f64)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            },
        ))
}

/// `delta_n(eps) / eps`, with `delta_n` the probability of two or more
/// errors among `n` photons. Evaluated as a binomial tail to avoid
/// cancellation at small `eps`.
pub fn delta_validity(n: usize, eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("error rate {eps} outside [0, 1]")));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    let mut binom = n as f64 * (n as f64 - 1.0) / 2.0;
    let mut total = 0.0;
    for k in 2..=n {
        total += binom * eps.powi(k as i32 - 1) * (1.0 - eps).powi((n - k) as i32);
        binom *= (n - k) as f64 / (k + 1) as f64;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossModelParams {
    /// Two-photon interference visibility of the source.
    pub v0: f64,
    /// Second-order correlation at zero delay.
    pub g2: f64,
    /// Fixed coupling loss in dB.
    pub coupling_db: f64,
    /// Loss per interferometer mode in dB.
    pub per_mode_db: f64,
    /// Measurement error per unit distinguishability error.
    pub error_per_eps: f64,
}

impl Default for LossModelParams {
    fn default() -> Self {
        Self {
            v0: 0.9050,
            g2: 0.0279,
            coupling_db: 1.8,
            per_mode_db: 1.6 / 12.0,
            error_per_eps: 1.0,
        }
    }
}

impl LossModelParams {
    fn validate(&self) -> Result<()> {
        let ok = self.v0 > 0.0
            && self.v0 <= 1.0
            && (0.0..1.0).contains(&self.g2)
            && self.v0 + self.g2 <= 1.0 - self.g2
            && self.coupling_db >= 0.0
            && self.per_mode_db >= 0.0
            && self.error_per_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("unphysical loss model {self:?}")))
        }
    }

    /// Input error from `(1 - eps)^2 = (v0 + g2) / (1 - g2)`.
    pub fn input_error(&self) -> Result<f64> {
        self.validate()?;
        Ok(1.0 - ((self.v0 + self.g2) / (1.0 - self.g2)).sqrt())
    }

    pub fn insertion_loss_db(&self, n: usize) -> f64 {
        self.coupling_db + self.per_mode_db * n as f64
    }

    pub fn loss_probability(&self, n: usize) -> f64 {
        1.0 - 10f64.powf(-self.insertion_loss_db(n) / 10.0)
    }
}

/// How the distilled error of an `n`-photon step is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistilledErrorModel {
    /// Herald-probability-weighted error over all valid heralds.
    #[default]
    Exact,
    /// `eps / n`.
    FirstOrder,
}

/// Distilled error averaged over valid heralds, weighted by herald
/// probability at `eps`.
pub fn mean_distilled_error(n: usize, eps: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain("distillation needs n >= 3".into()));
    }
    if n > MAX_EXACT_LOSS_SIZE {
        return Err(Error::SizeLimit {
            what: "exact distilled error",
            size: n,
            limit: MAX_EXACT_LOSS_SIZE,
        });
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Domain(format!("error rate {eps} outside [0, 1)")));
    }
    let u = fourier_unitary(n)?;
    let valid: Vec<OccupationVector> = enumerate_outcomes(n, n, Some(1))
        .into_iter()
        .filter(|o| classify_ztl(o) == ZtlClass::Allowed)
        .collect();
    let parts = valid
        .par_iter()
        .map(|o| {
            let p = DistillationProfile::new(&u, o)?;
            Ok(if p.q_i() > UNDEFINED_PROBABILITY {
                (p.bad(eps), p.q(eps))
            } else {
                (0.0, 0.0)
            })
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let bad: f64 = parts.iter().map(|p| p.0).sum();
    let q: f64 = parts.iter().map(|p| p.1).sum();
    Ok(bad / q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub n: usize,
    pub eps: f64,
    pub p_error: f64,
    pub p_erasure: f64,
    /// Relative to `n = 3`.
    pub p_error_rel: f64,
    /// Relative to `n = 3`.
    pub p_erasure_rel: f64,
}

fn loss_values(
    n: usize,
    eps: f64,
    params: &LossModelParams,
    model: DistilledErrorModel,
) -> Result<(f64, f64)> {
    let distilled = match model {
        DistilledErrorModel::Exact => mean_distilled_error(n, eps)?,
        DistilledErrorModel::FirstOrder => eps / n as f64,
    };
    Ok((params.error_per_eps * distilled, params.loss_probability(n)))
}

/// Measurement and erasure error of an `n`-photon step, absolute and
/// normalized to the three-photon step.
pub fn loss_tradeoff(
    n: usize,
    params: &LossModelParams,
    model: DistilledErrorModel,
) -> Result<LossPoint> {
    if n < 3 {
        return Err(Error::Domain("loss model needs n >= 3".into()));
    }
    let eps = params.input_error()?;
    let (e3, l3) = loss_values(3, eps, params, model)?;
    let (p_error, p_erasure) = loss_values(n, eps, params, model)?;
    Ok(LossPoint {
        n,
        eps,
        p_error,
        p_erasure,
        p_error_rel: p_error / e3,
        p_erasure_rel: p_erasure / l3,
    })
}

/// Histogram of `(sum_j j c_j) / (sum_j c_j)` over Haar-random interferometers.
/// Bins cover `[-n, n]`; the ratio has no lower bound, so `below` counts the
/// tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarHistogram {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
    /// Number of ratios; outcomes with vanishing probability are skipped.
    pub total: u64,
    pub max_ratio: f64,
    /// Value every Fourier herald takes.
    pub fourier_reference: f64,
}

/// Bins per unit ratio.
pub const HAAR_BINS_PER_UNIT: usize = 20;

/// Ratios for each of `k_samples` Haar unitaries and every outcome with one
/// photon in the last mode. Sample `k` draws from stream `k` of a ChaCha8
/// generator seeded with `seed`, so results do not depend on scheduling.
pub fn haar_ratio_histogram(n: usize, k_samples: usize, seed: u64) -> Result<HaarHistogram> {
    if !(3..=6).contains(&n) {
        return Err(Error::Domain(format!(
            "Haar comparison supports n in 3..=6, got {n}"
        )));
    }
    if k_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let outcomes = enumerate_outcomes(n, n, Some(1));
    let input = OccupationVector::single_photons(n);
    let per_sample = (0..k_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let u = haar_unitary_with_rng(n, &mut rng)?;
            let mut ratios = Vec::with_capacity(outcomes.len());
            for o in &outcomes {
                let q_i = indistinguishable_probability(&u, &input, o)?;
                if q_i <= UNDEFINED_PROBABILITY {
                    continue;
                }
                let f1: f64 = single_error_probabilities(&u, &input, o)?.iter().sum();
                ratios.push((n as f64 * q_i - f1) / q_i);
            }
            Ok(ratios)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let bins = 2 * n * HAAR_BINS_PER_UNIT;
    let width = 1.0 / HAAR_BINS_PER_UNIT as f64;
    let lo = -(n as f64);
    let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut hist = HaarHistogram {
        n,
        samples: k_samples,
        seed,
        edges,
        counts: vec![0; bins],
        below: 0,
        above: 0,
        total: 0,
        max_ratio: f64::NEG_INFINITY,
        fourier_reference: n as f64 - 1.0,
    };
    for r in per_sample.into_iter().flatten() {
        hist.total += 1;
        hist.max_ratio = hist.max_ratio.max(r);
        if r < lo {
            hist.below += 1;
        } else if r > n as f64 {
            hist.above += 1;
        } else {
            let b = (((r - lo) / width) as usize).min(bins - 1);
            hist.counts[b] += 1;
        }
    }
    Ok(hist)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceCost {
    pub n: usize,
    pub p: f64,
    /// Photons per successful step, `n / p`.
    pub cost: f64,
    /// Large-`n` estimate `4 * target_reduction`.
    pub linear_estimate: f64,
}

/// Photon cost of one `n`-photon distillation step.
pub fn resource_cost(n: usize, target_reduction: f64) -> Result<ResourceCost> {
    if n < 3 {
        return Err(Error::Domain("distillation needs n >= 3".into()));
    }
    if target_reduction.is_nan() || target_reduction <= 0.0 {
        return Err(Error::Domain(format!(
            "target reduction {target_reduction} must be positive"
        )));
    }
    let p = herald_probability_closed(n)?;
    Ok(ResourceCost {
        n,
        p,
        cost: n as f64 / p,
        linear_estimate: 4.0 * target_reduction,
    })
}
