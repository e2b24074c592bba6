use std::collections::BTreeMap;

use fourier_distill::analysis::{
    delta_validity, fit_power_law, gamma, haar_ratio_histogram, herald_probability_closed,
    herald_probability_counting, herald_probability_fit, loss_tradeoff, qec_boundary_minimum,
    qec_tradeoff, DistilledErrorModel, LossModelParams,
};
use fourier_distill::distill::{check_conjecture, default_eps_grid, scan_heralds, Threshold};
use fourier_distill::fock::ZtlClass;

use crate::args::{ErrorModel, NRange};
use crate::output::{format_float, Cell, Table};
use crate::plot::{Plot, Series};
use crate::CliError;

/// Largest photon count for the closed-form sweeps.
pub const MAX_CLOSED_FORM_N: usize = 100_000;
/// Largest number of output rows for the grid sweeps.
pub const MAX_ROWS: usize = 1_000_000;
pub const MAX_HAAR_SAMPLES: usize = 1_000_000;

fn check_rows(rows: usize) -> Result<(), CliError> {
    if rows > MAX_ROWS {
        return Err(CliError::SizeLimit(format!(
            "request produces {rows} rows, limit is {MAX_ROWS}"
        )));
    }
    Ok(())
}

fn check_closed_form(n: NRange) -> Result<(), CliError> {
    if n.hi > MAX_CLOSED_FORM_N {
        return Err(CliError::SizeLimit(format!(
            "n = {} exceeds the closed-form limit {MAX_CLOSED_FORM_N}",
            n.hi
        )));
    }
    Ok(())
}

pub fn scan(n: NRange, eps: Option<&[f64]>) -> Result<(Table, Plot), CliError> {
    let default = default_eps_grid();
    let grid = eps.unwrap_or(&default);
    let mut table = Table::new(&[
        "N",
        "herald",
        "family_rep",
        "ztl_class",
        "suppressed",
        "epsilon",
        "q",
        "epsilon_prime",
    ]);
    let mut plot = Plot {
        title: "Distilled error".into(),
        x_label: "input error".into(),
        y_label: "distilled error".into(),
        log_x: true,
        log_y: true,
        ..Default::default()
    };
    for n in n.iter() {
        let reports = scan_heralds(n, grid)?;
        check_rows(table.rows.len() + reports.len() * grid.len())?;
        let mut families: BTreeMap<String, (usize, f64, Option<Threshold>)> = BTreeMap::new();
        for r in &reports {
            let herald = r.herald.label();
            let rep = r.family_rep.label();
            for p in &r.curve {
                table.push(vec![
                    n.into(),
                    herald.as_str().into(),
                    rep.as_str().into(),
                    r.ztl_class.as_str().into(),
                    r.suppressed.into(),
                    p.eps.into(),
                    p.q.into(),
                    p.eps_prime.into(),
                ]);
            }
            if r.is_valid() {
                let entry = families
                    .entry(rep.clone())
                    .or_insert((0, 0.0, r.threshold_eps));
                entry.0 += 1;
                entry.1 += r.q_i;
            }
            if r.is_valid() && r.herald == r.family_rep {
                let pts = r
                    .curve
                    .iter()
                    .filter_map(|p| Some((p.eps, p.eps_prime?)))
                    .collect();
                plot.series
                    .push(Series::line(format!("N={n} ({})", r.herald), pts));
            }
        }
        let valid = reports.iter().filter(|r| r.is_valid()).count();
        let allowed = reports
            .iter()
            .filter(|r| r.ztl_class == ZtlClass::Allowed)
            .count();
        table.meta(format!("N{n}.allowed"), allowed);
        table.meta(format!("N{n}.valid"), valid);
        table.meta(format!("N{n}.families"), families.len());
        let total: f64 = reports.iter().filter(|r| r.is_valid()).map(|r| r.q_i).sum();
        table.meta(format!("N{n}.total_q_i"), format_float(total));
        for (rep, (members, q, threshold)) in &families {
            let t = match threshold {
                Some(Threshold::At(t)) => format_float(*t),
                _ => "open".into(),
            };
            table.meta(
                format!("N{n}.family[{rep}]"),
                format!("members={members};q_i={};threshold={t}", format_float(*q)),
            );
        }
    }
    if !grid.is_empty() {
        let lo = grid
            .iter()
            .copied()
            .filter(|e| *e > 0.0)
            .fold(f64::INFINITY, f64::min);
        let hi = grid.iter().copied().fold(0.0, f64::max);
        if lo < hi {
            plot.series
                .push(Series::line("identity", vec![(lo, lo), (hi, hi)]).dashed());
        }
    }
    Ok((table, plot))
}

pub fn conjecture(n: NRange) -> Result<(Table, Plot), CliError> {
    let mut table = Table::new(&["N", "n_allowed", "delta_max", "n_herald", "pct"]);
    let mut pts = Vec::new();
    for n in n.iter() {
        let row = check_conjecture(n)?;
        pts.push((n as f64, row.delta_max.max(f64::MIN_POSITIVE)));
        table.push(vec![
            row.n.into(),
            row.n_allowed.into(),
            row.delta_max.into(),
            row.n_herald.into(),
            row.pct.into(),
        ]);
    }
    let plot = Plot {
        title: "Largest interference-sum residual".into(),
        x_label: "N".into(),
        y_label: "normalized residual".into(),
        log_y: true,
        series: vec![Series::line("delta_max", pts).markers()],
        ..Default::default()
    };
    Ok((table, plot))
}

pub fn herald_prob(n: NRange, fit: bool) -> Result<(Table, Plot), CliError> {
    check_closed_form(n)?;
    let mut table = Table::new(&["N", "p", "p_counting", "p_minus_quarter"]);
    let mut exact = Vec::new();
    let mut counting = Vec::new();
    for n in n.iter() {
        let p = herald_probability_closed(n)?;
        let c = if n >= 2 {
            Some(herald_probability_counting(n)?)
        } else {
            None
        };
        exact.push((n as f64, p));
        if let Some(c) = c {
            counting.push((n as f64, c));
        }
        table.push(vec![n.into(), p.into(), c.into(), (p - 0.25).into()]);
    }
    if fit {
        let lo = n.lo.max(5);
        if n.hi < lo + 1 {
            return Err(CliError::Usage(
                "--fit needs at least two photon counts of 5 or more".into(),
            ));
        }
        let law = herald_probability_fit(lo, n.hi)?;
        table.meta("fit.range", format!("{lo}..{}", n.hi));
        table.meta("fit.exponent", format_float(law.exponent));
        table.meta("fit.prefactor", format_float(law.prefactor));
    }
    let (x0, x1) = (n.lo as f64, n.hi as f64);
    let plot = Plot {
        title: "Total herald probability".into(),
        x_label: "N".into(),
        y_label: "p".into(),
        log_x: true,
        series: vec![
            Series::line("closed form", exact),
            Series::line("counting estimate", counting).dashed(),
            Series::line("1/4", vec![(x0, 0.25), (x1, 0.25)]).dashed(),
        ],
        ..Default::default()
    };
    Ok((table, plot))
}

pub fn gamma_table(n: NRange) -> Result<(Table, Plot), CliError> {
    check_closed_form(n)?;
    let mut table = Table::new(&["N", "p", "gamma", "gamma_bound"]);
    let (mut g, mut b) = (Vec::new(), Vec::new());
    for n in n.iter() {
        let point = gamma(n, herald_probability_closed(n)?)?;
        g.push((n as f64, point.gamma));
        b.push((n as f64, point.gamma_bound));
        table.push(vec![
            n.into(),
            point.p.into(),
            point.gamma.into(),
            point.gamma_bound.into(),
        ]);
    }
    let plot = Plot {
        title: "Resource scaling exponent".into(),
        x_label: "N".into(),
        y_label: "gamma".into(),
        series: vec![
            Series::line("gamma", g),
            Series::line("p = 1/4 bound", b).dashed(),
        ],
        ..Default::default()
    };
    Ok((table, plot))
}

pub fn qec(n: NRange, ratios: &[f64]) -> Result<(Table, Plot), CliError> {
    check_rows(n.len().saturating_mul(ratios.len()))?;
    let mut table = Table::new(&["N", "p_ratio", "cost_ratio", "advantageous", "boundary"]);
    let mut boundary = Vec::new();
    for n in n.iter() {
        let mut b = None;
        for &r in ratios {
            let t = qec_tradeoff(r, n)?;
            b = Some(t.boundary);
            table.push(vec![
                n.into(),
                r.into(),
                t.cost_ratio.into(),
                t.advantageous.into(),
                t.boundary.into(),
            ]);
        }
        if let Some(b) = b {
            boundary.push((n as f64, b));
        }
    }
    let (best_n, best) = qec_boundary_minimum(n.hi.max(2))?;
    table.meta("boundary.min_n", best_n);
    table.meta("boundary.min", format_float(best));
    let plot = Plot {
        title: "Error ratio above which distillation wins".into(),
        x_label: "N".into(),
        y_label: "p_error / p_th".into(),
        series: vec![Series::line("boundary", boundary)],
        ..Default::default()
    };
    Ok((table, plot))
}

pub fn validity(n: NRange, eps: &[f64]) -> Result<(Table, Plot), CliError> {
    check_rows(n.len().saturating_mul(eps.len()))?;
    let mut table = Table::new(&["N", "epsilon", "ratio"]);
    let mut plot = Plot {
        title: "Two or more errors relative to eps".into(),
        x_label: "input error".into(),
        y_label: "ratio (clamped at 1)".into(),
        log_x: true,
        ..Default::default()
    };
    for n in n.iter() {
        let mut pts = Vec::new();
        for &e in eps {
            let r = delta_validity(n, e)?;
            pts.push((e, r.min(1.0)));
            table.push(vec![n.into(), e.into(), r.into()]);
        }
        plot.series.push(Series::line(format!("N={n}"), pts));
    }
    Ok((table, plot))
}

pub fn loss(n: NRange, model: ErrorModel) -> Result<(Table, Plot), CliError> {
    let model = match model {
        ErrorModel::Exact => DistilledErrorModel::Exact,
        ErrorModel::FirstOrder => DistilledErrorModel::FirstOrder,
    };
    let params = LossModelParams::default();
    let mut table = Table::new(&[
        "N",
        "epsilon",
        "p_error",
        "p_erasure",
        "p_error_rel",
        "p_erasure_rel",
    ]);
    let (mut err, mut era) = (Vec::new(), Vec::new());
    for n in n.iter() {
        let p = loss_tradeoff(n, &params, model)?;
        err.push((n as f64, p.p_error_rel));
        era.push((n as f64, p.p_erasure_rel));
        table.push(vec![
            n.into(),
            p.eps.into(),
            p.p_error.into(),
            p.p_erasure.into(),
            p.p_error_rel.into(),
            p.p_erasure_rel.into(),
        ]);
    }
    if err.len() >= 2 {
        let xs: Vec<f64> = err.iter().map(|p| p.0).collect();
        let e: Vec<f64> = err.iter().map(|p| p.1).collect();
        let a: Vec<f64> = era.iter().map(|p| p.1).collect();
        table.meta(
            "fit.error_exponent",
            format_float(fit_power_law(&xs, &e)?.exponent),
        );
        table.meta(
            "fit.erasure_exponent",
            format_float(fit_power_law(&xs, &a)?.exponent),
        );
    }
    let plot = Plot {
        title: "Measurement and erasure error relative to N = 3".into(),
        x_label: "N".into(),
        y_label: "relative error".into(),
        series: vec![
            Series::line("measurement", err),
            Series::line("erasure", era),
        ],
        ..Default::default()
    };
    Ok((table, plot))
}

pub fn haar(n: NRange, samples: usize, seed: u64) -> Result<(Table, Plot), CliError> {
    if samples > MAX_HAAR_SAMPLES {
        return Err(CliError::SizeLimit(format!(
            "{samples} samples exceeds the limit {MAX_HAAR_SAMPLES}"
        )));
    }
    let mut table = Table::new(&["N", "bin_lo", "bin_hi", "count"]);
    let mut plot = Plot {
        title: "Interference ratio, Haar-random interferometers".into(),
        x_label: "sum j c_j / sum c_j".into(),
        y_label: "fraction".into(),
        ..Default::default()
    };
    for n in n.iter() {
        let h = haar_ratio_histogram(n, samples, seed)?;
        let total = h.total.max(1) as f64;
        let mut pts = Vec::new();
        for (k, &c) in h.counts.iter().enumerate() {
            let (lo, hi) = (h.edges[k], h.edges[k + 1]);
            table.push(vec![n.into(), lo.into(), hi.into(), Cell::Int(c)]);
            pts.push((0.5 * (lo + hi), c as f64 / total));
        }
        table.meta(format!("N{n}.samples"), h.samples);
        table.meta(format!("N{n}.total"), h.total);
        table.meta(format!("N{n}.below"), h.below);
        table.meta(format!("N{n}.above"), h.above);
        table.meta(format!("N{n}.max_ratio"), format_float(h.max_ratio));
        table.meta(
            format!("N{n}.fourier_reference"),
            format_float(h.fourier_reference),
        );
        let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
        plot.series.push(Series::line(format!("N={n}"), pts));
        plot.series.push(
            Series::line(
                format!("Fourier N={n}"),
                vec![(h.fourier_reference, 0.0), (h.fourier_reference, peak)],
            )
            .dashed(),
        );
    }
    Ok((table, plot))
}
