use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "fdistill",
    version,
    about = "Fourier photon distillation: scans, tables and cost models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Distilled error and herald probability of every herald.
    Scan {
        #[arg(long, default_value = "5")]
        n: NRange,
        /// start:stop:count[:log|lin] or a comma-separated list; defaults to
        /// 60 log points on [1e-5, 0.5] plus linear points to 0.9.
        #[arg(long)]
        eps: Option<Grid>,
        #[command(flatten)]
        common: Common,
    },
    /// Interference-sum residuals and herald counts.
    Conjecture {
        #[arg(long, default_value = "3..10")]
        n: NRange,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form total herald probability.
    HeraldProb {
        #[arg(long, default_value = "3..1000")]
        n: NRange,
        /// Fit p - 1/4 to a power law over n >= 5.
        #[arg(long)]
        fit: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Resource scaling exponent.
    Gamma {
        #[arg(long, default_value = "3..100")]
        n: NRange,
        #[command(flatten)]
        common: Common,
    },
    /// Distillation against surface-code error correction.
    Qec {
        #[arg(long, default_value = "2..100")]
        n: NRange,
        /// Values of p_error / p_th.
        #[arg(long, default_value = "0.5:0.99:50")]
        ratio: Grid,
        #[command(flatten)]
        common: Common,
    },
    /// Probability of two or more errors relative to eps.
    Validity {
        #[arg(long, default_value = "2..10")]
        n: NRange,
        #[arg(long, default_value = "0.001:0.5:60:log")]
        eps: Grid,
        #[command(flatten)]
        common: Common,
    },
    /// Measurement against erasure error with realistic loss.
    Loss {
        #[arg(long, default_value = "3..10")]
        n: NRange,
        #[arg(long, value_enum, default_value_t = ErrorModel::Exact)]
        model: ErrorModel,
        #[command(flatten)]
        common: Common,
    },
    /// Histogram of the interference ratio for Haar-random interferometers.
    Haar {
        #[arg(long, default_value = "5")]
        n: NRange,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; defaults to `$FDISTILL_OUT_DIR/<command>.<ext>` or stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG plot to this path.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(ValueEnum, Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(ValueEnum, Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorModel {
    Exact,
    FirstOrder,
}

/// Inclusive range `a..b`, or a single value.
#[derive(Serialize, Debug, Clone, Copy, PartialEq, Eq)]
pub struct NRange {
    pub lo: usize,
    pub hi: usize,
}

impl NRange {
    pub fn iter(self) -> impl Iterator<Item = usize> {
        self.lo..=self.hi
    }

    pub fn len(self) -> usize {
        self.hi - self.lo + 1
    }
}

impl FromStr for NRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid photon count `{t}`"))
        };
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(format!("empty range `{s}`"));
        }
        Ok(NRange { lo, hi })
    }
}

/// A list of sample points.
#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("invalid number `{t}`"))
        };
        if !s.contains(':') {
            return s
                .split(',')
                .map(num)
                .collect::<Result<Vec<_>, _>>()
                .map(Grid);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("grid `{s}` must be start:stop:count[:log|lin]"));
        }
        let (start, stop) = (num(parts[0])?, num(parts[1])?);
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("invalid point count `{}`", parts[2]))?;
        if count == 0 {
            return Err("grid needs at least one point".into());
        }
        let log = match parts.get(3).map(|t| t.trim()) {
            None | Some("lin") => false,
            Some("log") => true,
            Some(other) => return Err(format!("unknown spacing `{other}`")),
        };
        if log && (start <= 0.0 || stop <= 0.0) {
            return Err("log spacing needs positive bounds".into());
        }
        let at = |k: usize| {
            let t = if count == 1 {
                0.0
            } else {
                k as f64 / (count - 1) as f64
            };
            if log {
                (start.ln() + t * (stop.ln() - start.ln())).exp()
            } else {
                start + t * (stop - start)
            }
        };
        Ok(Grid((0..count).map(at).collect()))
    }
}
