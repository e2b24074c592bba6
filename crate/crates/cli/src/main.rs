mod args;
mod commands;
mod output;
mod plot;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use sha2::{Digest, Sha256};

use args::{Cli, Command, Common, Grid, NRange};
use output::{render, Stamp, Table};
use plot::Plot;

const OUT_DIR_VAR: &str = "FDISTILL_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    SizeLimit(String),
    Core(fourier_distill::Error),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::SizeLimit(_) => 3,
            CliError::Core(e) => match e {
                fourier_distill::Error::SizeLimit { .. } => 3,
                fourier_distill::Error::Domain(_)
                | fourier_distill::Error::Dimension(_)
                | fourier_distill::Error::Unsupported(_) => 2,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::SizeLimit(_) => "size-limit",
            CliError::Core(e) => match e {
                fourier_distill::Error::SizeLimit { .. } => "size-limit",
                fourier_distill::Error::Domain(_)
                | fourier_distill::Error::Dimension(_)
                | fourier_distill::Error::Unsupported(_) => "usage",
                fourier_distill::Error::UndefinedConditional { .. } => "undefined-conditional",
                _ => "numerical",
            },
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::SizeLimit(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
        }
    }
}

impl From<fourier_distill::Error> for CliError {
    fn from(e: fourier_distill::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Everything that determines the output; thread count and paths are left
/// out so that they do not change the bytes written.
#[derive(Serialize)]
struct RunConfig<'a> {
    version: &'static str,
    command: &'static str,
    n: NRange,
    eps: Option<&'a Grid>,
    ratio: Option<&'a Grid>,
    fit: Option<bool>,
    model: Option<args::ErrorModel>,
    samples: Option<usize>,
    seed: u64,
    format: args::Format,
}

impl RunConfig<'_> {
    fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

fn check_eps(grid: &Grid, what: &str, closed_top: bool) -> Result<(), CliError> {
    for &e in &grid.0 {
        let ok = e >= 0.0 && (e < 1.0 || (closed_top && e == 1.0));
        if !ok {
            return Err(CliError::Usage(format!(
                "{what} value {e} outside the allowed range"
            )));
        }
    }
    Ok(())
}

fn execute(command: &Command) -> Result<(Table, Plot, RunConfig<'_>, &Common), CliError> {
    let version = env!("CARGO_PKG_VERSION");
    let base = |name, n, common: &Common| RunConfig {
        version,
        command: name,
        n,
        eps: None,
        ratio: None,
        fit: None,
        model: None,
        samples: None,
        seed: common.seed,
        format: common.format,
    };
    Ok(match command {
        Command::Scan { n, eps, common } => {
            if let Some(g) = eps {
                check_eps(g, "--eps", false)?;
            }
            let (t, p) = commands::scan(*n, eps.as_ref().map(|g| g.0.as_slice()))?;
            (
                t,
                p,
                RunConfig {
                    eps: eps.as_ref(),
                    ..base("scan", *n, common)
                },
                common,
            )
        }
        Command::Conjecture { n, common } => {
            let (t, p) = commands::conjecture(*n)?;
            (t, p, base("conjecture", *n, common), common)
        }
        Command::HeraldProb { n, fit, common } => {
            let (t, p) = commands::herald_prob(*n, *fit)?;
            (
                t,
                p,
                RunConfig {
                    fit: Some(*fit),
                    ..base("herald-prob", *n, common)
                },
                common,
            )
        }
        Command::Gamma { n, common } => {
            let (t, p) = commands::gamma_table(*n)?;
            (t, p, base("gamma", *n, common), common)
        }
        Command::Qec { n, ratio, common } => {
            let (t, p) = commands::qec(*n, &ratio.0)?;
            (
                t,
                p,
                RunConfig {
                    ratio: Some(ratio),
                    ..base("qec", *n, common)
                },
                common,
            )
        }
        Command::Validity { n, eps, common } => {
            check_eps(eps, "--eps", true)?;
            let (t, p) = commands::validity(*n, &eps.0)?;
            (
                t,
                p,
                RunConfig {
                    eps: Some(eps),
                    ..base("validity", *n, common)
                },
                common,
            )
        }
        Command::Loss { n, model, common } => {
            let (t, p) = commands::loss(*n, *model)?;
            (
                t,
                p,
                RunConfig {
                    model: Some(*model),
                    ..base("loss", *n, common)
                },
                common,
            )
        }
        Command::Haar { n, samples, common } => {
            let (t, p) = commands::haar(*n, *samples, common.seed)?;
            (
                t,
                p,
                RunConfig {
                    samples: Some(*samples),
                    ..base("haar", *n, common)
                },
                common,
            )
        }
    })
}

fn common_of(command: &Command) -> &Common {
    match command {
        Command::Scan { common, .. }
        | Command::Conjecture { common, .. }
        | Command::HeraldProb { common, .. }
        | Command::Gamma { common, .. }
        | Command::Qec { common, .. }
        | Command::Validity { common, .. }
        | Command::Loss { common, .. }
        | Command::Haar { common, .. } => common,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = match common_of(&cli.command).jobs {
        Some(j) => j as usize,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| {
        let (table, plot, config, common) = execute(&cli.command)?;
        let stamp = Stamp {
            version: config.version,
            seed: config.seed,
            config_hash: config.hash(),
        };
        let bytes = render(&table, &stamp, common.format)?;
        let target: Option<PathBuf> = common.out.clone().or_else(|| {
            std::env::var_os(OUT_DIR_VAR).map(|dir| {
                PathBuf::from(dir).join(format!("{}.{}", config.command, common.format.extension()))
            })
        });
        match target {
            Some(path) => write_file(&path, &bytes)?,
            None => std::io::stdout().lock().write_all(&bytes)?,
        }
        if let Some(path) = &common.plot {
            write_file(path, plot.render().as_bytes())?;
        }
        Ok(())
    })
}

fn report(kind: &str, message: &str) {
    let err = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{err}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
