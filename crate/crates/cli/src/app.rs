//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use expid::design::{
    bound_constants, geometric_gains, lambda_gains, sec6_pattern, LambdaOverrides,
};
use expid::poly::{
    char_coeffs, determining_coeffs, polynomial_hurwitz, routh_first_column, PolyCoeffs,
};
use expid::{
    check_gains, simulate_paths, verify_certificate, DesignError, GainKind, GainVector, SimError,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, WORKERS_ENV};
use crate::jobs::{self, Figure, JobError, ReproduceOptions, SweepAxis};
use crate::output;
use crate::plant::SEC6_LIPSCHITZ;

#[derive(Debug, Parser)]
#[command(
    name = "expid",
    version,
    about = "Extended PID design, certification and Monte Carlo simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or check a gain vector against the admissibility inequality.
    Design {
        #[command(flatten)]
        gains: GainArgs,
        /// Write the gains as `{"kind": ..., "gains": [...]}`.
        #[arg(long)]
        gains_out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Construct and verify the Lyapunov certificate `(P, Q)`.
    Certify {
        #[command(flatten)]
        gains: GainArgs,
        /// Growth constant of the lower bound, used with `--lambda`.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long)]
        json: bool,
    },
    /// Test whether the characteristic polynomial is Hurwitz.
    Hurwitz {
        #[command(flatten)]
        gains: GainArgs,
        /// Polynomial coefficients in ascending degree, `a0,a1,...`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["pattern", "gains", "config"])]
        poly: Option<Vec<f64>>,
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo run of a configuration file; writes the ensemble table.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV, `-` for standard output.
        #[arg(long, default_value = "-")]
        out: PathBuf,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Regenerate the data of a benchmark figure.
    Reproduce {
        /// `fig1`, `fig2` or `fig3`.
        figure: Figure,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 30.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        record_stride: usize,
        #[arg(long, env = WORKERS_ENV, default_value_t = 0)]
        workers: usize,
    },
    /// Steady-state error over a grid of noise levels or gain scales.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            required_unless_present = "scales",
            conflicts_with = "scales"
        )]
        sigmas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        /// Start of the averaging window; default is half the horizon.
        #[arg(long)]
        window_start: Option<f64>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pattern {
    /// `(k, 2.5k, 2.5k, k)`.
    Sec6,
    /// `k_i = 3^{-i(i+1)/2} k`.
    Geometric,
    /// Decay-rate design.
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Pid,
    Pd,
}

#[derive(Debug, Clone, Args)]
pub struct GainArgs {
    /// Take plant constants and gains from a configuration file.
    #[arg(long, conflicts_with_all = ["pattern", "gains"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "gains")]
    pub pattern: Option<Pattern>,
    /// Explicit gains in ascending index order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gains: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "pid")]
    pub kind: KindArg,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Lipschitz constant of the drift; defaults to √3/2 for the sec6 pattern, else 0.
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b_lower: f64,
}

/// Successful outcomes, mapped to exit codes 0 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Rejected,
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Job(#[from] JobError),
    #[error("{0}")]
    Usage(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Job(e.into())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Job(e.into())
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        AppError::Job(e.into())
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Job(JobError::Sim(SimError::Diverged { .. })) => 3,
            _ => 1,
        }
    }
}

pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// A gain vector with the plant constants it is judged against.
#[derive(Debug, Clone, Serialize)]
pub struct GainSource {
    pub gains: GainVector,
    pub betas: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub l: f64,
    pub m: f64,
    pub b_lower: f64,
}

/// `Ok(Err(_))` is a design rejected by an open inequality.
fn resolve(args: &GainArgs) -> Result<Result<GainSource, DesignError>, AppError> {
    if let Some(path) = &args.config {
        let cfg = RunConfig::load(path)?;
        let plant = cfg.plant.build()?;
        let g = cfg
            .resolve_gains(&plant)?
            .ok_or_else(|| ConfigError::field("gains", "missing"))?;
        return Ok(Ok(GainSource {
            gains: g.gains,
            betas: g.betas,
            lambda: g.lambda.or(args.lambda),
            l: plant.lipschitz_l(),
            m: plant.lipschitz_m(),
            b_lower: plant.gain_lower_b(),
        }));
    }
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| AppError::Usage(format!("--{flag} is required")))
    };
    let l = args.l.unwrap_or(if args.pattern == Some(Pattern::Sec6) {
        SEC6_LIPSCHITZ
    } else {
        0.0
    });
    let mut betas = None;
    let built = match (args.pattern, &args.gains) {
        (Some(Pattern::Sec6), _) => sec6_pattern(need(args.k, "k")?),
        (Some(Pattern::Geometric), _) => {
            let n = args
                .n
                .ok_or_else(|| AppError::Usage("--n is required".into()))?;
            geometric_gains(need(args.k, "k")?, n)
        }
        (Some(Pattern::Lambda), _) => {
            let n = args
                .n
                .ok_or_else(|| AppError::Usage("--n is required".into()))?;
            let overrides = LambdaOverrides {
                betas: args.betas.clone(),
                k: args.k,
            };
            match lambda_gains(
                need(args.lambda, "lambda")?,
                l,
                args.m,
                n,
                args.b_lower,
                &overrides,
            ) {
                Ok(d) => {
                    betas = Some(d.betas);
                    Ok(d.gains)
                }
                Err(e @ (DesignError::InvalidBeta { .. } | DesignError::InvalidScale { .. })) => {
                    return Ok(Err(e))
                }
                Err(e) => return Err(AppError::Usage(e.to_string())),
            }
        }
        (None, Some(g)) => {
            let kind = match args.kind {
                KindArg::Pid => GainKind::Pid,
                KindArg::Pd => GainKind::Pd,
            };
            GainVector::new(kind, g.clone())
        }
        (None, None) => {
            return Err(AppError::Usage(
                "give --pattern, --gains or --config".into(),
            ))
        }
    };
    let gains = built.map_err(|e| AppError::Usage(e.to_string()))?;
    Ok(Ok(GainSource {
        gains,
        betas,
        lambda: args.lambda,
        l,
        m: args.m,
        b_lower: args.b_lower,
    }))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Usage(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn kind_name(k: GainKind) -> &'static str {
    match k {
        GainKind::Pid => "pid",
        GainKind::Pd => "pd",
    }
}

fn design(
    args: &GainArgs,
    gains_out: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> Result<Status, AppError> {
    let src = match resolve(args)? {
        Ok(s) => s,
        Err(e) => {
            if json {
                print_json(
                    out,
                    &serde_json::json!({ "admissible": false, "error": e.to_string() }),
                )?;
            } else {
                writeln!(out, "rejected: {e}")?;
            }
            return Ok(Status::Rejected);
        }
    };
    let report = check_gains(&src.gains, src.l, src.m, src.b_lower)
        .map_err(|e| AppError::Usage(e.to_string()))?;
    if let Some(path) = gains_out {
        let mut text =
            serde_json::to_string_pretty(&src.gains).map_err(|e| AppError::Usage(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
    }
    if json {
        print_json(
            out,
            &serde_json::json!({ "gains": src.gains, "betas": src.betas, "report": report }),
        )?;
    } else {
        writeln!(
            out,
            "gains ({}): {}",
            kind_name(src.gains.kind()),
            fmt_list(src.gains.as_slice())
        )?;
        if let Some(b) = &src.betas {
            writeln!(out, "betas: {}", fmt_list(b))?;
        }
        writeln!(
            out,
            "constants: L = {}, M = {}, b_lower = {}",
            src.l, src.m, src.b_lower
        )?;
        writeln!(
            out,
            "binding term: {} = {}",
            report.binding_term.name, report.binding_term.value
        )?;
        writeln!(out, "kbar: {}", report.kbar)?;
        writeln!(out, "margin: {}", report.margin)?;
        writeln!(out, "admissible: {}", report.admissible)?;
    }
    Ok(if report.admissible {
        Status::Ok
    } else {
        Status::Rejected
    })
}

fn certify(args: &GainArgs, r: f64, json: bool, out: &mut dyn Write) -> Result<Status, AppError> {
    let src = match resolve(args)? {
        Ok(s) => s,
        Err(e) => {
            writeln!(out, "rejected: {e}")?;
            return Ok(Status::Rejected);
        }
    };
    match verify_certificate(&src.gains, src.l, src.m) {
        Ok(cert) => {
            let bounds = match (src.lambda, src.gains.kind()) {
                (Some(lambda), GainKind::Pid) => Some(
                    bound_constants(&src.gains, lambda, src.l, src.m, r)
                        .map_err(|e| AppError::Usage(e.to_string()))?
                        .with_certificate(&cert),
                ),
                _ => None,
            };
            if json {
                print_json(
                    out,
                    &serde_json::json!({ "certified": true, "certificate": cert, "bounds": bounds }),
                )?;
            } else {
                writeln!(out, "certified: true")?;
                writeln!(
                    out,
                    "P eigenvalues: min {:e}, max {:e}",
                    cert.min_eig_p, cert.max_eig_p
                )?;
                writeln!(out, "Q diagonal: {}", fmt_list(&cert.q))?;
                writeln!(out, "kbar: {}", cert.kbar)?;
                writeln!(
                    out,
                    "negative-definiteness margin: {:e}",
                    cert.min_eig_negdef
                )?;
                if let Some(b) = bounds {
                    writeln!(
                        out,
                        "bound constants: coeff_exp = {}, coeff_ss = {}, c3 = {:e}",
                        b.thm3_coeff_exp, b.thm3_coeff_ss, b.c3
                    )?;
                }
            }
            Ok(Status::Ok)
        }
        Err(rej) => {
            if json {
                print_json(
                    out,
                    &serde_json::json!({ "certified": false, "rejection": rej }),
                )?;
            } else {
                writeln!(out, "certified: false")?;
                for v in &rej.violations {
                    writeln!(out, "  {v}")?;
                }
            }
            Ok(Status::Rejected)
        }
    }
}

#[derive(Serialize)]
struct HurwitzReport {
    coefficients: Vec<f64>,
    stable: bool,
    route: expid::poly::HurwitzRoute,
    routh_first_column: Option<Vec<f64>>,
    determining_coefficients: Option<Vec<f64>>,
}

fn hurwitz(
    args: &GainArgs,
    poly: Option<&[f64]>,
    json: bool,
    out: &mut dyn Write,
) -> Result<Status, AppError> {
    let p = match poly {
        Some(a) => PolyCoeffs::new(a.to_vec()).map_err(|e| AppError::Usage(e.to_string()))?,
        None => match resolve(args)? {
            Ok(src) => char_coeffs(&src.gains),
            Err(e) => return Err(AppError::Usage(e.to_string())),
        },
    };
    let verdict = polynomial_hurwitz(&p).map_err(|e| AppError::Usage(e.to_string()))?;
    let report = HurwitzReport {
        coefficients: p.coeffs().to_vec(),
        stable: verdict.stable,
        route: verdict.route,
        routh_first_column: routh_first_column(&p).ok(),
        determining_coefficients: if p.degree() >= 5 {
            determining_coeffs(&p).ok()
        } else {
            None
        },
    };
    if json {
        print_json(out, &report)?;
    } else {
        writeln!(
            out,
            "coefficients (ascending): {}",
            fmt_list(&report.coefficients)
        )?;
        writeln!(out, "hurwitz: {} (via {:?})", report.stable, report.route)?;
        if let Some(c) = &report.routh_first_column {
            writeln!(out, "routh first column: {}", fmt_list(c))?;
        }
        if let Some(c) = &report.determining_coefficients {
            writeln!(out, "determining coefficients: {}", fmt_list(c))?;
        }
    }
    Ok(if report.stable {
        Status::Ok
    } else {
        Status::Rejected
    })
}

fn open_out(
    path: &Path,
    out: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> csv::Result<()>,
) -> Result<(), AppError> {
    let io = |e: csv::Error| AppError::from(std::io::Error::other(e));
    if path == Path::new("-") {
        f(out).map_err(io)
    } else {
        let mut file = std::fs::File::create(path)?;
        f(&mut file).map_err(io)
    }
}

fn load_with_workers(path: &Path, workers: Option<usize>) -> Result<RunConfig, AppError> {
    let mut cfg = RunConfig::load(path)?;
    if let (Some(w), Some(sim)) = (workers, cfg.sim.as_mut()) {
        sim.workers = Some(w);
    }
    Ok(cfg)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Status, AppError> {
    match &cli.command {
        Command::Design {
            gains,
            gains_out,
            json,
        } => design(gains, gains_out.as_deref(), *json, out),
        Command::Certify { gains, r, json } => certify(gains, *r, *json, out),
        Command::Hurwitz { gains, poly, json } => hurwitz(gains, poly.as_deref(), *json, out),
        Command::Simulate {
            config,
            out: path,
            workers,
        } => {
            let run = load_with_workers(config, *workers)?.build()?;
            let stats = simulate_paths(&run.plant, &run.setpoint, &run.controller, &run.sim)?;
            open_out(path, out, |w| output::write_stats(w, &stats))?;
            Ok(Status::Ok)
        }
        Command::Reproduce {
            figure,
            out_dir,
            paths,
            dt,
            horizon,
            seed,
            record_stride,
            workers,
        } => {
            let opts = ReproduceOptions {
                paths: *paths,
                dt: *dt,
                horizon: *horizon,
                seed: *seed,
                record_stride: *record_stride,
                workers: *workers,
            };
            let results = jobs::run_figure(*figure, &opts)?;
            for path in jobs::write_figure(*figure, &opts, &results, out_dir)? {
                writeln!(out, "wrote {}", path.display())?;
            }
            Ok(Status::Ok)
        }
        Command::Sweep {
            config,
            sigmas,
            scales,
            window_start,
            out: path,
            workers,
        } => {
            let cfg = load_with_workers(config, *workers)?;
            let (axis, values) = match (sigmas, scales) {
                (Some(s), _) => (SweepAxis::Sigma, s),
                (None, Some(s)) => (SweepAxis::Scale, s),
                (None, None) => return Err(AppError::Usage("give --sigmas or --scales".into())),
            };
            let rows = jobs::run_sweep(&cfg, axis, values, *window_start)?;
            open_out(path, out, |w| jobs::write_sweep(w, axis, &rows))?;
            Ok(Status::Ok)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match run(&cli, out) {
        Ok(Status::Ok) => 0,
        Ok(Status::Rejected) => EXIT_REJECTED,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
