use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gmm_nls::benchmarks::{
    hessian_sweep_1d, run_psr_mc, run_toy_mc, Mixture1d, PsrSpace, PsrSpec, ToySpec,
};
use gmm_nls::selftest::run_selftest;
use gmm_nls::{FormulationOptions, Method, SolverConfig};

mod config;
mod report;

use config::ConfigFile;
use report::{Format, OutputSink};

const DEFAULT_SEED: u64 = 2024;

#[derive(Parser, Debug)]
#[command(name = "gmmnls", version, about = "Gaussian-mixture NLS studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Toy mixture optimization study
    Toy {
        /// Problem dimension, 1 or 2 [default: 1]
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        dim: Option<u8>,
        #[command(flatten)]
        common: Common,
    },
    /// Point-set registration study
    Psr {
        /// Pose space [default: se2]
        #[arg(long, value_enum)]
        space: Option<SpaceArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Hessian of each formulation along a two-component 1D mixture
    HessianSweep {
        /// Samples over [-5, 5]
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Quick invariant checks
    Selftest {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, env = "GMMNLS_SEED")]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpaceArg {
    Se2,
    Se3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Scale {
    Full,
    Desk,
}

#[derive(Args, Debug)]
struct Common {
    /// Comma-separated subset of mm,sm,msm,hsm
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    #[arg(long, env = "GMMNLS_SEED")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,md
    #[arg(long)]
    formats: Option<String>,
    /// Iteration cap, rejected steps included [default: 200]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop when the step norm falls below this [default: 1e-8]
    #[arg(long)]
    step_tol: Option<f64>,
    /// Max-sum-mixture normalization offset [default: 1]
    #[arg(long)]
    msm_delta: Option<f64>,
    /// Initial damping scale [default: 1e-3]
    #[arg(long)]
    lm_tau: Option<f64>,
    /// File of `key = value` lines; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Leave the wall-time column empty so repeated runs are byte-identical
    #[arg(long)]
    omit_timing: bool,
}

/// Flags merged with the optional config file.
struct Settings {
    methods: Vec<Method>,
    scale: Scale,
    seed: u64,
    out: PathBuf,
    formats: Vec<Format>,
    solver: SolverConfig,
    options: FormulationOptions,
    omit_timing: bool,
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let m: Method = name
            .parse()
            .with_context(|| format!("unknown method `{name}`"))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        bail!("no methods selected");
    }
    Ok(methods)
}

fn parse_scale(s: &str) -> Result<Scale> {
    Scale::from_str(s, true).map_err(|_| anyhow::anyhow!("unknown scale `{s}`"))
}

impl Settings {
    fn resolve(common: &Common) -> Result<(Self, ConfigFile)> {
        let file = match &common.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let methods = match (common.methods.as_deref(), file.get("methods")) {
            (Some(s), _) | (None, Some(s)) => parse_methods(s)?,
            (None, None) => Method::ALL.to_vec(),
        };
        let scale = match (common.scale, file.get("scale")) {
            (Some(s), _) => s,
            (None, Some(s)) => parse_scale(s)?,
            (None, None) => Scale::Desk,
        };
        let formats = match (common.formats.as_deref(), file.get("formats")) {
            (Some(s), _) | (None, Some(s)) => Format::parse_list(s)?,
            (None, None) => Format::ALL.to_vec(),
        };
        let mut solver = SolverConfig::default();
        solver.max_iters = common
            .max_iters
            .map_or_else(|| file.parsed("max_iters", solver.max_iters), Ok)?;
        solver.step_tol = common
            .step_tol
            .map_or_else(|| file.parsed("step_tol", solver.step_tol), Ok)?;
        solver.lm_tau = common
            .lm_tau
            .map_or_else(|| file.parsed("lm_tau", solver.lm_tau), Ok)?;
        solver.validate()?;
        let mut options = FormulationOptions::default();
        options.msm_delta = common
            .msm_delta
            .map_or_else(|| file.parsed("msm_delta", options.msm_delta), Ok)?;
        if !(options.msm_delta > 0.0 && options.msm_delta.is_finite()) {
            bail!("msm_delta must be positive, got {}", options.msm_delta);
        }
        let settings = Settings {
            methods,
            scale,
            seed: common
                .seed
                .map_or_else(|| file.parsed("seed", DEFAULT_SEED), Ok)?,
            out: match (&common.out, file.get("out")) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => PathBuf::from(p),
                (None, None) => PathBuf::from("results"),
            },
            formats,
            solver,
            options,
            omit_timing: common.omit_timing || file.parsed("omit_timing", false)?,
        };
        Ok((settings, file))
    }

    fn sink(&self) -> Result<OutputSink> {
        OutputSink::new(&self.out, &self.formats, self.omit_timing)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Toy { dim, common } => {
            let (s, file) = Settings::resolve(&common)?;
            let dim = match dim {
                Some(d) => usize::from(d),
                None => file.parsed("dim", 1usize)?,
            };
            let spec = match s.scale {
                Scale::Full => ToySpec::full(dim, s.seed),
                Scale::Desk => ToySpec::desk(dim, s.seed),
            };
            let sink = s.sink()?;
            log::info!(
                "toy {dim}D: {} draws x {} starts",
                spec.n_param_draws,
                spec.n_inits
            );
            let report = run_toy_mc(&spec, &s.methods, s.options, &s.solver)?;
            sink.write_study(&format!("toy_{dim}d"), &report, report::Table::Toy)?;
            print!(
                "{}",
                report::markdown_table(&report, report::Table::Toy, s.omit_timing)
            );
        }
        Command::Psr { space, common } => {
            let (s, file) = Settings::resolve(&common)?;
            let space = match space {
                Some(SpaceArg::Se2) => PsrSpace::SE2,
                Some(SpaceArg::Se3) => PsrSpace::SE3,
                None => match file.get("space").map(str::to_ascii_lowercase).as_deref() {
                    None | Some("se2") => PsrSpace::SE2,
                    Some("se3") => PsrSpace::SE3,
                    Some(other) => bail!("unknown space `{other}`"),
                },
            };
            let spec = match s.scale {
                Scale::Full => PsrSpec::full(space, s.seed),
                Scale::Desk => PsrSpec::desk(space, s.seed),
            };
            let sink = s.sink()?;
            let report = run_psr_mc(&spec, &s.methods, s.options, &s.solver)?;
            let stem = match space {
                PsrSpace::SE2 => "psr_se2",
                PsrSpace::SE3 => "psr_se3",
            };
            sink.write_study(stem, &report, report::Table::Psr)?;
            print!(
                "{}",
                report::markdown_table(&report, report::Table::Psr, s.omit_timing)
            );
        }
        Command::HessianSweep { samples, common } => {
            let (s, file) = Settings::resolve(&common)?;
            let samples = match samples {
                Some(n) => n,
                None => file.parsed("samples", 1001usize)?,
            };
            let sink = s.sink()?;
            let sweep =
                hessian_sweep_1d(&Mixture1d::two_scale(), (-5.0, 5.0), samples, &s.options)?;
            sink.write_sweep("hessian_sweep", &sweep)?;
            for (m, d) in &sweep.deviation {
                println!("{:<4} integrated |H - H_exact| = {d}", m.label());
            }
        }
        Command::Selftest { samples, seed } => {
            let results = run_selftest(seed.unwrap_or(DEFAULT_SEED), samples)?;
            let mut failed = 0;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!(
                    "{tag} {} (worst {:e}, tol {:e})",
                    r.name, r.worst, r.tolerance
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                bail!("{failed} self-test check(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
