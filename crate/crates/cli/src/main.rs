mod fit;
mod output;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{Failure, OutDir, RunManifest, Status, EXIT_CODES};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "smoothhaz",
    version,
    about = "Smooth hazards over one and two time scales",
    after_help = EXIT_CODES
)]
struct Cli {
    /// Worker threads for rho searches and study replicates; 1 reproduces
    /// results exactly across machines.
    #[arg(long, global = true, env = "SMOOTHHAZ_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Hazard over time since entry on the second scale (`s`).
    Fit1d(Fit1dArgs),
    /// Hazard surface over `(u, s)`.
    Fit2d(Fit2dArgs),
    /// Proportional hazards with a smooth `(u, s)` baseline.
    Fitph(FitPhArgs),
    /// Simulated data sets, or a full Monte Carlo study with `--study`.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Strategy {
    Grid,
    Numeric,
}

/// `lo:hi:step` in decades.
#[derive(Debug, Clone, Copy, Serialize)]
struct LogGrid {
    lo: f64,
    hi: f64,
    step: f64,
}

impl LogGrid {
    fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + self.step * i as f64).collect()
    }
}

fn parse_log_grid(raw: &str) -> Result<LogGrid, String> {
    let parts: Vec<f64> = raw
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [lo, hi, step] if lo.is_finite() && hi >= lo && step > 0.0 => Ok(LogGrid { lo, hi, step }),
        _ => Err("expected lo:hi:step with hi >= lo and step > 0".into()),
    }
}

fn parse_pair(raw: &str) -> Result<(f64, f64), String> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b] => Ok((a, b)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

#[derive(Debug, Args, Serialize)]
struct Fit1dArgs {
    /// Record CSV with columns id,u,s_in,s_out,event[,covariates...].
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, visible_alias = "nseg", default_value_t = 17)]
    nseg_s: usize,
    #[arg(long, visible_alias = "pord", default_value_t = 2)]
    pord_s: usize,
    #[arg(long, visible_alias = "bin-width", default_value_t = 30.0)]
    bin_width_s: f64,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Fixed smoothing parameter; skips AIC selection.
    #[arg(long)]
    rho: Option<f64>,
    /// log10 rho values searched for the AIC minimum.
    #[arg(long, value_parser = parse_log_grid, default_value = "-2:6:0.5")]
    rho_grid: LogGrid,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
struct SurfaceArgs {
    /// Record CSV with columns id,u,s_in,s_out,event[,covariates...].
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    nseg_u: usize,
    #[arg(long, default_value_t = 20)]
    nseg_s: usize,
    #[arg(long, default_value_t = 2)]
    pord_u: usize,
    #[arg(long, default_value_t = 2)]
    pord_s: usize,
    #[arg(long, default_value_t = 30.0)]
    bin_width_u: f64,
    #[arg(long, default_value_t = 30.0)]
    bin_width_s: f64,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[command(flatten)]
    rho: RhoArgs,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
struct RhoArgs {
    /// Fixed rho along u; requires --rho-s and skips selection.
    #[arg(long, requires = "rho_s")]
    rho_u: Option<f64>,
    /// Fixed rho along s; requires --rho-u and skips selection.
    #[arg(long, requires = "rho_u")]
    rho_s: Option<f64>,
    #[arg(long, value_enum, default_value_t = Strategy::Numeric)]
    rho_strategy: Strategy,
    /// Lattice for `--rho-strategy grid`, used on both axes.
    #[arg(long, value_parser = parse_log_grid, default_value = "-2:6:0.5")]
    rho_grid: LogGrid,
    /// Starting `log10 rho_u,log10 rho_s` for `--rho-strategy numeric`.
    #[arg(long, value_parser = parse_pair, default_value = "1,1", allow_hyphen_values = true)]
    rho_start: (f64, f64),
}

#[derive(Debug, Args, Serialize)]
struct Fit2dArgs {
    #[command(flatten)]
    surface: SurfaceArgs,
}

#[derive(Debug, Args, Serialize)]
struct FitPhArgs {
    #[command(flatten)]
    surface: SurfaceArgs,
    /// Comma-separated covariate columns to use; all columns by default.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Hazard surface: HM1, HM2 or HM3.
    #[arg(long, default_value = "HM1")]
    hm: String,
    /// Observation scheme: A, B or C.
    #[arg(long, default_value = "A")]
    scheme: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replicates; 1 without --study, 20 with it.
    #[arg(long = "S")]
    replicates: Option<usize>,
    /// Add the two simulated covariates x1 and x2.
    #[arg(long)]
    covariates: bool,
    #[arg(long, value_parser = parse_pair, default_value = "0.5,0.7", allow_hyphen_values = true)]
    beta: (f64, f64),
    #[arg(long, default_value_t = 20.0)]
    u_max: f64,
    /// Censoring duration for scheme A.
    #[arg(long)]
    s_max: Option<f64>,
    /// End of follow-up on t for schemes B and C.
    #[arg(long)]
    t_max: Option<f64>,
    /// Fit every replicate and write bias and RMSE surfaces.
    #[arg(long)]
    study: bool,
    #[arg(long, default_value_t = 12)]
    nseg: usize,
    #[arg(long, default_value_t = 2)]
    pord: usize,
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
    #[arg(long, value_enum, default_value_t = Strategy::Numeric)]
    rho_strategy: Strategy,
    #[arg(long, value_parser = parse_log_grid, default_value = "-2:6:0.5")]
    rho_grid: LogGrid,
    /// Metrics cover `(0, eval_extent)^2` at unit-spaced midpoints.
    #[arg(long, default_value_t = 20)]
    eval_extent: usize,
}

fn run(cli: &Cli, argv: Vec<String>) -> Result<Status, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let started = Instant::now();
    let (name, out_dir, inputs, settings) = match &cli.command {
        Command::Fit1d(a) => (
            "fit1d",
            &a.out_dir,
            vec![&a.input],
            serde_json::to_value(a)?,
        ),
        Command::Fit2d(a) => (
            "fit2d",
            &a.surface.out_dir,
            vec![&a.surface.input],
            serde_json::to_value(a)?,
        ),
        Command::Fitph(a) => (
            "fitph",
            &a.surface.out_dir,
            vec![&a.surface.input],
            serde_json::to_value(a)?,
        ),
        Command::Simulate(a) => ("simulate", &a.out_dir, vec![], serde_json::to_value(a)?),
    };
    let mut out = OutDir::create(out_dir)?;
    let status = match &cli.command {
        Command::Fit1d(a) => fit::fit1d(a, &mut out)?,
        Command::Fit2d(a) => fit::fit2d(a, &mut out)?,
        Command::Fitph(a) => fit::fitph(a, &mut out)?,
        Command::Simulate(a) => sim::simulate(a, &mut out)?,
    };
    let manifest = RunManifest {
        command: name.to_string(),
        argv,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        settings,
        threads: rayon::current_num_threads(),
        version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: out.written().to_vec(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli, std::env::args().collect()) {
        Ok(status) => {
            match status {
                Status::NotConverged => eprintln!("warning: a fit did not converge"),
                Status::PartialStudy => eprintln!("warning: some replicates failed"),
                Status::Ok => {}
            }
            status.exit_code()
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_includes_both_ends() {
        let g = parse_log_grid("-2:6:0.5").unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 17);
        assert_eq!(pts[0], -2.0);
        assert_eq!(pts[16], 6.0);
        assert!(parse_log_grid("1:0:0.5").is_err());
        assert!(parse_log_grid("0:1").is_err());
    }

    #[test]
    fn pairs_accept_negative_values() {
        assert_eq!(parse_pair("-1.5, 2").unwrap(), (-1.5, 2.0));
        assert!(parse_pair("1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
