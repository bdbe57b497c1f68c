use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use bbpn::experiment::output::write_extrapolation;
use bbpn::experiment::{emit_calibration, emit_outputs, extrapolate, run_calibration, run_experiment, ExperimentConfig, ModelConfig};
use bbpn::likelihood::FitConfig;
use bbpn::{BbpnError, Dataset, RadialProfile};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bbpn", version, about = "Probabilistic extrapolation of numerical-method outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extrapolate a user-supplied CSV dataset (columns h, t_1..t_p, value).
    Extrapolate(ExtrapolateArgs),
    /// Riemann-sum quadrature experiment.
    Riemann(RunArgs),
    /// Lotka-Volterra experiment with Euler or Adams-Bashforth data.
    Ode(RunArgs),
    /// QR-iteration eigenvalues of a Laplacian.
    EigenQr(RunArgs),
    /// Power-method eigenvalue of a random symmetric tensor.
    EigenTensor(RunArgs),
    /// Kuramoto-Sivashinsky solution by ETDRK4.
    PdeKse(RunArgs),
    /// Repeat an experiment on randomised instances and score calibration.
    Calibrate(RunArgs),
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// Learn the convergence order by maximum likelihood.
    #[arg(long)]
    learn_alpha: bool,
    /// Use an error process stationary in h (alpha = 0).
    #[arg(long)]
    stationary: bool,
    /// Radial profile for every kernel direction.
    #[arg(long, value_parser = ["matern12", "matern32", "gaussian"])]
    kernel: Option<String>,
    /// Number of polynomial basis functions in the prior mean.
    #[arg(long)]
    basis_v: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: ModelFlags,
}

#[derive(Args)]
struct ExtrapolateArgs {
    /// Input CSV.
    #[arg(long)]
    input: PathBuf,
    /// Order of the method (initial value when learned).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Optional TOML config providing model and fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ModelFlags,
}

fn apply_flags(model: &mut ModelConfig, flags: &ModelFlags) -> Result<(), BbpnError> {
    if flags.learn_alpha {
        model.learn_alpha = true;
    }
    if flags.stationary {
        model.stationary = true;
    }
    if let Some(k) = &flags.kernel {
        model.kernel = k.parse::<RadialProfile>()?;
    }
    if let Some(v) = flags.basis_v {
        model.basis_v = v;
    }
    model.validate()
}

fn load_config(args: &RunArgs, family: Option<&str>) -> Result<ExperimentConfig, BbpnError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(f) = family {
        if cfg.problem.family() != f {
            return Err(BbpnError::Config(format!(
                "config describes a `{}` problem, not `{f}`",
                cfg.problem.family()
            )));
        }
    }
    apply_flags(&mut cfg.model, &args.flags)?;
    if let Some(s) = args.flags.seed {
        cfg.seed = s;
    }
    if let Some(d) = &args.flags.out_dir {
        cfg.output.dir = d.clone();
    }
    Ok(cfg)
}

fn run(args: &RunArgs, family: &str) -> Result<(), BbpnError> {
    let cfg = load_config(args, Some(family))?;
    let bundle = run_experiment(&cfg);
    emit_outputs(&bundle, &cfg.output.dir).map_err(|e| e.in_phase("output"))?;
    for o in &bundle.outcomes {
        match &o.report {
            Some(r) => println!(
                "h_finest={} resolutions={} W={:.6e} S={:.4} S2_band=[{:.4}, {:.4}] inside={}",
                o.h_finest, o.n_resolutions, r.w, r.s, r.band_lower, r.band_upper, r.inside_band
            ),
            None => println!("h_finest={} resolutions={}", o.h_finest, o.n_resolutions),
        }
    }
    println!("outputs written to {}", cfg.output.dir.display());
    bundle.into_result().map(|_| ())
}

fn calibrate(args: &RunArgs) -> Result<(), BbpnError> {
    let cfg = load_config(args, None)?;
    let rows = run_calibration(&cfg)?;
    emit_calibration(&cfg.name, &rows, &cfg.output.dir).map_err(|e| e.in_phase("output"))?;
    let inside = rows.iter().filter(|r| r.report.inside_band).count();
    println!("{inside} of {} repetitions inside the band", rows.len());
    Ok(())
}

fn extrapolate_csv(args: &ExtrapolateArgs) -> Result<(), BbpnError> {
    let (mut model, mut fit_cfg, seed, out_dir) = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            (cfg.model.clone(), cfg.fit_config(0), cfg.seed, cfg.output.dir.clone())
        }
        None => {
            let model = ModelConfig {
                alpha: args.alpha,
                ..ModelConfig::default()
            };
            (model, FitConfig::default(), 0, PathBuf::from("out"))
        }
    };
    apply_flags(&mut model, &args.flags)?;
    let data = Dataset::read_csv(File::open(&args.input)?)?;
    fit_cfg.learn_alpha = model.learn_alpha;
    fit_cfg.alpha = model.effective_alpha();
    fit_cfg.seed = args.flags.seed.unwrap_or(seed);
    let out_dir = args.flags.out_dir.clone().unwrap_or(out_dir);
    let query = data.ordinates();
    let ex = extrapolate(&data, &query, &model, &fit_cfg)?;
    write_extrapolation(&ex, model.band_sigmas, &out_dir).map_err(|e| e.in_phase("output"))?;
    println!("posterior written to {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Extrapolate(a) => extrapolate_csv(a),
        Command::Riemann(a) => run(a, "riemann"),
        Command::Ode(a) => run(a, "ode"),
        Command::EigenQr(a) => run(a, "eigen-qr"),
        Command::EigenTensor(a) => run(a, "eigen-tensor"),
        Command::PdeKse(a) => run(a, "pde-kse"),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
