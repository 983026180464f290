use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wallcast::run::{self, Paths, RunConfig, Scale, Site};
use wallcast::{Error, Result};

#[derive(Parser)]
#[command(name = "wallcast", version, about = "Multi-step wall deflection forecasting with a stacked ConvLSTM ensemble")]
struct Cli {
    /// JSON run configuration; overrides --scale.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives a fully sequential run.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "desk")]
    scale: String,
    /// Root directory for data, models and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic simulation database.
    Gen,
    /// Resample records and build windows and splits.
    Prep,
    /// Train one base model per resolution.
    Train,
    /// Train the meta-learner on validation rollouts.
    Stack,
    /// Write example rollouts from test origins.
    Rollout,
    /// Score every model per prediction step on the test split.
    Eval,
    /// Attribute the ensemble output to the base models.
    Shap,
    /// Draw charts and index the reports.
    Report,
    /// Forecast, score and attribute a monitoring series CSV.
    Field { input: PathBuf },
    /// Write a synthetic irregular monitoring series.
    GenField {
        #[arg(long, default_value = "b")]
        site: String,
        output: PathBuf,
    },
    /// Run every stage from generation to report.
    Run,
    /// Print the effective configuration as JSON.
    Config,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::preset(cli.scale.parse::<Scale>()?),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(root) = &cli.out {
        cfg.paths = Paths::under(root);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Gen => gen(&cfg),
        Command::Prep => prep(&cfg),
        Command::Train => train(&cfg),
        Command::Stack => stack(&cfg),
        Command::Rollout => rollout(&cfg),
        Command::Eval => eval(&cfg),
        Command::Shap => shap(&cfg),
        Command::Report => report(&cfg),
        Command::Field { input } => field(&cfg, input),
        Command::GenField { site, output } => {
            run::cmd_gen_field(&cfg, site.parse::<Site>()?, output)?;
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::Run => {
            gen(&cfg)?;
            prep(&cfg)?;
            train(&cfg)?;
            stack(&cfg)?;
            rollout(&cfg)?;
            eval(&cfg)?;
            shap(&cfg)?;
            report(&cfg)
        }
        Command::Config => print_json(&cfg),
    }
}

fn gen(cfg: &RunConfig) -> Result<()> {
    let s = run::cmd_gen(cfg)?;
    println!("gen: {} records ({} case A, {} case B)", s.records, s.case_a, s.case_b);
    Ok(())
}

fn prep(cfg: &RunConfig) -> Result<()> {
    for e in run::cmd_prep(cfg)? {
        println!(
            "prep: t={} windows={} supervised={} train={} val={} test={}",
            e.resolution, e.windows, e.supervised, e.train, e.val, e.test
        );
    }
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    for s in run::cmd_train(cfg)? {
        println!("train: {} params={} epochs={} best_val={:.6e}", s.model, s.params, s.epochs, s.best_val_loss);
    }
    Ok(())
}

fn stack(cfg: &RunConfig) -> Result<()> {
    let s = run::cmd_stack(cfg)?;
    println!(
        "stack: sequences={} samples={} params={} epochs={} best_holdout={:.6e}",
        s.sequences, s.samples, s.params, s.epochs, s.best_holdout_loss
    );
    Ok(())
}

fn rollout(cfg: &RunConfig) -> Result<()> {
    for dir in run::cmd_rollout(cfg)? {
        println!("rollout: {}", dir.display());
    }
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    for (model, rows) in run::cmd_eval(cfg)? {
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            println!(
                "eval: {model:<9} IoA step1={:.4} step{}={:.4}  MAE step1={:.3e} step{}={:.3e}",
                first.ioa, last.step, last.ioa, first.mae, last.step, last.mae
            );
        }
    }
    Ok(())
}

fn shap(cfg: &RunConfig) -> Result<()> {
    let table = run::cmd_shap(cfg)?;
    for row in &table.rows {
        let shares: Vec<String> = table.models.iter().zip(&row.share).map(|(m, s)| format!("{m}={s:.3}")).collect();
        println!("shap: step {} {}", row.step, shares.join(" "));
    }
    Ok(())
}

fn report(cfg: &RunConfig) -> Result<()> {
    println!("report: {}", run::cmd_report(cfg)?.display());
    Ok(())
}

fn field(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let s = run::cmd_field(cfg, input)?;
    println!(
        "field: {} origins, max |prediction| {:.3} mm, written to {}",
        s.origins,
        s.max_abs_prediction * 1000.0,
        s.dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wallcast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
