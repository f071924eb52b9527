use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mlpeq::bench::{
    analytic_complexity, emit_complexity, run_until, ExperimentConfig, PipelineResults,
    PipelineStage, Profile, SeedSet,
};
use mlpeq::complexity::ComplexityReport;

#[derive(Parser)]
#[command(name = "mlpeq", version, about = "Coherent-link MLP equalizer experiments")]
struct Cli {
    /// JSON experiment config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Scale profile: `paper` or `desk`.
    #[arg(long, global = true)]
    profile: Option<Profile>,

    /// Named seed set (`default` or any other name).
    #[arg(long = "seed-set", global = true)]
    seed_set: Option<String>,

    /// Output directory.
    #[arg(long, global = true, env = "MLPEQ_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate train/test datasets and report the linear-DSP baseline.
    Simulate,
    /// Simulate (or reuse) datasets and train the FP32 equalizers.
    Train,
    /// Everything up to pruning with fine-tuning.
    Prune,
    /// Everything up to INT8 quantization.
    Quantize,
    /// Analytic BoPs and model-size table.
    Complexity,
    /// Everything up to quantization, then the latency benchmark.
    Bench,
    /// The full experiment.
    All,
}

fn load_config(cli: &Cli) -> mlpeq::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::for_profile(cli.profile.unwrap_or(Profile::Desk)),
    };
    if let (Some(_), Some(p)) = (&cli.config, cli.profile) {
        cfg.apply_profile(p);
    }
    if let Some(name) = &cli.seed_set {
        cfg.seeds = SeedSet::named(name);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_q_table(results: &PipelineResults) {
    println!("{:>9} {:>4} {:>8} {:>13} {:>12} {:>8}", "power", "pol", "sparsity", "stage", "ber", "q_db");
    for r in &results.q_rows {
        let stage = serde_json::to_value(r.stage).unwrap();
        println!(
            "{:>9.2} {:>4} {:>8.2} {:>13} {:>12.4e} {:>8.3}",
            r.power_dbm,
            r.polarization.name(),
            r.sparsity,
            stage.as_str().unwrap_or("?"),
            r.ber,
            r.q_db
        );
    }
    for s in &results.latency {
        println!(
            "latency {:<10} mean {:.4} s  sigma {:.4} s  {:.3} us/symbol",
            s.model_variant, s.mean_s, s.sigma_s, s.per_symbol_us
        );
    }
}

fn run(cli: &Cli) -> mlpeq::Result<()> {
    let cfg = load_config(cli)?;
    let until = match cli.command {
        Command::Complexity => {
            let rows = analytic_complexity(&cfg)?;
            println!("{}", ComplexityReport::table_header());
            for r in &rows {
                println!(
                    "{:<16} {:>8.2} {:>18} {:>8}% {:>10} {:>8}%",
                    r.model, r.sparsity, r.bops, r.bops_reduction_pct, r.bytes, r.size_reduction_pct
                );
            }
            emit_complexity(&rows, &cfg.output_dir)?;
            return Ok(());
        }
        Command::Simulate => PipelineStage::Simulate,
        Command::Train => PipelineStage::Train,
        Command::Prune => PipelineStage::Prune,
        Command::Quantize => PipelineStage::Quantize,
        Command::Bench | Command::All => PipelineStage::Bench,
    };
    let results = run_until(&cfg, until)?;
    print_q_table(&results);
    log::info!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
