use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crsnet_cli::commands::{self, Status};
use crsnet_cli::exit;
use crsnet_cli::{Overrides, RunConfig};
use crsnet_core::csvio;
use crsnet_core::evaluation::Metric;

#[derive(Parser)]
#[command(name = "crsnet", version, about = "Chemotherapy response prediction from CT and clinical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "crsnet.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fixed decision threshold instead of the policy threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Threshold policy: max_f1, precision_floor or precision_floor(q).
    #[arg(long, global = true)]
    policy: Option<String>,
    /// Output root; runs go to <out>/run-<config hash>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (and seeded encoder weights if missing).
    Synth,
    /// Build slice stacks and morphology for every manifest row.
    Preprocess,
    /// Train the fusion head on cached embeddings.
    Train,
    /// Score splits and write metric, confusion, ROC and reliability reports.
    Evaluate {
        /// Splits to evaluate (train, val, test, external); repeatable.
        #[arg(long)]
        cohort: Vec<String>,
    },
    /// Feature-configuration ablation with a clinical baseline.
    Ablate,
    /// Lesion morphology only.
    Morphology,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let g = &cli.global;
    let overrides = Overrides {
        seed: g.seed,
        threshold: g.threshold,
        policy: g.policy.clone(),
        out: g.out.clone(),
        cohorts: match &cli.command {
            Command::Evaluate { cohort } if !cohort.is_empty() => Some(cohort.clone()),
            _ => None,
        },
    };
    let cfg = RunConfig::load(&g.config, &overrides)?;
    match cli.command {
        Command::Synth => {
            let out = commands::cmd_synth(&cfg)?;
            println!("wrote {} patients to {}", out.patients.len(), out.manifest.display());
            println!("manifest sha256 {}", out.manifest_checksum);
            if let Some(p) = out.encoder_written {
                println!("wrote seeded encoder weights to {}", p.display());
            }
        }
        Command::Preprocess => {
            let out = commands::cmd_preprocess(&cfg)?;
            println!(
                "{} stacks in {} ({} from cache), {} excluded",
                out.included(),
                out.run_dir.display(),
                out.cache_hits(),
                out.excluded().len()
            );
            for (e, s) in &out.patients {
                if let Status::Excluded { reason, detail } = s {
                    println!("  excluded {}: {reason} ({detail})", e.patient_id);
                }
            }
        }
        Command::Train => {
            let out = commands::cmd_train(&cfg)?;
            println!(
                "best epoch {} of {} ({}), val AUC {}",
                out.best_epoch,
                out.epochs,
                out.stop_reason,
                fmt_opt(out.val_auc)
            );
            println!("threshold {} = {}", out.threshold_policy, csvio::num(out.threshold));
            println!("checkpoint {}", out.checkpoint_dir.display());
        }
        Command::Evaluate { .. } => {
            let out = commands::cmd_evaluate(&cfg)?;
            println!("{:<10} {:<32} {:>9} {:>8} {:>8} {:>8} {:>8}", "cohort", "threshold", "tau", "auc", "prec", "recall", "f1");
            for r in &out.reports {
                let m = |k| fmt_opt(r.metric(k).and_then(|s| s.point));
                println!(
                    "{:<10} {:<32} {:>9} {:>8} {:>8} {:>8} {:>8}",
                    r.cohort,
                    r.threshold_name,
                    format!("{:.4}", r.threshold),
                    m(Metric::Auc),
                    m(Metric::Precision),
                    m(Metric::Recall),
                    m(Metric::F1)
                );
            }
            println!("reports in {}", out.dir.display());
            let single = out.single_class_cohorts();
            if !single.is_empty() {
                eprintln!("AUC undefined: cohort {} holds a single class", single.join(", "));
                return Ok(exit::UNDEFINED_METRIC);
            }
            if out.has_undefined() {
                eprintln!("warning: some metrics are undefined at these thresholds");
            }
        }
        Command::Ablate => {
            let out = commands::cmd_ablate(&cfg)?;
            for row in &out.rows {
                let f = |s: &Option<crsnet_core::evaluation::MetricSummary>| {
                    s.as_ref().map_or("n/a".to_string(), |s| {
                        format!("{} [{:.3}, {:.3}]", fmt_opt(s.point), s.ci_low, s.ci_high)
                    })
                };
                println!("{:<30} test {:<28} external {}", row.config.name, f(&row.test_auc), f(&row.external_auc));
            }
            println!("wrote {}", out.path.display());
        }
        Command::Morphology => {
            let out = commands::cmd_morphology(&cfg)?;
            println!("{} patients measured, {} excluded; wrote {}", out.rows.len(), out.excluded.len(), out.path.display());
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
