use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agriswarm::harness;
use agriswarm::{Error, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Args)]
struct Common {
    /// TOML configuration file with flat dotted keys (defaults when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.episodes=10`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed (overrides run.master_seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides run.out_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train all agents and write metrics, checkpoint and manifest
    Train {
        /// Print one line per episode
        #[arg(long)]
        verbose: bool,
    },
    /// Noise-free rollouts of a checkpoint with trajectory export
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scenario JSON file (a fresh evaluation scenario when omitted)
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Per-step and per-agent inference latency for several fleet sizes
    Scale {
        #[arg(long, value_delimiter = ',', default_values_t = [6, 12, 24])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Smoothed reward/AoI/VDF series from a metrics file
    Plotdata {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
    },
    /// Write the training scenario pool as JSON files
    GenScenarios,
}

#[derive(Parser)]
#[command(name = "agriswarm", version, about = "Multi-UAV farm simulator and multi-agent trainer")]
struct Root {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn load(common: &Common) -> agriswarm::Result<RunConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("run.master_seed={s}"));
    }
    if let Some(o) = &common.out {
        overrides.push(format!("run.out_dir={}", toml_string(&o.to_string_lossy())));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn echo_config(cfg: &RunConfig, out: &Path) -> agriswarm::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(harness::CONFIG_FILE), cfg.to_flat_toml())?;
    Ok(())
}

fn run(root: Root) -> agriswarm::Result<()> {
    let cfg = load(&root.common)?;
    let out = PathBuf::from(&cfg.run.out_dir);
    match root.command {
        Command::Train { verbose } => {
            let log = harness::cmd_train(&cfg, &out, |r| {
                if verbose {
                    println!(
                        "episode {:>5}  reward {:>10.3}  aoi {:.3}  vdf {:.3}{}",
                        r.episode,
                        r.reward,
                        r.aoi,
                        r.vdf,
                        if r.eia_event { "  [imitation]" } else { "" }
                    );
                }
            })?;
            println!("trained {} episodes; artifacts in {}", log.records.len(), out.display());
        }
        Command::Eval { checkpoint, scenario, episodes } => {
            echo_config(&cfg, &out)?;
            let rep = harness::cmd_eval(&cfg, &checkpoint, scenario.as_deref(), episodes, &out)?;
            for e in &rep.episodes {
                println!("episode {}  reward {:.3}  aoi {:.3}  vdf {:.3}", e.episode, e.reward, e.aoi_mean, e.vdf_mean);
            }
            println!(
                "{} UAVs: inference {:.1} us/step, {:.2} us/agent",
                rep.n_uav, rep.inference_us_per_step, rep.inference_us_per_agent
            );
        }
        Command::Scale { sizes, steps } => {
            echo_config(&cfg, &out)?;
            let rows = harness::cmd_scale(&cfg, &sizes, steps, Some(&out))?;
            println!("n_uav,step_us,per_agent_us");
            for r in rows {
                println!("{},{:.2},{:.3}", r.n_uav, r.step_us, r.per_agent_us);
            }
        }
        Command::Plotdata { metrics, window } => {
            for p in harness::cmd_plotdata(&metrics, window, &out)? {
                println!("{}", p.display());
            }
        }
        Command::GenScenarios => {
            echo_config(&cfg, &out)?;
            let files = harness::cmd_gen_scenarios(&cfg, &out)?;
            println!("wrote {} scenarios to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let root = Root::parse();
    match run(root) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
