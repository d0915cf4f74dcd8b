use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use utraj_cli::{commands, init_threads, pipeline, Error, Result, RunConfig};
use utraj_core::AgentType;
use utraj_model::{Forecaster, LossMode};

#[derive(Parser)]
#[command(name = "utraj", version, about = "Uncertainty-aware trajectory forecasting experiments")]
struct Cli {
    /// Worker threads (falls back to UNCERTAIN_TRAJ_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate train/val/test particle scenes.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run Kalman-family trackers and attach their estimates.
    Track {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        agent_type: AgentType,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Position measurement noise std (m), overriding the config.
        #[arg(long)]
        meas_noise: Option<f64>,
    },
    /// Train one forecaster.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "composite")]
        loss: LossMode,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint path; curves go to `<stem>.curves.csv` beside it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate checkpoints on the test split.
    Evaluate {
        #[arg(long = "ckpt", required = true, num_args = 1..)]
        ckpts: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also render SVG forecasts of the first test scenes.
        #[arg(long)]
        figures: bool,
    },
    /// Write the distance comparison study.
    Distances {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one scene's forecast as SVG.
    Figure {
        #[arg(long)]
        ckpt: PathBuf,
        /// Scene directory (or dataset root, whose test split is used).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        /// Forecast origin step; mid-scene by default.
        #[arg(long)]
        step: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, track, train all loss modes, evaluate and plot.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let [tr, va, te] = commands::simulate(&cfg.sim, &out)?;
            println!("train {tr} val {va} test {te}");
        }
        Command::Track { input, out, agent_type, config, seed, meas_noise } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let mut tracking = cfg.filter.tracking(cfg.sim.dt);
            if let Some(m) = meas_noise {
                for f in tracking.filters.values_mut() {
                    f.meas_noise_std = m;
                }
            }
            let rmse = commands::track(&input, &out, agent_type, &tracking, seed.unwrap_or(cfg.seed), cfg.filter.burn_in)?;
            println!("position rmse {rmse:.6} m");
        }
        Command::Train { data, loss, epochs, out, config, seed } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let mut train = cfg.train.clone();
            if let Some(e) = epochs {
                train.epochs = e;
            }
            train.validate()?;
            commands::train(&data, &cfg.model, &train, loss, seed.unwrap_or(cfg.seed), &out)?;
            println!("wrote {} and {}", out.display(), commands::curves_path(&out).display());
        }
        Command::Evaluate { ckpts, data, out, config, figures } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let reports = commands::evaluate(&ckpts, &data, &out, &cfg.eval, figures)?;
            for (name, r) in &reports {
                let last = r.rows.last().expect("non-empty grid");
                println!("{name}: nll@{}s {:.3} fde {:.4} desv1 {:+.3}", last.horizon_s, last.nll_mean, last.fde, last.desv1);
            }
        }
        Command::Distances { out } => {
            let n = commands::distances(&out)?;
            println!("wrote {n} rows to {}", out.display());
        }
        Command::Figure { ckpt, data, scene, step, out } => {
            let model = Forecaster::load(&ckpt)?;
            let scenes = commands::read_split(&data, "test")?;
            let s = scenes.get(scene).ok_or_else(|| Error::Usage(format!("scene {scene} out of range ({} scenes)", scenes.len())))?;
            let svg = commands::figure(&model, s, step.unwrap_or_else(|| commands::figure_step(s, &model.config)))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
            }
            std::fs::write(&out, svg).map_err(|source| Error::Io { path: out.clone(), source })?;
        }
        Command::Pipeline { config, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            for (stage, outcome) in pipeline::run(&cfg, &out)? {
                println!("{stage}: {outcome:?}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
