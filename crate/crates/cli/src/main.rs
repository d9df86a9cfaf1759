use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use zoomin::experiment::{
    evaluate_stage, gen_scenes_stage, required_variants, sweep_stage, train_qnet_stage, train_rnet_stage,
    ExperimentConfig,
};
use zoomin::policy::toy;
use zoomin::Error;

#[derive(Parser, Debug)]
#[command(name = "zoomin", version, about = "Coarse-to-fine zoom-in detection experiments")]
struct Cli {
    /// TOML config; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `eval.strategies`, comma separated.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    /// Overrides `eval.budgets`, comma separated percentages.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate seeded train and test scenes.
    GenScenes {
        /// Overrides `eval.train_scenes`.
        #[arg(long)]
        train: Option<usize>,
        /// Overrides `eval.test_scenes`.
        #[arg(long)]
        test: Option<usize>,
    },
    /// Train the gain regressor on the train scenes.
    TrainRnet,
    /// Train the Q-networks the selected strategies need.
    TrainQnet {
        /// Train on the two-region toy instead and report first-action accuracy.
        #[arg(long)]
        toy: bool,
        /// Seeded toy runs.
        #[arg(long, default_value_t = 20)]
        runs: u64,
        /// Toy episodes per epoch.
        #[arg(long, default_value_t = 48)]
        episodes: usize,
    },
    /// Evaluate strategies on the test scenes and write reports.
    Evaluate,
    /// Run the whole pipeline for every `eval.seeds` entry and write the budget table.
    Sweep {
        /// Overrides `eval.seeds`, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> zoomin::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = &cli.strategies {
        cfg.eval.strategies = s.clone();
    }
    if let Some(b) = &cli.budgets {
        cfg.eval.budgets = b.clone();
    }
    match &cli.command {
        Command::GenScenes { train, test } => {
            if let Some(n) = train {
                cfg.eval.train_scenes = *n;
            }
            if let Some(n) = test {
                cfg.eval.test_scenes = *n;
            }
        }
        Command::Sweep { seeds: Some(s) } => cfg.eval.seeds = s.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> zoomin::Result<()> {
    let cfg = load_config(cli)?;
    let out = cfg.out.clone();
    let strategies = cfg.strategies()?;
    match &cli.command {
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
        Command::GenScenes { .. } => {
            let m = gen_scenes_stage(&cfg, cfg.seed, cfg.eval.train_scenes, cfg.eval.test_scenes, &out)?;
            println!("seed {}: {} train, {} test scenes in {}", m.seed, m.train.len(), m.test.len(), out.join("scenes").display());
        }
        Command::TrainRnet => {
            let r = train_rnet_stage(&cfg, &out)?;
            let last = r.mse_curve.last().copied().unwrap_or(f64::NAN);
            println!("regressor: {} epochs, final mse {last:.6}", r.mse_curve.len());
        }
        Command::TrainQnet { toy: true, runs, episodes } => {
            let best = toy::optimal_first_action(toy::toy_config(0).gamma);
            let mut hits = 0;
            for seed in 0..*runs {
                let (q, _) = toy::train_toy(seed, *episodes)?;
                let a = toy::first_action(&q)?;
                hits += u64::from(a == best);
                println!("run {seed}: first action {a}");
            }
            println!("optimal first action {best}: {hits}/{runs}");
        }
        Command::TrainQnet { .. } => {
            let variants = required_variants(&strategies);
            for (v, log) in train_qnet_stage(&cfg, &out, &variants)? {
                let tail = log.losses.len().min(100);
                let eps: Vec<String> = log.epsilons.iter().map(|e| format!("{e:.2}")).collect();
                let mean = log.losses[log.losses.len() - tail..].iter().sum::<f64>() / tail.max(1) as f64;
                println!(
                    "{}: {} transitions, {} updates, target lag {}, epsilon [{}], tail loss {mean:.6}",
                    v.stem(),
                    log.transitions,
                    log.losses.len(),
                    cfg.rl.target_lag,
                    eps.join(" ")
                );
            }
        }
        Command::Evaluate => {
            let reports = evaluate_stage(&cfg, &out, &strategies, &cfg.eval.budgets)?;
            print!("{}", reports.csv);
        }
        Command::Sweep { .. } => {
            let started = Instant::now();
            let (reports, _) = sweep_stage(&cfg, &out, &strategies, &cfg.eval.budgets)?;
            print!("{}", reports.csv);
            eprintln!("sweep over {} seeds: {:.1}s", cfg.eval.seeds.len(), started.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Divergence(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
