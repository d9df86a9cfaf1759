//! Runs one in-memory replicate and prints each strategy's accuracy/pixel
//! curve over step caps.
//!
//! `cargo run --release -p zoomin-core --example replicate -- [seed] [config.toml]`

use std::time::Instant;

use zoomin::experiment::{run_replicate, ExperimentConfig, Strategy};

fn main() -> zoomin::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("--dump") {
        print!("{}", ExperimentConfig::default().to_toml()?);
        return Ok(());
    }
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let config = match args.get(2) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::default(),
    };
    let started = Instant::now();
    let strategies = match std::env::var("STRATEGIES") {
        Ok(list) => list.split(',').map(Strategy::parse).collect::<zoomin::Result<Vec<_>>>()?,
        Err(_) => Strategy::ALL.to_vec(),
    };
    let rep = run_replicate(&config, seed, &strategies)?;
    println!("seed {seed}: {:.1}s, rnet mse {:?}", started.elapsed().as_secs_f64(), rep.rnet_mse.last());
    for (v, log) in &rep.training {
        let tail = &log.episode_returns[log.episode_returns.len().saturating_sub(config.eval.train_scenes)..];
        println!(
            "{v:?}: {} transitions, {} updates, last-epoch mean return {:.3}",
            log.transitions,
            log.losses.len(),
            tail.iter().sum::<f64>() / tail.len().max(1) as f64
        );
    }
    for e in &rep.evals {
        let cells: Vec<String> = e.curve.iter().map(|p| format!("{:.1}@{:.1}", p.a_perc, p.p_perc)).collect();
        println!("{:<20} {}", e.strategy.name(), cells.join("  "));
    }
    Ok(())
}
