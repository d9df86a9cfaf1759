//! End-to-end experiment plumbing: configuration, seeded scene sets, the two
//! training stages, strategy evaluation and budget sweeps. The `*_stage`
//! functions read and write the on-disk layout used by the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Detection, GroundTruthObject};
use crate::matching::build_training_set;
use crate::metrics::{aggregate, budget_sweep, compute_percentages, report_csv, report_json, Percentages, ReportRow, RunAggregate, StrategyCurve};
use crate::nn::{load_weights, save_weights};
use crate::policy::{
    build_action_grid, q_learning_train, run_episode, ActionGrid, EpisodeConfig, EpisodeResult, GainSource, Policy,
    QNetConfig, QNetwork, RLConfig, SceneEnv, TrainingLog, WindowSize,
};
use crate::records::{episode_record, load_records, save_records, scene_from_records, scene_records};
use crate::regressor::{train_regressor, GainRegressor, RegressorConfig};
use crate::seed;
use crate::sim::{generate_scene, run_detector, CostLedger, DetectorModel, Scene, SceneConfig, TimeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub windows: Vec<WindowSize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { windows: vec![WindowSize { w: 320, h: 240 }, WindowSize { w: 214, h: 160 }] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// Replicate seeds of a sweep.
    pub seeds: Vec<u64>,
    /// P_perc bucket upper bounds, percent.
    pub budgets: Vec<f64>,
    pub strategies: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_scenes: 60,
            test_scenes: 100,
            seeds: vec![1, 2, 3, 4, 5],
            budgets: vec![40.0, 45.0, 50.0, 55.0],
            strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of single-replicate commands.
    pub seed: u64,
    /// Output directory of the on-disk stages.
    pub out: PathBuf,
    pub scene: SceneConfig,
    pub coarse: DetectorModel,
    pub fine: DetectorModel,
    pub regressor: RegressorConfig,
    pub rl: RLConfig,
    pub episode: EpisodeConfig,
    pub qnet: QNetConfig,
    pub grid: GridConfig,
    pub eval: EvalConfig,
    pub time_model: TimeModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out: PathBuf::from("runs/default"),
            scene: SceneConfig::default(),
            coarse: DetectorModel::coarse_default(),
            fine: DetectorModel::fine_default(),
            regressor: RegressorConfig::default(),
            rl: RLConfig::default(),
            episode: EpisodeConfig::default(),
            qnet: QNetConfig::default(),
            grid: GridConfig::default(),
            eval: EvalConfig::default(),
            time_model: TimeModel::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every sub-configuration; run before any stage.
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.coarse.validate()?;
        self.fine.validate()?;
        self.rl.validate()?;
        self.episode.validate()?;
        if self.coarse.feature_dim != self.fine.feature_dim {
            return Err(Error::Config("coarse and fine feature_dim differ".into()));
        }
        let grid = self.action_grid()?;
        let (mw, mh) = self.map_dims();
        QNetwork::new(&grid, mw, mh, 1.0 / self.episode.coarse_scale, &self.qnet, self.rl.target_lag, 0)?;
        for s in &self.eval.strategies {
            Strategy::parse(s)?;
        }
        if self.eval.budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Config("budgets must be positive percentages".into()));
        }
        if self.regressor.batch_size == 0 || self.regressor.hidden == 0 {
            return Err(Error::Config("regressor batch_size and hidden must be positive".into()));
        }
        Ok(())
    }

    pub fn action_grid(&self) -> Result<ActionGrid> {
        build_action_grid(self.scene.width, self.scene.height, &self.grid.windows)
    }

    pub fn map_dims(&self) -> (usize, usize) {
        let s = self.episode.coarse_scale;
        ((self.scene.width as f64 * s).round() as usize, (self.scene.height as f64 * s).round() as usize)
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        self.eval.strategies.iter().map(|s| Strategy::parse(s)).collect()
    }
}

/// Which Q-network a strategy needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QVariant {
    /// Regressor AG map, cost-aware reward.
    Rnet,
    /// Entropy AG map.
    Er,
    /// Regressor AG map, `λ = 0`.
    NoCost,
}

impl QVariant {
    pub const ALL: [QVariant; 3] = [QVariant::Rnet, QVariant::Er, QVariant::NoCost];

    pub fn stem(self) -> &'static str {
        match self {
            QVariant::Rnet => "qnet-rnet",
            QVariant::Er => "qnet-er",
            QVariant::NoCost => "qnet-rnet-nocost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    FineAll,
    CoarseAll,
    GsRnet,
    QnetRnet,
    QnetRnetNoRefine,
    QnetEr,
    QnetRnetNoCost,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::FineAll,
        Strategy::CoarseAll,
        Strategy::GsRnet,
        Strategy::QnetRnet,
        Strategy::QnetRnetNoRefine,
        Strategy::QnetEr,
        Strategy::QnetRnetNoCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FineAll => "fine-all",
            Strategy::CoarseAll => "coarse-all",
            Strategy::GsRnet => "gs+rnet",
            Strategy::QnetRnet => "qnet+rnet",
            Strategy::QnetRnetNoRefine => "qnet+rnet-norefine",
            Strategy::QnetEr => "qnet+er",
            Strategy::QnetRnetNoCost => "qnet+rnet-nocost",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|s| s.name() == name.trim())
            .ok_or_else(|| Error::Config(format!("unknown strategy {name:?}")))
    }

    pub fn qvariant(self) -> Option<QVariant> {
        match self {
            Strategy::QnetRnet | Strategy::QnetRnetNoRefine => Some(QVariant::Rnet),
            Strategy::QnetEr => Some(QVariant::Er),
            Strategy::QnetRnetNoCost => Some(QVariant::NoCost),
            _ => None,
        }
    }

    pub fn needs_regressor(self) -> bool {
        matches!(self, Strategy::GsRnet | Strategy::QnetRnet | Strategy::QnetRnetNoRefine | Strategy::QnetRnetNoCost)
    }

    pub fn capped(self) -> bool {
        !matches!(self, Strategy::FineAll | Strategy::CoarseAll)
    }
}

fn split_seed(seed: u64, split: &str, index: usize) -> u64 {
    seed::mix_all(&[seed, seed::label_hash(split), index as u64])
}

pub fn generate_split(config: &ExperimentConfig, seed: u64, split: &str, count: usize) -> Result<Vec<Scene>> {
    (0..count).map(|i| generate_scene(&config.scene, split_seed(seed, split, i))).collect()
}

pub fn train_rnet(config: &ExperimentConfig, train: &[Scene], seed: u64) -> Result<GainRegressor> {
    let data = build_training_set(train, &config.coarse, &config.fine, config.episode.coarse_scale)?;
    let rc = RegressorConfig { seed: seed::derive(seed, "rnet") ^ config.regressor.seed, ..config.regressor.clone() };
    train_regressor(&data, &rc)
}

pub fn episode_config_for(config: &ExperimentConfig, variant: QVariant) -> EpisodeConfig {
    let mut e = config.episode.clone();
    if variant == QVariant::NoCost {
        e.lambda = 0.0;
    }
    e
}

pub fn train_qnet(
    config: &ExperimentConfig,
    variant: QVariant,
    train: &[Scene],
    regressor: &GainRegressor,
    seed: u64,
) -> Result<(QNetwork, TrainingLog)> {
    let episode = episode_config_for(config, variant);
    let gain = match variant {
        QVariant::Er => GainSource::Entropy,
        _ => GainSource::Regressor(regressor),
    };
    let stream = seed::derive(seed, variant.stem()) ^ config.rl.seed;
    let rl = RLConfig {
        max_steps: episode.max_steps,
        refine: episode.refine,
        mu_factor: episode.mu_factor,
        mask_repeats: episode.mask_repeats,
        seed: stream,
        ..config.rl.clone()
    };
    let grid = config.action_grid()?;
    let (mw, mh) = config.map_dims();
    let q = QNetwork::new(&grid, mw, mh, 1.0 / episode.coarse_scale, &config.qnet, rl.target_lag, stream)?;
    let mut env = SceneEnv::new(train, &config.coarse, &config.fine, gain, &episode)?;
    q_learning_train(&mut env, q, &rl)
}

/// Regressor plus whichever Q-networks have been trained.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub regressor: Option<GainRegressor>,
    pub qnets: BTreeMap<QVariant, QNetwork>,
}

/// Evaluation of one strategy on one scene set. Capped strategies carry one
/// entry per step cap `0..=max_steps`.
#[derive(Debug, Clone)]
pub struct StrategyEval {
    pub strategy: Strategy,
    pub curve: Vec<Percentages>,
    pub aggregates: Vec<RunAggregate>,
    pub episodes: Vec<EpisodeResult>,
}

fn missing(strategy: Strategy, what: &str) -> Error {
    Error::Config(format!("strategy {} needs {what}, which has not been trained", strategy.name()))
}

/// Runs every strategy over `test`. Percentages are relative to a fine-all
/// pass over the same scenes, computed whether or not fine-all is listed.
pub fn evaluate(config: &ExperimentConfig, test: &[Scene], models: &Models, strategies: &[Strategy]) -> Result<Vec<StrategyEval>> {
    let gts: Vec<&[GroundTruthObject]> = test.iter().map(|s| s.objects.as_slice()).collect();
    let single_pass = |model: &DetectorModel, scale: f64| -> Result<RunAggregate> {
        let mut outs: Vec<(Vec<Detection>, CostLedger)> = Vec::new();
        for s in test {
            let mut ledger = CostLedger::new();
            let d = run_detector(model, s, &s.frame(), scale, &mut ledger)?;
            outs.push((d, ledger));
        }
        let refs: Vec<(&[Detection], &CostLedger)> = outs.iter().map(|(d, l)| (d.as_slice(), l)).collect();
        aggregate(&refs, &gts, &config.time_model)
    };
    let fine = single_pass(&config.fine, 1.0)?;
    let grid = config.action_grid()?;
    let mut out = Vec::new();
    for &strategy in strategies {
        let (aggregates, episodes) = match strategy {
            Strategy::FineAll => (vec![fine.clone()], Vec::new()),
            Strategy::CoarseAll => (vec![single_pass(&config.coarse, config.episode.coarse_scale)?], Vec::new()),
            _ => {
                let regressor = models.regressor.as_ref();
                let gain = match strategy {
                    Strategy::QnetEr => GainSource::Entropy,
                    _ => GainSource::Regressor(regressor.ok_or_else(|| missing(strategy, "the gain regressor"))?),
                };
                let policy = match strategy.qvariant() {
                    Some(v) => Policy::QNet(models.qnets.get(&v).ok_or_else(|| missing(strategy, v.stem()))?),
                    None => Policy::Greedy,
                };
                let mut episode = match strategy.qvariant() {
                    Some(v) => episode_config_for(config, v),
                    None => config.episode.clone(),
                };
                if strategy == Strategy::QnetRnetNoRefine {
                    episode.refine = false;
                }
                let episodes = test
                    .iter()
                    .map(|s| run_episode(policy, s, &config.coarse, &config.fine, gain, &grid, &episode))
                    .collect::<Result<Vec<_>>>()?;
                let mut aggs = Vec::new();
                for k in 0..=config.episode.max_steps {
                    let cut: Vec<EpisodeResult> = episodes.iter().map(|e| e.truncated(k)).collect();
                    let refs: Vec<(&[Detection], &CostLedger)> =
                        cut.iter().map(|e| (e.detections.as_slice(), &e.ledger)).collect();
                    aggs.push(aggregate(&refs, &gts, &config.time_model)?);
                }
                (aggs, episodes)
            }
        };
        let curve = aggregates.iter().map(|a| compute_percentages(a, &fine)).collect::<Result<Vec<_>>>()?;
        out.push(StrategyEval { strategy, curve, aggregates, episodes });
    }
    Ok(out)
}

/// Everything one replicate seed produces.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub seed: u64,
    pub evals: Vec<StrategyEval>,
    pub models: Models,
    pub rnet_mse: Vec<f64>,
    pub training: BTreeMap<QVariant, TrainingLog>,
    pub seconds: f64,
}

pub fn required_variants(strategies: &[Strategy]) -> Vec<QVariant> {
    let mut v: Vec<QVariant> = strategies.iter().filter_map(|s| s.qvariant()).collect();
    v.sort();
    v.dedup();
    v
}

/// Generate, train and evaluate one replicate in memory.
pub fn run_replicate(config: &ExperimentConfig, seed: u64, strategies: &[Strategy]) -> Result<Replicate> {
    config.validate()?;
    let started = Instant::now();
    let train = generate_split(config, seed, "train", config.eval.train_scenes)?;
    let test = generate_split(config, seed, "test", config.eval.test_scenes)?;
    let mut models = Models::default();
    let mut rnet_mse = Vec::new();
    if strategies.iter().any(|s| s.needs_regressor() || s.qvariant().is_some()) {
        let r = train_rnet(config, &train, seed)?;
        rnet_mse = r.mse_curve.clone();
        models.regressor = Some(r);
    }
    let mut training = BTreeMap::new();
    for v in required_variants(strategies) {
        let regressor = models.regressor.as_ref().ok_or(Error::EmptyData)?;
        let (q, log) = train_qnet(config, v, &train, regressor, seed)?;
        models.qnets.insert(v, q);
        training.insert(v, log);
    }
    let evals = evaluate(config, &test, &models, strategies)?;
    Ok(Replicate { seed, evals, models, rnet_mse, training, seconds: started.elapsed().as_secs_f64() })
}

/// Report rows from replicate evaluations (one curve per strategy, one
/// entry per replicate).
pub fn sweep_rows(replicates: &[Replicate], strategies: &[Strategy], budgets: &[f64]) -> Vec<ReportRow> {
    let curves: Vec<StrategyCurve> = strategies
        .iter()
        .map(|&s| StrategyCurve {
            name: s.name().to_string(),
            capped: s.capped(),
            per_seed: replicates
                .iter()
                .filter_map(|r| r.evals.iter().find(|e| e.strategy == s).map(|e| e.curve.clone()))
                .collect(),
        })
        .collect();
    budget_sweep(&curves, budgets)
}

// ---- on-disk stages ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn scenes_dir(out: &Path) -> PathBuf {
    out.join("scenes")
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

/// Writes `train` and `test` scene files plus `manifest.json`.
pub fn gen_scenes_stage(config: &ExperimentConfig, seed: u64, train: usize, test: usize, out: &Path) -> Result<Manifest> {
    config.validate()?;
    let root = scenes_dir(out);
    let mut manifest = Manifest { seed, train: Vec::new(), test: Vec::new() };
    for (split, count) in [("train", train), ("test", test)] {
        let dir = root.join(split);
        ensure_dir(&dir)?;
        for (i, scene) in generate_split(config, seed, split, count)?.iter().enumerate() {
            let name = format!("{split}/scene_{i:05}.jsonl");
            save_records(&root.join(&name), &scene_records(i, scene))?;
            if split == "train" {
                manifest.train.push(name);
            } else {
                manifest.test.push(name);
            }
        }
    }
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(root.join("manifest.json"), text)?;
    Ok(manifest)
}

pub fn load_split(out: &Path, split: &str) -> Result<Vec<Scene>> {
    let root = scenes_dir(out);
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e} (run gen-scenes first)", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let files = if split == "train" { &manifest.train } else { &manifest.test };
    files
        .iter()
        .map(|f| Ok(scene_from_records(&load_records(&root.join(f))?)?.1))
        .collect()
}

fn manifest_seed(out: &Path) -> Result<u64> {
    let text = fs::read_to_string(scenes_dir(out).join("manifest.json"))
        .map_err(|e| Error::Config(format!("scene manifest: {e} (run gen-scenes first)")))?;
    Ok(serde_json::from_str::<Manifest>(&text)?.seed)
}

pub fn train_rnet_stage(config: &ExperimentConfig, out: &Path) -> Result<GainRegressor> {
    config.validate()?;
    let seed = manifest_seed(out)?;
    let train = load_split(out, "train")?;
    let r = train_rnet(config, &train, seed)?;
    ensure_dir(&models_dir(out))?;
    ensure_dir(&out.join("logs"))?;
    save_weights(r.network(), &models_dir(out).join("rnet.bin"))?;
    let mut csv = String::from("epoch,mse\n");
    for (i, m) in r.mse_curve.iter().enumerate() {
        let _ = writeln!(csv, "{},{m:.8}", i + 1);
    }
    fs::write(out.join("logs").join("rnet_mse.csv"), csv)?;
    Ok(r)
}

pub fn load_rnet(out: &Path) -> Result<GainRegressor> {
    let path = models_dir(out).join("rnet.bin");
    if !path.exists() {
        return Err(Error::Config(format!("{} missing (run train-rnet first)", path.display())));
    }
    GainRegressor::from_network(load_weights(&path)?)
}

fn qnet_paths(out: &Path, v: QVariant) -> (PathBuf, PathBuf) {
    let dir = models_dir(out);
    (dir.join(format!("{}.bin", v.stem())), dir.join(format!("{}.txt", v.stem())))
}

pub fn train_qnet_stage(config: &ExperimentConfig, out: &Path, variants: &[QVariant]) -> Result<Vec<(QVariant, TrainingLog)>> {
    config.validate()?;
    let seed = manifest_seed(out)?;
    let train = load_split(out, "train")?;
    let regressor = load_rnet(out)?;
    ensure_dir(&out.join("logs"))?;
    let mut logs = Vec::new();
    for &v in variants {
        let (q, log) = train_qnet(config, v, &train, &regressor, seed)?;
        let (w, s) = qnet_paths(out, v);
        q.save(&w, &s)?;
        let mut curve = String::from("update,loss\n");
        for (i, l) in log.losses.iter().enumerate() {
            let _ = writeln!(curve, "{},{l:.8}", i + 1);
        }
        fs::write(out.join("logs").join(format!("{}_loss.csv", v.stem())), curve)?;
        let mut returns = String::from("episode,epoch,epsilon,return\n");
        let per_epoch = train.len().max(1);
        for (i, r) in log.episode_returns.iter().enumerate() {
            let epoch = i / per_epoch;
            let _ = writeln!(returns, "{},{},{:.2},{r:.8}", i + 1, epoch + 1, log.epsilons[epoch]);
        }
        fs::write(out.join("logs").join(format!("{}_returns.csv", v.stem())), returns)?;
        logs.push((v, log));
    }
    Ok(logs)
}

pub fn load_models(config: &ExperimentConfig, out: &Path, strategies: &[Strategy]) -> Result<Models> {
    let mut models = Models::default();
    if strategies.iter().any(|s| s.needs_regressor()) {
        models.regressor = Some(load_rnet(out)?);
    }
    for v in required_variants(strategies) {
        let (w, s) = qnet_paths(out, v);
        if !w.exists() {
            let users: Vec<&str> = strategies.iter().filter(|s| s.qvariant() == Some(v)).map(|s| s.name()).collect();
            return Err(Error::Config(format!(
                "strategy {} needs {} (run train-qnet first)",
                users.join(", "),
                w.display()
            )));
        }
        let q = QNetwork::load(&w, &s, config.rl.target_lag)?;
        if q.grid() != &config.action_grid()? {
            return Err(Error::Config(format!("{} was trained on a different action grid", w.display())));
        }
        models.qnets.insert(v, q);
    }
    Ok(models)
}

/// Written reports of one evaluation.
#[derive(Debug, Clone)]
pub struct Reports {
    pub rows: Vec<ReportRow>,
    pub csv: String,
    pub json: String,
}

fn write_reports(out: &Path, stem: &str, rows: Vec<ReportRow>) -> Result<Reports> {
    let dir = out.join("reports");
    ensure_dir(&dir)?;
    let csv = report_csv(&rows)?;
    let json = report_json(&rows)?;
    fs::write(dir.join(format!("{stem}.csv")), &csv)?;
    fs::write(dir.join(format!("{stem}.json")), &json)?;
    Ok(Reports { rows, csv, json })
}

fn timing_json(replicates: &[Replicate]) -> Result<String> {
    let mut m = serde_json::Map::new();
    for r in replicates {
        let mut per = serde_json::Map::new();
        per.insert("pipeline_seconds".into(), serde_json::json!(r.seconds));
        for e in &r.evals {
            let wall: f64 = e.aggregates.last().map_or(0.0, |a| a.wall_time);
            per.insert(format!("{}_detector_wall_seconds", e.strategy.name()), serde_json::json!(wall));
        }
        m.insert(format!("seed_{}", r.seed), serde_json::Value::Object(per));
    }
    Ok(serde_json::to_string_pretty(&m)?)
}

/// Evaluates trained models from `out` on its test scenes.
pub fn evaluate_stage(config: &ExperimentConfig, out: &Path, strategies: &[Strategy], budgets: &[f64]) -> Result<Reports> {
    config.validate()?;
    let started = Instant::now();
    let seed = manifest_seed(out)?;
    let test = load_split(out, "test")?;
    let models = load_models(config, out, strategies)?;
    let evals = evaluate(config, &test, &models, strategies)?;
    let mut episodes = Vec::new();
    for e in &evals {
        for (i, ep) in e.episodes.iter().enumerate() {
            episodes.push(episode_record(i, e.strategy.name(), ep));
        }
    }
    ensure_dir(&out.join("reports"))?;
    save_records(&out.join("reports").join("episodes.jsonl"), &episodes)?;
    let rep = Replicate { seed, evals, models, rnet_mse: Vec::new(), training: BTreeMap::new(), seconds: started.elapsed().as_secs_f64() };
    ensure_dir(&out.join("logs"))?;
    fs::write(out.join("logs").join("evaluate_timing.json"), timing_json(std::slice::from_ref(&rep))?)?;
    write_reports(out, "report", sweep_rows(std::slice::from_ref(&rep), strategies, budgets))
}

/// Full multi-seed pipeline in memory; writes `reports/sweep.{csv,json}`.
pub fn sweep_stage(config: &ExperimentConfig, out: &Path, strategies: &[Strategy], budgets: &[f64]) -> Result<(Reports, Vec<Replicate>)> {
    config.validate()?;
    let replicates = config
        .eval
        .seeds
        .iter()
        .map(|&s| run_replicate(config, s, strategies))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(&out.join("logs"))?;
    fs::write(out.join("logs").join("sweep_timing.json"), timing_json(&replicates)?)?;
    let reports = write_reports(out, "sweep", sweep_rows(&replicates, strategies, budgets))?;
    Ok((reports, replicates))
}
