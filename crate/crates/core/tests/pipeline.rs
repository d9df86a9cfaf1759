use zoomin::experiment::{
    evaluate, generate_split, run_replicate, sweep_rows, train_qnet, train_rnet, ExperimentConfig, Models, QVariant,
    Strategy,
};
use zoomin::policy::{run_episode, GainSource, Policy};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.eval.train_scenes = 12;
    cfg.eval.test_scenes = 12;
    cfg.rl.epochs = 4;
    cfg
}

#[test]
fn cost_dominated_policy_stops_without_zooming() {
    let mut cfg = small();
    cfg.episode.lambda = 60.0;
    let train = generate_split(&cfg, 3, "train", cfg.eval.train_scenes).unwrap();
    let test = generate_split(&cfg, 3, "test", cfg.eval.test_scenes).unwrap();
    let rnet = train_rnet(&cfg, &train, 3).unwrap();
    let (q, _) = train_qnet(&cfg, QVariant::Rnet, &train, &rnet, 3).unwrap();
    let grid = cfg.action_grid().unwrap();
    let zooms = |value_stop: bool| -> usize {
        let episode = zoomin::policy::EpisodeConfig { value_stop, ..cfg.episode.clone() };
        test.iter()
            .map(|s| {
                run_episode(Policy::QNet(&q), s, &cfg.coarse, &cfg.fine, GainSource::Regressor(&rnet), &grid, &episode)
                    .unwrap()
                    .zoom_trail
                    .len()
            })
            .sum()
    };
    assert!(zooms(false) > 0);
    assert_eq!(zooms(true), 0);
}

#[test]
fn capped_curves_grow_with_the_step_cap() {
    let cfg = small();
    let strategies = [Strategy::FineAll, Strategy::CoarseAll, Strategy::GsRnet, Strategy::QnetRnet];
    let rep = run_replicate(&cfg, 2, &strategies).unwrap();
    let fine = &rep.evals[0].curve[0];
    assert_eq!((fine.a_perc, fine.p_perc, fine.t_perc), (100.0, 100.0, 100.0));
    assert_eq!(rep.evals[1].curve[0].p_perc, 25.0);
    for e in &rep.evals[2..] {
        assert_eq!(e.curve.len(), cfg.episode.max_steps + 1);
        assert_eq!(e.curve[0], rep.evals[1].curve[0]);
        for w in e.curve.windows(2) {
            assert!(w[1].p_perc >= w[0].p_perc);
            assert!(w[1].t_perc >= w[0].t_perc);
        }
        for (k, agg) in e.aggregates.iter().enumerate() {
            let steps: usize = e.episodes.iter().map(|ep| ep.zoom_trail.len().min(k)).sum();
            assert!(agg.pixels >= (cfg.scene.width * cfg.scene.height / 4) as u64 * e.episodes.len() as u64);
            assert!(steps <= k * e.episodes.len());
        }
    }
    let rows = sweep_rows(std::slice::from_ref(&rep), &strategies, &cfg.eval.budgets);
    assert_eq!(rows.len(), 2 + 2 * cfg.eval.budgets.len());
    for r in rows.iter().filter(|r| r.values.is_some()) {
        if let Ok(b) = r.budget.parse::<f64>() {
            if r.strategy != "fine-all" && r.strategy != "coarse-all" {
                assert!(r.values.unwrap().p_perc <= b + 1e-9);
            }
        }
    }
}

#[test]
fn evaluation_is_deterministic_and_needs_its_models() {
    let cfg = small();
    let test = generate_split(&cfg, 4, "test", 6).unwrap();
    let err = evaluate(&cfg, &test, &Models::default(), &[Strategy::QnetEr]).unwrap_err().to_string();
    assert!(err.contains("qnet+er"), "{err}");
    let a = run_replicate(&cfg, 4, &[Strategy::QnetRnet]).unwrap();
    let b = run_replicate(&cfg, 4, &[Strategy::QnetRnet]).unwrap();
    assert_eq!(a.evals[0].curve, b.evals[0].curve);
    for (x, y) in a.evals[0].episodes.iter().zip(&b.evals[0].episodes) {
        assert_eq!((&x.zoom_trail, &x.detections, &x.rewards), (&y.zoom_trail, &y.detections, &y.rewards));
        assert_eq!(x.ledger.pixels_processed, y.ledger.pixels_processed);
    }
}
