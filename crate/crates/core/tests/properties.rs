mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoomin::experiment::ExperimentConfig;
use zoomin::geom::{iou, BBox, Detection, GroundTruthObject, Source};
use zoomin::metrics::average_precision;
use zoomin::policy::{run_episode_observed, EpisodeConfig, EpisodeState, GainSource, Policy, QNetwork, StepView};
use zoomin::sim::generate_scene;

fn boxes(n: usize) -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..8, 0u8..3), 0..=n)
}

fn at((x, y): (u8, u8)) -> BBox {
    BBox::new(x as f64 * 4.0, y as f64 * 5.0, 10.0, 20.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, input) = loop {
            let (net, input) = common::random_network(&mut rng, 2000);
            if common::relu_margin(&net, &input) > 1e-3 {
                break (net, input);
            }
        };
        let err = common::gradient_check(&net, &input, &mut rng, 1e-5);
        prop_assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn ap_equals_brute_force(gts in boxes(4), dets in boxes(6), scores in prop::collection::vec(0u8..5, 6)) {
        let gts: Vec<GroundTruthObject> = gts.into_iter().map(|p| GroundTruthObject { bbox: at(p), object_class: "person".into() }).collect();
        let dets: Vec<Detection> = dets
            .into_iter()
            .zip(scores)
            .map(|(p, s)| Detection { bbox: at(p), score: s as f64 / 4.0, feature: vec![], source: Source::Fine })
            .collect();
        prop_assert_eq!(average_precision(&dets, &gts, 0.5), common::oracle_ap(&dets, &gts));
    }
}

#[test]
fn rewards_equal_replacement_bookkeeping() {
    let cfg = ExperimentConfig::default();
    let grid = cfg.action_grid().unwrap();
    let episode = EpisodeConfig { lambda: 0.0, ..cfg.episode.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..40 {
        let scene = generate_scene(&cfg.scene, 500 + i).unwrap();
        let mut state = EpisodeState::start(&scene, &cfg.coarse, &cfg.fine, GainSource::Entropy, &episode).unwrap();
        for _ in 0..rng.random_range(1..=6) {
            state.zoom(&grid.action(rng.random_range(0..grid.len()))).unwrap();
        }
        let result = state.finish(Vec::new());
        let oracle = common::replacement_sums(&result, &scene.objects);
        for (r, o) in result.rewards.iter().zip(&oracle) {
            assert!((r - o).abs() <= 1e-9, "scene {i}: {r} vs {o}");
        }
    }
}

#[test]
fn cost_term_shifts_reward_by_window_fraction() {
    let cfg = ExperimentConfig::default();
    let grid = cfg.action_grid().unwrap();
    let scene = generate_scene(&cfg.scene, 77).unwrap();
    let run = |lambda: f64| {
        let episode = EpisodeConfig { lambda, ..cfg.episode.clone() };
        let mut s = EpisodeState::start(&scene, &cfg.coarse, &cfg.fine, GainSource::Entropy, &episode).unwrap();
        (0..grid.len()).step_by(3).map(|a| s.zoom(&grid.action(a)).unwrap()).collect::<Vec<_>>()
    };
    let (free, paid) = (run(0.0), run(2.0));
    let frame = (scene.width * scene.height) as f64;
    for ((f, p), a) in free.iter().zip(&paid).zip((0..grid.len()).step_by(3)) {
        assert!((f - p - 2.0 * grid.action(a).bbox.area() / frame).abs() < 1e-12);
    }
}

fn check_episode_invariants(policy: Policy<'_>, gain: GainSource<'_>, refine: bool) -> (usize, usize) {
    let cfg = ExperimentConfig::default();
    let grid = cfg.action_grid().unwrap();
    let episode = EpisodeConfig { refine, ..cfg.episode.clone() };
    let (mut steps, mut moved) = (0, 0);
    for i in 0..25 {
        let scene = generate_scene(&cfg.scene, 1_000 + i).unwrap();
        let mut taken: Vec<BBox> = Vec::new();
        let mut observe = |v: &StepView<'_>| {
            steps += 1;
            moved += usize::from(v.refined != v.proposed);
            assert!(v.before.region_sum(&v.refined.bbox) >= v.before.region_sum(&v.proposed.bbox));
            assert!(taken.iter().all(|t| iou(t, &v.refined.bbox) < 1.0));
            taken.push(v.refined.bbox);
            assert!(taken.iter().all(|t| v.after.region_sum(t) == 0.0));
        };
        run_episode_observed(policy, &scene, &cfg.coarse, &cfg.fine, gain, &grid, &episode, &mut observe).unwrap();
    }
    (steps, moved)
}

#[test]
fn greedy_episodes_keep_refinement_and_no_repeat_invariants() {
    let (steps, moved) = check_episode_invariants(Policy::Greedy, GainSource::Entropy, true);
    assert!(steps > 25 && moved > 0, "{steps} steps, {moved} refined");
}

#[test]
fn untrained_qnet_episodes_keep_invariants() {
    let cfg = ExperimentConfig::default();
    let (w, h) = cfg.map_dims();
    let q = QNetwork::new(&cfg.action_grid().unwrap(), w, h, 2.0, &cfg.qnet, 10, 5).unwrap();
    for refine in [true, false] {
        let (steps, moved) = check_episode_invariants(Policy::QNet(&q), GainSource::Entropy, refine);
        assert!(steps > 0);
        assert_eq!(moved == 0, !refine || steps == 0);
    }
}
