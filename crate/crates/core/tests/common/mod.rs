//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::Rng;
use zoomin::geom::{BBox, Detection, GroundTruthObject};
use zoomin::nn::{Layer, Network, Tensor};
use zoomin::policy::EpisodeResult;

// ---- gradients ----

/// Random small dense or conv network (at most `max_params` parameters) with
/// random biases, and a random input.
pub fn random_network<R: Rng>(rng: &mut R, max_params: usize) -> (Network, Tensor) {
    loop {
        let (shape, layers) = if rng.random_bool(0.5) {
            let mut width = rng.random_range(2..=16);
            let shape = vec![width];
            let mut layers = Vec::new();
            for _ in 0..rng.random_range(1..=3) {
                let next = rng.random_range(2..=32);
                layers.push(Layer::Dense { inputs: width, outputs: next });
                layers.push(Layer::Relu);
                width = next;
            }
            layers.push(Layer::Dense { inputs: width, outputs: rng.random_range(1..=4) });
            (shape, layers)
        } else {
            let c = rng.random_range(1..=3);
            let (h, w) = (rng.random_range(6..=14), rng.random_range(6..=14));
            let mut shape = vec![c, h, w];
            let mut layers = Vec::new();
            for _ in 0..rng.random_range(1..=2) {
                let k = rng.random_range(2..=3);
                let s = rng.random_range(1..=2);
                if shape[1] < k || shape[2] < k {
                    break;
                }
                let out = rng.random_range(2..=6);
                layers.push(Layer::Conv2d {
                    in_channels: shape[0],
                    out_channels: out,
                    kernel_h: k,
                    kernel_w: k,
                    stride_h: s,
                    stride_w: s,
                });
                layers.push(Layer::Relu);
                shape = vec![out, (shape[1] - k) / s + 1, (shape[2] - k) / s + 1];
            }
            let flat = shape.iter().product();
            layers.push(Layer::Dense { inputs: flat, outputs: rng.random_range(1..=3) });
            (vec![c, h, w], layers)
        };
        let Ok(mut net) = Network::new(&shape, layers, rng) else { continue };
        if net.param_count() > max_params {
            continue;
        }
        for (i, p) in net.params_mut().iter_mut().enumerate() {
            if i % 2 == 1 {
                p.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            }
        }
        let n: usize = shape.iter().product();
        let input = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        return (net, input);
    }
}

/// Smallest |pre-activation| over every relu of `net` at `input`.
pub fn relu_margin(net: &Network, input: &Tensor) -> f64 {
    let layers = net.layers();
    let mut margin = f64::INFINITY;
    let mut nparams = 0;
    for (i, l) in layers.iter().enumerate() {
        if matches!(l, Layer::Relu) {
            let prefix = Network::from_parts(net.input_shape(), layers[..i].to_vec(), net.params()[..nparams].to_vec()).unwrap();
            let z = prefix.predict(input).unwrap();
            margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
        } else {
            nparams += 2;
        }
    }
    margin
}

fn weighted_output(net: &Network, input: &Tensor, weights: &[f64]) -> f64 {
    net.predict(input).unwrap().data().iter().zip(weights).map(|(o, c)| o * c).sum()
}

/// Worst relative error between backprop and central differences of the
/// loss `Σ c·output`, over every parameter and input coordinate.
pub fn gradient_check<R: Rng>(net: &Network, input: &Tensor, rng: &mut R, h: f64) -> f64 {
    let outs: usize = net.output_shape().iter().product();
    let c: Vec<f64> = (0..outs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (y, trace) = net.forward(input).unwrap();
    let grads = net.backward(&trace, &Tensor::new(y.shape().to_vec(), c.clone()).unwrap()).unwrap();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for t in 0..net.params().len() {
        for i in 0..net.params()[t].len() {
            let base = net.params()[t].data()[i];
            probe.params_mut()[t].data_mut()[i] = base + h;
            let up = weighted_output(&probe, input, &c);
            probe.params_mut()[t].data_mut()[i] = base - h;
            let down = weighted_output(&probe, input, &c);
            probe.params_mut()[t].data_mut()[i] = base;
            worst = worst.max(rel(grads.params[t].data()[i], (up - down) / (2.0 * h)));
        }
    }
    let mut x = input.clone();
    for i in 0..x.len() {
        let base = x.data()[i];
        x.data_mut()[i] = base + h;
        let up = weighted_output(net, &x, &c);
        x.data_mut()[i] = base - h;
        let down = weighted_output(net, &x, &c);
        x.data_mut()[i] = base;
        worst = worst.max(rel(grads.input.data()[i], (up - down) / (2.0 * h)));
    }
    worst
}

// ---- average precision ----

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let i = w * h;
    i / (a.w * a.h + b.w * b.h - i)
}

/// Brute-force AP: TP flags by rank-ordered matching to the best unmatched
/// groundtruth, then for each rank prefix the best precision over all longer
/// prefixes, summed over recall increments.
pub fn oracle_ap(dets: &[Detection], gts: &[GroundTruthObject]) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    let mut hits = Vec::new();
    for &i in &idx {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..gts.len() {
            let o = overlap(&dets[i].bbox, &gts[j].bbox);
            if !used[j] && o >= 0.5 && best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
        }
        hits.push(best.is_some());
    }
    let n = hits.len();
    let pr = |k: usize| {
        let tp = hits[..k].iter().filter(|h| **h).count() as f64;
        (tp / k as f64, tp / gts.len() as f64)
    };
    let mut ap = 0.0;
    let mut prev = 0.0;
    for k in 1..=n {
        let (_, r) = pr(k);
        let best_p = (k..=n).map(|m| pr(m).0).fold(0.0, f64::max);
        ap += (r - prev) * best_p;
        prev = r;
    }
    ap
}

// ---- reward bookkeeping ----

fn center_inside(window: &BBox, b: &BBox) -> bool {
    let (cx, cy) = (b.x + b.w / 2.0, b.y + b.h / 2.0);
    cx >= window.x && cx < window.x + window.w && cy >= window.y && cy < window.y + window.h
}

/// One-to-one matching by repeatedly taking the globally best free pair
/// with IoU > 0.5 (ties to the lowest indices).
fn oracle_match(a: &[&Detection], b: &[Detection]) -> Vec<Option<usize>> {
    let mut out = vec![None; a.len()];
    let mut b_used = vec![false; b.len()];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, x) in a.iter().enumerate() {
            if out[i].is_some() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                let o = overlap(&x.bbox, &y.bbox);
                if !b_used[j] && o > 0.5 && best.is_none_or(|(bo, _, _)| o > bo) {
                    best = Some((o, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { return out };
        out[i] = Some(j);
        b_used[j] = true;
    }
}

/// Per-zoom `Σ (|g − p_l| − |g − p_h|)` recomputed from the episode's coarse
/// detections, zoom windows and window detections: each coarse proposal
/// counts once, at the first window containing its center.
pub fn replacement_sums(result: &EpisodeResult, gts: &[GroundTruthObject]) -> Vec<f64> {
    let mut replaced = vec![false; result.coarse.len()];
    let label = |d: &Detection| {
        let best = gts.iter().map(|g| overlap(&d.bbox, &g.bbox)).fold(0.0, f64::max);
        if best >= 0.5 { 1.0 } else { 0.0 }
    };
    result
        .zoom_trail
        .iter()
        .zip(&result.window_detections)
        .map(|(win, fine)| {
            let inside: Vec<usize> =
                (0..result.coarse.len()).filter(|&k| !replaced[k] && center_inside(&win.bbox, &result.coarse[k].bbox)).collect();
            let subset: Vec<&Detection> = inside.iter().map(|&k| &result.coarse[k]).collect();
            let matched = oracle_match(&subset, fine);
            let mut total = 0.0;
            for (n, &k) in inside.iter().enumerate() {
                replaced[k] = true;
                let c = &result.coarse[k];
                let g = label(c);
                let p_h = matched[n].map_or(0.0, |j| fine[j].score);
                total += (g - c.score).abs() - (g - p_h).abs();
            }
            total
        })
        .collect()
}
