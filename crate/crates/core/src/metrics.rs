//! Average precision, cost ratios against the fine-detection-all baseline,
//! and budget-bucketed report tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{iou, Detection, GroundTruthObject};
use crate::sim::{CostLedger, TimeModel};

pub const AP_IOU: f64 = 0.5;

/// Ranks detections by score (ties by index) and greedily marks each as a
/// true positive if some unmatched groundtruth overlaps it at `iou ≥
/// threshold`; the best-overlapping unmatched groundtruth is consumed.
fn mark_true_positives(dets: &[Detection], gt: &[GroundTruthObject], threshold: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut used = vec![false; gt.len()];
    order
        .into_iter()
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gt.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let o = iou(&dets[i].bbox, &g.bbox);
                if o >= threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            if let Some((j, _)) = best {
                used[j] = true;
            }
            (dets[i].score, best.is_some())
        })
        .collect()
}

/// All-points interpolated AP over a ranked TP/FP list.
fn ap_from_ranked(mut ranked: Vec<(f64, bool)>, total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 0.0;
    }
    // Stable: equal scores keep their incoming order.
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (i, &(_, hit)) in ranked.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// AP of one image. With no groundtruth the AP is 0.
pub fn average_precision(dets: &[Detection], gt: &[GroundTruthObject], iou_threshold: f64) -> f64 {
    ap_from_ranked(mark_true_positives(dets, gt, iou_threshold), gt.len())
}

/// AP over a set of images: matching is per image, ranking is global (ties
/// by image, then detection index).
pub fn dataset_average_precision(images: &[(&[Detection], &[GroundTruthObject])], iou_threshold: f64) -> f64 {
    let mut ranked = Vec::new();
    let mut total_gt = 0;
    for (dets, gt) in images {
        let mut marks = mark_true_positives(dets, gt, iou_threshold);
        // Restore detection-index order inside the image for global tie-breaks.
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
        let mut by_index = vec![(0.0, false); dets.len()];
        for (rank, i) in order.into_iter().enumerate() {
            by_index[i] = std::mem::take(&mut marks[rank]);
        }
        ranked.extend(by_index);
        total_gt += gt.len();
    }
    ap_from_ranked(ranked, total_gt)
}

/// Totals of one strategy over a scene set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub ap: f64,
    pub pixels: u64,
    pub modeled_time_ms: f64,
    pub wall_time: f64,
    pub images: usize,
}

/// Aggregates per-image `(detections, ledger)` outputs against groundtruth.
pub fn aggregate(
    outputs: &[(&[Detection], &CostLedger)],
    groundtruth: &[&[GroundTruthObject]],
    time_model: &TimeModel,
) -> Result<RunAggregate> {
    if outputs.len() != groundtruth.len() {
        return Err(Error::Dimension { expected: groundtruth.len(), got: outputs.len() });
    }
    let images: Vec<(&[Detection], &[GroundTruthObject])> =
        outputs.iter().zip(groundtruth).map(|((d, _), g)| (*d, *g)).collect();
    let mut agg = RunAggregate { ap: dataset_average_precision(&images, AP_IOU), images: outputs.len(), ..Default::default() };
    for (_, ledger) in outputs {
        agg.pixels += ledger.pixels_processed;
        agg.modeled_time_ms += ledger.modeled_time_ms(time_model);
        agg.wall_time += ledger.wall_time;
    }
    Ok(agg)
}

/// A run's AP, pixels and modeled time as percentages of the baseline's.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentages {
    pub a_perc: f64,
    pub p_perc: f64,
    pub t_perc: f64,
    pub ap: f64,
}

pub fn compute_percentages(run: &RunAggregate, fine_baseline: &RunAggregate) -> Result<Percentages> {
    if fine_baseline.ap <= 0.0 {
        return Err(Error::ZeroBaseline("ap"));
    }
    if fine_baseline.pixels == 0 {
        return Err(Error::ZeroBaseline("pixels"));
    }
    if fine_baseline.modeled_time_ms <= 0.0 {
        return Err(Error::ZeroBaseline("time"));
    }
    Ok(Percentages {
        a_perc: 100.0 * run.ap / fine_baseline.ap,
        p_perc: 100.0 * run.pixels as f64 / fine_baseline.pixels as f64,
        t_perc: 100.0 * run.modeled_time_ms / fine_baseline.modeled_time_ms,
        ap: run.ap,
    })
}

/// Per-seed percentages of one strategy. A policy with a step cap has one
/// entry per cap `0..=max_steps`; fixed strategies have a single entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCurve {
    pub name: String,
    pub capped: bool,
    pub per_seed: Vec<Vec<Percentages>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub budget: String,
    /// `None` when the strategy cannot meet the budget on some seed.
    pub values: Option<Percentages>,
    pub seed_count: usize,
    /// Step cap chosen on each seed.
    pub caps: Vec<usize>,
}

fn mean(rows: &[Percentages]) -> Percentages {
    let n = rows.len().max(1) as f64;
    Percentages {
        a_perc: rows.iter().map(|p| p.a_perc).sum::<f64>() / n,
        p_perc: rows.iter().map(|p| p.p_perc).sum::<f64>() / n,
        t_perc: rows.iter().map(|p| p.t_perc).sum::<f64>() / n,
        ap: rows.iter().map(|p| p.ap).sum::<f64>() / n,
    }
}

fn budget_label(b: f64) -> String {
    if b.fract() == 0.0 {
        format!("{b:.0}")
    } else {
        format!("{b}")
    }
}

/// Table rows: fixed strategies once at their own pixel percentage, capped
/// strategies once per budget bucket using, on each seed, the largest step
/// cap whose P_perc stays within the bucket.
pub fn budget_sweep(curves: &[StrategyCurve], budgets: &[f64]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for curve in curves.iter().filter(|c| !c.capped) {
        let values: Vec<Percentages> = curve.per_seed.iter().filter_map(|s| s.first().copied()).collect();
        let m = mean(&values);
        rows.push(ReportRow {
            strategy: curve.name.clone(),
            budget: budget_label(m.p_perc.round()),
            values: Some(m),
            seed_count: values.len(),
            caps: vec![0; values.len()],
        });
    }
    for &b in budgets {
        for curve in curves.iter().filter(|c| c.capped) {
            let picks: Vec<Option<usize>> = curve
                .per_seed
                .iter()
                .map(|caps| caps.iter().rposition(|p| p.p_perc <= b + 1e-9))
                .collect();
            let (values, caps) = if picks.iter().all(Option::is_some) {
                let caps: Vec<usize> = picks.into_iter().flatten().collect();
                let chosen: Vec<Percentages> = caps.iter().zip(&curve.per_seed).map(|(&k, s)| s[k]).collect();
                (Some(mean(&chosen)), caps)
            } else {
                (None, Vec::new())
            };
            rows.push(ReportRow {
                strategy: curve.name.clone(),
                budget: budget_label(b),
                values,
                seed_count: curve.per_seed.len(),
                caps,
            });
        }
    }
    rows
}

pub const CSV_HEADER: [&str; 7] = ["strategy", "budget", "a_perc", "p_perc", "t_perc", "ap", "seed_count"];

/// CSV with fixed 4-decimal formatting; unattainable rows have empty values.
pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let f = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
        let v = r.values;
        w.write_record([
            r.strategy.clone(),
            r.budget.clone(),
            f(v.map(|p| p.a_perc)),
            f(v.map(|p| p.p_perc)),
            f(v.map(|p| p.t_perc)),
            f(v.map(|p| p.ap)),
            r.seed_count.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Record(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Record(e.to_string()))
}

/// JSON laid out as `budget → strategy → {a_perc, t_perc, ...}`, budgets in
/// row order.
pub fn report_json(rows: &[ReportRow]) -> Result<String> {
    let mut budgets: Vec<(String, serde_json::Map<String, serde_json::Value>)> = Vec::new();
    for r in rows {
        let entry = match r.values {
            Some(p) => serde_json::json!({
                "a_perc": round4(p.a_perc),
                "p_perc": round4(p.p_perc),
                "t_perc": round4(p.t_perc),
                "ap": round4(p.ap),
                "seed_count": r.seed_count,
                "step_caps": r.caps,
            }),
            None => serde_json::json!({ "unattainable": true, "seed_count": r.seed_count }),
        };
        match budgets.iter_mut().find(|(b, _)| *b == r.budget) {
            Some((_, m)) => {
                m.insert(r.strategy.clone(), entry);
            }
            None => {
                let mut m = serde_json::Map::new();
                m.insert(r.strategy.clone(), entry);
                budgets.push((r.budget.clone(), m));
            }
        }
    }
    let table: Vec<serde_json::Value> = budgets
        .into_iter()
        .map(|(b, m)| serde_json::json!({ "p_perc_budget": b, "strategies": m }))
        .collect();
    let mut s = serde_json::to_string_pretty(&serde_json::json!({ "table": table }))?;
    s.push('\n');
    Ok(s)
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}
