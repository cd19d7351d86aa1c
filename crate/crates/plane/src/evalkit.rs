//! Detection metrics (AUROC, average precision, F1-max, AU-PRO), connected
//! anomaly regions on point clouds, report assembly, and self-timing.
//!
//! All metrics are rank-based, so any strictly increasing transform of the
//! scores leaves them unchanged.

use crate::dataset::Sample;
use crate::dualprompt::interpolation_matrix;
use crate::geom3d::{dist2, Point3, SpatialIndex};
use crate::train::PlaneModel;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Mann–Whitney AUROC with average ranks on ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs both classes".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied entries share the average rank
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Sorted distinct-threshold sweep state shared by AP and F1-max.
fn descending_groups(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut tp = 0;
        let mut fp = 0;
        let mut j = i;
        loop {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            if j + 1 >= order.len() || scores[order[j + 1]] != scores[order[i]] {
                break;
            }
            j += 1;
        }
        groups.push((tp, fp));
        i = j + 1;
    }
    groups
}

/// Step-wise average precision over a descending-score sweep, ties grouped.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AP needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut ap = 0.0;
    for (dtp, dfp) in descending_groups(scores, labels) {
        tp += dtp;
        fp += dfp;
        if dtp > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += precision * dtp as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

/// Maximum F1 over thresholds placed at every distinct score.
pub fn f1_max(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("F1 needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut best = 0.0f64;
    for (dtp, dfp) in descending_groups(scores, labels) {
        tp += dtp;
        fp += dfp;
        let fn_count = n_pos - tp;
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_count) as f64;
        best = best.max(f1);
    }
    Ok(best)
}

/// Default region-linking radius: twice the median nearest-neighbor spacing.
pub fn default_region_radius(points: &[Point3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let index = SpatialIndex::build(points);
    let mut spacings: Vec<f64> = points
        .iter()
        .map(|p| index.knn(p, 2).map(|nn| nn[1].1.sqrt()).unwrap_or(0.0))
        .collect();
    spacings.sort_by(f64::total_cmp);
    2.0 * spacings[spacings.len() / 2]
}

/// Connected components of anomalous points linked within `radius`
/// (union-find over the radius graph). Regions are sorted by lowest member.
pub fn extract_regions(mask: &[u8], points: &[Point3], radius: Option<f64>) -> Vec<Vec<usize>> {
    let anomalous: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(i, _)| i)
        .collect();
    if anomalous.is_empty() {
        return Vec::new();
    }
    let r = radius.unwrap_or_else(|| default_region_radius(points));
    let r2 = r * r;
    let mut parent: Vec<usize> = (0..anomalous.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for a in 0..anomalous.len() {
        for b in a + 1..anomalous.len() {
            if dist2(&points[anomalous[a]], &points[anomalous[b]]) <= r2 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut regions: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for a in 0..anomalous.len() {
        let root = find(&mut parent, a);
        regions.entry(root).or_default().push(anomalous[a]);
    }
    regions.into_values().collect()
}

/// Area under the per-region-overlap curve for FPR in [0, fpr_limit],
/// normalized by the limit. Scores, masks, and points are given per sample;
/// the FPR pools normal points across all samples.
pub fn aupro(
    score_maps: &[Vec<f64>],
    masks: &[Vec<u8>],
    points: &[Vec<Point3>],
    fpr_limit: f64,
) -> Result<f64> {
    if fpr_limit <= 0.0 || fpr_limit > 1.0 {
        return Err(Error::InvalidArgument("fpr_limit must be in (0, 1]".into()));
    }
    // per pooled point: score, region id (or none), normal flag
    let mut region_sizes: Vec<usize> = Vec::new();
    let mut entries: Vec<(f64, Option<usize>)> = Vec::new();
    let mut n_normal = 0usize;
    for ((scores, mask), pts) in score_maps.iter().zip(masks).zip(points) {
        let regions = extract_regions(mask, pts, None);
        let mut region_of = vec![None; scores.len()];
        for region in regions {
            let id = region_sizes.len();
            region_sizes.push(region.len());
            for idx in region {
                region_of[idx] = Some(id);
            }
        }
        for (i, &s) in scores.iter().enumerate() {
            if mask[i] == 0 {
                n_normal += 1;
            }
            entries.push((s, region_of[i]));
        }
    }
    if region_sizes.is_empty() {
        return Err(Error::UndefinedMetric("AU-PRO needs at least one region".into()));
    }
    if n_normal == 0 {
        return Err(Error::UndefinedMetric("AU-PRO needs normal points".into()));
    }

    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_regions = region_sizes.len() as f64;
    let mut hits = vec![0usize; region_sizes.len()];
    let mut fp = 0usize;
    let mut pro_sum = 0.0; // running Σ per-region overlap
    let mut curve = vec![(0.0f64, 0.0f64)];
    let mut i = 0;
    while i < entries.len() {
        let mut j = i;
        loop {
            match entries[j].1 {
                Some(rid) => {
                    pro_sum -= hits[rid] as f64 / region_sizes[rid] as f64;
                    hits[rid] += 1;
                    pro_sum += hits[rid] as f64 / region_sizes[rid] as f64;
                }
                None => fp += 1,
            }
            if j + 1 >= entries.len() || entries[j + 1].0 != entries[i].0 {
                break;
            }
            j += 1;
        }
        curve.push((fp as f64 / n_normal as f64, pro_sum / n_regions));
        i = j + 1;
    }

    // trapezoid over FPR in [0, limit], clipping the crossing segment
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 >= fpr_limit {
            break;
        }
        if x1 <= fpr_limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let t = (fpr_limit - x0) / (x1 - x0);
            let y_cross = y0 + t * (y1 - y0);
            area += (fpr_limit - x0) * (y0 + y_cross) / 2.0;
            break;
        }
    }
    Ok(area / fpr_limit)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub o_auroc: f64,
    pub p_auroc: f64,
    pub p_pro: f64,
    pub o_ap: f64,
    pub p_ap: f64,
    pub o_f1: f64,
    pub p_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<CategoryRow>,
    pub mean: CategoryRow,
    pub samples_per_second: f64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,O-AUROC,P-AUROC,P-PRO,O-AP,P-AP,O-F1,P-F1\n");
        for row in self.rows.iter().chain(std::iter::once(&self.mean)) {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                row.category, row.o_auroc, row.p_auroc, row.p_pro, row.o_ap, row.p_ap, row.o_f1,
                row.p_f1
            ));
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(csv.display().to_string(), e))?;
        let json = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            path: json.display().to_string(),
            reason: e.to_string(),
        })?;
        std::fs::write(&json, text).map_err(|e| Error::io(json.display().to_string(), e))
    }
}

/// Scored sample ready for metric pooling.
#[derive(Debug, Clone)]
pub struct SampleEval {
    pub category: String,
    pub object_score: f64,
    pub object_label: u8,
    pub point_scores: Vec<f64>,
    pub point_labels: Vec<u8>,
    pub points: Vec<Point3>,
}

/// Pools per-sample scores into a per-category report. Point-level metrics
/// pool all points of a category; object metrics use the per-sample max.
pub fn report_from_evals(
    evals: &[SampleEval],
    fpr_limit: f64,
    samples_per_second: f64,
) -> Result<EvalReport> {
    if evals.is_empty() {
        return Err(Error::NoSamples("evaluation split".into()));
    }
    let mut categories: Vec<String> = evals.iter().map(|e| e.category.clone()).collect();
    categories.sort();
    categories.dedup();

    let mut rows = Vec::new();
    for category in &categories {
        let of: Vec<&SampleEval> = evals.iter().filter(|e| &e.category == category).collect();
        let obj_scores: Vec<f64> = of.iter().map(|e| e.object_score).collect();
        let obj_labels: Vec<u8> = of.iter().map(|e| e.object_label).collect();
        let pt_scores: Vec<f64> = of.iter().flat_map(|e| e.point_scores.clone()).collect();
        let pt_labels: Vec<u8> = of.iter().flat_map(|e| e.point_labels.clone()).collect();
        let maps: Vec<Vec<f64>> = of.iter().map(|e| e.point_scores.clone()).collect();
        let masks: Vec<Vec<u8>> = of.iter().map(|e| e.point_labels.clone()).collect();
        let pts: Vec<Vec<Point3>> = of.iter().map(|e| e.points.clone()).collect();
        rows.push(CategoryRow {
            category: category.clone(),
            o_auroc: auroc(&obj_scores, &obj_labels)?,
            p_auroc: auroc(&pt_scores, &pt_labels)?,
            p_pro: aupro(&maps, &masks, &pts, fpr_limit)?,
            o_ap: average_precision(&obj_scores, &obj_labels)?,
            p_ap: average_precision(&pt_scores, &pt_labels)?,
            o_f1: f1_max(&obj_scores, &obj_labels)?,
            p_f1: f1_max(&pt_scores, &pt_labels)?,
        });
    }
    let n = rows.len() as f64;
    let mean = CategoryRow {
        category: "MEAN".into(),
        o_auroc: rows.iter().map(|r| r.o_auroc).sum::<f64>() / n,
        p_auroc: rows.iter().map(|r| r.p_auroc).sum::<f64>() / n,
        p_pro: rows.iter().map(|r| r.p_pro).sum::<f64>() / n,
        o_ap: rows.iter().map(|r| r.o_ap).sum::<f64>() / n,
        p_ap: rows.iter().map(|r| r.p_ap).sum::<f64>() / n,
        o_f1: rows.iter().map(|r| r.o_f1).sum::<f64>() / n,
        p_f1: rows.iter().map(|r| r.p_f1).sum::<f64>() / n,
    };
    Ok(EvalReport {
        rows,
        mean,
        samples_per_second,
    })
}

/// Runs the model over the test split and assembles the report. When
/// `ply_dir` is set, each sample is also written as a score-colored PLY.
pub fn evaluate(
    model: &PlaneModel,
    test: &[Sample],
    fpr_limit: f64,
    ply_dir: Option<&Path>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::NoSamples("evaluation split".into()));
    }
    let start = std::time::Instant::now();
    let evals: Vec<SampleEval> = test
        .par_iter()
        .map(|sample| -> Result<SampleEval> {
            let map = model.infer(&sample.cloud)?;
            Ok(SampleEval {
                category: sample.category.clone(),
                object_score: map.object_score,
                object_label: sample.label_object,
                point_scores: map.point_scores,
                point_labels: sample
                    .cloud
                    .labels
                    .clone()
                    .unwrap_or_else(|| vec![0; sample.cloud.len()]),
                points: sample.cloud.points.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let sps = test.len() as f64 / start.elapsed().as_secs_f64().max(1e-9);

    if let Some(dir) = ply_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for (i, (sample, eval)) in test.iter().zip(&evals).enumerate() {
            let path = dir.join(format!("{}_{:03}_scored.ply", sample.category, i));
            crate::geom3d::io::write_ply_scored(&path, &sample.cloud, &eval.point_scores)?;
        }
    }
    report_from_evals(&evals, fpr_limit, sps)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub timings_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub samples_per_second: f64,
    pub stage_encode_seconds: f64,
    pub stage_head_seconds: f64,
    pub stage_interpolate_seconds: f64,
}

/// Times the inference pipeline stage by stage; medians over repetitions.
pub fn benchmark(
    model: &PlaneModel,
    cloud: &crate::geom3d::PointCloud,
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::InvalidArgument("need at least 3 repetitions".into()));
    }
    let input = if model.normalize_input {
        crate::geom3d::normalize_cloud(cloud)
    } else {
        cloud.clone()
    };
    let ids = model.plm.vocab.tokenize(&input.class_name);
    let mut totals = Vec::with_capacity(repetitions);
    let mut encodes = Vec::new();
    let mut heads = Vec::new();
    let mut interps = Vec::new();
    for _ in 0..repetitions {
        let t0 = std::time::Instant::now();
        let encoded = model.plm.point.encode(&input)?;
        let t_encode = t0.elapsed().as_secs_f64();

        let t1 = std::time::Instant::now();
        let interp = interpolation_matrix(&input.points, &encoded.patches.centers);
        let t_interp = t1.elapsed().as_secs_f64();

        let t2 = std::time::Instant::now();
        let (f_d_text, f_d_point) = model.head.prompts.dpcm(&encoded.global)?;
        let (f_n_t, f_a_t) = model
            .head
            .prompts
            .build_text_features(&model.plm.text, &ids, &f_d_text)?;
        let point_static = model.head.prompts.point_prompt(&input.class_name)?;
        let mut maps = Vec::new();
        for (adapter, tap) in model.head.adapters.iter().zip(&encoded.taps) {
            let f_p = adapter.project(tap, point_static, &f_d_point, model.head.cfg.prompt_mixing)?;
            maps.push(crate::dualprompt::score_map(
                &f_p,
                &f_n_t,
                &f_a_t,
                &interp,
                model.head.cfg.temperature,
            )?);
        }
        crate::dualprompt::aggregate(&maps)?;
        let t_head = t2.elapsed().as_secs_f64();

        totals.push(t0.elapsed().as_secs_f64());
        encodes.push(t_encode);
        interps.push(t_interp);
        heads.push(t_head);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut totals_sorted = totals.clone();
    let med = median(&mut totals_sorted);
    Ok(BenchReport {
        repetitions,
        timings_seconds: totals,
        median_seconds: med,
        samples_per_second: 1.0 / med.max(1e-12),
        stage_encode_seconds: median(&mut encodes),
        stage_head_seconds: median(&mut heads),
        stage_interpolate_seconds: median(&mut interps),
    })
}
