//! Acceptance suite: nine numbered end-to-end checks with pinned tolerances.
//! All criteria run inside one test so the expensive artifacts (the desk
//! corpus and the trained models) are shared; one line per criterion is
//! printed, and the test fails at the end if any criterion failed.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to watch progress.

use plane::ano3d::{ano3d_augment, AnomalyConfig, DefectKind};
use plane::autodiff::{backward, concat, cosine_similarity, layernorm, Tensor};
use plane::dataset::{build_dataset, save_dataset, synth_shape, DatasetSpec, Sample, ShapeKind};
use plane::dualprompt::{token_pair_scores, HeadConfig};
use plane::evalkit::{
    aupro, auroc, average_precision, extract_regions, f1_max, report_from_evals, EvalReport,
    SampleEval,
};
use plane::geom3d::{Point3, PointCloud};
use plane::plm::{PointEncoderConfig, TextEncoderConfig};
use plane::train::{dice_loss, focal_loss, fit, train_step, PlaneModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

// Desk-scale experiment protocol (criteria 6, 7, 9). Defect size is pinned
// at ~6% of the cloud with a displacement around 15% of the median radius;
// training uses the library defaults (lr 1e-4 adapters, 1e-5 prompts,
// batch 4) cut to 300 epochs.
const DESK_POINTS: usize = 2048;
const DESK_M: usize = 128;
const DESK_MU: f64 = 0.15;
const DESK_SIGMA: f64 = 0.05;
const DESK_EPOCHS: usize = 300;
const DESK_SEEDS: [u64; 3] = [11, 12, 13];
const DESK_CORPUS_SEED: u64 = 4242;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Outcome {
    fn report(&self) -> String {
        format!(
            "{}: {} — {}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn desk_spec() -> DatasetSpec {
    DatasetSpec {
        categories: vec!["sphere".into(), "box".into(), "cylinder".into()],
        train_per_class: 4,
        test_normal_per_class: 10,
        test_anomalous_per_class: 10,
        points_per_sample: DESK_POINTS,
        jitter: 0.01,
        seed: DESK_CORPUS_SEED,
    }
}

fn desk_ano() -> AnomalyConfig {
    AnomalyConfig {
        mu: DESK_MU,
        sigma: DESK_SIGMA,
        neighbor_count: DESK_M,
        removal_count: DESK_M - 1,
        ..AnomalyConfig::default()
    }
}

fn desk_train_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: DESK_EPOCHS,
        seed,
        ..TrainConfig::default()
    }
}

// ---------------------------------------------------------------------------
// criterion 1: autodiff gradients vs central finite differences
// ---------------------------------------------------------------------------

struct Leaves {
    x: Tensor,
    b: Tensor,
    c: Tensor,
    w: Tensor,
    bt: Tensor,
    gamma: Tensor,
    beta: Tensor,
}

impl Leaves {
    fn new(rng: &mut ChaCha8Rng) -> Leaves {
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        Leaves {
            x: Tensor::param(&[2, 3], r(6)),
            b: Tensor::param(&[2, 3], r(6)),
            c: Tensor::param(&[2, 3], r(6)),
            w: Tensor::param(&[3, 3], r(9)),
            bt: Tensor::param(&[3, 2], r(6)),
            gamma: Tensor::param(&[3], r(3)),
            beta: Tensor::param(&[3], r(3)),
        }
    }

    fn all(&self) -> Vec<&Tensor> {
        vec![&self.x, &self.b, &self.c, &self.w, &self.bt, &self.gamma, &self.beta]
    }
}

const N_STAGES: usize = 20;

/// One transformation keeping the working state at shape [2, 3]. The stage
/// set covers the whole differentiable op surface.
fn apply_stage(id: usize, s: &Tensor, l: &Leaves) -> Tensor {
    match id {
        0 => s.add(&l.b).unwrap(),
        1 => s.mul(&l.c).unwrap().scale(0.5),
        2 => s.sub(&l.b).unwrap().neg().scale(1.3),
        3 => s.div(&l.c.mul(&l.c).unwrap().add_scalar(0.7)).unwrap(),
        4 => s.scale(0.4).exp(),
        5 => s.mul(s).unwrap().add_scalar(0.2).log(),
        6 => s.mul(s).unwrap().add_scalar(0.1).sqrt(),
        7 => s.mul(s).unwrap().add_scalar(0.3).pow_scalar(1.7),
        8 => s.add_scalar(0.1).relu(),
        9 => s.gelu(),
        10 => s.clamp(-0.8, 0.9),
        11 => s.matmul(&l.w).unwrap(),
        12 => s.transpose2().unwrap().add(&l.bt).unwrap().transpose2().unwrap(),
        13 => s
            .reshape(&[6, 1])
            .unwrap()
            .softmax(0)
            .unwrap()
            .reshape(&[2, 3])
            .unwrap()
            .scale(3.0),
        14 => s.softmax(1).unwrap().scale(3.0),
        15 => s.add(&s.sum_axis(0).unwrap().scale(0.2)).unwrap(),
        16 => s.add(&s.mean_axis(1).unwrap().scale(0.5)).unwrap(),
        17 => concat(&[s.clone(), s.scale(0.5)], 0).unwrap().slice(0, 1, 3).unwrap(),
        18 => layernorm(s, &l.gamma, &l.beta, 1e-5).unwrap(),
        19 => s.mul(&cosine_similarity(s, &l.b).unwrap()).unwrap(),
        _ => unreachable!(),
    }
}

/// A stage is safe when the finite-difference probe (h = 1e-5) cannot cross
/// a non-differentiable point of the op it is about to apply.
fn stage_guard_ok(id: usize, s: &Tensor) -> bool {
    let v = s.value();
    match id {
        8 => v.iter().all(|x| (x + 0.1).abs() > 1e-3),
        10 => v.iter().all(|x| (x + 0.8).abs() > 1e-3 && (x - 0.9).abs() > 1e-3),
        _ => true,
    }
}

fn reduction_guard_ok(kind: usize, s: &Tensor) -> bool {
    if kind != 2 {
        return true;
    }
    let mut v = s.value();
    v.sort_by(f64::total_cmp);
    v[v.len() - 1] - v[v.len() - 2] > 1e-3
}

fn criterion_1() -> Outcome {
    let mut max_rel = 0.0f64;
    let mut used = [false; N_STAGES];
    let mut graphs_done = 0usize;
    let mut seed = 0u64;
    while graphs_done < 50 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = Leaves::new(&mut rng);
        // force full stage coverage across the run by cycling one mandatory
        // stage through the otherwise random plan
        let mut plan: Vec<usize> = (0..4).map(|_| rng.random_range(0..N_STAGES)).collect();
        plan.push(graphs_done % N_STAGES);
        let reduction = rng.random_range(0..3usize);

        // dry run with guards; a rejected plan burns the seed and retries
        let mut s = leaves.x.clone();
        let mut ok = true;
        for &id in &plan {
            if !stage_guard_ok(id, &s) {
                ok = false;
                break;
            }
            s = apply_stage(id, &s, &leaves);
            if !s.value().iter().all(|v| v.is_finite() && v.abs() < 30.0) {
                ok = false;
                break;
            }
        }
        if !(ok && reduction_guard_ok(reduction, &s)) {
            continue;
        }

        let build = |l: &Leaves| -> Tensor {
            let mut s = l.x.clone();
            for &id in &plan {
                s = apply_stage(id, &s, l);
            }
            match reduction {
                0 => s.sum_all(),
                1 => s.mean_all(),
                _ => s.max_all(),
            }
        };

        for leaf in leaves.all() {
            leaf.zero_grad();
        }
        let loss = build(&leaves);
        backward(&loss).unwrap();
        let h = 1e-5;
        for leaf in leaves.all() {
            let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
            let base = leaf.value();
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus[i] += h;
                leaf.set_data(plus);
                let f_plus = build(&leaves).item();
                let mut minus = base.clone();
                minus[i] -= h;
                leaf.set_data(minus);
                let f_minus = build(&leaves).item();
                leaf.set_data(base.clone());
                let numeric = (f_plus - f_minus) / (2.0 * h);
                let denom = numeric.abs().max(analytic[i].abs()).max(1e-4);
                max_rel = max_rel.max((numeric - analytic[i]).abs() / denom);
            }
        }
        for &id in &plan {
            used[id] = true;
        }
        graphs_done += 1;
    }
    let all_used = used.iter().all(|&u| u);
    Outcome {
        name: "criterion 1 (autodiff gradient check)",
        pass: max_rel < 1e-4 && all_used,
        detail: format!("50 graphs, max rel err {max_rel:.2e}, full op coverage {all_used}"),
    }
}

// ---------------------------------------------------------------------------
// criterion 2: defect generator structural invariants + magnitude KS test
// ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let base = synth_shape(ShapeKind::Sphere, 512, 0.01, 777).unwrap();
    let cfg = AnomalyConfig::default();
    let mut magnitudes: Vec<f64> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for i in 0..1000u64 {
        let seed = 20_000 + i;
        let (defected, mask, meta) = ano3d_augment(&base, &cfg, seed).unwrap();
        // the same seed with the defect suppressed yields the identical
        // rotated cloud, which serves as the pristine reference
        let none_cfg = AnomalyConfig {
            defect_type: Some(DefectKind::None),
            ..cfg.clone()
        };
        let (reference, _, _) = ano3d_augment(&base, &none_cfg, seed).unwrap();

        match meta.kind {
            DefectKind::Hole => {
                let removed = cfg.removal_count + 1;
                if defected.len() != base.len() - removed
                    || meta.removed_indices.len() != removed
                {
                    failures.push(format!("seed {seed}: hole size wrong"));
                    continue;
                }
                let mut keep = vec![true; base.len()];
                for &r in &meta.removed_indices {
                    keep[r] = false;
                }
                let expected: Vec<Point3> = reference
                    .points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| keep[*j])
                    .map(|(_, p)| *p)
                    .collect();
                if expected != defected.points {
                    failures.push(format!("seed {seed}: hole survivors not bit-identical"));
                }
                let flagged = mask.iter().filter(|&&m| m == 1).count();
                if flagged != cfg.hole_boundary_k {
                    failures.push(format!("seed {seed}: {flagged} boundary labels"));
                }
            }
            DefectKind::Bulge | DefectKind::Concavity => {
                if defected.len() != base.len() || meta.magnitudes.len() != 1 {
                    failures.push(format!("seed {seed}: displaced shape/meta wrong"));
                    continue;
                }
                let t = meta.magnitudes[0];
                let n = meta.normal.unwrap();
                if t < cfg.sigma / 2.0 {
                    failures.push(format!("seed {seed}: magnitude below clamp"));
                }
                let mut displaced = 0usize;
                let mut sign: Option<bool> = None;
                for (j, (d, r)) in defected.points.iter().zip(&reference.points).enumerate() {
                    if d == r {
                        if mask[j] == 1 {
                            failures.push(format!("seed {seed}: mask on unmoved point"));
                        }
                        continue;
                    }
                    displaced += 1;
                    let plus = [r[0] + t * n[0], r[1] + t * n[1], r[2] + t * n[2]];
                    let minus = [r[0] - t * n[0], r[1] - t * n[1], r[2] - t * n[2]];
                    let is_plus = *d == plus;
                    if !is_plus && *d != minus {
                        failures.push(format!("seed {seed}: displacement off the normal"));
                        break;
                    }
                    match sign {
                        None => sign = Some(is_plus),
                        Some(s) if s != is_plus => {
                            failures.push(format!("seed {seed}: mixed displacement signs"));
                            break;
                        }
                        _ => {}
                    }
                    if mask[j] != 1 {
                        failures.push(format!("seed {seed}: moved point unlabeled"));
                        break;
                    }
                }
                if displaced != cfg.neighbor_count {
                    failures.push(format!("seed {seed}: {displaced} displaced points"));
                }
                magnitudes.push(t);
            }
            DefectKind::None => failures.push(format!("seed {seed}: generator produced no defect")),
        }
        if failures.len() > 5 {
            break;
        }
    }

    // KS test of the shared magnitudes against the clamped Gaussian law
    magnitudes.sort_by(f64::total_cmp);
    let n = magnitudes.len() as f64;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let cdf = |x: f64| -> f64 {
        if x < cfg.sigma / 2.0 {
            0.0
        } else {
            std_normal.cdf((x - cfg.mu) / cfg.sigma)
        }
    };
    let mut ks = 0.0f64;
    for (i, &x) in magnitudes.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let critical = 1.628 / n.sqrt(); // alpha = 0.01
    let ks_ok = ks < critical;
    Outcome {
        name: "criterion 2 (defect invariants + magnitude KS)",
        pass: failures.is_empty() && ks_ok,
        detail: format!(
            "1000 defects, {} structural failures; KS {ks:.4} vs critical {critical:.4} (n={})",
            failures.len(),
            magnitudes.len()
        ),
    }
}

// ---------------------------------------------------------------------------
// criterion 3: metric implementations vs brute-force oracles
// ---------------------------------------------------------------------------

fn oracle_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn oracle_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    distinct.reverse();
    let mut prev_tp = 0.0;
    let mut out = 0.0;
    for &t in &distinct {
        let tp = scores.iter().zip(labels).filter(|&(&s, &l)| s >= t && l == 1).count() as f64;
        let pp = scores.iter().filter(|&&s| s >= t).count() as f64;
        out += (tp - prev_tp) * (tp / pp);
        prev_tp = tp;
    }
    out / n_pos
}

fn oracle_f1(scores: &[f64], labels: &[u8]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut best = 0.0f64;
    for &t in &distinct {
        let tp = scores.iter().zip(labels).filter(|&(&s, &l)| s >= t && l == 1).count() as f64;
        let pp = scores.iter().filter(|&&s| s >= t).count() as f64;
        best = best.max(2.0 * tp / (pp + n_pos));
    }
    best
}

fn oracle_aupro(scores: &[f64], mask: &[u8], pts: &[Point3], limit: f64) -> f64 {
    let regions = extract_regions(mask, pts, None);
    let n_normal = mask.iter().filter(|&&m| m == 0).count() as f64;
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    distinct.reverse();
    let mut curve = vec![(0.0, 0.0)];
    for &t in &distinct {
        let fpr = (0..scores.len())
            .filter(|&i| mask[i] == 0 && scores[i] >= t)
            .count() as f64
            / n_normal;
        let pro = regions
            .iter()
            .map(|r| r.iter().filter(|&&i| scores[i] >= t).count() as f64 / r.len() as f64)
            .sum::<f64>()
            / regions.len() as f64;
        curve.push((fpr, pro));
    }
    let mut area = 0.0;
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let t = (limit - x0) / (x1 - x0);
            let yc = y0 + t * (y1 - y0);
            area += (limit - x0) * (y0 + yc) / 2.0;
            break;
        }
    }
    area / limit
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut max_err = 0.0f64;
    let mut done = 0usize;
    while done < 100 {
        let n = rng.random_range(20..=200usize);
        // quantized scores inject heavy ties
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..12) as f64) / 12.0).collect();
        let labels: Vec<u8> = (0..n).map(|_| (rng.random_range(0..3) == 0) as u8).collect();
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        if n_pos == 0 || n_pos == n {
            continue;
        }
        max_err = max_err.max((auroc(&scores, &labels).unwrap() - oracle_auroc(&scores, &labels)).abs());
        max_err =
            max_err.max((average_precision(&scores, &labels).unwrap() - oracle_ap(&scores, &labels)).abs());
        max_err = max_err.max((f1_max(&scores, &labels).unwrap() - oracle_f1(&scores, &labels)).abs());
        done += 1;
    }

    // grid clouds with two square regions for the overlap-curve metric
    let mut pts = Vec::new();
    for i in 0..7 {
        for j in 0..7 {
            pts.push([i as f64 * 0.1, j as f64 * 0.1, 0.0]);
        }
    }
    let mut mask = vec![0u8; 49];
    for idx in [0, 1, 7, 8, 40, 41, 47, 48] {
        mask[idx] = 1;
    }
    let mut done_pro = 0usize;
    while done_pro < 100 {
        let scores: Vec<f64> = (0..49).map(|_| rng.random_range(0.0..1.0)).collect();
        let limit = [0.1, 0.3, 0.5][done_pro % 3];
        let got = aupro(&[scores.clone()], &[mask.clone()], &[pts.clone()], limit).unwrap();
        max_err = max_err.max((got - oracle_aupro(&scores, &mask, &pts, limit)).abs());
        done_pro += 1;
    }
    Outcome {
        name: "criterion 3 (metric oracle equivalence)",
        pass: max_err < 1e-9,
        detail: format!("100 rank-metric + 100 overlap-curve instances, max |err| {max_err:.2e}"),
    }
}

// ---------------------------------------------------------------------------
// criterion 4: paired-score contract
// ---------------------------------------------------------------------------

fn unit_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let (g, dim) = (10usize, 8usize);
    let mut worst = 0.0f64;
    let mut strict_ok = true;
    for trial in 0..20 {
        let fp = Tensor::constant(
            &[g, dim],
            (0..g * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let fn_t = Tensor::constant(&[1, dim], unit_row(&mut rng, dim));
        let fa_t = Tensor::constant(&[1, dim], unit_row(&mut rng, dim));
        let temperature = [1.0, 2.5][trial % 2];
        let scores = token_pair_scores(&fp, &fn_t, &fa_t, temperature).unwrap().value();

        for row in scores.chunks(2) {
            worst = worst.max((row[0] + row[1] - 1.0).abs());
            if !(row[0] > 0.0 && row[0] < 1.0 && row[1] > 0.0 && row[1] < 1.0) {
                strict_ok = false;
            }
        }

        // swapping the two text features must swap the columns
        let swapped = token_pair_scores(&fp, &fa_t, &fn_t, temperature).unwrap().value();
        for (r, rs) in scores.chunks(2).zip(swapped.chunks(2)) {
            worst = worst.max((r[0] - rs[1]).abs()).max((r[1] - rs[0]).abs());
        }

        // shift invariance: adding a constant to both cosine logits must not
        // change the result (checked against a direct scalar evaluation)
        let fp_val = fp.value();
        for gi in 0..g {
            let row = &fp_val[gi * dim..(gi + 1) * dim];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt() + 1e-12;
            let cos = |t: &Tensor| -> f64 {
                row.iter().zip(t.value()).map(|(a, b)| a / n * b).sum::<f64>()
            };
            let (cn, ca) = (cos(&fn_t), cos(&fa_t));
            for shift in [0.0, 17.25] {
                let ln = temperature * (cn + shift);
                let la = temperature * (ca + shift);
                let m = ln.max(la);
                let (en, ea) = ((ln - m).exp(), (la - m).exp());
                worst = worst.max((scores[gi * 2] - en / (en + ea)).abs());
                worst = worst.max((scores[gi * 2 + 1] - ea / (en + ea)).abs());
            }
        }

        // identical text features pin every score to one half
        let even = token_pair_scores(&fp, &fn_t, &fn_t, temperature).unwrap().value();
        for v in even {
            worst = worst.max((v - 0.5).abs());
        }
    }
    Outcome {
        name: "criterion 4 (paired-score contract)",
        pass: worst < 1e-12 && strict_ok,
        detail: format!("max deviation {worst:.2e}, strict (0,1) {strict_ok}"),
    }
}

// ---------------------------------------------------------------------------
// criterion 5: frozen encoders vs trainable head after 100 steps
// ---------------------------------------------------------------------------

fn tiny_point_cfg() -> PointEncoderConfig {
    PointEncoderConfig {
        groups: 16,
        group_size: 8,
        dim: 32,
        layers: 4,
        heads: 4,
        tap_layers: vec![1, 3],
    }
}

fn tiny_text_cfg() -> TextEncoderConfig {
    TextEncoderConfig {
        dim: 32,
        layers: 2,
        heads: 4,
        max_len: 16,
    }
}

fn tiny_batch() -> Vec<PointCloud> {
    let ano = AnomalyConfig {
        neighbor_count: 24,
        removal_count: 23,
        mu: 0.1,
        sigma: 0.04,
        hole_boundary_k: 8,
        ..AnomalyConfig::default()
    };
    let kinds = [
        DefectKind::Bulge,
        DefectKind::Concavity,
        DefectKind::Hole,
        DefectKind::None,
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let base = synth_shape(ShapeKind::Sphere, 160, 0.01, 500 + i as u64).unwrap();
            let cfg = AnomalyConfig {
                defect_type: Some(k),
                ..ano.clone()
            };
            let (mut cloud, mask, _) = ano3d_augment(&base, &cfg, 600 + i as u64).unwrap();
            cloud.labels = Some(mask);
            cloud
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let cats = vec!["sphere".to_string()];
    let model =
        PlaneModel::new(&cats, &tiny_text_cfg(), &tiny_point_cfg(), &HeadConfig::default(), 7)
            .unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        seed: 7,
        ..TrainConfig::default()
    };
    let batch = tiny_batch();

    // single backward pass: every trainable family must receive gradient
    let params = model.head.parameters();
    for p in &params {
        p.tensor.zero_grad();
    }
    let mut total: Option<Tensor> = None;
    for cloud in &batch {
        let (pred, _) = model.forward(cloud).unwrap();
        let gt = cloud.labels.clone().unwrap();
        let focal = focal_loss(&pred, &gt, cfg.focal_alpha, cfg.focal_gamma).unwrap();
        let dice = dice_loss(&pred, &gt, cfg.dice_smooth).unwrap();
        let term = focal.add(&dice).unwrap();
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term).unwrap(),
        });
    }
    backward(&total.unwrap()).unwrap();
    let grad_norm = |prefix: &str| -> f64 {
        params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .flat_map(|p| p.tensor.grad().unwrap_or_default())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    };
    let families = [
        ("prompts.text_static_", grad_norm("prompts.text_static_")),
        ("prompts.point_static.", grad_norm("prompts.point_static.")),
        ("prompts.dpcm.", grad_norm("prompts.dpcm.")),
        ("pcfa.", grad_norm("pcfa.")),
    ];
    let grads_ok = families.iter().all(|(_, n)| *n > 0.0);
    for p in &params {
        p.tensor.zero_grad();
    }

    let checksum_before = model.plm.checksum();
    let head_before: Vec<Vec<f64>> = model.head.state().into_iter().map(|(_, _, d)| d).collect();
    let mut opt = model.optimizer(&cfg).unwrap();
    for _ in 0..100 {
        train_step(&model, &batch, &mut opt, &cfg).unwrap();
    }
    let frozen_ok = model.plm.checksum() == checksum_before;
    let head_after: Vec<Vec<f64>> = model.head.state().into_iter().map(|(_, _, d)| d).collect();
    let head_moved = head_before != head_after;
    Outcome {
        name: "criterion 5 (frozen encoders, trainable head)",
        pass: grads_ok && frozen_ok && head_moved,
        detail: format!(
            "grad norms {:?}; encoder checksum unchanged {frozen_ok}; head moved {head_moved}",
            families.map(|(k, n)| format!("{k}{n:.1e}"))
        ),
    }
}

// ---------------------------------------------------------------------------
// criteria 6/7/9: desk-scale experiment, ablations, prompt separation
// ---------------------------------------------------------------------------

fn desk_eval(model: &PlaneModel, test: &[Sample]) -> (Vec<SampleEval>, EvalReport) {
    let evals: Vec<SampleEval> = test
        .iter()
        .map(|sample| {
            let map = model.infer(&sample.cloud).unwrap();
            SampleEval {
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
            }
        })
        .collect();
    let report = report_from_evals(&evals, 0.3, 1.0).unwrap();
    (evals, report)
}

/// Mean O-/P-AUROC after shuffling labels across samples within each
/// category (scores kept fixed): the chance-level baseline.
fn shuffled_null(evals: &[SampleEval], shuffles: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut categories: Vec<String> = evals.iter().map(|e| e.category.clone()).collect();
    categories.sort();
    categories.dedup();
    let (mut o_sum, mut p_sum, mut count) = (0.0, 0.0, 0.0);
    for _ in 0..shuffles {
        for cat in &categories {
            let of: Vec<&SampleEval> = evals.iter().filter(|e| &e.category == cat).collect();
            let mut perm: Vec<usize> = (0..of.len()).collect();
            for i in (1..perm.len()).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let obj_scores: Vec<f64> = of.iter().map(|e| e.object_score).collect();
            let obj_labels: Vec<u8> = perm.iter().map(|&i| of[i].object_label).collect();
            let pt_scores: Vec<f64> = of.iter().flat_map(|e| e.point_scores.clone()).collect();
            let pt_labels: Vec<u8> = perm.iter().flat_map(|&i| of[i].point_labels.clone()).collect();
            o_sum += auroc(&obj_scores, &obj_labels).unwrap();
            p_sum += auroc(&pt_scores, &pt_labels).unwrap();
            count += 1.0;
        }
    }
    (o_sum / count, p_sum / count)
}

struct DeskArtifacts {
    c6: Outcome,
    train: Vec<Sample>,
    test: Vec<Sample>,
    first_model: PlaneModel,
    first_report: EvalReport,
}

fn criterion_6() -> DeskArtifacts {
    let spec = desk_spec();
    let ano = desk_ano();
    let (train, test) = build_dataset(&spec, &ano).unwrap();
    let mut o_scores = Vec::new();
    let mut p_scores = Vec::new();
    let mut null_o = Vec::new();
    let mut null_p = Vec::new();
    let mut first: Option<(PlaneModel, EvalReport)> = None;
    for &seed in &DESK_SEEDS {
        let model = PlaneModel::new(
            &spec.categories,
            &TextEncoderConfig::default(),
            &PointEncoderConfig::default(),
            &HeadConfig::default(),
            seed,
        )
        .unwrap();
        fit(&model, &train, &desk_train_cfg(seed), &ano, None).unwrap();
        let (evals, report) = desk_eval(&model, &test);
        let (no, np) = shuffled_null(&evals, 5, seed ^ 0x5eed);
        o_scores.push(report.mean.o_auroc);
        p_scores.push(report.mean.p_auroc);
        null_o.push(no);
        null_p.push(np);
        println!(
            "  [desk seed {seed}] O-AUROC {:.3} P-AUROC {:.3} PRO {:.3} (null O {no:.3} P {np:.3})",
            report.mean.o_auroc, report.mean.p_auroc, report.mean.p_pro
        );
        if first.is_none() {
            first = Some((model, report));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (o, p) = (mean(&o_scores), mean(&p_scores));
    let (no, np) = (mean(&null_o), mean(&null_p));
    let pass = o >= 0.70 && p >= 0.75 && o - no >= 0.15 && p - np >= 0.15;
    let (first_model, first_report) = first.unwrap();
    DeskArtifacts {
        c6: Outcome {
            name: "criterion 6 (desk-scale detection quality)",
            pass,
            detail: format!(
                "3-seed mean O-AUROC {o:.3} (null {no:.3}), P-AUROC {p:.3} (null {np:.3})"
            ),
        },
        train,
        test,
        first_model,
        first_report,
    }
}

fn criterion_7(desk: &DeskArtifacts) -> Outcome {
    let spec = desk_spec();
    let ano = desk_ano();
    let seed = DESK_SEEDS[0];
    let run = |taps: Vec<usize>, fw: f64, dw: f64| -> f64 {
        let point_cfg = PointEncoderConfig {
            tap_layers: taps,
            ..PointEncoderConfig::default()
        };
        let model = PlaneModel::new(
            &spec.categories,
            &TextEncoderConfig::default(),
            &point_cfg,
            &HeadConfig::default(),
            seed,
        )
        .unwrap();
        let cfg = TrainConfig {
            focal_weight: fw,
            dice_weight: dw,
            ..desk_train_cfg(seed)
        };
        fit(&model, &desk.train, &cfg, &ano, None).unwrap();
        desk_eval(&model, &desk.test).1.mean.p_auroc
    };
    let combined = desk.first_report.mean.p_auroc;
    let focal_only = run(vec![2, 5, 8, 11], 1.0, 0.0);
    println!("  [ablation] focal-only P-AUROC {focal_only:.3}");
    let dice_only = run(vec![2, 5, 8, 11], 0.0, 1.0);
    println!("  [ablation] dice-only P-AUROC {dice_only:.3}");
    let single_tap = run(vec![2], 1.0, 1.0);
    println!("  [ablation] single-tap P-AUROC {single_tap:.3}");
    let loss_ok = combined >= focal_only.max(dice_only) - 0.03;
    let tap_ok = combined >= single_tap;
    Outcome {
        name: "criterion 7 (ablation directions)",
        pass: loss_ok && tap_ok,
        detail: format!(
            "combined {combined:.3} vs focal {focal_only:.3} / dice {dice_only:.3} (ok {loss_ok}); 4-tap {combined:.3} vs 1-tap {single_tap:.3} (ok {tap_ok})"
        ),
    }
}

fn criterion_9(desk: &DeskArtifacts) -> Outcome {
    let spec = desk_spec();
    let init = PlaneModel::new(
        &spec.categories,
        &TextEncoderConfig::default(),
        &PointEncoderConfig::default(),
        &HeadConfig::default(),
        DESK_SEEDS[0],
    )
    .unwrap();
    let trained = &desk.first_model;
    let mut detail = String::new();
    let mut pass = true;
    for cat in &spec.categories {
        let sample = desk.train.iter().find(|s| &s.category == cat).unwrap();
        let cloud = plane::geom3d::normalize_cloud(&sample.cloud);
        let distance = |model: &PlaneModel| -> f64 {
            let encoded = model.plm.point.encode(&cloud).unwrap();
            let ids = model.plm.vocab.tokenize(cat);
            let (fnt, fat) = model
                .head
                .text_features(&model.plm.text, &ids, &encoded.global)
                .unwrap();
            let dot: f64 = fnt.value().iter().zip(fat.value()).map(|(a, b)| a * b).sum();
            1.0 - dot
        };
        let (d0, d1) = (distance(&init), distance(trained));
        detail.push_str(&format!("{cat} {d0:.4}->{d1:.4} "));
        if d1 <= d0 {
            pass = false;
        }
    }
    Outcome {
        name: "criterion 9 (text feature separation grows)",
        pass,
        detail,
    }
}

// ---------------------------------------------------------------------------
// criterion 8: byte determinism + report round-trips
// ---------------------------------------------------------------------------

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let spec = DatasetSpec {
        categories: vec!["sphere".into(), "box".into()],
        train_per_class: 2,
        test_normal_per_class: 2,
        test_anomalous_per_class: 2,
        points_per_sample: 256,
        jitter: 0.01,
        seed: 99,
    };
    let ano = AnomalyConfig {
        neighbor_count: 32,
        removal_count: 31,
        mu: 0.1,
        sigma: 0.04,
        ..AnomalyConfig::default()
    };

    // identical seeds must give byte-identical datasets on disk
    let mut dataset_ok = true;
    let dirs: Vec<tempfile::TempDir> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let (train, test) = build_dataset(&spec, &ano).unwrap();
            let manifest = save_dataset(dir.path(), &train, &test).unwrap();
            manifest.save(&dir.path().join("manifest.json")).unwrap();
            dir
        })
        .collect();
    let (a, b) = (dir_bytes(dirs[0].path()), dir_bytes(dirs[1].path()));
    if a.is_empty() || a != b {
        dataset_ok = false;
    }

    // identical seeds must give byte-identical checkpoints
    let (train, test) = build_dataset(&spec, &ano).unwrap();
    let cats = vec!["sphere".to_string(), "box".to_string()];
    let train_once = || -> (Vec<u8>, PlaneModel) {
        let model =
            PlaneModel::new(&cats, &tiny_text_cfg(), &tiny_point_cfg(), &HeadConfig::default(), 5)
                .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let ano_small = AnomalyConfig {
            neighbor_count: 24,
            removal_count: 23,
            mu: 0.1,
            sigma: 0.04,
            hole_boundary_k: 8,
            ..AnomalyConfig::default()
        };
        fit(&model, &train, &cfg, &ano_small, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), 5).unwrap();
        (std::fs::read(dir.path().join("model.ckpt")).unwrap(), model)
    };
    let (ckpt_a, model) = train_once();
    let (ckpt_b, _) = train_once();
    let ckpt_ok = ckpt_a == ckpt_b;

    // CSV and JSON reports must round-trip losslessly
    let (_, report) = desk_eval(&model, &test);
    let csv = report.to_csv();
    let mut rebuilt = String::from("category,O-AUROC,P-AUROC,P-PRO,O-AP,P-AP,O-F1,P-F1\n");
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let vals: Vec<f64> = cells[1..].iter().map(|c| c.parse::<f64>().unwrap()).collect();
        rebuilt.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            cells[0], vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]
        ));
    }
    let csv_ok = rebuilt == csv;
    let json = serde_json::to_string(&report).unwrap();
    let parsed: EvalReport = serde_json::from_str(&json).unwrap();
    let json_ok = serde_json::to_string(&parsed).unwrap() == json
        && parsed
            .rows
            .iter()
            .zip(&report.rows)
            .all(|(x, y)| x.p_auroc == y.p_auroc && x.o_auroc == y.o_auroc);

    Outcome {
        name: "criterion 8 (determinism + report round-trip)",
        pass: dataset_ok && ckpt_ok && csv_ok && json_ok,
        detail: format!(
            "dataset bytes {dataset_ok}, checkpoint bytes {ckpt_ok}, csv {csv_ok}, json {json_ok}"
        ),
    }
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let mut outcomes = Vec::new();
    for f in [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_8] {
        let o = f();
        println!("{}", o.report());
        outcomes.push(o);
    }
    let desk = criterion_6();
    println!("{}", desk.c6.report());
    let c7 = criterion_7(&desk);
    println!("{}", c7.report());
    let c9 = criterion_9(&desk);
    println!("{}", c9.report());
    outcomes.push(desk.c6);
    outcomes.push(c7);
    outcomes.push(c9);

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    assert!(
        failed.is_empty(),
        "failed criteria:\n{}",
        failed.iter().map(|o| o.report()).collect::<Vec<_>>().join("\n")
    );
}
