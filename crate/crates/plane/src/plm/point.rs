//! Frozen point-cloud encoder: farthest-point-sampled patch grouping, a
//! per-group mini-MLP token embedding, and a transformer trunk with
//! intermediate-layer taps.
//!
//! Nothing downstream ever differentiates *into* this encoder (its inputs
//! are raw coordinates and its weights are frozen), so the forward pass runs
//! on plain f64 buffers and the outputs are exposed as constant tensors.

use super::PointEncoderConfig;
use crate::autodiff::{mm, Tensor};
use crate::geom3d::{dist2, jacobi_eigen, Mat3, Point3, PointCloud, SpatialIndex};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Geometric patch structure produced by grouping.
#[derive(Debug, Clone)]
pub struct Patches {
    pub centers: Vec<Point3>,
    /// G × k original point indices.
    pub groups: Vec<Vec<usize>>,
    /// Group member coordinates relative to their center.
    pub rel: Vec<Vec<Point3>>,
    /// For every original point, the index of its nearest center.
    pub member_map: Vec<usize>,
}

/// Encoder output: global feature, per-tap token features, and the patch
/// geometry needed to map token scores back to points.
pub struct EncodedPointCloud {
    /// Unit-norm [1, dim] global feature.
    pub global: Tensor,
    /// Per tap layer, a constant [G, dim] token feature matrix (the
    /// residual-stream output of that layer, pre-normalization).
    pub taps: Vec<Tensor>,
    pub patches: Patches,
}

struct RawLinear {
    w: Vec<f64>,
    b: Vec<f64>,
    fan_in: usize,
    fan_out: usize,
}

impl RawLinear {
    fn new(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, std: f64) -> RawLinear {
        RawLinear {
            w: super::text::randn(rng, fan_in * fan_out, std),
            b: vec![0.0; fan_out],
            fan_in,
            fan_out,
        }
    }

    fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = mm(x, &self.w, rows, self.fan_in, self.fan_out);
        for r in 0..rows {
            for c in 0..self.fan_out {
                y[r * self.fan_out + c] += self.b[c];
            }
        }
        y
    }

    fn named(&self, prefix: &str) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        vec![
            (format!("{prefix}.w"), vec![self.fan_in, self.fan_out], self.w.clone()),
            (format!("{prefix}.b"), vec![self.fan_out], self.b.clone()),
        ]
    }
}

fn layernorm_rows(x: &mut [f64], gamma: &[f64], beta: &[f64], cols: usize) {
    for row in x.chunks_mut(cols) {
        let mean: f64 = row.iter().sum::<f64>() / cols as f64;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gamma[c] + beta[c];
        }
    }
}

fn softmax_rows(x: &mut [f64], cols: usize) {
    for row in x.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn gelu_inplace(x: &mut [f64]) {
    const C: f64 = 0.7978845608028654;
    const A: f64 = 0.044715;
    for v in x.iter_mut() {
        *v = 0.5 * *v * (1.0 + (C * (*v + A * *v * *v * *v)).tanh());
    }
}

fn dot3(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Deterministic local frame of a patch: principal axes of the member
/// coordinates with signs fixed by the center direction (normal axis) and
/// the in-plane skewness (first tangent axis). The frame co-rotates with
/// the cloud, so coordinates expressed in it are pose-invariant.
///
/// Returns the axes (tangent-major, tangent-minor, normal), the per-axis
/// extents (eigenvalue square roots, descending), and the member-mean
/// offset expressed in the frame.
fn local_frame(rel: &[Point3], center: &Point3) -> ([Point3; 3], Point3, Point3) {
    let n = rel.len().max(1) as f64;
    let mut m = [0.0; 3];
    for p in rel {
        for a in 0..3 {
            m[a] += p[a] / n;
        }
    }
    let mut cov: Mat3 = [[0.0; 3]; 3];
    for p in rel {
        let d = [p[0] - m[0], p[1] - m[1], p[2] - m[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += d[r] * d[c] / n;
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let col = |i: usize| -> Point3 { [vecs[0][order[i]], vecs[1][order[i]], vecs[2][order[i]]] };
    let mut e1 = col(0);
    let mut e3 = col(2);
    // normal axis points along the center direction (outward on a closed
    // surface); degenerate centers fall back to a fixed axis
    let cref = if dot3(center, center) > 1e-18 { *center } else { [0.0, 0.0, 1.0] };
    if dot3(&e3, &cref) < 0.0 {
        for a in 0..3 {
            e3[a] = -e3[a];
        }
    }
    let skew: f64 = rel
        .iter()
        .map(|p| {
            let d = [p[0] - m[0], p[1] - m[1], p[2] - m[2]];
            dot3(&d, &e1).powi(3)
        })
        .sum();
    if skew < 0.0 {
        for a in 0..3 {
            e1[a] = -e1[a];
        }
    }
    // right-handed completion
    let e2 = [
        e3[1] * e1[2] - e3[2] * e1[1],
        e3[2] * e1[0] - e3[0] * e1[2],
        e3[0] * e1[1] - e3[1] * e1[0],
    ];
    let extents = [
        vals[order[0]].max(0.0).sqrt(),
        vals[order[1]].max(0.0).sqrt(),
        vals[order[2]].max(0.0).sqrt(),
    ];
    let mean_local = [dot3(&m, &e1), dot3(&m, &e2), dot3(&m, &e3)];
    ([e1, e2, e3], extents, mean_local)
}

struct RawLayer {
    ln1_g: Vec<f64>,
    ln1_b: Vec<f64>,
    wq: RawLinear,
    wk: RawLinear,
    wv: RawLinear,
    wo: RawLinear,
    ln2_g: Vec<f64>,
    ln2_b: Vec<f64>,
    ff1: RawLinear,
    ff2: RawLinear,
}

impl RawLayer {
    fn new(rng: &mut ChaCha8Rng, dim: usize) -> RawLayer {
        RawLayer {
            ln1_g: vec![1.0; dim],
            ln1_b: vec![0.0; dim],
            wq: RawLinear::new(rng, dim, dim, 0.05),
            wk: RawLinear::new(rng, dim, dim, 0.05),
            wv: RawLinear::new(rng, dim, dim, 0.05),
            wo: RawLinear::new(rng, dim, dim, 0.05),
            ln2_g: vec![1.0; dim],
            ln2_b: vec![0.0; dim],
            ff1: RawLinear::new(rng, dim, 4 * dim, 0.05),
            ff2: RawLinear::new(rng, 4 * dim, dim, 0.05),
        }
    }

    fn forward(&self, x: &mut Vec<f64>, rows: usize, dim: usize, heads: usize) {
        let dh = dim / heads;
        let mut h = x.clone();
        layernorm_rows(&mut h, &self.ln1_g, &self.ln1_b, dim);
        let q = self.wq.forward(&h, rows);
        let k = self.wk.forward(&h, rows);
        let v = self.wv.forward(&h, rows);
        let mut attended = vec![0.0; rows * dim];
        let scale = 1.0 / (dh as f64).sqrt();
        for head in 0..heads {
            let off = head * dh;
            // scores[r1][r2] = q_h[r1] · k_h[r2]
            let mut scores = vec![0.0; rows * rows];
            for r1 in 0..rows {
                for r2 in 0..rows {
                    let mut dot = 0.0;
                    for c in 0..dh {
                        dot += q[r1 * dim + off + c] * k[r2 * dim + off + c];
                    }
                    scores[r1 * rows + r2] = dot * scale;
                }
            }
            softmax_rows(&mut scores, rows);
            for r1 in 0..rows {
                for r2 in 0..rows {
                    let a = scores[r1 * rows + r2];
                    if a == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        attended[r1 * dim + off + c] += a * v[r2 * dim + off + c];
                    }
                }
            }
        }
        let proj = self.wo.forward(&attended, rows);
        for (xi, pi) in x.iter_mut().zip(&proj) {
            *xi += pi;
        }
        let mut h2 = x.clone();
        layernorm_rows(&mut h2, &self.ln2_g, &self.ln2_b, dim);
        let mut ff = self.ff1.forward(&h2, rows);
        gelu_inplace(&mut ff);
        let ff = self.ff2.forward(&ff, rows);
        for (xi, fi) in x.iter_mut().zip(&ff) {
            *xi += fi;
        }
    }

    fn named(&self, prefix: &str) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let dim = self.ln1_g.len();
        let mut out = vec![
            (format!("{prefix}.ln1.g"), vec![dim], self.ln1_g.clone()),
            (format!("{prefix}.ln1.b"), vec![dim], self.ln1_b.clone()),
            (format!("{prefix}.ln2.g"), vec![dim], self.ln2_g.clone()),
            (format!("{prefix}.ln2.b"), vec![dim], self.ln2_b.clone()),
        ];
        out.extend(self.wq.named(&format!("{prefix}.wq")));
        out.extend(self.wk.named(&format!("{prefix}.wk")));
        out.extend(self.wv.named(&format!("{prefix}.wv")));
        out.extend(self.wo.named(&format!("{prefix}.wo")));
        out.extend(self.ff1.named(&format!("{prefix}.ff1")));
        out.extend(self.ff2.named(&format!("{prefix}.ff2")));
        out
    }
}

pub struct PointEncoder {
    pub cfg: PointEncoderConfig,
    token_mlp1: RawLinear,
    token_mlp2: RawLinear,
    center_mlp1: RawLinear,
    center_mlp2: RawLinear,
    layers: Vec<RawLayer>,
    ln_f_g: Vec<f64>,
    ln_f_b: Vec<f64>,
}

impl PointEncoder {
    pub fn new(cfg: &PointEncoderConfig, seed: u64) -> PointEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = cfg.dim;
        PointEncoder {
            cfg: cfg.clone(),
            // patch-relative coordinates are small, so the first local map is
            // wide; the center embedding is a two-layer random-feature
            // expansion over pose-invariant patch scalars so nonlinear
            // functions of them (such as distance off the surface) stay
            // linearly readable downstream
            token_mlp1: RawLinear::new(&mut rng, 3, dim, 4.0),
            token_mlp2: RawLinear::new(&mut rng, dim, dim, 0.3),
            center_mlp1: RawLinear::new(&mut rng, 6, dim, 2.0),
            center_mlp2: RawLinear::new(&mut rng, dim, dim, 0.12),
            layers: (0..cfg.layers).map(|_| RawLayer::new(&mut rng, dim)).collect(),
            ln_f_g: vec![1.0; dim],
            ln_f_b: vec![0.0; dim],
        }
    }

    /// Groups the cloud into G patches: FPS centers, k-nearest membership,
    /// and center-relative coordinates.
    ///
    /// Grouping is a function of geometry alone: the FPS runs over a
    /// canonically sorted point order with a seed derived from the content
    /// hash of the point set, so permuting the input point order does not
    /// change the patches.
    pub fn patchify(&self, cloud: &PointCloud) -> Result<Patches> {
        let g = self.cfg.groups;
        let k = self.cfg.group_size;
        let n = cloud.len();
        if n < g {
            return Err(Error::InsufficientPoints {
                requested: g,
                available: n,
            });
        }
        let k = k.min(n);

        // canonical order: lexicographic by coordinates
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&cloud.points[a], &cloud.points[b]);
            pa[0]
                .total_cmp(&pb[0])
                .then(pa[1].total_cmp(&pb[1]))
                .then(pa[2].total_cmp(&pb[2]))
        });

        // greedy FPS over the canonical order
        let mut rng = ChaCha8Rng::seed_from_u64(cloud.content_hash());
        let first = rng.random_range(0..n);
        let mut chosen_canonical = vec![first];
        let mut min_d2: Vec<f64> = order
            .iter()
            .map(|&i| dist2(&cloud.points[i], &cloud.points[order[first]]))
            .collect();
        while chosen_canonical.len() < g {
            let mut best = 0;
            let mut best_d = f64::NEG_INFINITY;
            for (c, &d) in min_d2.iter().enumerate() {
                if d > best_d {
                    best_d = d;
                    best = c;
                }
            }
            chosen_canonical.push(best);
            for (c, d) in min_d2.iter_mut().enumerate() {
                let nd = dist2(&cloud.points[order[c]], &cloud.points[order[best]]);
                if nd < *d {
                    *d = nd;
                }
            }
        }
        let centers: Vec<Point3> = chosen_canonical
            .iter()
            .map(|&c| cloud.points[order[c]])
            .collect();

        let index = SpatialIndex::build(&cloud.points);
        let mut groups = Vec::with_capacity(g);
        let mut rel = Vec::with_capacity(g);
        for center in &centers {
            let members: Vec<usize> = index.knn(center, k)?.into_iter().map(|(i, _)| i).collect();
            let coords: Vec<Point3> = members
                .iter()
                .map(|&i| {
                    let p = &cloud.points[i];
                    [p[0] - center[0], p[1] - center[1], p[2] - center[2]]
                })
                .collect();
            groups.push(members);
            rel.push(coords);
        }

        let member_map: Vec<usize> = cloud
            .points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = dist2(p, center);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect();

        Ok(Patches {
            centers,
            groups,
            rel,
            member_map,
        })
    }

    /// Full forward pass: patchify, embed tokens, run the trunk, capture
    /// taps, and mean-pool the global feature.
    pub fn encode(&self, cloud: &PointCloud) -> Result<EncodedPointCloud> {
        let patches = self.patchify(cloud)?;
        let dim = self.cfg.dim;
        let g = self.cfg.groups;

        // per-group mini-PointNet over local-frame coordinates: pointwise
        // map, columnwise max-pool, then a mixing map on the pooled vector;
        // the pooled channels are support functions of the patch in random
        // frame-relative directions, so tokens do not depend on cloud pose
        let mut pooled_tokens = vec![0.0; g * dim];
        let mut center_feats = vec![0.0; g * 6];
        for (gi, coords) in patches.rel.iter().enumerate() {
            let center = &patches.centers[gi];
            let (axes, extents, mean_local) = local_frame(coords, center);
            let flat: Vec<f64> = coords
                .iter()
                .flat_map(|p| [dot3(p, &axes[0]), dot3(p, &axes[1]), dot3(p, &axes[2])])
                .collect();
            let mut h = self.token_mlp1.forward(&flat, coords.len());
            for v in h.iter_mut() {
                *v = v.max(0.0);
            }
            let token = &mut pooled_tokens[gi * dim..(gi + 1) * dim];
            for c in 0..dim {
                token[c] = (0..coords.len())
                    .map(|r| h[r * dim + c])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            // pose-invariant patch scalars: radial offset from the median
            // shell, normal-to-radial alignment, extents, normal mean offset
            let cn = dot3(center, center).sqrt();
            let chat = if cn > 1e-9 {
                [center[0] / cn, center[1] / cn, center[2] / cn]
            } else {
                [0.0, 0.0, 1.0]
            };
            center_feats[gi * 6..(gi + 1) * 6].copy_from_slice(&[
                cn - 1.0,
                dot3(&axes[2], &chat),
                extents[0],
                extents[1],
                extents[2],
                mean_local[2],
            ]);
        }
        let mut tokens = self.token_mlp2.forward(&pooled_tokens, g);
        let mut center_h = self.center_mlp1.forward(&center_feats, g);
        gelu_inplace(&mut center_h);
        let center_emb = self.center_mlp2.forward(&center_h, g);
        for (t, c) in tokens.iter_mut().zip(&center_emb) {
            *t += c;
        }

        let mut taps = Vec::with_capacity(self.cfg.tap_layers.len());
        let mut x = tokens;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.forward(&mut x, g, dim, self.cfg.heads);
            if self.cfg.tap_layers.contains(&(li + 1)) {
                taps.push(Tensor::constant(&[g, dim], x.clone()));
            }
        }
        layernorm_rows(&mut x, &self.ln_f_g, &self.ln_f_b, dim);
        let mut pooled = vec![0.0; dim];
        for row in x.chunks(dim) {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        let norm = pooled.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
        for p in pooled.iter_mut() {
            *p /= norm;
        }
        Ok(EncodedPointCloud {
            global: Tensor::constant(&[1, dim], pooled),
            taps,
            patches,
        })
    }

    pub fn parameters(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let dim = self.cfg.dim;
        let mut out = self.token_mlp1.named("point_encoder.token_mlp1");
        out.extend(self.token_mlp2.named("point_encoder.token_mlp2"));
        out.extend(self.center_mlp1.named("point_encoder.center_mlp1"));
        out.extend(self.center_mlp2.named("point_encoder.center_mlp2"));
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.named(&format!("point_encoder.layer{i:02}")));
        }
        out.push(("point_encoder.ln_f.g".to_string(), vec![dim], self.ln_f_g.clone()));
        out.push(("point_encoder.ln_f.b".to_string(), vec![dim], self.ln_f_b.clone()));
        out
    }

    pub fn load_parameters(
        &mut self,
        entries: &HashMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> Result<()> {
        let assign = |name: &str, target: &mut Vec<f64>| -> Result<()> {
            let (_, data) = entries
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
            if data.len() != target.len() {
                return Err(Error::Checkpoint(format!("size mismatch for '{name}'")));
            }
            *target = data.clone();
            Ok(())
        };
        let names: Vec<String> = self.parameters().into_iter().map(|(n, _, _)| n).collect();
        for name in names {
            // route each flat buffer back to its field
            let data_ref: &mut Vec<f64> = match name.as_str() {
                "point_encoder.token_mlp1.w" => &mut self.token_mlp1.w,
                "point_encoder.token_mlp1.b" => &mut self.token_mlp1.b,
                "point_encoder.token_mlp2.w" => &mut self.token_mlp2.w,
                "point_encoder.token_mlp2.b" => &mut self.token_mlp2.b,
                "point_encoder.center_mlp1.w" => &mut self.center_mlp1.w,
                "point_encoder.center_mlp1.b" => &mut self.center_mlp1.b,
                "point_encoder.center_mlp2.w" => &mut self.center_mlp2.w,
                "point_encoder.center_mlp2.b" => &mut self.center_mlp2.b,
                "point_encoder.ln_f.g" => &mut self.ln_f_g,
                "point_encoder.ln_f.b" => &mut self.ln_f_b,
                other => {
                    let rest = other.strip_prefix("point_encoder.layer").unwrap();
                    let (idx, field) = rest.split_once('.').unwrap();
                    let layer = &mut self.layers[idx.parse::<usize>().unwrap()];
                    match field {
                        "ln1.g" => &mut layer.ln1_g,
                        "ln1.b" => &mut layer.ln1_b,
                        "ln2.g" => &mut layer.ln2_g,
                        "ln2.b" => &mut layer.ln2_b,
                        "wq.w" => &mut layer.wq.w,
                        "wq.b" => &mut layer.wq.b,
                        "wk.w" => &mut layer.wk.w,
                        "wk.b" => &mut layer.wk.b,
                        "wv.w" => &mut layer.wv.w,
                        "wv.b" => &mut layer.wv.b,
                        "wo.w" => &mut layer.wo.w,
                        "wo.b" => &mut layer.wo.b,
                        "ff1.w" => &mut layer.ff1.w,
                        "ff1.b" => &mut layer.ff1.b,
                        "ff2.w" => &mut layer.ff2.w,
                        "ff2.b" => &mut layer.ff2.b,
                        _ => return Err(Error::Checkpoint(format!("unknown field '{other}'"))),
                    }
                }
            };
            assign(&name, data_ref)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn sphere_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        while points.len() < n {
            let v = [
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if norm > 1e-3 {
                points.push([v[0] / norm, v[1] / norm, v[2] / norm]);
            }
        }
        PointCloud::new(points, None, "sphere").unwrap()
    }

    fn small_cfg() -> PointEncoderConfig {
        PointEncoderConfig {
            groups: 16,
            group_size: 8,
            dim: 32,
            layers: 4,
            heads: 4,
            tap_layers: vec![1, 3],
        }
    }

    #[test]
    fn patchify_trivial_one_point_groups() {
        let cloud = sphere_cloud(16, 1);
        let cfg = PointEncoderConfig {
            groups: 16,
            group_size: 1,
            ..small_cfg()
        };
        let enc = PointEncoder::new(&cfg, 0);
        let patches = enc.patchify(&cloud).unwrap();
        for (gi, coords) in patches.rel.iter().enumerate() {
            assert_eq!(coords.len(), 1);
            assert_eq!(coords[0], [0.0, 0.0, 0.0], "group {gi} should be its own center");
        }
    }

    #[test]
    fn every_group_has_k_members_and_map_matches_brute_force() {
        let cloud = sphere_cloud(300, 2);
        let enc = PointEncoder::new(&small_cfg(), 0);
        let patches = enc.patchify(&cloud).unwrap();
        for group in &patches.groups {
            assert_eq!(group.len(), 8);
        }
        for (i, p) in cloud.points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in patches.centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assert_eq!(patches.member_map[i], best);
        }
    }

    #[test]
    fn encode_is_deterministic_and_unit_norm() {
        let cloud = sphere_cloud(300, 3);
        let enc = PointEncoder::new(&small_cfg(), 0);
        let a = enc.encode(&cloud).unwrap();
        let b = enc.encode(&cloud).unwrap();
        assert_eq!(a.global.value(), b.global.value());
        let norm: f64 = a.global.value().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_eq!(a.taps.len(), 2);
    }

    #[test]
    fn encode_is_point_order_invariant() {
        let cloud = sphere_cloud(300, 4);
        let enc = PointEncoder::new(&small_cfg(), 0);
        let a = enc.encode(&cloud).unwrap();
        let mut permuted = cloud.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        permuted.points.shuffle(&mut rng);
        let b = enc.encode(&permuted).unwrap();
        for (x, y) in a.global.value().iter().zip(b.global.value()) {
            assert!((x - y).abs() < 1e-9);
        }
        for (ta, tb) in a.taps.iter().zip(&b.taps) {
            for (x, y) in ta.value().iter().zip(tb.value()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parameter_round_trip() {
        let mut enc = PointEncoder::new(&small_cfg(), 0);
        let reference = PointEncoder::new(&small_cfg(), 99);
        let entries: HashMap<String, (Vec<usize>, Vec<f64>)> = reference
            .parameters()
            .into_iter()
            .map(|(n, s, d)| (n, (s, d)))
            .collect();
        enc.load_parameters(&entries).unwrap();
        for ((_, _, a), (_, _, b)) in enc.parameters().iter().zip(reference.parameters().iter()) {
            assert_eq!(a, b);
        }
    }
}
