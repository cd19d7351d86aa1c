//! Pseudo 3D anomaly generation: bulge, concavity, and hole defects with
//! ground-truth masks.
//!
//! A defect is seeded and fully deterministic: a random center is drawn, its
//! neighborhood selected by nearest-neighbor search, and either displaced
//! along the patch normal (bulge outward, concavity inward) or removed
//! (hole). Masks mark exactly the affected points; for holes the surviving
//! boundary ring around the removed set carries the labels.

use crate::geom3d::{
    self, knn, rotation_matrix, Point3, PointCloud, RotationAngles, SpatialIndex,
};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectKind {
    Bulge,
    Concavity,
    Hole,
    None,
}

impl std::str::FromStr for DefectKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bulge" => Ok(DefectKind::Bulge),
            "concavity" => Ok(DefectKind::Concavity),
            "hole" => Ok(DefectKind::Hole),
            "none" => Ok(DefectKind::None),
            "random" => Err(Error::InvalidArgument(
                "pass no --type flag for a random defect".into(),
            )),
            other => Err(Error::InvalidArgument(format!("unknown defect type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnomalyConfig {
    /// Defect to apply; `None` draws uniformly among bulge/concavity/hole.
    pub defect_type: Option<DefectKind>,
    /// Neighbor count for bulge/concavity.
    pub neighbor_count: usize,
    /// Removal count for holes: the center plus its `removal_count` nearest
    /// neighbors are deleted.
    pub removal_count: usize,
    /// Mean displacement, in normalized-cloud units.
    pub mu: f64,
    /// Displacement standard deviation.
    pub sigma: f64,
    /// Surviving points labeled around a hole.
    pub hole_boundary_k: usize,
    /// When set, every displaced point draws its own magnitude instead of
    /// sharing a single draw per defect.
    pub per_point_jitter: bool,
    pub seed: u64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            defect_type: None,
            neighbor_count: 64,
            removal_count: 63,
            mu: 0.05,
            sigma: 0.02,
            hole_boundary_k: 16,
            per_point_jitter: false,
            seed: 0,
        }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_count < 3 {
            return Err(Error::InvalidArgument("neighbor count must be >= 3".into()));
        }
        if self.sigma <= 0.0 || self.mu <= 0.0 {
            return Err(Error::InvalidArgument("mu and sigma must be > 0".into()));
        }
        Ok(())
    }

    /// Clamped-Gaussian displacement magnitude: max(draw, σ/2).
    fn draw_magnitude(&self, rng: &mut impl Rng) -> f64 {
        let normal = Normal::new(self.mu, self.sigma).expect("sigma > 0");
        normal.sample(rng).max(self.sigma / 2.0)
    }
}

/// Everything needed to audit or replay a generated defect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectMeta {
    pub kind: DefectKind,
    pub seed: u64,
    pub angles: Option<[f64; 3]>,
    pub center_index: Option<usize>,
    /// Displacement magnitude (bulge/concavity), one entry per displaced
    /// point when per-point jitter is on, otherwise a single shared value.
    pub magnitudes: Vec<f64>,
    pub normal: Option<Point3>,
    pub removed_indices: Vec<usize>,
    pub config: AnomalyConfig,
}

impl DefectMeta {
    fn empty(kind: DefectKind, cfg: &AnomalyConfig) -> Self {
        DefectMeta {
            kind,
            seed: cfg.seed,
            angles: None,
            center_index: None,
            magnitudes: Vec::new(),
            normal: None,
            removed_indices: Vec::new(),
            config: cfg.clone(),
        }
    }
}

const MAX_CENTER_ATTEMPTS: usize = 8;

fn displaced_defect(
    cloud: &PointCloud,
    cfg: &AnomalyConfig,
    rng: &mut ChaCha8Rng,
    inward: bool,
) -> Result<(PointCloud, Vec<u8>, DefectMeta)> {
    cfg.validate()?;
    let n = cloud.len();
    let m = cfg.neighbor_count;
    if n < m {
        return Err(Error::InsufficientPoints {
            requested: m,
            available: n,
        });
    }
    let index = SpatialIndex::build(&cloud.points);
    let mut last_err = None;
    for _ in 0..MAX_CENTER_ATTEMPTS {
        let center = rng.random_range(0..n);
        let neighbors: Vec<usize> = index
            .knn(&cloud.points[center], m)?
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        match geom3d::estimate_normal(cloud, &neighbors) {
            Ok(mut normal) => {
                if inward {
                    for a in 0..3 {
                        normal[a] = -normal[a];
                    }
                }
                let magnitudes: Vec<f64> = if cfg.per_point_jitter {
                    (0..m).map(|_| cfg.draw_magnitude(rng)).collect()
                } else {
                    vec![cfg.draw_magnitude(rng)]
                };
                let mut points = cloud.points.clone();
                let mut mask = vec![0u8; n];
                for (j, &i) in neighbors.iter().enumerate() {
                    let t = magnitudes[if cfg.per_point_jitter { j } else { 0 }];
                    for a in 0..3 {
                        points[i][a] += t * normal[a];
                    }
                    mask[i] = 1;
                }
                let out = PointCloud {
                    points,
                    labels: Some(mask.clone()),
                    class_name: cloud.class_name.clone(),
                };
                let kind = if inward {
                    DefectKind::Concavity
                } else {
                    DefectKind::Bulge
                };
                let meta = DefectMeta {
                    kind,
                    seed: cfg.seed,
                    angles: None,
                    center_index: Some(center),
                    magnitudes,
                    normal: Some(normal),
                    removed_indices: Vec::new(),
                    config: cfg.clone(),
                };
                return Ok((out, mask, meta));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::DefectGeneration {
        attempts: MAX_CENTER_ATTEMPTS,
        reason: last_err
            .map(|e| e.to_string())
            .unwrap_or_else(|| "no valid center".into()),
    })
}

/// Displaces a random M-point patch along its outward normal.
pub fn gen_bulge(cloud: &PointCloud, cfg: &AnomalyConfig) -> Result<(PointCloud, Vec<u8>, DefectMeta)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    displaced_defect(cloud, cfg, &mut rng, false)
}

/// Displaces a random M-point patch along its inward normal.
pub fn gen_concavity(cloud: &PointCloud, cfg: &AnomalyConfig) -> Result<(PointCloud, Vec<u8>, DefectMeta)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    displaced_defect(cloud, cfg, &mut rng, true)
}

fn hole_defect(
    cloud: &PointCloud,
    cfg: &AnomalyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(PointCloud, Vec<u8>, DefectMeta)> {
    cfg.validate()?;
    let n = cloud.len();
    let removed_total = cfg.removal_count + 1;
    if n < removed_total + cfg.hole_boundary_k {
        return Err(Error::InsufficientPoints {
            requested: removed_total + cfg.hole_boundary_k,
            available: n,
        });
    }
    let center = rng.random_range(0..n);
    let removed: Vec<usize> = knn(cloud, &cloud.points[center], removed_total)?
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    let mut removed_flag = vec![false; n];
    for &i in &removed {
        removed_flag[i] = true;
    }
    let mut hole_centroid = [0.0; 3];
    for &i in &removed {
        for a in 0..3 {
            hole_centroid[a] += cloud.points[i][a];
        }
    }
    for a in 0..3 {
        hole_centroid[a] /= removed.len() as f64;
    }

    let mut survivors = Vec::with_capacity(n - removed_total);
    for i in 0..n {
        if !removed_flag[i] {
            survivors.push(cloud.points[i]);
        }
    }
    let surviving = PointCloud {
        points: survivors,
        labels: None,
        class_name: cloud.class_name.clone(),
    };
    let mut mask = vec![0u8; surviving.len()];
    for (i, _) in knn(&surviving, &hole_centroid, cfg.hole_boundary_k)? {
        mask[i] = 1;
    }
    let out = PointCloud {
        labels: Some(mask.clone()),
        ..surviving
    };
    let meta = DefectMeta {
        kind: DefectKind::Hole,
        seed: cfg.seed,
        angles: None,
        center_index: Some(center),
        magnitudes: Vec::new(),
        normal: None,
        removed_indices: removed,
        config: cfg.clone(),
    };
    Ok((out, mask, meta))
}

/// Removes a random point and its X nearest neighbors, labeling the
/// surviving boundary ring.
pub fn gen_hole(cloud: &PointCloud, cfg: &AnomalyConfig) -> Result<(PointCloud, Vec<u8>, DefectMeta)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    hole_defect(cloud, cfg, &mut rng)
}

/// Full augmentation: seeded random rotation followed by the configured
/// defect (or a uniformly random type when none is configured).
/// `DefectKind::None` yields the rotated cloud with an all-zero mask.
pub fn ano3d_augment(
    cloud: &PointCloud,
    cfg: &AnomalyConfig,
    seed: u64,
) -> Result<(PointCloud, Vec<u8>, DefectMeta)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles = RotationAngles::random(&mut rng);
    let rotation = rotation_matrix(angles);
    let rotated = cloud.rotated(&rotation);
    let kind = match cfg.defect_type {
        Some(k) => k,
        None => match rng.random_range(0..3u8) {
            0 => DefectKind::Bulge,
            1 => DefectKind::Concavity,
            _ => DefectKind::Hole,
        },
    };
    let cfg = AnomalyConfig {
        seed,
        ..cfg.clone()
    };
    let (out, mask, mut meta) = match kind {
        DefectKind::Bulge => displaced_defect(&rotated, &cfg, &mut rng, false)?,
        DefectKind::Concavity => displaced_defect(&rotated, &cfg, &mut rng, true)?,
        DefectKind::Hole => hole_defect(&rotated, &cfg, &mut rng)?,
        DefectKind::None => {
            let mask = vec![0u8; rotated.len()];
            let out = PointCloud {
                labels: Some(mask.clone()),
                ..rotated.clone()
            };
            (out, mask, DefectMeta::empty(DefectKind::None, &cfg))
        }
    };
    meta.angles = Some([angles.theta_x, angles.theta_y, angles.theta_z]);
    Ok((out, mask, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3d::dist2;

    fn disc_cloud(n_side: usize) -> PointCloud {
        // flat grid in the z = 0 plane
        let mut points = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                points.push([i as f64 * 0.05, j as f64 * 0.05, 0.0]);
            }
        }
        PointCloud::new(points, None, "disc").unwrap()
    }

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

    #[test]
    fn bulge_on_disc_displaces_along_z() {
        let cloud = disc_cloud(20);
        let cfg = AnomalyConfig {
            neighbor_count: 16,
            seed: 3,
            ..AnomalyConfig::default()
        };
        let (out, mask, meta) = gen_bulge(&cloud, &cfg).unwrap();
        let t = meta.magnitudes[0];
        assert!(t > 0.0);
        let mut displaced = 0;
        for i in 0..cloud.len() {
            if mask[i] == 1 {
                displaced += 1;
                assert!((out.points[i][2] - t).abs() < 1e-12, "z should be +t");
            } else {
                assert_eq!(out.points[i], cloud.points[i]);
            }
        }
        assert_eq!(displaced, 16);
    }

    #[test]
    fn concavity_displaces_inward() {
        let cloud = sphere_cloud(600, 1);
        let cfg = AnomalyConfig {
            neighbor_count: 24,
            seed: 9,
            ..AnomalyConfig::default()
        };
        let (out, mask, meta) = gen_concavity(&cloud, &cfg).unwrap();
        let normal = meta.normal.unwrap();
        let t = meta.magnitudes[0];
        for i in 0..cloud.len() {
            if mask[i] == 1 {
                // signed displacement along the stored (inward) normal
                let d = [
                    out.points[i][0] - cloud.points[i][0],
                    out.points[i][1] - cloud.points[i][1],
                    out.points[i][2] - cloud.points[i][2],
                ];
                let along = d[0] * normal[0] + d[1] * normal[1] + d[2] * normal[2];
                assert!((along - t).abs() < 1e-9);
            }
        }
        assert_eq!(mask.iter().filter(|&&m| m == 1).count(), 24);
        // inward means toward the centroid (origin for a sphere): the patch
        // center moved closer to the origin
        let c = meta.center_index.unwrap();
        let before = dist2(&cloud.points[c], &[0.0; 3]);
        let after = dist2(&out.points[c], &[0.0; 3]);
        assert!(after < before);
    }

    #[test]
    fn hole_removes_exactly_x_plus_one() {
        let cloud = sphere_cloud(2048, 2);
        let cfg = AnomalyConfig {
            removal_count: 63,
            seed: 5,
            ..AnomalyConfig::default()
        };
        let (out, mask, meta) = gen_hole(&cloud, &cfg).unwrap();
        assert_eq!(out.len(), 2048 - 64);
        assert_eq!(meta.removed_indices.len(), 64);
        assert_eq!(mask.iter().filter(|&&m| m == 1).count(), cfg.hole_boundary_k);
        // removed set equals the brute-force (X+1)-nearest set of the center
        let center = meta.center_index.unwrap();
        let mut dists: Vec<(usize, f64)> = cloud
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist2(p, &cloud.points[center])))
            .collect();
        dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = dists[..64].iter().map(|(i, _)| *i).collect();
        assert_eq!(meta.removed_indices, expected);
    }

    #[test]
    fn hole_x_zero_removes_one_point() {
        let cloud = sphere_cloud(256, 4);
        let cfg = AnomalyConfig {
            removal_count: 0,
            seed: 1,
            ..AnomalyConfig::default()
        };
        let (out, _, _) = gen_hole(&cloud, &cfg).unwrap();
        assert_eq!(out.len(), 255);
    }

    #[test]
    fn hole_precondition_violation_errors() {
        let cloud = sphere_cloud(50, 4);
        let cfg = AnomalyConfig {
            removal_count: 63,
            seed: 1,
            ..AnomalyConfig::default()
        };
        assert!(gen_hole(&cloud, &cfg).is_err());
    }

    #[test]
    fn augment_none_is_pure_rotation() {
        let cloud = sphere_cloud(300, 6);
        let cfg = AnomalyConfig {
            defect_type: Some(DefectKind::None),
            ..AnomalyConfig::default()
        };
        let (out, mask, _) = ano3d_augment(&cloud, &cfg, 17).unwrap();
        assert!(mask.iter().all(|&m| m == 0));
        for i in 0..cloud.len() {
            for j in (i + 1)..cloud.len().min(i + 5) {
                let d0 = dist2(&cloud.points[i], &cloud.points[j]).sqrt();
                let d1 = dist2(&out.points[i], &out.points[j]).sqrt();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn augment_is_deterministic() {
        let cloud = sphere_cloud(500, 7);
        let cfg = AnomalyConfig::default();
        let (a, am, _) = ano3d_augment(&cloud, &cfg, 123).unwrap();
        let (b, bm, _) = ano3d_augment(&cloud, &cfg, 123).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(am, bm);
    }

    #[test]
    fn augment_rotation_commutes_through_metadata() {
        let cloud = sphere_cloud(400, 8);
        let cfg = AnomalyConfig {
            defect_type: Some(DefectKind::Bulge),
            neighbor_count: 20,
            ..AnomalyConfig::default()
        };
        let (out, mask, meta) = ano3d_augment(&cloud, &cfg, 55).unwrap();
        let [tx, ty, tz] = meta.angles.unwrap();
        let r = rotation_matrix(RotationAngles {
            theta_x: tx,
            theta_y: ty,
            theta_z: tz,
        });
        let rt = geom3d::transpose(&r);
        let unrotated_out = out.rotated(&rt);
        // re-apply the recorded defect on the un-rotated cloud: displace the
        // same indices by the same magnitude along the un-rotated normal
        let normal_world = meta.normal.unwrap();
        let normal_local = geom3d::mat_vec(&rt, &normal_world);
        let t = meta.magnitudes[0];
        for i in 0..cloud.len() {
            let expect = if mask[i] == 1 {
                [
                    cloud.points[i][0] + t * normal_local[0],
                    cloud.points[i][1] + t * normal_local[1],
                    cloud.points[i][2] + t * normal_local[2],
                ]
            } else {
                cloud.points[i]
            };
            for a in 0..3 {
                assert!((unrotated_out.points[i][a] - expect[a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn displacement_magnitudes_respect_clamp() {
        let cloud = sphere_cloud(300, 9);
        for seed in 0..50 {
            let cfg = AnomalyConfig {
                neighbor_count: 12,
                mu: 0.01,
                sigma: 0.05,
                seed,
                ..AnomalyConfig::default()
            };
            let (_, _, meta) = gen_bulge(&cloud, &cfg).unwrap();
            assert!(meta.magnitudes[0] >= cfg.sigma / 2.0);
        }
    }

    #[test]
    fn default_mask_fraction_stays_low() {
        let cloud = sphere_cloud(2048, 10);
        let cfg = AnomalyConfig::default();
        for seed in 0..20 {
            let (out, mask, _) = ano3d_augment(&cloud, &cfg, seed).unwrap();
            let frac = mask.iter().filter(|&&m| m == 1).count() as f64 / out.len() as f64;
            assert!(frac < 0.10, "seed {seed}: mask fraction {frac}");
        }
    }
}
