//! Dataset assembly: a parametric desk-scale shape corpus, pseudo-anomaly
//! test splits, JSON manifests, and loaders for the two published real
//! dataset layouts.

use crate::ano3d::{ano3d_augment, AnomalyConfig, DefectKind};
use crate::geom3d::{self, PointCloud};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ShapeKind> {
        match s.to_lowercase().as_str() {
            "sphere" => Ok(ShapeKind::Sphere),
            "box" => Ok(ShapeKind::Box),
            "cylinder" => Ok(ShapeKind::Cylinder),
            "cone" => Ok(ShapeKind::Cone),
            "torus" => Ok(ShapeKind::Torus),
            other => Err(Error::InvalidArgument(format!("unknown shape kind '{other}'"))),
        }
    }
}

/// Uniform surface sample of a parametric shape, jittered and normalized to
/// the unit ball.
pub fn synth_shape(kind: ShapeKind, n: usize, jitter: f64, seed: u64) -> Result<PointCloud> {
    if n < 64 {
        return Err(Error::InvalidArgument(format!("need at least 64 points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        points.push(sample_surface(kind, &mut rng));
    }
    if jitter > 0.0 {
        let normal = Normal::new(0.0, jitter).expect("jitter > 0");
        for p in points.iter_mut() {
            for c in p.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }
    // shapes are centered by construction, so scale by the analytic
    // bounding radius instead of recentering on the empirical centroid,
    // which would pull points off the surface
    let radius = match kind {
        ShapeKind::Sphere => 1.0,
        ShapeKind::Box => 3.0f64.sqrt(),
        ShapeKind::Cylinder => 1.25f64.sqrt(),
        ShapeKind::Cone => 2.0f64.sqrt(),
        ShapeKind::Torus => 1.3,
    };
    for p in points.iter_mut() {
        for c in p.iter_mut() {
            *c /= radius;
        }
    }
    PointCloud::new(points, None, kind.name())
}

fn sample_surface(kind: ShapeKind, rng: &mut ChaCha8Rng) -> [f64; 3] {
    match kind {
        ShapeKind::Sphere => {
            // isotropic direction from normal deviates
            let normal = Normal::new(0.0, 1.0).unwrap();
            loop {
                let v: [f64; 3] = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if len > 1e-6 {
                    return [v[0] / len, v[1] / len, v[2] / len];
                }
            }
        }
        ShapeKind::Box => {
            // six equal-area faces of [-1,1]^3
            let face = rng.random_range(0..6u8);
            let u = rng.random_range(-1.0..1.0);
            let v = rng.random_range(-1.0..1.0);
            match face {
                0 => [1.0, u, v],
                1 => [-1.0, u, v],
                2 => [u, 1.0, v],
                3 => [u, -1.0, v],
                4 => [u, v, 1.0],
                _ => [u, v, -1.0],
            }
        }
        ShapeKind::Cylinder => {
            // r = 0.5, z in [-1, 1]; lateral vs cap areas decide placement
            let r = 0.5;
            let lateral = 2.0 * std::f64::consts::PI * r * 2.0;
            let caps = 2.0 * std::f64::consts::PI * r * r;
            if rng.random_range(0.0..lateral + caps) < lateral {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                [r * theta.cos(), r * theta.sin(), rng.random_range(-1.0..1.0)]
            } else {
                let z = if rng.random_range(0..2u8) == 0 { 1.0 } else { -1.0 };
                let rho = r * rng.random_range(0.0..1.0f64).sqrt();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                [rho * theta.cos(), rho * theta.sin(), z]
            }
        }
        ShapeKind::Cone => {
            // apex (0,0,1), base radius 1 at z = -1
            let r: f64 = 1.0;
            let h = 2.0;
            let slant = (r * r + h * h).sqrt();
            let lateral = std::f64::consts::PI * r * slant;
            let base = std::f64::consts::PI * r * r;
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            if rng.random_range(0.0..lateral + base) < lateral {
                // area grows with distance from the apex
                let t = rng.random_range(0.0..1.0f64).sqrt();
                let rho = r * t;
                [rho * theta.cos(), rho * theta.sin(), 1.0 - h * t]
            } else {
                let rho = r * rng.random_range(0.0..1.0f64).sqrt();
                [rho * theta.cos(), rho * theta.sin(), -1.0]
            }
        }
        ShapeKind::Torus => {
            // major R = 1, minor r = 0.3; rejection on the tube angle keeps
            // the surface density uniform
            let big_r = 1.0;
            let small_r = 0.3;
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let phi = loop {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let w = (big_r + small_r * phi.cos()) / (big_r + small_r);
                if rng.random_range(0.0..1.0) < w {
                    break phi;
                }
            };
            let ring = big_r + small_r * phi.cos();
            [ring * theta.cos(), ring * theta.sin(), small_r * phi.sin()]
        }
    }
}

/// One corpus item: a cloud (with point labels when known) plus its
/// object-level label and category.
#[derive(Debug, Clone)]
pub struct Sample {
    pub cloud: PointCloud,
    pub label_object: u8,
    pub category: String,
}

impl Sample {
    pub fn from_cloud(cloud: PointCloud, category: &str) -> Sample {
        let label_object = cloud
            .labels
            .as_ref()
            .is_some_and(|l| l.iter().any(|&v| v == 1)) as u8;
        Sample {
            cloud,
            label_object,
            category: category.to_string(),
        }
    }

    /// SHA-256 over the serialized cloud, for determinism checks.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.category.as_bytes());
        hasher.update([self.label_object]);
        for p in &self.cloud.points {
            for c in p {
                hasher.update(c.to_le_bytes());
            }
        }
        if let Some(labels) = &self.cloud.labels {
            hasher.update(labels);
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub categories: Vec<String>,
    pub train_per_class: usize,
    pub test_normal_per_class: usize,
    pub test_anomalous_per_class: usize,
    pub points_per_sample: usize,
    /// Gaussian surface jitter, in pre-normalization units.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            categories: vec!["sphere".into(), "box".into(), "cylinder".into()],
            train_per_class: 4,
            test_normal_per_class: 4,
            test_anomalous_per_class: 4,
            points_per_sample: 2048,
            jitter: 0.01,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::InvalidArgument("no categories".into()));
        }
        if self.train_per_class < 1
            || self.test_normal_per_class < 1
            || self.test_anomalous_per_class < 1
        {
            return Err(Error::InvalidArgument("per-class counts must be >= 1".into()));
        }
        if self.points_per_sample < 256 {
            return Err(Error::InvalidArgument(format!(
                "points_per_sample must be >= 256, got {}",
                self.points_per_sample
            )));
        }
        Ok(())
    }
}

/// SplitMix64-style per-sample seed derivation; keeps generation
/// order-independent so samples can be built in parallel.
fn derive_seed(base: u64, category_index: usize, split_code: u64, item: usize) -> u64 {
    let mut z = base
        ^ (category_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ split_code.wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ (item as u64).wrapping_mul(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builds the train and test splits. Training holds only normal samples;
/// the test split mixes labeled normals with pseudo-anomalous clouds. Hole
/// defects start from enough extra points that every emitted cloud has
/// exactly `points_per_sample` points.
pub fn build_dataset(spec: &DatasetSpec, ano_cfg: &AnomalyConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    spec.validate()?;
    ano_cfg.validate()?;
    let kinds: Vec<(usize, ShapeKind)> = spec
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((i, ShapeKind::from_str(c)?)))
        .collect::<Result<_>>()?;

    #[derive(Clone, Copy)]
    enum Slot {
        TrainNormal,
        TestNormal,
        TestAnomalous,
    }
    let mut jobs = Vec::new();
    for &(ci, kind) in &kinds {
        for i in 0..spec.train_per_class {
            jobs.push((ci, kind, Slot::TrainNormal, i));
        }
        for i in 0..spec.test_normal_per_class {
            jobs.push((ci, kind, Slot::TestNormal, i));
        }
        for i in 0..spec.test_anomalous_per_class {
            jobs.push((ci, kind, Slot::TestAnomalous, i));
        }
    }

    let built: Vec<(Slot, Sample)> = jobs
        .into_par_iter()
        .map(|(ci, kind, slot, i)| -> Result<(Slot, Sample)> {
            let code = match slot {
                Slot::TrainNormal => 1,
                Slot::TestNormal => 2,
                Slot::TestAnomalous => 3,
            };
            let seed = derive_seed(spec.seed, ci, code, i);
            let category = kind.name();
            let sample = match slot {
                Slot::TrainNormal | Slot::TestNormal => {
                    let mut cloud = synth_shape(kind, spec.points_per_sample, spec.jitter, seed)?;
                    cloud.labels = Some(vec![0; cloud.len()]);
                    Sample::from_cloud(cloud, category)
                }
                Slot::TestAnomalous => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa50a);
                    let defect = match ano_cfg.defect_type {
                        Some(k) => k,
                        None => match rng.random_range(0..3u8) {
                            0 => DefectKind::Bulge,
                            1 => DefectKind::Concavity,
                            _ => DefectKind::Hole,
                        },
                    };
                    let extra = if defect == DefectKind::Hole {
                        ano_cfg.removal_count + 1
                    } else {
                        0
                    };
                    let cloud =
                        synth_shape(kind, spec.points_per_sample + extra, spec.jitter, seed)?;
                    let cfg = AnomalyConfig {
                        defect_type: Some(defect),
                        ..ano_cfg.clone()
                    };
                    let (defected, _, _) = ano3d_augment(&cloud, &cfg, seed)?;
                    Sample::from_cloud(defected, category)
                }
            };
            Ok((slot, sample))
        })
        .collect::<Result<_>>()?;

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (slot, sample) in built {
        match slot {
            Slot::TrainNormal => train.push(sample),
            _ => test.push(sample),
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub category: String,
    pub split: String,
    pub label_object: u8,
    pub gt_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Loads a manifest and resolves relative entry paths against the
    /// manifest's own directory, keeping datasets relocatable.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut String| {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).display().to_string();
            }
        };
        for entry in &mut manifest.entries {
            resolve(&mut entry.path);
            if let Some(gt) = &mut entry.gt_path {
                resolve(gt);
            }
        }
        Ok(manifest)
    }
}

/// Writes both splits as PLY files (plus per-point GT text files for test
/// samples) and returns the manifest describing them.
pub fn save_dataset(dir: &Path, train: &[Sample], test: &[Sample]) -> Result<Manifest> {
    let mut entries = Vec::new();
    for (split, samples) in [("train", train), ("test", test)] {
        let split_dir = dir.join(split);
        std::fs::create_dir_all(&split_dir)
            .map_err(|e| Error::io(split_dir.display().to_string(), e))?;
        let mut counter: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
        for sample in samples {
            let idx = counter.entry(sample.category.clone()).or_insert(0);
            let stem = format!("{}_{:03}", sample.category, idx);
            *idx += 1;
            let ply = split_dir.join(format!("{stem}.ply"));
            geom3d::io::write_ply(&ply, &sample.cloud)?;
            let gt_path = if split == "test" {
                let gt = split_dir.join(format!("{stem}_gt.txt"));
                let labels = sample.cloud.labels.clone().unwrap_or_else(|| vec![0; sample.cloud.len()]);
                let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
                std::fs::write(&gt, text).map_err(|e| Error::io(gt.display().to_string(), e))?;
                Some(format!("{split}/{stem}_gt.txt"))
            } else {
                None
            };
            entries.push(ManifestEntry {
                path: format!("{split}/{stem}.ply"),
                category: sample.category.clone(),
                split: split.to_string(),
                label_object: sample.label_object,
                gt_path,
            });
        }
    }
    Ok(Manifest { entries })
}

/// Reads every manifest entry back into (train, test) sample lists.
pub fn load_manifest_samples(manifest: &Manifest) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let loaded: Vec<(String, Sample)> = manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<(String, Sample)> {
            let mut cloud = geom3d::io::read_cloud(Path::new(&entry.path))?;
            cloud.class_name = entry.category.clone();
            if let Some(gt) = &entry.gt_path {
                cloud.labels = Some(read_gt_labels(Path::new(gt), cloud.len())?);
            }
            let mut sample = Sample::from_cloud(cloud, &entry.category);
            // object labels may exist without point labels
            sample.label_object = sample.label_object.max(entry.label_object);
            Ok((entry.split.clone(), sample))
        })
        .collect::<Result<_>>()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (split, sample) in loaded {
        if split == "train" {
            train.push(sample);
        } else {
            test.push(sample);
        }
    }
    Ok((train, test))
}

fn read_gt_labels(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let labels: Vec<u8> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            // rows may carry coordinates with the label in the last column
            let last = l.split_whitespace().last().unwrap_or("0");
            let v: f64 = last.parse().unwrap_or(0.0);
            (v > 0.5) as u8
        })
        .collect();
    if labels.len() != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            reason: format!("{} labels for {expected} points", labels.len()),
        });
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealLayout {
    AnomalyShapenet,
    Real3dAd,
}

impl FromStr for RealLayout {
    type Err = Error;
    fn from_str(s: &str) -> Result<RealLayout> {
        match s.to_lowercase().as_str() {
            "anomaly_shapenet" => Ok(RealLayout::AnomalyShapenet),
            "real3d_ad" => Ok(RealLayout::Real3dAd),
            other => Err(Error::InvalidArgument(format!("unknown layout '{other}'"))),
        }
    }
}

fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ply") | Some("pcd") | Some("xyz") | Some("txt")
            ) && !p
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.ends_with("_gt"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a real dataset tree. Both layouts use per-category directories with
/// `train` and `test` subdirectories; ground truth is either a `gt`
/// directory of text files (anomaly_shapenet) or `<stem>_gt.txt` files
/// beside the test clouds (real3d_ad). Files without ground truth count as
/// normal.
pub fn load_real_dataset(root: &Path, layout: RealLayout) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !root.is_dir() {
        return Err(Error::io(
            root.display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root not found"),
        ));
    }
    let mut categories: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    categories.sort();
    if categories.is_empty() {
        return Err(Error::NoSamples(root.display().to_string()));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for cat_dir in &categories {
        let category = cat_dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("unknown")
            .to_string();
        let mut found = 0;
        for (split, out) in [("train", &mut train), ("test", &mut test)] {
            let split_dir = cat_dir.join(split);
            if !split_dir.is_dir() {
                continue;
            }
            for file in cloud_files(&split_dir)? {
                let mut cloud = geom3d::io::read_cloud(&file)?;
                cloud.class_name = category.clone();
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("");
                let gt = match layout {
                    RealLayout::AnomalyShapenet => cat_dir.join("gt").join(format!("{stem}.txt")),
                    RealLayout::Real3dAd => split_dir.join(format!("{stem}_gt.txt")),
                };
                if split == "test" && gt.is_file() {
                    cloud.labels = Some(read_gt_labels(&gt, cloud.len())?);
                } else {
                    cloud.labels = Some(vec![0; cloud.len()]);
                }
                out.push(Sample::from_cloud(cloud, &category));
                found += 1;
            }
        }
        if found == 0 {
            return Err(Error::NoSamples(cat_dir.display().to_string()));
        }
    }
    Ok((train, test))
}
