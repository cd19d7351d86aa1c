//! Geometric primitives for point clouds: neighbor search, sampling, normal
//! estimation, rotations, and normalization.

pub mod io;

use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Point3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Ordered set of 3D points with optional per-point anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Per-point anomaly flags (1 = anomalous), aligned with `points`.
    pub labels: Option<Vec<u8>>,
    pub class_name: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, labels: Option<Vec<u8>>, class_name: impl Into<String>) -> Result<Self> {
        let cloud = PointCloud {
            points,
            labels,
            class_name: class_name.into(),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("point cloud is empty".into()));
        }
        for p in &self.points {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coordinate".into()));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::InvalidArgument(format!(
                    "label count {} does not match point count {}",
                    labels.len(),
                    self.points.len()
                )));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        let n = self.points.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Applies a rotation matrix to every point (labels unchanged).
    pub fn rotated(&self, r: &Mat3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| mat_vec(r, p)).collect(),
            labels: self.labels.clone(),
            class_name: self.class_name.clone(),
        }
    }

    /// Content hash of the point multiset, independent of point order.
    pub fn content_hash(&self) -> u64 {
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| cmp_lex(&self.points[a], &self.points[b]));
        let mut hasher = Sha256::new();
        for &i in &order {
            for c in &self.points[i] {
                hasher.update(c.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

fn cmp_lex(a: &Point3, b: &Point3) -> std::cmp::Ordering {
    for i in 0..3 {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationAngles {
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
}

impl RotationAngles {
    /// Draws each angle uniformly from [0, 2π).
    pub fn random(rng: &mut impl Rng) -> Self {
        let tau = std::f64::consts::TAU;
        RotationAngles {
            theta_x: rng.random_range(0.0..tau),
            theta_y: rng.random_range(0.0..tau),
            theta_z: rng.random_range(0.0..tau),
        }
    }
}

/// Builds the rotation matrix R = Rz · Ry · Rx.
pub fn rotation_matrix(angles: RotationAngles) -> Mat3 {
    let (sx, cx) = angles.theta_x.sin_cos();
    let (sy, cy) = angles.theta_y.sin_cos();
    let (sz, cz) = angles.theta_z.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat_vec(m: &Mat3, v: &Point3) -> Point3 {
    let mut out = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[i] += m[i][k] * v[k];
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

const KDTREE_MIN_POINTS: usize = 64;

/// Exact k-nearest-neighbor index over a fixed point set.
///
/// Backed by a kd-tree for larger clouds and a linear scan below
/// [`KDTREE_MIN_POINTS`]; both paths return identical results. Ties in
/// distance break toward the lower point index.
pub struct SpatialIndex {
    points: Vec<Point3>,
    tree: Option<KdNode>,
}

struct KdNode {
    index: usize,
    axis: usize,
    left: Option<Box<KdNode>>,
    right: Option<Box<KdNode>>,
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Self {
        let tree = if points.len() >= KDTREE_MIN_POINTS {
            let mut indices: Vec<usize> = (0..points.len()).collect();
            Some(build_node(points, &mut indices, 0))
        } else {
            None
        };
        SpatialIndex {
            points: points.to_vec(),
            tree,
        }
    }

    /// Exact k nearest neighbors of `query`, ascending by distance.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::InsufficientPoints {
                requested: k,
                available: self.points.len(),
            });
        }
        let mut best = NeighborHeap::new(k);
        match &self.tree {
            Some(root) => search_node(root, &self.points, query, &mut best),
            None => {
                for (i, p) in self.points.iter().enumerate() {
                    best.push(i, dist2(query, p));
                }
            }
        }
        Ok(best.into_sorted())
    }
}

fn build_node(points: &[Point3], indices: &mut [usize], depth: usize) -> KdNode {
    let axis = depth % 3;
    indices.sort_by(|&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let mid = indices.len() / 2;
    let index = indices[mid];
    let (left, rest) = indices.split_at_mut(mid);
    let right = &mut rest[1..];
    KdNode {
        index,
        axis,
        left: (!left.is_empty()).then(|| Box::new(build_node(points, left, depth + 1))),
        right: (!right.is_empty()).then(|| Box::new(build_node(points, right, depth + 1))),
    }
}

fn search_node(node: &KdNode, points: &[Point3], query: &Point3, best: &mut NeighborHeap) {
    let p = &points[node.index];
    best.push(node.index, dist2(query, p));
    let delta = query[node.axis] - p[node.axis];
    let (near, far) = if delta < 0.0 {
        (&node.left, &node.right)
    } else {
        (&node.right, &node.left)
    };
    if let Some(n) = near {
        search_node(n, points, query, best);
    }
    if let Some(f) = far {
        if delta * delta <= best.worst_dist2() {
            search_node(f, points, query, best);
        }
    }
}

/// Bounded worst-first heap of (dist², index) with lower-index tie-breaking.
struct NeighborHeap {
    k: usize,
    entries: Vec<(f64, usize)>,
}

impl NeighborHeap {
    fn new(k: usize) -> Self {
        NeighborHeap {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    fn worse(a: &(f64, usize), b: &(f64, usize)) -> bool {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == std::cmp::Ordering::Greater
    }

    fn worst_dist2(&self) -> f64 {
        if self.entries.len() < self.k {
            f64::INFINITY
        } else {
            self.entries.iter().map(|e| e.0).fold(0.0, f64::max)
        }
    }

    fn push(&mut self, index: usize, d2: f64) {
        let candidate = (d2, index);
        if self.entries.len() < self.k {
            self.entries.push(candidate);
        } else {
            // replace the current worst entry if the candidate beats it
            let mut worst = 0;
            for i in 1..self.entries.len() {
                if Self::worse(&self.entries[i], &self.entries[worst]) {
                    worst = i;
                }
            }
            if Self::worse(&self.entries[worst], &candidate) {
                self.entries[worst] = candidate;
            }
        }
    }

    fn into_sorted(mut self) -> Vec<(usize, f64)> {
        self.entries
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.entries
            .into_iter()
            .map(|(d2, i)| (i, d2.sqrt()))
            .collect()
    }
}

/// Exact k nearest neighbors of `query` within `cloud`, ascending by distance.
pub fn knn(cloud: &PointCloud, query: &Point3, k: usize) -> Result<Vec<(usize, f64)>> {
    SpatialIndex::build(&cloud.points).knn(query, k)
}

/// Greedy farthest point sampling of `g` indices, deterministic per seed.
///
/// The first index is a seeded uniform draw; each following index maximizes
/// the minimum distance to the already-chosen set, ties toward the lower
/// index.
pub fn farthest_point_sample(cloud: &PointCloud, g: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.len();
    if g == 0 || g > n {
        return Err(Error::InsufficientPoints {
            requested: g,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut chosen = Vec::with_capacity(g);
    chosen.push(first);
    let mut min_d2: Vec<f64> = cloud
        .points
        .iter()
        .map(|p| dist2(p, &cloud.points[first]))
        .collect();
    while chosen.len() < g {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        chosen.push(best);
        for (i, d) in min_d2.iter_mut().enumerate() {
            let nd = dist2(&cloud.points[i], &cloud.points[best]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(chosen)
}

/// Unit normal of a neighborhood: smallest-eigenvalue eigenvector of the
/// neighborhood covariance, oriented away from the full cloud's centroid.
///
/// When the patch centroid coincides with the cloud centroid along the
/// normal, the sign is fixed so the last nonzero component (z, then y, then
/// x) is positive.
pub fn estimate_normal(cloud: &PointCloud, neighborhood: &[usize]) -> Result<Point3> {
    if neighborhood.len() < 3 {
        return Err(Error::DegenerateNeighborhood);
    }
    let mut mean = [0.0; 3];
    for &i in neighborhood {
        for a in 0..3 {
            mean[a] += cloud.points[i][a];
        }
    }
    let n = neighborhood.len() as f64;
    for a in 0..3 {
        mean[a] /= n;
    }
    let mut cov = [[0.0; 3]; 3];
    for &i in neighborhood {
        let p = &cloud.points[i];
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in 0..3 {
            cov[r][c] /= n;
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(&cov);
    // ascending eigenvalue order
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eigvals[a].total_cmp(&eigvals[b]));
    let scale = eigvals[order[2]].abs().max(1e-300);
    if eigvals[order[1]] / scale < 1e-9 {
        return Err(Error::DegenerateNeighborhood);
    }
    let mut normal = [
        eigvecs[0][order[0]],
        eigvecs[1][order[0]],
        eigvecs[2][order[0]],
    ];
    let norm = (normal[0].powi(2) + normal[1].powi(2) + normal[2].powi(2)).sqrt();
    for a in 0..3 {
        normal[a] /= norm;
    }
    // orient outward (away from the cloud centroid)
    let centroid = cloud.centroid();
    let outward = [
        mean[0] - centroid[0],
        mean[1] - centroid[1],
        mean[2] - centroid[2],
    ];
    let dot = normal[0] * outward[0] + normal[1] * outward[1] + normal[2] * outward[2];
    if dot.abs() > 1e-12 {
        if dot < 0.0 {
            for a in 0..3 {
                normal[a] = -normal[a];
            }
        }
    } else {
        // ambiguous: fix the sign from the highest nonzero component
        for a in (0..3).rev() {
            if normal[a].abs() > 1e-12 {
                if normal[a] < 0.0 {
                    for b in 0..3 {
                        normal[b] = -normal[b];
                    }
                }
                break;
            }
        }
    }
    Ok(normal)
}

/// Eigen decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors-as-columns).
pub fn jacobi_eigen(m: &Mat3) -> (Point3, Mat3) {
    let mut a = *m;
    let mut v = [[0.0; 3], [0.0; 3], [0.0; 3]];
    for i in 0..3 {
        v[i][i] = 1.0;
    }
    for _ in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-30 {
            break;
        }
        for p in 0..2 {
            for q in (p + 1)..3 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..3 {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Downsamples to exactly `n` points, deterministic per seed.
///
/// With N ≥ n the points are drawn uniformly without replacement; with N < n
/// every point is kept once and the remainder is drawn with replacement.
pub fn random_downsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("downsample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = cloud.len();
    let indices: Vec<usize> = if count >= n {
        let mut all: Vec<usize> = (0..count).collect();
        all.shuffle(&mut rng);
        all.truncate(n);
        all
    } else {
        let mut all: Vec<usize> = (0..count).collect();
        for _ in count..n {
            all.push(rng.random_range(0..count));
        }
        all
    };
    let points = indices.iter().map(|&i| cloud.points[i]).collect();
    let labels = cloud
        .labels
        .as_ref()
        .map(|l| indices.iter().map(|&i| l[i]).collect());
    Ok(PointCloud {
        points,
        labels,
        class_name: cloud.class_name.clone(),
    })
}

/// Centers the cloud on its centroid and scales the median point norm to 1.
/// The median is robust to defect outliers, so the bulk of a surface lands at
/// the same scale whether or not a local region is displaced or missing.
/// A cloud of coincident points is only centered.
pub fn normalize_cloud(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let mut points: Vec<Point3> = cloud
        .points
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let mut norms: Vec<f64> = points
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .collect();
    norms.sort_by(f64::total_cmp);
    let median = norms[norms.len() / 2];
    if median > 0.0 {
        for p in &mut points {
            for a in 0..3 {
                p[a] /= median;
            }
        }
    }
    PointCloud {
        points,
        labels: cloud.labels.clone(),
        class_name: cloud.class_name.clone(),
    }
}
