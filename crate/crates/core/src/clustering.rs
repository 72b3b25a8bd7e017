//! Clustering of point embeddings into the cluster set the selection MDP
//! acts on, plus per-cluster subsampling.

use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Default number of points sampled from each cluster for oracle queries.
pub const DEFAULT_SUBSAMPLE_SIZE: usize = 64;

/// Row-major matrix of point embeddings. Point ids are row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_points: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n_points: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_points == 0 || dim == 0 {
            return Err(Error::InvalidData(format!(
                "embedding matrix must be non-empty, got {n_points}x{dim}"
            )));
        }
        if data.len() != n_points * dim {
            return Err(Error::InvalidData(format!(
                "expected {} components, got {}",
                n_points * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite component at point {} dim {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { n_points, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidData("ragged embedding rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubsampleStrategy {
    Random,
    Furthest,
}

/// The clustered dataset.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    embeddings: Arc<EmbeddingMatrix>,
    assignment: Vec<usize>,
    centroids: Vec<f64>,
    members: Vec<Vec<usize>>,
    subsample_size: usize,
    subsamples: Vec<Vec<usize>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl ClusterModel {
    /// Builds a model from an explicit assignment. Centroids are member means.
    pub fn from_assignment(
        embeddings: Arc<EmbeddingMatrix>,
        assignment: Vec<usize>,
        k: usize,
    ) -> Result<Self> {
        if assignment.len() != embeddings.n_points() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} entries for {} points",
                assignment.len(),
                embeddings.n_points()
            )));
        }
        let mut members = vec![Vec::new(); k];
        for (p, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::InvalidArgument(format!("cluster {c} out of range (k={k})")));
            }
            members[c].push(p);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("cluster {c} is empty")));
        }
        let dim = embeddings.dim();
        let mut centroids = vec![0.0; k * dim];
        for (c, pts) in members.iter().enumerate() {
            let centroid = &mut centroids[c * dim..(c + 1) * dim];
            for &p in pts {
                for (acc, v) in centroid.iter_mut().zip(embeddings.row(p)) {
                    *acc += v;
                }
            }
            let n = pts.len() as f64;
            centroid.iter_mut().for_each(|v| *v /= n);
        }
        Ok(Self {
            embeddings,
            assignment,
            centroids,
            members,
            subsample_size: 0,
            subsamples: Vec::new(),
        }
        .with_subsamples(DEFAULT_SUBSAMPLE_SIZE, SubsampleStrategy::Random, 0))
    }

    /// Recomputes the per-cluster subsamples.
    pub fn with_subsamples(mut self, size: usize, strategy: SubsampleStrategy, seed: u64) -> Self {
        let size = size.max(1);
        self.subsamples = (0..self.k())
            .map(|c| self.subsample(c, size, strategy, seed))
            .collect();
        self.subsample_size = size;
        self
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn n_points(&self) -> usize {
        self.assignment.len()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.centroids[c * d..(c + 1) * d]
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn subsamples(&self, c: usize) -> &[usize] {
        &self.subsamples[c]
    }

    pub fn inertia(&self) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .map(|(p, &c)| sq_dist(self.embeddings.row(p), self.centroid(c)))
            .sum()
    }

    /// Union of the subsamples of the given clusters, sorted.
    pub fn subsample_union<I: IntoIterator<Item = usize>>(&self, clusters: I) -> Vec<usize> {
        let mut ids: Vec<usize> = clusters
            .into_iter()
            .flat_map(|c| self.subsamples[c].iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Union of the full member lists of the given clusters, sorted.
    pub fn member_union<I: IntoIterator<Item = usize>>(&self, clusters: I) -> Vec<usize> {
        let mut ids: Vec<usize> = clusters
            .into_iter()
            .flat_map(|c| self.members[c].iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Picks up to `m` members of `cluster`. Output is sorted by point id.
    pub fn subsample(
        &self,
        cluster: usize,
        m: usize,
        strategy: SubsampleStrategy,
        seed: u64,
    ) -> Vec<usize> {
        let members = &self.members[cluster];
        if m >= members.len() {
            return members.clone();
        }
        let mut picked = match strategy {
            SubsampleStrategy::Random => {
                let mut rng = rng::stream(rng::derive_seed(seed, streams::SUBSAMPLE), cluster as u64);
                index::sample(&mut rng, members.len(), m)
                    .into_iter()
                    .map(|i| members[i])
                    .collect::<Vec<_>>()
            }
            SubsampleStrategy::Furthest => {
                let centroid = self.centroid(cluster);
                let mut by_dist: Vec<(f64, usize)> = members
                    .iter()
                    .map(|&p| (sq_dist(self.embeddings.row(p), centroid), p))
                    .collect();
                by_dist.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                by_dist.into_iter().take(m).map(|(_, p)| p).collect()
            }
        };
        picked.sort_unstable();
        picked
    }

    pub fn to_export(&self, centroids_path: &str) -> ClusterModelExport {
        ClusterModelExport {
            k: self.k(),
            dim: self.dim(),
            n_points: self.n_points(),
            assignment: self.assignment.clone(),
            centroids_path: centroids_path.to_string(),
            subsample_size: self.subsample_size,
            subsamples: self.subsamples.clone(),
        }
    }

    /// Writes the JSON export plus the centroid matrix beside it.
    pub fn save(&self, json_path: &Path) -> Result<()> {
        let stem = json_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("cluster_model");
        let centroid_file = format!("{stem}.centroids.bin");
        let centroid_path = json_path.with_file_name(&centroid_file);
        let centroids = EmbeddingMatrix::new(self.k(), self.dim(), self.centroids.clone())?;
        crate::io::save_embeddings(&centroid_path, &centroids)?;
        std::fs::write(json_path, serde_json::to_vec_pretty(&self.to_export(&centroid_file))?)?;
        Ok(())
    }
}

/// JSON form of a [`ClusterModel`]. Centroids live in a separate embedding file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModelExport {
    pub k: usize,
    pub dim: usize,
    pub n_points: usize,
    pub assignment: Vec<usize>,
    pub centroids_path: String,
    pub subsample_size: usize,
    pub subsamples: Vec<Vec<usize>>,
}

impl ClusterModelExport {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Full member list of each cluster, rebuilt from the assignment.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (p, &c) in self.assignment.iter().enumerate() {
            if c < self.k {
                members[c].push(p);
            }
        }
        members
    }
}

/// Lloyd iterations recorded by [`kmeans_traced`].
#[derive(Debug, Clone)]
pub struct KmeansTrace {
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kmeans(emb: Arc<EmbeddingMatrix>, k: usize, seed: u64, max_iters: usize) -> Result<ClusterModel> {
    kmeans_traced(emb, k, seed, max_iters).map(|(m, _)| m)
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeanspp_init(emb: &EmbeddingMatrix, k: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let n = emb.n_points();
    let dim = emb.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(emb.row(first));
    let mut d2: Vec<f64> = (0..n).map(|p| sq_dist(emb.row(p), emb.row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (p, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(p);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point coincides with a centre; take an unchosen one
            let free: Vec<usize> = (0..n).filter(|&p| !chosen[p]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.extend_from_slice(emb.row(pick));
        for (p, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(emb.row(p), emb.row(pick)));
        }
    }
    centroids
}

/// Assigns every point to its nearest centroid, then moves the point farthest
/// from its centroid into each empty cluster. Returns the number of changes.
fn assign(emb: &EmbeddingMatrix, centroids: &mut [f64], assignment: &mut [usize], k: usize) -> usize {
    let dim = emb.dim();
    let mut changed = 0;
    let mut dist = vec![0.0; assignment.len()];
    for (p, slot) in assignment.iter_mut().enumerate() {
        let (c, d) = nearest(emb.row(p), centroids, dim);
        if *slot != c {
            changed += 1;
            *slot = c;
        }
        dist[p] = d;
    }
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..assignment.len())
            .filter(|&p| counts[assignment[p]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("k <= n guarantees a cluster with two or more points");
        counts[assignment[donor]] -= 1;
        counts[empty] = 1;
        assignment[donor] = empty;
        dist[donor] = 0.0;
        changed += 1;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(emb.row(donor));
    }
    changed
}

fn update_centroids(emb: &EmbeddingMatrix, assignment: &[usize], k: usize) -> Vec<f64> {
    let dim = emb.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(emb.row(p)) {
            *s += v;
        }
    }
    for (c, chunk) in sums.chunks_exact_mut(dim).enumerate() {
        let n = counts[c] as f64;
        chunk.iter_mut().for_each(|v| *v /= n);
    }
    sums
}

fn inertia_of(emb: &EmbeddingMatrix, centroids: &[f64], assignment: &[usize]) -> f64 {
    let dim = emb.dim();
    assignment
        .iter()
        .enumerate()
        .map(|(p, &c)| sq_dist(emb.row(p), &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding. Also returns the inertia after
/// every iteration.
pub fn kmeans_traced(
    emb: Arc<EmbeddingMatrix>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<(ClusterModel, KmeansTrace)> {
    let n = emb.n_points();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must lie in 1..={n}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if emb.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite embedding component".into()));
    }
    let mut rng = rng::stream(seed, streams::KMEANS);
    let mut centroids = kmeanspp_init(&emb, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut trace = KmeansTrace {
        inertia: Vec::new(),
        iterations: 0,
        converged: false,
    };
    for it in 0..max_iters {
        let changed = assign(&emb, &mut centroids, &mut assignment, k);
        if it > 0 && changed == 0 {
            trace.converged = true;
            break;
        }
        centroids = update_centroids(&emb, &assignment, k);
        trace.inertia.push(inertia_of(&emb, &centroids, &assignment));
        trace.iterations = it + 1;
    }
    let model = ClusterModel::from_assignment(emb, assignment, k)?;
    Ok((model, trace))
}

/// Number of clusters each label class receives. Proportional with a floor of
/// one cluster per class; leftovers go to the largest fractional remainders.
pub fn allocate_clusters(class_sizes: &[usize], k: usize) -> Result<Vec<usize>> {
    let n_classes = class_sizes.len();
    if k < n_classes {
        return Err(Error::InvalidArgument(format!(
            "k={k} cannot cover {n_classes} label classes"
        )));
    }
    let total: usize = class_sizes.iter().sum();
    if class_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidData("every label class must be non-empty".into()));
    }
    if k > total {
        return Err(Error::InvalidArgument(format!("k={k} exceeds {total} points")));
    }
    let quotas: Vec<f64> = class_sizes
        .iter()
        .map(|&s| k as f64 * s as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(class_sizes)
        .map(|(q, &s)| (q.floor() as usize).clamp(1, s))
        .collect();
    let mut assigned: usize = alloc.iter().sum();
    while assigned < k {
        let i = (0..n_classes)
            .filter(|&i| alloc[i] < class_sizes[i])
            .max_by(|&a, &b| {
                let (ra, rb) = (quotas[a] - alloc[a] as f64, quotas[b] - alloc[b] as f64);
                ra.total_cmp(&rb).then(b.cmp(&a))
            })
            .expect("k <= total points leaves room");
        alloc[i] += 1;
        assigned += 1;
    }
    // the one-cluster floor can overshoot; take back from the most over-served
    while assigned > k {
        let i = (0..n_classes)
            .filter(|&i| alloc[i] > 1)
            .max_by(|&a, &b| {
                let (oa, ob) = (alloc[a] as f64 - quotas[a], alloc[b] as f64 - quotas[b]);
                oa.total_cmp(&ob).then(b.cmp(&a))
            })
            .expect("k >= classes leaves a reducible class");
        alloc[i] -= 1;
        assigned -= 1;
    }
    Ok(alloc)
}

/// Runs k-means separately inside each label class so every cluster is
/// label-pure. Clusters are numbered by label, then by local index.
pub fn stratified_kmeans(
    emb: Arc<EmbeddingMatrix>,
    labels: &LabelVector,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterModel> {
    if labels.len() != emb.n_points() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} points",
            labels.len(),
            emb.n_points()
        )));
    }
    let n_labels = labels.n_labels();
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (p, &l) in labels.as_slice().iter().enumerate() {
        classes[l].push(p);
    }
    if k < n_labels {
        return Err(Error::InvalidArgument(format!(
            "k={k} is smaller than the {n_labels} label classes"
        )));
    }
    let sizes: Vec<usize> = classes.iter().map(Vec::len).collect();
    let alloc = allocate_clusters(&sizes, k)?;
    let dim = emb.dim();
    let mut assignment = vec![0usize; emb.n_points()];
    let mut offset = 0;
    for (label, points) in classes.iter().enumerate() {
        let data: Vec<f64> = points.iter().flat_map(|&p| emb.row(p).iter().copied()).collect();
        let sub = Arc::new(EmbeddingMatrix::new(points.len(), dim, data)?);
        let local = kmeans(sub, alloc[label], rng::derive_seed(seed, label as u64), max_iters)?;
        for (i, &p) in points.iter().enumerate() {
            assignment[p] = offset + local.assignment()[i];
        }
        offset += alloc[label];
    }
    ClusterModel::from_assignment(emb, assignment, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Arc<EmbeddingMatrix> {
        Arc::new(
            EmbeddingMatrix::from_rows(&[
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![10.0, 0.0],
                vec![10.0, 1.0],
            ])
            .unwrap(),
        )
    }

    #[test]
    fn separated_pairs_form_two_clusters() {
        let m = kmeans(pairs(), 2, 3, 50).unwrap();
        let a = m.assignment();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
        assert_eq!(m.centroid(a[0]), &[0.0, 0.5]);
        assert_eq!(m.centroid(a[2]), &[10.0, 0.5]);
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let m = kmeans(pairs(), 4, 1, 50).unwrap();
        assert_eq!(m.inertia(), 0.0);
        assert!((0..4).all(|c| m.members(c).len() == 1));
    }

    #[test]
    fn k_one_is_the_mean() {
        let m = kmeans(pairs(), 1, 9, 50).unwrap();
        assert_eq!(m.centroid(0), &[5.0, 0.5]);
    }

    #[test]
    fn k_too_large_is_rejected() {
        assert!(matches!(kmeans(pairs(), 5, 0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(kmeans(pairs(), 0, 0, 10), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_embeddings_are_rejected() {
        let err = EmbeddingMatrix::new(1, 2, vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let emb = Arc::new(EmbeddingMatrix::new(5, 1, vec![1.0; 5]).unwrap());
        let m = kmeans(emb, 3, 0, 10).unwrap();
        assert!((0..3).all(|c| !m.members(c).is_empty()));
    }

    #[test]
    fn proportional_allocation() {
        assert_eq!(allocate_clusters(&[75, 25], 4).unwrap(), vec![3, 1]);
        assert_eq!(allocate_clusters(&[10, 10, 10], 3).unwrap(), vec![1, 1, 1]);
        assert_eq!(allocate_clusters(&[98, 1, 1], 4).unwrap(), vec![2, 1, 1]);
        assert!(allocate_clusters(&[5, 5, 5], 2).is_err());
    }

    #[test]
    fn stratified_minimum_allocation() {
        let labels = LabelVector::new(vec![0, 0, 1, 1]);
        let m = stratified_kmeans(pairs(), &labels, 2, 0, 20).unwrap();
        assert_eq!(m.members(0), &[0, 1]);
        assert_eq!(m.members(1), &[2, 3]);
        let err = stratified_kmeans(pairs(), &LabelVector::new(vec![0, 1, 2, 2]), 2, 0, 20);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    fn line_model() -> ClusterModel {
        // centroid at 0; distances 0.5, 5.0, 3.0, 2.5
        let emb = Arc::new(
            EmbeddingMatrix::from_rows(&[vec![0.5], vec![5.0], vec![-3.0], vec![-2.5]]).unwrap(),
        );
        ClusterModel::from_assignment(emb, vec![0, 0, 0, 0], 1).unwrap()
    }

    #[test]
    fn furthest_picks_max_distance() {
        let m = line_model();
        assert_eq!(m.centroid(0), &[0.0]);
        assert_eq!(m.subsample(0, 1, SubsampleStrategy::Furthest, 0), vec![1]);
        assert_eq!(m.subsample(0, 2, SubsampleStrategy::Furthest, 0), vec![1, 2]);
    }

    #[test]
    fn furthest_ties_prefer_small_ids() {
        let emb = Arc::new(EmbeddingMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]]).unwrap());
        let m = ClusterModel::from_assignment(emb, vec![0; 4], 1).unwrap();
        assert_eq!(m.subsample(0, 1, SubsampleStrategy::Furthest, 0), vec![0]);
    }

    #[test]
    fn saturated_subsample_is_all_members() {
        let m = line_model();
        for s in [SubsampleStrategy::Random, SubsampleStrategy::Furthest] {
            assert_eq!(m.subsample(0, 4, s, 1), vec![0, 1, 2, 3]);
            assert_eq!(m.subsample(0, 40, s, 1), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn random_subsample_is_seeded_and_sorted() {
        let m = line_model();
        let a = m.subsample(0, 2, SubsampleStrategy::Random, 11);
        assert_eq!(a, m.subsample(0, 2, SubsampleStrategy::Random, 11));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
