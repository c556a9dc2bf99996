//! K-means, Rand index and the iterative corrected-kernel subspace clustering loop.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::dimsel::TrrConfig;
use crate::error::{CkpcaError, Result};
use crate::kernels::{gram, KernelSpec};
use crate::operators::cluster_operators;
use crate::partition::Partition;
use crate::reduction::{KernelReducer, ReductionMode};

/// Pluggable inner clusterer used by [`iterative_subspace_cluster_with`].
pub trait Clusterer: Sync {
    fn cluster(&self, z: &DataMatrix, d: usize, seed: u64) -> Result<Partition>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeans {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeans {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 100,
        }
    }
}

impl Clusterer for KMeans {
    fn cluster(&self, z: &DataMatrix, d: usize, seed: u64) -> Result<Partition> {
        kmeans(z, d, self.restarts, self.max_iter, seed).map(|r| r.partition)
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub partition: Partition,
    /// Raw (not renumbered) assignment aligned with `centroids`.
    pub assignment: Vec<usize>,
    pub centroids: DataMatrix,
    pub objective: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &DataMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().enumerate() {
        let dist = sq_dist(point, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn plus_plus_init(z: &DataMatrix, d: usize, rng: &mut ChaCha8Rng) -> DataMatrix {
    let n = z.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = z.rows().map(|r| sq_dist(r, z.row(chosen[0]))).collect();
    while chosen.len() < d {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(z.row(i), z.row(next)));
        }
    }
    z.select_rows(&chosen)
}

fn lloyd(
    z: &DataMatrix,
    mut centroids: DataMatrix,
    max_iter: usize,
) -> (Vec<usize>, DataMatrix, f64) {
    let (n, q, d) = (z.nrows(), z.ncols(), centroids.nrows());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, dist) = nearest(z.row(i), &centroids);
            dists[i] = dist;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut counts = vec![0usize; d];
        for &l in &labels {
            counts[l] += 1;
        }
        // Repair empty clusters by moving the farthest point from a cluster
        // that can spare it.
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("n >= d leaves a cluster with a spare point");
            counts[labels[far]] -= 1;
            labels[far] = empty;
            counts[empty] = 1;
            dists[far] = 0.0;
            changed = true;
        }
        let mut sums = DataMatrix::zeros(d, q);
        for (i, &l) in labels.iter().enumerate() {
            for (s, v) in sums.row_mut(l).iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate().take(d) {
            let inv = 1.0 / count as f64;
            for s in sums.row_mut(c) {
                *s *= inv;
            }
        }
        centroids = sums;
        if !changed {
            break;
        }
    }
    let objective = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(z.row(i), centroids.row(l)))
        .sum();
    (labels, centroids, objective)
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// within-cluster sum of squares wins (ties go to the earliest restart).
pub fn kmeans(
    z: &DataMatrix,
    d: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let n = z.nrows();
    if d == 0 || restarts == 0 {
        return Err(CkpcaError::InvalidParameter(
            "k-means needs d >= 1 and at least one restart".into(),
        ));
    }
    if n < d {
        return Err(CkpcaError::TooFewPoints {
            needed: d,
            found: n,
        });
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..restarts).map(|_| master.next_u64()).collect();
    let runs: Vec<(Vec<usize>, DataMatrix, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let init = plus_plus_init(z, d, &mut rng);
            lloyd(z, init, max_iter)
        })
        .collect();
    let (assignment, centroids, objective) = runs
        .into_iter()
        .reduce(|best, run| if run.2 < best.2 { run } else { best })
        .expect("restarts >= 1");
    Ok(KMeansResult {
        partition: Partition::from_labels(&assignment),
        assignment,
        centroids,
        objective,
    })
}

/// Fraction of pairs on which two labelings agree (together in both or apart in both).
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let n = a.n();
    if n != b.n() {
        return Err(CkpcaError::LengthMismatch {
            left: n,
            right: b.n(),
        });
    }
    if n < 2 {
        return Ok(1.0);
    }
    let mut table = vec![0u64; a.d() * b.d()];
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        table[la * b.d() + lb] += 1;
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let both: u64 = table.iter().map(|&c| pairs(c)).sum();
    let in_a: u64 = a.sizes().iter().map(|&c| pairs(c as u64)).sum();
    let in_b: u64 = b.sizes().iter().map(|&c| pairs(c as u64)).sum();
    let total = pairs(n as u64);
    let agree = total + 2 * both - in_a - in_b;
    Ok(agree as f64 / total as f64)
}

/// Rand index between the segmentations induced by two change-point sets.
pub fn segmentation_rand_index(true_cps: &[usize], est_cps: &[usize], n: usize) -> Result<f64> {
    rand_index(
        &Partition::from_change_points(true_cps, n)?,
        &Partition::from_change_points(est_cps, n)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterClusterConfig {
    pub d: usize,
    pub max_outer_iterations: usize,
    pub ri_stop: f64,
    pub kmeans: KMeans,
    pub trr: TrrConfig,
    pub seed: u64,
}

impl IterClusterConfig {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            max_outer_iterations: 20,
            ri_stop: 0.999,
            kmeans: KMeans::default(),
            trr: TrrConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(CkpcaError::InvalidParameter(format!(
                "d must be >= 2, got {}",
                self.d
            )));
        }
        if !(self.ri_stop > 0.0 && self.ri_stop <= 1.0) {
            return Err(CkpcaError::InvalidParameter(format!(
                "ri_stop must lie in (0, 1], got {}",
                self.ri_stop
            )));
        }
        if self.max_outer_iterations == 0 {
            return Err(CkpcaError::InvalidParameter(
                "max_outer_iterations must be >= 1".into(),
            ));
        }
        self.trr.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub partition: Partition,
    /// Selected dimension per outer iteration; the first entry is the `d - 1` start.
    pub q_hats: Vec<usize>,
    /// Rand index between consecutive partitions.
    pub ri_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Folds singleton categories into the nearest surviving centroid in `z`.
fn merge_tiny(z: &DataMatrix, partition: Partition) -> Result<Partition> {
    let sizes = partition.sizes().to_vec();
    if sizes.iter().all(|&s| s >= 2) {
        return Ok(partition);
    }
    let keep: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] >= 2).collect();
    if keep.len() < 2 {
        let (category, &size) = sizes
            .iter()
            .enumerate()
            .find(|(_, &s)| s < 2)
            .expect("some category is tiny");
        return Err(CkpcaError::CategoryTooSmall { category, size });
    }
    let groups = partition.groups();
    let centroids: Vec<Vec<f64>> = keep
        .iter()
        .map(|&c| {
            let mut m = vec![0.0; z.ncols()];
            for &i in &groups[c] {
                for (a, v) in m.iter_mut().zip(z.row(i)) {
                    *a += v;
                }
            }
            m.iter().map(|v| v / groups[c].len() as f64).collect()
        })
        .collect();
    let mut labels = partition.labels().to_vec();
    for (i, l) in labels.iter_mut().enumerate() {
        if sizes[*l] < 2 {
            let best = centroids
                .iter()
                .enumerate()
                .min_by(|a, b| sq_dist(z.row(i), a.1).total_cmp(&sq_dist(z.row(i), b.1)))
                .map(|(k, _)| keep[k])
                .expect("at least two centroids");
            *l = best;
        }
    }
    Ok(Partition::from_labels(&labels))
}

pub fn iterative_subspace_cluster(
    x: &DataMatrix,
    config: &IterClusterConfig,
    kernel: &KernelSpec,
) -> Result<ClusterOutcome> {
    iterative_subspace_cluster_with(x, config, kernel, &config.kmeans)
}

/// The alternating loop: reduce with the current partition's corrected
/// operator, recluster, and stop once consecutive partitions agree.
pub fn iterative_subspace_cluster_with(
    x: &DataMatrix,
    config: &IterClusterConfig,
    kernel: &KernelSpec,
    clusterer: &dyn Clusterer,
) -> Result<ClusterOutcome> {
    config.validate()?;
    let (n, d) = (x.nrows(), config.d);
    if n < 2 * d {
        return Err(CkpcaError::TooFewPoints {
            needed: 2 * d,
            found: n,
        });
    }
    let reducer = KernelReducer::new(gram(x, kernel)?)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);

    let start = reducer.global_spectrum()?;
    let q0 = (d - 1).min(start.len()).max(1);
    let (_, z) = reducer.project(&start, q0);
    let mut current = merge_tiny(&z, clusterer.cluster(&z, d, seeds.next_u64())?)?;

    let mut q_hats = vec![q0];
    let mut ri_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_outer_iterations {
        iterations += 1;
        let pair = cluster_operators(&current)?;
        let reduced = reducer.reduce(&pair, &config.trr, ReductionMode::CkpcaCluster)?;
        q_hats.push(reduced.q_hat);
        let next = merge_tiny(
            &reduced.reduced,
            clusterer.cluster(&reduced.reduced, d, seeds.next_u64())?,
        )?;
        let ri = rand_index(&current, &next)?;
        ri_trace.push(ri);
        current = next;
        if ri > config.ri_stop || (config.ri_stop == 1.0 && ri == 1.0) {
            converged = true;
            break;
        }
    }
    Ok(ClusterOutcome {
        partition: current,
        q_hats,
        ri_trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Pair enumeration, for comparison with the contingency formula.
    fn brute_ri(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let mut agree = 0;
        for i in 0..n {
            for j in i + 1..n {
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
        agree as f64 / (n * (n - 1) / 2) as f64
    }

    fn part(l: &[usize]) -> Partition {
        Partition::from_labels(l)
    }

    #[test]
    fn rand_index_examples() {
        let a = part(&[1, 1, 2, 2]);
        assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
        assert!((rand_index(&a, &part(&[1, 2, 1, 2])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            rand_index(&part(&[0; 4]), &part(&[0, 1, 2, 3])).unwrap(),
            0.0
        );
        assert!(matches!(
            rand_index(&a, &part(&[0, 0, 1])),
            Err(CkpcaError::LengthMismatch { left: 4, right: 3 })
        ));
    }

    #[test]
    fn segmentation_examples() {
        let truth: Vec<usize> = (1..8).map(|i| 100 * i).collect();
        let ri = segmentation_rand_index(&truth, &[], 800).unwrap();
        assert!((ri - 8.0 * 4950.0 / 319600.0).abs() < 1e-12);
        assert!((ri - 0.1239).abs() < 1e-4);
        assert_eq!(segmentation_rand_index(&truth, &truth, 800).unwrap(), 1.0);
        // Moving one boundary by one observation breaks 5 + 4 pairs.
        let ri = segmentation_rand_index(&[5], &[6], 10).unwrap();
        let a: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let b: Vec<usize> = (0..10).map(|i| usize::from(i >= 6)).collect();
        assert_eq!(ri, brute_ri(&a, &b));
        assert!((ri - 36.0 / 45.0).abs() < 1e-15);
        assert!(segmentation_rand_index(&[5, 5], &[], 10).is_err());
    }

    #[test]
    fn kmeans_trivial_cases() {
        let z = DataMatrix::from_rows(&[[0.0], [1.0], [5.0], [9.0]]).unwrap();
        let one = kmeans(&z, 1, 3, 100, 0).unwrap();
        assert_eq!(one.partition.d(), 1);
        let mean = 15.0 / 4.0;
        let scatter: f64 = [0.0, 1.0, 5.0, 9.0]
            .iter()
            .map(|v: &f64| (v - mean).powi(2))
            .sum();
        assert!((one.objective - scatter).abs() < 1e-12);

        let each = kmeans(&z, 4, 3, 100, 0).unwrap();
        assert_eq!(each.partition.d(), 4);
        assert_eq!(each.objective, 0.0);
        assert!(matches!(
            kmeans(&z, 5, 1, 10, 0),
            Err(CkpcaError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn kmeans_separated_blobs() {
        let v = [0.1, -0.2, 0.0, 0.3, 100.0, 100.2, 99.9, 100.1, -0.1, 99.8];
        let truth: Vec<usize> = v.iter().map(|&x| usize::from(x > 50.0)).collect();
        let z = DataMatrix::new(v.len(), 1, v.to_vec()).unwrap();
        let r = kmeans(&z, 2, 5, 100, 3).unwrap();
        assert_eq!(rand_index(&r.partition, &part(&truth)).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_repairs_duplicates() {
        // Fewer distinct points than clusters still yields d nonempty clusters.
        let z = DataMatrix::from_rows(&[[1.0], [1.0], [1.0], [2.0]]).unwrap();
        let r = kmeans(&z, 3, 4, 50, 9).unwrap();
        assert_eq!(r.partition.d(), 3);
    }

    #[test]
    fn kmeans_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = DataMatrix::new(
            60,
            2,
            (0..120).map(|_| rng.sample(StandardNormal)).collect(),
        )
        .unwrap();
        let a = kmeans(&z, 3, 5, 100, 42).unwrap();
        let b = kmeans(&z, 3, 5, 100, 42).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn merge_tiny_categories() {
        let z = DataMatrix::from_rows(&[[0.0], [0.1], [5.0], [5.1], [4.0]]).unwrap();
        let p = merge_tiny(&z, part(&[0, 0, 1, 1, 2])).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1, 1, 1]);
        assert!(matches!(
            merge_tiny(&z, part(&[0, 0, 0, 0, 1])),
            Err(CkpcaError::CategoryTooSmall { .. })
        ));
    }

    #[test]
    fn point_masses_converge_immediately() {
        let mut rows = Vec::new();
        for c in 0..3 {
            for _ in 0..10 {
                rows.push(vec![3.0 * c as f64, -(c as f64), 1.0]);
            }
        }
        let x = DataMatrix::from_rows(&rows).unwrap();
        let truth: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let kernel =
            KernelSpec::from_data(crate::kernels::KernelFamily::Gaussian, &x, 0.8).unwrap();
        let out = iterative_subspace_cluster(&x, &IterClusterConfig::new(3), &kernel).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.ri_trace, vec![1.0]);
        assert_eq!(rand_index(&out.partition, &part(&truth)).unwrap(), 1.0);
    }

    #[test]
    fn permuted_rows_give_same_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for c in 0..3 {
            for _ in 0..20 {
                rows.push(
                    (0..4)
                        .map(|j| {
                            rng.sample::<f64, _>(StandardNormal) * 0.3
                                + if j == c { 6.0 } else { 0.0 }
                        })
                        .collect::<Vec<_>>(),
                );
                truth.push(c);
            }
        }
        let x = DataMatrix::from_rows(&rows).unwrap();
        let mut perm: Vec<usize> = (0..60).collect();
        perm.shuffle(&mut rng);
        let xp = x.select_rows(&perm);
        let kernel =
            KernelSpec::from_data(crate::kernels::KernelFamily::Gaussian, &x, 0.8).unwrap();
        let cfg = IterClusterConfig::new(3);
        let a = iterative_subspace_cluster(&x, &cfg, &kernel).unwrap();
        let b = iterative_subspace_cluster(&xp, &cfg, &kernel).unwrap();
        let unpermuted: Vec<usize> = {
            let mut l = vec![0; 60];
            for (k, &i) in perm.iter().enumerate() {
                l[i] = b.partition.labels()[k];
            }
            l
        };
        assert_eq!(rand_index(&a.partition, &part(&unpermuted)).unwrap(), 1.0);
        assert_eq!(rand_index(&a.partition, &part(&truth)).unwrap(), 1.0);
        assert!(a.iterations <= cfg.max_outer_iterations);
    }

    #[test]
    fn config_validation() {
        let mut cfg = IterClusterConfig::new(1);
        assert!(cfg.validate().is_err());
        cfg.d = 2;
        cfg.ri_stop = 0.0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn rand_index_matches_enumeration(
            a in prop::collection::vec(0usize..4, 2..30),
            seed in any::<u64>(),
            relabel in Just([3usize, 0, 2, 1]),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
            let ri = rand_index(&part(&a), &part(&b)).unwrap();
            prop_assert!((ri - brute_ri(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(ri, rand_index(&part(&b), &part(&a)).unwrap());
            let renamed: Vec<usize> = a.iter().map(|&l| relabel[l]).collect();
            prop_assert_eq!(rand_index(&part(&renamed), &part(&a)).unwrap(), 1.0);
            prop_assert!((0.0..=1.0).contains(&ri));
        }
    }
}
