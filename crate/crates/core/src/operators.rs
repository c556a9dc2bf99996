//! Segment schemes and the centering operators of the corrected eigenproblem.
//!
//! For data `Y` (rows = observations) the global operator `L` (or `R`) gives
//! `Y^T L Y = (1/n) sum (Y_i - Ybar)(Y_i - Ybar)^T`, and the within operator
//! `U` (or `S`) gives the pooled within-group covariance:
//!
//! * change-point mode: `U = sum_m P_m / (r (n_m - 1))` over `r` contiguous
//!   segments, so `Y^T U Y` is the plain average of unbiased segment covariances;
//! * cluster mode: `S = sum_i P_i / (n - d)`, the `(n_i - 1)/(n - d)` weighted
//!   average of unbiased category covariances.
//!
//! `P_g` is the centering projector `I - J/n_g` of group `g`, scattered into the
//! group's rows and columns.

use std::ops::Range;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{CkpcaError, Result};
use crate::partition::Partition;

/// Non-overlapping contiguous blocks used by the pooled covariance estimator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentScheme {
    n: usize,
    alpha: usize,
    boundaries: Vec<Range<usize>>,
}

impl SegmentScheme {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn r(&self) -> usize {
        self.boundaries.len()
    }

    /// 0-based half-open row ranges, in order.
    pub fn boundaries(&self) -> &[Range<usize>] {
        &self.boundaries
    }
}

/// Default block length `floor(sqrt(n))`.
pub fn default_alpha(n: usize) -> usize {
    let mut a = (n as f64).sqrt().floor() as usize;
    // Guard against floating-point error at perfect squares.
    while (a + 1) * (a + 1) <= n {
        a += 1;
    }
    while a * a > n {
        a -= 1;
    }
    a
}

/// Splits `0..n` into `r = floor(n / alpha)` blocks; the last block absorbs the remainder.
pub fn make_segments(n: usize, alpha: Option<usize>) -> Result<SegmentScheme> {
    let alpha = alpha.unwrap_or_else(|| default_alpha(n));
    if n < 4 || alpha < 2 || alpha > n / 2 {
        return Err(CkpcaError::InvalidAlpha { n, alpha });
    }
    let r = n / alpha;
    let boundaries = (0..r)
        .map(|m| {
            let start = m * alpha;
            let end = if m + 1 == r { n } else { start + alpha };
            start..end
        })
        .collect();
    Ok(SegmentScheme {
        n,
        alpha,
        boundaries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CenteringMode {
    ChangePoint,
    Cluster,
}

/// The `(L, U)` or `(R, S)` pair, materialized as dense `n x n` matrices.
#[derive(Debug, Clone)]
pub struct CenteringPair {
    global: Mat<f64>,
    within: Mat<f64>,
    mode: CenteringMode,
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl CenteringPair {
    pub fn n(&self) -> usize {
        self.global.nrows()
    }

    pub fn global(&self) -> &Mat<f64> {
        &self.global
    }

    pub fn within(&self) -> &Mat<f64> {
        &self.within
    }

    pub fn mode(&self) -> CenteringMode {
        self.mode
    }

    /// Dense `global - within`.
    pub fn combined(&self) -> Mat<f64> {
        &self.global - &self.within
    }

    /// `global * m` without forming the dense product.
    pub fn apply_global(&self, m: MatRef<'_, f64>) -> Mat<f64> {
        apply_global_centering(m)
    }

    /// `(global - within) * m`, exploiting the group structure (O(n * cols)).
    pub fn apply_combined(&self, m: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = self.apply_global(m);
        for (group, &w) in self.groups.iter().zip(&self.weights) {
            let size = group.len() as f64;
            for j in 0..m.ncols() {
                let mean = group.iter().map(|&i| m[(i, j)]).sum::<f64>() / size;
                for &i in group {
                    out[(i, j)] -= w * (m[(i, j)] - mean);
                }
            }
        }
        out
    }
}

/// `(1/n)(I - J/n) m` for an `n`-row matrix.
pub fn apply_global_centering(m: MatRef<'_, f64>) -> Mat<f64> {
    let n = m.nrows() as f64;
    let mut out = m.to_owned();
    for j in 0..out.ncols() {
        let mean = (0..out.nrows()).map(|i| out[(i, j)]).sum::<f64>() / n;
        for i in 0..out.nrows() {
            out[(i, j)] = (out[(i, j)] - mean) / n;
        }
    }
    out
}

fn global_operator(n: usize) -> Mat<f64> {
    let nf = n as f64;
    Mat::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta - 1.0 / nf) / nf
    })
}

fn within_operator(n: usize, groups: &[Vec<usize>], weights: &[f64]) -> Mat<f64> {
    let mut u = Mat::<f64>::zeros(n, n);
    for (group, &w) in groups.iter().zip(weights) {
        let inv = 1.0 / group.len() as f64;
        for &i in group {
            for &j in group {
                let delta = if i == j { 1.0 } else { 0.0 };
                u[(i, j)] = w * (delta - inv);
            }
        }
    }
    u
}

/// `L = (1/n)(I - J/n)` and `U = sum_m (I_m - J_m/n_m) / (r (n_m - 1))`.
pub fn changepoint_operators(scheme: &SegmentScheme) -> Result<CenteringPair> {
    let r = scheme.r() as f64;
    for (m, seg) in scheme.boundaries().iter().enumerate() {
        if seg.len() < 2 {
            return Err(CkpcaError::SegmentTooSmall {
                segment: m,
                size: seg.len(),
            });
        }
    }
    let groups: Vec<Vec<usize>> = scheme
        .boundaries()
        .iter()
        .map(|s| s.clone().collect())
        .collect();
    let weights: Vec<f64> = groups
        .iter()
        .map(|g| 1.0 / (r * (g.len() as f64 - 1.0)))
        .collect();
    let n = scheme.n();
    Ok(CenteringPair {
        global: global_operator(n),
        within: within_operator(n, &groups, &weights),
        mode: CenteringMode::ChangePoint,
        groups,
        weights,
    })
}

/// `R = (1/n)(I - J/n)` and `S = sum_i (I_i - J_i/n_i) / (n - d)`.
pub fn cluster_operators(partition: &Partition) -> Result<CenteringPair> {
    let n = partition.n();
    let d = partition.d();
    for (category, &size) in partition.sizes().iter().enumerate() {
        if size < 2 {
            return Err(CkpcaError::CategoryTooSmall { category, size });
        }
    }
    if n <= d {
        return Err(CkpcaError::TooFewPoints {
            needed: d + 1,
            found: n,
        });
    }
    let groups = partition.groups();
    let w = 1.0 / (n - d) as f64;
    let weights = vec![w; groups.len()];
    Ok(CenteringPair {
        global: global_operator(n),
        within: within_operator(n, &groups, &weights),
        mode: CenteringMode::Cluster,
        groups,
        weights,
    })
}
