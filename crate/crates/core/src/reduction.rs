//! Corrected eigenproblems and the reduced data they induce.
//!
//! Kernel mode solves `(global - within) K a = l a` through the congruent
//! symmetric problem. With `K = Q diag(s) Q^T` truncated to the eigenvalues
//! above `1e-10 * s_max`, set `V = Q diag(sqrt(s))` and eigendecompose the
//! `r x r` matrix `V^T C V`. Its eigenpairs `(l, z)` give `a = Q diag(1/sqrt(s)) z`,
//! which satisfies `C K a = l a` and `a^T K a = |z|^2 = 1`. The remaining `n - r`
//! eigenvalues of `C K` are exactly zero.
//!
//! Linear mode (CPCA) eigendecomposes the `p x p` matrix `X^T (L - U) X`.

use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::dimsel::{trr_select, RidgeMode, TrrConfig};
use crate::error::{CkpcaError, Result};
use crate::kernels::{gram, GramMatrix, KernelSpec};
use crate::operators::{
    apply_global_centering, changepoint_operators, cluster_operators, make_segments, CenteringPair,
    SegmentScheme,
};
use crate::partition::Partition;

/// Relative rank cutoff applied to the Gram spectrum.
pub const GRAM_RANK_TOL: f64 = 1e-10;

/// Eigenvalues (descending) with matching coefficient columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    coefficients: Mat<f64>,
    dimension: usize,
}

impl Spectrum {
    /// Eigenvalues that have a coefficient column, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Full-length spectrum: the computed eigenvalues plus the structural zeros
    /// (kernel rank deficiency), sorted descending.
    pub fn padded_eigenvalues(&self) -> Vec<f64> {
        let mut all = self.eigenvalues.clone();
        all.resize(self.dimension, 0.0);
        all.sort_by(|a, b| b.total_cmp(a));
        all
    }

    /// Column `i` is `a_i` (kernel, length n) or `b_i` (linear, length p).
    pub fn coefficients(&self) -> &Mat<f64> {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// First `q` coefficient columns.
    pub fn basis(&self, q: usize) -> Mat<f64> {
        let q = q.min(self.coefficients.ncols());
        self.coefficients.subcols(0, q).to_owned()
    }
}

/// Descending eigenpairs of a symmetric matrix.
fn symmetric_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| CkpcaError::EigenFailure)?;
    let vals = evd.S().column_vector();
    let vecs = evd.U();
    let k = m.nrows();
    let values: Vec<f64> = (0..k).rev().map(|i| vals[i]).collect();
    let vectors = Mat::from_fn(k, k, |i, j| vecs[(i, k - 1 - j)]);
    Ok((values, vectors))
}

/// Flips each column so its largest-magnitude entry is positive.
fn fix_signs(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0.0f64;
        for i in 0..m.nrows() {
            if m[(i, j)].abs() > best.abs() {
                best = m[(i, j)];
            }
        }
        if best < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

fn symmetrize(m: &mut Mat<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Gram matrix together with its truncated square-root factor.
#[derive(Debug, Clone)]
pub struct KernelReducer {
    gram: GramMatrix,
    eigvecs: Mat<f64>,
    sqrt_vals: Vec<f64>,
    factor: Mat<f64>,
}

impl KernelReducer {
    pub fn new(gram: GramMatrix) -> Result<Self> {
        let (vals, vecs) = symmetric_eigen(gram.values().as_ref())?;
        let lmax = vals.first().copied().unwrap_or(0.0);
        if !(lmax > 0.0) {
            return Err(CkpcaError::DegenerateGram);
        }
        let tol = GRAM_RANK_TOL * lmax;
        let rank = vals.iter().take_while(|&&l| l > tol).count();
        let n = gram.n();
        let sqrt_vals: Vec<f64> = vals[..rank].iter().map(|l| l.sqrt()).collect();
        let eigvecs = vecs.subcols(0, rank).to_owned();
        let factor = Mat::from_fn(n, rank, |i, j| eigvecs[(i, j)] * sqrt_vals[j]);
        Ok(Self {
            gram,
            eigvecs,
            sqrt_vals,
            factor,
        })
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn rank(&self) -> usize {
        self.sqrt_vals.len()
    }

    /// Spectrum of `C K` where `apply(M) = C M` and `C` is symmetric.
    fn spectrum_of(&self, apply: impl Fn(MatRef<'_, f64>) -> Mat<f64>) -> Result<Spectrum> {
        let cv = apply(self.factor.as_ref());
        let mut w = self.factor.transpose() * &cv;
        symmetrize(&mut w);
        let (values, z) = symmetric_eigen(w.as_ref())?;
        let r = self.rank();
        let scaled = Mat::from_fn(r, r, |i, j| z[(i, j)] / self.sqrt_vals[i]);
        let mut coefficients = &self.eigvecs * &scaled;
        fix_signs(&mut coefficients);
        Ok(Spectrum {
            eigenvalues: values,
            coefficients,
            dimension: self.gram.n(),
        })
    }

    /// Spectrum of `(global - within) K`.
    pub fn corrected_spectrum(&self, pair: &CenteringPair) -> Result<Spectrum> {
        self.check_size(pair)?;
        self.spectrum_of(|m| pair.apply_combined(m))
    }

    /// Spectrum of `global K` (classical kernel PCA).
    pub fn uncorrected_spectrum(&self, pair: &CenteringPair) -> Result<Spectrum> {
        self.check_size(pair)?;
        self.spectrum_of(|m| pair.apply_global(m))
    }

    /// Spectrum of `(1/n)(I - J/n) K`; needs no partition.
    pub fn global_spectrum(&self) -> Result<Spectrum> {
        self.spectrum_of(apply_global_centering)
    }

    fn check_size(&self, pair: &CenteringPair) -> Result<()> {
        if pair.n() != self.gram.n() {
            return Err(CkpcaError::DimensionMismatch {
                expected: self.gram.n(),
                found: pair.n(),
            });
        }
        Ok(())
    }

    /// `K B` for the first `q` coefficient columns.
    pub fn project(&self, spectrum: &Spectrum, q: usize) -> (Mat<f64>, DataMatrix) {
        let basis = spectrum.basis(q);
        let reduced = self.gram.values() * &basis;
        (basis, DataMatrix::from_mat(reduced.as_ref()))
    }

    /// TRR-selected corrected reduction for a prebuilt operator pair.
    pub fn reduce(
        &self,
        pair: &CenteringPair,
        trr: &TrrConfig,
        mode: ReductionMode,
    ) -> Result<ReducedData> {
        trr.validate()?;
        let spectrum = self.corrected_spectrum(pair)?;
        let c_n = trr.ridge(self.gram.n(), 1, RidgeMode::Kernel)?;
        let padded = spectrum.padded_eigenvalues();
        let sel = trr_select(&padded, trr.tau, c_n)?;
        let (basis, reduced) = self.project(&spectrum, sel.q_hat);
        Ok(ReducedData {
            mode,
            q_hat: sel.q_hat,
            significant: sel.significant,
            basis,
            reduced,
            eigenvalues: padded,
            c_n,
            tau: trr.tau,
            bandwidth: None,
        })
    }
}

/// Spectrum of `C K` for a Gram matrix and centering pair.
pub fn corrected_kernel_spectrum(k: &GramMatrix, pair: &CenteringPair) -> Result<Spectrum> {
    KernelReducer::new(k.clone())?.corrected_spectrum(pair)
}

/// The CPCA target `X^T (L - U) X`; exactly symmetric.
#[derive(Debug, Clone)]
pub struct DeltaMatrix {
    values: Mat<f64>,
}

impl DeltaMatrix {
    pub fn values(&self) -> &Mat<f64> {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let (eigenvalues, mut coefficients) = symmetric_eigen(self.values.as_ref())?;
        fix_signs(&mut coefficients);
        Ok(Spectrum {
            eigenvalues,
            coefficients,
            dimension: self.p(),
        })
    }
}

/// Scatter of rows `rows` about their own mean, divided by `denom` (upper triangle filled).
fn accumulate_scatter(
    x: &DataMatrix,
    rows: std::ops::Range<usize>,
    denom: f64,
    sign: f64,
    out: &mut Mat<f64>,
) {
    let p = x.ncols();
    let count = rows.len() as f64;
    let mut mean = vec![0.0; p];
    for i in rows.clone() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let centered = Mat::from_fn(rows.len(), p, |i, j| x.get(rows.start + i, j) - mean[j]);
    let scatter = centered.transpose() * &centered;
    let scale = sign / denom;
    for a in 0..p {
        for b in a..p {
            out[(a, b)] += scale * scatter[(a, b)];
        }
    }
}

/// `Delta_n = M_n - Sigma_pooled,n`: the global centered scatter over `n` minus
/// the average of unbiased within-segment covariances.
pub fn cpca_delta(x: &DataMatrix, scheme: &SegmentScheme) -> Result<DeltaMatrix> {
    let n = x.nrows();
    if scheme.n() != n {
        return Err(CkpcaError::DimensionMismatch {
            expected: n,
            found: scheme.n(),
        });
    }
    if x.ncols() == 0 {
        return Err(CkpcaError::InvalidParameter("p must be at least 1".into()));
    }
    for (m, seg) in scheme.boundaries().iter().enumerate() {
        if seg.len() < 2 {
            return Err(CkpcaError::SegmentTooSmall {
                segment: m,
                size: seg.len(),
            });
        }
    }
    let p = x.ncols();
    let mut values = Mat::<f64>::zeros(p, p);
    accumulate_scatter(x, 0..n, n as f64, 1.0, &mut values);
    let r = scheme.r() as f64;
    for seg in scheme.boundaries() {
        accumulate_scatter(
            x,
            seg.clone(),
            r * (seg.len() as f64 - 1.0),
            -1.0,
            &mut values,
        );
    }
    for a in 0..p {
        for b in 0..a {
            values[(a, b)] = values[(b, a)];
        }
    }
    Ok(DeltaMatrix { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMode {
    CkpcaChangePoint,
    CkpcaCluster,
    Cpca,
}

#[derive(Debug, Clone)]
pub struct ReducedData {
    pub mode: ReductionMode,
    pub q_hat: usize,
    /// `false` when TRR found no qualifying ratio and `q_hat` fell back to 1.
    pub significant: bool,
    /// `B_n`: n x q (kernel) or p x q (CPCA).
    pub basis: Mat<f64>,
    /// `K B_n` or `X B_n`.
    pub reduced: DataMatrix,
    pub eigenvalues: Vec<f64>,
    pub c_n: f64,
    pub tau: f64,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum ReduceConfig {
    KernelChangePoint {
        kernel: KernelSpec,
        alpha: Option<usize>,
        trr: TrrConfig,
    },
    KernelCluster {
        kernel: KernelSpec,
        partition: Partition,
        trr: TrrConfig,
    },
    Cpca {
        alpha: Option<usize>,
        trr: TrrConfig,
    },
}

pub fn reduce(x: &DataMatrix, config: &ReduceConfig) -> Result<ReducedData> {
    let n = x.nrows();
    match config {
        ReduceConfig::KernelChangePoint { kernel, alpha, trr } => {
            let pair = changepoint_operators(&make_segments(n, *alpha)?)?;
            let reducer = KernelReducer::new(gram(x, kernel)?)?;
            let mut out = reducer.reduce(&pair, trr, ReductionMode::CkpcaChangePoint)?;
            out.bandwidth = kernel
                .family
                .is_translation_invariant()
                .then_some(kernel.bandwidth);
            Ok(out)
        }
        ReduceConfig::KernelCluster {
            kernel,
            partition,
            trr,
        } => {
            if partition.n() != n {
                return Err(CkpcaError::LengthMismatch {
                    left: n,
                    right: partition.n(),
                });
            }
            let pair = cluster_operators(partition)?;
            let reducer = KernelReducer::new(gram(x, kernel)?)?;
            let mut out = reducer.reduce(&pair, trr, ReductionMode::CkpcaCluster)?;
            out.bandwidth = kernel
                .family
                .is_translation_invariant()
                .then_some(kernel.bandwidth);
            Ok(out)
        }
        ReduceConfig::Cpca { alpha, trr } => {
            trr.validate()?;
            let delta = cpca_delta(x, &make_segments(n, *alpha)?)?;
            let spectrum = delta.spectrum()?;
            let c_n = trr.ridge(n, x.ncols(), RidgeMode::Linear)?;
            let eigenvalues = spectrum.padded_eigenvalues();
            let (q_hat, significant) = if eigenvalues.len() < 2 {
                (1, false)
            } else {
                let sel = trr_select(&eigenvalues, trr.tau, c_n)?;
                (sel.q_hat, sel.significant)
            };
            let basis = spectrum.basis(q_hat);
            let reduced = x.to_mat() * &basis;
            Ok(ReducedData {
                mode: ReductionMode::Cpca,
                q_hat,
                significant,
                basis,
                reduced: DataMatrix::from_mat(reduced.as_ref()),
                eigenvalues,
                c_n,
                tau: trr.tau,
                bandwidth: None,
            })
        }
    }
}
