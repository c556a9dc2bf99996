//! Kernel functions, Gram matrices and the data-driven bandwidth rule.
//!
//! The bandwidth rule sets `h^2 = m * p * mean_j Var[X_j]`, with unbiased column
//! variances, and `m = 0.8` as the default multiplier.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{CkpcaError, Result};

pub const DEFAULT_MULTIPLIER: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-|x - y|_2^2 / (2 h^2))`
    Gaussian,
    /// `exp(-|x - y|_1 / h)`
    Laplace,
    /// `exp(-|x - y|_2 / h)`
    Exponential,
    /// `<x, y>`; bandwidth is ignored.
    Linear,
}

impl KernelFamily {
    pub fn is_translation_invariant(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = CkpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(Self::Gaussian),
            "laplace" => Ok(Self::Laplace),
            "exponential" => Ok(Self::Exponential),
            "linear" => Ok(Self::Linear),
            other => Err(CkpcaError::InvalidParameter(format!(
                "unknown kernel family `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub multiplier: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        let spec = Self {
            family,
            bandwidth,
            multiplier: DEFAULT_MULTIPLIER,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: 1.0,
            multiplier: DEFAULT_MULTIPLIER,
        }
    }

    /// Resolves the bandwidth from the data with multiplier `m`.
    pub fn from_data(family: KernelFamily, x: &DataMatrix, m: f64) -> Result<Self> {
        let bandwidth = match family {
            KernelFamily::Linear => 1.0,
            _ => select_bandwidth(x, m)?,
        };
        let spec = Self {
            family,
            bandwidth,
            multiplier: m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(CkpcaError::InvalidParameter(format!(
                "bandwidth multiplier must be positive, got {}",
                self.multiplier
            )));
        }
        if self.family.is_translation_invariant()
            && !(self.bandwidth > 0.0 && self.bandwidth.is_finite())
        {
            return Err(CkpcaError::InvalidBandwidth(self.bandwidth));
        }
        Ok(())
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let h = self.bandwidth;
        match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * h * h)).exp()
            }
            KernelFamily::Laplace => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                (-l1 / h).exp()
            }
            KernelFamily::Exponential => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq.sqrt() / h).exp()
            }
            KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

/// `h = sqrt(m * p * mean of unbiased column variances)`.
pub fn select_bandwidth(x: &DataMatrix, m: f64) -> Result<f64> {
    if x.nrows() < 2 {
        return Err(CkpcaError::TooFewPoints {
            needed: 2,
            found: x.nrows(),
        });
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(CkpcaError::InvalidParameter(format!(
            "bandwidth multiplier must be positive, got {m}"
        )));
    }
    let vars = x.column_variances();
    if vars.iter().all(|&v| v == 0.0) {
        return Err(CkpcaError::AllConstantData);
    }
    let p = x.ncols() as f64;
    let mean_var = vars.iter().sum::<f64>() / p;
    Ok((m * p * mean_var).sqrt())
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CkpcaError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    spec.validate()?;
    Ok(spec.eval_unchecked(x, y))
}

/// Symmetric `n x n` kernel matrix.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: Mat<f64>,
}

impl GramMatrix {
    /// Wraps a precomputed symmetric matrix.
    pub fn from_mat(values: Mat<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(CkpcaError::DimensionMismatch {
                expected: values.nrows(),
                found: values.ncols(),
            });
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Mat<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.values[(i, i)]).sum()
    }
}

/// Pairwise kernel matrix; each unordered pair is evaluated once.
pub fn gram(x: &DataMatrix, spec: &KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(CkpcaError::TooFewPoints {
            needed: 2,
            found: n,
        });
    }
    let mut k = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..=i {
            let v = spec.eval_unchecked(xi, x.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix { values: k })
}
