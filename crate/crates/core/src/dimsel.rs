//! Thresholding ridge ratio (TRR) estimate of the structural dimension.
//!
//! `q = max { k : (l_{k+1} + c) / (l_k + c) <= tau }`, over a descending
//! eigenvalue sequence with negative values clamped to zero.

use serde::{Deserialize, Serialize};

use crate::error::{CkpcaError, Result};

pub const DEFAULT_TAU: f64 = 0.5;

/// Selects the default ridge formula: `sqrt(1/n)` scaling for kernel spectra,
/// `sqrt(p/n)` for the linear (CPCA) spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeMode {
    Kernel,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrrConfig {
    pub tau: f64,
    /// Fixed ridge; `None` uses [`default_ridge`].
    pub c_n: Option<f64>,
}

impl Default for TrrConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            c_n: None,
        }
    }
}

impl TrrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(CkpcaError::InvalidParameter(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if let Some(c) = self.c_n {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CkpcaError::InvalidParameter(format!(
                    "ridge c_n must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn ridge(&self, n: usize, p: usize, mode: RidgeMode) -> Result<f64> {
        match self.c_n {
            Some(c) => Ok(c),
            None => default_ridge(n, p, mode),
        }
    }
}

/// `0.2 * ln(ln n) * sqrt(1/n)` (kernel) or `0.2 * ln(ln n) * sqrt(p/n)` (linear).
pub fn default_ridge(n: usize, p: usize, mode: RidgeMode) -> Result<f64> {
    if n < 16 {
        return Err(CkpcaError::NTooSmall(n));
    }
    if p == 0 {
        return Err(CkpcaError::InvalidParameter("p must be at least 1".into()));
    }
    let nf = n as f64;
    let loglog = nf.ln().ln();
    if loglog <= 0.0 {
        return Err(CkpcaError::NTooSmall(n));
    }
    let scale = match mode {
        RidgeMode::Kernel => (1.0 / nf).sqrt(),
        RidgeMode::Linear => (p as f64 / nf).sqrt(),
    };
    Ok(0.2 * loglog * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrrSelection {
    pub q_hat: usize,
    /// `false` when no ratio fell below `tau` and `q_hat` is the fallback 1.
    pub significant: bool,
}

pub fn trr_select(eigenvalues: &[f64], tau: f64, c_n: f64) -> Result<TrrSelection> {
    if eigenvalues.len() < 2 {
        return Err(CkpcaError::InvalidParameter(format!(
            "TRR needs at least 2 eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    TrrConfig {
        tau,
        c_n: Some(c_n),
    }
    .validate()?;
    let clamped: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    if clamped.windows(2).any(|w| w[1] > w[0]) {
        return Err(CkpcaError::InvalidParameter(
            "eigenvalues must be sorted in descending order".into(),
        ));
    }
    let q = clamped
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] + c_n) / (w[0] + c_n) <= tau)
        .map(|(k, _)| k + 1)
        .next_back();
    Ok(match q {
        Some(q_hat) => TrrSelection {
            q_hat,
            significant: true,
        },
        None => TrrSelection {
            q_hat: 1,
            significant: false,
        },
    })
}

/// Smallest `k` whose leading positive eigenvalues reach `ratio` of the positive total.
pub fn cumulative_variance_dimension(eigenvalues: &[f64], ratio: f64) -> usize {
    let positive: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > 0.0).collect();
    let total: f64 = positive.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (k, l) in positive.iter().enumerate() {
        acc += l;
        if acc >= ratio * total {
            return k + 1;
        }
    }
    positive.len().max(1)
}
