//! Python module `ckpca`: matrices are passed as lists of rows.

use ckpca as core;
use core::cluster::{
    iterative_subspace_cluster, rand_index as core_rand_index,
    segmentation_rand_index as core_seg_ri, IterClusterConfig,
};
use core::detect::{detect_pipeline_with_data, DetectorConfig, PipelineConfig, PipelineMode};
use core::kernels::{gram as core_gram, select_bandwidth, KernelFamily, KernelSpec};
use core::reduction::{reduce as core_reduce, ReduceConfig};
use core::simdata::{generate as core_generate, Balance, Scenario, ScenarioKind, Truth};
use core::{CkpcaError, DataMatrix, Partition, TrrConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: CkpcaError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    DataMatrix::from_rows(&rows).map_err(err)
}

fn parse<T: std::str::FromStr<Err = CkpcaError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn trr(tau: f64, cn: Option<f64>) -> PyResult<TrrConfig> {
    let t = TrrConfig { tau, c_n: cn };
    t.validate().map_err(err)?;
    Ok(t)
}

/// Data-driven bandwidth `sqrt(m * p * mean column variance)`.
#[pyfunction]
#[pyo3(signature = (x, m = 0.8))]
fn bandwidth(x: Vec<Vec<f64>>, m: f64) -> PyResult<f64> {
    select_bandwidth(&matrix(x)?, m).map_err(err)
}

/// Kernel matrix; the bandwidth defaults to the data-driven rule.
#[pyfunction]
#[pyo3(signature = (x, kernel = "gaussian", bandwidth = None, m = 0.8))]
fn gram(x: Vec<Vec<f64>>, kernel: &str, bandwidth: Option<f64>, m: f64) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix(x)?;
    let family: KernelFamily = parse(kernel)?;
    let spec = match bandwidth {
        Some(h) => KernelSpec::new(family, h).map_err(err)?,
        None => KernelSpec::from_data(family, &x, m).map_err(err)?,
    };
    let k = core_gram(&x, &spec).map_err(err)?;
    Ok((0..k.n())
        .map(|i| (0..k.n()).map(|j| k.get(i, j)).collect())
        .collect())
}

#[pyclass(get_all, frozen)]
struct Reduction {
    q_hat: usize,
    significant: bool,
    eigenvalues: Vec<f64>,
    c_n: f64,
    tau: f64,
    bandwidth: Option<f64>,
    reduced: Vec<Vec<f64>>,
}

#[pymethods]
impl Reduction {
    fn __repr__(&self) -> String {
        format!(
            "Reduction(q_hat={}, significant={}, c_n={:.6})",
            self.q_hat, self.significant, self.c_n
        )
    }
}

/// Corrected reduction (`mode` is "ckpca" or "cpca").
#[pyfunction]
#[pyo3(signature = (x, mode = "ckpca", kernel = "gaussian", m = 0.8, alpha = None, tau = 0.5, cn = None))]
fn reduce(
    x: Vec<Vec<f64>>,
    mode: &str,
    kernel: &str,
    m: f64,
    alpha: Option<usize>,
    tau: f64,
    cn: Option<f64>,
) -> PyResult<Reduction> {
    let x = matrix(x)?;
    let trr = trr(tau, cn)?;
    let config = match parse::<PipelineMode>(mode)? {
        PipelineMode::Ckpca => ReduceConfig::KernelChangePoint {
            kernel: KernelSpec::from_data(parse(kernel)?, &x, m).map_err(err)?,
            alpha,
            trr,
        },
        PipelineMode::Cpca => ReduceConfig::Cpca { alpha, trr },
        other => {
            return Err(PyValueError::new_err(format!(
                "reduce supports ckpca and cpca, not {other:?}"
            )))
        }
    };
    let r = core_reduce(&x, &config).map_err(err)?;
    Ok(Reduction {
        q_hat: r.q_hat,
        significant: r.significant,
        eigenvalues: r.eigenvalues,
        c_n: r.c_n,
        tau: r.tau,
        bandwidth: r.bandwidth,
        reduced: r.reduced.to_rows(),
    })
}

#[pyclass(get_all, frozen)]
struct Detection {
    change_points: Vec<usize>,
    s_hat: usize,
    p_values: Vec<f64>,
    q_hat: usize,
    significant: bool,
    first_coordinate: Vec<f64>,
}

#[pymethods]
impl Detection {
    fn __repr__(&self) -> String {
        format!(
            "Detection(change_points={:?}, q_hat={})",
            self.change_points, self.q_hat
        )
    }
}

/// Reduce then segment; change points are 1-based (last row of each segment).
#[pyfunction]
#[pyo3(signature = (
    x, mode = "ckpca", kernel = "gaussian", m = 0.8, alpha = None, tau = 0.5, cn = None,
    min_size = 30, permutations = 199, alpha_sig = 0.05, max_changes = None, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn detect(
    x: Vec<Vec<f64>>,
    mode: &str,
    kernel: &str,
    m: f64,
    alpha: Option<usize>,
    tau: f64,
    cn: Option<f64>,
    min_size: usize,
    permutations: usize,
    alpha_sig: f64,
    max_changes: Option<usize>,
    seed: u64,
) -> PyResult<Detection> {
    let x = matrix(x)?;
    let config = PipelineConfig {
        kernel: parse(kernel)?,
        multiplier: m,
        alpha,
        trr: trr(tau, cn)?,
        detector: DetectorConfig {
            min_size,
            n_permutations: permutations,
            significance: alpha_sig,
            max_changes,
            seed,
        },
        ..PipelineConfig::default()
    };
    let (r, z) = detect_pipeline_with_data(&x, parse(mode)?, &config).map_err(err)?;
    let (q_hat, significant) = r
        .reduction
        .as_ref()
        .map_or((z.ncols(), true), |s| (s.q_hat, s.significant));
    Ok(Detection {
        p_values: r.p_values(),
        change_points: r.change_points,
        s_hat: r.s_hat,
        q_hat,
        significant,
        first_coordinate: (0..z.nrows()).map(|i| z.get(i, 0)).collect(),
    })
}

#[pyclass(get_all, frozen)]
struct Clustering {
    labels: Vec<usize>,
    q_hats: Vec<usize>,
    iterations: usize,
    converged: bool,
    ri_trace: Vec<f64>,
}

#[pymethods]
impl Clustering {
    fn __repr__(&self) -> String {
        format!(
            "Clustering(iterations={}, converged={})",
            self.iterations, self.converged
        )
    }
}

/// Iterative subspace clustering into `d` categories; labels are 0-based.
#[pyfunction]
#[pyo3(signature = (x, d, kernel = "gaussian", m = 0.8, restarts = 10, seed = 0))]
fn cluster(
    x: Vec<Vec<f64>>,
    d: usize,
    kernel: &str,
    m: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<Clustering> {
    let x = matrix(x)?;
    let mut cfg = IterClusterConfig::new(d);
    cfg.kmeans.restarts = restarts;
    cfg.seed = seed;
    cfg.validate().map_err(err)?;
    let spec = KernelSpec::from_data(parse(kernel)?, &x, m).map_err(err)?;
    let out = iterative_subspace_cluster(&x, &cfg, &spec).map_err(err)?;
    Ok(Clustering {
        labels: out.partition.labels().to_vec(),
        q_hats: out.q_hats,
        iterations: out.iterations,
        converged: out.converged,
        ri_trace: out.ri_trace,
    })
}

/// Rand index between two label vectors.
#[pyfunction]
fn rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    core_rand_index(&Partition::from_labels(&a), &Partition::from_labels(&b)).map_err(err)
}

/// Rand index between two segmentations given by 1-based change points.
#[pyfunction]
fn segmentation_rand_index(true_cps: Vec<usize>, est_cps: Vec<usize>, n: usize) -> PyResult<f64> {
    core_seg_ri(&true_cps, &est_cps, n).map_err(err)
}

/// Synthetic scenario; returns `(x, truth)` where truth is change points or labels.
#[pyfunction]
#[pyo3(signature = (scenario, p, n = None, balance = "balanced", seed = 0, outliers = 0.0, df = 4.0, t_unit_variance = true))]
#[allow(clippy::too_many_arguments)]
fn generate(
    scenario: &str,
    p: usize,
    n: Option<usize>,
    balance: &str,
    seed: u64,
    outliers: f64,
    df: f64,
    t_unit_variance: bool,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let kind: ScenarioKind = parse(scenario)?;
    let base = Scenario::new(kind, p);
    let balance = match balance.to_ascii_lowercase().as_str() {
        "balanced" => Balance::Balanced,
        "imbalanced" => Balance::Imbalanced,
        other => return Err(PyValueError::new_err(format!("unknown balance `{other}`"))),
    };
    let s = Scenario {
        n: n.unwrap_or(base.n),
        balance,
        seed,
        outlier_fraction: outliers,
        df,
        t_unit_variance,
        ..base
    };
    let g = core_generate(&s).map_err(err)?;
    let truth = match g.truth {
        Truth::ChangePoints(c) => c,
        Truth::Labels(l) => l.labels().to_vec(),
    };
    Ok((g.x.to_rows(), truth))
}

#[pymodule(name = "ckpca")]
pub fn ckpca_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Reduction>()?;
    m.add_class::<Detection>()?;
    m.add_class::<Clustering>()?;
    m.add_function(wrap_pyfunction!(bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(gram, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(segmentation_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
