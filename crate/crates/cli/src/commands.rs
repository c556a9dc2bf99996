use std::path::Path;

use ckpca::cluster::{iterative_subspace_cluster, kmeans, IterClusterConfig, KMeans};
use ckpca::detect::{detect_pipeline, detect_pipeline_with_data, PipelineConfig, PipelineMode};
use ckpca::dimsel::cumulative_variance_dimension;
use ckpca::kernels::{gram, KernelFamily, KernelSpec};
use ckpca::reduction::{reduce, KernelReducer, ReduceConfig, ReducedData};
use ckpca::simdata::{
    aggregate, generate, replicate, ReplicationRecord, RunReport, Scenario, ScenarioKind, Truth,
};
use ckpca::{rand_index, segmentation_rand_index, DataMatrix, Partition};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io::{read_csv, write_json, write_matrix, write_table};
use crate::params::Params;

fn flags(significant: bool) -> Vec<&'static str> {
    if significant {
        vec![]
    } else {
        vec!["NoSignificantDirection"]
    }
}

pub fn reduce_data(x: &DataMatrix, params: &Params) -> CliResult<(ReducedData, Value)> {
    let mode = params.mode(PipelineMode::Ckpca)?;
    let trr = params.trr()?;
    let config = match mode {
        PipelineMode::Ckpca => ReduceConfig::KernelChangePoint {
            kernel: KernelSpec::from_data(params.kernel()?, x, params.multiplier()?)?,
            alpha: params.alpha,
            trr,
        },
        PipelineMode::Cpca => ReduceConfig::Cpca {
            alpha: params.alpha,
            trr,
        },
        other => {
            return Err(CliError::usage(format!(
                "reduce supports modes ckpca and cpca, not {other:?}"
            )))
        }
    };
    let r = reduce(x, &config)?;
    let report = json!({
        "command": "reduce",
        "mode": r.mode,
        "n": x.nrows(),
        "p": x.ncols(),
        "q_hat": r.q_hat,
        "significant": r.significant,
        "flags": flags(r.significant),
        "eigenvalues": r.eigenvalues,
        "c_n": r.c_n,
        "tau": r.tau,
        "bandwidth": r.bandwidth,
        "config": params,
    });
    Ok((r, report))
}

pub fn cmd_reduce(params: &Params) -> CliResult<()> {
    let x = read_csv(params.input()?)?;
    let (r, report) = reduce_data(&x, params)?;
    if let Some(out) = params.output.as_deref() {
        write_matrix(out, &r.reduced, "f")?;
    }
    write_json(params.report.as_deref(), &report)
}

pub fn cmd_detect(params: &Params) -> CliResult<()> {
    let x = read_csv(params.input()?)?;
    let mode = params.mode(PipelineMode::Ckpca)?;
    let config = params.pipeline()?;
    let (result, z) = detect_pipeline_with_data(&x, mode, &config)?;
    let (q_hat, significant) = result
        .reduction
        .as_ref()
        .map_or((z.ncols(), true), |r| (r.q_hat, r.significant));
    let report = json!({
        "command": "detect",
        "mode": mode,
        "n": x.nrows(),
        "p": x.ncols(),
        "change_points": result.change_points,
        "s_hat": result.s_hat,
        "q_hat": q_hat,
        "significant": significant,
        "flags": flags(significant),
        "p_values": result.p_values(),
        "tests": result.tests,
        "reduction": result.reduction,
        "seed": config.detector.seed,
        "config": { "params": params, "pipeline": config },
    });
    if let Some(plot) = params.plot.as_deref() {
        let header = ["index", "f1", "change"].map(String::from);
        let rows = (0..z.nrows()).map(|i| {
            let marker = u8::from(result.change_points.contains(&(i + 1)));
            vec![
                (i + 1).to_string(),
                z.get(i, 0).to_string(),
                marker.to_string(),
            ]
        });
        write_table(plot, &header, rows)?;
    }
    write_json(params.output.as_deref(), &report)
}

fn cluster_config(params: &Params, default_d: Option<usize>) -> CliResult<IterClusterConfig> {
    let d = params
        .d
        .or(default_d)
        .ok_or_else(|| CliError::usage("--d (number of categories) is required"))?;
    let mut cfg = IterClusterConfig::new(d);
    cfg.trr = params.trr()?;
    cfg.seed = params.seed.unwrap_or(0);
    if let Some(r) = params.restarts {
        cfg.kmeans.restarts = r;
    }
    cfg.validate().map_err(CliError::usage)?;
    if cfg.kmeans.restarts == 0 {
        return Err(CliError::usage("--restarts must be at least 1"));
    }
    Ok(cfg)
}

pub fn cmd_cluster(params: &Params) -> CliResult<()> {
    let x = read_csv(params.input()?)?;
    let cfg = cluster_config(params, None)?;
    let kernel = KernelSpec::from_data(params.kernel()?, &x, params.multiplier()?)?;
    let out = iterative_subspace_cluster(&x, &cfg, &kernel)?;
    if let Some(path) = params.output.as_deref() {
        let rows = out
            .partition
            .labels()
            .iter()
            .map(|l| vec![(l + 1).to_string()]);
        write_table(path, &["label".to_string()], rows)?;
    }
    let report = json!({
        "command": "cluster",
        "n": x.nrows(),
        "p": x.ncols(),
        "d": cfg.d,
        "sizes": out.partition.sizes(),
        "q_hat": out.q_hats,
        "iterations": out.iterations,
        "converged": out.converged,
        "ri_trace": out.ri_trace,
        "bandwidth": kernel.bandwidth,
        "config": { "params": params, "cluster": cfg },
    });
    write_json(params.report.as_deref(), &report)
}

const CHANGE_METHODS: [PipelineMode; 4] = [
    PipelineMode::Ckpca,
    PipelineMode::Cpca,
    PipelineMode::Kpca,
    PipelineMode::Raw,
];
const CLUSTER_METHODS: [PipelineMode; 3] =
    [PipelineMode::Ckpca, PipelineMode::Kpca, PipelineMode::Raw];

/// One bench replication on a change-point scenario: generate with `seed`, detect, score.
pub fn changepoint_replication(
    scenario: &Scenario,
    mode: PipelineMode,
    config: &PipelineConfig,
    seed: u64,
) -> ckpca::Result<ReplicationRecord> {
    let g = generate(&Scenario { seed, ..*scenario })?;
    let Truth::ChangePoints(truth) = &g.truth else {
        unreachable!("change-point scenario")
    };
    let mut cfg = *config;
    cfg.detector.seed = seed;
    let r = detect_pipeline(&g.x, mode, &cfg)?;
    Ok(ReplicationRecord {
        seed,
        s_hat: r.s_hat,
        ri: segmentation_rand_index(truth, &r.change_points, g.x.nrows())?,
    })
}

/// Uncorrected kernel PCA (cumulative variance 0.95) followed by k-means.
pub fn kpca_kmeans(
    x: &DataMatrix,
    kernel: &KernelSpec,
    d: usize,
    km: &KMeans,
    seed: u64,
) -> ckpca::Result<Partition> {
    let reducer = KernelReducer::new(gram(x, kernel)?)?;
    let spectrum = reducer.global_spectrum()?;
    let q = cumulative_variance_dimension(spectrum.eigenvalues(), 0.95);
    let (_, z) = reducer.project(&spectrum, q);
    Ok(kmeans(&z, d, km.restarts, km.max_iter, seed)?.partition)
}

/// One bench replication on the clustering scenario.
pub fn cluster_replication(
    scenario: &Scenario,
    mode: PipelineMode,
    family: KernelFamily,
    m: f64,
    cfg: &IterClusterConfig,
    seed: u64,
) -> ckpca::Result<ReplicationRecord> {
    let g = generate(&Scenario { seed, ..*scenario })?;
    let Truth::Labels(truth) = &g.truth else {
        unreachable!("clustering scenario")
    };
    let partition = match mode {
        PipelineMode::Ckpca => {
            let kernel = KernelSpec::from_data(family, &g.x, m)?;
            iterative_subspace_cluster(&g.x, &IterClusterConfig { seed, ..*cfg }, &kernel)?
                .partition
        }
        PipelineMode::Kpca => {
            let kernel = KernelSpec::from_data(family, &g.x, m)?;
            kpca_kmeans(&g.x, &kernel, cfg.d, &cfg.kmeans, seed)?
        }
        _ => kmeans(&g.x, cfg.d, cfg.kmeans.restarts, cfg.kmeans.max_iter, seed)?.partition,
    };
    Ok(ReplicationRecord {
        seed,
        s_hat: partition.d(),
        ri: rand_index(&partition, truth)?,
    })
}

pub fn method_name(mode: PipelineMode) -> &'static str {
    match mode {
        PipelineMode::Ckpca => "ckpca",
        PipelineMode::Cpca => "cpca",
        PipelineMode::Kpca => "kpca-baseline",
        PipelineMode::Raw => "raw",
    }
}

/// Runs the benchmark and returns the JSON report plus per-method summaries.
pub fn run_bench(
    params: &Params,
    positional: Option<&str>,
) -> CliResult<(Value, Vec<(&'static str, RunReport)>)> {
    let scenario = params.scenario(positional)?;
    let reps = params.reps.unwrap_or(50);
    if reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let seed = params.seed.unwrap_or(0);
    let clustering = scenario.kind == ScenarioKind::ClusterShells;
    let methods: Vec<PipelineMode> = match params.mode.as_deref() {
        Some(_) => vec![params.mode(PipelineMode::Ckpca)?],
        None if clustering => CLUSTER_METHODS.to_vec(),
        None => CHANGE_METHODS.to_vec(),
    };
    let mut summaries = Vec::new();
    let config_echo = if clustering {
        if methods.contains(&PipelineMode::Cpca) {
            return Err(CliError::usage(
                "cpca is a change-point method; use ckpca, kpca or raw for clustershells",
            ));
        }
        let cfg = cluster_config(params, Some(3))?;
        let (family, m) = (params.kernel()?, params.multiplier()?);
        for &mode in &methods {
            let records = replicate(reps, seed, |s| {
                cluster_replication(&scenario, mode, family, m, &cfg, s)
            })?;
            summaries.push((method_name(mode), aggregate(&records, cfg.d)?));
        }
        json!({ "params": params, "cluster": cfg })
    } else {
        let pipeline = params.pipeline()?;
        let s_true = scenario.change_points().len();
        for &mode in &methods {
            let records = replicate(reps, seed, |s| {
                changepoint_replication(&scenario, mode, &pipeline, s)
            })?;
            summaries.push((method_name(mode), aggregate(&records, s_true)?));
        }
        json!({ "params": params, "pipeline": pipeline })
    };
    let report = json!({
        "command": "bench",
        "scenario": scenario,
        "replications": reps,
        "seed": seed,
        "t_unit_variance": scenario.t_unit_variance,
        "methods": summaries.iter().map(|(m, r)| json!({ "method": m, "report": r })).collect::<Vec<_>>(),
        "config": config_echo,
    });
    Ok((report, summaries))
}

pub fn cmd_bench(params: &Params, positional: Option<&str>) -> CliResult<()> {
    let (report, summaries) = run_bench(params, positional)?;
    if let Some(path) = params.table.as_deref() {
        write_summary_table(path, &summaries)?;
    }
    write_json(params.output.as_deref(), &report)
}

fn write_summary_table(path: &Path, summaries: &[(&'static str, RunReport)]) -> CliResult<()> {
    let header = ["method", "s_hat", "rmse", "ri", "ri_sd"].map(String::from);
    let rows = summaries.iter().map(|(m, r)| {
        vec![
            m.to_string(),
            format!("{:.3}", r.mean_s_hat),
            format!("{:.3}", r.rmse),
            format!("{:.3}", r.mean_ri),
            format!("{:.3}", r.sd_ri),
        ]
    });
    write_table(path, &header, rows)
}
