//! Flag and config-file parameters. Every flag has a same-named JSON key
//! (snake_case); flags override the file.

use std::path::{Path, PathBuf};

use ckpca::detect::{DetectorConfig, PipelineConfig, PipelineMode};
use ckpca::kernels::{KernelFamily, DEFAULT_MULTIPLIER};
use ckpca::simdata::{Balance, Scenario, ScenarioKind};
use ckpca::TrrConfig;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// JSON file with any of these options; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV (rows are observations).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Main output: reduced/labels CSV, or the JSON report for detect/bench.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON report path for reduce/cluster (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Plot-data CSV for detect.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Summary table CSV for bench.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// ckpca, cpca, raw or kpca.
    #[arg(long)]
    pub mode: Option<String>,
    /// gaussian, laplace, exponential or linear.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Bandwidth multiplier.
    #[arg(long)]
    pub m: Option<f64>,
    /// Pooling segment length (defaults to floor(sqrt(n))).
    #[arg(long)]
    pub alpha: Option<usize>,
    /// TRR ratio threshold
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fixed TRR ridge.
    #[arg(long)]
    pub cn: Option<f64>,
    /// Minimum segment length
    #[arg(long)]
    pub min_size: Option<usize>,
    /// Permutations per split test
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Permutation-test significance level.
    #[arg(long)]
    pub alpha_sig: Option<f64>,
    /// Cap on the number of change points
    #[arg(long)]
    pub max_changes: Option<usize>,
    /// Number of categories for cluster.
    #[arg(long)]
    pub d: Option<usize>,
    /// K-means restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Bench replications
    #[arg(long)]
    pub reps: Option<usize>,
    /// RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// ex1case1, ex1case2, ex2, meanshift or clustershells.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Scenario dimension
    #[arg(long)]
    pub p: Option<usize>,
    /// Scenario length
    #[arg(long)]
    pub n: Option<usize>,
    /// balanced or imbalanced.
    #[arg(long)]
    pub balance: Option<String>,
    /// Degrees of freedom of the t segments.
    #[arg(long)]
    pub df: Option<f64>,
    /// Mean jump for the meanshift scenario.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Outlier fraction per segment.
    #[arg(long)]
    pub outliers: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub t_unit_variance: Option<bool>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),+) => {
        Params { $($f: $top.$f.or($base.$f)),+ }
    };
}

impl Params {
    /// Applies `self` (flags) on top of the config file, if one is named.
    pub fn resolve(self) -> CliResult<Params> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: Params = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(self.over(file))
    }

    fn over(self, base: Params) -> Params {
        overlay!(
            base,
            self,
            config,
            input,
            output,
            report,
            plot,
            table,
            mode,
            kernel,
            m,
            alpha,
            tau,
            cn,
            min_size,
            permutations,
            alpha_sig,
            max_changes,
            d,
            restarts,
            reps,
            seed,
            scenario,
            p,
            n,
            balance,
            df,
            shift,
            outliers,
            t_unit_variance
        )
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::usage("--input is required"))
    }

    pub fn mode(&self, default: PipelineMode) -> CliResult<PipelineMode> {
        self.mode
            .as_deref()
            .map_or(Ok(default), |s| s.parse().map_err(CliError::usage))
    }

    pub fn kernel(&self) -> CliResult<KernelFamily> {
        self.kernel
            .as_deref()
            .map_or(Ok(KernelFamily::Gaussian), |s| {
                s.parse().map_err(CliError::usage)
            })
    }

    pub fn multiplier(&self) -> CliResult<f64> {
        let m = self.m.unwrap_or(DEFAULT_MULTIPLIER);
        if !(m > 0.0 && m.is_finite()) {
            return Err(CliError::usage(format!("--m must be positive, got {m}")));
        }
        Ok(m)
    }

    pub fn trr(&self) -> CliResult<TrrConfig> {
        let mut trr = TrrConfig {
            c_n: self.cn,
            ..TrrConfig::default()
        };
        if let Some(t) = self.tau {
            trr.tau = t;
        }
        trr.validate().map_err(CliError::usage)?;
        Ok(trr)
    }

    pub fn detector(&self) -> CliResult<DetectorConfig> {
        let d = DetectorConfig::default();
        let cfg = DetectorConfig {
            min_size: self.min_size.unwrap_or(d.min_size),
            n_permutations: self.permutations.unwrap_or(d.n_permutations),
            significance: self.alpha_sig.unwrap_or(d.significance),
            max_changes: self.max_changes,
            seed: self.seed.unwrap_or(d.seed),
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }

    pub fn pipeline(&self) -> CliResult<PipelineConfig> {
        Ok(PipelineConfig {
            kernel: self.kernel()?,
            multiplier: self.multiplier()?,
            alpha: self.alpha,
            trr: self.trr()?,
            detector: self.detector()?,
            ..PipelineConfig::default()
        })
    }

    /// The bench scenario; `positional` wins over `--scenario`.
    pub fn scenario(&self, positional: Option<&str>) -> CliResult<Scenario> {
        let name = positional
            .or(self.scenario.as_deref())
            .ok_or_else(|| CliError::usage("a scenario name is required"))?;
        let kind: ScenarioKind = name.parse().map_err(CliError::usage)?;
        let mut s = Scenario::new(kind, self.p.unwrap_or(100));
        if let Some(n) = self.n {
            s.n = n;
        }
        if let Some(b) = self.balance.as_deref() {
            s.balance = match b.to_ascii_lowercase().as_str() {
                "balanced" => Balance::Balanced,
                "imbalanced" => Balance::Imbalanced,
                other => return Err(CliError::usage(format!("unknown balance `{other}`"))),
            };
        }
        if let Some(df) = self.df {
            s.df = df;
        }
        if let Some(shift) = self.shift {
            s.shift = shift;
        }
        if let Some(f) = self.outliers {
            s.outlier_fraction = f;
        }
        if let Some(t) = self.t_unit_variance {
            s.t_unit_variance = t;
        }
        s.seed = self.seed.unwrap_or(0);
        s.validate().map_err(CliError::usage)?;
        Ok(s)
    }
}
