//! Seeded scenario generators, outlier injection and replication summaries.

use std::ops::Range;

use faer::{Mat, Side};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{CkpcaError, Result};
use crate::partition::Partition;

/// Change points of the unbalanced 800-observation layout.
pub const IMBALANCED_LAYOUT: [usize; 7] = [30, 170, 350, 440, 520, 630, 710];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Gaussian segments (equicorrelated) alternating with uniform cubes.
    Ex1Case1,
    /// Gaussian segments (1.5 I + AR) alternating with uniform cubes.
    Ex1Case2,
    /// AR(0.5) Gaussian segments alternating with multivariate t.
    Ex2,
    /// Gaussian segments whose mean alternates between 0 and `shift * e1`.
    MeanShift,
    /// Three concentric spherical shells, for clustering.
    ClusterShells,
}

impl std::str::FromStr for ScenarioKind {
    type Err = CkpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ex1case1" => Ok(Self::Ex1Case1),
            "ex1case2" => Ok(Self::Ex1Case2),
            "ex2" => Ok(Self::Ex2),
            "meanshift" => Ok(Self::MeanShift),
            "clustershells" | "shells" => Ok(Self::ClusterShells),
            _ => Err(CkpcaError::BadScenario(format!("unknown scenario `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Balanced,
    Imbalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub p: usize,
    pub n: usize,
    pub balance: Balance,
    /// Off-diagonal level (case 1) or AR coefficient (case 2).
    pub b: f64,
    /// Degrees of freedom of the t segments.
    pub df: f64,
    /// Rescale t segments to unit-variance margins.
    pub t_unit_variance: bool,
    pub shift: f64,
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, p: usize) -> Self {
        Self {
            kind,
            p,
            n: if kind == ScenarioKind::ClusterShells {
                600
            } else {
                800
            },
            balance: Balance::Balanced,
            b: 0.5,
            df: 4.0,
            t_unit_variance: true,
            shift: 2.0,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CkpcaError::BadScenario(m));
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!(
                "outlier fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            ));
        }
        match self.kind {
            ScenarioKind::ClusterShells => {
                let unit = if self.balance == Balance::Balanced {
                    3
                } else {
                    6
                };
                if self.n == 0 || !self.n.is_multiple_of(unit) {
                    return bad(format!(
                        "shell scenario needs n divisible by {unit}, got {}",
                        self.n
                    ));
                }
            }
            _ => {
                if self.balance == Balance::Balanced && (self.n == 0 || !self.n.is_multiple_of(8)) {
                    return bad(format!(
                        "balanced layout needs n divisible by 8, got {}",
                        self.n
                    ));
                }
                if self.n < 64 {
                    return bad(format!(
                        "change-point scenarios need n >= 64, got {}",
                        self.n
                    ));
                }
            }
        }
        if matches!(self.kind, ScenarioKind::Ex1Case1 | ScenarioKind::Ex1Case2)
            && !(self.b.abs() < 1.0)
        {
            return bad(format!("b must lie in (-1, 1), got {}", self.b));
        }
        if self.kind == ScenarioKind::Ex2 {
            if !(self.df > 0.0 && self.df.is_finite()) {
                return Err(CkpcaError::BadDf(self.df));
            }
            if self.t_unit_variance && self.df <= 2.0 {
                return bad(format!("unit-variance t needs df > 2, got {}", self.df));
            }
        }
        Ok(())
    }

    /// True change points (1-based) for the change-point kinds.
    pub fn change_points(&self) -> Vec<usize> {
        match self.balance {
            Balance::Balanced => (1..8).map(|i| i * self.n / 8).collect(),
            Balance::Imbalanced => IMBALANCED_LAYOUT
                .iter()
                .map(|&c| (c * self.n + 400) / 800)
                .collect(),
        }
    }

    fn shell_sizes(&self) -> [usize; 3] {
        match self.balance {
            Balance::Balanced => [self.n / 3; 3],
            Balance::Imbalanced => [self.n / 2, self.n / 3, self.n / 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    ChangePoints(Vec<usize>),
    Labels(Partition),
}

impl Truth {
    pub fn as_partition(&self, n: usize) -> Result<Partition> {
        match self {
            Truth::ChangePoints(c) => Partition::from_change_points(c, n),
            Truth::Labels(p) => Ok(p.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub x: DataMatrix,
    pub truth: Truth,
}

/// Reusable `N(mean, cov)` sampler holding a square-root factor of `cov`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: Mat<f64>,
}

impl GaussianSampler {
    /// Cholesky when `cov` is positive definite, symmetric square root otherwise.
    pub fn new(mean: Vec<f64>, cov: &Mat<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(CkpcaError::DimensionMismatch {
                expected: p,
                found: cov.nrows(),
            });
        }
        let factor = match cov.llt(Side::Lower) {
            Ok(llt) => llt.L().to_owned(),
            Err(_) => {
                let evd = cov
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|_| CkpcaError::EigenFailure)?;
                let vals = evd.S().column_vector();
                let lmax = (0..p).map(|i| vals[i].abs()).fold(0.0, f64::max);
                let lmin = (0..p).map(|i| vals[i]).fold(f64::INFINITY, f64::min);
                if lmin < -1e-10 * lmax.max(f64::MIN_POSITIVE) {
                    return Err(CkpcaError::NotPsd(lmin));
                }
                let u = evd.U();
                Mat::from_fn(p, p, |i, j| u[(i, j)] * vals[j].max(0.0).sqrt())
            }
        };
        Ok(Self { mean, factor })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// One draw written into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let p = self.p();
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.mean[i];
            for (k, zk) in z.iter().enumerate() {
                v += self.factor[(i, k)] * zk;
            }
            *o = v;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DataMatrix {
        let mut out = DataMatrix::zeros(count, self.p());
        for i in 0..count {
            self.draw_into(rng, out.row_mut(i));
        }
        out
    }
}

pub fn sample_mvnormal<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &Mat<f64>,
    count: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    Ok(GaussianSampler::new(mean.to_vec(), cov)?.sample(count, rng))
}

/// Rows `z / sqrt(w / df)` with `z ~ N(0, scale)` and `w ~ chi^2_df`.
pub fn sample_mvt<R: Rng + ?Sized>(
    df: f64,
    scale: &Mat<f64>,
    count: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    let sampler = GaussianSampler::new(vec![0.0; scale.nrows()], scale)?;
    sample_t_with(&sampler, df, 1.0, count, rng)
}

fn sample_t_with<R: Rng + ?Sized>(
    sampler: &GaussianSampler,
    df: f64,
    factor: f64,
    count: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(CkpcaError::BadDf(df));
    }
    let chi = ChiSquared::new(df).map_err(|_| CkpcaError::BadDf(df))?;
    let mut out = DataMatrix::zeros(count, sampler.p());
    for i in 0..count {
        let row = out.row_mut(i);
        sampler.draw_into(rng, row);
        let w: f64 = chi.sample(rng);
        let s = factor / (w / df).sqrt();
        row.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Uniform draw on the unit sphere in `p` dimensions.
pub fn unit_sphere<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn equicorrelated(p: usize, b: f64) -> Mat<f64> {
    Mat::from_fn(p, p, |i, j| if i == j { 2.5 } else { b })
}

fn ar(p: usize, rho: f64, diag_extra: f64) -> Mat<f64> {
    Mat::from_fn(p, p, |i, j| {
        let base = rho.powi(i.abs_diff(j) as i32);
        if i == j {
            base + diag_extra
        } else {
            base
        }
    })
}

fn segments_of(cps: &[usize], n: usize) -> Vec<Range<usize>> {
    let mut bounds = vec![0];
    bounds.extend_from_slice(cps);
    bounds.push(n);
    bounds.windows(2).map(|w| w[0]..w[1]).collect()
}

pub fn generate(scenario: &Scenario) -> Result<Generated> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let (n, p) = (scenario.n, scenario.p);
    let mut x = DataMatrix::zeros(n, p);
    let (truth, groups) = match scenario.kind {
        ScenarioKind::ClusterShells => {
            let mut labels = Vec::with_capacity(n);
            let mut row = 0;
            for (k, &size) in scenario.shell_sizes().iter().enumerate() {
                let lo = 2.0 * k as f64;
                for _ in 0..size {
                    let sigma = rng.random_range(lo..lo + 1.0);
                    let w = unit_sphere(p, &mut rng);
                    for (o, wi) in x.row_mut(row).iter_mut().zip(w) {
                        *o = sigma * wi;
                    }
                    labels.push(k);
                    row += 1;
                }
            }
            let part = Partition::from_labels(&labels);
            let groups = part.groups();
            (Truth::Labels(part), groups)
        }
        kind => {
            let cps = scenario.change_points();
            let segs = segments_of(&cps, n);
            let gauss = match kind {
                ScenarioKind::Ex1Case1 => {
                    GaussianSampler::new(vec![0.0; p], &equicorrelated(p, scenario.b))?
                }
                ScenarioKind::Ex1Case2 => {
                    GaussianSampler::new(vec![0.0; p], &ar(p, scenario.b, 1.5))?
                }
                ScenarioKind::Ex2 => GaussianSampler::new(vec![0.0; p], &ar(p, 0.5, 0.0))?,
                _ => GaussianSampler::new(vec![0.0; p], &Mat::identity(p, p))?,
            };
            let t_factor = if scenario.t_unit_variance {
                ((scenario.df - 2.0) / scenario.df).sqrt()
            } else {
                1.0
            };
            for (s, seg) in segs.iter().enumerate() {
                let odd = s % 2 == 1;
                match kind {
                    ScenarioKind::Ex1Case1 | ScenarioKind::Ex1Case2 if odd => {
                        for i in seg.clone() {
                            x.row_mut(i)
                                .iter_mut()
                                .for_each(|v| *v = rng.random_range(-3.0..3.0));
                        }
                    }
                    ScenarioKind::Ex2 if odd => {
                        let t = sample_t_with(&gauss, scenario.df, t_factor, seg.len(), &mut rng)?;
                        for (k, i) in seg.clone().enumerate() {
                            x.row_mut(i).copy_from_slice(t.row(k));
                        }
                    }
                    _ => {
                        for i in seg.clone() {
                            gauss.draw_into(&mut rng, x.row_mut(i));
                            if kind == ScenarioKind::MeanShift && odd {
                                x.row_mut(i)[0] += scenario.shift;
                            }
                        }
                    }
                }
            }
            (
                Truth::ChangePoints(cps),
                segs.into_iter().map(|r| r.collect()).collect(),
            )
        }
    };
    if scenario.outlier_fraction > 0.0 {
        inject_outliers(
            &mut x,
            &groups,
            scenario.outlier_fraction,
            5.0,
            0.05,
            &mut rng,
        )?;
    }
    Ok(Generated { x, truth })
}

/// Shifts `round(fraction * |g|)` random rows of each group by a sparse vector
/// with `round(sparsity * p)` (at least one) coordinates equal to `magnitude`.
pub fn inject_outliers<R: Rng + ?Sized>(
    x: &mut DataMatrix,
    groups: &[Vec<usize>],
    fraction: f64,
    magnitude: f64,
    sparsity: f64,
    rng: &mut R,
) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) || !(0.0..=1.0).contains(&sparsity) {
        return Err(CkpcaError::InvalidParameter(format!(
            "outlier fraction {fraction} / sparsity {sparsity} out of range"
        )));
    }
    if fraction == 0.0 {
        return Ok(());
    }
    let p = x.ncols();
    let support = ((sparsity * p as f64).round() as usize).clamp(1, p);
    for group in groups {
        let count = (fraction * group.len() as f64).round() as usize;
        if count == 0 {
            continue;
        }
        let coords = sample(rng, p, support).into_vec();
        for k in sample(rng, group.len(), count) {
            let row = x.row_mut(group[k]);
            for &j in &coords {
                row[j] += magnitude;
            }
        }
    }
    Ok(())
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub seed: u64,
    pub s_hat: usize,
    pub ri: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub replications: usize,
    pub s_true: usize,
    pub mean_s_hat: f64,
    pub rmse: f64,
    pub mean_ri: f64,
    pub sd_ri: f64,
    pub records: Vec<ReplicationRecord>,
}

pub fn aggregate(records: &[ReplicationRecord], s_true: usize) -> Result<RunReport> {
    if records.is_empty() {
        return Err(CkpcaError::Empty);
    }
    let r = records.len() as f64;
    let mean_s_hat = records.iter().map(|x| x.s_hat as f64).sum::<f64>() / r;
    let mse = records
        .iter()
        .map(|x| (x.s_hat as f64 - s_true as f64).powi(2))
        .sum::<f64>()
        / r;
    let mean_ri = records.iter().map(|x| x.ri).sum::<f64>() / r;
    let sd_ri = if records.len() > 1 {
        (records
            .iter()
            .map(|x| (x.ri - mean_ri).powi(2))
            .sum::<f64>()
            / (r - 1.0))
            .sqrt()
    } else {
        0.0
    };
    Ok(RunReport {
        replications: records.len(),
        s_true,
        mean_s_hat,
        rmse: mse.sqrt(),
        mean_ri,
        sd_ri,
        records: records.to_vec(),
    })
}

/// Seed of replication `rep` under base seed `base` (splitmix64 finalizer).
pub fn replication_seed(base: u64, rep: usize) -> u64 {
    let mut z = base.wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `run(seed)` for each replication, in parallel, returning records in order.
pub fn replicate<F>(reps: usize, base_seed: u64, run: F) -> Result<Vec<ReplicationRecord>>
where
    F: Fn(u64) -> Result<ReplicationRecord> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| run(replication_seed(base_seed, r)))
        .collect()
}
