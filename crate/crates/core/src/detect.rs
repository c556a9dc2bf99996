//! Energy-statistic divisive segmentation and the end-to-end detection pipelines.

use faer::Mat;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::dimsel::{cumulative_variance_dimension, TrrConfig};
use crate::error::{CkpcaError, Result};
use crate::kernels::{gram, KernelFamily, KernelSpec, DEFAULT_MULTIPLIER};
use crate::operators::{changepoint_operators, make_segments};
use crate::reduction::{reduce, KernelReducer, ReduceConfig, ReducedData, ReductionMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub min_size: usize,
    pub n_permutations: usize,
    pub significance: f64,
    pub max_changes: Option<usize>,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_size: 30,
            n_permutations: 199,
            significance: 0.05,
            max_changes: None,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_size < 2 {
            return Err(CkpcaError::InvalidParameter(format!(
                "min_size must be >= 2, got {}",
                self.min_size
            )));
        }
        if self.n_permutations < 19 {
            return Err(CkpcaError::InvalidParameter(format!(
                "n_permutations must be >= 19, got {}",
                self.n_permutations
            )));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(CkpcaError::InvalidParameter(format!(
                "significance must lie in (0, 1), got {}",
                self.significance
            )));
        }
        Ok(())
    }
}

/// One permutation test performed during segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitTest {
    /// 0-based half-open segment that was tested.
    pub segment: (usize, usize),
    /// Candidate change point (1-based index of the last observation on the left).
    pub location: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub mode: String,
    pub q_hat: usize,
    pub significant: bool,
    pub c_n: Option<f64>,
    pub bandwidth: Option<f64>,
    pub leading_eigenvalues: Vec<f64>,
}

impl ReductionSummary {
    fn from_reduced(r: &ReducedData) -> Self {
        let mode = match r.mode {
            ReductionMode::CkpcaChangePoint => "ckpca",
            ReductionMode::CkpcaCluster => "ckpca-cluster",
            ReductionMode::Cpca => "cpca",
        };
        Self {
            mode: mode.into(),
            q_hat: r.q_hat,
            significant: r.significant,
            c_n: Some(r.c_n),
            bandwidth: r.bandwidth,
            leading_eigenvalues: r.eigenvalues.iter().take(10).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointResult {
    /// Ascending, 1-based: a change at `z` separates positions `<= z` from `> z`.
    pub change_points: Vec<usize>,
    pub s_hat: usize,
    pub tests: Vec<SplitTest>,
    pub reduction: Option<ReductionSummary>,
}

impl ChangePointResult {
    pub fn p_values(&self) -> Vec<f64> {
        self.tests
            .iter()
            .filter(|t| t.accepted)
            .map(|t| t.p_value)
            .collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Two-sample energy statistic with exponent 1:
/// `mk/(m+k) * [2/(mk) sum|a-b| - sum_{i<i'}|a-a'|/C(m,2) - sum_{j<j'}|b-b'|/C(k,2)]`.
pub fn energy_statistic(a: &DataMatrix, b: &DataMatrix) -> Result<f64> {
    let (m, k) = (a.nrows(), b.nrows());
    if m < 2 || k < 2 {
        return Err(CkpcaError::TooFewPoints {
            needed: 2,
            found: m.min(k),
        });
    }
    if a.ncols() != b.ncols() {
        return Err(CkpcaError::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    let within = |x: &DataMatrix| {
        let n = x.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += euclidean(x.row(i), x.row(j));
            }
        }
        s / (n * (n - 1) / 2) as f64
    };
    let mut between = 0.0;
    for ra in a.rows() {
        for rb in b.rows() {
            between += euclidean(ra, rb);
        }
    }
    let (mf, kf) = (m as f64, k as f64);
    let bracket = 2.0 * between / (mf * kf) - within(a) - within(b);
    Ok(mf * kf / (mf + kf) * bracket)
}

struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    fn new(z: &DataMatrix) -> Self {
        let n = z.nrows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = euclidean(z.row(i), z.row(j));
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { n, values }
    }

    /// Best split of the observations `idx` (in order): returns the left size
    /// and the statistic. Ties go to the smallest left size.
    fn best_split(&self, idx: &[usize], min_size: usize) -> Option<(usize, f64)> {
        let m = idx.len();
        if m < 2 * min_size {
            return None;
        }
        let mut left = vec![0.0; m];
        let mut right = vec![0.0; m];
        for (k, &gk) in idx.iter().enumerate() {
            let row = &self.values[gk * self.n..(gk + 1) * self.n];
            for (i, &gi) in idx.iter().enumerate().skip(k + 1) {
                let d = row[gi];
                right[k] += d;
                left[i] += d;
            }
        }
        let total: f64 = left.iter().sum();
        let (mut w_left, mut w_right) = (0.0, total);
        let mf = m as f64;
        let mut best: Option<(usize, f64)> = None;
        for tau in 1..m {
            let k = tau - 1;
            w_left += left[k];
            w_right -= right[k];
            if tau < min_size || m - tau < min_size {
                continue;
            }
            let (t, u) = (tau as f64, (m - tau) as f64);
            let between = total - w_left - w_right;
            let bracket = 2.0 * between / (t * u)
                - 2.0 * w_left / (t * (t - 1.0))
                - 2.0 * w_right / (u * (u - 1.0));
            let stat = t * u / mf * bracket;
            if best.is_none_or(|(_, s)| stat > s) {
                best = Some((tau, stat));
            }
        }
        best
    }
}

#[derive(Debug)]
struct Segment {
    start: usize,
    end: usize,
    candidate: Option<(usize, f64)>,
}

/// Hierarchical energy segmentation. Each round proposes the best split over
/// all current segments and tests it against permutations that shuffle rows
/// within every segment and re-maximize over all of them; the first
/// non-significant proposal ends the search.
pub fn divisive_segment(z: &DataMatrix, config: &DetectorConfig) -> Result<ChangePointResult> {
    config.validate()?;
    let n = z.nrows();
    if n < 2 * config.min_size {
        return Err(CkpcaError::TooShort {
            n,
            min_size: config.min_size,
        });
    }
    let dist = DistanceMatrix::new(z);
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let candidate = |start: usize, end: usize| {
        let idx: Vec<usize> = (start..end).collect();
        dist.best_split(&idx, config.min_size)
    };
    let mut segments = vec![Segment {
        start: 0,
        end: n,
        candidate: candidate(0, n),
    }];
    let mut change_points = Vec::new();
    let mut tests = Vec::new();
    loop {
        if config
            .max_changes
            .is_some_and(|cap| change_points.len() >= cap)
        {
            break;
        }
        // Segments stay sorted by start, so ties go to the earliest one.
        let pick = segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.candidate.map(|(_, stat)| (i, stat)))
            .fold(None, |best: Option<(usize, f64)>, (i, stat)| match best {
                Some((_, b)) if b >= stat => best,
                _ => Some((i, stat)),
            });
        let Some((slot, observed)) = pick else { break };
        let testable: Vec<(usize, usize)> = segments
            .iter()
            .filter(|s| s.end - s.start >= 2 * config.min_size)
            .map(|s| (s.start, s.end))
            .collect();

        let seeds: Vec<u64> = (0..config.n_permutations)
            .map(|_| master.next_u64())
            .collect();
        let exceed = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                testable
                    .iter()
                    .filter_map(|&(a, b)| {
                        let mut idx: Vec<usize> = (a..b).collect();
                        idx.shuffle(&mut rng);
                        dist.best_split(&idx, config.min_size).map(|(_, st)| st)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .filter(|&st| st >= observed)
            .count();
        let p_value = (1 + exceed) as f64 / (1 + config.n_permutations) as f64;
        let accepted = p_value <= config.significance;
        let seg = &segments[slot];
        let (tau, _) = seg.candidate.expect("picked segment has a candidate");
        let location = seg.start + tau;
        tests.push(SplitTest {
            segment: (seg.start, seg.end),
            location,
            statistic: observed,
            p_value,
            accepted,
        });
        if !accepted {
            break;
        }
        let (start, end) = (seg.start, seg.end);
        change_points.push(location);
        segments.splice(
            slot..=slot,
            [(start, location), (location, end)].map(|(a, b)| Segment {
                start: a,
                end: b,
                candidate: candidate(a, b),
            }),
        );
    }
    change_points.sort_unstable();
    Ok(ChangePointResult {
        s_hat: change_points.len(),
        change_points,
        tests,
        reduction: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Ckpca,
    Cpca,
    Raw,
    /// Uncorrected kernel PCA with a cumulative-variance dimension rule.
    Kpca,
}

impl std::str::FromStr for PipelineMode {
    type Err = CkpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ckpca" => Ok(Self::Ckpca),
            "cpca" => Ok(Self::Cpca),
            "raw" => Ok(Self::Raw),
            "kpca" | "kpca-baseline" => Ok(Self::Kpca),
            other => Err(CkpcaError::InvalidParameter(format!(
                "unknown mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kernel: KernelFamily,
    pub multiplier: f64,
    pub alpha: Option<usize>,
    pub trr: TrrConfig,
    pub detector: DetectorConfig,
    pub kpca_variance_ratio: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Gaussian,
            multiplier: DEFAULT_MULTIPLIER,
            alpha: None,
            trr: TrrConfig::default(),
            detector: DetectorConfig::default(),
            kpca_variance_ratio: 0.95,
        }
    }
}

/// Reduced (or raw) data handed to the detector, plus its summary.
#[derive(Debug, Clone)]
pub struct PipelineInput {
    pub data: DataMatrix,
    pub summary: Option<ReductionSummary>,
}

/// Runs the reduction step of a pipeline without detecting.
pub fn pipeline_input(
    x: &DataMatrix,
    mode: PipelineMode,
    config: &PipelineConfig,
) -> Result<PipelineInput> {
    match mode {
        PipelineMode::Raw => Ok(PipelineInput {
            data: x.clone(),
            summary: None,
        }),
        PipelineMode::Ckpca => {
            let kernel = KernelSpec::from_data(config.kernel, x, config.multiplier)?;
            let r = reduce(
                x,
                &ReduceConfig::KernelChangePoint {
                    kernel,
                    alpha: config.alpha,
                    trr: config.trr,
                },
            )?;
            Ok(PipelineInput {
                summary: Some(ReductionSummary::from_reduced(&r)),
                data: r.reduced,
            })
        }
        PipelineMode::Cpca => {
            let r = reduce(
                x,
                &ReduceConfig::Cpca {
                    alpha: config.alpha,
                    trr: config.trr,
                },
            )?;
            Ok(PipelineInput {
                summary: Some(ReductionSummary::from_reduced(&r)),
                data: r.reduced,
            })
        }
        PipelineMode::Kpca => {
            let kernel = KernelSpec::from_data(config.kernel, x, config.multiplier)?;
            let reducer = KernelReducer::new(gram(x, &kernel)?)?;
            let pair = changepoint_operators(&make_segments(x.nrows(), config.alpha)?)?;
            let spectrum = reducer.uncorrected_spectrum(&pair)?;
            let q =
                cumulative_variance_dimension(spectrum.eigenvalues(), config.kpca_variance_ratio);
            let (_, reduced): (Mat<f64>, DataMatrix) = reducer.project(&spectrum, q);
            Ok(PipelineInput {
                data: reduced,
                summary: Some(ReductionSummary {
                    mode: "kpca".into(),
                    q_hat: q,
                    significant: true,
                    c_n: None,
                    bandwidth: kernel
                        .family
                        .is_translation_invariant()
                        .then_some(kernel.bandwidth),
                    leading_eigenvalues: spectrum.eigenvalues().iter().take(10).copied().collect(),
                }),
            })
        }
    }
}

/// Reduce (per `mode`) and segment; returns the result and the detector input.
pub fn detect_pipeline_with_data(
    x: &DataMatrix,
    mode: PipelineMode,
    config: &PipelineConfig,
) -> Result<(ChangePointResult, DataMatrix)> {
    config.detector.validate()?;
    if x.nrows() < 2 * config.detector.min_size {
        return Err(CkpcaError::TooShort {
            n: x.nrows(),
            min_size: config.detector.min_size,
        });
    }
    let input = pipeline_input(x, mode, config)?;
    let mut result = divisive_segment(&input.data, &config.detector)?;
    result.reduction = input.summary;
    Ok((result, input.data))
}

pub fn detect_pipeline(
    x: &DataMatrix,
    mode: PipelineMode,
    config: &PipelineConfig,
) -> Result<ChangePointResult> {
    detect_pipeline_with_data(x, mode, config).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn column(values: &[f64]) -> DataMatrix {
        DataMatrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn energy_hand_value() {
        let a = column(&[0.0, 0.0]);
        let b = column(&[1.0, 1.0]);
        assert_eq!(energy_statistic(&a, &b).unwrap(), 2.0);
        assert_eq!(energy_statistic(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn energy_homogeneous_and_guarded() {
        let a = DataMatrix::from_rows(&[[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]]).unwrap();
        let b = DataMatrix::from_rows(&[[3.0, 1.0], [2.0, 4.0]]).unwrap();
        let q = energy_statistic(&a, &b).unwrap();
        let scale = |m: &DataMatrix| {
            DataMatrix::new(m.nrows(), 2, m.as_slice().iter().map(|v| v * 2.5).collect()).unwrap()
        };
        assert!((energy_statistic(&scale(&a), &scale(&b)).unwrap() - 2.5 * q).abs() < 1e-12);
        assert!(energy_statistic(&column(&[1.0]), &b).is_err());
    }

    #[test]
    fn split_scan_matches_direct_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let z = DataMatrix::new(20, 2, v).unwrap();
        let dist = DistanceMatrix::new(&z);
        let idx: Vec<usize> = (0..20).collect();
        let (tau, stat) = dist.best_split(&idx, 3).unwrap();
        let mut best = (0, f64::NEG_INFINITY);
        for t in 3..=17 {
            let left: Vec<usize> = (0..t).collect();
            let right: Vec<usize> = (t..20).collect();
            let s = energy_statistic(&z.select_rows(&left), &z.select_rows(&right)).unwrap();
            if s > best.1 {
                best = (t, s);
            }
        }
        assert_eq!(tau, best.0);
        assert!((stat - best.1).abs() < 1e-9);
    }

    #[test]
    fn too_short_is_rejected() {
        let z = column(&vec![0.0; 50]);
        assert!(matches!(
            divisive_segment(&z, &DetectorConfig::default()),
            Err(CkpcaError::TooShort {
                n: 50,
                min_size: 30
            })
        ));
        let bad = DetectorConfig {
            n_permutations: 5,
            ..DetectorConfig::default()
        };
        assert!(divisive_segment(&column(&vec![0.0; 100]), &bad).is_err());
    }

    #[test]
    fn single_strong_shift_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v: Vec<f64> = (0..200)
            .map(|i| rng.sample::<f64, _>(StandardNormal) + if i < 100 { 0.0 } else { 5.0 })
            .collect();
        let r = divisive_segment(&column(&v), &DetectorConfig::default()).unwrap();
        assert_eq!(r.s_hat, 1);
        assert!(r.change_points[0].abs_diff(100) <= 5);
        assert!(r.p_values()[0] <= 0.05);
    }

    #[test]
    fn max_changes_caps_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..240)
            .map(|i| rng.sample::<f64, _>(StandardNormal) + 6.0 * ((i / 60) % 2) as f64)
            .collect();
        let cfg = DetectorConfig {
            max_changes: Some(1),
            ..DetectorConfig::default()
        };
        assert_eq!(divisive_segment(&column(&v), &cfg).unwrap().s_hat, 1);
        let all = divisive_segment(&column(&v), &DetectorConfig::default()).unwrap();
        assert_eq!(all.s_hat, 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn energy_symmetry_and_row_permutation(seed in any::<u64>(), m in 2usize..8, k in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DataMatrix::new(m, 3, (0..3 * m).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let b = DataMatrix::new(k, 3, (0..3 * k).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let q = energy_statistic(&a, &b).unwrap();
            prop_assert!((q - energy_statistic(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + q.abs()));
            let mut pa: Vec<usize> = (0..m).collect();
            pa.shuffle(&mut rng);
            let mut pb: Vec<usize> = (0..k).collect();
            pb.shuffle(&mut rng);
            let qp = energy_statistic(&a.select_rows(&pa), &b.select_rows(&pb)).unwrap();
            prop_assert!((q - qp).abs() <= 1e-12 * (1.0 + q.abs()));
        }

        #[test]
        fn zero_column_and_spacing_invariants(seed in any::<u64>(), shift in 0.0f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 90;
            let v: Vec<f64> = (0..n).map(|i| rng.sample::<f64, _>(StandardNormal) + if i >= 45 { shift } else { 0.0 }).collect();
            let cfg = DetectorConfig { min_size: 10, n_permutations: 49, seed, ..DetectorConfig::default() };
            let r = divisive_segment(&column(&v), &cfg).unwrap();
            let padded: Vec<f64> = v.iter().flat_map(|&x| [x, 0.0]).collect();
            let r2 = divisive_segment(&DataMatrix::new(n, 2, padded).unwrap(), &cfg).unwrap();
            prop_assert_eq!(&r.change_points, &r2.change_points);
            let mut bounds = vec![0];
            bounds.extend(&r.change_points);
            bounds.push(n);
            prop_assert!(bounds.windows(2).all(|w| w[1] - w[0] >= cfg.min_size));
            prop_assert_eq!(r.s_hat, r.change_points.len());
        }
    }
}
