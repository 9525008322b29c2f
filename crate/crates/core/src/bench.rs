//! Synthetic experiment pipeline and tuning helpers.
//!
//! Covers the bivariate Gaussian benchmark with its known Bayes line
//! `x2 = 2.5 x1`, elliptical contamination, additive white Gaussian noise at
//! a given SNR, stratified k-fold cross-validation and the repeated
//! benchmark that reports the distance of each method's boundary estimates
//! to the Bayes line.
//!
//! Seeds: repetition `r` of a benchmark with seed `s` uses `s + r` for data
//! generation and `substream(s + r, tag)` for contamination and tuning, so a
//! report is a pure function of its configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{sample_std, DataError, Dataset};
use crate::kernels::KernelSpec;
use crate::noise::{NoiseFamily, NoiseSpec};
use crate::rng::SeededRng;
use crate::svm::{train_csvm, train_eelsvm, train_spsvm, SvmError, TrainedModel, Variant};

pub const BAYES_SLOPE: f64 = 2.5;
pub const BAYES_INTERCEPT: f64 = 0.0;
/// Seed used when a caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("expected {expected} features, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("boundary is vertical (|w2| = {0:e})")]
    VerticalBoundary(f64),
    #[error("boundary extraction needs a linear kernel")]
    NotLinear,
    #[error("need at least 2 boundary estimates, got {0}")]
    TooFewEstimates(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("tuning grid for {0} is empty")]
    EmptyGrid(Variant),
    #[error("every grid combination failed for {0}")]
    AllCombinationsFailed(Variant),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Independent seed for a named sub-task of a repetition.
pub fn substream(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const TAG_CONTAMINATION: u64 = 1;
const TAG_TUNING: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    pub mu: [f64; 2],
    pub sigma_diag: [f64; 2],
}

impl SyntheticSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            mu: [0.5, -3.0],
            sigma_diag: [0.2, 3.0],
        }
    }
}

/// Labels are fair coin flips; a row with label `y` is `y * mu` plus
/// independent normals with variances `sigma_diag`, drawn in column order.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset, BenchError> {
    if spec.n < 2 {
        return Err(BenchError::Parameter(format!(
            "sample size must be at least 2, got {}",
            spec.n
        )));
    }
    if !spec.sigma_diag.iter().all(|&s| s > 0.0 && s.is_finite()) {
        return Err(BenchError::Parameter("variances must be positive".into()));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut features = Vec::with_capacity(2 * spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let y = if rng.coin() { 1.0 } else { -1.0 };
        for k in 0..2 {
            features.push(y * spec.mu[k] + spec.sigma_diag[k].sqrt() * rng.normal());
        }
        labels.push(y);
    }
    Ok(Dataset::new(spec.n, 2, features, labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContaminationFamily {
    Normal,
    T5,
    T1,
}

impl ContaminationFamily {
    pub fn dof(self) -> Option<u32> {
        match self {
            ContaminationFamily::Normal => None,
            ContaminationFamily::T5 => Some(5),
            ContaminationFamily::T1 => Some(1),
        }
    }
}

impl std::fmt::Display for ContaminationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContaminationFamily::Normal => "normal",
            ContaminationFamily::T5 => "t5",
            ContaminationFamily::T1 => "t1",
        })
    }
}

impl std::str::FromStr for ContaminationFamily {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(ContaminationFamily::Normal),
            "t5" => Ok(ContaminationFamily::T5),
            "t1" | "cauchy" => Ok(ContaminationFamily::T1),
            _ => Err(BenchError::Parameter(format!(
                "unknown contamination family `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationSpec {
    pub ratio: f64,
    pub family: ContaminationFamily,
    pub sigma_c: [[f64; 2]; 2],
    pub seed: u64,
}

impl ContaminationSpec {
    pub fn new(ratio: f64, family: ContaminationFamily, seed: u64) -> Self {
        Self {
            ratio,
            family,
            sigma_c: [[1.0, -0.8], [-0.8, 1.0]],
            seed,
        }
    }

    /// Lower Cholesky factor of the scatter matrix.
    fn factor(&self) -> Result<[[f64; 2]; 2], BenchError> {
        let s = self.sigma_c;
        if s[0][1] != s[1][0] {
            return Err(BenchError::Parameter(
                "scatter matrix must be symmetric".into(),
            ));
        }
        let l00 = s[0][0].sqrt();
        let l10 = s[1][0] / l00;
        let rest = s[1][1] - l10 * l10;
        if !(s[0][0] > 0.0 && rest > 0.0) {
            return Err(BenchError::Parameter(
                "scatter matrix must be positive definite".into(),
            ));
        }
        Ok([[l00, 0.0], [l10, rest.sqrt()]])
    }
}

/// Number of rows replaced for a ratio `r`: `ceil(r n)`, guarded against
/// rounding up products such as `0.07 * 100`.
pub fn contaminated_count(ratio: f64, n: usize) -> usize {
    let x = ratio * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k as usize).min(n)
}

/// Replaces `ceil(r N)` uniformly chosen rows by elliptical draws centred at
/// the origin and gives each a fresh fair-coin label. Untouched rows are
/// copied bit for bit.
pub fn contaminate_synthetic(
    ds: &Dataset,
    spec: &ContaminationSpec,
) -> Result<Dataset, BenchError> {
    if ds.dim() != 2 {
        return Err(BenchError::Dimension {
            expected: 2,
            found: ds.dim(),
        });
    }
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(BenchError::Parameter(format!(
            "contamination ratio {} outside [0, 1]",
            spec.ratio
        )));
    }
    let l = spec.factor()?;
    let n = ds.len();
    let mut rng = SeededRng::new(spec.seed);
    let chosen = rng.sample_without_replacement(n, contaminated_count(spec.ratio, n));
    let mut features = ds.features().to_vec();
    let mut labels = ds.labels().to_vec();
    for &i in &chosen {
        let z0 = rng.normal();
        let z1 = rng.normal();
        let scale = match spec.family.dof() {
            Some(dof) => (dof as f64 / rng.chi_square(dof)).sqrt(),
            None => 1.0,
        };
        features[2 * i] = scale * l[0][0] * z0;
        features[2 * i + 1] = scale * (l[1][0] * z0 + l[1][1] * z1);
        labels[i] = if rng.coin() { 1.0 } else { -1.0 };
    }
    rebuild(ds, features, labels)
}

fn rebuild(
    template: &Dataset,
    features: Vec<f64>,
    labels: Vec<f64>,
) -> Result<Dataset, BenchError> {
    let out = Dataset::new(template.len(), template.dim(), features, labels)?;
    Ok(match template.feature_names() {
        Some(names) => out.with_feature_names(names.to_vec())?,
        None => out,
    })
}

/// Adds white Gaussian noise column by column. Column power is the mean of
/// its squared entries; the noise variance is `power / 10^(snr_db / 10)`.
/// Noise is drawn row-major.
pub fn awgn(ds: &Dataset, snr_db: f64, seed: u64) -> Result<Dataset, BenchError> {
    if !snr_db.is_finite() {
        return Err(BenchError::Parameter(format!(
            "SNR must be finite, got {snr_db}"
        )));
    }
    let d = ds.dim();
    let n = ds.len();
    let ratio = 10f64.powf(snr_db / 10.0);
    let sd: Vec<f64> = (0..d)
        .map(|k| {
            let power = ds.column(k).iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
            (power / ratio).sqrt()
        })
        .collect();
    let mut rng = SeededRng::new(seed);
    let mut features = ds.features().to_vec();
    for i in 0..n {
        for k in 0..d {
            features[i * d + k] += sd[k] * rng.normal();
        }
    }
    rebuild(ds, features, ds.labels().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub m: f64,
    pub q: f64,
}

/// Line `x2 = m x1 + q` of a linear two-feature model.
pub fn extract_linear_boundary(model: &TrainedModel) -> Result<BoundaryEstimate, BenchError> {
    if model.dim() != 2 {
        return Err(BenchError::Dimension {
            expected: 2,
            found: model.dim(),
        });
    }
    let w = model.linear_weights().ok_or(BenchError::NotLinear)?;
    boundary_from_weights(&w, model.bias)
}

pub fn boundary_from_weights(w: &[f64], b: f64) -> Result<BoundaryEstimate, BenchError> {
    if w.len() != 2 {
        return Err(BenchError::Dimension {
            expected: 2,
            found: w.len(),
        });
    }
    if !(w[1].abs() >= 1e-12) {
        return Err(BenchError::VerticalBoundary(w[1].abs()));
    }
    Ok(BoundaryEstimate {
        m: -w[0] / w[1],
        q: -b / w[1],
    })
}

/// `|mean(m) - m0| sd(m) + |mean(q) - q0| sd(q)` with sample standard
/// deviations. Identical estimates give zero whatever their bias.
pub fn bayes_distance(estimates: &[BoundaryEstimate], m0: f64, q0: f64) -> Result<f64, BenchError> {
    if estimates.len() < 2 {
        return Err(BenchError::TooFewEstimates(estimates.len()));
    }
    let ms: Vec<f64> = estimates.iter().map(|e| e.m).collect();
    let qs: Vec<f64> = estimates.iter().map(|e| e.q).collect();
    Ok((mean(&ms) - m0).abs() * sample_std(&ms) + (mean(&qs) - q0).abs() * sample_std(&qs))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Fraction of test rows whose predicted label matches.
pub fn accuracy(model: &TrainedModel, test: &Dataset) -> Result<f64, BenchError> {
    if test.is_empty() {
        return Err(BenchError::EmptyTestSet);
    }
    let (pred, _) = model.predict_dataset(test)?;
    let hits = pred
        .iter()
        .zip(test.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Candidate values for one method. An empty `gamma` list means the linear
/// kernel; an empty `level` list is only valid for C-SVM. For EEL-SVM each
/// `penalty` value is a per-sample factor and the fitted `D` is that factor
/// times the number of training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningGrid {
    pub penalty: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub level: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub penalty: f64,
    pub gamma: Option<f64>,
    pub level: Option<f64>,
}

impl Candidate {
    pub fn kernel(&self) -> Result<KernelSpec, BenchError> {
        match self.gamma {
            None => Ok(KernelSpec::Linear),
            Some(g) => KernelSpec::rbf(g).map_err(|e| BenchError::Svm(e.into())),
        }
    }
}

impl std::fmt::Display for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "penalty={}", self.penalty)?;
        if let Some(g) = self.gamma {
            write!(f, " gamma={g}")?;
        }
        if let Some(a) = self.level {
            write!(f, " alpha={a}")?;
        }
        Ok(())
    }
}

fn steps(from: f64, to: f64, step: f64) -> Vec<f64> {
    let count = ((to - from) / step + 1e-9).floor() as i64;
    (0..=count)
        .map(|i| ((from + i as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

fn powers_of_two(exps: &[i32]) -> Vec<f64> {
    exps.iter().map(|&e| 2f64.powi(e)).collect()
}

impl TuningGrid {
    /// Synthetic-study grid: linear kernel, `C = 100` (EEL factor 100). The
    /// EEL levels run `0, 0.01, ...` up to `max(0.02, r)`.
    pub fn synthetic(variant: Variant, ratio: f64) -> Self {
        let level = match variant {
            Variant::CSvm => Vec::new(),
            Variant::SpSvm => steps(0.50, 0.60, 0.01),
            Variant::EelSvm => steps(0.0, ratio.max(0.02), 0.01),
        };
        Self {
            penalty: vec![100.0],
            gamma: Vec::new(),
            level,
        }
    }

    /// RBF grids used on real data.
    pub fn real_data(variant: Variant) -> Self {
        let wide: Vec<i32> = (-9..=9).collect();
        match variant {
            Variant::CSvm => Self {
                penalty: powers_of_two(&wide),
                gamma: powers_of_two(&wide),
                level: Vec::new(),
            },
            Variant::SpSvm | Variant::EelSvm => Self {
                penalty: powers_of_two(&[-5, -3, -1, 0, 1, 3, 5]),
                gamma: powers_of_two(&[-7, -5, -3, -1, 0, 1]),
                level: if variant == Variant::SpSvm {
                    let mut v = steps(0.50, 0.56, 0.01);
                    v.extend([0.58, 0.60]);
                    v
                } else {
                    steps(0.0, 0.30, 0.05)
                },
            },
        }
    }

    /// All combinations, penalty outermost and level innermost. This order
    /// breaks ties in cross-validation.
    pub fn candidates(&self, variant: Variant) -> Result<Vec<Candidate>, BenchError> {
        let needs_level = variant != Variant::CSvm;
        if self.penalty.is_empty() || (needs_level && self.level.is_empty()) {
            return Err(BenchError::EmptyGrid(variant));
        }
        let gammas: Vec<Option<f64>> = if self.gamma.is_empty() {
            vec![None]
        } else {
            self.gamma.iter().map(|&g| Some(g)).collect()
        };
        let levels: Vec<Option<f64>> = if needs_level {
            self.level.iter().map(|&a| Some(a)).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::new();
        for &penalty in &self.penalty {
            for &gamma in &gammas {
                for &level in &levels {
                    out.push(Candidate {
                        penalty,
                        gamma,
                        level,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// A method together with its SP-SVM noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub variant: Variant,
    pub grid: TuningGrid,
    pub noise_family: NoiseFamily,
    pub noise_dof: f64,
    /// `None` picks the feature with the largest standard deviation.
    pub feature_index: Option<usize>,
}

impl MethodSpec {
    pub fn new(variant: Variant, grid: TuningGrid) -> Self {
        Self {
            variant,
            grid,
            noise_family: NoiseFamily::Gaussian,
            noise_dof: 0.0,
            feature_index: None,
        }
    }

    pub fn fit(&self, ds: &Dataset, cand: &Candidate) -> Result<TrainedModel, BenchError> {
        let kernel = cand.kernel()?;
        let level = || cand.level.ok_or(BenchError::EmptyGrid(self.variant));
        Ok(match self.variant {
            Variant::CSvm => train_csvm(ds, cand.penalty, kernel)?,
            Variant::SpSvm => {
                let noise = NoiseSpec {
                    family: self.noise_family,
                    dof: self.noise_dof,
                    alpha_level: level()?,
                };
                train_spsvm(ds, cand.penalty, kernel, &noise, self.feature_index)?
            }
            Variant::EelSvm => train_eelsvm(ds, cand.penalty * ds.len() as f64, kernel, level()?)?,
        })
    }
}

/// Fold index of every row. Each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped, so fold class counts differ
/// by at most one. If a class has fewer rows than folds the rows are dealt
/// without stratification and a warning is logged.
pub fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>, BenchError> {
    let n = labels.len();
    if folds < 2 || n < folds {
        return Err(BenchError::Parameter(format!("{folds} folds for {n} rows")));
    }
    let mut rng = SeededRng::new(seed);
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] <= 0.0).collect();
    let groups = if pos.len().min(neg.len()) >= folds {
        vec![pos, neg]
    } else {
        log::warn!("a class has fewer than {folds} rows; using plain folds");
        vec![(0..n).collect()]
    };
    let mut assign = vec![0; n];
    let mut next = 0;
    for mut g in groups {
        rng.shuffle(&mut g);
        for i in g {
            assign[i] = next % folds;
            next += 1;
        }
    }
    Ok(assign)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub best: Candidate,
    pub best_accuracy: f64,
    /// Mean accuracy per candidate, `None` when a fit failed in some fold.
    pub scores: Vec<(Candidate, Option<f64>)>,
}

/// Exhaustive grid search by k-fold cross-validation. The first candidate
/// in grid order wins ties.
pub fn cross_validate(
    ds: &Dataset,
    method: &MethodSpec,
    folds: usize,
    seed: u64,
) -> Result<CvResult, BenchError> {
    let cands = method.grid.candidates(method.variant)?;
    let assign = stratified_folds(ds.labels(), folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..ds.len()).filter(|&i| assign[i] != f).collect();
            let test: Vec<usize> = (0..ds.len()).filter(|&i| assign[i] == f).collect();
            (ds.subset(&train), ds.subset(&test))
        })
        .collect();
    let scores: Vec<(Candidate, Option<f64>)> = cands
        .par_iter()
        .map(|cand| {
            let mut total = 0.0;
            for (train, test) in &splits {
                let (pos, neg) = train.class_counts();
                if pos == 0 || neg == 0 {
                    // a one-class training fold predicts its only label
                    let only = if pos > 0 { 1.0 } else { -1.0 };
                    let hits = test.labels().iter().filter(|&&y| y == only).count();
                    total += hits as f64 / test.len() as f64;
                    continue;
                }
                match method.fit(train, cand).and_then(|m| accuracy(&m, test)) {
                    Ok(a) => total += a,
                    Err(e) => {
                        log::warn!("{} {cand}: fold fit failed: {e}", method.variant);
                        return (*cand, None);
                    }
                }
            }
            (*cand, Some(total / folds as f64))
        })
        .collect();
    let mut best: Option<(Candidate, f64)> = None;
    for (cand, score) in &scores {
        if let Some(s) = *score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*cand, s));
            }
        }
    }
    let (best, best_accuracy) = best.ok_or(BenchError::AllCombinationsFailed(method.variant))?;
    Ok(CvResult {
        best,
        best_accuracy,
        scores,
    })
}

/// Configuration of a synthetic benchmark, read from TOML.
///
/// ```toml
/// seed = 7
/// reps = 30
/// n = 100
/// ratio = 0.10
/// family = "t1"          # normal | t5 | t1
/// folds = 10
/// methods = ["c-svm", "sp-svm", "eel-svm"]
/// sp_feature = 1         # omit for the largest-deviation feature
///
/// [grids.sp-svm]         # optional override of a default grid
/// penalty = [100.0]
/// level = [0.5, 0.55, 0.6]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub reps: usize,
    pub n: usize,
    #[serde(default)]
    pub ratio: f64,
    #[serde(default = "default_family")]
    pub family: ContaminationFamily,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub methods: Vec<Variant>,
    #[serde(default = "default_sp_feature")]
    pub sp_feature: Option<usize>,
    #[serde(default)]
    pub sp_noise: Option<NoiseFamily>,
    #[serde(default)]
    pub sp_dof: Option<f64>,
    #[serde(default)]
    pub grids: BTreeMap<Variant, TuningGrid>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_family() -> ContaminationFamily {
    ContaminationFamily::Normal
}

fn default_folds() -> usize {
    10
}

fn default_sp_feature() -> Option<usize> {
    Some(1)
}

impl ExperimentConfig {
    pub fn new(
        n: usize,
        reps: usize,
        ratio: f64,
        family: ContaminationFamily,
        methods: Vec<Variant>,
    ) -> Self {
        Self {
            seed: DEFAULT_SEED,
            reps,
            n,
            ratio,
            family,
            folds: 10,
            methods,
            sp_feature: default_sp_feature(),
            sp_noise: None,
            sp_dof: None,
            grids: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.n < self.folds.max(2) {
            return bad(format!(
                "n = {} is smaller than the fold count {}",
                self.n, self.folds
            ));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if !(0.0..=1.0).contains(&self.ratio) {
            return bad(format!("ratio {} outside [0, 1]", self.ratio));
        }
        if self.methods.is_empty() {
            return bad("no methods listed".into());
        }
        if let Some(k) = self.sp_feature {
            if k >= 2 {
                return bad(format!("sp_feature {k} out of range for two features"));
            }
        }
        for v in &self.methods {
            self.method(*v).grid.candidates(*v)?;
        }
        Ok(())
    }

    pub fn method(&self, variant: Variant) -> MethodSpec {
        let grid = self
            .grids
            .get(&variant)
            .cloned()
            .unwrap_or_else(|| TuningGrid::synthetic(variant, self.ratio));
        let mut spec = MethodSpec::new(variant, grid);
        spec.feature_index = self.sp_feature;
        if let Some(f) = self.sp_noise {
            spec.noise_family = f;
        }
        spec.noise_dof = self.sp_dof.unwrap_or(0.0);
        spec
    }
}

/// Per-method summary over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Variant,
    pub n: usize,
    pub ratio: f64,
    pub family: ContaminationFamily,
    /// `None` when fewer than two repetitions succeeded.
    pub distance: Option<f64>,
    pub m_mean: f64,
    pub m_std: f64,
    pub q_mean: f64,
    pub q_std: f64,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub mean_fit_seconds: f64,
    pub estimates: Vec<BoundaryEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

struct RepOutcome {
    estimate: Result<BoundaryEstimate, String>,
    seconds: f64,
}

fn run_repetition(cfg: &ExperimentConfig, methods: &[MethodSpec], rep: usize) -> Vec<RepOutcome> {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let data = gen_synthetic(&SyntheticSpec::new(cfg.n, seed)).and_then(|clean| {
        let spec =
            ContaminationSpec::new(cfg.ratio, cfg.family, substream(seed, TAG_CONTAMINATION));
        contaminate_synthetic(&clean, &spec)
    });
    methods
        .iter()
        .map(|method| {
            let ds = match &data {
                Ok(ds) => ds,
                Err(e) => {
                    return RepOutcome {
                        estimate: Err(e.to_string()),
                        seconds: 0.0,
                    }
                }
            };
            let mut seconds = 0.0;
            let estimate = (|| {
                let cands = method.grid.candidates(method.variant)?;
                let best = if cands.len() == 1 {
                    cands[0]
                } else {
                    cross_validate(ds, method, cfg.folds, substream(seed, TAG_TUNING))?.best
                };
                let start = Instant::now();
                let model = method.fit(ds, &best)?;
                seconds = start.elapsed().as_secs_f64();
                extract_linear_boundary(&model)
            })();
            if let Err(e) = &estimate {
                log::warn!("repetition {rep}, {}: {e}", method.variant);
            }
            RepOutcome {
                estimate: estimate.map_err(|e| e.to_string()),
                seconds,
            }
        })
        .collect()
}

/// Runs every repetition (in parallel) and summarizes each method.
/// Failed repetitions are counted in `reps_failed` and left out of the
/// distance.
pub fn run_synthetic_benchmark(cfg: &ExperimentConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let methods: Vec<MethodSpec> = cfg.methods.iter().map(|&v| cfg.method(v)).collect();
    let outcomes: Vec<Vec<RepOutcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, &methods, rep))
        .collect();
    let rows = methods
        .iter()
        .enumerate()
        .map(|(j, method)| {
            let mut estimates = Vec::new();
            let mut seconds = Vec::new();
            for rep in &outcomes {
                if let Ok(e) = &rep[j].estimate {
                    estimates.push(*e);
                    seconds.push(rep[j].seconds);
                }
            }
            let ms: Vec<f64> = estimates.iter().map(|e| e.m).collect();
            let qs: Vec<f64> = estimates.iter().map(|e| e.q).collect();
            let ok = estimates.len();
            BenchRow {
                method: method.variant,
                n: cfg.n,
                ratio: cfg.ratio,
                family: cfg.family,
                distance: bayes_distance(&estimates, BAYES_SLOPE, BAYES_INTERCEPT).ok(),
                m_mean: if ok > 0 { mean(&ms) } else { f64::NAN },
                m_std: if ok > 1 { sample_std(&ms) } else { f64::NAN },
                q_mean: if ok > 0 { mean(&qs) } else { f64::NAN },
                q_std: if ok > 1 { sample_std(&qs) } else { f64::NAN },
                reps_ok: ok,
                reps_failed: cfg.reps - ok,
                mean_fit_seconds: if ok > 0 { mean(&seconds) } else { f64::NAN },
                estimates,
            }
        })
        .collect();
    Ok(BenchReport { rows })
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        "NA".into()
    }
}

impl BenchReport {
    /// Deterministic summary table. Wall-clock timings go to
    /// [`BenchReport::write_timing_csv`] so this output is reproducible.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "method,N,r,family,distance,m_mean,m_std,q_mean,q_std,reps_ok,reps_failed"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.n,
                fmt_num(r.ratio),
                r.family,
                r.distance.map_or("NA".into(), fmt_num),
                fmt_num(r.m_mean),
                fmt_num(r.m_std),
                fmt_num(r.q_mean),
                fmt_num(r.q_std),
                r.reps_ok,
                r.reps_failed
            )?;
        }
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,N,r,family,mean_fit_seconds")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.method,
                r.n,
                fmt_num(r.ratio),
                r.family,
                fmt_num(r.mean_fit_seconds)
            )?;
        }
        Ok(())
    }

    pub fn row(&self, method: Variant) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_algebra() {
        let b = boundary_from_weights(&[2.5, -1.0], 0.0).unwrap();
        assert_eq!((b.m, b.q), (2.5, 0.0));
        let b = boundary_from_weights(&[0.0, 1.0], -3.0).unwrap();
        assert_eq!((b.m, b.q), (0.0, 3.0));
        assert!(matches!(
            boundary_from_weights(&[1.0, 0.0], 0.0),
            Err(BenchError::VerticalBoundary(_))
        ));
    }

    #[test]
    fn distance_examples() {
        let e = |m, q| BoundaryEstimate { m, q };
        assert_eq!(
            bayes_distance(&[e(2.5, 0.0), e(2.5, 0.0)], 2.5, 0.0).unwrap(),
            0.0
        );
        assert_eq!(
            bayes_distance(&[e(3.0, 0.0), e(2.0, 0.0)], 2.5, 0.0).unwrap(),
            0.0
        );
        assert_eq!(
            bayes_distance(&[e(3.0, 1.0), e(3.0, 1.0)], 2.5, 0.0).unwrap(),
            0.0
        );
        assert!(bayes_distance(&[e(3.0, 1.0)], 2.5, 0.0).is_err());
    }

    #[test]
    fn contamination_count() {
        assert_eq!(contaminated_count(0.05, 200), 10);
        assert_eq!(contaminated_count(0.07, 100), 7);
        assert_eq!(contaminated_count(0.101, 100), 11);
        assert_eq!(contaminated_count(0.0, 100), 0);
    }

    #[test]
    fn default_grids() {
        assert_eq!(TuningGrid::synthetic(Variant::SpSvm, 0.0).level.len(), 11);
        assert_eq!(
            TuningGrid::synthetic(Variant::EelSvm, 0.0).level,
            vec![0.0, 0.01, 0.02]
        );
        assert_eq!(TuningGrid::synthetic(Variant::EelSvm, 0.05).level.len(), 6);
        assert_eq!(
            TuningGrid::synthetic(Variant::EelSvm, 0.10).level.last(),
            Some(&0.1)
        );
        assert_eq!(
            TuningGrid::real_data(Variant::CSvm)
                .candidates(Variant::CSvm)
                .unwrap()
                .len(),
            361
        );
        assert_eq!(TuningGrid::real_data(Variant::SpSvm).level.len(), 9);
        assert_eq!(
            TuningGrid::real_data(Variant::EelSvm)
                .candidates(Variant::EelSvm)
                .unwrap()
                .len(),
            294
        );
    }

    #[test]
    fn config_parses() {
        let cfg = ExperimentConfig::from_toml(
            "reps = 3\nn = 40\nratio = 0.1\nfamily = \"t5\"\nmethods = [\"c-svm\", \"eel-svm\"]\n[grids.eel-svm]\npenalty = [50.0]\nlevel = [0.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.family, ContaminationFamily::T5);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.method(Variant::EelSvm).grid.penalty, vec![50.0]);
        assert!(ExperimentConfig::from_toml("reps = 3\nn = 40\nmethods = []\n").is_err());
        assert!(ExperimentConfig::from_toml(
            "reps = 3\nn = 40\nmethods = [\"c-svm\"]\nbogus = 1\n"
        )
        .is_err());
    }
}
