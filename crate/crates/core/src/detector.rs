//! Trajectory subspace model: fitting, scoring and persistence.
//!
//! Clean validation trajectories are centred and projected onto their leading
//! principal directions. A test trajectory is scored by its squared distance
//! to that affine subspace and flagged when the score exceeds a threshold
//! calibrated on the validation trajectories themselves.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pca::{PcaError, Subspace};
use crate::rank::{check_layers, resolve_sample, trajectory_excluding, trajectory_for, RankError, RankTrajectory};
use crate::resolve::ResolvedPrediction;
use crate::store::{f64_bytes, read_f64, ActivationBundle, StoreError, ValidationBank};
use crate::tube::{TubeConfig, TubeError};

pub const MODEL_MAGIC: &str = "TEDM1";
pub const MODEL_VERSION: u32 = 1;
pub const MODEL_MANIFEST_FILE: &str = "model_manifest.json";

#[derive(Error, Debug)]
#[non_exhaustive]
pub enum DetectError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error("cannot fit: {0}")]
    Degenerate(String),
    #[error("model does not match input: {0}")]
    ModelMismatch(String),
    #[error("{}: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },
}

impl From<TubeError> for DetectError {
    fn from(e: TubeError) -> Self {
        DetectError::Rank(e.into())
    }
}

pub type Result<T> = std::result::Result<T, DetectError>;

/// How validation samples are ranked when building the clean trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Each sample is ranked against the full bank, itself included.
    #[default]
    SelfInclusive,
    /// Each sample is ranked against the bank with its own row removed.
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub tube: TubeConfig,
    /// Cumulative explained-variance target used to pick `K`.
    pub var_ratio: f64,
    /// Quantile of the fitted errors used as threshold.
    pub fpr_quantile: f64,
    pub mode: FitMode,
    /// Centre trajectories on their mean before projecting.
    pub centered: bool,
    pub theta_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tube: TubeConfig::default(),
            var_ratio: 0.95,
            fpr_quantile: 0.95,
            mode: FitMode::SelfInclusive,
            centered: true,
            theta_floor: 1e-9,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.tube.validate()?;
        if !(self.var_ratio > 0.0 && self.var_ratio <= 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "var_ratio must lie in (0, 1], got {}",
                self.var_ratio
            )));
        }
        if !(self.fpr_quantile > 0.0 && self.fpr_quantile <= 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "fpr_quantile must lie in (0, 1], got {}",
                self.fpr_quantile
            )));
        }
        if !(self.theta_floor > 0.0 && self.theta_floor.is_finite()) {
            return Err(DetectError::InvalidConfig(format!(
                "theta_floor must be positive, got {}",
                self.theta_floor
            )));
        }
        Ok(())
    }
}

/// Fitted detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub subspace: Subspace,
    pub theta: f64,
    pub config: FitConfig,
    pub layer_names: Vec<String>,
    pub layer_dims: Vec<usize>,
    /// `|V|` of the bank the model was fit on; scoring requires the same bank.
    pub bank_size: usize,
}

impl DetectorModel {
    pub fn mean(&self) -> &Array1<f64> {
        &self.subspace.mean
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.subspace.basis
    }

    pub fn num_components(&self) -> usize {
        self.subspace.num_components()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_names.len()
    }

    pub fn tube(&self) -> &TubeConfig {
        &self.config.tube
    }

    fn check_bank(&self, bank: &ValidationBank) -> Result<()> {
        let reference = bank.bundle();
        if reference.layer_names != self.layer_names || reference.layer_dims() != self.layer_dims {
            return Err(DetectError::ModelMismatch(format!(
                "model layers {:?} / dims {:?}, bank layers {:?} / dims {:?}",
                self.layer_names,
                self.layer_dims,
                reference.layer_names,
                reference.layer_dims()
            )));
        }
        if bank.len() != self.bank_size {
            return Err(DetectError::ModelMismatch(format!(
                "model was fit on {} validation samples, bank has {}",
                self.bank_size,
                bank.len()
            )));
        }
        Ok(())
    }
}

/// Clean trajectories, one row per ranked validation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub values: Array2<f64>,
    /// Validation row behind each trajectory.
    pub rows: Vec<usize>,
}

/// Everything computed while fitting.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: DetectorModel,
    pub trajectories: TrajectorySet,
    pub errors: Vec<f64>,
}

/// Ranks every validation sample against the bank.
///
/// Samples of classes without validation support, and samples that cannot be
/// ranked after leave-one-out removal, are skipped with a warning.
pub fn clean_trajectories(bank: &ValidationBank, tube: &TubeConfig, mode: FitMode) -> Result<TrajectorySet> {
    tube.validate()?;
    let layers = bank.num_layers();
    let results: Vec<(usize, std::result::Result<RankTrajectory, RankError>)> = (0..bank.len())
        .into_par_iter()
        .map(|row| {
            let class = bank.label(row);
            let acts: Vec<&[f32]> = (0..layers).map(|l| bank.activation(l, row)).collect();
            let exclude = match mode {
                FitMode::SelfInclusive => None,
                FitMode::LeaveOneOut => Some(row),
            };
            (row, trajectory_excluding(&acts, class, bank, tube, exclude))
        })
        .collect();
    let mut values = Vec::with_capacity(bank.len() * layers);
    let mut rows = Vec::with_capacity(bank.len());
    for (row, r) in results {
        match r {
            Ok(t) => {
                values.extend(t.ranks.iter().map(|&x| x as f64));
                rows.push(row);
            }
            Err(e) => log::warn!("validation row {row} not ranked: {e}"),
        }
    }
    let values = Array2::from_shape_vec((rows.len(), layers), values).expect("row-major fill");
    Ok(TrajectorySet { values, rows })
}

/// Nearest-rank quantile of `values`: the smallest value with at least a
/// `q` fraction of the data at or below it.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[idx.min(n) - 1])
}

/// Fits the subspace and threshold on a set of clean trajectories.
pub fn fit_trajectories(trajectories: &TrajectorySet, cfg: &FitConfig) -> Result<(Subspace, f64, Vec<f64>)> {
    cfg.validate()?;
    let n = trajectories.values.nrows();
    if n < 2 {
        return Err(DetectError::Degenerate(format!(
            "need at least 2 clean trajectories, have {n}"
        )));
    }
    let subspace = Subspace::fit(trajectories.values.view(), cfg.var_ratio, cfg.centered)?;
    let errors = trajectories
        .values
        .rows()
        .into_iter()
        .map(|r| subspace.reconstruction_error(r))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let q = quantile(&errors, cfg.fpr_quantile).expect("n >= 2");
    Ok((subspace, q.max(cfg.theta_floor), errors))
}

/// Fits a detector on a validation bank.
pub fn fit(bank: &ValidationBank, cfg: &FitConfig) -> Result<DetectorModel> {
    fit_with_report(bank, cfg).map(|r| r.model)
}

pub fn fit_with_report(bank: &ValidationBank, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    if bank.len() < 2 {
        return Err(DetectError::Degenerate(format!(
            "bank holds {} samples, need at least 2",
            bank.len()
        )));
    }
    let undersized = bank.undersized_classes();
    if !undersized.is_empty() {
        log::warn!("classes {undersized:?} have a single validation sample and cannot anchor a tube");
    }
    let trajectories = clean_trajectories(bank, &cfg.tube, cfg.mode)?;
    let (subspace, theta, errors) = fit_trajectories(&trajectories, cfg)?;
    let model = DetectorModel {
        subspace,
        theta,
        config: *cfg,
        layer_names: bank.bundle().layer_names.clone(),
        layer_dims: bank.bundle().layer_dims(),
        bank_size: bank.len(),
    };
    Ok(FitReport {
        model,
        trajectories,
        errors,
    })
}

/// Squared reconstruction error of `traj` under `model`.
pub fn reconstruction_error(model: &DetectorModel, traj: &RankTrajectory) -> Result<f64> {
    let x = Array1::from(traj.as_f64());
    Ok(model.subspace.reconstruction_error(x.view())?)
}

/// `(flagged, error)` for one trajectory; flagged iff the error exceeds theta.
pub fn detect(model: &DetectorModel, traj: &RankTrajectory) -> Result<(bool, f64)> {
    let e = reconstruction_error(model, traj)?;
    Ok((e > model.theta, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleScore {
    pub error: f64,
    pub flagged: bool,
    pub trajectory: RankTrajectory,
    pub resolution: ResolvedPrediction,
}

impl SampleScore {
    pub fn resolved_class(&self) -> usize {
        self.resolution.resolved_label
    }
}

/// Outcome for one test sample; failures are kept per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub index: usize,
    pub outcome: std::result::Result<SampleScore, RankError>,
}

fn score_sample(
    model: &DetectorModel,
    bundle: &ActivationBundle,
    bank: &ValidationBank,
    index: usize,
) -> std::result::Result<SampleScore, RankError> {
    let resolution = resolve_sample(index, bundle, bank)?;
    let acts: Vec<Vec<f32>> = (0..bundle.num_layers())
        .map(|l| bundle.activation(l, index).to_vec())
        .collect();
    let trajectory = trajectory_for(&acts, resolution.resolved_label, bank, model.tube())?;
    let x = Array1::from(trajectory.as_f64());
    let error = model
        .subspace
        .reconstruction_error(x.view())
        .expect("trajectory length checked against the bank");
    Ok(SampleScore {
        error,
        flagged: error > model.theta,
        trajectory,
        resolution,
    })
}

/// Scores every sample of `bundle`, in input order.
///
/// Runs on the current rayon pool; output order never depends on it.
pub fn score_batch(
    model: &DetectorModel,
    bundle: &ActivationBundle,
    bank: &ValidationBank,
) -> Result<Vec<ScoreReport>> {
    model.check_bank(bank)?;
    check_layers(bundle, bank)?;
    if bundle.predicted_labels.is_none() {
        return Err(RankError::MissingPredictions.into());
    }
    Ok((0..bundle.num_samples())
        .into_par_iter()
        .map(|index| ScoreReport {
            index,
            outcome: score_sample(model, bundle, bank, index),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFiles {
    mean: String,
    basis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelManifest {
    magic: String,
    version: u32,
    num_layers: usize,
    layer_names: Vec<String>,
    layer_dims: Vec<usize>,
    bank_size: usize,
    num_components: usize,
    theta: f64,
    explained_variance_ratio: f64,
    /// Eigenvalues of the trajectory covariance, descending.
    #[serde(default)]
    spectrum: Vec<f64>,
    fit: FitConfig,
    files: ModelFiles,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DetectError + '_ {
    move |source| {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    }
}

/// Writes `model_manifest.json`, `mean.f64` and `basis.f64` (row-major `L x K`).
pub fn save_model(model: &DetectorModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let manifest = ModelManifest {
        magic: MODEL_MAGIC.into(),
        version: MODEL_VERSION,
        num_layers: model.num_layers(),
        layer_names: model.layer_names.clone(),
        layer_dims: model.layer_dims.clone(),
        bank_size: model.bank_size,
        num_components: model.num_components(),
        theta: model.theta,
        explained_variance_ratio: model.subspace.explained_variance_ratio,
        spectrum: model.subspace.spectrum.to_vec(),
        fit: model.config,
        files: ModelFiles {
            mean: "mean.f64".into(),
            basis: "basis.f64".into(),
        },
    };
    let mean_path = dir.join(&manifest.files.mean);
    fs::write(&mean_path, f64_bytes(model.mean().iter())).map_err(io(&mean_path))?;
    let basis_path = dir.join(&manifest.files.basis);
    fs::write(&basis_path, f64_bytes(model.basis().iter())).map_err(io(&basis_path))?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    let path = dir.join(MODEL_MANIFEST_FILE);
    fs::write(&path, format!("{json}\n")).map_err(io(&path))
}

pub fn load_model(dir: &Path) -> Result<DetectorModel> {
    let path = dir.join(MODEL_MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let corrupt = |msg: String| DetectError::Corrupt {
        path: path.clone(),
        msg,
    };
    let m: ModelManifest = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if m.magic != MODEL_MAGIC {
        return Err(corrupt(format!("bad magic {:?}, expected {MODEL_MAGIC:?}", m.magic)));
    }
    if m.version != MODEL_VERSION {
        return Err(corrupt(format!(
            "unsupported version {}, expected {MODEL_VERSION}",
            m.version
        )));
    }
    if m.layer_names.len() != m.num_layers || m.layer_dims.len() != m.num_layers {
        return Err(corrupt("layer list lengths disagree with num_layers".into()));
    }
    if m.num_components == 0 || m.num_components > m.num_layers {
        return Err(corrupt(format!("bad component count {}", m.num_components)));
    }
    m.fit.validate()?;
    let l = m.num_layers;
    let k = m.num_components;
    let mean = read_f64(&dir.join(&m.files.mean), "mean", l)?;
    let basis = read_f64(&dir.join(&m.files.basis), "basis", l * k)?;
    if mean.iter().chain(&basis).any(|x| !x.is_finite()) || !m.theta.is_finite() {
        return Err(corrupt("non-finite model parameter".into()));
    }
    let basis = Array2::from_shape_vec((l, k), basis).expect("length checked");
    let gram = basis.t().dot(&basis);
    let dev = gram
        .indexed_iter()
        .map(|((i, j), g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if dev > 1e-8 {
        return Err(corrupt(format!(
            "basis columns are not orthonormal (deviation {dev:e})"
        )));
    }
    Ok(DetectorModel {
        subspace: Subspace {
            mean: Array1::from(mean),
            basis,
            explained_variance_ratio: m.explained_variance_ratio,
            spectrum: Array1::from(m.spectrum),
        },
        theta: m.theta,
        config: m.fit,
        layer_names: m.layer_names,
        layer_dims: m.layer_dims,
        bank_size: m.bank_size,
    })
}
