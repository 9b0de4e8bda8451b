//! Nearest-neighbour ranks and their tube-aware adjustment.
//!
//! At each layer the base rank of a query is the 1-based position of the first
//! validation sample of the predicted class when the whole bank is sorted by
//! distance. The locally adaptive rank replaces it with the worst rank `|V|`
//! whenever the query lies farther from its nearest same-class neighbour than
//! the tube radius allows.

use thiserror::Error;

use crate::neighbors::LayerQuery;
use crate::resolve::{resolve_prediction, ResolveError, ResolvedPrediction};
use crate::store::{ActivationBundle, ValidationBank};
use crate::tube::{check_query, radius_for, TubeConfig, TubeError};

#[derive(Error, Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum RankError {
    #[error(transparent)]
    Tube(#[from] TubeError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("no validation sample has label {0}")]
    UnknownClass(usize),
    #[error("class {0} has fewer than two validation samples")]
    UnsupportedClass(usize),
    #[error("layer mismatch: {0}")]
    LayerMismatch(String),
    #[error("sample {index} out of range for a bundle of {len}")]
    SampleOutOfRange { index: usize, len: usize },
    #[error("bundle has no predicted labels")]
    MissingPredictions,
}

/// Locally adaptive rank at one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerRank {
    pub rank: usize,
    pub off_tube: bool,
    /// Distance from the query to its nearest same-class validation activation.
    pub anchor_distance: f64,
    pub radius: f64,
}

/// Per-layer ranks of one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTrajectory {
    pub ranks: Vec<usize>,
    pub predicted_class: usize,
    pub off_tube: Vec<bool>,
}

impl RankTrajectory {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.ranks.iter().map(|&r| r as f64).collect()
    }
}

/// Base rank of `z` at `layer` for `class`.
pub fn base_rank(z: &[f32], layer: usize, bank: &ValidationBank, class: usize) -> Result<usize, RankError> {
    check_query(bank, layer, z)?;
    let query = LayerQuery::new(bank, layer, z, None);
    let anchor = query.nearest_in_class(class).ok_or(RankError::UnknownClass(class))?;
    Ok(query.position_of(anchor))
}

/// Locally adaptive rank of `z` at `layer` for `class`.
pub fn lar_rank(
    z: &[f32],
    layer: usize,
    bank: &ValidationBank,
    class: usize,
    cfg: &TubeConfig,
) -> Result<LayerRank, RankError> {
    cfg.validate()?;
    check_query(bank, layer, z)?;
    if !bank.is_valid_class(class) {
        return Err(RankError::UnsupportedClass(class));
    }
    let query = LayerQuery::new(bank, layer, z, None);
    lar_in(&query, class, cfg, bank.len())
}

/// Shared by scoring and leave-one-out fitting. `worst` is the rank given to
/// off-tube queries.
pub(crate) fn lar_in(
    query: &LayerQuery<'_>,
    class: usize,
    cfg: &TubeConfig,
    worst: usize,
) -> Result<LayerRank, RankError> {
    // The first class-c sample in the sorted bank is the nearest one, so the
    // tube anchor and the base rank come from the same row.
    let anchor = query.nearest_in_class(class).ok_or(RankError::UnknownClass(class))?;
    let anchor_distance = query.dist(anchor);
    let radius = radius_for(query, cfg, class)?.value;
    if anchor_distance > radius {
        Ok(LayerRank {
            rank: worst,
            off_tube: true,
            anchor_distance,
            radius,
        })
    } else {
        Ok(LayerRank {
            rank: query.position_of(anchor),
            off_tube: false,
            anchor_distance,
            radius,
        })
    }
}

/// Checks that `bundle` was recorded at the same layers as the bank.
pub fn check_layers(bundle: &ActivationBundle, bank: &ValidationBank) -> Result<(), RankError> {
    let reference = bank.bundle();
    if bundle.layer_names != reference.layer_names {
        return Err(RankError::LayerMismatch(format!(
            "bundle layers {:?}, bank layers {:?}",
            bundle.layer_names, reference.layer_names
        )));
    }
    if bundle.layer_dims() != reference.layer_dims() {
        return Err(RankError::LayerMismatch(format!(
            "bundle dims {:?}, bank dims {:?}",
            bundle.layer_dims(),
            reference.layer_dims()
        )));
    }
    Ok(())
}

/// Resolves the class used to rank `sample`, flipping unsupported predictions.
pub fn resolve_sample(
    sample: usize,
    bundle: &ActivationBundle,
    bank: &ValidationBank,
) -> Result<ResolvedPrediction, RankError> {
    let predicted = bundle.predicted_labels.as_ref().ok_or(RankError::MissingPredictions)?;
    let n = predicted.len();
    let label = *predicted
        .get(sample)
        .ok_or(RankError::SampleOutOfRange { index: sample, len: n })?;
    let conf = bundle.confidence_row(sample);
    let conf = conf.as_ref().map(|row| row.to_vec());
    Ok(resolve_prediction(label, conf.as_deref(), bank.valid_classes())?)
}

/// Rank trajectory of `sample` from `bundle`, using its resolved prediction.
pub fn trajectory(
    sample: usize,
    bundle: &ActivationBundle,
    bank: &ValidationBank,
    cfg: &TubeConfig,
) -> Result<RankTrajectory, RankError> {
    check_layers(bundle, bank)?;
    let resolved = resolve_sample(sample, bundle, bank)?;
    let activations: Vec<Vec<f32>> = (0..bundle.num_layers())
        .map(|l| bundle.activation(l, sample).to_vec())
        .collect();
    trajectory_for(&activations, resolved.resolved_label, bank, cfg)
}

/// Rank trajectory of one input given its per-layer activations.
pub fn trajectory_for<A: AsRef<[f32]>>(
    activations: &[A],
    class: usize,
    bank: &ValidationBank,
    cfg: &TubeConfig,
) -> Result<RankTrajectory, RankError> {
    trajectory_excluding(activations, class, bank, cfg, None)
}

pub(crate) fn trajectory_excluding<A: AsRef<[f32]>>(
    activations: &[A],
    class: usize,
    bank: &ValidationBank,
    cfg: &TubeConfig,
    exclude: Option<usize>,
) -> Result<RankTrajectory, RankError> {
    cfg.validate()?;
    if activations.len() != bank.num_layers() {
        return Err(RankError::LayerMismatch(format!(
            "{} activations for a bank with {} layers",
            activations.len(),
            bank.num_layers()
        )));
    }
    if !bank.is_valid_class(class) {
        return Err(RankError::UnsupportedClass(class));
    }
    let mut ranks = Vec::with_capacity(activations.len());
    let mut off_tube = Vec::with_capacity(activations.len());
    for (layer, z) in activations.iter().enumerate() {
        let z = z.as_ref();
        check_query(bank, layer, z)?;
        let query = LayerQuery::new(bank, layer, z, exclude);
        let r = lar_in(&query, class, cfg, bank.len())?;
        ranks.push(r.rank);
        off_tube.push(r.off_tube);
    }
    Ok(RankTrajectory {
        ranks,
        predicted_class: class,
        off_tube,
    })
}
