//! Backdoor input screening from layerwise rank trajectories.
//!
//! A clean validation bank gives, at every layer, a nearest-neighbour rank for
//! each input. Ranks of inputs that leave the tube around their predicted
//! class are pushed to the worst value. A PCA subspace fitted on clean
//! trajectories then flags inputs whose trajectory it cannot reconstruct.

pub mod detector;
pub mod metrics;
pub mod neighbors;
pub mod pca;
pub mod rank;
pub mod resolve;
pub mod store;
pub mod synth;
pub mod tube;

#[cfg(test)]
mod testutil;

pub use detector::{
    detect, fit, fit_with_report, load_model, save_model, score_batch, DetectError, DetectorModel, FitConfig, FitMode,
    SampleScore, ScoreReport,
};
pub use metrics::{auroc, evaluate, EvalResult};
pub use pca::Subspace;
pub use rank::{base_rank, lar_rank, trajectory, trajectory_for, LayerRank, RankError, RankTrajectory};
pub use resolve::{resolve_label, resolve_prediction, ResolvedPrediction};
pub use store::{build_bank, load_bundle, write_bundle, ActivationBundle, StoreError, ValidationBank};
pub use synth::{generate, SynthConfig, SynthData};
pub use tube::{tube_radius, TubeConfig, TubeVariant};
