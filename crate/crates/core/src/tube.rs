//! Layerwise tube radius around the clean class submanifolds.
//!
//! The radius is estimated from the validation activations nearest to the
//! query, so it adapts to the local density of the bank.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neighbors::{by_distance_then_row, euclidean, neighbour_quota, LayerQuery};
use crate::store::ValidationBank;

#[derive(Error, Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum TubeError {
    #[error("invalid tube config: {0}")]
    InvalidConfig(String),
    #[error("layer {layer} out of range (bank has {num_layers})")]
    LayerOutOfRange { layer: usize, num_layers: usize },
    #[error("layer {layer}: activation has dimension {actual}, bank has {expected}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("class {class} has {size} validation samples; at least 2 are needed for a tube")]
    UndersizedClass { class: usize, size: usize },
    #[error("no class has enough validation samples to estimate a tube radius")]
    NoTubeClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TubeVariant {
    /// Largest pairwise distance among the query's nearest neighbours in each
    /// class, maximised over classes.
    Pairwise,
    /// Spread of the predicted class around the query's nearest neighbour `v*`.
    Star,
}

impl std::fmt::Display for TubeVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TubeVariant::Pairwise => "pairwise",
            TubeVariant::Star => "star",
        })
    }
}

impl std::str::FromStr for TubeVariant {
    type Err = TubeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pairwise" => Ok(TubeVariant::Pairwise),
            "star" => Ok(TubeVariant::Star),
            other => Err(TubeError::InvalidConfig(format!("unknown tube variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeConfig {
    /// Neighbour-percentile factor in `(0, 1]`.
    pub beta: f64,
    pub variant: TubeVariant,
    /// Minimum neighbour count for the pairwise variant.
    pub k_floor: usize,
}

impl Default for TubeConfig {
    fn default() -> Self {
        TubeConfig {
            beta: 0.5,
            variant: TubeVariant::Pairwise,
            k_floor: 2,
        }
    }
}

impl TubeConfig {
    pub fn new(beta: f64, variant: TubeVariant) -> Result<Self, TubeError> {
        let cfg = TubeConfig {
            beta,
            variant,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TubeError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(TubeError::InvalidConfig(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.k_floor < 2 {
            return Err(TubeError::InvalidConfig(format!(
                "k_floor must be at least 2, got {}",
                self.k_floor
            )));
        }
        Ok(())
    }

    /// Neighbour count used by the pairwise variant for a class of `size` samples.
    pub fn pairwise_k(&self, size: usize) -> usize {
        size.min(self.k_floor.max(neighbour_quota(size, self.beta)))
    }

    /// Neighbour count around `v*` used by the star variant.
    pub fn star_k(&self, size: usize) -> usize {
        size.saturating_sub(1).min(neighbour_quota(size, self.beta).max(1))
    }
}

/// Tube radius at one layer, in activation distance units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeRadius {
    pub value: f64,
    pub layer: usize,
}

pub(crate) fn check_query(bank: &ValidationBank, layer: usize, z: &[f32]) -> Result<(), TubeError> {
    let num_layers = bank.num_layers();
    if layer >= num_layers {
        return Err(TubeError::LayerOutOfRange { layer, num_layers });
    }
    let expected = bank.bundle().layers[layer].ncols();
    if z.len() != expected {
        return Err(TubeError::DimensionMismatch {
            layer,
            expected,
            actual: z.len(),
        });
    }
    Ok(())
}

/// Pairwise tube radius for the activation `z` at `layer`.
pub fn tube_radius_pairwise(
    z: &[f32],
    layer: usize,
    bank: &ValidationBank,
    cfg: &TubeConfig,
) -> Result<TubeRadius, TubeError> {
    cfg.validate()?;
    check_query(bank, layer, z)?;
    let query = LayerQuery::new(bank, layer, z, None);
    pairwise_radius(&query, cfg)
}

/// Star tube radius for the activation `z` at `layer`, anchored on `predicted_class`.
pub fn tube_radius_star(
    z: &[f32],
    layer: usize,
    bank: &ValidationBank,
    cfg: &TubeConfig,
    predicted_class: usize,
) -> Result<TubeRadius, TubeError> {
    cfg.validate()?;
    check_query(bank, layer, z)?;
    let query = LayerQuery::new(bank, layer, z, None);
    star_radius(&query, cfg, predicted_class)
}

/// Radius for the configured variant.
pub fn tube_radius(
    z: &[f32],
    layer: usize,
    bank: &ValidationBank,
    cfg: &TubeConfig,
    predicted_class: usize,
) -> Result<TubeRadius, TubeError> {
    match cfg.variant {
        TubeVariant::Pairwise => tube_radius_pairwise(z, layer, bank, cfg),
        TubeVariant::Star => tube_radius_star(z, layer, bank, cfg, predicted_class),
    }
}

pub(crate) fn radius_for(
    query: &LayerQuery<'_>,
    cfg: &TubeConfig,
    predicted_class: usize,
) -> Result<TubeRadius, TubeError> {
    match cfg.variant {
        TubeVariant::Pairwise => pairwise_radius(query, cfg),
        TubeVariant::Star => star_radius(query, cfg, predicted_class),
    }
}

fn pairwise_radius(query: &LayerQuery<'_>, cfg: &TubeConfig) -> Result<TubeRadius, TubeError> {
    let bank = query.bank;
    let layer = query.layer;
    let mut best: Option<f64> = None;
    for class in 0..bank.num_classes() {
        let size = query.class_size(class);
        if size == 0 {
            continue;
        }
        if size < 2 {
            log::trace!("layer {layer}: class {class} has a single sample, skipped");
            continue;
        }
        let rows = query.knn_in_class(class, cfg.pairwise_k(size));
        let mut spread = 0.0f64;
        for (i, &a) in rows.iter().enumerate() {
            for &b in &rows[i + 1..] {
                spread = spread.max(euclidean(bank.activation(layer, a), bank.activation(layer, b)));
            }
        }
        best = Some(best.map_or(spread, |m| m.max(spread)));
    }
    best.map(|value| TubeRadius { value, layer })
        .ok_or(TubeError::NoTubeClass)
}

fn star_radius(query: &LayerQuery<'_>, cfg: &TubeConfig, class: usize) -> Result<TubeRadius, TubeError> {
    let bank = query.bank;
    let layer = query.layer;
    let size = query.class_size(class);
    if size < 2 {
        return Err(TubeError::UndersizedClass { class, size });
    }
    let anchor = query.nearest_in_class(class).expect("class is nonempty");
    let anchor_act = bank.activation(layer, anchor);
    let mut around: Vec<(f64, usize)> = query
        .class_rows(class)
        .filter(|&r| r != anchor)
        .map(|r| (euclidean(anchor_act, bank.activation(layer, r)), r))
        .collect();
    around.sort_unstable_by(|&a, &b| by_distance_then_row(a, b));
    let k = cfg.star_k(size);
    let value = around[..k].iter().map(|&(d, _)| d).fold(0.0, f64::max);
    Ok(TubeRadius { value, layer })
}
