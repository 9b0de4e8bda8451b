//! Nearest-neighbour label flipping.
//!
//! A prediction whose class has fewer than two validation samples cannot be
//! ranked. Such predictions are moved to the highest-confidence class that
//! does have validation support.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[non_exhaustive]
pub enum ResolveError {
    #[error("no class has validation support")]
    NoValidClasses,
    #[error("predicted class {0} has no validation support and no confidence vector is available to flip it")]
    MissingConfidences(usize),
    #[error("confidence vector is empty")]
    EmptyConfidences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedPrediction {
    pub original_label: usize,
    pub resolved_label: usize,
    pub flipped: bool,
}

/// Index of the largest entry among `candidates`; ties go to the lowest index.
fn argmax_over(confidences: &[f32], candidates: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for k in candidates {
        let p = confidences[k];
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((k, p));
        }
    }
    best.map(|(k, _)| k)
}

/// Resolves the argmax of `confidences` into a class with validation support.
pub fn resolve_label(confidences: &[f32], valid_classes: &BTreeSet<usize>) -> Result<ResolvedPrediction, ResolveError> {
    let original = argmax_over(confidences, 0..confidences.len()).ok_or(ResolveError::EmptyConfidences)?;
    resolve_prediction(original, Some(confidences), valid_classes)
}

/// Resolves an explicit predicted label, consulting `confidences` only when
/// the label must be flipped.
pub fn resolve_prediction(
    predicted: usize,
    confidences: Option<&[f32]>,
    valid_classes: &BTreeSet<usize>,
) -> Result<ResolvedPrediction, ResolveError> {
    if valid_classes.is_empty() {
        return Err(ResolveError::NoValidClasses);
    }
    if valid_classes.contains(&predicted) {
        return Ok(ResolvedPrediction {
            original_label: predicted,
            resolved_label: predicted,
            flipped: false,
        });
    }
    let p = confidences.ok_or(ResolveError::MissingConfidences(predicted))?;
    // Masking zeroes every unsupported class, so the masked argmax over the
    // supported classes is the raw argmax restricted to them. An all-zero
    // mask therefore falls back to the lowest supported index.
    let resolved =
        argmax_over(p, valid_classes.iter().copied().filter(|&k| k < p.len())).ok_or(ResolveError::NoValidClasses)?;
    Ok(ResolvedPrediction {
        original_label: predicted,
        resolved_label: resolved,
        flipped: true,
    })
}
