//! Detection metrics with poisoned samples as the positive class.

use std::cmp::Ordering;
use std::io::Write;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("need both poisoned and clean samples (poisoned: {positives}, clean: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {index} is not finite")]
    NonFinite { index: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check(scores: &[f64], is_poisoned: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != is_poisoned.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: is_poisoned.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite { index });
    }
    let positives = is_poisoned.iter().filter(|&&p| p).count();
    let negatives = is_poisoned.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random poisoned score exceeds a random clean one, ties counting 1/2.
pub fn auroc(scores: &[f64], is_poisoned: &[bool]) -> Result<f64> {
    let (positives, negatives) = check(scores, is_poisoned)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of doubled mid-ranks of the positives keeps everything integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end share the mid-rank (start + 1 + end) / 2.
        let doubled_mid = (start + 1 + end) as u128;
        let pos_in_tie = order[start..end].iter().filter(|&&i| is_poisoned[i]).count() as u128;
        doubled_rank_sum += doubled_mid * pos_in_tie;
        start = end;
    }
    let p = positives as u128;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// ROC points from a sweep over the distinct scores, highest first.
///
/// Starts at `(0, 0)` and ends at `(1, 1)`; a tie block moves both rates at
/// once. Interior points on a purely vertical or horizontal run are dropped,
/// which leaves the area unchanged.
pub fn roc_curve(scores: &[f64], is_poisoned: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (positives, negatives) = check(scores, is_poisoned)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if is_poisoned[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(drop_collinear(points))
}

fn drop_collinear(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        if let (Some(&prev), Some(&next)) = (out.last(), points.get(i + 1)) {
            let vertical = prev.0 == p.0 && p.0 == next.0;
            let horizontal = prev.1 == p.1 && p.1 == next.1;
            if vertical || horizontal {
                continue;
            }
        }
        out.push(p);
    }
    out
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_flags(flags: &[bool], is_poisoned: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&f, &p) in flags.iter().zip(is_poisoned) {
            match (f, p) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 of the rule `score > theta`.
pub fn f1_at_threshold(scores: &[f64], is_poisoned: &[bool], theta: f64) -> Result<f64> {
    check(scores, is_poisoned)?;
    let flags: Vec<bool> = scores.iter().map(|&s| s > theta).collect();
    Ok(Confusion::from_flags(&flags, is_poisoned).f1())
}

/// Best F1 over every cut of the sorted scores, with the threshold achieving it.
///
/// The returned threshold `t` reproduces the F1 through `score > t`.
pub fn best_f1(scores: &[f64], is_poisoned: &[bool]) -> Result<(f64, f64)> {
    let (positives, _) = check(scores, is_poisoned)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let max = scores[order[0]];
    // Flagging nothing.
    let mut best = (0.0, max);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if is_poisoned[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            scores[order[i]]
        } else {
            f64::NEG_INFINITY
        };
        let c = Confusion {
            tp,
            fp,
            tn: 0,
            fn_: positives - tp,
        };
        if c.f1().partial_cmp(&best.0) == Some(Ordering::Greater) {
            best = (c.f1(), threshold);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub auroc: f64,
    pub f1_at_theta: f64,
    pub best_f1: f64,
    pub best_f1_threshold: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub counts: Confusion,
}

/// Evaluates scores and the flags produced at the calibrated threshold.
pub fn evaluate(scores: &[f64], flags: &[bool], is_poisoned: &[bool]) -> Result<EvalResult> {
    check(scores, is_poisoned)?;
    if flags.len() != is_poisoned.len() {
        return Err(MetricsError::LengthMismatch {
            scores: flags.len(),
            labels: is_poisoned.len(),
        });
    }
    let counts = Confusion::from_flags(flags, is_poisoned);
    let (best_f1, best_f1_threshold) = best_f1(scores, is_poisoned)?;
    Ok(EvalResult {
        auroc: auroc(scores, is_poisoned)?,
        f1_at_theta: counts.f1(),
        best_f1,
        best_f1_threshold,
        roc_points: roc_curve(scores, is_poisoned)?,
        counts,
    })
}

impl EvalResult {
    /// `metric,value` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        let c = &self.counts;
        let rows: [(&str, String); 10] = [
            ("auroc", self.auroc.to_string()),
            ("f1_at_theta", self.f1_at_theta.to_string()),
            ("best_f1", self.best_f1.to_string()),
            ("best_f1_threshold", self.best_f1_threshold.to_string()),
            ("precision_at_theta", c.precision().to_string()),
            ("recall_at_theta", c.recall().to_string()),
            ("tp", c.tp.to_string()),
            ("fp", c.fp.to_string()),
            ("tn", c.tn.to_string()),
            ("fn", c.fn_.to_string()),
        ];
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `fpr,tpr` CSV.
pub fn write_roc_csv<W: Write>(points: &[(f64, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fpr", "tpr"])?;
    for (fpr, tpr) in points {
        w.write_record([fpr.to_string(), tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
