//! Exact nearest-neighbour queries against a validation bank.
//!
//! Banks are small, so every query is a linear scan. Distance ties are broken
//! by ascending validation row index everywhere, which makes every ordering
//! used by the ranking total and reproducible.

use std::cmp::Ordering;

use crate::store::ValidationBank;

/// Euclidean distance, accumulated in `f64`.
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Total order on `(distance, row)` pairs.
#[inline]
pub(crate) fn by_distance_then_row(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// `ceil(m * beta)`, tolerant of the rounding in products like `10 * 0.3`.
pub fn neighbour_quota(m: usize, beta: f64) -> usize {
    let raw = m as f64 * beta;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * raw.abs().max(1.0) {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

/// Distances from one query activation to every validation row at one layer.
///
/// An optional excluded row is treated as absent from the bank, which is how
/// leave-one-out fitting ranks a validation sample against its peers.
pub(crate) struct LayerQuery<'a> {
    pub bank: &'a ValidationBank,
    pub layer: usize,
    dists: Vec<f64>,
    exclude: Option<usize>,
}

impl<'a> LayerQuery<'a> {
    pub fn new(bank: &'a ValidationBank, layer: usize, z: &[f32], exclude: Option<usize>) -> Self {
        let dists = (0..bank.len())
            .map(|row| euclidean(z, bank.activation(layer, row)))
            .collect();
        LayerQuery {
            bank,
            layer,
            dists,
            exclude,
        }
    }

    #[inline]
    pub fn dist(&self, row: usize) -> f64 {
        self.dists[row]
    }

    #[inline]
    fn included(&self, row: usize) -> bool {
        self.exclude != Some(row)
    }

    /// Rows of `class` visible to this query.
    pub fn class_rows(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        self.bank
            .class_rows(class)
            .iter()
            .copied()
            .filter(move |&r| self.included(r))
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.class_rows(class).count()
    }

    /// Nearest visible row of `class`.
    pub fn nearest_in_class(&self, class: usize) -> Option<usize> {
        self.class_rows(class)
            .min_by(|&a, &b| by_distance_then_row((self.dist(a), a), (self.dist(b), b)))
    }

    /// The `k` nearest visible rows of `class`, nearest first.
    pub fn knn_in_class(&self, class: usize, k: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self.class_rows(class).collect();
        rows.sort_unstable_by(|&a, &b| by_distance_then_row((self.dist(a), a), (self.dist(b), b)));
        rows.truncate(k);
        rows
    }

    /// 1-based position of `row` when all visible rows are sorted by distance.
    pub fn position_of(&self, row: usize) -> usize {
        let key = (self.dist(row), row);
        1 + (0..self.dists.len())
            .filter(|&j| self.included(j))
            .filter(|&j| by_distance_then_row((self.dist(j), j), key) == Ordering::Less)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_rounds_up() {
        assert_eq!(neighbour_quota(5, 0.5), 3);
        assert_eq!(neighbour_quota(2, 0.5), 1);
        assert_eq!(neighbour_quota(10, 0.3), 3);
        assert_eq!(neighbour_quota(7, 1.0), 7);
        assert_eq!(neighbour_quota(3, 0.01), 1);
    }

    #[test]
    fn euclidean_matches_hand_value() {
        assert_eq!(euclidean(&[0.0, 3.0], &[4.0, 0.0]), 5.0);
    }
}
