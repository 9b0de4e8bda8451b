//! Synthetic layerwise activations with a drift-and-reconverge poisoned class.
//!
//! Every class owns, at every layer, an affine patch `A u + b` with orthonormal
//! `A` (d x p) and latent `u` uniform in `[-extent, extent]^p`. A sample keeps
//! one latent across all layers. Poisoned samples are predicted as the target
//! class: they sit on the target patch in the first phase, move away along a
//! direction orthogonal to both source and target patches, hold the full drift
//! in the third phase and return to the target patch by the last layer.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{write_bundle_with, ActivationBundle, StoreError};

#[derive(Error, Debug)]
#[non_exhaustive]
pub enum SynthError {
    #[error("infeasible synthetic config: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("ground truth: {0}")]
    GroundTruth(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Label smoothing applied to the one-hot confidences.
pub const LABEL_SMOOTHING: f32 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_classes: usize,
    /// Ambient dimension per layer; its length is the number of layers.
    pub dims: Vec<usize>,
    pub intrinsic_dim: usize,
    pub tube_noise: f64,
    pub drift: f64,
    /// Lengths of the four contiguous phases; they sum to the layer count.
    pub phases: [usize; 4],
    pub per_class: usize,
    pub n_clean: usize,
    pub n_poisoned: usize,
    pub source: usize,
    pub target: usize,
    pub missing_fraction: f64,
    /// Half-width of the latent box.
    pub extent: f64,
    /// Expected distance between two class offsets.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dims: vec![32; 12],
            intrinsic_dim: 2,
            tube_noise: 0.1,
            drift: 2.0,
            phases: [3, 3, 3, 3],
            per_class: 5,
            n_clean: 200,
            n_poisoned: 200,
            source: 0,
            target: 1,
            missing_fraction: 0.0,
            extent: 0.5,
            separation: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Zero drift with every layer in the first phase: poisoned inputs are
    /// drawn exactly like clean inputs of the target class.
    pub fn null(mut self) -> Self {
        self.drift = 0.0;
        self.phases = [self.dims.len(), 0, 0, 0];
        self
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        let c = self.num_classes;
        let p = self.intrinsic_dim;
        if c < 2 {
            return bad(format!("need at least 2 classes, got {c}"));
        }
        if self.dims.is_empty() {
            return bad("need at least one layer".into());
        }
        if p == 0 {
            return bad("intrinsic dimension must be positive".into());
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < 2 * p + 2) {
            return bad(format!(
                "ambient dimension {d} leaves no direction outside two {p}-dimensional patches and their offset (need d >= {})",
                2 * p + 2
            ));
        }
        if self.phases.iter().sum::<usize>() != self.dims.len() {
            return bad(format!(
                "phases {:?} do not cover {} layers",
                self.phases,
                self.dims.len()
            ));
        }
        if !(self.tube_noise >= 0.0 && self.tube_noise.is_finite()) {
            return bad(format!("tube noise {} must be finite and >= 0", self.tube_noise));
        }
        if !self.drift.is_finite() || (self.drift != 0.0 && self.drift <= 3.0 * self.tube_noise) {
            return bad(format!(
                "drift {} must exceed three times the tube noise {} (or be exactly 0)",
                self.drift, self.tube_noise
            ));
        }
        if self.source >= c || self.target >= c || self.source == self.target {
            return bad(format!(
                "source {} and target {} must be distinct classes below {c}",
                self.source, self.target
            ));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad(format!("missing fraction {} outside [0, 1)", self.missing_fraction));
        }
        if self.missing_count() > c - 2 {
            return bad(format!(
                "missing fraction {} drops more classes than the {} outside source and target",
                self.missing_fraction,
                c - 2
            ));
        }
        if self.per_class == 0 {
            return bad("need at least one validation sample per class".into());
        }
        if self.n_clean + self.n_poisoned == 0 {
            return bad("empty test set".into());
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) || !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad("extent must be positive and separation non-negative".into());
        }
        Ok(())
    }

    /// Classes dropped from the validation bundle: the `ceil(rho C)` highest
    /// indices other than source and target.
    pub fn missing_classes(&self) -> Vec<usize> {
        (0..self.num_classes)
            .rev()
            .filter(|&c| c != self.source && c != self.target)
            .take(self.missing_count())
            .collect()
    }

    fn missing_count(&self) -> usize {
        (self.missing_fraction * self.num_classes as f64 - 1e-9).ceil().max(0.0) as usize
    }

    /// Drift magnitude of poisoned samples at each layer.
    pub fn drift_schedule(&self) -> Vec<f64> {
        let [n1, n2, n3, n4] = self.phases;
        let mut out = Vec::with_capacity(self.num_layers());
        out.extend(std::iter::repeat_n(0.0, n1));
        out.extend((1..=n2).map(|j| self.drift * j as f64 / (n2 + 1) as f64));
        out.extend(std::iter::repeat_n(self.drift, n3));
        out.extend((1..=n4).map(|j| self.drift * (1.0 - j as f64 / n4 as f64)));
        out
    }

    /// Phase index (0..4) of each layer.
    pub fn phase_of_layers(&self) -> Vec<usize> {
        self.phases
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(i, n))
            .collect()
    }
}

/// Patch geometry of one layer.
#[derive(Debug, Clone)]
pub struct LayerGeometry {
    /// Orthonormal d x p basis per class.
    pub maps: Vec<Array2<f64>>,
    pub offsets: Vec<Vec<f64>>,
    /// Unit drift direction, orthogonal to the source and target patches.
    pub drift_direction: Vec<f64>,
}

impl LayerGeometry {
    pub fn point(&self, class: usize, latent: &[f64]) -> Vec<f64> {
        let a = &self.maps[class];
        let mut x = self.offsets[class].clone();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += latent.iter().enumerate().map(|(j, u)| a[[i, j]] * u).sum::<f64>();
        }
        x
    }

    /// Distance from `x` to the affine span of `class`'s patch.
    pub fn distance_to_manifold(&self, class: usize, x: ArrayView1<'_, f32>) -> f64 {
        let a = &self.maps[class];
        let r: Vec<f64> = x.iter().zip(&self.offsets[class]).map(|(&v, b)| v as f64 - b).collect();
        let coef: Vec<f64> = (0..a.ncols())
            .map(|j| (0..a.nrows()).map(|i| a[[i, j]] * r[i]).sum())
            .collect();
        r.iter()
            .enumerate()
            .map(|(i, ri)| {
                let proj: f64 = coef.iter().enumerate().map(|(j, c)| a[[i, j]] * c).sum();
                (ri - proj).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub validation: ActivationBundle,
    pub test: ActivationBundle,
    pub is_poisoned: Vec<bool>,
    pub geometry: Vec<LayerGeometry>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components of `v` along the orthonormal `basis`; returns the norm left.
fn project_off(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    // Two passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
    dot(v, v).sqrt()
}

/// Appends an orthonormalised copy of `v` to `basis` unless `v` is (nearly) dependent.
fn extend_basis(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>) {
    let before = dot(&v, &v).sqrt();
    let norm = project_off(&mut v, basis);
    if norm > 1e-10 * before.max(1.0) {
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
}

fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize, p: usize) -> Array2<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    while cols.len() < p {
        extend_basis(&mut cols, gaussian(rng, d));
    }
    Array2::from_shape_fn((d, p), |(i, j)| cols[j][i])
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, d);
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

fn draw_geometry(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<LayerGeometry> {
    let p = cfg.intrinsic_dim;
    // Offsets of norm sep / sqrt(2): two independent ones are about `sep` apart.
    let radius = cfg.separation / std::f64::consts::SQRT_2;
    cfg.dims
        .iter()
        .map(|&d| {
            let mut maps = Vec::with_capacity(cfg.num_classes);
            let mut offsets: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_classes);
            for _ in 0..cfg.num_classes {
                maps.push(random_orthonormal(rng, d, p));
                offsets.push(random_unit(rng, d).into_iter().map(|x| x * radius).collect());
            }
            let mut span: Vec<Vec<f64>> = Vec::new();
            for class in [cfg.source, cfg.target] {
                for j in 0..p {
                    extend_basis(&mut span, maps[class].column(j).to_vec());
                }
            }
            let gap: Vec<f64> = offsets[cfg.target]
                .iter()
                .zip(&offsets[cfg.source])
                .map(|(t, s)| t - s)
                .collect();
            extend_basis(&mut span, gap);
            let drift_direction = loop {
                let mut w = gaussian(rng, d);
                let n = project_off(&mut w, &span);
                if n > 1e-8 {
                    w.iter_mut().for_each(|x| *x /= n);
                    break w;
                }
            };
            LayerGeometry {
                maps,
                offsets,
                drift_direction,
            }
        })
        .collect()
}

struct Draw<'a> {
    cfg: &'a SynthConfig,
    geometry: &'a [LayerGeometry],
    latent: Uniform<f64>,
}

impl Draw<'_> {
    fn latent(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.cfg.intrinsic_dim).map(|_| self.latent.sample(rng)).collect()
    }

    /// Appends one sample to the per-layer row buffers.
    fn push(&self, rng: &mut ChaCha8Rng, rows: &mut [Vec<f32>], class: usize, drift: Option<&[f64]>) {
        let u = self.latent(rng);
        for (l, g) in self.geometry.iter().enumerate() {
            let d = self.cfg.dims[l];
            let mut x = g.point(class, &u);
            if let Some(schedule) = drift {
                x.iter_mut()
                    .zip(&g.drift_direction)
                    .for_each(|(xi, w)| *xi += schedule[l] * w);
            }
            // Per-coordinate variance sigma^2 / d gives E|eps|^2 = sigma^2.
            let scale = self.cfg.tube_noise / (d as f64).sqrt();
            for xi in &mut x {
                let e: f64 = StandardNormal.sample(rng);
                *xi += scale * e;
            }
            rows[l].extend(x.into_iter().map(|v| v as f32));
        }
    }
}

fn confidences(labels: &[usize], num_classes: usize) -> Array2<f32> {
    let floor = LABEL_SMOOTHING / num_classes as f32;
    Array2::from_shape_fn((labels.len(), num_classes), |(i, k)| {
        if labels[i] == k {
            1.0 - LABEL_SMOOTHING + floor
        } else {
            floor
        }
    })
}

fn bundle(cfg: &SynthConfig, rows: Vec<Vec<f32>>, true_labels: Vec<usize>, predicted: Vec<usize>) -> ActivationBundle {
    let n = predicted.len();
    ActivationBundle {
        layer_names: (0..cfg.num_layers()).map(|l| format!("layer{l:02}")).collect(),
        layers: rows
            .into_iter()
            .zip(&cfg.dims)
            .map(|(r, &d)| Array2::from_shape_vec((n, d), r).expect("row buffer matches shape"))
            .collect(),
        confidences: Some(confidences(&predicted, cfg.num_classes)),
        true_labels: Some(true_labels),
        predicted_labels: Some(predicted),
        num_classes: cfg.num_classes,
    }
}

/// Draws a validation bundle, a test bundle and the per-test-sample poison flags.
///
/// The output is a pure function of `cfg`, seed included.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geometry = draw_geometry(cfg, &mut rng);
    let draw = Draw {
        cfg,
        geometry: &geometry,
        latent: Uniform::new_inclusive(-cfg.extent, cfg.extent).expect("extent validated"),
    };
    let layers = cfg.num_layers();

    let missing = cfg.missing_classes();
    let mut rows = vec![Vec::new(); layers];
    let mut labels = Vec::new();
    for class in (0..cfg.num_classes).filter(|c| !missing.contains(c)) {
        for _ in 0..cfg.per_class {
            draw.push(&mut rng, &mut rows, class, None);
            labels.push(class);
        }
    }
    let validation = bundle(cfg, rows, labels.clone(), labels);

    // Clean classes round-robin, then poisoned, then a seeded shuffle.
    let mut order: Vec<Option<usize>> = (0..cfg.n_clean)
        .map(|i| Some(i % cfg.num_classes))
        .chain(std::iter::repeat_n(None, cfg.n_poisoned))
        .collect();
    order.shuffle(&mut rng);
    let schedule = cfg.drift_schedule();
    let mut rows = vec![Vec::new(); layers];
    let mut true_labels = Vec::with_capacity(order.len());
    let mut predicted = Vec::with_capacity(order.len());
    for slot in &order {
        match *slot {
            Some(class) => {
                draw.push(&mut rng, &mut rows, class, None);
                true_labels.push(class);
                predicted.push(class);
            }
            None => {
                draw.push(&mut rng, &mut rows, cfg.target, Some(&schedule));
                true_labels.push(cfg.source);
                predicted.push(cfg.target);
            }
        }
    }
    let test = bundle(cfg, rows, true_labels, predicted);
    let is_poisoned = order.iter().map(Option::is_none).collect();
    Ok(SynthData {
        validation,
        test,
        is_poisoned,
        geometry,
    })
}

/// Writes `validation/`, `test/` and `ground_truth.csv` under `dir`.
pub fn write_synth(data: &SynthData, cfg: &SynthConfig, dir: &Path) -> Result<()> {
    let mut attrs = BTreeMap::new();
    attrs.insert("generator".to_string(), "synthetic".to_string());
    attrs.insert(
        "config".to_string(),
        serde_json::to_string(cfg).expect("config serialises"),
    );
    write_bundle_with(&data.validation, &dir.join("validation"), &attrs)?;
    write_bundle_with(&data.test, &dir.join("test"), &attrs)?;
    let path = dir.join("ground_truth.csv");
    let file = std::fs::File::create(&path).map_err(|e| SynthError::GroundTruth(format!("{}: {e}", path.display())))?;
    write_ground_truth(&data.is_poisoned, file)
}

/// `sample_index,is_poisoned` CSV with 0/1 flags.
pub fn write_ground_truth<W: Write>(is_poisoned: &[bool], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| SynthError::GroundTruth(e.to_string());
    w.write_record(["sample_index", "is_poisoned"]).map_err(err)?;
    for (i, &p) in is_poisoned.iter().enumerate() {
        w.write_record([i.to_string(), u8::from(p).to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| SynthError::GroundTruth(e.to_string()))
}

/// Reads a ground-truth CSV; rows must be indexed 0, 1, 2, ... in order.
pub fn read_ground_truth<R: Read>(input: R) -> Result<Vec<bool>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (expected, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| SynthError::GroundTruth(e.to_string()))?;
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let index: usize = field(0)
            .parse()
            .map_err(|_| SynthError::GroundTruth(format!("row {expected}: bad sample_index {:?}", field(0))))?;
        if index != expected {
            return Err(SynthError::GroundTruth(format!(
                "row {expected}: sample_index {index} out of order"
            )));
        }
        let flag = match field(1) {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(SynthError::GroundTruth(format!(
                    "row {expected}: is_poisoned must be 0 or 1, got {other:?}"
                )))
            }
        };
        out.push(flag);
    }
    Ok(out)
}
