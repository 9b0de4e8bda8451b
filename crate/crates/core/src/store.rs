//! Activation bundles, validation banks and the `TEDA1` on-disk container.
//!
//! A container is a directory holding `manifest.json` plus one raw binary per
//! array. Activations and confidences are row-major little-endian `f32`, labels
//! are little-endian `i64`. Binaries carry no header; their sizes are fully
//! determined by the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUNDLE_MAGIC: &str = "TEDA1";
pub const BUNDLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Tolerance on the row sums of a confidence matrix.
pub const CONFIDENCE_SUM_TOL: f32 = 1e-4;

#[derive(Error, Debug)]
#[non_exhaustive]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed manifest: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },
    #[error("{}: bad magic {found:?}, expected {expected:?}", path.display())]
    Magic {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("{}: unsupported version {found}, expected {expected}", path.display())]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{}: size mismatch for {array}: expected {expected} bytes, found {actual}", path.display())]
    SizeMismatch {
        path: PathBuf,
        array: String,
        expected: u64,
        actual: u64,
    },
    #[error("shape mismatch in {what}: expected {expected}, found {actual}")]
    Shape {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("{array}: label {label} at row {row} outside [0, {num_classes})")]
    LabelOutOfRange {
        array: String,
        row: usize,
        label: i64,
        num_classes: usize,
    },
    #[error("{array}: non-finite value at row {row}, column {col}")]
    NonFinite { array: String, row: usize, col: usize },
    #[error("confidences: row {row} {msg}")]
    Confidence { row: usize, msg: String },
    #[error("bundle has no true_labels array")]
    MissingTrueLabels,
    #[error("bundle holds no samples")]
    EmptyBundle,
    #[error("no class has at least two validation samples")]
    NoValidClass,
    #[error("invalid bundle: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Per-sample, per-layer activations together with labels and model outputs.
///
/// Layers are stored in forward order. Row `i` of every matrix belongs to the
/// same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBundle {
    pub layer_names: Vec<String>,
    /// One `N x d_l` matrix per layer.
    pub layers: Vec<Array2<f32>>,
    pub true_labels: Option<Vec<usize>>,
    pub predicted_labels: Option<Vec<usize>>,
    /// `N x C`, rows on the probability simplex.
    pub confidences: Option<Array2<f32>>,
    pub num_classes: usize,
}

impl ActivationBundle {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_samples(&self) -> usize {
        self.layers.first().map_or(0, |m| m.nrows())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|m| m.ncols()).collect()
    }

    /// Activation of `sample` at `layer`.
    pub fn activation(&self, layer: usize, sample: usize) -> ArrayView1<'_, f32> {
        self.layers[layer].row(sample)
    }

    pub fn confidence_row(&self, sample: usize) -> Option<ArrayView1<'_, f32>> {
        self.confidences.as_ref().map(|c| c.row(sample))
    }

    /// Checks every structural invariant of the bundle.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(StoreError::Invalid("bundle has no layers".into()));
        }
        if self.num_classes == 0 {
            return Err(StoreError::Invalid("num_classes must be positive".into()));
        }
        check_len("layer_names", self.layers.len(), self.layer_names.len())?;
        let n = self.num_samples();
        for (name, m) in self.layer_names.iter().zip(&self.layers) {
            check_len(&format!("rows of layer {name}"), n, m.nrows())?;
            if m.ncols() == 0 {
                return Err(StoreError::Invalid(format!("layer {name} has zero width")));
            }
            check_finite(name, m)?;
        }
        if let Some(labels) = &self.true_labels {
            check_labels("true_labels", labels, n, self.num_classes)?;
        }
        if let Some(labels) = &self.predicted_labels {
            check_labels("predicted_labels", labels, n, self.num_classes)?;
        }
        if let Some(conf) = &self.confidences {
            check_len("rows of confidences", n, conf.nrows())?;
            check_len("columns of confidences", self.num_classes, conf.ncols())?;
            check_finite("confidences", conf)?;
            for (row, r) in conf.rows().into_iter().enumerate() {
                if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(StoreError::Confidence {
                        row,
                        msg: "has an entry outside [0, 1]".into(),
                    });
                }
                let sum: f64 = r.iter().map(|&p| p as f64).sum();
                if (sum - 1.0).abs() > CONFIDENCE_SUM_TOL as f64 {
                    return Err(StoreError::Confidence {
                        row,
                        msg: format!("sums to {sum}, not 1"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(StoreError::Shape {
            what: what.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_finite(array: &str, m: &Array2<f32>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(StoreError::NonFinite {
                array: array.to_string(),
                row,
                col,
            });
        }
    }
    Ok(())
}

fn check_labels(array: &str, labels: &[usize], n: usize, num_classes: usize) -> Result<()> {
    check_len(&format!("length of {array}"), n, labels.len())?;
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(StoreError::LabelOutOfRange {
            array: array.to_string(),
            row,
            label: label as i64,
            num_classes,
        });
    }
    Ok(())
}

/// Clean validation activations partitioned by class.
#[derive(Debug, Clone)]
pub struct ValidationBank {
    bundle: ActivationBundle,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
    valid_classes: BTreeSet<usize>,
}

impl ValidationBank {
    pub fn bundle(&self) -> &ActivationBundle {
        &self.bundle
    }

    /// Total number of validation samples, `|V|`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.bundle.num_layers()
    }

    pub fn num_classes(&self) -> usize {
        self.bundle.num_classes
    }

    /// Trusted label of validation row `row`.
    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Row indices of class `class`, ascending. Empty for unknown classes.
    pub fn class_rows(&self, class: usize) -> &[usize] {
        self.class_index.get(class).map_or(&[], |v| v.as_slice())
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.class_rows(class).len()
    }

    /// Classes with at least two validation samples.
    pub fn valid_classes(&self) -> &BTreeSet<usize> {
        &self.valid_classes
    }

    pub fn is_valid_class(&self, class: usize) -> bool {
        self.valid_classes.contains(&class)
    }

    /// Activation of validation row `row` at `layer`, as a contiguous slice.
    pub fn activation(&self, layer: usize, row: usize) -> &[f32] {
        let m = &self.bundle.layers[layer];
        let d = m.ncols();
        let flat = m.as_slice().expect("bank layers are standard layout");
        &flat[row * d..(row + 1) * d]
    }

    /// Classes that exist in the bank but cannot anchor a tube (fewer than two samples).
    pub fn undersized_classes(&self) -> Vec<usize> {
        (0..self.class_index.len())
            .filter(|&c| self.class_index[c].len() == 1)
            .collect()
    }
}

/// Partitions a clean bundle by its true labels.
///
/// Classes with a single sample are kept in the bank; they are simply not
/// counted among the valid classes.
pub fn build_bank(bundle: ActivationBundle) -> Result<ValidationBank> {
    bundle.validate()?;
    let labels = bundle.true_labels.clone().ok_or(StoreError::MissingTrueLabels)?;
    if labels.is_empty() {
        return Err(StoreError::EmptyBundle);
    }
    let mut class_index = vec![Vec::new(); bundle.num_classes];
    for (row, &c) in labels.iter().enumerate() {
        class_index[c].push(row);
    }
    let valid_classes: BTreeSet<usize> = class_index
        .iter()
        .enumerate()
        .filter(|(_, rows)| rows.len() >= 2)
        .map(|(c, _)| c)
        .collect();
    if valid_classes.is_empty() {
        return Err(StoreError::NoValidClass);
    }
    let mut bundle = bundle;
    // `activation` hands out row slices, so force contiguous row-major storage.
    for m in &mut bundle.layers {
        if !m.is_standard_layout() {
            *m = m.as_standard_layout().into_owned();
        }
    }
    Ok(ValidationBank {
        bundle,
        labels,
        class_index,
        valid_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFiles {
    pub activations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub magic: String,
    pub version: u32,
    pub num_layers: usize,
    pub layer_names: Vec<String>,
    pub layer_dims: Vec<usize>,
    pub num_samples: usize,
    pub num_classes: usize,
    pub has_true_labels: bool,
    pub has_predictions: bool,
    pub has_confidences: bool,
    pub files: BundleFiles,
    /// Free-form provenance written by exporters (e.g. activation stage).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl BundleManifest {
    fn for_bundle(bundle: &ActivationBundle) -> Self {
        let files = BundleFiles {
            activations: (0..bundle.num_layers()).map(|l| format!("layer_{l:03}.f32")).collect(),
            true_labels: bundle.true_labels.as_ref().map(|_| "true_labels.i64".into()),
            predicted_labels: bundle.predicted_labels.as_ref().map(|_| "predicted_labels.i64".into()),
            confidences: bundle.confidences.as_ref().map(|_| "confidences.f32".into()),
        };
        BundleManifest {
            magic: BUNDLE_MAGIC.into(),
            version: BUNDLE_VERSION,
            num_layers: bundle.num_layers(),
            layer_names: bundle.layer_names.clone(),
            layer_dims: bundle.layer_dims(),
            num_samples: bundle.num_samples(),
            num_classes: bundle.num_classes,
            has_true_labels: bundle.true_labels.is_some(),
            has_predictions: bundle.predicted_labels.is_some(),
            has_confidences: bundle.confidences.is_some(),
            files,
            attributes: BTreeMap::new(),
        }
    }

    fn check(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| StoreError::Manifest {
            path: path.to_path_buf(),
            msg,
        };
        if self.magic != BUNDLE_MAGIC {
            return Err(StoreError::Magic {
                path: path.to_path_buf(),
                found: self.magic.clone(),
                expected: BUNDLE_MAGIC,
            });
        }
        if self.version != BUNDLE_VERSION {
            return Err(StoreError::Version {
                path: path.to_path_buf(),
                found: self.version,
                expected: BUNDLE_VERSION,
            });
        }
        if self.layer_names.len() != self.num_layers
            || self.layer_dims.len() != self.num_layers
            || self.files.activations.len() != self.num_layers
        {
            return Err(bad(format!(
                "num_layers = {} but layer_names/layer_dims/files.activations have lengths {}/{}/{}",
                self.num_layers,
                self.layer_names.len(),
                self.layer_dims.len(),
                self.files.activations.len()
            )));
        }
        let flags = [
            ("true_labels", self.has_true_labels, self.files.true_labels.is_some()),
            (
                "predicted_labels",
                self.has_predictions,
                self.files.predicted_labels.is_some(),
            ),
            ("confidences", self.has_confidences, self.files.confidences.is_some()),
        ];
        for (name, flag, present) in flags {
            if flag != present {
                return Err(bad(format!("flag for {name} disagrees with files entry")));
            }
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bundle` as a `TEDA1` container under `dir`, creating it if needed.
///
/// The bundle is validated first; nothing is written for a malformed bundle.
pub fn write_bundle(bundle: &ActivationBundle, dir: &Path) -> Result<()> {
    write_bundle_with(bundle, dir, &BTreeMap::new())
}

/// Like [`write_bundle`], recording extra manifest attributes.
pub fn write_bundle_with(bundle: &ActivationBundle, dir: &Path, attributes: &BTreeMap<String, String>) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = BundleManifest::for_bundle(bundle);
    manifest.attributes = attributes.clone();

    for (m, file) in bundle.layers.iter().zip(&manifest.files.activations) {
        write_file(&dir.join(file), &f32_bytes(m))?;
    }
    if let (Some(labels), Some(file)) = (&bundle.true_labels, &manifest.files.true_labels) {
        write_file(&dir.join(file), &label_bytes(labels))?;
    }
    if let (Some(labels), Some(file)) = (&bundle.predicted_labels, &manifest.files.predicted_labels) {
        write_file(&dir.join(file), &label_bytes(labels))?;
    }
    if let (Some(conf), Some(file)) = (&bundle.confidences, &manifest.files.confidences) {
        write_file(&dir.join(file), &f32_bytes(conf))?;
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    let path = dir.join(MANIFEST_FILE);
    write_file(&path, format!("{json}\n").as_bytes())
}

/// Reads the manifest of the container at `dir` without touching the binaries.
pub fn read_manifest(dir: &Path) -> Result<BundleManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| StoreError::Manifest {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    manifest.check(&path)?;
    Ok(manifest)
}

/// Loads a `TEDA1` container. Values are returned verbatim.
pub fn load_bundle(dir: &Path) -> Result<ActivationBundle> {
    let manifest = read_manifest(dir)?;
    let n = manifest.num_samples;
    let mut layers = Vec::with_capacity(manifest.num_layers);
    for ((file, &d), name) in manifest
        .files
        .activations
        .iter()
        .zip(&manifest.layer_dims)
        .zip(&manifest.layer_names)
    {
        let path = dir.join(file);
        let data = read_f32(&path, name, n * d)?;
        let m = Array2::from_shape_vec((n, d), data).expect("length checked");
        check_finite(&format!("{} (layer {name})", path.display()), &m)?;
        layers.push(m);
    }
    let labels = |file: &Option<String>, what: &str| -> Result<Option<Vec<usize>>> {
        let Some(file) = file else { return Ok(None) };
        let path = dir.join(file);
        let raw = read_i64(&path, what, n)?;
        let mut out = Vec::with_capacity(n);
        for (row, label) in raw.into_iter().enumerate() {
            if label < 0 || label as u64 >= manifest.num_classes as u64 {
                return Err(StoreError::LabelOutOfRange {
                    array: path.display().to_string(),
                    row,
                    label,
                    num_classes: manifest.num_classes,
                });
            }
            out.push(label as usize);
        }
        Ok(Some(out))
    };
    let true_labels = labels(&manifest.files.true_labels, "true_labels")?;
    let predicted_labels = labels(&manifest.files.predicted_labels, "predicted_labels")?;
    let confidences = match &manifest.files.confidences {
        Some(file) => {
            let path = dir.join(file);
            let c = manifest.num_classes;
            let data = read_f32(&path, "confidences", n * c)?;
            Some(Array2::from_shape_vec((n, c), data).expect("length checked"))
        }
        None => None,
    };
    let bundle = ActivationBundle {
        layer_names: manifest.layer_names,
        layers,
        true_labels,
        predicted_labels,
        confidences,
        num_classes: manifest.num_classes,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn f32_bytes(m: &Array2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 4);
    // `iter` walks in logical row-major order regardless of memory layout.
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn label_bytes(labels: &[usize]) -> Vec<u8> {
    labels.iter().flat_map(|&l| (l as i64).to_le_bytes()).collect()
}

fn read_sized(path: &Path, array: &str, expected: u64) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() as u64 != expected {
        return Err(StoreError::SizeMismatch {
            path: path.to_path_buf(),
            array: array.to_string(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

pub(crate) fn read_f32(path: &Path, array: &str, count: usize) -> Result<Vec<f32>> {
    let bytes = read_sized(path, array, count as u64 * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_i64(path: &Path, array: &str, count: usize) -> Result<Vec<i64>> {
    let bytes = read_sized(path, array, count as u64 * 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn read_f64(path: &Path, array: &str, count: usize) -> Result<Vec<f64>> {
    let bytes = read_sized(path, array, count as u64 * 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn f64_bytes<'a>(values: impl IntoIterator<Item = &'a f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> ActivationBundle {
        ActivationBundle {
            layer_names: vec!["conv1".into(), "conv2".into()],
            layers: vec![
                array![[0.0, 1.0, 2.0, 3.0], [4.0, 5.0, 6.0, 7.5]],
                array![[-1.0, 0.25, 9.0], [1e-3, 2.0, -7.0]],
            ],
            true_labels: Some(vec![0, 1]),
            predicted_labels: Some(vec![0, 0]),
            confidences: Some(array![[0.9, 0.1], [0.6, 0.4]]),
            num_classes: 2,
        }
    }

    #[test]
    fn shapes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = tiny();
        write_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.layers[0].dim(), (2, 4));
        assert_eq!(back.layers[1].dim(), (2, 3));
        assert_eq!(back, b);
    }

    #[test]
    fn truncated_layer_names_the_layer() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&tiny(), dir.path()).unwrap();
        let path = dir.path().join("layer_001.f32");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match load_bundle(dir.path()).unwrap_err() {
            StoreError::SizeMismatch {
                array,
                expected,
                actual,
                ..
            } => {
                assert_eq!(array, "conv2");
                assert_eq!(expected, 24);
                assert_eq!(actual, 20);
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn empty_bundle_writes_zero_length_files() {
        let dir = tempfile::tempdir().unwrap();
        let b = ActivationBundle {
            layer_names: vec!["a".into()],
            layers: vec![Array2::zeros((0, 5))],
            true_labels: None,
            predicted_labels: Some(vec![]),
            confidences: Some(Array2::zeros((0, 3))),
            num_classes: 3,
        };
        write_bundle(&b, dir.path()).unwrap();
        assert_eq!(fs::metadata(dir.path().join("layer_000.f32")).unwrap().len(), 0);
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.num_samples(), 0);
        assert_eq!(back.layer_dims(), vec![5]);
    }

    #[test]
    fn refuses_bad_label_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut b = tiny();
        b.predicted_labels = Some(vec![0, 2]);
        let err = write_bundle(&b, &out).unwrap_err();
        assert!(matches!(err, StoreError::LabelOutOfRange { label: 2, .. }));
        assert!(!out.exists());
    }

    #[test]
    fn rejects_non_finite_on_load() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&tiny(), dir.path()).unwrap();
        let path = dir.path().join("layer_000.f32");
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_bundle(dir.path()).unwrap_err(),
            StoreError::NonFinite { row: 0, col: 1, .. }
        ));
    }

    #[test]
    fn rejects_out_of_range_label_on_load() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&tiny(), dir.path()).unwrap();
        let path = dir.path().join("true_labels.i64");
        fs::write(&path, [(-1i64).to_le_bytes(), 0i64.to_le_bytes()].concat()).unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, StoreError::LabelOutOfRange { label: -1, row: 0, .. }));
        assert!(err.to_string().contains("true_labels.i64"));
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&tiny(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("TEDA1", "TEDA9");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_bundle(dir.path()).unwrap_err(), StoreError::Magic { .. }));
    }

    #[test]
    fn confidence_rows_must_sum_to_one() {
        let mut b = tiny();
        b.confidences = Some(array![[0.9, 0.2], [0.5, 0.5]]);
        assert!(matches!(b.validate(), Err(StoreError::Confidence { row: 0, .. })));
    }

    #[test]
    fn bank_partitions_by_class() {
        let b = ActivationBundle {
            layer_names: vec!["x".into()],
            layers: vec![Array2::zeros((5, 1))],
            true_labels: Some(vec![0, 0, 1, 1, 2]),
            predicted_labels: None,
            confidences: None,
            num_classes: 3,
        };
        let bank = build_bank(b).unwrap();
        assert_eq!(bank.class_rows(0), &[0, 1]);
        assert_eq!(bank.class_rows(1), &[2, 3]);
        assert_eq!(bank.class_rows(2), &[4]);
        assert_eq!(bank.valid_classes().iter().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(bank.undersized_classes(), vec![2]);
    }

    #[test]
    fn bank_single_class() {
        let b = ActivationBundle {
            layer_names: vec!["x".into()],
            layers: vec![Array2::zeros((3, 2))],
            true_labels: Some(vec![1, 1, 1]),
            predicted_labels: None,
            confidences: None,
            num_classes: 4,
        };
        let bank = build_bank(b).unwrap();
        assert_eq!(bank.valid_classes().iter().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn bank_errors() {
        let mut b = tiny();
        b.true_labels = None;
        assert!(matches!(build_bank(b).unwrap_err(), StoreError::MissingTrueLabels));
        let empty = ActivationBundle {
            layer_names: vec!["x".into()],
            layers: vec![Array2::zeros((0, 2))],
            true_labels: Some(vec![]),
            predicted_labels: None,
            confidences: None,
            num_classes: 2,
        };
        assert!(matches!(build_bank(empty).unwrap_err(), StoreError::EmptyBundle));
    }
}
