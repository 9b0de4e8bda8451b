use ndarray::Array2;

use crate::store::{build_bank, ActivationBundle, ValidationBank};

/// One-layer bank of scalar activations.
pub(crate) fn scalar_bank(points: &[(f32, usize)], num_classes: usize) -> ValidationBank {
    let values: Vec<f32> = points.iter().map(|p| p.0).collect();
    let labels: Vec<usize> = points.iter().map(|p| p.1).collect();
    build_bank(ActivationBundle {
        layer_names: vec!["l0".into()],
        layers: vec![Array2::from_shape_vec((values.len(), 1), values).unwrap()],
        true_labels: Some(labels.clone()),
        predicted_labels: Some(labels),
        confidences: None,
        num_classes,
    })
    .unwrap()
}

/// V_0 = {0.0, 1.0}, V_1 = {10.0, 11.0}.
pub(crate) fn s1_bank() -> ValidationBank {
    scalar_bank(&[(0.0, 0), (1.0, 0), (10.0, 1), (11.0, 1)], 2)
}

/// S1 replicated over `layers` layers, plus the bundle it was built from.
pub(crate) fn replicated_s1(layers: usize) -> (ValidationBank, ActivationBundle) {
    let col = Array2::from_shape_vec((4, 1), vec![0.0f32, 1.0, 10.0, 11.0]).unwrap();
    let bundle = ActivationBundle {
        layer_names: (0..layers).map(|l| format!("l{l}")).collect(),
        layers: vec![col; layers],
        true_labels: Some(vec![0, 0, 1, 1]),
        predicted_labels: Some(vec![0, 0, 1, 1]),
        confidences: None,
        num_classes: 2,
    };
    (build_bank(bundle.clone()).unwrap(), bundle)
}
