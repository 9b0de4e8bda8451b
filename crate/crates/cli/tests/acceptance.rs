//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tubescreen::detector::{fit, score_batch, FitConfig};
use tubescreen::metrics::{auroc, evaluate, roc_curve, trapezoid_area};
use tubescreen::pca::Subspace;
use tubescreen::rank::{lar_rank, trajectory, trajectory_for};
use tubescreen::resolve::{resolve_label, resolve_prediction};
use tubescreen::store::{build_bank, ActivationBundle, ValidationBank};
use tubescreen::synth::{generate, SynthConfig};
use tubescreen::tube::{tube_radius, TubeConfig, TubeVariant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: false,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration, body: Outcome) -> Outcome {
    let detail = format!(
        "{}; {:.2}s (limit {}s)",
        body.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    if elapsed >= limit {
        return fail(detail);
    }
    Outcome {
        pass: body.pass,
        detail,
    }
}

// ---------------------------------------------------------------------------
// Random small ranking instances.

#[derive(Debug, Clone)]
struct Instance {
    layers: Vec<Vec<Vec<f32>>>,
    labels: Vec<usize>,
    num_classes: usize,
    query: Vec<Vec<f32>>,
    class: usize,
    /// beta = beta_twentieths / 20, so the oracle can take ceilings in integers.
    beta_twentieths: usize,
    variant: TubeVariant,
}

impl Instance {
    fn beta(&self) -> f64 {
        self.beta_twentieths as f64 / 20.0
    }

    fn bundle(&self) -> ActivationBundle {
        let n = self.labels.len();
        ActivationBundle {
            layer_names: (0..self.layers.len()).map(|l| format!("l{l}")).collect(),
            layers: self
                .layers
                .iter()
                .map(|rows| {
                    let d = rows[0].len();
                    Array2::from_shape_vec((n, d), rows.concat()).unwrap()
                })
                .collect(),
            true_labels: Some(self.labels.clone()),
            predicted_labels: Some(self.labels.clone()),
            confidences: None,
            num_classes: self.num_classes,
        }
    }

    fn bank(&self) -> ValidationBank {
        build_bank(self.bundle()).unwrap()
    }

    fn tube(&self) -> TubeConfig {
        TubeConfig::new(self.beta(), self.variant).unwrap()
    }
}

/// Coordinates come from a coarse integer grid half of the time so that
/// distance ties are common.
fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let num_classes = rng.random_range(1..=4usize);
    let n = rng.random_range(2..=12usize);
    let num_layers = rng.random_range(1..=3usize);
    let coarse = rng.random_bool(0.5);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    // Guarantee one class with two samples.
    labels[0] = labels[1];
    let draw = |rng: &mut ChaCha8Rng| -> f32 {
        if coarse {
            rng.random_range(-2..=2) as f32
        } else {
            rng.random_range(-4.0f32..4.0)
        }
    };
    let mut layers = Vec::new();
    let mut query = Vec::new();
    for _ in 0..num_layers {
        let d = rng.random_range(1..=4usize);
        layers.push((0..n).map(|_| (0..d).map(|_| draw(rng)).collect()).collect());
        query.push((0..d).map(|_| draw(rng)).collect());
    }
    let mut counts = vec![0usize; num_classes];
    labels.iter().for_each(|&c| counts[c] += 1);
    let valid: Vec<usize> = (0..num_classes).filter(|&c| counts[c] >= 2).collect();
    let class = valid[rng.random_range(0..valid.len())];
    Instance {
        layers,
        labels,
        num_classes,
        query,
        class,
        beta_twentieths: rng.random_range(1..=20),
        variant: if rng.random_bool(0.5) {
            TubeVariant::Pairwise
        } else {
            TubeVariant::Star
        },
    }
}

// ---------------------------------------------------------------------------
// Literal brute-force ranking oracle.

fn dist(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        s += d * d;
    }
    s.sqrt()
}

/// `(distance, row)` strictly before another in the sorted validation set.
fn before(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// The `k` class rows nearest to `z`, found by counting how many class rows
/// precede each candidate.
fn knn(rows: &[Vec<f32>], labels: &[usize], class: usize, z: &[f32], k: usize, skip: Option<usize>) -> Vec<usize> {
    let members: Vec<usize> = (0..rows.len())
        .filter(|&i| labels[i] == class && Some(i) != skip)
        .collect();
    members
        .iter()
        .copied()
        .filter(|&i| {
            let key = (dist(z, &rows[i]), i);
            members.iter().filter(|&&j| before((dist(z, &rows[j]), j), key)).count() < k
        })
        .collect()
}

fn ceil_twentieths(m: usize, t: usize) -> usize {
    (m * t).div_ceil(20)
}

fn oracle_rank(inst: &Instance, layer: usize) -> (usize, bool) {
    let rows = &inst.layers[layer];
    let labels = &inst.labels;
    let z = &inst.query[layer];
    let c = inst.class;
    let n = rows.len();
    let key = |i: usize| (dist(z, &rows[i]), i);

    // Nearest class-c validation activation.
    let vstar = (0..n)
        .filter(|&i| labels[i] == c)
        .find(|&i| {
            (0..n)
                .filter(|&j| labels[j] == c)
                .all(|j| j == i || before(key(i), key(j)))
        })
        .unwrap();
    // First same-class position in the full sorted bank.
    let base = 1 + (0..n).filter(|&j| before(key(j), key(vstar))).count();

    let tau = match inst.variant {
        TubeVariant::Pairwise => {
            let mut tau = 0.0f64;
            for class in 0..inst.num_classes {
                let m = labels.iter().filter(|&&l| l == class).count();
                if m < 2 {
                    continue;
                }
                let k = m.min(ceil_twentieths(m, inst.beta_twentieths).max(2));
                let set = knn(rows, labels, class, z, k, None);
                for &a in &set {
                    for &b in &set {
                        tau = tau.max(dist(&rows[a], &rows[b]));
                    }
                }
            }
            tau
        }
        TubeVariant::Star => {
            let m = labels.iter().filter(|&&l| l == c).count();
            let k = (m - 1).min(ceil_twentieths(m, inst.beta_twentieths).max(1));
            knn(rows, labels, c, &rows[vstar], k, Some(vstar))
                .iter()
                .map(|&j| dist(&rows[vstar], &rows[j]))
                .fold(0.0, f64::max)
        }
    };
    if dist(z, &rows[vstar]) > tau {
        (n, true)
    } else {
        (base, false)
    }
}

fn ranking_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut off_tube = 0;
    for case in 0..500 {
        let inst = random_instance(&mut rng);
        let bank = inst.bank();
        let cfg = inst.tube();
        let expected: Vec<(usize, bool)> = (0..inst.layers.len()).map(|l| oracle_rank(&inst, l)).collect();
        off_tube += expected.iter().filter(|e| e.1).count();
        for (l, &(rank, off)) in expected.iter().enumerate() {
            let got = lar_rank(&inst.query[l], l, &bank, inst.class, &cfg).unwrap();
            if (got.rank, got.off_tube) != (rank, off) {
                return fail(format!(
                    "case {case} layer {l}: lar_rank {:?}, oracle {:?}",
                    (got.rank, got.off_tube),
                    (rank, off)
                ));
            }
        }
        let t = trajectory_for(&inst.query, inst.class, &bank, &cfg).unwrap();
        // Same query through a one-sample bundle.
        let test = ActivationBundle {
            layers: inst
                .query
                .iter()
                .map(|z| Array2::from_shape_vec((1, z.len()), z.clone()).unwrap())
                .collect(),
            true_labels: None,
            predicted_labels: Some(vec![inst.class]),
            confidences: None,
            ..inst.bundle()
        };
        let t2 = trajectory(0, &test, &bank, &cfg).unwrap();
        let ranks: Vec<usize> = expected.iter().map(|e| e.0).collect();
        let mask: Vec<bool> = expected.iter().map(|e| e.1).collect();
        if t.ranks != ranks || t.off_tube != mask || t2 != t {
            return fail(format!(
                "case {case}: trajectory {:?} / {:?}, oracle {ranks:?} / {mask:?}",
                t.ranks, t.off_tube
            ));
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(10),
        pass(format!("500 instances exact ({off_tube} off-tube layers)")),
    )
}

// ---------------------------------------------------------------------------
// PCA against a dense SVD.

fn pca_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..200 {
        let l = rng.random_range(1..=6usize);
        let n = rng.random_range(2..=10usize);
        let top = n as f64;
        let data = Array2::from_shape_fn((n, l), |_| rng.random_range(1.0..=top));
        let ratio = [0.5, 0.8, 0.9, 0.95, 1.0][rng.random_range(0..5)];
        let centered = rng.random_bool(0.75);
        let model = Subspace::fit(data.view(), ratio, centered).unwrap();

        let mean: Vec<f64> = if centered {
            (0..l).map(|j| data.column(j).sum() / n as f64).collect()
        } else {
            vec![0.0; l]
        };
        let x = faer::Mat::<f64>::from_fn(n, l, |i, j| data[[i, j]] - mean[j]);
        let svd = x.svd().expect("dense SVD converges");
        let (sigma, v) = (svd.S(), svd.V());
        let mut order: Vec<usize> = (0..n.min(l)).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
        let var: Vec<f64> = order.iter().map(|&i| sigma[i] * sigma[i]).collect();
        let total: f64 = var.iter().sum();
        let cap = if centered { l.min(n - 1) } else { l.min(n) }.max(1);
        let mut k = 1;
        let mut cum = 0.0;
        for (i, v) in var.iter().enumerate() {
            cum += v;
            if cum >= ratio * total {
                k = i + 1;
                break;
            }
        }
        let k = k.clamp(1, cap);
        if model.num_components() != k {
            return fail(format!("case {case}: K = {}, oracle {k}", model.num_components()));
        }
        for _ in 0..5 {
            let t: Vec<f64> = (0..l).map(|_| rng.random_range(1.0..=top)).collect();
            let centred: Vec<f64> = t.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let norm2: f64 = centred.iter().map(|v| v * v).sum();
            // Residual taken explicitly; `norm2 - captured` cancels badly when K = L.
            let mut residual = centred.clone();
            for &i in &order[..k] {
                let p: f64 = (0..l).map(|j| v[(j, i)] * centred[j]).sum();
                for (j, r) in residual.iter_mut().enumerate() {
                    *r -= p * v[(j, i)];
                }
            }
            let expected: f64 = residual.iter().map(|r| r * r).sum();
            let got = model.reconstruction_error(Array1::from(t).view()).unwrap();
            let rel = (got - expected).abs() / expected.max(1e-9 * norm2).max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            checked += 1;
            if rel > 1e-6 {
                return fail(format!(
                    "case {case}: error {got}, oracle {expected} (relative {rel:e})"
                ));
            }
        }
    }
    pass(format!(
        "200 sets, {checked} fresh trajectories, worst relative deviation {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// AUROC against pairwise counting and the trapezoid rule.

fn auroc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(2..=80usize);
        let levels = rng.random_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let (mut wins2, mut p, mut q) = (0u64, 0u64, 0u64);
        for i in 0..n {
            if labels[i] {
                p += 1;
            } else {
                q += 1;
            }
            for j in 0..n {
                if labels[i] && !labels[j] {
                    wins2 += if scores[i] > scores[j] {
                        2
                    } else if scores[i] == scores[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        let pairwise = wins2 as f64 / (2.0 * p as f64 * q as f64);
        let a = auroc(&scores, &labels).unwrap();
        if a != pairwise {
            return fail(format!("case {case}: auroc {a}, pairwise {pairwise}"));
        }
        let trap = trapezoid_area(&roc_curve(&scores, &labels).unwrap());
        worst = worst.max((trap - a).abs());
        if (trap - a).abs() > 1e-12 {
            return fail(format!("case {case}: auroc {a}, trapezoid {trap}"));
        }
    }
    pass(format!("200 tied score sets exact; trapezoid within {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Property suite.

fn instance_strategy() -> impl Strategy<Value = Instance> {
    any::<u64>().prop_map(|seed| random_instance(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn trajectory_data() -> impl Strategy<Value = (Array2<f64>, Vec<f64>)> {
    (1usize..=6, 2usize..=12).prop_flat_map(|(l, n)| {
        (
            proptest::collection::vec(1u32..=20, n * l)
                .prop_map(move |v| Array2::from_shape_vec((n, l), v.into_iter().map(f64::from).collect()).unwrap()),
            proptest::collection::vec(1u32..=20, l).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
    })
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn invariant_suite() -> Outcome {
    let start = Instant::now();
    let mut results = Vec::new();

    results.push(run_property("rank range", instance_strategy(), |inst| {
        let bank = inst.bank();
        let t = trajectory_for(&inst.query, inst.class, &bank, &inst.tube()).unwrap();
        prop_assert!(t.ranks.iter().all(|&r| r >= 1 && r <= bank.len()));
        Ok(())
    }));

    results.push(run_property(
        "off-tube takes the worst rank",
        instance_strategy(),
        |inst| {
            let bank = inst.bank();
            let t = trajectory_for(&inst.query, inst.class, &bank, &inst.tube()).unwrap();
            for (r, off) in t.ranks.iter().zip(&t.off_tube) {
                if *off {
                    prop_assert_eq!(*r, bank.len());
                }
            }
            Ok(())
        },
    ));

    results.push(run_property(
        "radius monotone in beta",
        (instance_strategy(), 1usize..=20, 1usize..=20),
        |(inst, a, b)| {
            let bank = inst.bank();
            let (lo, hi) = (a.min(b) as f64 / 20.0, a.max(b) as f64 / 20.0);
            for l in 0..inst.layers.len() {
                let r_lo = tube_radius(
                    &inst.query[l],
                    l,
                    &bank,
                    &TubeConfig::new(lo, inst.variant).unwrap(),
                    inst.class,
                )
                .unwrap();
                let r_hi = tube_radius(
                    &inst.query[l],
                    l,
                    &bank,
                    &TubeConfig::new(hi, inst.variant).unwrap(),
                    inst.class,
                )
                .unwrap();
                prop_assert!(r_lo.value <= r_hi.value, "layer {}: {} > {}", l, r_lo.value, r_hi.value);
            }
            Ok(())
        },
    ));

    results.push(run_property(
        "layerwise scale invariance",
        (instance_strategy(), -6i32..=6, 0usize..3),
        |(inst, e, layer)| {
            let layer = layer % inst.layers.len();
            let s = 2f32.powi(e);
            let bank = inst.bank();
            let cfg = inst.tube();
            let before = trajectory_for(&inst.query, inst.class, &bank, &cfg).unwrap();
            let mut scaled = inst.clone();
            scaled.layers[layer].iter_mut().flatten().for_each(|v| *v *= s);
            scaled.query[layer].iter_mut().for_each(|v| *v *= s);
            let after = trajectory_for(&scaled.query, scaled.class, &scaled.bank(), &cfg).unwrap();
            prop_assert_eq!(before, after);
            Ok(())
        },
    ));

    results.push(run_property(
        "projector idempotence",
        (trajectory_data(), 1usize..=20),
        |((data, x), r)| {
            let model = Subspace::fit(data.view(), r as f64 / 20.0, true).unwrap();
            let once = model.reconstruct(Array1::from(x).view()).unwrap();
            let twice = model.reconstruct(once.view()).unwrap();
            let scale = once.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-9 * scale, "{} vs {}", a, b);
            }
            Ok(())
        },
    ));

    results.push(run_property(
        "error nonincreasing in K",
        trajectory_data(),
        |(data, x)| {
            let x = Array1::from(x);
            let l = data.ncols();
            let mut prev = f64::INFINITY;
            let norm2: f64 = x.iter().map(|v| v * v).sum::<f64>() + 1.0;
            for k in 1..=l {
                let e = Subspace::fit_components(data.view(), k, true)
                    .unwrap()
                    .reconstruction_error(x.view())
                    .unwrap();
                prop_assert!(e <= prev + 1e-9 * norm2, "K={}: {} > {}", k, e, prev);
                prev = e;
            }
            Ok(())
        },
    ));

    let nnlf = (
        proptest::collection::vec(0.0f32..1.0, 1..12),
        proptest::collection::btree_set(0usize..12, 1..6),
    );
    results.push(run_property(
        "label flipping closure and idempotence",
        nnlf,
        |(conf, valid)| {
            let valid: BTreeSet<usize> = valid.into_iter().filter(|&c| c < conf.len()).collect();
            if valid.is_empty() {
                return Ok(());
            }
            let first = resolve_label(&conf, &valid).unwrap();
            let y = first.resolved_label;
            prop_assert!(valid.contains(&y));
            let again = resolve_prediction(y, Some(&conf), &valid).unwrap();
            prop_assert_eq!(again.resolved_label, y);
            prop_assert!(!again.flipped);
            for original in 0..conf.len() {
                let r = resolve_prediction(original, Some(&conf), &valid).unwrap();
                prop_assert!(valid.contains(&r.resolved_label));
            }
            Ok(())
        },
    ));

    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    let body = if failures.is_empty() {
        pass("7 properties x 1000 cases")
    } else {
        fail(failures.join(" | "))
    };
    within(start.elapsed(), Duration::from_secs(60), body)
}

// ---------------------------------------------------------------------------
// Synthetic end to end.

fn run_synthetic(cfg: &SynthConfig) -> (f64, f64) {
    let data = generate(cfg).unwrap();
    let bank = build_bank(data.validation).unwrap();
    let model = fit(&bank, &FitConfig::default()).unwrap();
    let reports = score_batch(&model, &data.test, &bank).unwrap();
    let scored: Vec<_> = reports.into_iter().map(|r| r.outcome.unwrap()).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.error).collect();
    let flags: Vec<bool> = scored.iter().map(|s| s.flagged).collect();
    let e = evaluate(&scores, &flags, &data.is_poisoned).unwrap();
    (e.auroc, e.f1_at_theta)
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let base = SynthConfig::default();
    let (auc, f1) = run_synthetic(&base);
    let (auc_m2, _) = run_synthetic(&SynthConfig {
        per_class: 2,
        ..base.clone()
    });
    let (auc_rho, _) = run_synthetic(&SynthConfig {
        missing_fraction: 0.4,
        ..base.clone()
    });
    let (auc_null, _) = run_synthetic(&base.clone().null());
    let checks = [
        (auc >= 0.95, format!("AUROC {auc:.4} >= 0.95")),
        (f1 >= 0.90, format!("F1 {f1:.4} >= 0.90")),
        (auc_m2 >= 0.85, format!("m=2 AUROC {auc_m2:.4} >= 0.85")),
        (
            auc - auc_rho <= 0.10,
            format!("rho=0.4 AUROC {auc_rho:.4}, drop {:.4} <= 0.10", auc - auc_rho),
        ),
        (
            (0.4..=0.6).contains(&auc_null),
            format!("null AUROC {auc_null:.4} in [0.4, 0.6]"),
        ),
    ];
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, s)| format!("{}{s}", if *ok { "" } else { "NOT " }))
        .collect();
    let body = Outcome {
        pass: checks.iter().all(|c| c.0),
        detail: detail.join("; "),
    };
    within(start.elapsed(), Duration::from_secs(300), body)
}

// ---------------------------------------------------------------------------
// Determinism through the binary.

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tubescreen"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    run_cli(&["gen", "--out", &p("data"), "--seed", "0"])?;
    run_cli(&["fit", "--validation", &p("data/validation"), "--out", &p("model")])?;
    run_cli(&[
        "score",
        "--model",
        &p("model"),
        "--test",
        &p("data/test"),
        "--out",
        &p("scores.csv"),
    ])?;
    run_cli(&[
        "eval",
        "--scores",
        &p("scores.csv"),
        "--truth",
        &p("data/ground_truth.csv"),
        "--out",
        &p("metrics.csv"),
    ])
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        if let Err(e) = pipeline(dir) {
            return fail(e);
        }
    }
    for file in ["data/ground_truth.csv", "scores.csv", "metrics.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        if x != y {
            return fail(format!("{file} differs between runs"));
        }
    }
    pass("ground_truth.csv, scores.csv, metrics.csv byte-identical across two runs")
}

// ---------------------------------------------------------------------------
// Throughput.

fn throughput() -> Outcome {
    let cfg = SynthConfig {
        n_clean: 500,
        n_poisoned: 500,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let bank = build_bank(data.validation).unwrap();
    let model = fit(&bank, &FitConfig::default()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let reports = pool.install(|| score_batch(&model, &data.test, &bank).unwrap());
    let elapsed = start.elapsed();
    let body = if reports.len() == 1000 && bank.len() == 50 {
        pass("1000 samples, L=12, |V|=50, d=32, one thread")
    } else {
        fail(format!("scored {} samples against |V|={}", reports.len(), bank.len()))
    };
    within(elapsed, Duration::from_secs(2), body)
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        ("oracle-ranking", ranking_oracle),
        ("oracle-pca", pca_oracle),
        ("oracle-auroc", auroc_oracle),
        ("invariant-suite", invariant_suite),
        ("synthetic-end-to-end", synthetic_end_to_end),
        ("determinism", determinism),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            fail(format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
