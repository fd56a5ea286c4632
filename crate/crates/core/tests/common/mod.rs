//! Property checks and oracles shared by the property suite and the
//! acceptance runner.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asap_lab::data::{parse_idx, split_pool, IdxTensor, LabeledPool};
use asap_lab::estimator::{unsupervised_risk_grad, RiskWeights};
use asap_lab::linalg::{cosine_distance, is_on_simplex, project_simplex};
use asap_lab::methods::{run_method, AdaptationContext, MethodConfig};
use asap_lab::model::{loss_and_grad, ModelParams};
use asap_lab::shift::{interpolate, sample_batch, LabelDistribution};

pub const CASES: u32 = 1000;

pub fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg.into()))
    }
}

// ---- simplex projection ----

pub fn any_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..12)
}

pub fn simplex_projection(v: Vec<f64>) -> Result<(), TestCaseError> {
    let p = project_simplex(&v).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check(is_on_simplex(&p, 1e-9), format!("{p:?} not on simplex"))?;
    let again = project_simplex(&p).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let gap = p
        .iter()
        .zip(&again)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        gap <= 1e-12,
        format!("projection not idempotent: gap {gap}"),
    )?;
    // no feasible point is closer: compare against the vertices and the centroid
    let dist = |q: &[f64]| v.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let best = dist(&p);
    let n = v.len();
    let mut candidates: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    candidates.push(vec![1.0 / n as f64; n]);
    for q in candidates {
        check(
            best <= dist(&q) + 1e-9,
            "a simplex point is closer than the projection",
        )?;
    }
    Ok(())
}

// ---- cosine distance ----

pub fn vector_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0.0f64..1.0, n),
            1e-3f64..1e3,
        )
    })
}

pub fn cosine_properties(
    (mut a, mut b, k): (Vec<f64>, Vec<f64>, f64),
) -> Result<(), TestCaseError> {
    a[0] += 1e-3;
    b[0] += 1e-3;
    let d = cosine_distance(&a, &b).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check(
        (0.0..=1.0).contains(&d),
        format!("distance {d} outside [0, 1]"),
    )?;
    let rev = cosine_distance(&b, &a).unwrap();
    check((d - rev).abs() <= 1e-15, "not symmetric")?;
    let scaled: Vec<f64> = a.iter().map(|v| v * k).collect();
    let ds = cosine_distance(&scaled, &b).unwrap();
    check(
        (d - ds).abs() <= 1e-12,
        format!("scale changed distance: {d} vs {ds}"),
    )?;
    check(
        cosine_distance(&a, &a).unwrap() <= 1e-12,
        "self distance not zero",
    )
}

// ---- IDX ----

pub fn idx_tensor() -> impl Strategy<Value = IdxTensor> {
    prop::collection::vec(1usize..5, 1..4).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(any::<u8>(), n).prop_map(move |data| IdxTensor {
            dims: dims.clone(),
            data,
        })
    })
}

pub fn idx_round_trip(t: IdxTensor) -> Result<(), TestCaseError> {
    let back = parse_idx(&t.to_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check(back == t, "round trip changed the tensor")
}

// ---- split ----

pub fn split_case() -> impl Strategy<Value = (usize, Vec<usize>, f64, u64)> {
    (2usize..5, 0.05f64..0.95, any::<u64>()).prop_flat_map(|(c, f, s)| {
        (
            Just(c),
            prop::collection::vec(2usize..12, c),
            Just(f),
            Just(s),
        )
    })
}

fn small_pool(counts: &[usize], dim: usize, seed: u64) -> LabeledPool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            inputs.push((0..dim).map(|_| rng.random::<f64>() + c as f64).collect());
            labels.push(c);
        }
    }
    LabeledPool::new(inputs, labels, counts.len()).unwrap()
}

pub fn split_reconstitutes(
    (classes, counts, frac, seed): (usize, Vec<usize>, f64, u64),
) -> Result<(), TestCaseError> {
    let pool = small_pool(&counts, 3, seed);
    let (train, hold) =
        split_pool(&pool, frac, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check(train.len() + hold.len() == pool.len(), "rows lost")?;
    let key = |p: &LabeledPool| {
        let mut rows: Vec<(usize, Vec<u64>)> = p
            .inputs()
            .iter()
            .zip(p.labels())
            .map(|(x, &y)| (y, x.iter().map(|v| v.to_bits()).collect()))
            .collect();
        rows.sort();
        rows
    };
    let mut joined = key(&train);
    joined.extend(key(&hold));
    joined.sort();
    check(
        joined == key(&pool),
        "train + holdout differs from the pool",
    )?;
    check(counts.len() == classes, "class count mismatch")?;
    for (c, &n) in counts.iter().enumerate() {
        let (nt, nh) = (train.class_counts()[c], hold.class_counts()[c]);
        check(nt >= 1 && nh >= 1, format!("class {c} missing on one side"))?;
        let want = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        check(
            nh == want,
            format!("class {c}: holdout {nh}, expected {want}"),
        )?;
    }
    Ok(())
}

// ---- interpolation ----

pub fn interpolation_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, n),
            0.0f64..=1.0,
        )
    })
}

pub fn interpolation_on_simplex(
    (w0, wt, a): (Vec<f64>, Vec<f64>, f64),
) -> Result<(), TestCaseError> {
    let p0 = LabelDistribution::from_weights(&w0).unwrap();
    let pt = LabelDistribution::from_weights(&wt).unwrap();
    let p = interpolate(&p0, &pt, a).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check(
        is_on_simplex(p.as_slice(), 1e-9),
        format!("{:?} off the simplex", p.as_slice()),
    )?;
    let exact = interpolate(&p0, &pt, 0.0).unwrap();
    check(exact.l1_distance(&p0) <= 1e-12, "a = 0 is not the start")
}

// ---- predict then update ----

pub fn first_step_case() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..5, 2usize..6, any::<u64>())
}

/// Every method scores batch 1 with the untouched model.
pub fn first_step_is_frozen(
    (classes, dim, seed): (usize, usize, u64),
) -> Result<(), TestCaseError> {
    let pool = small_pool(&vec![6; classes], dim, seed);
    let params = ModelParams::init(classes, dim, seed);
    let ctx = AdaptationContext::new(
        &params,
        &pool,
        LabelDistribution::uniform(classes),
        8,
        seed,
        Some(1e-3),
    )
    .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let p = LabelDistribution::uniform(classes);
    let stream: Vec<_> = (1..=2)
        .map(|t| sample_batch(&pool, &p, 8, seed, t).unwrap())
        .collect();
    let frozen = params
        .accuracy(&stream[0].inputs, &stream[0].true_labels)
        .unwrap();
    let methods = [
        MethodConfig::Asap {
            eta_min: 0.5,
            eta_max: 5.0,
        },
        MethodConfig::Uogd { eta: 5.0 },
        MethodConfig::Atlas {
            eta_grid: vec![0.5, 5.0],
            meta_rate: 1.0,
        },
        MethodConfig::Fth,
        MethodConfig::Ftfwh { window: 1 },
    ];
    for m in &methods {
        let records = run_method(m, params.clone(), &ctx, &stream)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        check(
            records[0].accuracy == frozen,
            format!(
                "{}: t=1 accuracy {} vs frozen {frozen}",
                m.label(),
                records[0].accuracy
            ),
        )?;
    }
    Ok(())
}

// ---- gradients ----

/// Worst relative error (absolute below 1e-8) between analytic and central
/// finite-difference gradients over `instances` random problems with at most
/// 5 classes and 8 features.
pub fn gradient_check(instances: u64) -> (f64, f64) {
    let h = 1e-5;
    let (mut worst_ce, mut worst_risk) = (0.0f64, 0.0f64);
    for i in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let classes = rng.random_range(2..=5);
        let dim = rng.random_range(1..=8);
        let pool = small_pool(&vec![rng.random_range(2..6); classes], dim, i);
        let mut params = ModelParams::init(classes, dim, i);
        let flat: Vec<f64> = params
            .flatten()
            .iter()
            .map(|v| v + rng.random_range(-0.5..0.5))
            .collect();
        params = ModelParams::from_flat(classes, dim, &flat).unwrap();
        let sample_w: Vec<f64> = (0..pool.len())
            .map(|_| rng.random_range(0.1..2.0))
            .collect();
        let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.0..1.0)).collect();
        let weights = RiskWeights(LabelDistribution::from_weights(&raw).unwrap());

        let ce =
            |p: &ModelParams| loss_and_grad(p, pool.inputs(), pool.labels(), &sample_w).unwrap();
        let risk = |p: &ModelParams| unsupervised_risk_grad(p, &pool, &weights).unwrap();
        worst_ce = worst_ce.max(compare(&params, h, |p| ce(p).0, &ce(&params).1));
        worst_risk = worst_risk.max(compare(&params, h, |p| risk(p).0, &risk(&params).1));
    }
    (worst_ce, worst_risk)
}

fn compare(
    params: &ModelParams,
    h: f64,
    f: impl Fn(&ModelParams) -> f64,
    grad: &ModelParams,
) -> f64 {
    let (c, d) = (params.num_classes(), params.dim());
    let flat = params.flatten();
    let analytic = grad.flatten();
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let numeric = (f(&ModelParams::from_flat(c, d, &plus).unwrap())
            - f(&ModelParams::from_flat(c, d, &minus).unwrap()))
            / (2.0 * h);
        let diff = (numeric - analytic[i]).abs();
        let scale = numeric.abs().max(analytic[i].abs());
        worst = worst.max(if scale < 1e-8 { diff } else { diff / scale });
    }
    worst
}
