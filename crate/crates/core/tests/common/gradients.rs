//! Central finite-difference checks of every layer, the loss and the toy network.

use liplab_core::nn::layers::{attention_gate, init_attention_gate};
use liplab_core::nn::{
    grad_check, GradCheckReport, Graph, NnError, NodeId, Padding, ParamStore, Tensor,
};
use liplab_core::segnet::{AUNetSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ensure;

pub const EPS: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn random(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero, for inputs that feed a ReLU directly.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    let mut t = random(rng, dims);
    for v in t.data_mut() {
        while v.abs() < 1e-2 {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    t
}

/// Scalar readout `sum(y * r)` with a fixed random `r`.
fn readout(g: &mut Graph<f64>, y: NodeId, seed: u64) -> Result<NodeId, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r = g.input(random(&mut rng, g.value(y).dims()))?;
    g.dot(y, r)
}

fn check_with<F>(
    store: &ParamStore<f64>,
    max_coords: usize,
    build: F,
) -> Result<GradCheckReport, String>
where
    F: Fn(&ParamStore<f64>) -> Result<(Graph<f64>, NodeId), NnError>,
{
    let report = grad_check(store, build, EPS, TOL, max_coords).map_err(|e| e.to_string())?;
    ensure(report.passed(), || {
        format!(
            "max relative error {:e}: {report:#?}",
            report.max_rel_error()
        )
    })?;
    Ok(report)
}

fn check<F>(store: &ParamStore<f64>, build: F) -> Result<GradCheckReport, String>
where
    F: Fn(&ParamStore<f64>) -> Result<(Graph<f64>, NodeId), NnError>,
{
    check_with(store, 0, build)
}

pub fn conv2d(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", random(&mut rng, [2, 3, 6, 6])).unwrap();
    s.insert("w", random(&mut rng, [4, 3, 3, 3])).unwrap();
    s.insert("b", random(&mut rng, [1, 4, 1, 1])).unwrap();
    let mut worst: f64 = 0.0;
    for (stride, padding) in [(1, Padding::Same), (2, Padding::Valid), (1, Padding::Valid)] {
        let r = check(&s, |p| {
            let mut g = Graph::new();
            let (x, w, b) = (g.param(p, "x")?, g.param(p, "w")?, g.param(p, "b")?);
            let y = g.conv2d(x, w, Some(b), stride, padding)?;
            let l = readout(&mut g, y, seed)?;
            Ok((g, l))
        })?;
        worst = worst.max(r.max_rel_error());
    }
    Ok(worst)
}

pub fn conv2d_pointwise(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", random(&mut rng, [2, 3, 4, 4])).unwrap();
    s.insert("w", random(&mut rng, [2, 3, 1, 1])).unwrap();
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let (x, w) = (g.param(p, "x")?, g.param(p, "w")?);
        let y = g.conv2d(x, w, None, 1, Padding::Valid)?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    Ok(r.max_rel_error())
}

pub fn conv_transpose(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", random(&mut rng, [2, 3, 3, 4])).unwrap();
    s.insert("w", random(&mut rng, [3, 2, 2, 2])).unwrap();
    s.insert("b", random(&mut rng, [1, 2, 1, 1])).unwrap();
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let (x, w, b) = (g.param(p, "x")?, g.param(p, "w")?, g.param(p, "b")?);
        let y = g.conv_transpose2(x, w, Some(b))?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    Ok(r.max_rel_error())
}

pub fn maxpool(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", random(&mut rng, [2, 2, 6, 6])).unwrap();
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let x = g.param(p, "x")?;
        let y = g.maxpool2(x)?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    let seen = r.params[0].checked + r.params[0].skipped_kinks;
    ensure(seen == 144, || format!("{seen} of 144 coordinates visited"))?;
    Ok(r.max_rel_error())
}

pub fn upsample_and_concat(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("a", random(&mut rng, [2, 2, 3, 3])).unwrap();
    s.insert("b", random(&mut rng, [2, 3, 6, 6])).unwrap();
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
        let up = g.upsample2(a)?;
        let y = g.concat(up, b)?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    Ok(r.max_rel_error())
}

pub fn relu_and_sigmoid(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", away_from_zero(&mut rng, [2, 2, 4, 4]))
        .unwrap();
    s.insert("z", random(&mut rng, [2, 2, 4, 4])).unwrap();
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let (x, z) = (g.param(p, "x")?, g.param(p, "z")?);
        let a = g.relu(x)?;
        let b = g.sigmoid(z)?;
        let y = g.add(a, b)?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    ensure(r.params.iter().all(|p| p.skipped_kinks == 0), || {
        "coordinates stuck on kinks".into()
    })?;
    Ok(r.max_rel_error())
}

pub fn gate_broadcast(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", random(&mut rng, [2, 3, 4, 4])).unwrap();
    s.insert("a", random(&mut rng, [2, 1, 4, 4])).unwrap();
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let (x, a) = (g.param(p, "x")?, g.param(p, "a")?);
        let y = g.gate(x, a)?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    Ok(r.max_rel_error())
}

pub fn attention_gate_weights(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    init_attention_gate(&mut s, &mut rng, "att", 8, 16, 4).unwrap();
    // Nonzero biases so every bias gradient is exercised.
    for name in ["att.theta.b", "att.phi.b", "att.psi.b"] {
        let dims = s.get(name).unwrap().dims();
        s.set(name, random(&mut rng, dims)).unwrap();
    }
    s.insert("skip", random(&mut rng, [1, 8, 16, 16])).unwrap();
    s.insert("gate", random(&mut rng, [1, 16, 8, 8])).unwrap();
    let r = check_with(&s, 24, |p| {
        let mut g = Graph::new();
        let (skip, gate) = (g.param(p, "skip")?, g.param(p, "gate")?);
        let (y, _) = attention_gate(&mut g, p, "att", skip, gate)?;
        let l = readout(&mut g, y, seed)?;
        Ok((g, l))
    })?;
    Ok(r.max_rel_error())
}

pub fn bce_dice_loss(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("z", random(&mut rng, [2, 1, 5, 5])).unwrap();
    let target = Tensor::from_vec(
        [2, 1, 5, 5],
        (0..50)
            .map(|_| f64::from(rng.random_range(0..2u8)))
            .collect(),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.5, 1.0] {
        let r = check(&s, |p| {
            let mut g = Graph::new();
            let z = g.param(p, "z")?;
            let pred = g.sigmoid(z)?;
            let l = g.bce_dice(pred, &target, lambda)?;
            Ok((g, l))
        })?;
        worst = worst.max(r.max_rel_error());
    }
    Ok(worst)
}

pub fn mse_loss(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert("x", random(&mut rng, [1, 2, 3, 3])).unwrap();
    let target = random(&mut rng, [1, 2, 3, 3]);
    let r = check(&s, |p| {
        let mut g = Graph::new();
        let x = g.param(p, "x")?;
        let l = g.mse(x, &target)?;
        Ok((g, l))
    })?;
    Ok(r.max_rel_error())
}

/// Toy attention UNet on a 16x16 input, BCE + Dice loss, 8 coordinates per parameter.
pub fn full_toy_aunet(seed: u64) -> Result<f64, String> {
    let spec = AUNetSpec {
        in_channels: 5,
        widths: [8, 16, 32, 64],
        input_size: (16, 16),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = spec.init(seed).unwrap().cast::<f64>();
    // Small random biases move pre-activations off exact zeros.
    let names: Vec<String> = store
        .iter()
        .filter(|(n, _)| n.ends_with(".b"))
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let dims = store.get(&name).unwrap().dims();
        let mut b = random(&mut rng, dims);
        b.data_mut().iter_mut().for_each(|v| *v *= 0.1);
        store.set(&name, b).unwrap();
    }
    let x = Tensor::from_vec(
        [2, 5, 16, 16],
        (0..2 * 5 * 256)
            .map(|_| rng.random_range(0.0..1.0))
            .collect(),
    )
    .unwrap();
    let target = Tensor::from_vec(
        [2, 1, 16, 16],
        (0..512).map(|i| f64::from(u8::from(i % 7 < 3))).collect(),
    )
    .unwrap();
    let r = check_with(&store, 8, |p| {
        let mut g = Graph::new();
        let xi = g.input(x.clone())?;
        let y = spec.forward(&mut g, p, xi)?;
        let l = g.bce_dice(y, &target, 0.5)?;
        Ok((g, l))
    })?;
    let skipped: usize = r.params.iter().map(|p| p.skipped_kinks).sum();
    ensure(skipped == 0, || {
        format!("{skipped} coordinates stuck on kinks")
    })?;
    Ok(r.max_rel_error())
}

pub type Case = (&'static str, fn(u64) -> Result<f64, String>);

pub const CASES: [Case; 11] = [
    ("conv2d", conv2d),
    ("conv2d 1x1", conv2d_pointwise),
    ("conv_transpose2", conv_transpose),
    ("maxpool2", maxpool),
    ("upsample2 + concat", upsample_and_concat),
    ("relu + sigmoid", relu_and_sigmoid),
    ("gate", gate_broadcast),
    ("attention_gate", attention_gate_weights),
    ("bce_dice", bce_dice_loss),
    ("mse", mse_loss),
    ("toy AUNet", full_toy_aunet),
];

/// Runs one case for every seed; returns the worst relative error.
pub fn run_seeds(case: fn(u64) -> Result<f64, String>) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in SEEDS {
        worst = worst.max(case(seed).map_err(|e| format!("seed {seed}: {e}"))?);
    }
    Ok(worst)
}
