//! Named layer blocks over a [`ParamStore`].
//!
//! A layer called `name` owns the parameters `name.w` and, when present,
//! `name.b`. `init_*` functions declare them; the matching graph functions
//! bind them.

use alloc::format;

use rand_chacha::ChaCha8Rng;

use super::{he_uniform, Graph, NnError, NodeId, Padding, ParamStore, Scalar, Tensor};

/// Declares a `k x k` convolution `cin -> cout` with a zero bias.
pub fn init_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
) -> Result<(), NnError> {
    store.insert(
        &format!("{name}.w"),
        he_uniform(rng, [cout, cin, k, k], cin * k * k),
    )?;
    store.insert(&format!("{name}.b"), Tensor::zeros([1, cout, 1, 1]))
}

/// Declares a 2x2 stride-2 transposed convolution `cin -> cout` with a zero bias.
pub fn init_conv_t<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    cin: usize,
    cout: usize,
) -> Result<(), NnError> {
    store.insert(
        &format!("{name}.w"),
        he_uniform(rng, [cin, cout, 2, 2], cin),
    )?;
    store.insert(&format!("{name}.b"), Tensor::zeros([1, cout, 1, 1]))
}

fn bias<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    name: &str,
) -> Result<Option<NodeId>, NnError> {
    let key = format!("{name}.b");
    if store.index_of(&key).is_some() {
        g.param(store, &key).map(Some)
    } else {
        Ok(None)
    }
}

pub fn conv<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    name: &str,
    x: NodeId,
    stride: usize,
    padding: Padding,
) -> Result<NodeId, NnError> {
    let w = g.param(store, &format!("{name}.w"))?;
    let b = bias(g, store, name)?;
    g.conv2d(x, w, b, stride, padding)
}

/// Same-padded 3x3 convolution followed by ReLU.
pub fn conv3_relu<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    name: &str,
    x: NodeId,
) -> Result<NodeId, NnError> {
    let y = conv(g, store, name, x, 1, Padding::Same)?;
    g.relu(y)
}

pub fn conv_t<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    name: &str,
    x: NodeId,
) -> Result<NodeId, NnError> {
    let w = g.param(store, &format!("{name}.w"))?;
    let b = bias(g, store, name)?;
    g.conv_transpose2(x, w, b)
}

/// Declares the three 1x1 convolutions of an attention gate:
/// `name.theta` on the skip path, `name.phi` on the gating path and `name.psi`
/// producing the single-channel coefficient map.
pub fn init_attention_gate<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    skip_channels: usize,
    gate_channels: usize,
    inter: usize,
) -> Result<(), NnError> {
    init_conv(
        store,
        rng,
        &format!("{name}.theta"),
        skip_channels,
        inter,
        1,
    )?;
    init_conv(store, rng, &format!("{name}.phi"), gate_channels, inter, 1)?;
    init_conv(store, rng, &format!("{name}.psi"), inter, 1, 1)
}

/// Additive attention: `skip * up(sigmoid(psi(relu(theta(skip) + phi(gate)))))`.
///
/// `theta` has stride 2, so the coefficients are computed at the gating
/// resolution and upsampled by nearest neighbor. Returns the gated skip and
/// the coefficient map at skip resolution.
pub fn attention_gate<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    name: &str,
    skip: NodeId,
    gate: NodeId,
) -> Result<(NodeId, NodeId), NnError> {
    let theta = conv(g, store, &format!("{name}.theta"), skip, 2, Padding::Valid)?;
    let phi = conv(g, store, &format!("{name}.phi"), gate, 1, Padding::Valid)?;
    let sum = g.add(theta, phi)?;
    let act = g.relu(sum)?;
    let psi = conv(g, store, &format!("{name}.psi"), act, 1, Padding::Valid)?;
    let coarse = g.sigmoid(psi)?;
    let alpha = g.upsample2(coarse)?;
    let out = g.gate(skip, alpha)?;
    Ok((out, alpha))
}
