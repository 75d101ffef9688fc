//! Attention UNet, the two-stage pipeline, the mask autoencoder and their
//! training loop.

mod aunet;
mod autoencoder;
mod pipeline;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{
    Adam, AdamConfig, Graph, NetworkWeights, NnError, NodeId, ParamStore, Scalar, Tensor,
};
use crate::texture::TextureError;

pub use aunet::AUNetSpec;
pub use autoencoder::AutoencoderSpec;
pub use pipeline::{
    image_tensor, mask_tensor, prob_to_mask, train_pipeline, Inference, InputMode, Pipeline,
    PipelineReport, PipelineSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegnetError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error("invalid network spec: {0}")]
    Spec(&'static str),
    #[error("input is {got_h}x{got_w} but the network expects {want_h}x{want_w}")]
    InputSize {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("input has {got} channels but the network expects {want}")]
    InputChannels { got: usize, want: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {0} does not match the shape of sample 0")]
    SampleShape(usize),
    #[error("threshold {0} is outside (0, 1)")]
    Threshold(f32),
}

/// A network that maps an `(N, C, H, W)` input to an output of the same batch size.
pub trait Network {
    /// `(channels, height, width)` of one input item.
    fn input_dims(&self) -> (usize, usize, usize);

    /// Fresh weights drawn from `seed`.
    fn init(&self, seed: u64) -> Result<NetworkWeights, SegnetError>;

    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, NnError>;

    fn check_input(&self, dims: [usize; 4]) -> Result<(), SegnetError> {
        let (c, h, w) = self.input_dims();
        if dims[2] != h || dims[3] != w {
            return Err(SegnetError::InputSize {
                got_h: dims[2],
                got_w: dims[3],
                want_h: h,
                want_w: w,
            });
        }
        if dims[1] != c {
            return Err(SegnetError::InputChannels {
                got: dims[1],
                want: c,
            });
        }
        Ok(())
    }
}

/// Runs a forward pass without recording gradients.
pub fn predict<N: Network>(
    net: &N,
    weights: &NetworkWeights,
    x: &Tensor<f32>,
) -> Result<Tensor<f32>, SegnetError> {
    net.check_input(x.dims())?;
    let mut g = Graph::new();
    let xi = g.input(x.clone())?;
    let y = net.forward(&mut g, weights, xi)?;
    Ok(g.value(y).clone())
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `lambda * BCE + (1 - lambda) * (1 - softDice)`.
    BceDice {
        lambda: f64,
    },
    Mse,
}

impl Objective {
    pub fn apply<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        pred: NodeId,
        target: &Tensor<T>,
    ) -> Result<NodeId, NnError> {
        match *self {
            Objective::BceDice { lambda } => g.bce_dice(pred, target, lambda),
            Objective::Mse => g.mse(pred, target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch: 4,
            seed: 0,
            objective: Objective::BceDice { lambda: 0.5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub losses: Vec<f64>,
    /// Running minimum of `losses`.
    pub smoothed: Vec<f64>,
}

/// Mini-batch Adam over `(input, target)` pairs of shape `(1, C, H, W)`.
/// The sample order is reshuffled every epoch from `config.seed`.
pub fn train<N: Network>(
    net: &N,
    weights: &mut NetworkWeights,
    data: &[(Tensor<f32>, Tensor<f32>)],
    config: &TrainConfig,
) -> Result<TrainReport, SegnetError> {
    let first = data.first().ok_or(SegnetError::EmptyDataset)?;
    for (i, (x, y)) in data.iter().enumerate() {
        if x.dims() != first.0.dims() || y.dims() != first.1.dims() || x.dims()[0] != 1 {
            return Err(SegnetError::SampleShape(i));
        }
    }
    net.check_input(first.0.dims())?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        weights,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = config.batch.max(1);
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let bad = || SegnetError::NonFiniteLoss { epoch, batch: b };
            let xs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &data[i].0).collect();
            let ys: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &data[i].1).collect();
            let x = Tensor::stack(&xs)?;
            let y = Tensor::stack(&ys)?;
            let mut g = Graph::new();
            let xi = g.input(x)?;
            let pred = net.forward(&mut g, weights, xi).map_err(|e| match e {
                NnError::NonFinite { .. } => bad(),
                e => e.into(),
            })?;
            let loss = config
                .objective
                .apply(&mut g, pred, &y)
                .map_err(|e| match e {
                    NnError::NonFinite { .. } => bad(),
                    e => e.into(),
                })?;
            let value = f64::from(g.value(loss).value());
            if !value.is_finite() {
                return Err(bad());
            }
            let grads = g.backward(loss)?.for_params(&g, weights);
            adam.step(weights, &grads)?;
            total += value;
            batches += 1;
        }
        let mean = total / batches as f64;
        let best = report.smoothed.last().map_or(mean, |&m: &f64| m.min(mean));
        log::debug!("epoch {epoch}: loss {mean:.6} (best {best:.6})");
        report.losses.push(mean);
        report.smoothed.push(best);
    }
    Ok(report)
}
