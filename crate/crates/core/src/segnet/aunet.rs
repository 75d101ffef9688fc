use alloc::format;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Network, SegnetError};
use crate::nn::layers::{
    attention_gate, conv, conv3_relu, conv_t, init_attention_gate, init_conv, init_conv_t,
};
use crate::nn::{Graph, NetworkWeights, NnError, NodeId, Padding, ParamStore, Scalar};

/// Four-level attention UNet producing one sigmoid channel.
///
/// Encoder level `k` is a 3x3 conv to `widths[k]` + ReLU followed by 2x2 max
/// pooling. The bottleneck is a 3x3 conv at `widths[3]`. Decoder level `k`
/// upsamples with a transposed conv to `widths[k]`, gates the matching encoder
/// output with an attention block, concatenates both and applies a 3x3 conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AUNetSpec {
    pub in_channels: usize,
    pub widths: [usize; 4],
    pub input_size: (usize, usize),
}

impl AUNetSpec {
    /// 64x64 inputs, widths 8/16/32/64.
    pub fn toy(in_channels: usize) -> Self {
        Self {
            in_channels,
            widths: [8, 16, 32, 64],
            input_size: (64, 64),
        }
    }

    /// 256x256 inputs, widths 64/128/256/512.
    pub fn full(in_channels: usize) -> Self {
        Self {
            in_channels,
            widths: [64, 128, 256, 512],
            input_size: (256, 256),
        }
    }

    pub fn validate(&self) -> Result<(), SegnetError> {
        if self.in_channels == 0 {
            return Err(SegnetError::Spec("in_channels must be positive"));
        }
        if self.widths[0] == 0 || self.widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SegnetError::Spec(
                "widths must be positive and strictly increasing",
            ));
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(SegnetError::Spec(
                "input size must be a positive multiple of 16",
            ));
        }
        Ok(())
    }

    fn inter(width: usize) -> usize {
        (width / 2).max(1)
    }

    /// Closed-form number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
        let w = self.widths;
        let mut total = 0;
        let mut cin = self.in_channels;
        for &wk in &w {
            total += conv(cin, wk, 3);
            cin = wk;
        }
        total += conv(w[3], w[3], 3);
        let mut below = w[3];
        for &wk in w.iter().rev() {
            let i = Self::inter(wk);
            total += conv(below, wk, 2); // transposed conv
            total += conv(wk, i, 1) + conv(below, i, 1) + conv(i, 1, 1); // attention gate
            total += conv(2 * wk, wk, 3);
            below = wk;
        }
        total + conv(w[0], 1, 1)
    }
}

impl Network for AUNetSpec {
    fn input_dims(&self) -> (usize, usize, usize) {
        (self.in_channels, self.input_size.0, self.input_size.1)
    }

    fn init(&self, seed: u64) -> Result<NetworkWeights, SegnetError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(seed);
        let w = self.widths;
        let mut cin = self.in_channels;
        for (k, &wk) in w.iter().enumerate() {
            init_conv(&mut s, &mut rng, &format!("enc{}", k + 1), cin, wk, 3)?;
            cin = wk;
        }
        init_conv(&mut s, &mut rng, "bottleneck", w[3], w[3], 3)?;
        let mut below = w[3];
        for k in (0..4).rev() {
            let wk = w[k];
            init_conv_t(&mut s, &mut rng, &format!("up{}", k + 1), below, wk)?;
            init_attention_gate(
                &mut s,
                &mut rng,
                &format!("att{}", k + 1),
                wk,
                below,
                Self::inter(wk),
            )?;
            init_conv(&mut s, &mut rng, &format!("dec{}", k + 1), 2 * wk, wk, 3)?;
            below = wk;
        }
        init_conv(&mut s, &mut rng, "out", w[0], 1, 1)?;
        Ok(s)
    }

    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let mut skips = [x; 4];
        let mut h = x;
        for (k, skip) in skips.iter_mut().enumerate() {
            *skip = conv3_relu(g, store, &format!("enc{}", k + 1), h)?;
            h = g.maxpool2(*skip)?;
        }
        let mut h = conv3_relu(g, store, "bottleneck", h)?;
        for k in (0..4).rev() {
            let up = conv_t(g, store, &format!("up{}", k + 1), h)?;
            let up = g.relu(up)?;
            let (gated, _) = attention_gate(g, store, &format!("att{}", k + 1), skips[k], h)?;
            let cat = g.concat(up, gated)?;
            h = conv3_relu(g, store, &format!("dec{}", k + 1), cat)?;
        }
        let logits = conv(g, store, "out", h, 1, Padding::Valid)?;
        g.sigmoid(logits)
    }
}
