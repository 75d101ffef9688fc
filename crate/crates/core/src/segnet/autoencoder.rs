use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Network, SegnetError};
use crate::nn::layers::{conv, conv3_relu, init_conv};
use crate::nn::{Graph, NetworkWeights, NnError, NodeId, Padding, ParamStore, Scalar};

/// Convolutional autoencoder for single-channel masks.
///
/// Encoder: two 3x3 conv + ReLU + 2x2 max-pool stages. Decoder: two 3x3 conv +
/// ReLU + 2x nearest upsampling stages, then a 3x3 conv with sigmoid. The
/// latent has `encoder[1]` channels at a quarter of the input resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AutoencoderSpec {
    pub input_size: (usize, usize),
    pub encoder: [usize; 2],
    pub decoder: [usize; 2],
}

impl AutoencoderSpec {
    /// 256x256 masks, encoder 32/64, decoder 64/32.
    pub fn full() -> Self {
        Self {
            input_size: (256, 256),
            encoder: [32, 64],
            decoder: [64, 32],
        }
    }

    pub fn toy() -> Self {
        Self {
            input_size: (32, 32),
            encoder: [16, 32],
            decoder: [32, 16],
        }
    }

    pub fn validate(&self) -> Result<(), SegnetError> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(SegnetError::Spec(
                "autoencoder input size must be a positive multiple of 4",
            ));
        }
        if self.encoder.contains(&0) || self.decoder.contains(&0) {
            return Err(SegnetError::Spec("autoencoder widths must be positive"));
        }
        Ok(())
    }

    /// `(channels, height, width)` of the latent for one input.
    pub fn latent_dims(&self) -> (usize, usize, usize) {
        (
            self.encoder[1],
            self.input_size.0 / 4,
            self.input_size.1 / 4,
        )
    }

    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let h = conv3_relu(g, store, "ae.enc1", x)?;
        let h = g.maxpool2(h)?;
        let h = conv3_relu(g, store, "ae.enc2", h)?;
        g.maxpool2(h)
    }

    pub fn decode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        z: NodeId,
    ) -> Result<NodeId, NnError> {
        let h = conv3_relu(g, store, "ae.dec1", z)?;
        let h = g.upsample2(h)?;
        let h = conv3_relu(g, store, "ae.dec2", h)?;
        let h = g.upsample2(h)?;
        let y = conv(g, store, "ae.out", h, 1, Padding::Same)?;
        g.sigmoid(y)
    }
}

impl Network for AutoencoderSpec {
    fn input_dims(&self) -> (usize, usize, usize) {
        (1, self.input_size.0, self.input_size.1)
    }

    fn init(&self, seed: u64) -> Result<NetworkWeights, SegnetError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(seed);
        let [e1, e2] = self.encoder;
        let [d1, d2] = self.decoder;
        init_conv(&mut s, &mut rng, "ae.enc1", 1, e1, 3)?;
        init_conv(&mut s, &mut rng, "ae.enc2", e1, e2, 3)?;
        init_conv(&mut s, &mut rng, "ae.dec1", e2, d1, 3)?;
        init_conv(&mut s, &mut rng, "ae.dec2", d1, d2, 3)?;
        init_conv(&mut s, &mut rng, "ae.out", d2, 1, 3)?;
        Ok(s)
    }

    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let z = self.encode(g, store, x)?;
        self.decode(g, store, z)
    }
}
