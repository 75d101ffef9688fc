use alloc::vec::Vec;

use super::{predict, train, AUNetSpec, Network, SegnetError, TrainConfig, TrainReport};
use crate::maskgen::BinaryMask;
use crate::metrics::overlap_metrics;
use crate::nn::{NetworkWeights, Tensor};
use crate::raster::RasterImage;
use crate::texture::{build_input, LbpParams};

/// What the first stage sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// RGB, LBP and GLBP planes.
    Texture,
    /// RGB planes only.
    Rgb,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::Texture => 5,
            InputMode::Rgb => 3,
        }
    }
}

/// Two attention UNets in sequence. The second one refines the probability
/// map of the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSpec {
    pub stage1: AUNetSpec,
    pub stage2: AUNetSpec,
    pub threshold: f32,
    pub mode: InputMode,
    pub lbp: LbpParams,
}

impl PipelineSpec {
    pub fn new(mode: InputMode, widths: [usize; 4], input_size: (usize, usize)) -> Self {
        let stage = |in_channels| AUNetSpec {
            in_channels,
            widths,
            input_size,
        };
        Self {
            stage1: stage(mode.channels()),
            stage2: stage(1),
            threshold: 0.5,
            mode,
            lbp: LbpParams::default(),
        }
    }

    pub fn toy(mode: InputMode) -> Self {
        let s = AUNetSpec::toy(0);
        Self::new(mode, s.widths, s.input_size)
    }

    pub fn validate(&self) -> Result<(), SegnetError> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        if self.stage1.in_channels != self.mode.channels() {
            return Err(SegnetError::Spec(
                "stage 1 channels do not match the input mode",
            ));
        }
        if self.stage2.in_channels != 1 {
            return Err(SegnetError::Spec("stage 2 takes one channel"));
        }
        if self.stage1.input_size != self.stage2.input_size {
            return Err(SegnetError::Spec("stage sizes differ"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SegnetError::Threshold(self.threshold));
        }
        Ok(())
    }
}

/// Network input for one RGB image, `(1, C, H, W)` with every plane in `[0, 1]`.
pub fn image_tensor(
    mode: InputMode,
    lbp: &LbpParams,
    rgb: &RasterImage,
) -> Result<Tensor<f32>, SegnetError> {
    rgb.expect_channels(3)
        .map_err(crate::texture::TextureError::from)?;
    let (h, w) = (rgb.height(), rgb.width());
    let (src, c) = match mode {
        InputMode::Texture => (build_input(rgb, lbp)?.as_image().data().to_vec(), 5),
        InputMode::Rgb => (
            rgb.data().iter().map(|v| v / 255.0).collect::<Vec<f32>>(),
            3,
        ),
    };
    let mut planar = alloc::vec![0.0f32; c * h * w];
    for (i, px) in src.chunks_exact(c).enumerate() {
        for (k, &v) in px.iter().enumerate() {
            planar[k * h * w + i] = v;
        }
    }
    Ok(Tensor::from_vec([1, c, h, w], planar)?)
}

/// `(1, 1, H, W)` tensor of zeros and ones.
pub fn mask_tensor(mask: &BinaryMask) -> Tensor<f32> {
    let data = mask.data().iter().map(|&b| f32::from(b)).collect();
    Tensor::from_vec([1, 1, mask.height(), mask.width()], data).expect("length matches")
}

/// Pixels with probability at or above `threshold` become foreground.
pub fn prob_to_mask(prob: &Tensor<f32>, threshold: f32) -> BinaryMask {
    let [_, _, h, w] = prob.dims();
    let d = prob.data();
    BinaryMask::from_fn(h, w, |r, c| d[r * w + c] >= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub spec: PipelineSpec,
    pub stage1: NetworkWeights,
    pub stage2: NetworkWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Stage-1 probability map, `(1, 1, H, W)`.
    pub stage1: Tensor<f32>,
    /// Final probability map, `(1, 1, H, W)`.
    pub prob: Tensor<f32>,
    pub mask: BinaryMask,
}

impl Pipeline {
    /// Untrained pipeline; the stages draw from `seed` and `seed + 1`.
    pub fn new(spec: PipelineSpec, seed: u64) -> Result<Self, SegnetError> {
        spec.validate()?;
        Ok(Self {
            spec,
            stage1: spec.stage1.init(seed)?,
            stage2: spec.stage2.init(seed.wrapping_add(1))?,
        })
    }

    pub fn infer(&self, rgb: &RasterImage) -> Result<Inference, SegnetError> {
        let x = image_tensor(self.spec.mode, &self.spec.lbp, rgb)?;
        self.infer_tensor(&x)
    }

    /// Inference from a prepared stage-1 input.
    pub fn infer_tensor(&self, x: &Tensor<f32>) -> Result<Inference, SegnetError> {
        let stage1 = predict(&self.spec.stage1, &self.stage1, x)?;
        let prob = predict(&self.spec.stage2, &self.stage2, &stage1)?;
        let mask = prob_to_mask(&prob, self.spec.threshold);
        Ok(Inference { stage1, prob, mask })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub stage1: TrainReport,
    pub stage2: TrainReport,
    /// Mean training-set Dice of the thresholded stage-1 output.
    pub stage1_train_dice: f64,
    /// Mean training-set Dice of the thresholded final output.
    pub stage2_train_dice: f64,
}

fn mean_dice(preds: &[Tensor<f32>], masks: &[&BinaryMask], threshold: f32) -> f64 {
    let total: f64 = preds
        .iter()
        .zip(masks)
        .map(|(p, m)| overlap_metrics(m, &prob_to_mask(p, threshold)).map_or(0.0, |o| o.dice))
        .sum();
    total / preds.len().max(1) as f64
}

/// Trains stage 1 on `(input, mask)`, then freezes it and trains stage 2 on
/// `(stage-1 probability map, mask)`.
pub fn train_pipeline(
    spec: PipelineSpec,
    samples: &[(RasterImage, BinaryMask)],
    stage1_config: &TrainConfig,
    stage2_config: &TrainConfig,
) -> Result<(Pipeline, PipelineReport), SegnetError> {
    if samples.is_empty() {
        return Err(SegnetError::EmptyDataset);
    }
    let mut pipeline = Pipeline::new(spec, stage1_config.seed)?;
    let masks: Vec<&BinaryMask> = samples.iter().map(|(_, m)| m).collect();
    let targets: Vec<Tensor<f32>> = masks.iter().map(|m| mask_tensor(m)).collect();
    let mut data = Vec::with_capacity(samples.len());
    for ((img, _), t) in samples.iter().zip(&targets) {
        data.push((image_tensor(spec.mode, &spec.lbp, img)?, t.clone()));
    }
    let report1 = train(&spec.stage1, &mut pipeline.stage1, &data, stage1_config)?;

    let stage1_out = data
        .iter()
        .map(|(x, _)| predict(&spec.stage1, &pipeline.stage1, x))
        .collect::<Result<Vec<_>, _>>()?;
    let stage2_data: Vec<_> = stage1_out.iter().cloned().zip(targets).collect();
    let report2 = train(
        &spec.stage2,
        &mut pipeline.stage2,
        &stage2_data,
        stage2_config,
    )?;

    let final_out = stage1_out
        .iter()
        .map(|p| predict(&spec.stage2, &pipeline.stage2, p))
        .collect::<Result<Vec<_>, _>>()?;
    let d1 = mean_dice(&stage1_out, &masks, spec.threshold);
    let d2 = mean_dice(&final_out, &masks, spec.threshold);
    if d2 < d1 - 0.01 {
        log::warn!("stage 2 training Dice {d2:.4} is below stage 1 ({d1:.4}) by more than 0.01");
    } else {
        log::info!("training Dice: stage 1 {d1:.4}, stage 2 {d2:.4}");
    }
    Ok((
        pipeline,
        PipelineReport {
            stage1: report1,
            stage2: report2,
            stage1_train_dice: d1,
            stage2_train_dice: d2,
        },
    ))
}
