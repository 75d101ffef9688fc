//! Run configuration: a flat `key = value` text file.
//!
//! `#` starts a comment. Every key is optional, unknown or repeated keys are
//! errors, and [`RunConfig::render`] writes the fully resolved configuration in
//! the same syntax.
//!
//! | key            | meaning                                   | default        |
//! |----------------|-------------------------------------------|----------------|
//! | `input_size`   | network input, `H W` (one value = square) | `64 64`        |
//! | `widths`       | four encoder widths                       | `8 16 32 64`   |
//! | `mode`         | `texture` (5 planes) or `rgb`             | `texture`      |
//! | `epochs`       | stage-1 epochs                            | `80`           |
//! | `stage2_epochs`| stage-2 epochs                            | `epochs / 2`   |
//! | `lr`           | Adam learning rate                        | `0.001`        |
//! | `batch`        | mini-batch size                           | `4`            |
//! | `seed`         | initialization and shuffling seed         | `0`            |
//! | `threshold`    | probability threshold for the final mask  | `0.5`          |
//! | `lambda_bce`   | BCE weight in the BCE + Dice loss         | `0.5`          |
//! | `data_dir`     | training samples                          | `data`         |
//! | `out_dir`      | output directory                          | `run`          |

use std::path::{Path, PathBuf};

use liplab_core::segnet::{InputMode, Objective, PipelineSpec, TrainConfig};

use crate::error::{read_text, FormatError, IoError};
use crate::weights::parse_mode;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input_size: (usize, usize),
    pub widths: [usize; 4],
    pub mode: InputMode,
    pub epochs: usize,
    pub stage2_epochs: Option<usize>,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub threshold: f32,
    pub lambda_bce: f64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_size: (64, 64),
            widths: [8, 16, 32, 64],
            mode: InputMode::Texture,
            epochs: 80,
            stage2_epochs: None,
            lr: 1e-3,
            batch: 4,
            seed: 0,
            threshold: 0.5,
            lambda_bce: 0.5,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, FormatError> {
    v.parse()
        .map_err(|_| FormatError::line(line, format!("invalid value {v:?} for {key}")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>, FormatError> {
    v.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(line, key, s))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                FormatError::line(line, format!("expected `key = value`, got {content:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(FormatError::line(line, format!("repeated key {key}")));
            }
            cfg.set(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), FormatError> {
        match key {
            "input_size" => {
                self.input_size = match parse_list(line, key, v)?[..] {
                    [s] => (s, s),
                    [h, w] => (h, w),
                    _ => {
                        return Err(FormatError::line(
                            line,
                            "input_size takes one or two values",
                        ))
                    }
                }
            }
            "widths" => {
                self.widths = parse_list(line, key, v)?
                    .try_into()
                    .map_err(|_| FormatError::line(line, "widths takes four values"))?
            }
            "mode" => {
                self.mode = parse_mode(v)
                    .ok_or_else(|| FormatError::line(line, format!("unknown mode {v:?}")))?
            }
            "epochs" => self.epochs = parse_num(line, key, v)?,
            "stage2_epochs" => self.stage2_epochs = Some(parse_num(line, key, v)?),
            "lr" => self.lr = parse_num(line, key, v)?,
            "batch" => self.batch = parse_num(line, key, v)?,
            "seed" => self.seed = parse_num(line, key, v)?,
            "threshold" => self.threshold = parse_num(line, key, v)?,
            "lambda_bce" => self.lambda_bce = parse_num(line, key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(FormatError::line(line, format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let bad = |m: &str| Err(FormatError::other(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_bce) {
            return bad("lambda_bce must lie in [0, 1]");
        }
        self.pipeline_spec()
            .validate()
            .map_err(|e| FormatError::other(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?).map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn pipeline_spec(&self) -> PipelineSpec {
        let mut spec = PipelineSpec::new(self.mode, self.widths, self.input_size);
        spec.threshold = self.threshold;
        spec
    }

    pub fn stage1(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
            seed: self.seed,
            objective: Objective::BceDice {
                lambda: self.lambda_bce,
            },
        }
    }

    pub fn stage2(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.stage2_epochs.unwrap_or(self.epochs / 2),
            ..self.stage1()
        }
    }

    /// Every key with its resolved value, parseable by [`RunConfig::parse`].
    pub fn render(&self) -> String {
        let mode = match self.mode {
            InputMode::Texture => "texture",
            InputMode::Rgb => "rgb",
        };
        let w = self.widths;
        format!(
            "input_size = {} {}\nwidths = {} {} {} {}\nmode = {mode}\nepochs = {}\nstage2_epochs = {}\nlr = {}\nbatch = {}\nseed = {}\nthreshold = {}\nlambda_bce = {}\ndata_dir = {}\nout_dir = {}\n",
            self.input_size.0,
            self.input_size.1,
            w[0],
            w[1],
            w[2],
            w[3],
            self.epochs,
            self.stage2().epochs,
            self.lr,
            self.batch,
            self.seed,
            self.threshold,
            self.lambda_bce,
            self.data_dir.display(),
            self.out_dir.display(),
        )
    }
}
