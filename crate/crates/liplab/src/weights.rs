//! Network and pipeline weights on disk.
//!
//! A weight directory holds `manifest.txt` and one `LIPLAB01` tensor file per
//! parameter. The manifest lists every parameter with its shape, so a load can
//! validate the whole set against the expected architecture before anything is
//! returned:
//!
//! ```text
//! liplab-weights 1
//! seed 0
//! param enc1.w 8 5 3 3 enc1.w.tensor
//! ```
//!
//! A pipeline directory holds `pipeline.txt` (spec fields as `key = value`) and
//! the weight directories `stage1/` and `stage2/`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use liplab_core::nn::{NetworkWeights, ParamStore};
use liplab_core::segnet::{InputMode, Network, Pipeline, PipelineSpec};
use liplab_core::texture::{LbpParams, Sampling};
use thiserror::Error;

use crate::error::{read_text, write_file, IoError};
use crate::tensorfile::{read_tensor, write_tensor, TensorData};

const WEIGHTS_HEADER: &str = "liplab-weights 1";
const PIPELINE_HEADER: &str = "liplab-pipeline 1";
pub const MANIFEST: &str = "manifest.txt";
pub const PIPELINE_MANIFEST: &str = "pipeline.txt";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("parameter {name}: {message}")]
    Param { name: String, message: String },
    #[error("parameter {name}: {source}")]
    ParamFile {
        name: String,
        #[source]
        source: IoError,
    },
    #[error("invalid pipeline spec: {0}")]
    Spec(String),
}

fn manifest_err(path: &Path, message: impl Into<String>) -> WeightsError {
    WeightsError::Manifest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn create_dir(dir: &Path) -> Result<(), WeightsError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn file_name(param: &str) -> String {
    format!("{param}.tensor")
}

pub fn save_weights(dir: &Path, weights: &NetworkWeights) -> Result<(), WeightsError> {
    create_dir(dir)?;
    let mut manifest = format!("{WEIGHTS_HEADER}\nseed {}\n", weights.seed());
    for (name, t) in weights.iter() {
        let dims = t.dims().map(|d| d.to_string()).join(" ");
        let _ = writeln!(manifest, "param {name} {dims} {}", file_name(name));
        write_tensor(&dir.join(file_name(name)), &TensorData::from_tensor(t))?;
    }
    write_file(&dir.join(MANIFEST), manifest.as_bytes())?;
    Ok(())
}

struct ManifestEntry {
    name: String,
    dims: [usize; 4],
    file: String,
}

fn parse_manifest(path: &Path, text: &str) -> Result<(u64, Vec<ManifestEntry>), WeightsError> {
    let mut lines = text.lines();
    if lines.next() != Some(WEIGHTS_HEADER) {
        return Err(manifest_err(
            path,
            format!("first line must be {WEIGHTS_HEADER:?}"),
        ));
    }
    let seed = lines
        .next()
        .and_then(|l| l.strip_prefix("seed "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| manifest_err(path, "second line must be `seed <u64>`"))?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || {
            manifest_err(
                path,
                format!("line {}: expected `param <name> <4 dims> <file>`", i + 3),
            )
        };
        if fields.len() != 7 || fields[0] != "param" {
            return Err(bad());
        }
        let mut dims = [0; 4];
        for (d, f) in dims.iter_mut().zip(&fields[2..6]) {
            *d = f.parse().map_err(|_| bad())?;
        }
        entries.push(ManifestEntry {
            name: fields[1].to_string(),
            dims,
            file: fields[6].to_string(),
        });
    }
    Ok((seed, entries))
}

/// Loads weights for `expected`'s architecture. Every parameter name and shape
/// must match; on any error nothing is returned.
pub fn load_weights(dir: &Path, expected: &NetworkWeights) -> Result<NetworkWeights, WeightsError> {
    let manifest_path = dir.join(MANIFEST);
    let (seed, entries) = parse_manifest(&manifest_path, &read_text(&manifest_path)?)?;
    if entries.len() != expected.len() {
        return Err(manifest_err(
            &manifest_path,
            format!(
                "{} parameters listed, architecture has {}",
                entries.len(),
                expected.len()
            ),
        ));
    }
    let mut out = ParamStore::new(seed);
    for (entry, (name, tensor)) in entries.iter().zip(expected.iter()) {
        if entry.name != name {
            return Err(manifest_err(
                &manifest_path,
                format!("expected parameter {name}, found {}", entry.name),
            ));
        }
        if entry.dims != tensor.dims() {
            return Err(WeightsError::Param {
                name: name.to_string(),
                message: format!(
                    "manifest shape {:?}, architecture expects {:?}",
                    entry.dims,
                    tensor.dims()
                ),
            });
        }
        if entry.file.contains(['/', '\\']) || entry.file.starts_with('.') {
            return Err(manifest_err(
                &manifest_path,
                format!("parameter {name}: file name {:?} not allowed", entry.file),
            ));
        }
        let data =
            read_tensor(&dir.join(&entry.file)).map_err(|source| WeightsError::ParamFile {
                name: name.to_string(),
                source,
            })?;
        let t = data.into_tensor().map_err(|e| WeightsError::Param {
            name: name.to_string(),
            message: e.to_string(),
        })?;
        if t.dims() != tensor.dims() {
            return Err(WeightsError::Param {
                name: name.to_string(),
                message: format!(
                    "file shape {:?}, architecture expects {:?}",
                    t.dims(),
                    tensor.dims()
                ),
            });
        }
        if !t.all_finite() {
            return Err(WeightsError::Param {
                name: name.to_string(),
                message: "non-finite value".into(),
            });
        }
        out.insert(name, t).map_err(|e| WeightsError::Param {
            name: name.to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(out)
}

fn mode_name(mode: InputMode) -> &'static str {
    match mode {
        InputMode::Texture => "texture",
        InputMode::Rgb => "rgb",
    }
}

pub fn parse_mode(s: &str) -> Option<InputMode> {
    match s {
        "texture" => Some(InputMode::Texture),
        "rgb" => Some(InputMode::Rgb),
        _ => None,
    }
}

fn sampling_name(s: Sampling) -> &'static str {
    match s {
        Sampling::Bilinear => "bilinear",
        Sampling::Nearest => "nearest",
    }
}

pub fn parse_sampling(s: &str) -> Option<Sampling> {
    match s {
        "bilinear" => Some(Sampling::Bilinear),
        "nearest" => Some(Sampling::Nearest),
        _ => None,
    }
}

fn format_spec(spec: &PipelineSpec) -> String {
    let (h, w) = spec.stage1.input_size;
    let widths = spec.stage1.widths.map(|v| v.to_string()).join(" ");
    format!(
        "{PIPELINE_HEADER}\nmode = {}\ninput_size = {h} {w}\nwidths = {widths}\nthreshold = {}\nlbp_neighbors = {}\nlbp_radius = {}\nlbp_sampling = {}\n",
        mode_name(spec.mode),
        spec.threshold,
        spec.lbp.neighbors,
        spec.lbp.radius,
        sampling_name(spec.lbp.sampling),
    )
}

fn parse_spec(path: &Path, text: &str) -> Result<PipelineSpec, WeightsError> {
    let mut lines = text.lines();
    if lines.next() != Some(PIPELINE_HEADER) {
        return Err(manifest_err(
            path,
            format!("first line must be {PIPELINE_HEADER:?}"),
        ));
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| manifest_err(path, format!("expected `key = value`, got {line:?}")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| manifest_err(path, format!("missing {k}")))
    };
    let bad = |k: &str| manifest_err(path, format!("invalid {k}"));
    let nums = |k: &str| -> Result<Vec<usize>, WeightsError> {
        get(k)?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad(k)))
            .collect()
    };
    let mode = parse_mode(get("mode")?).ok_or_else(|| bad("mode"))?;
    let size = nums("input_size")?;
    let widths: [usize; 4] = nums("widths")?.try_into().map_err(|_| bad("widths"))?;
    let [h, w] = size[..] else {
        return Err(bad("input_size"));
    };
    let mut spec = PipelineSpec::new(mode, widths, (h, w));
    spec.threshold = get("threshold")?.parse().map_err(|_| bad("threshold"))?;
    spec.lbp = LbpParams {
        neighbors: get("lbp_neighbors")?
            .parse()
            .map_err(|_| bad("lbp_neighbors"))?,
        radius: get("lbp_radius")?.parse().map_err(|_| bad("lbp_radius"))?,
        sampling: parse_sampling(get("lbp_sampling")?).ok_or_else(|| bad("lbp_sampling"))?,
    };
    spec.validate()
        .map_err(|e| WeightsError::Spec(e.to_string()))?;
    spec.lbp
        .validate()
        .map_err(|e| WeightsError::Spec(e.to_string()))?;
    Ok(spec)
}

pub fn save_pipeline(dir: &Path, pipeline: &Pipeline) -> Result<(), WeightsError> {
    create_dir(dir)?;
    save_weights(&dir.join("stage1"), &pipeline.stage1)?;
    save_weights(&dir.join("stage2"), &pipeline.stage2)?;
    write_file(
        &dir.join(PIPELINE_MANIFEST),
        format_spec(&pipeline.spec).as_bytes(),
    )?;
    Ok(())
}

pub fn load_pipeline(dir: &Path) -> Result<Pipeline, WeightsError> {
    let path = dir.join(PIPELINE_MANIFEST);
    let spec = parse_spec(&path, &read_text(&path)?)?;
    let expect1 = spec
        .stage1
        .init(0)
        .map_err(|e| WeightsError::Spec(e.to_string()))?;
    let expect2 = spec
        .stage2
        .init(0)
        .map_err(|e| WeightsError::Spec(e.to_string()))?;
    let stage1 = load_weights(&dir.join("stage1"), &expect1)?;
    let stage2 = load_weights(&dir.join("stage2"), &expect2)?;
    Ok(Pipeline {
        spec,
        stage1,
        stage2,
    })
}
