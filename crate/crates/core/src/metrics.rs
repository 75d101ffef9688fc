//! Overlap, boundary and pixel-accuracy metrics for binary masks.
//!
//! Conventions for degenerate inputs: two empty masks agree perfectly
//! (Dice 1, IoU 1, VOE 0); the Hausdorff distance is undefined when either
//! mask is empty; per-class accuracy is undefined when the ground truth has
//! no foreground. Undefined values are reported as missing.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::maskgen::BinaryMask;
use crate::math;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("mask sizes differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("HD undefined: empty mask")]
    EmptyMask,
    #[error("no mask pairs to evaluate")]
    NoPairs,
}

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<(), MetricsError> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(MetricsError::DimensionMismatch(
            a.height(),
            a.width(),
            b.height(),
            b.width(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_masks(gt: &BinaryMask, pred: &BinaryMask) -> Result<Self, MetricsError> {
        check_dims(gt, pred)?;
        let mut c = Self::default();
        for (&g, &p) in gt.data().iter().zip(pred.data()) {
            match (g != 0, p != 0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub dice: f64,
    pub iou: f64,
    pub voe: f64,
}

pub fn overlap_metrics(gt: &BinaryMask, pred: &BinaryMask) -> Result<Overlap, MetricsError> {
    let c = ConfusionCounts::from_masks(gt, pred)?;
    let inter = c.tp as f64;
    let sum = (2 * c.tp + c.fp + c.fn_) as f64;
    if sum == 0.0 {
        return Ok(Overlap {
            dice: 1.0,
            iou: 1.0,
            voe: 0.0,
        });
    }
    let iou = inter / (sum - inter);
    Ok(Overlap {
        dice: 2.0 * inter / sum,
        iou,
        voe: 1.0 - iou,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelAccuracy {
    pub pa: f64,
    /// Recall of the foreground class; `None` when the ground truth is empty.
    pub pa_c: Option<f64>,
    pub counts: ConfusionCounts,
}

pub fn pixel_accuracy(gt: &BinaryMask, pred: &BinaryMask) -> Result<PixelAccuracy, MetricsError> {
    let counts = ConfusionCounts::from_masks(gt, pred)?;
    let total = counts.total().max(1) as f64;
    let positives = counts.tp + counts.fn_;
    Ok(PixelAccuracy {
        pa: (counts.tp + counts.tn) as f64 / total,
        pa_c: (positives > 0).then(|| counts.tp as f64 / positives as f64),
        counts,
    })
}

/// Squared Euclidean distance from every pixel to the nearest foreground pixel
/// of `mask`, exact on the integer grid. `None` marks "no foreground".
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<Option<u64>> {
    let (h, w) = (mask.height(), mask.width());
    // Columns first: 1-D transform of the indicator along each column.
    let mut cols = vec![None; h * w];
    let mut f = vec![None; h.max(w)];
    let mut out = vec![None; h.max(w)];
    for c in 0..w {
        for r in 0..h {
            f[r] = mask.get(r, c).then_some(0u64);
        }
        lower_envelope(&f[..h], &mut out[..h]);
        for r in 0..h {
            cols[r * w + c] = out[r];
        }
    }
    let mut result = vec![None; h * w];
    for r in 0..h {
        lower_envelope(&cols[r * w..(r + 1) * w], &mut out[..w]);
        result[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    result
}

/// 1-D squared distance transform `out[q] = min_p (q - p)^2 + f[p]` by the
/// lower envelope of parabolas. Missing samples contribute no parabola.
fn lower_envelope(f: &[Option<u64>], out: &mut [Option<u64>]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let key = |q: usize| f[q].map(|fq| fq as f64 + (q * q) as f64);
    for q in 0..n {
        let Some(kq) = key(q) else { continue };
        loop {
            let Some(&last) = v.last() else {
                v.push(q);
                z.clear();
                z.push(f64::NEG_INFINITY);
                break;
            };
            let kv = key(last).unwrap_or_default();
            let s = (kq - kv) / (2.0 * (q - last) as f64);
            if s <= *z.last().unwrap_or(&f64::NEG_INFINITY) {
                v.pop();
                z.pop();
                continue;
            }
            v.push(q);
            z.push(s);
            break;
        }
    }
    if v.is_empty() {
        out.fill(None);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q.abs_diff(p) as u64;
        *o = f[p].map(|fp| d * d + fp);
    }
}

/// `max over x in from of min over y in to of |x - y|`, squared.
fn directed_squared(from: &BinaryMask, to_dt: &[Option<u64>]) -> u64 {
    from.data()
        .iter()
        .zip(to_dt)
        .filter(|(&m, _)| m != 0)
        .map(|(_, d)| d.unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Directed Hausdorff distance from `from` to `to`.
pub fn directed_hausdorff(from: &BinaryMask, to: &BinaryMask) -> Result<f64, MetricsError> {
    check_dims(from, to)?;
    if from.count() == 0 || to.count() == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(math::sqrt(
        directed_squared(from, &squared_distance_transform(to)) as f64,
    ))
}

/// Symmetric Hausdorff distance between foreground pixel centers.
pub fn hausdorff(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64, MetricsError> {
    let a = directed_hausdorff(gt, pred)?;
    let b = directed_hausdorff(pred, gt)?;
    Ok(a.max(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub image: String,
    pub dice: f64,
    pub hd: Option<f64>,
    pub iou: f64,
    pub pa: f64,
    pub pa_c: Option<f64>,
    pub voe: f64,
}

pub fn image_metrics(
    image: &str,
    gt: &BinaryMask,
    pred: &BinaryMask,
) -> Result<ImageMetrics, MetricsError> {
    let o = overlap_metrics(gt, pred)?;
    let p = pixel_accuracy(gt, pred)?;
    let hd = match hausdorff(gt, pred) {
        Ok(v) => Some(v),
        Err(MetricsError::EmptyMask) => None,
        Err(e) => return Err(e),
    };
    Ok(ImageMetrics {
        image: image.into(),
        dice: o.dice,
        hd,
        iou: o.iou,
        pa: p.pa,
        pa_c: p.pa_c,
        voe: o.voe,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, lower median and interquartile range; `None` when `values` is empty.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Aggregate {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: sorted[(sorted.len() - 1) / 2],
        iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
    })
}

/// Metric columns in report order.
pub const COLUMNS: [&str; 6] = ["dice", "hd", "iou", "pa", "pa_c", "voe"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    /// One entry per [`COLUMNS`] entry; `None` when no image defines the metric.
    pub aggregates: Vec<Option<Aggregate>>,
}

impl ImageMetrics {
    /// Values in [`COLUMNS`] order.
    pub fn values(&self) -> [Option<f64>; 6] {
        [
            Some(self.dice),
            self.hd,
            Some(self.iou),
            Some(self.pa),
            self.pa_c,
            Some(self.voe),
        ]
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn aggregate(&self, column: &str) -> Option<Aggregate> {
        let idx = COLUMNS.iter().position(|&c| c == column)?;
        self.aggregates[idx]
    }

    /// Per-image CSV with header `image,dice,hd,iou,pa,pa_c,voe`. Missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image");
        for c in COLUMNS {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for m in &self.images {
            s.push_str(&m.image);
            for v in m.values() {
                s.push(',');
                s.push_str(&cell(v));
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width summary with mean, median and IQR rows.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8}", "");
        for c in COLUMNS {
            let _ = write!(s, "{c:>10}");
        }
        s.push('\n');
        type Pick = fn(&Aggregate) -> f64;
        let rows: [(&str, Pick); 3] = [
            ("mean", |a| a.mean),
            ("median", |a| a.median),
            ("IQR", |a| a.iqr),
        ];
        for (label, pick) in rows {
            let _ = write!(s, "{label:<8}");
            for a in &self.aggregates {
                match a {
                    Some(a) => {
                        let _ = write!(s, "{:>10.4}", pick(a));
                    }
                    None => {
                        let _ = write!(s, "{:>10}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Metrics for every `(name, gt, pred)` triple plus per-column aggregates.
pub fn evaluate_report<'a, I>(pairs: I) -> Result<MetricsReport, MetricsError>
where
    I: IntoIterator<Item = (&'a str, &'a BinaryMask, &'a BinaryMask)>,
{
    let images = pairs
        .into_iter()
        .map(|(name, gt, pred)| image_metrics(name, gt, pred))
        .collect::<Result<Vec<_>, _>>()?;
    if images.is_empty() {
        return Err(MetricsError::NoPairs);
    }
    let aggregates = (0..COLUMNS.len())
        .map(|k| {
            let vals: Vec<f64> = images.iter().filter_map(|m| m.values()[k]).collect();
            aggregate(&vals)
        })
        .collect();
    Ok(MetricsReport { images, aggregates })
}
