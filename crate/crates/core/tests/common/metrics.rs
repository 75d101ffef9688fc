//! Brute-force Hausdorff distance and overlap identity checks.

use liplab_core::maskgen::BinaryMask;
use liplab_core::metrics::{
    directed_hausdorff, hausdorff, overlap_metrics, pixel_accuracy, MetricsError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure, Check};

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let density = [0.0, 0.02, 0.2, 0.5, 0.9][rng.random_range(0..5)];
    let bits: Vec<bool> = (0..h * w).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_fn(h, w, |r, c| bits[r * w + c])
}

fn foreground(m: &BinaryMask) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for r in 0..m.height() {
        for c in 0..m.width() {
            if m.get(r, c) {
                out.push((c as i64, r as i64));
            }
        }
    }
    out
}

/// O(|X| |Y|) directed distance over squared integer distances.
pub fn brute_directed(x: &BinaryMask, y: &BinaryMask) -> f64 {
    let (xs, ys) = (foreground(x), foreground(y));
    let worst = xs
        .iter()
        .map(|a| {
            ys.iter()
                .map(|b| (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2))
                .min()
                .unwrap()
        })
        .max()
        .unwrap();
    (worst as f64).sqrt()
}

/// IoU = D / (2 - D) and VOE = 1 - IoU to 1e-12, plus range checks.
pub fn overlap_identities(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..pairs {
        let (h, w) = (rng.random_range(1..24), rng.random_range(1..24));
        let (a, b) = (random_mask(&mut rng, h, w), random_mask(&mut rng, h, w));
        let o = overlap_metrics(&a, &b).map_err(|e| e.to_string())?;
        ensure((o.iou - o.dice / (2.0 - o.dice)).abs() <= 1e-12, || {
            format!("pair {k}: IoU {} vs Dice {}", o.iou, o.dice)
        })?;
        ensure((o.voe - (1.0 - o.iou)).abs() <= 1e-12, || {
            format!("pair {k}: VOE {} vs IoU {}", o.voe, o.iou)
        })?;
        ensure(
            [o.dice, o.iou, o.voe]
                .iter()
                .all(|v| (0.0..=1.0).contains(v)),
            || format!("pair {k}: {o:?}"),
        )?;
        let p = pixel_accuracy(&a, &b).map_err(|e| e.to_string())?;
        ensure(
            p.counts.total() == h * w && (0.0..=1.0).contains(&p.pa),
            || format!("pair {k}: {p:?}"),
        )?;
        ensure(p.pa_c.is_none() == (a.count() == 0), || {
            format!("pair {k}: PA_c {:?}", p.pa_c)
        })?;
    }
    Ok(())
}

/// Distance-transform HD equals the brute-force value exactly; returns the
/// number of pairs with both masks nonempty.
pub fn hausdorff_vs_brute_force(pairs: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for k in 0..pairs {
        let (h, w) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let (a, b) = (random_mask(&mut rng, h, w), random_mask(&mut rng, h, w));
        if a.count() == 0 || b.count() == 0 {
            ensure(hausdorff(&a, &b) == Err(MetricsError::EmptyMask), || {
                format!("pair {k}: empty mask accepted")
            })?;
            continue;
        }
        let (ab, ba) = (brute_directed(&a, &b), brute_directed(&b, &a));
        let got = (
            directed_hausdorff(&a, &b),
            directed_hausdorff(&b, &a),
            hausdorff(&a, &b),
        );
        ensure(got == (Ok(ab), Ok(ba), Ok(ab.max(ba))), || {
            format!("pair {k} ({h}x{w}): {got:?} vs {ab}, {ba}")
        })?;
        checked += 1;
    }
    Ok(checked)
}
