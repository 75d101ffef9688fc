//! Pixel-by-pixel evaluation of the LBP and GLBP definitions.

use liplab_core::raster::RasterImage;
use liplab_core::texture::{glbp, gradients, lbp, LbpParams, Sampling};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure, run_property, Check};

fn pixel(img: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let c = (x.max(0.0) as usize).min(w - 1);
    let r = (y.max(0.0) as usize).min(h - 1);
    img[r * w + c]
}

fn clamped(img: &[f64], h: usize, w: usize, r: i64, c: i64) -> f64 {
    img[(r.clamp(0, h as i64 - 1) as usize) * w + c.clamp(0, w as i64 - 1) as usize]
}

pub fn sample(img: &[f64], h: usize, w: usize, x: f64, y: f64, sampling: Sampling) -> f64 {
    match sampling {
        Sampling::Nearest => {
            let (xr, yr) = (x.round(), y.round());
            if xr < 0.0 || yr < 0.0 {
                clamped(img, h, w, yr as i64, xr as i64)
            } else {
                pixel(img, h, w, xr, yr)
            }
        }
        Sampling::Bilinear => {
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (c, r) = (x0 as i64, y0 as i64);
            (1.0 - fx) * (1.0 - fy) * clamped(img, h, w, r, c)
                + fx * (1.0 - fy) * clamped(img, h, w, r, c + 1)
                + (1.0 - fx) * fy * clamped(img, h, w, r + 1, c)
                + fx * fy * clamped(img, h, w, r + 1, c + 1)
        }
    }
}

/// Heaviside with H(0) = 1. Differences within 1e-9 stand for exact ties,
/// which floating-point trig and interpolation blur.
fn heaviside(d: f64) -> bool {
    d >= -1e-9
}

fn neighbors(p: &LbpParams, xc: f64, yc: f64) -> Vec<(f64, f64)> {
    (1..=p.neighbors)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / p.neighbors as f64;
            (xc + p.radius * t.cos(), yc + p.radius * t.sin())
        })
        .collect()
}

pub fn oracle_lbp(img: &[f64], h: usize, w: usize, p: &LbpParams) -> Vec<u32> {
    let mut out = vec![0; h * w];
    for r in 0..h {
        for c in 0..w {
            let center = img[r * w + c];
            for (i, (x, y)) in neighbors(p, c as f64, r as f64).into_iter().enumerate() {
                if heaviside(sample(img, h, w, x, y, p.sampling) - center) {
                    out[r * w + c] += 1 << i;
                }
            }
        }
    }
    out
}

pub fn oracle_gc(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |r: i64, c: i64| clamped(img, h, w, r, c);
    let mut prod = vec![0.0; h * w];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let gx = at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)
                - at(r - 1, c - 1)
                - 2.0 * at(r, c - 1)
                - at(r + 1, c - 1);
            let gy = at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)
                - at(r - 1, c - 1)
                - 2.0 * at(r - 1, c)
                - at(r - 1, c + 1);
            prod[(r as usize) * w + c as usize] = gx * gy;
        }
    }
    let max = prod.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return vec![0.0; h * w];
    }
    prod.iter().map(|v| v / max).collect()
}

pub fn oracle_glbp(img: &[f64], h: usize, w: usize, p: &LbpParams) -> Vec<f64> {
    // The field is stored in f32 by the implementation.
    let g: Vec<f64> = oracle_gc(img, h, w)
        .iter()
        .map(|&v| f64::from(v as f32))
        .collect();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let center = img[r * w + c];
            for (i, (x, y)) in neighbors(p, c as f64, r as f64).into_iter().enumerate() {
                if heaviside(sample(img, h, w, x, y, p.sampling) - center) {
                    out[r * w + c] +=
                        (2f64.powi(i as i32) * sample(&g, h, w, x, y, p.sampling)).abs();
                }
            }
        }
    }
    out
}

pub fn random_gray(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RasterImage {
    let data = (0..h * w).map(|_| f32::from(rng.random::<u8>())).collect();
    RasterImage::new(h, w, 1, data).unwrap()
}

pub fn as_f64(img: &RasterImage) -> Vec<f64> {
    img.data().iter().map(|&v| f64::from(v)).collect()
}

/// LBP must match exactly; GLBP within `1e-6` relative to `max(1, |oracle|)`.
pub fn compare_with_oracle(params: &LbpParams, images: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..images {
        let (h, w) = (rng.random_range(8..=32), rng.random_range(8..=32));
        let img = random_gray(&mut rng, h, w);
        let raw = as_f64(&img);
        let codes = lbp(&img, params).map_err(|e| e.to_string())?;
        for (k, (&got, &want)) in codes
            .data()
            .iter()
            .zip(&oracle_lbp(&raw, h, w, params))
            .enumerate()
        {
            ensure(got as u32 == want, || {
                format!("{params:?} LBP pixel {k} of {h}x{w}: {got} vs {want}")
            })?;
        }
        let field = gradients(&img).map_err(|e| e.to_string())?;
        let g = glbp(&img, params, &field).map_err(|e| e.to_string())?;
        for (k, (&got, &want)) in g
            .data()
            .iter()
            .zip(&oracle_glbp(&raw, h, w, params))
            .enumerate()
        {
            let err = (f64::from(got) - want).abs() / want.abs().max(1.0);
            ensure(err <= 1e-6, || {
                format!("{params:?} GLBP pixel {k}: {got} vs {want}")
            })?;
        }
    }
    Ok(())
}

pub fn strictly_increasing_map() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(1u16..400, 256).prop_map(|steps| {
        let mut acc = 0.0f32;
        steps
            .iter()
            .map(|&s| {
                acc += f32::from(s) / 8.0;
                acc
            })
            .collect()
    })
}

pub fn image_strategy() -> impl Strategy<Value = (usize, usize, Vec<u8>)> {
    (3usize..20, 3usize..20)
        .prop_flat_map(|(h, w)| (Just(h), Just(w), prop::collection::vec(any::<u8>(), h * w)))
}

/// Codes are unchanged when every gray level goes through a strictly increasing map.
pub fn monotone_invariance(cases: u32) -> Check {
    let strategy = (
        image_strategy(),
        strictly_increasing_map(),
        prop::sample::select(vec![1.0, 2.0]),
    );
    run_property(cases, &strategy, |((h, w, px), map, radius)| {
        prop_assume!(h >= 5 && w >= 5 || radius == 1.0);
        let p = LbpParams {
            neighbors: 8,
            radius,
            sampling: Sampling::Nearest,
        };
        let a = RasterImage::new(h, w, 1, px.iter().map(|&v| f32::from(v)).collect()).unwrap();
        let b = RasterImage::new(h, w, 1, px.iter().map(|&v| map[v as usize]).collect()).unwrap();
        prop_assert_eq!(lbp(&a, &p).unwrap(), lbp(&b, &p).unwrap());
        Ok(())
    })
}
