//! Stochastic two-view augmentation.
//!
//! Each call consumes a caller-supplied RNG so the batch builder can derive
//! one stream per `(seed, epoch, batch, row, view)` and reproduce any view
//! exactly. Draws happen in a fixed order up front, so the stream layout
//! never depends on which transforms end up active.

use ndarray::{Array3, ArrayView3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Augmentation strengths. Defaults follow the usual contrastive recipe:
/// crop to 70-100% of the side, flip half the time, moderate color jitter
/// (brightness, contrast, saturation, hue), occasional grayscale, and
/// occasional Gaussian blur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub crop_min_scale: f64,
    pub crop_max_scale: f64,
    pub flip_prob: f64,
    pub jitter_strength: f64,
    /// Max hue rotation as a fraction of the color wheel, in [0, 0.5].
    /// Brightness/contrast/saturation all preserve the hue direction, so
    /// without this term a global color tint passes through the jitter
    /// untouched.
    pub hue_shift: f64,
    pub grayscale_prob: f64,
    pub blur_prob: f64,
    /// Blur sigma is drawn from `[0.1, blur_max_sigma]` pixels. This is the
    /// only transform that suppresses high-frequency texture and pixel
    /// noise, which color jitter leaves intact.
    pub blur_max_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_min_scale: 0.7,
            crop_max_scale: 1.0,
            flip_prob: 0.5,
            jitter_strength: 0.4,
            hue_shift: 0.1,
            grayscale_prob: 0.1,
            blur_prob: 0.5,
            blur_max_sigma: 1.2,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_min_scale > 0.0
            && self.crop_min_scale <= self.crop_max_scale
            && self.crop_max_scale <= 1.0)
        {
            return Err(Error::Config(format!(
                "crop scales must satisfy 0 < min <= max <= 1, got [{}, {}]",
                self.crop_min_scale, self.crop_max_scale
            )));
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("grayscale_prob", self.grayscale_prob),
            ("blur_prob", self.blur_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(0.0..0.95).contains(&self.jitter_strength) {
            return Err(Error::Config(format!(
                "jitter_strength must be in [0, 0.95), got {}",
                self.jitter_strength
            )));
        }
        if !(0.0..=0.5).contains(&self.hue_shift) {
            return Err(Error::Config(format!(
                "hue_shift must be in [0, 0.5], got {}",
                self.hue_shift
            )));
        }
        if !(0.1..=4.0).contains(&self.blur_max_sigma) {
            return Err(Error::Config(format!(
                "blur_max_sigma must be in [0.1, 4], got {}",
                self.blur_max_sigma
            )));
        }
        Ok(())
    }
}

fn luminance(px: &[f64]) -> f64 {
    if px.len() == 3 {
        0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
    } else {
        px.iter().sum::<f64>() / px.len() as f64
    }
}

/// Separable Gaussian blur with replicate borders. Constant images pass
/// through unchanged because the kernel is normalized.
fn gaussian_blur(img: &mut Array3<f64>, sigma: f64) {
    let (h, w, c) = img.dim();
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let mut kernel: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
    for k in &mut kernel {
        *k /= norm;
    }

    let tap = |src: &Array3<f64>, y: isize, x: isize, ch: usize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        src[[y, x, ch]]
    };
    let pass = |src: &Array3<f64>, horizontal: bool| {
        let mut out = Array3::zeros((h, w, c));
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = kernel[0] * src[[y, x, ch]];
                    for (i, &k) in kernel.iter().enumerate().skip(1) {
                        let d = i as isize;
                        acc += if horizontal {
                            k * (tap(src, y as isize, x as isize - d, ch)
                                + tap(src, y as isize, x as isize + d, ch))
                        } else {
                            k * (tap(src, y as isize - d, x as isize, ch)
                                + tap(src, y as isize + d, x as isize, ch))
                        };
                    }
                    out[[y, x, ch]] = acc;
                }
            }
        }
        out
    };
    *img = pass(&pass(img, true), false);
}

/// Rotate an RGB pixel by `theta` radians around the gray axis (1,1,1)/sqrt(3).
/// Gray pixels are fixed points; a third of a turn maps R to G to B exactly.
fn rotate_hue(px: [f64; 3], theta: f64) -> [f64; 3] {
    let (s, cth) = theta.sin_cos();
    let [r, g, b] = px;
    let axis = (r + g + b) * (1.0 - cth) / 3.0;
    let k = s / 3f64.sqrt();
    [
        r * cth + k * (b - g) + axis,
        g * cth + k * (r - b) + axis,
        b * cth + k * (g - r) + axis,
    ]
}

/// Bilinear resample of `src` to `(out_h, out_w)`.
fn resize_bilinear(src: ArrayView3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (h, w, c) = src.dim();
    let mut out = Array3::zeros((out_h, out_w, c));
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let top = src[[y0, x0, ch]] * (1.0 - fx) + src[[y0, x1, ch]] * fx;
                let bot = src[[y1, x0, ch]] * (1.0 - fx) + src[[y1, x1, ch]] * fx;
                out[[oy, ox, ch]] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Produce one augmented view. The input is unchanged; the output has the
/// same shape and values clamped to `[0, 1]`.
pub fn augment(image: &Array3<f64>, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Array3<f64> {
    let (h, w, c) = image.dim();

    // Fixed draw order; see module docs.
    let scale: f64 = rng.gen_range(cfg.crop_min_scale..=cfg.crop_max_scale);
    let ty: f64 = rng.gen_range(0.0..1.0);
    let tx: f64 = rng.gen_range(0.0..1.0);
    let flip = rng.gen_range(0.0..1.0) < cfg.flip_prob;
    let j = cfg.jitter_strength;
    let brightness: f64 = if j > 0.0 { rng.gen_range(-j..j) } else { 0.0 };
    let contrast: f64 = if j > 0.0 { rng.gen_range(-j..j) } else { 0.0 };
    let saturation: f64 = if j > 0.0 { rng.gen_range(-j..j) } else { 0.0 };
    let hs = cfg.hue_shift;
    let hue: f64 = if hs > 0.0 { rng.gen_range(-hs..hs) } else { 0.0 };
    let gray = rng.gen_range(0.0..1.0) < cfg.grayscale_prob;
    let (blur, sigma) = if cfg.blur_prob > 0.0 {
        let on = rng.gen_range(0.0..1.0) < cfg.blur_prob;
        (on, rng.gen_range(0.1..=cfg.blur_max_sigma))
    } else {
        (false, 0.0)
    };

    // Random resized crop: pick a sub-window, resize back to (h, w).
    let ch_ = ((h as f64 * scale).round() as usize).clamp(1, h);
    let cw = ((w as f64 * scale).round() as usize).clamp(1, w);
    let y0 = (ty * (h - ch_) as f64).round() as usize;
    let x0 = (tx * (w - cw) as f64).round() as usize;
    let crop = image.slice(ndarray::s![y0..y0 + ch_, x0..x0 + cw, ..]);
    let mut out = if (ch_, cw) == (h, w) {
        image.clone()
    } else {
        resize_bilinear(crop, h, w)
    };

    if flip {
        out.invert_axis(ndarray::Axis(1));
    }

    if j > 0.0 {
        let mean: f64 = out.iter().sum::<f64>() / out.len() as f64;
        for py in 0..h {
            for px in 0..w {
                let lum = {
                    let row = out.slice(ndarray::s![py, px, ..]);
                    luminance(row.as_slice().expect("contiguous"))
                };
                for chn in 0..c {
                    let mut v = out[[py, px, chn]];
                    v *= 1.0 + brightness;
                    v = mean + (v - mean) * (1.0 + contrast);
                    v = lum + (v - lum) * (1.0 + saturation);
                    out[[py, px, chn]] = v;
                }
            }
        }
    }

    if hue != 0.0 && c == 3 {
        let theta = hue * std::f64::consts::TAU;
        for py in 0..h {
            for px in 0..w {
                let rot = rotate_hue(
                    [out[[py, px, 0]], out[[py, px, 1]], out[[py, px, 2]]],
                    theta,
                );
                for chn in 0..3 {
                    out[[py, px, chn]] = rot[chn];
                }
            }
        }
    }

    if gray {
        for py in 0..h {
            for px in 0..w {
                let lum = {
                    let row = out.slice(ndarray::s![py, px, ..]);
                    luminance(row.as_slice().expect("contiguous"))
                };
                for chn in 0..c {
                    out[[py, px, chn]] = lum;
                }
            }
        }
    }

    if blur {
        gaussian_blur(&mut out, sigma);
    }

    out.mapv_inplace(|v| v.clamp(0.0, 1.0));
    out
}
