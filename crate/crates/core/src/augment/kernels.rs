//! Pixel kernels over square row-major `u8` grids.
//!
//! The kernels take the side length explicitly so they work on any square
//! grid; the pipeline only ever feeds them 28×28 images. Filters use
//! reflect-101 borders (`dcb|abcd|cba`), geometric resampling is
//! nearest-neighbour with zero fill outside the frame.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{AugmentationId, AugmentationParams};
use crate::dataset::{PIXELS, SIDE};

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Reflect-101 border index.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

pub fn transpose(src: &[u8], side: usize) -> Vec<u8> {
    let mut out = vec![0; side * side];
    for r in 0..side {
        for c in 0..side {
            out[c * side + r] = src[r * side + c];
        }
    }
    out
}

/// Rotates counter-clockwise by `k` quarter turns.
pub fn rotate90(src: &[u8], side: usize, k: u8) -> Vec<u8> {
    let mut out = src.to_vec();
    for _ in 0..(k % 4) {
        let prev = out.clone();
        for r in 0..side {
            for c in 0..side {
                // counter-clockwise: out[r][c] = prev[c][side-1-r]
                out[r * side + c] = prev[c * side + (side - 1 - r)];
            }
        }
    }
    out
}

pub fn invert(src: &[u8]) -> Vec<u8> {
    src.iter().map(|&v| 255 - v).collect()
}

/// Separable convolution with a symmetric 1-D kernel, rounded once at the end.
fn convolve_separable(src: &[u8], side: usize, weights: &[f64]) -> Vec<u8> {
    let radius = (weights.len() / 2) as isize;
    let mut tmp = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let cc = reflect(c as isize + j as isize - radius, side);
                acc += w * f64::from(src[r * side + cc]);
            }
            tmp[r * side + c] = acc;
        }
    }
    let mut out = vec![0; side * side];
    for r in 0..side {
        for c in 0..side {
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let rr = reflect(r as isize + j as isize - radius, side);
                acc += w * tmp[rr * side + c];
            }
            out[r * side + c] = to_u8(acc);
        }
    }
    out
}

/// Mean filter over a `ksize`×`ksize` window.
pub fn box_blur(src: &[u8], side: usize, ksize: usize) -> Vec<u8> {
    let w = 1.0 / ksize as f64;
    convolve_separable(src, side, &vec![w; ksize])
}

/// Sigma used when only a kernel size is given (OpenCV's rule).
pub fn sigma_for_ksize(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

pub fn gaussian_weights(ksize: usize, sigma: f64) -> Vec<f64> {
    let radius = (ksize / 2) as f64;
    let raw: Vec<f64> = (0..ksize)
        .map(|j| {
            let x = j as f64 - radius;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn gaussian_blur(src: &[u8], side: usize, ksize: usize, sigma: f64) -> Vec<u8> {
    convolve_separable(src, side, &gaussian_weights(ksize, sigma))
}

/// Nearest-neighbour downscale by `factor`, then nearest-neighbour upscale
/// back to `side`.
pub fn downscale(src: &[u8], side: usize, factor: f64) -> Vec<u8> {
    let low = ((side as f64 * factor).round() as usize).clamp(1, side);
    let pick = |i: usize, from: usize, to: usize| -> usize {
        (((i as f64 + 0.5) * from as f64 / to as f64) as usize).min(from - 1)
    };
    let mut small = vec![0; low * low];
    for r in 0..low {
        for c in 0..low {
            small[r * low + c] = src[pick(r, side, low) * side + pick(c, side, low)];
        }
    }
    let mut out = vec![0; side * side];
    for r in 0..side {
        for c in 0..side {
            out[r * side + c] = small[pick(r, low, side) * low + pick(c, low, side)];
        }
    }
    out
}

/// Histogram equalization. A single-valued image is returned unchanged.
pub fn equalize(src: &[u8]) -> Vec<u8> {
    let mut hist = [0usize; 256];
    for &v in src {
        hist[v as usize] += 1;
    }
    let total = src.len();
    let Some(first) = hist.iter().position(|&h| h > 0) else {
        return src.to_vec();
    };
    let cdf_min = hist[first];
    if cdf_min == total {
        return src.to_vec();
    }
    let span = (total - cdf_min) as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0;
    for (v, &h) in hist.iter().enumerate() {
        cdf += h;
        // divide the exact product so half-way levels round consistently
        lut[v] = to_u8((cdf.saturating_sub(cdf_min) * 255) as f64 / span);
    }
    src.iter().map(|&v| lut[v as usize]).collect()
}

pub fn gauss_noise<R: Rng + ?Sized>(src: &[u8], sigma: f64, rng: &mut R) -> Vec<u8> {
    if sigma == 0.0 {
        return src.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    src.iter()
        .map(|&v| to_u8(f64::from(v) + normal.sample(rng)))
        .collect()
}

/// Affine shift/scale/rotate about the image centre.
///
/// `dx`, `dy` are fractions of the side; `angle_deg` is counter-clockwise.
pub fn shift_scale_rotate(
    src: &[u8],
    side: usize,
    dx: f64,
    dy: f64,
    scale: f64,
    angle_deg: f64,
) -> Vec<u8> {
    let centre = (side as f64 - 1.0) / 2.0;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let tx = dx * side as f64;
    let ty = dy * side as f64;
    let mut out = vec![0; side * side];
    for r in 0..side {
        for c in 0..side {
            // invert: p = R⁻¹ (p' - centre - t) / s + centre
            let x = c as f64 - centre - tx;
            let y = r as f64 - centre - ty;
            let sx = (cos * x - sin * y) / scale + centre;
            let sy = (sin * x + cos * y) / scale + centre;
            let (sc, sr) = (sx.round(), sy.round());
            if sc >= 0.0 && sr >= 0.0 && (sc as usize) < side && (sr as usize) < side {
                out[r * side + c] = src[sr as usize * side + sc as usize];
            }
        }
    }
    out
}

fn to_array(v: Vec<u8>) -> [u8; PIXELS] {
    v.try_into().expect("kernel preserves the frame")
}

/// Runs the kernel for `id`, drawing its random magnitudes from `rng`.
pub fn apply_kernel<R: Rng + ?Sized>(
    px: &[u8; PIXELS],
    id: AugmentationId,
    params: &AugmentationParams,
    rng: &mut R,
) -> [u8; PIXELS] {
    let choose = |sizes: &[usize], rng: &mut R| sizes[rng.random_range(0..sizes.len())];
    let out = match id {
        AugmentationId::Transpose => transpose(px, SIDE),
        AugmentationId::Blur => {
            let k = choose(&params.blur_kernel_sizes, rng);
            box_blur(px, SIDE, k)
        }
        AugmentationId::Downscale => downscale(px, SIDE, params.downscale_factor),
        AugmentationId::Equalize => equalize(px),
        AugmentationId::GaussNoise => {
            let (lo, hi) = params.gauss_noise_var;
            let var = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            gauss_noise(px, var.sqrt(), rng)
        }
        AugmentationId::GaussianBlur => {
            let k = choose(&params.gaussian_blur_kernel_sizes, rng);
            gaussian_blur(px, SIDE, k, sigma_for_ksize(k))
        }
        AugmentationId::InvertImg => invert(px),
        AugmentationId::ShiftScaleRotate => {
            let sym = |limit: f64, rng: &mut R| {
                if limit > 0.0 {
                    rng.random_range(-limit..=limit)
                } else {
                    0.0
                }
            };
            let dx = sym(params.shift_limit, rng);
            let dy = sym(params.shift_limit, rng);
            let scale = 1.0 + sym(params.scale_limit, rng);
            let angle = sym(params.rotate_limit_deg, rng);
            shift_scale_rotate(px, SIDE, dx, dy, scale, angle)
        }
        AugmentationId::RandomRotate90 => {
            let k = rng.random_range(0..4u8);
            rotate90(px, SIDE, k)
        }
    };
    to_array(out)
}
