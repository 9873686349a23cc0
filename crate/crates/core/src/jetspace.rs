//! Jet-space construction: separable filtering by the six-kernel family,
//! scale and contrast normalization, and the similarity-transform maps used
//! by the equivariance tests.
//!
//! Each channel holds, per pixel, `(-1)^(m+n) <G^(m,n) | I>` evaluated with
//! the window centered on that pixel, scaled by `sigma^(m+n)`. Convolution
//! runs as two 1-D passes with replicate padding at the borders.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::kernels::{dtg_taps_1d, JET_ORDERS, MAX_ORDER};

/// Contrast-normalization constant of the Weber-law multiplier
/// `log(1 + L/0.03) / L`.
pub const WEBER_CONSTANT: f64 = 0.03;

/// Per-pixel six-channel jet of derivative responses, channel order
/// `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)`.
#[derive(Debug, Clone)]
pub struct JetVector {
    width: usize,
    height: usize,
    sigma: f64,
    normalized: bool,
    channels: Vec<Vec<f64>>,
}

impl JetVector {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Whether channels carry the `sigma^(m+n)` scale normalization.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Derivative orders `(m, n)` of a channel index.
    pub fn orders(index: usize) -> (usize, usize) {
        JET_ORDERS[index]
    }

    /// The six-vector at pixel `(x, y)`.
    pub fn jet_at(&self, x: usize, y: usize) -> [f64; 6] {
        let i = y * self.width + x;
        [
            self.channels[0][i],
            self.channels[1][i],
            self.channels[2][i],
            self.channels[3][i],
            self.channels[4][i],
            self.channels[5][i],
        ]
    }

    /// Dumps one channel for inspection; the format follows the file
    /// extension (`.pgm` 16-bit rescaled, `.csv` raw values).
    pub fn dump_channel(&self, index: usize, path: impl AsRef<Path>) -> Result<()> {
        if index >= self.channels.len() {
            return Err(Error::InvalidParameter(format!(
                "channel index {index} out of range"
            )));
        }
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => {
                crate::image::write_pgm16(path, &self.channels[index], self.width, self.height)
            }
            Some("csv") => {
                crate::image::write_csv(path, &self.channels[index], self.width, self.height)
            }
            other => Err(Error::Format(format!(
                "unsupported dump extension {other:?} (expected pgm or csv)"
            ))),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Horizontal pass: `out(x, y) = sum_t taps[t] * src(clamp(x + t - r), y)`.
pub(crate) fn correlate_rows(src: &[f64], width: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(width)
        .zip(src.par_chunks(width))
        .for_each(|(orow, srow)| {
            let clamped = |x: isize| srow[x.clamp(0, width as isize - 1) as usize];
            let interior = if width > 2 * r { r..width - r } else { 0..0 };
            for x in 0..interior.start {
                orow[x] = taps
                    .iter()
                    .enumerate()
                    .map(|(t, &tap)| tap * clamped(x as isize + t as isize - r as isize))
                    .sum();
            }
            for x in interior.clone() {
                orow[x] = dot(taps, &srow[x - r..x - r + taps.len()]);
            }
            for x in interior.end.max(interior.start)..width {
                orow[x] = taps
                    .iter()
                    .enumerate()
                    .map(|(t, &tap)| tap * clamped(x as isize + t as isize - r as isize))
                    .sum();
            }
        });
    out
}

/// Vertical pass: `out(x, y) = sum_t taps[t] * src(x, clamp(y + t - r))`.
pub(crate) fn correlate_cols(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, orow)| {
            for (t, &tap) in taps.iter().enumerate() {
                let sy = (y as isize + t as isize - r as isize).clamp(0, height as isize - 1);
                let srow = &src[sy as usize * width..(sy as usize + 1) * width];
                for (o, s) in orow.iter_mut().zip(srow) {
                    *o += tap * s;
                }
            }
        });
    out
}

fn compute_jet_impl(
    image: &GrayImage,
    sigma: f64,
    support_radius: usize,
    normalize: bool,
) -> Result<JetVector> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let min = 2 * support_radius + 3;
    if image.width() < min || image.height() < min {
        return Err(Error::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            radius: support_radius,
            min,
        });
    }

    let taps: Vec<Vec<f64>> = (0..=MAX_ORDER)
        .map(|order| dtg_taps_1d(order, sigma, support_radius))
        .collect::<Result<_>>()?;

    let (w, h) = (image.width(), image.height());
    // The horizontal pass of order m is shared by every channel with that
    // x-order, leaving 3 + 6 passes instead of 12.
    let horiz: Vec<Vec<f64>> = taps
        .iter()
        .map(|t| correlate_rows(image.pixels(), w, t))
        .collect();

    let channels: Vec<Vec<f64>> = JET_ORDERS
        .par_iter()
        .map(|&(m, n)| {
            let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
            let scale = if normalize {
                sign * sigma.powi((m + n) as i32)
            } else {
                sign
            };
            let scaled_taps: Vec<f64> = taps[n].iter().map(|t| t * scale).collect();
            correlate_cols(&horiz[m], w, h, &scaled_taps)
        })
        .collect();

    Ok(JetVector {
        width: w,
        height: h,
        sigma,
        normalized: normalize,
        channels,
    })
}

/// Computes the scale-normalized six-channel jet of an image.
pub fn compute_jet(image: &GrayImage, sigma: f64, support_radius: usize) -> Result<JetVector> {
    compute_jet_impl(image, sigma, support_radius, true)
}

/// Same as [`compute_jet`] without the `sigma^(m+n)` factor; used to check
/// the normalization identity at `sigma = 1`.
pub fn compute_jet_unnormalized(
    image: &GrayImage,
    sigma: f64,
    support_radius: usize,
) -> Result<JetVector> {
    compute_jet_impl(image, sigma, support_radius, false)
}

/// Weber-law contrast normalization: each pixel's six-vector is scaled by
/// `log(1 + L/weber) / L` where `L` is its l2 norm; zero vectors stay zero.
pub fn contrast_normalize_with(mut jet: JetVector, weber: f64) -> JetVector {
    let n = jet.width * jet.height;
    let ch = &jet.channels;
    let mult: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let l2 = (0..6).map(|c| ch[c][i] * ch[c][i]).sum::<f64>().sqrt();
            if l2 > 0.0 {
                (1.0 + l2 / weber).ln() / l2
            } else {
                0.0
            }
        })
        .collect();
    jet.channels.par_iter_mut().for_each(|chan| {
        for (v, m) in chan.iter_mut().zip(&mult) {
            *v *= m;
        }
    });
    jet
}

/// [`contrast_normalize_with`] at the default constant 0.03.
pub fn contrast_normalize(jet: JetVector) -> JetVector {
    contrast_normalize_with(jet, WEBER_CONSTANT)
}

/// Rotates a six-vector by `theta`: the gradient pair turns as a vector, the
/// second-order triple as a symmetric 2x2 tensor, and the zeroth order is
/// untouched. First-order terms return after 2*pi, second-order after pi.
pub fn rotate_jet(jet: &[f64; 6], theta: f64) -> [f64; 6] {
    let (s, c) = theta.sin_cos();
    let [j00, j10, j01, j20, j11, j02] = *jet;
    [
        j00,
        c * j10 - s * j01,
        s * j10 + c * j01,
        c * c * j20 - 2.0 * s * c * j11 + s * s * j02,
        s * c * j20 + (c * c - s * s) * j11 - s * c * j02,
        s * s * j20 + 2.0 * s * c * j11 + c * c * j02,
    ]
}

/// Reflects a six-vector about the line y = x: swaps `(1,0) <-> (0,1)` and
/// `(2,0) <-> (0,2)`; the zeroth order and `(1,1)` are unchanged.
pub fn reflect_jet(jet: &[f64; 6]) -> [f64; 6] {
    let [j00, j10, j01, j20, j11, j02] = *jet;
    [j00, j01, j10, j02, j11, j20]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::default_support_radius;

    fn random_image(width: usize, height: usize, seed: u64) -> GrayImage {
        let mut state = seed;
        GrayImage::from_fn(width, height, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 255.0
        })
    }

    /// Brute-force oracle: dense 2-D correlation with the directly sampled
    /// Gaussian-derivative grid (independent of the separable path), with
    /// replicate padding and the `(-1)^(m+n)` sign.
    fn dense_jet_channel(
        image: &GrayImage,
        m: usize,
        n: usize,
        sigma: f64,
        r: usize,
    ) -> Vec<f64> {
        use std::f64::consts::PI;
        let profile = |order: usize| -> Vec<f64> {
            let mut raw: Vec<f64> = (-(r as isize)..=r as isize)
                .map(|t| {
                    let x = t as f64;
                    let g = (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
                    match order {
                        0 => g,
                        1 => -(x / (sigma * sigma)) * g,
                        2 => (x * x / (sigma * sigma * sigma * sigma) - 1.0 / (sigma * sigma)) * g,
                        _ => unreachable!(),
                    }
                })
                .collect();
            if order == 2 {
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                for v in &mut raw {
                    *v -= mean;
                }
            }
            let l1: f64 = raw.iter().map(|v| v.abs()).sum();
            raw.into_iter().map(|v| v / l1).collect()
        };
        let (px, py) = (profile(m), profile(n));
        let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
        let (w, h) = (image.width(), image.height());
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ti, ty) in py.iter().enumerate() {
                    let sy = (y as isize + ti as isize - r as isize).clamp(0, h as isize - 1);
                    for (tj, tx) in px.iter().enumerate() {
                        let sx = (x as isize + tj as isize - r as isize).clamp(0, w as isize - 1);
                        acc += ty * tx * image.get(sx as usize, sy as usize);
                    }
                }
                out[y * w + x] = sign * acc * sigma.powi((m + n) as i32);
            }
        }
        out
    }

    #[test]
    fn constant_image_jet() {
        let img = GrayImage::constant(24, 20, 37.5);
        let jet = compute_jet(&img, 1.0, 4).unwrap();
        for &v in jet.channel(0) {
            assert!((v - 37.5).abs() <= 1e-10);
        }
        for c in 1..6 {
            for &v in jet.channel(c) {
                assert!(v.abs() <= 1e-10, "channel {c}");
            }
        }
    }

    #[test]
    fn ramp_image_jet() {
        // I(x, y) = x. The (1,0) response in the interior is the frozen
        // constant below (computed with the dense sampling oracle); the
        // remaining derivative channels vanish.
        const RAMP_GRADIENT_RESPONSE: f64 = 1.3743407200743027;
        let img = GrayImage::from_fn(32, 24, |x, _| x as f64);
        let jet = compute_jet(&img, 1.0, 4).unwrap();
        let oracle = dense_jet_channel(&img, 1, 0, 1.0, 4);
        for y in 5..19 {
            for x in 5..27 {
                let i = y * 32 + x;
                let got = jet.channel(1)[i];
                assert!((got - RAMP_GRADIENT_RESPONSE).abs() <= 1e-8, "got {got}");
                assert!((got - oracle[i]).abs() <= 1e-10);
                for &c in &[2, 3, 4, 5] {
                    assert!(jet.channel(c)[i].abs() <= 1e-8, "channel {c}");
                }
            }
        }
    }

    #[test]
    fn separable_matches_dense_oracle() {
        let img = random_image(32, 32, 99);
        let jet = compute_jet(&img, 1.0, 4).unwrap();
        for (idx, &(m, n)) in JET_ORDERS.iter().enumerate() {
            let dense = dense_jet_channel(&img, m, n, 1.0, 4);
            let max_diff = jet
                .channel(idx)
                .iter()
                .zip(&dense)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff <= 1e-10, "channel ({m},{n}): {max_diff}");
        }
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = GrayImage::constant(10, 10, 0.0);
        assert!(matches!(
            compute_jet(&img, 1.0, 4),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn intensity_addition_shifts_only_zeroth_channel() {
        let img = random_image(24, 24, 5);
        let alpha = 17.25;
        let mut shifted = img.clone();
        for p in shifted.pixels_mut() {
            *p += alpha;
        }
        let jet_a = compute_jet(&img, 1.0, 4).unwrap();
        let jet_b = compute_jet(&shifted, 1.0, 4).unwrap();
        for (a, b) in jet_a.channel(0).iter().zip(jet_b.channel(0)) {
            assert!((b - a - alpha).abs() <= 1e-10);
        }
        for c in 1..6 {
            for (a, b) in jet_a.channel(c).iter().zip(jet_b.channel(c)) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn intensity_scaling_scales_all_channels() {
        let img = random_image(24, 24, 11);
        let eps = 0.37;
        let mut scaled = img.clone();
        for p in scaled.pixels_mut() {
            *p *= eps;
        }
        let jet_a = compute_jet(&img, 1.0, 4).unwrap();
        let jet_b = compute_jet(&scaled, 1.0, 4).unwrap();
        for c in 0..6 {
            for (a, b) in jet_a.channel(c).iter().zip(jet_b.channel(c)) {
                assert!((b - eps * a).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn scale_normalization_identity_at_unit_sigma() {
        let img = random_image(20, 20, 3);
        let a = compute_jet(&img, 1.0, 4).unwrap();
        let b = compute_jet_unnormalized(&img, 1.0, 4).unwrap();
        for c in 0..6 {
            assert_eq!(a.channel(c), b.channel(c));
        }
        assert!(a.is_normalized() && !b.is_normalized());
    }

    #[test]
    fn scale_normalization_multiplies_by_sigma_powers() {
        let img = random_image(28, 28, 8);
        let sigma = 1.6;
        let r = default_support_radius(sigma);
        let norm = compute_jet(&img, sigma, r).unwrap();
        let raw = compute_jet_unnormalized(&img, sigma, r).unwrap();
        for (idx, &(m, n)) in JET_ORDERS.iter().enumerate() {
            let factor = sigma.powi((m + n) as i32);
            for (a, b) in norm.channel(idx).iter().zip(raw.channel(idx)) {
                assert!((a - factor * b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn weber_multiplier_reference_value() {
        // A pixel whose jet norm equals the Weber constant is scaled by
        // log(2)/0.03; frozen from direct scalar evaluation.
        const EXPECTED_MULTIPLIER: f64 = 23.104906018664845;
        let jet6 = [0.03, 0.0, 0.0, 0.0, 0.0, 0.0];
        let jet = JetVector {
            width: 1,
            height: 1,
            sigma: 1.0,
            normalized: true,
            channels: jet6.iter().map(|&v| vec![v]).collect(),
        };
        let out = contrast_normalize(jet);
        assert!((out.channel(0)[0] - 0.03 * EXPECTED_MULTIPLIER).abs() <= 1e-12);
        for c in 1..6 {
            assert_eq!(out.channel(c)[0], 0.0);
        }
    }

    #[test]
    fn contrast_normalize_zero_vector_and_direction() {
        let jet6 = [0.4, -0.1, 0.2, 0.05, -0.3, 0.0];
        let channels: Vec<Vec<f64>> = jet6.iter().map(|&v| vec![v, 0.0]).collect();
        let jet = JetVector {
            width: 2,
            height: 1,
            sigma: 1.0,
            normalized: true,
            channels,
        };
        let out = contrast_normalize(jet);
        // Zero vector stays zero.
        for c in 0..6 {
            assert_eq!(out.channel(c)[1], 0.0);
        }
        // Non-zero pixel is a positive scalar multiple of the input.
        let ratio = out.channel(0)[0] / jet6[0];
        assert!(ratio > 0.0);
        for c in 1..6 {
            if jet6[c] != 0.0 {
                assert!((out.channel(c)[0] / jet6[c] - ratio).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rotate_jet_theta_zero_is_identity() {
        let jet = [1.0, 2.0, -3.0, 0.5, 4.0, -1.5];
        assert_eq!(rotate_jet(&jet, 0.0), jet);
    }

    #[test]
    fn rotate_jet_pi_negates_gradient_and_fixes_second_order() {
        let jet = [1.0, 2.0, -3.0, 0.5, 4.0, -1.5];
        let out = rotate_jet(&jet, std::f64::consts::PI);
        assert!((out[0] - jet[0]).abs() <= 1e-12);
        assert!((out[1] + jet[1]).abs() <= 1e-12);
        assert!((out[2] + jet[2]).abs() <= 1e-12);
        for c in 3..6 {
            assert!((out[c] - jet[c]).abs() <= 1e-12);
        }
    }

    #[test]
    fn reflect_jet_swaps_and_is_involutive() {
        let jet = [1.0, 2.0, -3.0, 0.5, 4.0, -1.5];
        let out = reflect_jet(&jet);
        assert_eq!(out, [1.0, -3.0, 2.0, -1.5, 4.0, 0.5]);
        assert_eq!(reflect_jet(&out), jet);
        let symmetric = [1.0, 2.0, 2.0, 0.5, 4.0, 0.5];
        assert_eq!(reflect_jet(&symmetric), symmetric);
    }

    #[test]
    fn transpose_equivariance() {
        let img = random_image(26, 22, 77);
        let transposed = GrayImage::from_fn(img.height(), img.width(), |x, y| img.get(y, x));
        let jet = compute_jet(&img, 1.0, 4).unwrap();
        let jet_t = compute_jet(&transposed, 1.0, 4).unwrap();
        for y in 0..img.height() {
            for x in 0..img.width() {
                let expected = reflect_jet(&jet.jet_at(x, y));
                let got = jet_t.jet_at(y, x);
                for c in 0..6 {
                    assert!((expected[c] - got[c]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn quarter_turn_equivariance() {
        // Lossless grid rotation: N(x', y') = O(y', H-1-x'). The matching
        // jet-space map is rotate_jet(.., pi/2) on interior pixels.
        let img = random_image(30, 26, 13);
        let (w, h) = (img.width(), img.height());
        let rotated = GrayImage::from_fn(h, w, |x, y| img.get(y, h - 1 - x));
        let r = 4usize;
        let jet = compute_jet(&img, 1.0, r).unwrap();
        let jet_r = compute_jet(&rotated, 1.0, r).unwrap();
        let margin = r + 1;
        for y in margin..h - margin {
            for x in margin..w - margin {
                let expected = rotate_jet(&jet.jet_at(x, y), std::f64::consts::FRAC_PI_2);
                let got = jet_r.jet_at(h - 1 - y, x);
                for c in 0..6 {
                    assert!(
                        (expected[c] - got[c]).abs() <= 1e-6,
                        "pixel ({x},{y}) channel {c}: {} vs {}",
                        expected[c],
                        got[c]
                    );
                }
            }
        }
    }

    #[test]
    fn channel_dump_formats() {
        let img = random_image(16, 16, 21);
        let jet = compute_jet(&img, 1.0, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        jet.dump_channel(1, dir.path().join("c1.pgm")).unwrap();
        jet.dump_channel(1, dir.path().join("c1.csv")).unwrap();
        assert!(jet.dump_channel(1, dir.path().join("c1.txt")).is_err());
        assert!(jet.dump_channel(9, dir.path().join("c9.csv")).is_err());
        let csv = std::fs::read_to_string(dir.path().join("c1.csv")).unwrap();
        assert_eq!(csv.lines().count(), 16);
    }
}
