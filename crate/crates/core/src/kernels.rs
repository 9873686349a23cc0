//! Derivative-of-Gaussian filter construction.
//!
//! A 2-D derivative-of-Gaussian of orders `(m, n)` factors into two 1-D
//! kernels, one per axis. Each 1-D factor is the Gaussian differentiated `m`
//! times, expressed through the physicists' Hermite polynomial:
//!
//! ```text
//! d^m/dx^m G(x) = (-1/(sigma*sqrt(2)))^m * H_m(x/(sigma*sqrt(2))) * G(x)
//! ```
//!
//! Sampled factors are rescaled to unit L1 mass so the blur factor sums to 1
//! and derivative factors have unit absolute gain, making responses
//! comparable across orders.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Highest derivative order in the family: jets stop at second order.
pub const MAX_ORDER: usize = 2;

/// Derivative-order pairs of the six-kernel family, in channel order.
pub const JET_ORDERS: [(usize, usize); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

/// Evaluates the physicists' Hermite polynomial `H_m(x)` by the two-term
/// recurrence `H_{m+1}(x) = 2x H_m(x) - 2m H_{m-1}(x)`.
pub fn hermite_eval(order: usize, x: f64) -> f64 {
    if order == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 2.0 * x;
    for k in 1..order {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn validate_taps_args(order: usize, sigma: f64, support_radius: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "derivative order {order} exceeds the second-order family"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if support_radius < 1 {
        return Err(Error::InvalidParameter(
            "support radius must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Raw samples of the order-`m` Gaussian derivative at integer offsets
/// `-r..=r`, before L1 rescaling.
fn dtg_samples_1d(order: usize, sigma: f64, support_radius: usize) -> Vec<f64> {
    let r = support_radius as isize;
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let scale = -1.0 / (sigma * std::f64::consts::SQRT_2);
    (-r..=r)
        .map(|t| {
            let x = t as f64;
            let gauss = norm * (-x * x / (2.0 * sigma * sigma)).exp();
            scale.powi(order as i32) * hermite_eval(order, x / (sigma * std::f64::consts::SQRT_2)) * gauss
        })
        .collect()
}

/// Samples the order-`m` derivative-of-Gaussian on `-r..=r` and rescales so
/// the taps have unit L1 mass.
///
/// Point sampling leaves even derivative orders with a small nonzero sum
/// (~1e-4 at `r = 4`), which would make flat images draw a phantom response;
/// their mean is removed before normalization. Odd orders are zero-sum by
/// antisymmetry as sampled.
pub fn dtg_taps_1d(order: usize, sigma: f64, support_radius: usize) -> Result<Vec<f64>> {
    validate_taps_args(order, sigma, support_radius)?;
    let mut taps = dtg_samples_1d(order, sigma, support_radius);
    if order >= 2 && order % 2 == 0 {
        let mean = taps.iter().sum::<f64>() / taps.len() as f64;
        for t in &mut taps {
            *t -= mean;
        }
    }
    let l1: f64 = taps.iter().map(|t| t.abs()).sum();
    for t in &mut taps {
        *t /= l1;
    }
    Ok(taps)
}

/// Default sampling half-width: the Gaussian tail beyond `4*sigma` carries
/// less than 1e-4 of the mass.
pub fn default_support_radius(sigma: f64) -> usize {
    ((4.0 * sigma).ceil() as usize).max(1)
}

/// A separable 2-D derivative-of-Gaussian of orders `(m, n)` at scale
/// `sigma`. The dense kernel is exactly the outer product of the two stored
/// 1-D factors; objects are immutable after construction.
#[derive(Debug, Clone)]
pub struct DtgKernel {
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    pub support_radius: usize,
    /// Order-`m` factor applied across columns.
    pub taps_x: Vec<f64>,
    /// Order-`n` factor applied down rows.
    pub taps_y: Vec<f64>,
}

/// Builds the separable kernel for orders `(m, n)`; rejects `m + n > 2`.
pub fn dtg_kernel_2d(m: usize, n: usize, sigma: f64, support_radius: usize) -> Result<DtgKernel> {
    if m + n > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "kernel orders ({m},{n}) exceed the second-order family"
        )));
    }
    Ok(DtgKernel {
        m,
        n,
        sigma,
        support_radius,
        taps_x: dtg_taps_1d(m, sigma, support_radius)?,
        taps_y: dtg_taps_1d(n, sigma, support_radius)?,
    })
}

impl DtgKernel {
    /// Side length of the dense realization, `2r + 1`.
    pub fn side(&self) -> usize {
        2 * self.support_radius + 1
    }

    /// Dense row-major realization `K[y][x] = taps_y[y] * taps_x[x]`.
    pub fn dense(&self) -> Vec<f64> {
        let side = self.side();
        let mut out = Vec::with_capacity(side * side);
        for &ty in &self.taps_y {
            for &tx in &self.taps_x {
                out.push(ty * tx);
            }
        }
        out
    }

    /// The full six-kernel family in channel order.
    pub fn family(sigma: f64, support_radius: usize) -> Result<Vec<DtgKernel>> {
        JET_ORDERS
            .iter()
            .map(|&(m, n)| dtg_kernel_2d(m, n, sigma, support_radius))
            .collect()
    }

    /// Dumps the dense realization as CSV, one kernel row per line.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let side = self.side();
        crate::image::write_csv(path, &self.dense(), side, side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_base_cases() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(1, 2.0), 4.0);
        assert_eq!(hermite_eval(2, 0.0), -2.0);
    }

    #[test]
    fn hermite_matches_closed_forms() {
        // H0 = 1, H1 = 2x, H2 = 4x^2 - 2 under the physicists' convention.
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = (state >> 11) as f64 / (1u64 << 53) as f64 * 8.0 - 4.0;
            assert!((hermite_eval(0, x) - 1.0).abs() <= 1e-12);
            assert!((hermite_eval(1, x) - 2.0 * x).abs() <= 1e-12);
            assert!((hermite_eval(2, x) - (4.0 * x * x - 2.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn hermite_parity() {
        for order in 0..=4 {
            for &x in &[0.3, 1.1, 2.9] {
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                assert!((hermite_eval(order, -x) - sign * hermite_eval(order, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_derivative_matches_gaussian_slope() {
        // d/dx G(x) = -(x/sigma^2) G(x); the Hermite route must agree.
        let sigma = 1.3;
        let samples = dtg_samples_1d(1, sigma, 5);
        let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
        for (i, &s) in samples.iter().enumerate() {
            let x = i as f64 - 5.0;
            let expected = -(x / (sigma * sigma)) * norm * (-x * x / (2.0 * sigma * sigma)).exp();
            assert!((s - expected).abs() < 1e-14, "x={x}: {s} vs {expected}");
        }
    }

    #[test]
    fn taps_l1_and_parity() {
        for &sigma in &[0.8, 1.0, 1.6] {
            let r = default_support_radius(sigma);
            for order in 0..=2 {
                let taps = dtg_taps_1d(order, sigma, r).unwrap();
                let l1: f64 = taps.iter().map(|t| t.abs()).sum();
                assert!((l1 - 1.0).abs() <= 1e-12);
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                for (a, b) in taps.iter().zip(taps.iter().rev()) {
                    assert_eq!(*a, sign * *b, "order {order} parity");
                }
            }
        }
    }

    #[test]
    fn odd_tap_is_zero_at_center() {
        for &sigma in &[0.7, 1.0, 2.2] {
            let taps = dtg_taps_1d(1, sigma, default_support_radius(sigma)).unwrap();
            assert_eq!(taps[taps.len() / 2], 0.0);
        }
    }

    #[test]
    fn blur_taps_sum_to_one_and_positive() {
        let taps = dtg_taps_1d(0, 1.0, 4).unwrap();
        assert!(taps.iter().all(|&t| t > 0.0));
        assert!((taps.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn second_derivative_has_no_dc_response() {
        // Quadrature oracle: Simpson integration of G'' over a wide support
        // confirms the continuum integral vanishes.
        let sigma = 1.0;
        let g2 = |x: f64| {
            let g = (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
            (x * x / (sigma * sigma * sigma * sigma) - 1.0 / (sigma * sigma)) * g
        };
        let (lo, hi, steps) = (-8.0, 8.0, 16_000usize);
        let h = (hi - lo) / steps as f64;
        let mut integral = g2(lo) + g2(hi);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * g2(lo + i as f64 * h);
        }
        integral *= h / 3.0;
        assert!(integral.abs() <= 1e-9, "quadrature gave {integral}");

        // The unnormalized tap values (mean-removed samples) sum to zero.
        let raw = dtg_samples_1d(2, 1.0, 4);
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let corrected_sum: f64 = raw.iter().map(|s| s - mean).sum();
        assert!(corrected_sum.abs() <= 1e-6);

        // And the normalized taps keep that property.
        let taps = dtg_taps_1d(2, 1.0, 4).unwrap();
        assert!(taps.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(dtg_taps_1d(1, 0.0, 4).is_err());
        assert!(dtg_taps_1d(1, -1.0, 4).is_err());
        assert!(dtg_taps_1d(1, 1.0, 0).is_err());
        assert!(dtg_taps_1d(3, 1.0, 4).is_err());
        assert!(dtg_kernel_2d(2, 1, 1.0, 4).is_err());
    }

    #[test]
    fn dense_is_outer_product() {
        let k = dtg_kernel_2d(1, 1, 1.0, 4).unwrap();
        let dense = k.dense();
        let side = k.side();
        for y in 0..side {
            for x in 0..side {
                assert_eq!(dense[y * side + x], k.taps_y[y] * k.taps_x[x]);
            }
        }
    }

    #[test]
    fn blur_kernel_mass_is_one() {
        let k = dtg_kernel_2d(0, 0, 1.3, 6).unwrap();
        assert!((k.dense().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gradient_kernel_parity_2d() {
        // (1,0) is anti-symmetric across columns and symmetric down rows.
        let k = dtg_kernel_2d(1, 0, 1.0, 4).unwrap();
        let dense = k.dense();
        let side = k.side();
        for y in 0..side {
            for x in 0..side {
                let mirrored_x = dense[y * side + (side - 1 - x)];
                let mirrored_y = dense[(side - 1 - y) * side + x];
                assert_eq!(dense[y * side + x], -mirrored_x);
                assert_eq!(dense[y * side + x], mirrored_y);
            }
        }
    }

    #[test]
    fn dense_matches_direct_2d_sampling() {
        // Oracle: sample G'(x) * G'(y) directly on the grid and normalize
        // each axis by the L1 mass of its own 1-D profile.
        let sigma = 1.0;
        let r = 4_usize;
        let k = dtg_kernel_2d(1, 1, sigma, r).unwrap();
        let dense = k.dense();
        let side = 2 * r + 1;

        let profile: Vec<f64> = (-(r as isize)..=r as isize)
            .map(|t| {
                let x = t as f64;
                let g = (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
                -(x / (sigma * sigma)) * g
            })
            .collect();
        let l1: f64 = profile.iter().map(|v| v.abs()).sum();

        let mut max_diff = 0.0f64;
        for y in 0..side {
            for x in 0..side {
                let direct = profile[y] / l1 * (profile[x] / l1);
                max_diff = max_diff.max((dense[y * side + x] - direct).abs());
            }
        }
        assert!(max_diff <= 1e-10, "max diff {max_diff}");
    }

    #[test]
    fn family_has_six_members_in_channel_order() {
        let fam = DtgKernel::family(1.0, 4).unwrap();
        let orders: Vec<(usize, usize)> = fam.iter().map(|k| (k.m, k.n)).collect();
        assert_eq!(orders, JET_ORDERS.to_vec());
    }
}
