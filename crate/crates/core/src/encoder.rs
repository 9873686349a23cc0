//! Circular binary encoding of jet channels and histogram features.
//!
//! Every channel of the contrast-normalized jet is encoded LBP-style: the
//! `N` circular neighbors at radius `R` are compared against the center and
//! the comparison bits form an integer code. Per-channel code histograms
//! (optionally reduced through the uniform-pattern map) concatenate into the
//! final feature vector.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jetspace::{compute_jet, contrast_normalize_with};
use crate::kernels::default_support_radius;

pub mod cache;

/// Which image representation gets encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    /// Encode the six-channel jet (the full descriptor).
    Ljp,
    /// Encode the raw intensity channel only: the plain LBP baseline.
    Lbp,
}

/// Histogram bin mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mapping {
    /// Uniform-pattern (u2) reduction: `N(N-1) + 3` bins.
    Uniform,
    /// One bin per code: `2^N` bins.
    Raw,
}

/// Neighbor sampling rule at non-integer positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

macro_rules! impl_str_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(Error::InvalidParameter(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), s
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $($ty::$variant => f.write_str($name),)+
                }
            }
        }
    };
}

impl_str_enum!(Descriptor { "ljp" => Ljp, "lbp" => Lbp });
impl_str_enum!(Mapping { "uniform" => Uniform, "raw" => Raw });
impl_str_enum!(Interpolation { "bilinear" => Bilinear, "nearest" => Nearest });

/// Full configuration of the feature extraction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub descriptor: Descriptor,
    /// Gaussian scale of the jet.
    pub sigma: f64,
    /// Sampling half-width of the kernels; `None` means `ceil(4 * sigma)`.
    pub support_radius: Option<usize>,
    /// Neighbor circle radius `R`.
    pub radius: f64,
    /// Neighbor count `N`.
    pub neighbors: usize,
    /// Keep the zeroth-order channel (it carries no geometry, so the
    /// default drops it).
    pub include_zeroth: bool,
    pub mapping: Mapping,
    pub interpolation: Interpolation,
    /// Constant of the Weber-law contrast normalization.
    pub weber_constant: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            descriptor: Descriptor::Ljp,
            sigma: 1.0,
            support_radius: None,
            radius: 1.0,
            neighbors: 8,
            include_zeroth: false,
            mapping: Mapping::Uniform,
            interpolation: Interpolation::Bilinear,
            weber_constant: crate::jetspace::WEBER_CONSTANT,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "neighbor radius must be positive, got {}",
                self.radius
            )));
        }
        if !(2..=16).contains(&self.neighbors) {
            return Err(Error::InvalidParameter(format!(
                "neighbor count must lie in 2..=16, got {}",
                self.neighbors
            )));
        }
        if let Some(r) = self.support_radius {
            if r < 1 {
                return Err(Error::InvalidParameter(
                    "support radius must be at least 1".into(),
                ));
            }
        }
        if !(self.weber_constant.is_finite() && self.weber_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weber constant must be positive, got {}",
                self.weber_constant
            )));
        }
        Ok(())
    }

    pub fn effective_support_radius(&self) -> usize {
        self.support_radius
            .unwrap_or_else(|| default_support_radius(self.sigma))
    }

    pub fn bins_per_channel(&self) -> usize {
        match self.mapping {
            Mapping::Uniform => self.neighbors * (self.neighbors - 1) + 3,
            Mapping::Raw => 1 << self.neighbors,
        }
    }

    pub fn channels_used(&self) -> usize {
        match self.descriptor {
            Descriptor::Lbp => 1,
            Descriptor::Ljp => {
                if self.include_zeroth {
                    6
                } else {
                    5
                }
            }
        }
    }

    pub fn feature_len(&self) -> usize {
        self.bins_per_channel() * self.channels_used()
    }

    /// Stable 64-bit fingerprint of every field that affects the emitted
    /// feature values; used to key the feature cache.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(b"feature-config-v1");
        h.write(self.descriptor.to_string().as_bytes());
        h.write(&self.sigma.to_bits().to_le_bytes());
        h.write(&(self.effective_support_radius() as u64).to_le_bytes());
        h.write(&self.radius.to_bits().to_le_bytes());
        h.write(&(self.neighbors as u64).to_le_bytes());
        h.write(&[self.include_zeroth as u8]);
        h.write(self.mapping.to_string().as_bytes());
        h.write(self.interpolation.to_string().as_bytes());
        h.write(&self.weber_constant.to_bits().to_le_bytes());
        h.finish()
    }
}

/// FNV-1a, hand-rolled so fingerprints stay stable across toolchains.
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Read-only view of one channel's pixel grid.
#[derive(Debug, Clone, Copy)]
pub struct ChannelView<'a> {
    data: &'a [f64],
    width: usize,
    height: usize,
}

impl<'a> ChannelView<'a> {
    pub fn new(data: &'a [f64], width: usize, height: usize) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: width * height,
            });
        }
        Ok(Self {
            data,
            width,
            height,
        })
    }

    pub fn from_image(image: &'a GrayImage) -> Self {
        Self {
            data: image.pixels(),
            width: image.width(),
            height: image.height(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }
}

/// Circular sampling pattern: `N` offsets on a radius-`R` circle, starting
/// on the +x axis and stepping counter-clockwise in image coordinates
/// (`dx = R cos(theta)`, `dy = -R sin(theta)`).
#[derive(Debug, Clone)]
pub struct SamplingGeometry {
    radius: f64,
    neighbors: usize,
    offsets: Vec<(f64, f64)>,
}

impl SamplingGeometry {
    pub fn new(radius: f64, neighbors: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "neighbor radius must be positive, got {radius}"
            )));
        }
        if !(2..=16).contains(&neighbors) {
            return Err(Error::InvalidParameter(format!(
                "neighbor count must lie in 2..=16, got {neighbors}"
            )));
        }
        let offsets = (0..neighbors)
            .map(|n| {
                let theta = n as f64 * std::f64::consts::TAU / neighbors as f64;
                (snap(radius * theta.cos()), snap(-radius * theta.sin()))
            })
            .collect();
        Ok(Self {
            radius,
            neighbors,
            offsets,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    pub fn offsets(&self) -> &[(f64, f64)] {
        &self.offsets
    }

    /// Border width of the valid-center region: `floor(R)`.
    pub fn border(&self) -> usize {
        self.radius.floor() as usize
    }
}

/// Cardinal offsets like `R cos(pi/2)` pick up ~1e-16 of rounding; snapping
/// them restores exact integer sampling there.
fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 {
        v.round()
    } else {
        v
    }
}

/// Samples a channel at `center + offset`. Integer offsets read the pixel
/// exactly; fractional ones interpolate. Positions up to one pixel outside
/// the frame are clamped (replicate border); anything farther is an error.
pub fn sample_neighbor(
    view: ChannelView<'_>,
    center: (usize, usize),
    offset: (f64, f64),
    interpolation: Interpolation,
) -> Result<f64> {
    let sx = center.0 as f64 + offset.0;
    let sy = center.1 as f64 + offset.1;
    if sx < -1.0 || sy < -1.0 || sx > view.width as f64 || sy > view.height as f64 {
        return Err(Error::OutOfBounds { x: sx, y: sy });
    }
    Ok(match interpolation {
        Interpolation::Nearest => view.get_clamped(sx.round() as isize, sy.round() as isize),
        Interpolation::Bilinear => {
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let a = view.get_clamped(x0, y0);
            let b = view.get_clamped(x0 + 1, y0);
            let c = view.get_clamped(x0, y0 + 1);
            let d = view.get_clamped(x0 + 1, y0 + 1);
            // Difference form: returns `a` bit-exactly on flat patches, so
            // tie comparisons behave on constant regions.
            a + fx * (b - a) + fy * (c - a) + fx * fy * (a - b - c + d)
        }
    })
}

/// The binary code of one center pixel: bit `n-1` is set when neighbor `n`
/// compares `>=` the center (so ties set bits and a flat region codes to
/// `2^N - 1`).
pub fn ljp_code(
    view: ChannelView<'_>,
    geometry: &SamplingGeometry,
    center: (usize, usize),
    interpolation: Interpolation,
) -> Result<u32> {
    let b = geometry.border();
    let (x, y) = center;
    if x < b || y < b || x + b >= view.width || y + b >= view.height {
        return Err(Error::InvalidParameter(format!(
            "({x}, {y}) is not a valid center for radius {}",
            geometry.radius
        )));
    }
    let c = view.data[y * view.width + x];
    let mut code = 0u32;
    for (bit, &offset) in geometry.offsets.iter().enumerate() {
        let v = sample_neighbor(view, center, offset, interpolation)?;
        if v >= c {
            code |= 1 << bit;
        }
    }
    Ok(code)
}

/// Integer code image over the valid centers of one channel.
#[derive(Debug, Clone)]
pub struct LjpCodeMap {
    pub codes: Vec<u32>,
    pub width: usize,
    pub height: usize,
    /// Index of the jet element this map encodes (0 for the raw channel).
    pub channel_index: usize,
    pub neighbors: usize,
}

/// Per-neighbor sampling recipe, fixed per geometry so the per-pixel loop
/// does no trigonometry or bounds math.
enum SamplePlan {
    Exact { dx: isize, dy: isize },
    Bilinear { x0: isize, y0: isize, fx: f64, fy: f64 },
    Nearest { dx: isize, dy: isize },
}

fn build_plans(geometry: &SamplingGeometry, interpolation: Interpolation) -> Vec<SamplePlan> {
    geometry
        .offsets
        .iter()
        .map(|&(dx, dy)| {
            if dx.fract() == 0.0 && dy.fract() == 0.0 {
                return SamplePlan::Exact {
                    dx: dx as isize,
                    dy: dy as isize,
                };
            }
            match interpolation {
                Interpolation::Nearest => SamplePlan::Nearest {
                    dx: dx.round() as isize,
                    dy: dy.round() as isize,
                },
                Interpolation::Bilinear => {
                    let (x0, y0) = (dx.floor(), dy.floor());
                    SamplePlan::Bilinear {
                        x0: x0 as isize,
                        y0: y0 as isize,
                        fx: dx - x0,
                        fy: dy - y0,
                    }
                }
            }
        })
        .collect()
}

impl SamplePlan {
    /// Widest relative corner reach, used to decide whether clamping is
    /// needed for centers in the valid region.
    fn reach(&self) -> (isize, isize, isize, isize) {
        match *self {
            SamplePlan::Exact { dx, dy } | SamplePlan::Nearest { dx, dy } => (dx, dx, dy, dy),
            SamplePlan::Bilinear { x0, y0, .. } => (x0, x0 + 1, y0, y0 + 1),
        }
    }

    #[inline]
    fn eval(&self, view: &ChannelView<'_>, x: isize, y: isize, clamp: bool) -> f64 {
        let read = |px: isize, py: isize| -> f64 {
            if clamp {
                view.get_clamped(px, py)
            } else {
                view.data[py as usize * view.width + px as usize]
            }
        };
        match *self {
            SamplePlan::Exact { dx, dy } | SamplePlan::Nearest { dx, dy } => read(x + dx, y + dy),
            SamplePlan::Bilinear { x0, y0, fx, fy } => {
                let a = read(x + x0, y + y0);
                let b = read(x + x0 + 1, y + y0);
                let c = read(x + x0, y + y0 + 1);
                let d = read(x + x0 + 1, y + y0 + 1);
                a + fx * (b - a) + fy * (c - a) + fx * fy * (a - b - c + d)
            }
        }
    }
}

/// Encodes every valid center of a channel.
pub fn code_map(
    view: ChannelView<'_>,
    geometry: &SamplingGeometry,
    interpolation: Interpolation,
    channel_index: usize,
) -> Result<LjpCodeMap> {
    let b = geometry.border();
    if view.width <= 2 * b || view.height <= 2 * b {
        return Err(Error::InvalidParameter(format!(
            "channel {}x{} has no valid centers at radius {}",
            view.width, view.height, geometry.radius
        )));
    }
    let plans = build_plans(geometry, interpolation);
    // With integer R every corner stays inside the frame for valid centers;
    // fractional R can reach one pixel out, which the clamped path covers.
    let needs_clamp = plans.iter().any(|p| {
        let (xl, xr, yl, yr) = p.reach();
        (b as isize + xl) < 0
            || (b as isize + yl) < 0
            || (view.width - 1 - b) as isize + xr > view.width as isize - 1
            || (view.height - 1 - b) as isize + yr > view.height as isize - 1
    });

    let out_w = view.width - 2 * b;
    let out_h = view.height - 2 * b;
    let mut codes = vec![0u32; out_w * out_h];
    for (row, chunk) in codes.chunks_mut(out_w).enumerate() {
        let y = (row + b) as isize;
        for (col, slot) in chunk.iter_mut().enumerate() {
            let x = (col + b) as isize;
            let c = view.data[y as usize * view.width + x as usize];
            let mut code = 0u32;
            for (bit, plan) in plans.iter().enumerate() {
                if plan.eval(&view, x, y, needs_clamp) >= c {
                    code |= 1 << bit;
                }
            }
            *slot = code;
        }
    }
    Ok(LjpCodeMap {
        codes,
        width: out_w,
        height: out_h,
        channel_index,
        neighbors: geometry.neighbors,
    })
}

/// Lookup table of the uniform-pattern (u2) reduction for `N`-bit codes.
/// Codes with at most two circular 0/1 transitions get their own bin in
/// ascending code order; the rest share the final miscellaneous bin.
#[derive(Debug, Clone)]
pub struct UniformTable {
    neighbors: usize,
    bins: usize,
    map: Vec<u16>,
}

/// Circular 0/1 transitions of an `n`-bit code.
fn transitions(code: u32, n: usize) -> u32 {
    let mask = if n == 32 { u32::MAX } else { (1 << n) - 1 };
    let rotated = ((code << 1) | (code >> (n - 1))) & mask;
    (rotated ^ code).count_ones()
}

impl UniformTable {
    pub fn new(neighbors: usize) -> Result<Self> {
        if !(2..=16).contains(&neighbors) {
            return Err(Error::InvalidParameter(format!(
                "neighbor count must lie in 2..=16, got {neighbors}"
            )));
        }
        let bins = neighbors * (neighbors - 1) + 3;
        let misc = (bins - 1) as u16;
        let mut next = 0u16;
        let map = (0..1u32 << neighbors)
            .map(|code| {
                if transitions(code, neighbors) <= 2 {
                    let bin = next;
                    next += 1;
                    bin
                } else {
                    misc
                }
            })
            .collect();
        debug_assert_eq!(next as usize, bins - 1);
        Ok(Self {
            neighbors,
            bins,
            map,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin(&self, code: u32) -> Result<usize> {
        self.map.get(code as usize).map(|&b| b as usize).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "code {code} out of range for {} neighbors",
                self.neighbors
            ))
        })
    }
}

/// Maps a code to its histogram bin under the u2 reduction.
pub fn uniform_map(code: u32, neighbors: usize) -> Result<usize> {
    let table = UniformTable::new(neighbors)?;
    if code as usize >= table.map.len() {
        return Err(Error::InvalidParameter(format!(
            "code {code} out of range for {neighbors} neighbors"
        )));
    }
    Ok(table.map[code as usize] as usize)
}

/// Raw per-bin counts of a code map under the chosen mapping.
pub fn histogram_counts(codemap: &LjpCodeMap, mapping: Mapping) -> Result<Vec<u64>> {
    if codemap.codes.is_empty() {
        return Err(Error::InvalidParameter("empty code map".into()));
    }
    let counts = match mapping {
        Mapping::Raw => {
            let mut counts = vec![0u64; 1 << codemap.neighbors];
            for &code in &codemap.codes {
                counts[code as usize] += 1;
            }
            counts
        }
        Mapping::Uniform => {
            let table = UniformTable::new(codemap.neighbors)?;
            let mut counts = vec![0u64; table.bins()];
            for &code in &codemap.codes {
                counts[table.map[code as usize] as usize] += 1;
            }
            counts
        }
    };
    Ok(counts)
}

/// Normalized histogram: counts divided by the number of valid centers.
pub fn histogram(codemap: &LjpCodeMap, mapping: Mapping) -> Result<Vec<f64>> {
    let counts = histogram_counts(codemap, mapping)?;
    let total = codemap.codes.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Concatenated per-channel normalized histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub bins_per_channel: usize,
    pub channels_used: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Runs the full descriptor pipeline on one image: jet computation,
/// contrast normalization, per-channel encoding, and histogram
/// concatenation in fixed channel order.
pub fn extract_feature(image: &GrayImage, config: &FeatureConfig) -> Result<FeatureVector> {
    config.validate()?;
    let geometry = SamplingGeometry::new(config.radius, config.neighbors)?;
    let table = match config.mapping {
        Mapping::Uniform => Some(UniformTable::new(config.neighbors)?),
        Mapping::Raw => None,
    };

    let encode_all = |channels: Vec<(usize, ChannelView<'_>)>| -> Result<Vec<Vec<f64>>> {
        channels
            .into_par_iter()
            .map(|(index, view)| {
                let map = code_map(view, &geometry, config.interpolation, index)?;
                let counts = match &table {
                    Some(t) => {
                        let mut counts = vec![0u64; t.bins()];
                        for &code in &map.codes {
                            counts[t.map[code as usize] as usize] += 1;
                        }
                        counts
                    }
                    None => histogram_counts(&map, Mapping::Raw)?,
                };
                let total = map.codes.len() as f64;
                Ok(counts.into_iter().map(|c| c as f64 / total).collect())
            })
            .collect()
    };

    let histograms = match config.descriptor {
        Descriptor::Lbp => encode_all(vec![(0, ChannelView::from_image(image))])?,
        Descriptor::Ljp => {
            let jet = compute_jet(image, config.sigma, config.effective_support_radius())?;
            let jet = contrast_normalize_with(jet, config.weber_constant);
            let first = if config.include_zeroth { 0 } else { 1 };
            let views: Vec<(usize, ChannelView<'_>)> = (first..6)
                .map(|c| {
                    ChannelView::new(jet.channel(c), jet.width(), jet.height()).map(|v| (c, v))
                })
                .collect::<Result<_>>()?;
            encode_all(views)?
        }
    };

    let bins = config.bins_per_channel();
    let mut values = Vec::with_capacity(bins * histograms.len());
    for hist in &histograms {
        values.extend_from_slice(hist);
    }
    Ok(FeatureVector {
        values,
        bins_per_channel: bins,
        channels_used: histograms.len(),
    })
}
