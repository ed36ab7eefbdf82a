//! Cloud-cover simulator: seeded gradient-noise fields (classic improved
//! Perlin noise with octave summation), optional tonal corrections, and the
//! scattering compositor `observed = C + (1 - C) .* ground`.
//!
//! Everything here is a pure function of its seed, so simulated stacks are
//! reproducible bit for bit and recovery error can be measured against the
//! exact planted clouds.

use crate::imageio::GrayImage;
use crate::linalg::Mat;
use crate::{Error, Result};

/// Generator knobs for one cloud field.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudSimConfig {
    /// Field width in pixels.
    pub width: usize,
    /// Field height in pixels.
    pub height: usize,
    /// Perlin lattice spacing in pixels (>= 1).
    pub cell: f64,
    /// Number of summed noise octaves.
    pub octaves: u32,
    /// Amplitude decay per octave, in (0, 1].
    pub persistence: f64,
    /// Frequency growth per octave, > 1.
    pub lacunarity: f64,
    /// Cloud density control in [0, 1]; 0.5 leaves the rescaled field as is.
    pub coverage: f64,
    /// Tonal exponent; 1.0 disables gamma correction.
    pub gamma: f64,
    /// Apply histogram equalization after the tonal steps.
    pub equalize: bool,
    /// Base seed; octave k uses seed+k, image i of a stack uses seed+i.
    pub seed: u64,
}

impl CloudSimConfig {
    /// Defaults approximating thin broken cloud: 4 octaves, persistence 0.5,
    /// lacunarity 2.0, lattice spacing width/8, coverage 0.5, no tonal
    /// correction.
    pub fn new(width: usize, height: usize) -> Self {
        CloudSimConfig {
            width,
            height,
            cell: (width as f64 / 8.0).max(1.0),
            octaves: 4,
            persistence: 0.5,
            lacunarity: 2.0,
            coverage: 0.5,
            gamma: 1.0,
            equalize: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("field dimensions must be positive"));
        }
        if !(self.cell >= 1.0) {
            return Err(Error::invalid(format!("cell must be >= 1, got {}", self.cell)));
        }
        if self.octaves == 0 {
            return Err(Error::invalid("octaves must be >= 1"));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(Error::invalid(format!(
                "persistence must lie in (0, 1], got {}",
                self.persistence
            )));
        }
        if !(self.lacunarity > 1.0) {
            return Err(Error::invalid(format!(
                "lacunarity must be > 1, got {}",
                self.lacunarity
            )));
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(Error::invalid(format!(
                "coverage must lie in [0, 1], got {}",
                self.coverage
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// One simulated cloud field with values rescaled into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CloudField {
    /// `height x width` matrix of cloud opacities in [0, 1].
    pub values: Mat,
}

/// A simulated observation stack and its planted clouds.
#[derive(Debug, Clone)]
pub struct SimulatedStack {
    /// `d x n` observed matrix, one vectorized composite per column.
    pub d: Mat,
    /// The n planted fields, in column order.
    pub clouds: Vec<CloudField>,
}

// ===== Seeded permutation =====

/// 64-bit mixing step (splitmix64). Pinned here rather than taken from a
/// library so that identical seeds give identical fields on every platform.
fn mix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fisher-Yates shuffle of 0..=255 driven by `mix64`, doubled so lattice
/// hashing needs no wrap-around arithmetic.
fn permutation_table(seed: u64) -> [u8; 512] {
    let mut base: [u8; 256] = std::array::from_fn(|i| i as u8);
    let mut state = seed;
    for i in (1..256usize).rev() {
        let j = (mix64(&mut state) % (i as u64 + 1)) as usize;
        base.swap(i, j);
    }
    std::array::from_fn(|i| base[i % 256])
}

// ===== Perlin noise =====

const SQ: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// The 8 unit gradient directions, every 45 degrees.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (SQ, SQ),
    (0.0, 1.0),
    (-SQ, SQ),
    (-1.0, 0.0),
    (-SQ, -SQ),
    (0.0, -1.0),
    (SQ, -SQ),
];

/// Quintic fade 6t^5 - 15t^4 + 10t^3.
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Classic improved-Perlin gradient noise sampled on a `height x width`
/// pixel grid with lattice spacing `cell` pixels.
///
/// Pixel (row r, col c) samples noise coordinates (c/cell, r/cell), so the
/// field is exactly zero wherever both pixel coordinates are multiples of
/// `cell`. Raw values lie in [-1, 1].
pub fn perlin2d(width: usize, height: usize, cell: f64, seed: u64) -> Mat {
    let p = permutation_table(seed);
    let grad_at = |xi: i64, yi: i64| -> (f64, f64) {
        let xw = xi.rem_euclid(256) as usize;
        let yw = yi.rem_euclid(256) as usize;
        GRADIENTS[(p[p[xw] as usize + yw] & 7) as usize]
    };
    Mat::from_fn(height, width, |r, c| {
        let x = c as f64 / cell;
        let y = r as f64 / cell;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);

        let dot = |gx: i64, gy: i64, dx: f64, dy: f64| {
            let (gu, gv) = grad_at(gx, gy);
            gu * dx + gv * dy
        };
        let n00 = dot(xi, yi, fx, fy);
        let n10 = dot(xi + 1, yi, fx - 1.0, fy);
        let n01 = dot(xi, yi + 1, fx, fy - 1.0);
        let n11 = dot(xi + 1, yi + 1, fx - 1.0, fy - 1.0);

        let u = fade(fx);
        let v = fade(fy);
        lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
    })
}

/// Octave-summed Perlin noise:
/// `sum_k persistence^k * perlin2d(cell / lacunarity^k, seed + k)`,
/// normalized by `sum_k persistence^k` so the amplitude stays within 1.
pub fn fbm_field(cfg: &CloudSimConfig) -> Result<Mat> {
    cfg.validate()?;
    let mut acc = Mat::zeros(cfg.height, cfg.width);
    let mut amplitude = 1.0;
    let mut total = 0.0;
    for k in 0..cfg.octaves {
        let cell_k = cfg.cell / cfg.lacunarity.powi(k as i32);
        let layer = perlin2d(cfg.width, cfg.height, cell_k, cfg.seed.wrapping_add(k as u64));
        acc += layer * amplitude;
        total += amplitude;
        amplitude *= cfg.persistence;
    }
    Ok(acc / total)
}

/// Min-max rescale onto [0, 1]; a constant field maps to all zeros (the
/// no-cloud limit).
fn rescale01(m: &Mat) -> Mat {
    let lo = m.min();
    let hi = m.max();
    if hi - lo <= f64::EPSILON {
        return Mat::zeros(m.nrows(), m.ncols());
    }
    m.map(|v| (v - lo) / (hi - lo))
}

/// Entrywise `img^g`. Precondition g > 0 (monotone, endpoint preserving).
pub fn gamma_correct(img: &Mat, g: f64) -> Mat {
    assert!(g > 0.0, "gamma must be positive");
    img.map(|v| v.powf(g))
}

/// Standard histogram-equalization CDF remap over `bins` buckets.
///
/// The lowest occupied bin maps to 0 and the highest to 1; an image
/// occupying a single bin (constant) is returned unchanged.
pub fn hist_equalize(img: &Mat, bins: usize) -> Mat {
    assert!(bins >= 2, "need at least 2 histogram bins");
    let bin_of = |v: f64| ((v * bins as f64) as usize).min(bins - 1);
    let mut counts = vec![0u64; bins];
    for &v in img.iter() {
        counts[bin_of(v)] += 1;
    }
    let mut cdf = counts;
    for i in 1..bins {
        cdf[i] += cdf[i - 1];
    }
    let total = img.len() as u64;
    let cdf_min = *cdf.iter().find(|&&c| c > 0).unwrap_or(&0);
    if total == cdf_min {
        return img.clone();
    }
    let denom = (total - cdf_min) as f64;
    img.map(|v| (cdf[bin_of(v)] - cdf_min) as f64 / denom)
}

/// Default bin count for [`hist_equalize`].
pub const DEFAULT_EQUALIZE_BINS: usize = 256;

/// Generates one cloud field: fBm noise, min-max rescale to [0, 1], coverage
/// shaping, then the optional tonal corrections.
///
/// Coverage maps `x -> x^(2^(1 - 2*coverage))`: 0.5 is the identity, larger
/// coverage brightens (denser cloud), smaller thins.
pub fn make_cloud(cfg: &CloudSimConfig) -> Result<CloudField> {
    let raw = fbm_field(cfg)?;
    let mut values = rescale01(&raw);
    let exponent = 2f64.powf(1.0 - 2.0 * cfg.coverage);
    values = values.map(|v| v.powf(exponent));
    if cfg.gamma != 1.0 {
        values = gamma_correct(&values, cfg.gamma);
    }
    if cfg.equalize {
        values = hist_equalize(&values, DEFAULT_EQUALIZE_BINS);
    }
    Ok(CloudField { values })
}

/// Scattering compositor: `C + (1 - C) .* I`, entrywise.
///
/// For `I, C` in [0, 1] the output is a convex combination of `I` and 1, so
/// it stays in [0, 1] and never darkens a pixel.
pub fn composite(ground: &Mat, cloud: &CloudField) -> Result<Mat> {
    let c = &cloud.values;
    if ground.shape() != c.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: ground {:?} vs cloud {:?}",
            ground.shape(),
            c.shape()
        )));
    }
    Ok(Mat::from_fn(ground.nrows(), ground.ncols(), |r, col| {
        let cv = c[(r, col)];
        cv + (1.0 - cv) * ground[(r, col)]
    }))
}

/// Simulates `n` observations of `ground`: cloud i uses `cfg.seed + i`
/// (i = 1..=n) on the image's own dimensions, and column i-1 of `D` is the
/// vectorized composite. Returns the planted clouds alongside `D`.
pub fn simulate_stack(ground: &GrayImage, n: usize, cfg: &CloudSimConfig) -> Result<SimulatedStack> {
    if n == 0 {
        return Err(Error::invalid("stack size n must be >= 1"));
    }
    let mut local = cfg.clone();
    local.width = ground.width();
    local.height = ground.height();
    local.validate()?;
    let ground_mat = ground.to_matrix();
    let d_rows = ground.width() * ground.height();
    let mut d = Mat::zeros(d_rows, n);
    let mut clouds = Vec::with_capacity(n);
    for i in 1..=n {
        let mut cfg_i = local.clone();
        cfg_i.seed = cfg.seed.wrapping_add(i as u64);
        let cloud = make_cloud(&cfg_i)?;
        let obs = composite(&ground_mat, &cloud)?;
        d.column_mut(i - 1).copy_from_slice(obs.as_slice());
        clouds.push(cloud);
    }
    Ok(SimulatedStack { d, clouds })
}

/// Deterministic synthetic ground scene: smooth illumination gradient,
/// rectangular "fields", and a low-frequency texture. Handy for demos and
/// benchmarks that should not depend on shipped image data.
pub fn synthetic_ground(width: usize, height: usize) -> GrayImage {
    let tau = std::f64::consts::TAU;
    let mut pixels = vec![0.0; width * height];
    for r in 0..height {
        for c in 0..width {
            let x = c as f64 / width as f64;
            let y = r as f64 / height as f64;
            let mut v = 0.2 + 0.35 * x + 0.2 * y;
            v += 0.1 * (tau * 3.0 * x).sin() * (tau * 2.0 * y).sin();
            if (0.15..0.4).contains(&x) && (0.5..0.85).contains(&y) {
                v += 0.18;
            }
            if (0.55..0.9).contains(&x) && (0.1..0.35).contains(&y) {
                v -= 0.12;
            }
            pixels[r * width + c] = v.clamp(0.02, 0.98);
        }
    }
    GrayImage::new(width, height, pixels).expect("values clamped into range")
}

// ===== Tests =====
