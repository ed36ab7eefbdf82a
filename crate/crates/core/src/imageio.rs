//! Image and matrix persistence: binary PGM (P5) and grayscale PNG loading,
//! PGM saving, stack/matrix conversion, and a small binary matrix container
//! for intermediate results.
//!
//! Pixel values are normalized by the format maxval (255 or 65535) — the
//! sensor's full scale — never by the observed maximum, so absolute
//! brightness survives the round trip.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::linalg::Mat;
use crate::{Error, Result};

/// Magic bytes of the binary matrix container.
const MATRIX_MAGIC: &[u8; 4] = b"LRM1";

/// Refuse to allocate matrices beyond this many entries when reading
/// untrusted container files.
const MAX_MATRIX_ENTRIES: u64 = 1 << 30;

/// Grayscale image with pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// Output bit depth for [`save_gray`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

impl GrayImage {
    /// Builds an image from row-major pixels; every pixel must lie in `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("pixels must be finite and within [0, 1]"));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel slice.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// The image as a `height x width` matrix.
    pub fn to_matrix(&self) -> Mat {
        Mat::from_fn(self.height, self.width, |r, c| self.pixel(r, c))
    }

    /// Builds an image from a `height x width` matrix, clamping entries to
    /// `[0, 1]`.
    pub fn from_matrix(m: &Mat) -> Result<Self> {
        let (height, width) = (m.nrows(), m.ncols());
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        let mut pixels = vec![0.0; width * height];
        for r in 0..height {
            for c in 0..width {
                pixels[r * width + c] = m[(r, c)].clamp(0.0, 1.0);
            }
        }
        GrayImage::new(width, height, pixels)
    }
}

// ===== PGM / PNG loading =====

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

/// Parses a P5 header: "P5", whitespace-separated width/height/maxval with
/// `#` comments allowed, then a single whitespace byte before the raster.
fn parse_pgm_header(bytes: &[u8], path: &Path) -> Result<PgmHeader> {
    let mut pos = 2; // past "P5"
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(path, "truncated PGM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err(Error::format(path, "malformed PGM header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::format(path, "PGM header field out of range"))?;
    }
    // Exactly one whitespace byte separates maxval from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(path, "missing raster delimiter")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::format(path, "PGM dimensions must be positive"));
    }
    if width * height > MAX_MATRIX_ENTRIES {
        return Err(Error::format(path, "PGM dimensions unreasonably large"));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::format(
            path,
            format!("maxval must be 255 or 65535, got {maxval}"),
        ));
    }
    Ok(PgmHeader {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_offset: pos,
    })
}

fn load_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let h = parse_pgm_header(bytes, path)?;
    let count = h.width * h.height;
    let raster = &bytes[h.data_offset..];
    let maxval = h.maxval as f64;
    let pixels: Vec<f64> = if h.maxval == 255 {
        if raster.len() < count {
            return Err(Error::format(path, "truncated PGM raster"));
        }
        raster[..count].iter().map(|&b| b as f64 / maxval).collect()
    } else {
        if raster.len() < 2 * count {
            return Err(Error::format(path, "truncated PGM raster"));
        }
        raster[..2 * count]
            .chunks_exact(2)
            .map(|px| u16::from_be_bytes([px[0], px[1]]) as f64 / maxval)
            .collect()
    };
    GrayImage::new(h.width, h.height, pixels)
}

fn load_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("PNG decode failed: {e}")))?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let pixels = buf.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
            GrayImage::new(w, h, pixels)
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let pixels = buf
                .into_raw()
                .iter()
                .map(|&b| b as f64 / 65535.0)
                .collect();
            GrayImage::new(w, h, pixels)
        }
        other => Err(Error::format(
            path,
            format!(
                "only single-band grayscale PNG is supported, got {:?}",
                other.color()
            ),
        )),
    }
}

/// Loads a binary PGM (P5, maxval 255 or 65535) or an 8/16-bit grayscale
/// PNG. Pixels are divided by the format maxval, never the observed maximum.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        load_pgm(&bytes, path)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        load_png(&bytes, path)
    } else {
        Err(Error::format(
            path,
            "unknown format (expected binary PGM \"P5\" or PNG)",
        ))
    }
}

/// Saves a binary PGM (P5), quantizing with round-half-up.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let maxval = depth.maxval();
    let mut out = Vec::with_capacity(32 + img.pixels.len() * if maxval > 255 { 2 } else { 1 });
    write!(out, "P5\n{} {}\n{}\n", img.width, img.height, maxval).expect("vec write");
    for &p in &img.pixels {
        // `f64::round` rounds half away from zero, which is half-up for the
        // nonnegative values stored here.
        let q = (p * maxval as f64).round() as u32;
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ===== Stack/matrix conversion =====

/// Stacks `n` same-shape images into a `d x n` matrix, one vectorized image
/// per column. Vectorization is column-major over `(row, col)`.
pub fn stack_to_matrix(images: &[GrayImage]) -> Result<Mat> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("image stack is empty"))?;
    let (w, h) = (first.width, first.height);
    if images.iter().any(|img| img.width != w || img.height != h) {
        return Err(Error::invalid("stacked images must share one shape"));
    }
    Ok(Mat::from_fn(w * h, images.len(), |p, i| {
        images[i].pixel(p % h, p / h)
    }))
}

/// Inverse of [`stack_to_matrix`]; entries are clamped to `[0, 1]` before
/// image construction.
pub fn matrix_to_stack(d: &Mat, width: usize, height: usize) -> Result<Vec<GrayImage>> {
    if width * height != d.nrows() {
        return Err(Error::invalid(format!(
            "width*height = {} does not match matrix rows {}",
            width * height,
            d.nrows()
        )));
    }
    (0..d.ncols())
        .map(|i| {
            let mut pixels = vec![0.0; width * height];
            for c in 0..width {
                for r in 0..height {
                    pixels[r * width + c] = d[(c * height + r, i)].clamp(0.0, 1.0);
                }
            }
            GrayImage::new(width, height, pixels)
        })
        .collect()
}

// ===== Binary matrix container =====

/// Writes `m` as: magic "LRM1", rows and cols as little-endian u32, then
/// `rows*cols` little-endian f64 values in column-major order.
pub fn write_matrix(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("refusing to write a zero-sized matrix"));
    }
    if m.nrows() > u32::MAX as usize || m.ncols() > u32::MAX as usize {
        return Err(Error::invalid("matrix too large for container"));
    }
    let mut out = Vec::with_capacity(12 + m.len() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for &x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`write_matrix`], bit-exactly.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::format(path, "short read: missing container header"));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::format(path, "bad magic (expected \"LRM1\")"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, "zero-sized matrix"));
    }
    if rows as u64 * cols as u64 > MAX_MATRIX_ENTRIES {
        return Err(Error::format(path, "dimensions unreasonably large"));
    }
    let want = 12 + rows * cols * 8;
    if bytes.len() < want {
        return Err(Error::format(
            path,
            format!("short read: expected {want} bytes, got {}", bytes.len()),
        ));
    }
    if bytes.len() > want {
        return Err(Error::format(path, "trailing data after matrix payload"));
    }
    let data: Vec<f64> = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Mat::from_vec(rows, cols, data))
}

// ===== Tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h).map(|_| rng.random_range(0.0..=1.0)).collect();
        GrayImage::new(w, h, px).unwrap()
    }

    // ----- PGM -----

    #[test]
    fn pgm_byte_255_reads_as_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, [b"P5\n2 1\n255\n".as_slice(), &[255u8, 0u8]].concat()).unwrap();
        let img = load_gray(&p).unwrap();
        assert_eq!(img.pixels(), &[1.0, 0.0]);
    }

    #[test]
    fn pgm_16bit_midpoint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let px = 32768u16.to_be_bytes();
        fs::write(&p, [b"P5\n1 1\n65535\n".as_slice(), &px].concat()).unwrap();
        let img = load_gray(&p).unwrap();
        assert!((img.pixels()[0] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, [b"P5\n# scene 4\n2 1 # wh\n255\n".as_slice(), &[7, 9]].concat()).unwrap();
        let img = load_gray(&p).unwrap();
        assert_eq!(img.width(), 2);
        assert!((img.pixels()[0] - 7.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn pgm_rejects_bad_maxval_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, [b"P5\n1 1\n100\n".as_slice(), &[50]].concat()).unwrap();
        let err = load_gray(&p).unwrap_err().to_string();
        assert!(err.contains("maxval"), "{err}");

        fs::write(&p, b"P5\n4 4\n255\nxy").unwrap();
        let err = load_gray(&p).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn unknown_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.dat");
        fs::write(&p, b"GIF89a").unwrap();
        assert!(matches!(
            load_gray(&p).unwrap_err(),
            Error::Format { .. }
        ));
    }

    #[test]
    fn save_gray_quantization_rules() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let img = GrayImage::new(3, 1, vec![1.0, 0.0, 0.5]).unwrap();
        save_gray(&img, &p, BitDepth::Eight).unwrap();
        let bytes = fs::read(&p).unwrap();
        // 0.5*255 = 127.5 rounds half-up to 128.
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 0, 128]);
    }

    #[test]
    fn save_load_round_trip_within_half_step() {
        for (depth, maxval) in [(BitDepth::Eight, 255.0), (BitDepth::Sixteen, 65535.0)] {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.pgm");
            let img = random_image(9, 7, 5);
            save_gray(&img, &p, depth).unwrap();
            let back = load_gray(&p).unwrap();
            let worst = img
                .pixels()
                .iter()
                .zip(back.pixels())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 0.5 / maxval + 1e-12, "worst {worst} at {maxval}");
        }
    }

    // ----- PNG -----

    #[test]
    fn png_8_and_16_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        let buf8 = image::GrayImage::from_raw(2, 2, vec![0, 255, 64, 128]).unwrap();
        buf8.save(&p8).unwrap();
        let img = load_gray(&p8).unwrap();
        assert_eq!(img.pixels()[1], 1.0);
        assert!((img.pixels()[2] - 64.0 / 255.0).abs() < 1e-15);

        let p16 = dir.path().join("b.png");
        let buf16 =
            image::ImageBuffer::<image::Luma<u16>, _>::from_raw(1, 2, vec![0u16, 32768]).unwrap();
        buf16.save(&p16).unwrap();
        let img = load_gray(&p16).unwrap();
        assert!((img.pixels()[1] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn color_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let buf = image::RgbImage::from_raw(1, 1, vec![1, 2, 3]).unwrap();
        buf.save(&p).unwrap();
        let err = load_gray(&p).unwrap_err().to_string();
        assert!(err.contains("grayscale"), "{err}");
    }

    // ----- stack conversion -----

    #[test]
    fn stack_vectorization_is_column_major() {
        // [[a, b], [c, d]] row-major -> column (a, c, b, d).
        let img = GrayImage::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let m = stack_to_matrix(std::slice::from_ref(&img)).unwrap();
        assert_eq!(m.as_slice(), &[0.1, 0.3, 0.2, 0.4]);
    }

    #[test]
    fn stack_round_trip() {
        let imgs: Vec<_> = (0..3).map(|s| random_image(5, 4, s)).collect();
        let m = stack_to_matrix(&imgs).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (20, 3));
        let back = matrix_to_stack(&m, 5, 4).unwrap();
        assert_eq!(back, imgs);
    }

    #[test]
    fn stack_shape_errors() {
        let a = random_image(4, 4, 1);
        let b = random_image(3, 4, 2);
        assert!(stack_to_matrix(&[a.clone(), b]).is_err());
        let m = stack_to_matrix(&[a]).unwrap();
        assert!(matrix_to_stack(&m, 5, 4).is_err());
    }

    #[test]
    fn matrix_to_stack_clamps() {
        let m = Mat::from_row_slice(2, 1, &[-0.25, 1.5]);
        let imgs = matrix_to_stack(&m, 1, 2).unwrap();
        assert_eq!(imgs[0].pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn image_matrix_round_trip() {
        let img = random_image(6, 3, 11);
        let back = GrayImage::from_matrix(&img.to_matrix()).unwrap();
        assert_eq!(back, img);
    }

    // ----- matrix container -----

    #[test]
    fn container_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lrm");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mat::from_fn(7, 4, |_, _| rng.random_range(-1e6..1e6));
        write_matrix(&m, &p).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(m, back);
        assert!(m
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn container_layout_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lrm");
        write_matrix(&Mat::zeros(3, 2), &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 60);
    }

    #[test]
    fn container_rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lrm");
        assert!(matches!(
            write_matrix(&Mat::zeros(0, 2), &p).unwrap_err(),
            Error::InvalidArgument(_)
        ));

        fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(read_matrix(&p).unwrap_err(), Error::Format { .. }));

        // Valid header, short payload.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MATRIX_MAGIC);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&p, bytes).unwrap();
        let err = read_matrix(&p).unwrap_err().to_string();
        assert!(err.contains("short read"), "{err}");
    }
}
