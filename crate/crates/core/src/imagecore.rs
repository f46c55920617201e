//! Raster containers, file I/O, filters and geometric resampling.
//!
//! Intensities are kept as `f64` in `[0, 255]` through the whole pipeline and
//! only quantized (round-half-up) when written to disk. All filters replicate
//! the border pixel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::AffineTransform;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Row-major real-valued intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite pixel value {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel lookup with replicate border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Bilinear sample at a real position, or `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= -EPS && y >= -EPS && x <= max_x + EPS && y <= max_y + EPS) {
            return None;
        }
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::Bounds(format!(
                "crop {width}x{height} at ({x},{y}) outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(width, height, |cx, cy| self.get(x + cx, y + cy)))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 255.0))
    }

    /// Mirror about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    /// 8-bit quantization used for every file write.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Per-pixel occlusion flag; 1 marks fence (or, where documented, an invalid sample).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value as u8; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} flags for a {width}x{height} mask",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Parameter("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a | b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u8, u8) -> u8) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "mask {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                255.0
            } else {
                0.0
            }
        })
    }
}

/// Sobel magnitude and unsigned orientation in degrees, `[0, 180)`.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

/// Summed-area table with a zero guard row and column.
#[derive(Debug, Clone)]
pub struct IntegralTable {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }
}

impl IntegralTable {
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), width * height);
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values[y * width + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width,
            height,
            sums,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum of the channel over `rect`, assuming bounds were already checked.
    #[inline]
    pub fn sum_unchecked(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let stride = self.width + 1;
        let a = self.sums[y * stride + x];
        let b = self.sums[y * stride + x + w];
        let c = self.sums[(y + h) * stride + x];
        let d = self.sums[(y + h) * stride + x + w];
        d - b - c + a
    }

    pub fn rect_sum(&self, rect: Rect) -> Result<f64> {
        if rect.x + rect.width > self.width || rect.y + rect.height > self.height {
            return Err(Error::Bounds(format!(
                "{rect:?} outside {}x{} table",
                self.width, self.height
            )));
        }
        Ok(self.sum_unchecked(rect.x, rect.y, rect.width, rect.height))
    }
}

pub fn integral(channel: &GrayImage) -> IntegralTable {
    IntegralTable::from_values(channel.width, channel.height, &channel.data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Nearest,
    Bilinear,
}

/// Load a PGM (P5) or PNG file as a gray image. Colour PNGs are reduced by
/// `0.299 R + 0.587 G + 0.114 B`.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gray(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn decode_gray(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err("not a P5 PGM or PNG file".into())
    }
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated PGM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed PGM header")?;
    }
    let [width, height, maxval] = fields;
    if !(1..=255).contains(&maxval) {
        return Err(format!("unsupported PGM maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("malformed PGM header".into());
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(format!(
            "PGM raster has {} bytes, expected {}",
            raster.len(),
            width * height
        ));
    }
    let scale = 255.0 / maxval as f64;
    let data = raster[..width * height]
        .iter()
        .map(|&b| (b as f64 * scale).min(255.0))
        .collect();
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

fn decode_png(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let (width, height) = (dynamic.width() as usize, dynamic.height() as usize);
    let data = if dynamic.color().has_color() {
        dynamic
            .to_rgb8()
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect()
    } else {
        dynamic.to_luma8().pixels().map(|p| p.0[0] as f64).collect()
    };
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

pub fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).clamp(0.0, 255.0)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buffer = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.to_u8())
        .ok_or_else(|| Error::Dimension("raster does not match dimensions".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buffer
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(out.into_inner())
}

/// Write as PGM or PNG depending on the extension (`.png`, anything else PGM).
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if has_png_extension(path) {
        encode_png(img)?
    } else {
        encode_pgm(img)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn has_png_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Any nonzero pixel is treated as set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = load_gray(path)?;
    let data = img.data.iter().map(|&v| (v > 0.0) as u8).collect();
    Ok(BinaryMask {
        width: img.width,
        height: img.height,
        data,
    })
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_gray(&mask.to_image(), path)
}

/// Horizontal and vertical 3x3 Sobel responses with replicate border.
pub fn sobel_components(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = img.dims();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let p = |dx: isize, dy: isize| img.get_clamped(xi + dx, yi + dy);
            gx[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

pub fn sobel_gradients(img: &GrayImage) -> Result<GradientField> {
    if img.width < 3 || img.height < 3 {
        return Err(Error::Dimension(format!(
            "sobel needs at least 3x3, got {}x{}",
            img.width, img.height
        )));
    }
    let (gx, gy) = sobel_components(img);
    let magnitude = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let orientation = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| fold_orientation(y.atan2(x).to_degrees()))
        .collect();
    Ok(GradientField {
        width: img.width,
        height: img.height,
        magnitude,
        orientation,
    })
}

/// Fold a signed angle in degrees into `[0, 180)`.
fn fold_orientation(deg: f64) -> f64 {
    let mut t = deg.rem_euclid(180.0);
    if t >= 180.0 {
        t -= 180.0;
    }
    // Maps -0.0 to +0.0.
    t + 0.0
}

/// Normalized 1D Gaussian kernel with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    Ok(kernel)
}

pub fn gaussian_smooth(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(separable_filter(img, &kernel))
}

pub(crate) fn separable_filter(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let radius = (kernel.len() / 2) as isize;
    let horizontal = GrayImage::from_fn(img.width, img.height, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * img.get_clamped(x as isize + i as isize - radius, y as isize))
            .sum()
    });
    GrayImage::from_fn(img.width, img.height, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horizontal.get_clamped(x as isize, y as isize + i as isize - radius))
            .sum()
    })
}

/// Inverse warp: output pixel `p` samples `img` at `t^-1(p)`. The returned
/// mask is 1 where that source position falls outside the input; those pixels
/// hold 0.
pub fn warp_affine(
    img: &GrayImage,
    t: &AffineTransform,
    sampling: Sampling,
) -> Result<(GrayImage, BinaryMask)> {
    let inv = t.inverse()?;
    let (w, h) = img.dims();
    let mut out = GrayImage::new(w, h);
    let mut invalid = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            let value = match sampling {
                Sampling::Nearest => {
                    let (rx, ry) = (sx.round(), sy.round());
                    if rx >= 0.0 && ry >= 0.0 && rx <= (w - 1) as f64 && ry <= (h - 1) as f64 {
                        Some(img.get(rx as usize, ry as usize))
                    } else {
                        None
                    }
                }
                Sampling::Bilinear => img.sample_bilinear(sx, sy),
            };
            match value {
                Some(v) => out.set(x, y, v),
                None => invalid.set(x, y, true),
            }
        }
    }
    Ok((out, invalid))
}

/// Warp a mask conservatively: an output pixel is set when any source pixel
/// with nonzero bilinear weight is set, or when the source falls outside.
pub fn warp_mask(mask: &BinaryMask, t: &AffineTransform) -> Result<BinaryMask> {
    let as_image = GrayImage::from_fn(mask.width, mask.height, |x, y| mask.get(x, y) as u8 as f64);
    let (warped, invalid) = warp_affine(&as_image, t, Sampling::Bilinear)?;
    let data = warped
        .data
        .iter()
        .zip(&invalid.data)
        .map(|(&v, &inv)| (v > 1e-9 || inv != 0) as u8)
        .collect();
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        data,
    })
}

/// Corner-aligned bilinear resize: output corners sample input corners exactly.
pub fn resize_bilinear(img: &GrayImage, new_w: usize, new_h: usize) -> Result<GrayImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::Parameter(format!("cannot resize to {new_w}x{new_h}")));
    }
    if img.width == 0 || img.height == 0 {
        return Err(Error::Dimension("cannot resize an empty image".into()));
    }
    if (new_w, new_h) == img.dims() {
        return Ok(img.clone());
    }
    let sx = if new_w > 1 {
        (img.width - 1) as f64 / (new_w - 1) as f64
    } else {
        0.0
    };
    let sy = if new_h > 1 {
        (img.height - 1) as f64 / (new_h - 1) as f64
    } else {
        0.0
    };
    Ok(GrayImage::from_fn(new_w, new_h, |x, y| {
        img.sample_bilinear(x as f64 * sx, y as f64 * sy)
            .unwrap_or(0.0)
    }))
}
