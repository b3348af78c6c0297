//! Raster containers shared by every stage of the pipeline.
//!
//! Samples are stored as `f64` in linear radiometric units. Stages that
//! produce "measured" rasters (shading, albedo, filtered shading) round their
//! output onto the `f32` grid with [`snap`], which is what the PFM container
//! stores. Differences of two snapped rasters are then exact in `f64`, so the
//! additive layer decompositions reconstruct their inputs bit for bit.

use crate::error::{Error, Result};

/// Rounds a sample onto the `f32` grid.
#[inline]
pub fn snap(x: f64) -> f64 {
    x as f32 as f64
}

/// Pixel grid dimensions, row-major with `index = y * width + x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.width, i / self.width)
    }

    /// 4-neighbours of pixel `i` that lie inside the frame.
    pub fn neighbors4(&self, i: usize) -> impl Iterator<Item = usize> {
        let (x, y) = self.coords(i);
        let w = self.width;
        let h = self.height;
        let left = (x > 0).then(|| i - 1);
        let right = (x + 1 < w).then(|| i + 1);
        let up = (y > 0).then(|| i - w);
        let down = (y + 1 < h).then(|| i + w);
        [left, right, up, down].into_iter().flatten()
    }

    /// True when pixel `i` lies on the outermost ring of the frame.
    #[inline]
    pub fn on_frame(&self, i: usize) -> bool {
        let (x, y) = self.coords(i);
        x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height
    }
}

/// Floating-point image with 1 or 3 interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    dims: Dims,
    channels: usize,
    data: Vec<f64>,
}

impl LinearImage {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::mismatch(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            dims: Dims::new(width, height),
            channels,
            data,
        })
    }

    /// Builds a single-channel image by evaluating `f` at every pixel index.
    pub fn from_fn(dims: Dims, f: impl Fn(usize) -> f64) -> Result<Self> {
        let data = (0..dims.len()).map(f).collect();
        Self::from_vec(dims.width, dims.height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, pixel: usize, channel: usize) -> f64 {
        self.data[pixel * self.channels + channel]
    }

    #[inline]
    pub(crate) fn set(&mut self, pixel: usize, channel: usize, v: f64) {
        self.data[pixel * self.channels + channel] = v;
    }

    /// Samples of one pixel.
    pub fn pixel(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &LinearImage) -> bool {
        self.dims == other.dims && self.channels == other.channels
    }

    pub(crate) fn require_dims(&self, dims: Dims, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::mismatch(format!(
                "{what} is {}x{}, expected {}x{}",
                self.dims.width, self.dims.height, dims.width, dims.height
            )));
        }
        Ok(())
    }

    pub(crate) fn require_channels(&self, channels: usize, what: &str) -> Result<()> {
        if self.channels != channels {
            return Err(Error::mismatch(format!(
                "{what} has {} channels, expected {channels}",
                self.channels
            )));
        }
        Ok(())
    }

    /// Applies `f` to every sample; fails if any result is non-finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_vec(
            self.width(),
            self.height(),
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Root-mean-square over the pixels of `mask` (all channels).
    pub fn rms_over(&self, mask: &Mask) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for i in mask.pixels() {
            for &v in self.pixel(i) {
                acc += v * v;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            (acc / n as f64).sqrt()
        }
    }
}

/// Per-pixel matte in `[0, 1]`. The object region Ω is `value > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    dims: Dims,
    values: Vec<f64>,
}

impl Mask {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if values.len() != width * height {
            return Err(Error::mismatch(format!(
                "{width}x{height} mask needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "mask value {} at index {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            dims: Dims::new(width, height),
            values,
        })
    }

    /// Binary mask from a predicate on pixel coordinates.
    pub fn from_fn(width: usize, height: usize, inside: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let dims = Dims::new(width, height);
        let values = (0..dims.len())
            .map(|i| {
                let (x, y) = dims.coords(i);
                if inside(x, y) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::from_values(width, height, values)
    }

    /// Rasterized disk: pixel centres within `radius` of `(cx, cy)`.
    pub fn disk(width: usize, height: usize, cx: f64, cy: f64, radius: f64) -> Result<Self> {
        Self::from_fn(width, height, |x, y| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            dx * dx + dy * dy <= radius * radius
        })
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    #[inline]
    pub fn inside(&self, i: usize) -> bool {
        self.values[i] > 0.0
    }

    /// Whether `(x, y)` (possibly outside the frame) is in Ω.
    #[inline]
    pub fn inside_xy(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.dims.width
            && (y as usize) < self.dims.height
            && self.inside(self.dims.index(x as usize, y as usize))
    }

    /// Indices of Ω in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(move |&i| self.inside(i))
    }

    pub fn area(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Centroid of Ω in pixel coordinates.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for i in self.pixels() {
            let (x, y) = self.dims.coords(i);
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }
}

/// Unit surface normals on Ω; `[0, 0, 0]` outside.
///
/// Axes follow the pixel grid: `x` to the right, `y` down the image, `z`
/// toward the viewer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    dims: Dims,
    normals: Vec<[f64; 3]>,
}

impl NormalField {
    pub fn new(dims: Dims, normals: Vec<[f64; 3]>) -> Result<Self> {
        if normals.len() != dims.len() {
            return Err(Error::mismatch(format!(
                "normal field needs {} vectors, got {}",
                dims.len(),
                normals.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| n.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, normals })
    }

    /// Constant normal on Ω, zero elsewhere.
    pub fn constant(mask: &Mask, n: [f64; 3]) -> Self {
        let normals = (0..mask.dims().len())
            .map(|i| if mask.inside(i) { n } else { [0.0; 3] })
            .collect();
        Self {
            dims: mask.dims(),
            normals,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize) -> [f64; 3] {
        self.normals[i]
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.normals
    }

    /// Packs the field into a 3-channel image (for persistence).
    pub fn to_image(&self) -> LinearImage {
        let data = self.normals.iter().flat_map(|n| n.iter().copied()).collect();
        LinearImage::from_vec(self.dims.width, self.dims.height, 3, data)
            .expect("normal field is finite")
    }

    pub fn from_image(img: &LinearImage) -> Result<Self> {
        img.require_channels(3, "normal image")?;
        let normals = (0..img.dims().len())
            .map(|i| {
                let p = img.pixel(i);
                [p[0], p[1], p[2]]
            })
            .collect();
        Self::new(img.dims(), normals)
    }
}

/// Scalar height on Ω in pixel units; zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    dims: Dims,
    values: Vec<f64>,
}

impl HeightField {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::mismatch(format!(
                "height field needs {} values, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_image(&self) -> LinearImage {
        LinearImage::from_vec(self.dims.width, self.dims.height, 1, self.values.clone())
            .expect("height field is finite")
    }

    pub fn from_image(img: &LinearImage) -> Result<Self> {
        img.require_channels(1, "height image")?;
        Self::new(img.dims(), img.as_slice().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(matches!(
            LinearImage::from_vec(2, 2, 1, vec![0.0; 3]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            LinearImage::from_vec(1, 1, 1, vec![f64::NAN]),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(LinearImage::zeros(0, 3, 1), Err(Error::EmptyImage)));
        assert!(LinearImage::zeros(2, 2, 2).is_err());
    }

    #[test]
    fn neighbors_respect_frame() {
        let d = Dims::new(3, 2);
        let n: Vec<_> = d.neighbors4(0).collect();
        assert_eq!(n, vec![1, 3]);
        let n: Vec<_> = d.neighbors4(4).collect();
        assert_eq!(n, vec![3, 5, 1]);
    }

    #[test]
    fn snapped_differences_reconstruct_exactly() {
        // Layers are stored as unsnapped differences of snapped rasters.
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100_000 {
            let s = snap(next() * 3.0);
            let f = snap((next() - 0.3) * 3.0 * next().powi(4));
            let d = s - f;
            assert_eq!((d + f).to_bits(), s.to_bits(), "s={s} f={f}");
        }
    }
}
