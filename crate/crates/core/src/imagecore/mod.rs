//! Raster containers, filtering and the edge detectors that produce the
//! structural (edge-aware) companion stream.
//!
//! Samples are `f64` in `[0, 1]`, stored row-major with channels interleaved
//! (`data[(y * width + x) * channels + c]`).

mod edges;
mod filter;
mod netpbm;

pub use edges::{
    canny_edges, edge_aware_image, laplacian_edges, sobel_edges, EdgeDetector, CANNY_HIGH_FRAC,
    CANNY_LOW_FRAC, CANNY_SIGMA,
};
pub use filter::{convolve2d, gaussian_blur, gaussian_kernel_1d};
pub use netpbm::{encode_pgm, encode_ppm, load_netpbm, read_netpbm};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Param(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant image filled with `value` (clamped to `[0, 1]`).
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(
            width,
            height,
            channels,
            vec![value.clamp(0.0, 1.0); width * height * channels],
        )
    }

    /// Builds an image without the `[0, 1]` range check. Used for filter
    /// outputs, which are allowed to leave the unit interval.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Sample with replicate (clamp-to-edge) border handling.
    #[inline]
    pub(crate) fn get_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                for c in 0..self.channels {
                    data.push(self.get(x, y, c));
                }
            }
        }
        Image::from_raw(self.width, self.height, self.channels, data)
    }

    pub fn flip_vertical(&self) -> Image {
        let row = self.width * self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for y in (0..self.height).rev() {
            data.extend_from_slice(&self.data[y * row..(y + 1) * row]);
        }
        Image::from_raw(self.width, self.height, self.channels, data)
    }

    /// Channel-planar copy (`[c][y][x]`), the layout the convolutional encoder consumes.
    pub fn to_planar(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; self.data.len()];
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, v) in px.iter().enumerate() {
                out[c * plane + i] = *v;
            }
        }
        out
    }
}

/// Per-pixel edge response in `[0, 1]`, single channel.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl EdgeMap {
    pub(crate) fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        EdgeMap {
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Replicates the map into an image with `channels` identical channels.
    pub fn to_image(&self, channels: usize) -> Result<Image> {
        let mut data = Vec::with_capacity(self.data.len() * channels);
        for v in &self.data {
            data.extend(std::iter::repeat_n(*v, channels));
        }
        Image::new(self.width, self.height, channels, data)
    }

    /// Scales responses by the per-map maximum so the strongest edge is 1.0.
    /// A map with no response stays all-zero.
    pub(crate) fn normalized(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        let max = data.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut data {
                *v /= max;
            }
        } else {
            data.iter_mut().for_each(|v| *v = 0.0);
        }
        EdgeMap::new(width, height, data)
    }
}

/// Square correlation kernel with odd side length.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::Param(format!("kernel size must be odd and >= 1, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::Shape(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        Ok(Kernel { size, weights })
    }

    pub fn identity3() -> Self {
        Kernel {
            size: 3,
            weights: vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    /// Horizontal derivative, positive when intensity grows to the right.
    pub fn sobel_x() -> Self {
        Kernel {
            size: 3,
            weights: vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        }
    }

    /// Vertical derivative, positive when intensity grows downwards.
    pub fn sobel_y() -> Self {
        Kernel {
            size: 3,
            weights: vec![-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
        }
    }

    pub fn laplacian4() -> Self {
        Kernel {
            size: 3,
            weights: vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }
}

/// BT.601 luma. Single-channel input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]).clamp(0.0, 1.0))
        .collect();
    Image::from_raw(img.width, img.height, 1, data)
}

/// Bilinear resampling with half-pixel centers and clamped source coordinates.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::Param(format!(
            "resize target must be at least 1x1, got {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let axis = |dst: usize, scale: f64, len: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, src - lo as f64)
    };
    let mut data = Vec::with_capacity(width * height * img.channels);
    for y in 0..height {
        let (y0, y1, fy) = axis(y, sy, img.height);
        for x in 0..width {
            let (x0, x1, fx) = axis(x, sx, img.width);
            for c in 0..img.channels {
                let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
                let bottom = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
                data.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Image::from_raw(width, height, img.channels, data))
}
