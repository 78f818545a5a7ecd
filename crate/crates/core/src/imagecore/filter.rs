use super::{Image, Kernel};
use crate::error::{Error, Result};

/// Correlates every channel with `kernel` (no kernel flip, matching the usual
/// image-filtering convention). Borders use replicate padding and the output
/// is not clamped.
///
/// The sum is evaluated as `sum(w) * center + sum(w * (v - center))`, so a
/// zero-sum kernel maps a constant neighbourhood to exactly zero.
pub fn convolve2d(img: &Image, kernel: &Kernel) -> Image {
    let r = (kernel.size() / 2) as isize;
    let wsum: f64 = kernel.weights().iter().sum();
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..ch {
                let center = img.get_clamped(x, y, c);
                let mut acc = 0.0;
                for ky in -r..=r {
                    for kx in -r..=r {
                        let wgt = kernel.weight((ky + r) as usize, (kx + r) as usize);
                        if wgt != 0.0 {
                            acc += wgt * (img.get_clamped(x + kx, y + ky, c) - center);
                        }
                    }
                }
                data.push(wsum * center + acc);
            }
        }
    }
    Image::from_raw(w, h, ch, data)
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Param(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

/// Separable Gaussian blur with replicate borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    let taps = gaussian_kernel_1d(sigma)?;
    let r = (taps.len() / 2) as isize;
    let (w, h, ch) = (img.width(), img.height(), img.channels());

    let mut horiz = Vec::with_capacity(w * h * ch);
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..ch {
                let acc: f64 = (-r..=r)
                    .map(|k| taps[(k + r) as usize] * img.get_clamped(x + k, y, c))
                    .sum();
                horiz.push(acc);
            }
        }
    }
    let horiz = Image::from_raw(w, h, ch, horiz);

    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..ch {
                let acc: f64 = (-r..=r)
                    .map(|k| taps[(k + r) as usize] * horiz.get_clamped(x, y + k, c))
                    .sum();
                data.push(acc);
            }
        }
    }
    Ok(Image::from_raw(w, h, ch, data))
}
