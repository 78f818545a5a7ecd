use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{convolve2d, gaussian_blur, to_grayscale, EdgeMap, Image, Kernel};
use crate::error::{Error, Result};

pub const CANNY_SIGMA: f64 = 1.4;
pub const CANNY_LOW_FRAC: f64 = 0.1;
pub const CANNY_HIGH_FRAC: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EdgeDetector {
    Canny { low_frac: f64, high_frac: f64 },
    Sobel,
    Laplacian,
}

impl EdgeDetector {
    pub fn canny_default() -> Self {
        EdgeDetector::Canny {
            low_frac: CANNY_LOW_FRAC,
            high_frac: CANNY_HIGH_FRAC,
        }
    }

    pub fn detect(&self, gray: &Image) -> Result<EdgeMap> {
        match *self {
            EdgeDetector::Canny {
                low_frac,
                high_frac,
            } => canny_edges(gray, low_frac, high_frac),
            EdgeDetector::Sobel => Ok(sobel_edges(gray)),
            EdgeDetector::Laplacian => Ok(laplacian_edges(gray)),
        }
    }
}

fn require_gray(img: &Image) -> Image {
    if img.channels() == 1 {
        img.clone()
    } else {
        to_grayscale(img)
    }
}

fn sobel_gradients(gray: &Image) -> (Vec<f64>, Vec<f64>) {
    let gx = convolve2d(gray, &Kernel::sobel_x()).into_data();
    let gy = convolve2d(gray, &Kernel::sobel_y()).into_data();
    (gx, gy)
}

/// Gradient magnitude from the 3x3 Sobel pair, scaled so the strongest
/// response is 1.0. RGB input is converted to luma first.
pub fn sobel_edges(img: &Image) -> EdgeMap {
    let gray = require_gray(img);
    let (gx, gy) = sobel_gradients(&gray);
    let mag = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    EdgeMap::normalized(gray.width(), gray.height(), mag)
}

/// Absolute 4-neighbour Laplacian response, scaled by its maximum.
pub fn laplacian_edges(img: &Image) -> EdgeMap {
    let gray = require_gray(img);
    let resp = convolve2d(&gray, &Kernel::laplacian4())
        .into_data()
        .into_iter()
        .map(f64::abs)
        .collect();
    EdgeMap::normalized(gray.width(), gray.height(), resp)
}

/// Quantizes a gradient direction into one of four neighbour offsets
/// (0, 45, 90 and 135 degrees, y pointing down).
fn direction_offset(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Canny detector: Gaussian blur (sigma 1.4), Sobel gradients, non-maximum
/// suppression along the quantized gradient direction, then hysteresis with
/// thresholds expressed as fractions of the maximum gradient magnitude.
/// Output is binary.
pub fn canny_edges(img: &Image, low_frac: f64, high_frac: f64) -> Result<EdgeMap> {
    if !(0.0 < low_frac && low_frac < high_frac && high_frac <= 1.0) {
        return Err(Error::Param(format!(
            "canny thresholds need 0 < low < high <= 1, got low={low_frac} high={high_frac}"
        )));
    }
    let gray = require_gray(img);
    let (w, h) = (gray.width(), gray.height());
    let blurred = gaussian_blur(&gray, CANNY_SIGMA)?;
    let (gx, gy) = sobel_gradients(&blurred);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(EdgeMap::new(w, h, vec![0.0; w * h]));
    }

    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // Strict on the negative side, non-strict on the positive side, so a
    // plateau of two equal maxima keeps exactly one pixel.
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (dx, dy) = direction_offset(gx[i], gy[i]);
            let (xi, yi) = (x as isize, y as isize);
            if m > at(xi - dx, yi - dy) && m >= at(xi + dx, yi + dy) {
                thin[i] = m;
            }
        }
    }

    let high = high_frac * max;
    let low = low_frac * max;
    let mut out = vec![0.0; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            out[i] = 1.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] >= low {
                    out[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap::new(w, h, out))
}

/// Builds the structural companion image: luma, edge detector, then the edge
/// map replicated to three channels.
pub fn edge_aware_image(img: &Image, detector: &EdgeDetector) -> Result<Image> {
    let gray = to_grayscale(img);
    detector.detect(&gray)?.to_image(3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y));
        Image::new(w, h, 1, data.collect()).unwrap()
    }

    #[test]
    fn constant_images_have_no_edges() {
        let img = Image::filled(9, 7, 1, 0.42).unwrap();
        assert!(sobel_edges(&img).data().iter().all(|v| *v == 0.0));
        assert!(laplacian_edges(&img).data().iter().all(|v| *v == 0.0));
        let canny = canny_edges(&img, 0.1, 0.3).unwrap();
        assert!(canny.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sobel_column_step_normalized() {
        let img = gray(3, 3, |x, _| if x == 2 { 1.0 } else { 0.0 });
        let map = sobel_edges(&img);
        // Raw center |gx| = 4 with gy = 0, which is also the image maximum.
        assert_eq!(map.get(1, 1), 1.0);
        assert_eq!(map.get(2, 1), 1.0);
        assert_eq!(map.get(0, 1), 0.0);
    }

    #[test]
    fn laplacian_impulse() {
        let img = gray(5, 5, |x, y| if (x, y) == (2, 2) { 1.0 } else { 0.0 });
        let map = laplacian_edges(&img);
        assert_eq!(map.get(2, 2), 1.0);
        for (x, y) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(map.get(x, y), 0.25);
        }
        assert_eq!(map.get(1, 1), 0.0);
    }

    #[test]
    fn laplacian_ramp_interior_is_zero() {
        let w = 8;
        let img = gray(w, 6, |x, _| x as f64 / w as f64);
        let raw = convolve2d(&img, &Kernel::laplacian4());
        for y in 1..5 {
            for x in 1..w - 1 {
                assert!(raw.get(x, y, 0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn canny_step_gives_single_line() {
        let img = gray(5, 5, |x, _| if x >= 2 { 1.0 } else { 0.0 });
        let map = canny_edges(&img, 0.1, 0.3).unwrap();
        let mut columns = Vec::new();
        for y in 0..5 {
            let row: Vec<usize> = (0..5).filter(|&x| map.get(x, y) == 1.0).collect();
            assert_eq!(row.len(), 1, "row {y}: {:?}", map.data());
            columns.push(row[0]);
        }
        assert!(columns.windows(2).all(|p| p[0] == p[1]));
        assert!(columns[0] == 1 || columns[0] == 2);
        assert!(map.data().iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn canny_threshold_order() {
        let img = Image::filled(3, 3, 1, 0.0).unwrap();
        assert!(matches!(canny_edges(&img, 0.4, 0.2), Err(Error::Param(_))));
        assert!(canny_edges(&img, 0.0, 0.2).is_err());
        assert!(canny_edges(&img, 0.2, 1.5).is_err());
    }

    #[test]
    fn edge_aware_constant_rgb() {
        let img = Image::filled(6, 4, 3, 0.8).unwrap();
        let out = edge_aware_image(&img, &EdgeDetector::Sobel).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (6, 4, 3));
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn edge_aware_composes_detector() {
        let img = gray(6, 6, |x, y| if x + y > 5 { 0.9 } else { 0.1 });
        let out = edge_aware_image(&img, &EdgeDetector::Laplacian).unwrap();
        let expected = laplacian_edges(&img);
        for (px, e) in out.data().chunks_exact(3).zip(expected.data()) {
            assert!(px.iter().all(|v| v == e));
        }
    }
}
