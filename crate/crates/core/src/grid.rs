use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `H x W` real image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "expected {} values for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut f64 {
        &mut self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Bilinear lookup with coordinates clamped to the border.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let taps = ClampedTaps::new(x, y, self.width, self.height);
        taps.apply(|i| self.data[i])
    }
}

/// Four bilinear taps of a clamped lookup: flat indices and weights.
#[derive(Debug, Clone, Copy)]
pub struct ClampedTaps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl ClampedTaps {
    pub fn new(x: f64, y: f64, width: usize, height: usize) -> Self {
        let xc = x.clamp(0.0, (width - 1) as f64);
        let yc = y.clamp(0.0, (height - 1) as f64);
        let x0 = (xc.floor() as usize).min(width - 1);
        let y0 = (yc.floor() as usize).min(height - 1);
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        Self {
            index: [
                y0 * width + x0,
                y0 * width + x1,
                y1 * width + x0,
                y1 * width + x1,
            ],
            weight: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }

    #[inline]
    pub fn apply(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..4).map(|k| self.weight[k] * f(self.index[k])).sum()
    }
}

/// Spatial splat of a point onto integer pixels with the bilinear kernel.
///
/// Yields up to four in-frame `(flat index, weight, d weight/dx, d weight/dy)`
/// taps; derivatives follow the kernel's kink convention.
pub fn splat_taps(
    x: f64,
    y: f64,
    width: usize,
    height: usize,
) -> impl Iterator<Item = (usize, f64, f64, f64)> {
    use crate::voxel::{bilinear_kernel, bilinear_kernel_grad};
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let (w, h) = (width as i64, height as i64);
    let in_range = x > -1.0 && x < w as f64 && y > -1.0 && y < h as f64;
    (0..4).filter_map(move |k| {
        if !in_range {
            return None;
        }
        let px = x0 + (k & 1) as i64;
        let py = y0 + (k >> 1) as i64;
        if px < 0 || py < 0 || px >= w || py >= h {
            return None;
        }
        let ax = px as f64 - x;
        let ay = py as f64 - y;
        let kx = bilinear_kernel(ax);
        let ky = bilinear_kernel(ay);
        if kx == 0.0 && ky == 0.0 {
            return None;
        }
        // a = p - x, so d/dx k(a) = -k'(a)
        let dx = -bilinear_kernel_grad(ax) * ky;
        let dy = -bilinear_kernel_grad(ay) * kx;
        Some(((py * w + px) as usize, kx * ky, dx, dy))
    })
}
