//! Discretized event volume: events accumulated into `B` temporal bins with
//! a trilinear (bilinear in space, linear in time) kernel.

use rayon::prelude::*;

use crate::events::EventSlice;

/// `max(0, 1 - |a|)`.
#[inline]
pub fn bilinear_kernel(a: f64) -> f64 {
    (1.0 - a.abs()).max(0.0)
}

/// Derivative of [`bilinear_kernel`] with respect to `a`.
///
/// At the kinks: `|a| = 1` gives 0 and `a = 0` takes the left limit (+1).
#[inline]
pub fn bilinear_kernel_grad(a: f64) -> f64 {
    if a.abs() >= 1.0 {
        0.0
    } else if a <= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Event times mapped onto the bin axis `[0, B-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTimes {
    pub values: Vec<f64>,
    /// Set when the window has zero duration and every value was pinned to 0.
    pub degenerate: bool,
}

pub fn scale_timestamps(slice: &EventSlice, bins: usize) -> ScaledTimes {
    assert!(bins >= 1, "bins must be >= 1");
    let span = slice.duration();
    if slice.is_empty() || span <= 0.0 {
        return ScaledTimes {
            values: vec![0.0; slice.len()],
            degenerate: !slice.is_empty(),
        };
    }
    let scale = (bins - 1) as f64 / span;
    let values = slice
        .events()
        .iter()
        .map(|e| ((e.t - slice.t0()) * scale).clamp(0.0, (bins - 1) as f64))
        .collect();
    ScaledTimes {
        values,
        degenerate: false,
    }
}

/// `B x H x W` signed event mass, stored bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EventVolume {
    pub bins: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// Events that fell entirely outside the `[-1, W] x [-1, H]` support.
    pub dropped: usize,
}

impl EventVolume {
    pub fn zeros(bins: usize, height: usize, width: usize) -> Self {
        Self {
            bins,
            height,
            width,
            data: vec![0.0; bins * height * width],
            dropped: 0,
        }
    }

    #[inline]
    pub fn index(&self, b: usize, y: usize, x: usize) -> usize {
        (b * self.height + y) * self.width + x
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(b, y, x)]
    }

    pub fn plane(&self, b: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    fn deposit(&mut self, x: f64, y: f64, t: f64, p: f64) -> bool {
        let (w, h, nb) = (self.width as i64, self.height as i64, self.bins as i64);
        if !(x > -1.0 && x < w as f64 && y > -1.0 && y < h as f64) {
            return false;
        }
        let (x0, y0, t0) = (x.floor() as i64, y.floor() as i64, t.floor() as i64);
        for bt in t0..=t0 + 1 {
            if bt < 0 || bt >= nb {
                continue;
            }
            let wt = bilinear_kernel(bt as f64 - t);
            if wt == 0.0 {
                continue;
            }
            for py in y0..=y0 + 1 {
                if py < 0 || py >= h {
                    continue;
                }
                let wy = bilinear_kernel(py as f64 - y);
                if wy == 0.0 {
                    continue;
                }
                for px in x0..=x0 + 1 {
                    if px < 0 || px >= w {
                        continue;
                    }
                    let wx = bilinear_kernel(px as f64 - x);
                    let i = self.index(bt as usize, py as usize, px as usize);
                    self.data[i] += p * wt * wy * wx;
                }
            }
        }
        true
    }

    fn accumulate(&mut self, slice: &EventSlice, times: &[f64], range: std::ops::Range<usize>) {
        for i in range {
            let e = &slice.events()[i];
            if !self.deposit(e.x as f64, e.y as f64, times[i], e.p.sign()) {
                self.dropped += 1;
            }
        }
    }
}

pub fn build_volume(slice: &EventSlice, bins: usize, height: usize, width: usize) -> EventVolume {
    assert!(bins >= 1 && height >= 1 && width >= 1);
    let times = scale_timestamps(slice, bins).values;
    let mut vol = EventVolume::zeros(bins, height, width);
    vol.accumulate(slice, &times, 0..slice.len());
    vol
}

/// Events per private accumulator in [`build_volume_parallel`]. Fixed so the
/// reduction order, and hence the result, does not depend on thread count.
const CHUNK_EVENTS: usize = 8192;

/// Parallel variant of [`build_volume`]; `threads == 0` runs sequentially.
///
/// Events are split into fixed-size chunks, each accumulated into a private
/// volume, and the partial volumes are summed in chunk order.
pub fn build_volume_parallel(
    slice: &EventSlice,
    bins: usize,
    height: usize,
    width: usize,
    threads: usize,
) -> EventVolume {
    if threads == 0 || slice.len() <= CHUNK_EVENTS {
        return build_volume(slice, bins, height, width);
    }
    let times = scale_timestamps(slice, bins).values;
    let n = slice.len();
    let ranges: Vec<_> = (0..n)
        .step_by(CHUNK_EVENTS)
        .map(|s| s..(s + CHUNK_EVENTS).min(n))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let partials: Vec<EventVolume> = pool.install(|| {
        ranges
            .into_par_iter()
            .map(|r| {
                let mut v = EventVolume::zeros(bins, height, width);
                v.accumulate(slice, &times, r);
                v
            })
            .collect()
    });
    let mut out = EventVolume::zeros(bins, height, width);
    for part in partials {
        out.dropped += part.dropped;
        for (o, v) in out.data.iter_mut().zip(&part.data) {
            *o += v;
        }
    }
    out
}

/// An event position recovered from a volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedEvent {
    pub x: f64,
    pub y: f64,
    pub t_bin: f64,
    pub polarity: f64,
}

/// Recovers events from a volume in which no two events share a voxel and
/// no two supports touch.
///
/// Nonzero voxels are grouped into 26-connected components; each component
/// is one event. Because the kernel is separable and its taps sum to one,
/// the weight centroid along each axis is exactly the event coordinate.
/// Results are ordered by `(t_bin, y, x)`.
pub fn decode_sparse_volume(vol: &EventVolume) -> Vec<DecodedEvent> {
    let (nb, h, w) = (vol.bins, vol.height, vol.width);
    let mut seen = vec![false; vol.data.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..vol.data.len() {
        if seen[start] || vol.data[start] == 0.0 {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut mass, mut sx, mut sy, mut st) = (0.0, 0.0, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let b = i / (h * w);
            let y = (i / w) % h;
            let x = i % w;
            let m = vol.data[i];
            mass += m;
            sx += m * x as f64;
            sy += m * y as f64;
            st += m * b as f64;
            for db in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (bb, yy, xx) = (b as i64 + db, y as i64 + dy, x as i64 + dx);
                        if bb < 0 || yy < 0 || xx < 0 {
                            continue;
                        }
                        let (bb, yy, xx) = (bb as usize, yy as usize, xx as usize);
                        if bb >= nb || yy >= h || xx >= w {
                            continue;
                        }
                        let j = vol.index(bb, yy, xx);
                        if !seen[j] && vol.data[j] != 0.0 {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        out.push(DecodedEvent {
            x: sx / mass,
            y: sy / mass,
            t_bin: st / mass,
            polarity: mass.signum(),
        });
    }
    out.sort_by(|a, b| {
        a.t_bin
            .total_cmp(&b.t_bin)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    out
}
