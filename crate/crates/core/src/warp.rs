//! Event propagation under a flow field and the rasterized images the
//! deblurring losses are built from.
//!
//! Flow is expressed in pixels per bin everywhere in this crate; event times
//! are first mapped onto the bin axis `[0, B-1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventSlice, Polarity};
use crate::grid::{splat_taps, ClampedTaps, Grid};
use crate::voxel::scale_timestamps;

/// Denominators below this leave a timestamp pixel at zero.
pub const TIMESTAMP_WEIGHT_EPS: f64 = 1e-9;

/// Dense per-pixel flow in pixels/bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut u = Vec::with_capacity(height * width);
        let mut v = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self {
            height,
            width,
            u,
            v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        if self.u.len() != n || self.v.len() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "flow field {}x{} has {} / {} components",
                self.height,
                self.width,
                self.u.len(),
                self.v.len()
            )));
        }
        if self.u.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(Error::Validation("flow field contains non-finite values".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn u_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.u.clone(),
        }
    }

    pub fn v_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.v.clone(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            u: self.u.iter().map(|x| x * k).collect(),
            v: self.v.iter().map(|x| x * k).collect(),
        }
    }
}

/// Bilinear flow lookup, clamped to the border outside the field.
pub fn sample_flow(flow: &FlowField, x: f64, y: f64) -> (f64, f64) {
    let taps = ClampedTaps::new(x, y, flow.width, flow.height);
    (taps.apply(|i| flow.u[i]), taps.apply(|i| flow.v[i]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpedEvent {
    pub x: f64,
    pub y: f64,
    /// Normalized timestamp in `[0, 1]`; independent of the reference time.
    pub s: f64,
    pub p: Polarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedEvents {
    pub events: Vec<WarpedEvent>,
    /// Reference time in bin units.
    pub t_prime: f64,
}

impl WarpedEvents {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Reference time at either end of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefTime {
    Start,
    End,
}

impl RefTime {
    pub fn bins(self, bins: usize) -> f64 {
        match self {
            RefTime::Start => 0.0,
            RefTime::End => (bins - 1) as f64,
        }
    }
}

/// Moves every event to the reference time `t_prime` (in bins) along the
/// flow sampled at its original position.
pub fn propagate_events(
    slice: &EventSlice,
    flow: &FlowField,
    t_prime: f64,
    bins: usize,
) -> WarpedEvents {
    assert!(bins >= 2, "propagation needs at least two bins");
    let times = scale_timestamps(slice, bins).values;
    let span = (bins - 1) as f64;
    let events = slice
        .events()
        .iter()
        .zip(&times)
        .map(|(e, &tb)| {
            let (x, y) = (e.x as f64, e.y as f64);
            let (u, v) = sample_flow(flow, x, y);
            let dt = t_prime - tb;
            WarpedEvent {
                x: x + dt * u,
                y: y + dt * v,
                s: tb / span,
                p: e.p,
            }
        })
        .collect();
    WarpedEvents { events, t_prime }
}

/// Per-polarity average normalized timestamp images.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampImages {
    pub t_plus: Grid,
    pub t_minus: Grid,
    pub weight_plus: Grid,
    pub weight_minus: Grid,
}

impl TimestampImages {
    pub fn for_polarity(&self, p: Polarity) -> (&Grid, &Grid) {
        match p {
            Polarity::Positive => (&self.t_plus, &self.weight_plus),
            Polarity::Negative => (&self.t_minus, &self.weight_minus),
        }
    }
}

pub fn timestamp_images(w: &WarpedEvents, height: usize, width: usize) -> TimestampImages {
    let mut num_plus = Grid::zeros(height, width);
    let mut num_minus = Grid::zeros(height, width);
    let mut den_plus = Grid::zeros(height, width);
    let mut den_minus = Grid::zeros(height, width);
    for e in &w.events {
        let (num, den) = match e.p {
            Polarity::Positive => (&mut num_plus, &mut den_plus),
            Polarity::Negative => (&mut num_minus, &mut den_minus),
        };
        for (i, k, _, _) in splat_taps(e.x, e.y, width, height) {
            num.data[i] += k * e.s;
            den.data[i] += k;
        }
    }
    let ratio = |num: &Grid, den: &Grid| Grid {
        height,
        width,
        data: num
            .data
            .iter()
            .zip(&den.data)
            .map(|(n, d)| {
                if *d >= TIMESTAMP_WEIGHT_EPS {
                    (n / d).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    };
    TimestampImages {
        t_plus: ratio(&num_plus, &den_plus),
        t_minus: ratio(&num_minus, &den_minus),
        weight_plus: den_plus,
        weight_minus: den_minus,
    }
}

/// Polarity-agnostic event count after warping.
pub fn count_image(w: &WarpedEvents, height: usize, width: usize) -> Grid {
    let mut img = Grid::zeros(height, width);
    for e in &w.events {
        for (i, k, _, _) in splat_taps(e.x, e.y, width, height) {
            img.data[i] += k;
        }
    }
    img
}
