//! Scalar objectives over warped events, flow fields and disparity maps.
//!
//! Every loss here is "lower is better". The `*_grad` variants return the
//! value together with its gradient with respect to the dense field the loss
//! consumes; parametric models chain through those in `optimize`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::egomotion::{pose_disparity_to_flow, DisparityField, Pose};
use crate::error::{Error, Result};
use crate::events::{EventSlice, Polarity, StereoRig};
use crate::grid::{splat_taps, ClampedTaps, Grid};
use crate::voxel::scale_timestamps;
use crate::warp::{
    count_image, propagate_events, timestamp_images, FlowField, RefTime, WarpedEvents,
    TIMESTAMP_WEIGHT_EPS,
};

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_CENSUS_WINDOW: usize = 5;

/// `sqrt(x^2 + eps^2)`.
#[inline]
pub fn charbonnier(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt()
}

#[inline]
fn charbonnier_grad(x: f64, eps: f64) -> f64 {
    x / charbonnier(x, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.1,
            lambda4: 0.2,
        }
    }
}

impl LossWeights {
    pub fn from_slice(w: &[f64]) -> Result<Self> {
        if w.len() != 4 {
            return Err(Error::Validation(format!(
                "expected 4 weights, got {}",
                w.len()
            )));
        }
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Validation("loss weights must be finite and >= 0".into()));
        }
        Ok(Self {
            lambda1: w[0],
            lambda2: w[1],
            lambda3: w[2],
            lambda4: w[3],
        })
    }

    pub fn zero() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Flow,
    Sfm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub objective: ObjectiveKind,
    pub total: f64,
    pub terms: BTreeMap<String, f64>,
    pub weights: LossWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
}

impl LossReport {
    pub fn new(objective: ObjectiveKind, weights: LossWeights, terms: &[(&str, f64)]) -> Self {
        let mut r = Self {
            objective,
            total: 0.0,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            weights,
            gradient: None,
        };
        r.total = r.weighted_sum();
        r
    }

    /// Weight applied to a named term in the total.
    pub fn term_weight(&self, name: &str) -> f64 {
        let w = &self.weights;
        match (self.objective, name) {
            (_, "time") => 1.0,
            (ObjectiveKind::Flow, "smooth") => w.lambda1,
            (ObjectiveKind::Sfm, "stereo") => w.lambda2,
            (ObjectiveKind::Sfm, "consistency") => w.lambda3,
            (ObjectiveKind::Sfm, "smooth") => w.lambda4,
            // diagnostic terms such as `variance` do not enter the total
            _ => 0.0,
        }
    }

    pub fn weighted_sum(&self) -> f64 {
        self.terms
            .iter()
            .map(|(k, v)| {
                let w = self.term_weight(k);
                if w == 0.0 {
                    0.0
                } else {
                    w * v
                }
            })
            .sum()
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }
}

/// `sum T+^2 + T-^2` over the timestamp images of `w`.
pub fn time_loss_at(w: &WarpedEvents, height: usize, width: usize) -> f64 {
    let ti = timestamp_images(w, height, width);
    ti.t_plus
        .data
        .iter()
        .chain(&ti.t_minus.data)
        .map(|t| t * t)
        .sum()
}

/// Temporal loss evaluated with the reference time at both window ends.
pub fn time_loss(slice: &EventSlice, flow: &FlowField, bins: usize) -> f64 {
    let (h, w) = (flow.height, flow.width);
    [RefTime::Start, RefTime::End]
        .iter()
        .map(|r| time_loss_at(&propagate_events(slice, flow, r.bins(bins), bins), h, w))
        .sum()
}

/// Negated variance of the warped count image.
///
/// Kept for comparison only: minimizing it rewards flows that squeeze events
/// onto lines, so it is never part of a total.
pub fn variance_loss(w: &WarpedEvents, height: usize, width: usize) -> f64 {
    let img = count_image(w, height, width);
    let n = img.data.len() as f64;
    let mean = img.sum() / n;
    let var = img.data.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        0.0
    } else {
        -var
    }
}

/// Charbonnier penalty over 4-connected neighbor differences of both flow
/// components; each unordered pair is counted once.
pub fn smoothness_loss(flow: &FlowField, eps: f64) -> f64 {
    smoothness_grid(&flow.u_grid(), eps, None) + smoothness_grid(&flow.v_grid(), eps, None)
}

/// Single-channel variant of [`smoothness_loss`], used on disparity.
pub fn smoothness_scalar(img: &Grid, eps: f64) -> f64 {
    smoothness_grid(img, eps, None)
}

pub fn smoothness_scalar_grad(img: &Grid, eps: f64) -> (f64, Grid) {
    let mut g = Grid::zeros(img.height, img.width);
    let v = smoothness_grid(img, eps, Some(&mut g));
    (v, g)
}

pub fn smoothness_flow_grad(flow: &FlowField, eps: f64) -> (f64, FlowField) {
    let (lu, gu) = smoothness_scalar_grad(&flow.u_grid(), eps);
    let (lv, gv) = smoothness_scalar_grad(&flow.v_grid(), eps);
    (
        lu + lv,
        FlowField {
            height: flow.height,
            width: flow.width,
            u: gu.data,
            v: gv.data,
        },
    )
}

fn smoothness_grid(img: &Grid, eps: f64, mut grad: Option<&mut Grid>) -> f64 {
    let (h, w) = (img.height, img.width);
    let mut total = 0.0;
    let mut pair = |a: usize, b: usize, total: &mut f64| {
        let d = img.data[a] - img.data[b];
        *total += charbonnier(d, eps);
        if let Some(g) = grad.as_deref_mut() {
            let dd = charbonnier_grad(d, eps);
            g.data[a] += dd;
            g.data[b] -= dd;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                pair(i, i + 1, &mut total);
            }
            if y + 1 < h {
                pair(i, i + w, &mut total);
            }
        }
    }
    total
}

/// Per-pixel signed census descriptors over a `window x window` patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusImage {
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub data: Vec<i8>,
}

impl CensusImage {
    pub fn descriptor_len(&self) -> usize {
        self.window * self.window
    }

    pub fn descriptor(&self, x: usize, y: usize) -> &[i8] {
        let n = self.descriptor_len();
        let i = (y * self.width + x) * n;
        &self.data[i..i + n]
    }
}

/// Sign of `center - neighbor` for each neighbor in the window, in row-major
/// window order. Ties and out-of-frame neighbors give 0.
pub fn census_transform(img: &Grid, window: usize) -> CensusImage {
    assert!(window >= 3 && window % 2 == 1, "census window must be odd and >= 3");
    let (h, w) = (img.height, img.width);
    let r = (window / 2) as i64;
    let mut data = Vec::with_capacity(h * w * window * window);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let c = img.data[(y as usize) * w + x as usize];
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        data.push(0);
                        continue;
                    }
                    let n = img.data[(ny as usize) * w + nx as usize];
                    data.push(if c > n {
                        1
                    } else if c < n {
                        -1
                    } else {
                        0
                    });
                }
            }
        }
    }
    CensusImage {
        height: h,
        width: w,
        window,
        data,
    }
}

/// Linear lookup along a row at real column `xs`; `None` outside `[0, W-1]`.
/// Returns `(x0, x1, frac)`.
#[inline]
fn row_taps(xs: f64, width: usize) -> Option<(usize, usize, f64)> {
    if !(xs >= 0.0 && xs <= (width - 1) as f64) {
        return None;
    }
    let x0 = (xs.floor() as usize).min(width - 1);
    let x1 = (x0 + 1).min(width - 1);
    Some((x0, x1, xs - x0 as f64))
}

/// One direction of the census stereo term: descriptors of `target` compared
/// with `source` descriptors sampled at `x + sign * disp(x, y)`.
fn census_direction(
    target: &CensusImage,
    source: &CensusImage,
    disp: &Grid,
    sign: f64,
    eps: f64,
    mut grad: Option<&mut Grid>,
) -> f64 {
    let (h, w) = (target.height, target.width);
    let n = target.descriptor_len();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let xs = x as f64 + sign * disp.data[i];
            let Some((x0, x1, f)) = row_taps(xs, w) else {
                continue;
            };
            let c = target.descriptor(x, y);
            let a = source.descriptor(x0, y);
            let b = source.descriptor(x1, y);
            let mut dsum = 0.0;
            for k in 0..n {
                let s = (1.0 - f) * a[k] as f64 + f * b[k] as f64;
                let r = c[k] as f64 - s;
                total += charbonnier(r, eps);
                if grad.is_some() && x1 != x0 {
                    // dr/dxs = -(b - a); dxs/dd = sign
                    dsum += charbonnier_grad(r, eps) * -((b[k] - a[k]) as f64) * sign;
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                g.data[i] += dsum;
            }
        }
    }
    total
}

fn check_same(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "{what}: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// Symmetric census stereo loss between two deblurred count images.
///
/// Census signs are data: the gradient flows only through the disparity
/// lookups.
pub fn census_stereo_loss(
    left_count: &Grid,
    right_count: &Grid,
    disp_left: &DisparityField,
    disp_right: &DisparityField,
    window: usize,
    eps: f64,
) -> Result<f64> {
    census_stereo_impl(left_count, right_count, disp_left, disp_right, window, eps, false)
        .map(|r| r.0)
}

pub fn census_stereo_grad(
    left_count: &Grid,
    right_count: &Grid,
    disp_left: &DisparityField,
    disp_right: &DisparityField,
    window: usize,
    eps: f64,
) -> Result<(f64, Grid, Grid)> {
    census_stereo_impl(left_count, right_count, disp_left, disp_right, window, eps, true)
}

fn census_stereo_impl(
    left_count: &Grid,
    right_count: &Grid,
    disp_left: &DisparityField,
    disp_right: &DisparityField,
    window: usize,
    eps: f64,
    want_grad: bool,
) -> Result<(f64, Grid, Grid)> {
    check_same(left_count, right_count, "stereo images")?;
    check_same(left_count, &disp_left.0, "left disparity")?;
    check_same(left_count, &disp_right.0, "right disparity")?;
    let cl = census_transform(left_count, window);
    let cr = census_transform(right_count, window);
    let (h, w) = (left_count.height, left_count.width);
    let mut gl = Grid::zeros(h, w);
    let mut gr = Grid::zeros(h, w);
    let left = census_direction(&cl, &cr, &disp_left.0, -1.0, eps, want_grad.then_some(&mut gl));
    let right = census_direction(&cr, &cl, &disp_right.0, 1.0, eps, want_grad.then_some(&mut gr));
    Ok((left + right, gl, gr))
}

/// One direction of the consistency term: `rho(d(x) - other(x + sign*d(x)))`.
fn consistency_direction(
    d: &Grid,
    other: &Grid,
    sign: f64,
    eps: f64,
    grads: Option<(&mut Grid, &mut Grid)>,
) -> f64 {
    let (h, w) = (d.height, d.width);
    let mut total = 0.0;
    let mut grads = grads;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let xs = x as f64 + sign * d.data[i];
            let Some((x0, x1, f)) = row_taps(xs, w) else {
                continue;
            };
            let (a, b) = (other.data[y * w + x0], other.data[y * w + x1]);
            let s = (1.0 - f) * a + f * b;
            let r = d.data[i] - s;
            total += charbonnier(r, eps);
            if let Some((gd, go)) = grads.as_mut() {
                let g = charbonnier_grad(r, eps);
                let slope = if x1 != x0 { b - a } else { 0.0 };
                gd.data[i] += g * (1.0 - slope * sign);
                go.data[y * w + x0] -= g * (1.0 - f);
                go.data[y * w + x1] -= g * f;
            }
        }
    }
    total
}

/// Left-right disparity consistency, both directions, out-of-frame samples
/// excluded.
pub fn lr_consistency_loss(
    disp_left: &DisparityField,
    disp_right: &DisparityField,
    eps: f64,
) -> Result<f64> {
    lr_consistency_grad(disp_left, disp_right, eps).map(|r| r.0)
}

pub fn lr_consistency_grad(
    disp_left: &DisparityField,
    disp_right: &DisparityField,
    eps: f64,
) -> Result<(f64, Grid, Grid)> {
    check_same(&disp_left.0, &disp_right.0, "disparity maps")?;
    let (h, w) = (disp_left.height(), disp_left.width());
    let mut gl = Grid::zeros(h, w);
    let mut gr = Grid::zeros(h, w);
    let a = consistency_direction(&disp_left.0, &disp_right.0, -1.0, eps, Some((&mut gl, &mut gr)));
    let b = consistency_direction(&disp_right.0, &disp_left.0, 1.0, eps, Some((&mut gr, &mut gl)));
    Ok((a + b, gl, gr))
}

/// `time + lambda1 * smooth`.
pub fn total_flow_loss(
    slice: &EventSlice,
    flow: &FlowField,
    bins: usize,
    lambda1: f64,
    eps: f64,
) -> LossReport {
    let weights = LossWeights {
        lambda1,
        ..LossWeights::default()
    };
    LossReport::new(
        ObjectiveKind::Flow,
        weights,
        &[
            ("time", time_loss(slice, flow, bins)),
            ("smooth", smoothness_loss(flow, eps)),
        ],
    )
}

/// Settings shared by the stereo structure-from-motion objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfmSettings {
    pub bins: usize,
    pub weights: LossWeights,
    pub eps: f64,
    pub census_window: usize,
}

impl Default for SfmSettings {
    fn default() -> Self {
        Self {
            bins: 9,
            weights: LossWeights::default(),
            eps: DEFAULT_EPS,
            census_window: DEFAULT_CENSUS_WINDOW,
        }
    }
}

/// Deblurred count image at the start of the window; the image the stereo
/// term compares.
pub fn deblurred_count(slice: &EventSlice, flow: &FlowField, bins: usize) -> Grid {
    count_image(
        &propagate_events(slice, flow, RefTime::Start.bins(bins), bins),
        flow.height,
        flow.width,
    )
}

/// `temporal + lambda2 stereo + lambda3 consistency + lambda4 smoothness`.
///
/// The temporal term is the sum of the left and right temporal losses under
/// the flow each camera's disparity induces; smoothness applies to both
/// disparity maps.
#[allow(clippy::too_many_arguments)]
pub fn total_sfm_loss(
    left: &EventSlice,
    right: &EventSlice,
    pose: &Pose,
    disp_left: &DisparityField,
    disp_right: &DisparityField,
    rig: &StereoRig,
    settings: &SfmSettings,
) -> Result<LossReport> {
    let b = rig.baseline_m;
    let bins = settings.bins;
    let flow_l = pose_disparity_to_flow(pose, disp_left, &rig.left, b, bins).flow;
    let flow_r = pose_disparity_to_flow(pose, disp_right, &rig.right, b, bins).flow;
    let temporal = time_loss(left, &flow_l, bins) + time_loss(right, &flow_r, bins);
    let count_l = deblurred_count(left, &flow_l, bins);
    let count_r = deblurred_count(right, &flow_r, bins);
    let stereo = census_stereo_loss(
        &count_l,
        &count_r,
        disp_left,
        disp_right,
        settings.census_window,
        settings.eps,
    )?;
    let consistency = lr_consistency_loss(disp_left, disp_right, settings.eps)?;
    let smooth = smoothness_scalar(&disp_left.0, settings.eps)
        + smoothness_scalar(&disp_right.0, settings.eps);
    Ok(LossReport::new(
        ObjectiveKind::Sfm,
        settings.weights,
        &[
            ("time", temporal),
            ("stereo", stereo),
            ("consistency", consistency),
            ("smooth", smooth),
        ],
    ))
}

/// [`time_loss_at`] with its gradient with respect to each warped event's
/// position.
pub fn time_loss_at_grad(w: &WarpedEvents, height: usize, width: usize) -> (f64, Vec<[f64; 2]>) {
    let ti = timestamp_images(w, height, width);
    let loss = ti
        .t_plus
        .data
        .iter()
        .chain(&ti.t_minus.data)
        .map(|t| t * t)
        .sum();
    let grads = w
        .events
        .iter()
        .map(|e| {
            let (t_img, den) = ti.for_polarity(e.p);
            let mut g = [0.0; 2];
            for (i, _, dkx, dky) in splat_taps(e.x, e.y, width, height) {
                let d = den.data[i];
                if d < TIMESTAMP_WEIGHT_EPS {
                    continue;
                }
                let t = t_img.data[i];
                let c = 2.0 * t * (e.s - t) / d;
                g[0] += c * dkx;
                g[1] += c * dky;
            }
            g
        })
        .collect();
    (loss, grads)
}

/// [`time_loss`] with its gradient with respect to every flow-grid value.
pub fn time_loss_flow_grad(slice: &EventSlice, flow: &FlowField, bins: usize) -> (f64, FlowField) {
    let (h, w) = (flow.height, flow.width);
    let times = scale_timestamps(slice, bins).values;
    let taps: Vec<ClampedTaps> = slice
        .events()
        .iter()
        .map(|e| ClampedTaps::new(e.x as f64, e.y as f64, w, h))
        .collect();
    let mut grad = FlowField::zeros(h, w);
    let mut total = 0.0;
    for r in [RefTime::Start, RefTime::End] {
        let tp = r.bins(bins);
        let warped = propagate_events(slice, flow, tp, bins);
        let (loss, g) = time_loss_at_grad(&warped, h, w);
        total += loss;
        for ((gi, tb), tap) in g.iter().zip(&times).zip(&taps) {
            let lever = tp - tb;
            if lever == 0.0 || (gi[0] == 0.0 && gi[1] == 0.0) {
                continue;
            }
            for k in 0..4 {
                let wk = tap.weight[k] * lever;
                grad.u[tap.index[k]] += gi[0] * wk;
                grad.v[tap.index[k]] += gi[1] * wk;
            }
        }
    }
    (total, grad)
}

/// Polarity helper for tests and diagnostics.
pub fn count_by_polarity(slice: &EventSlice) -> (usize, usize) {
    slice.events().iter().fold((0, 0), |(p, n), e| match e.p {
        Polarity::Positive => (p + 1, n),
        Polarity::Negative => (p, n + 1),
    })
}
