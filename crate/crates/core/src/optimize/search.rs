//! Grid search used to seed gradient fits.
//!
//! The temporal loss is piecewise smooth with jumps wherever a warped event
//! enters or leaves a pixel, so its gradient only sees local structure. The
//! search runs coarse to fine in both parameter and image space: the first
//! grid can be scored on events and intrinsics shrunk by a coarse scale, where
//! basins are proportionally wider, and every refinement halves the spatial
//! scale while narrowing the grid around the best few candidates.

use serde::{Deserialize, Serialize};

use super::{evaluate, FitData, ModelKind, MotionModel, OptimizeConfig};
use crate::events::{CameraIntrinsics, Event, EventSlice, StereoRig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Half-width of the first grid for flow parameters, px/bin.
    pub flow_radius: f64,
    pub flow_step: f64,
    /// Half-width of the first grid for rotation angles, radians.
    pub angle_radius: f64,
    pub angle_step: f64,
    /// Each refinement re-centers on a candidate with radius = previous
    /// step and step = previous step / `refine_factor`.
    pub refinements: usize,
    pub refine_factor: f64,
    /// Spatial downscale of the first grid, halved per refinement down to 1.
    /// Flow grids degrade under noise when shrunk, so they default to 1.
    pub flow_coarse_scale: usize,
    pub angle_coarse_scale: usize,
    /// Candidates carried from one grid to the next.
    pub beam: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            flow_radius: 5.0,
            flow_step: 0.25,
            angle_radius: 4f64.to_radians(),
            angle_step: 0.5f64.to_radians(),
            refinements: 4,
            refine_factor: 2.0,
            flow_coarse_scale: 1,
            angle_coarse_scale: 4,
            beam: 4,
        }
    }
}

/// Parameters searched for each kind, with their (radius, step).
fn searched(kind: ModelKind, sc: &SearchConfig) -> Vec<(usize, f64, f64)> {
    let flow = |k| (k, sc.flow_radius, sc.flow_step);
    let angle = |k| (k, sc.angle_radius, sc.angle_step);
    match kind {
        ModelKind::ConstantFlow => vec![flow(0), flow(1)],
        ModelKind::AffineFlow => vec![flow(4), flow(5)],
        ModelKind::RotationOnly | ModelKind::RigidPlanar => vec![angle(0), angle(1), angle(2)],
    }
}

fn offsets(radius: f64, step: f64) -> Vec<f64> {
    let n = (radius / step).round() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

pub(crate) fn scaled_intrinsics(k: &CameraIntrinsics, s: f64) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: k.fx / s,
        fy: k.fy / s,
        cx: k.cx / s,
        cy: k.cy / s,
        width: (k.width as f64 / s).ceil() as usize,
        height: (k.height as f64 / s).ceil() as usize,
    }
}

pub(crate) fn scaled_slice(slice: &EventSlice, s: f64) -> EventSlice {
    EventSlice::new(
        slice
            .events()
            .iter()
            .map(|e| Event::new((e.x as f64 / s) as f32, (e.y as f64 / s) as f32, e.t, e.p))
            .collect(),
    )
}

/// `params` expressed at spatial scale `1/s`. Rigid parameters are
/// scale-free because the intrinsics carry the scale.
pub(crate) fn params_at_scale(kind: ModelKind, params: &[f64], s: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    match kind {
        ModelKind::ConstantFlow => p.iter_mut().for_each(|v| *v /= s),
        ModelKind::AffineFlow => p[4..].iter_mut().for_each(|v| *v /= s),
        ModelKind::RotationOnly | ModelKind::RigidPlanar => {}
    }
    p
}

/// Owned copy of the fit data at spatial scale `1/s`.
struct ScaledData {
    left: EventSlice,
    right: Option<EventSlice>,
    rig: StereoRig,
}

impl ScaledData {
    fn new(data: &FitData, s: f64) -> Self {
        Self {
            left: scaled_slice(data.left, s),
            right: data.right.map(|r| scaled_slice(r, s)),
            rig: StereoRig {
                left: scaled_intrinsics(&data.rig.left, s),
                right: scaled_intrinsics(&data.rig.right, s),
                baseline_m: data.rig.baseline_m,
            },
        }
    }

    fn view(&self) -> FitData<'_> {
        FitData {
            left: &self.left,
            right: self.right.as_ref(),
            rig: &self.rig,
        }
    }
}

/// Best grid point around `init` under [`evaluate`]'s total. Parameters
/// held by `cfg.free` are not searched. Ties keep the earlier candidate.
pub fn grid_search(init: &MotionModel, data: &FitData, cfg: &OptimizeConfig, sc: &SearchConfig) -> MotionModel {
    let dims: Vec<(usize, f64, f64)> = searched(init.kind, sc)
        .into_iter()
        .filter(|(k, _, _)| cfg.free.as_ref().is_none_or(|m| m[*k]))
        .collect();
    if dims.is_empty() {
        return init.clone();
    }
    let side = data.rig.left.width.min(data.rig.left.height) as f64;
    let mut scale = match init.kind {
        ModelKind::ConstantFlow | ModelKind::AffineFlow => sc.flow_coarse_scale,
        ModelKind::RotationOnly | ModelKind::RigidPlanar => sc.angle_coarse_scale,
    }
    .max(1);
    // keep at least a few pixels per side at the coarsest level
    while scale > 1 && side / (scale as f64) < 8.0 {
        scale /= 2;
    }

    let mut beam: Vec<Vec<f64>> = vec![init.params.clone()];
    let mut step_mul = 1.0;
    for level in 0..=sc.refinements {
        let s = scale as f64;
        let scaled = (scale > 1).then(|| ScaledData::new(data, s));
        let view = scaled.as_ref().map_or(*data, ScaledData::view);
        let score = |p: &[f64]| {
            let local = params_at_scale(init.kind, p, s);
            evaluate(&init.with_params(&local), &view, cfg).total
        };
        let axes: Vec<Vec<f64>> = dims
            .iter()
            .map(|&(_, r, st)| {
                if level == 0 {
                    offsets(r, st)
                } else {
                    offsets(st * step_mul * sc.refine_factor, st * step_mul)
                }
            })
            .collect();
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        for center in &beam {
            let mut idx = vec![0usize; axes.len()];
            'grid: loop {
                let mut p = center.clone();
                for (d, &(k, _, _)) in dims.iter().enumerate() {
                    p[k] += axes[d][idx[d]];
                }
                scored.push((score(&p), p));
                for d in 0..idx.len() {
                    idx[d] += 1;
                    if idx[d] < axes[d].len() {
                        continue 'grid;
                    }
                    idx[d] = 0;
                }
                break;
            }
        }
        // stable sort keeps enumeration order among ties
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored.dedup_by(|a, b| a.1 == b.1);
        let keep = if level == sc.refinements { 1 } else { sc.beam.max(1) };
        beam = scored.into_iter().take(keep).map(|(_, p)| p).collect();
        step_mul /= sc.refine_factor;
        scale = (scale / 2).max(1);
    }
    let best = init.with_params(&beam[0]);
    // never return something worse than the starting point
    if evaluate(&best, data, cfg).total <= evaluate(init, data, cfg).total {
        best
    } else {
        init.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_symmetric() {
        assert_eq!(offsets(1.0, 0.5), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(offsets(0.1, 0.25), vec![0.0]);
    }

    #[test]
    fn scale_round_trip() {
        let p = params_at_scale(ModelKind::AffineFlow, &[1.0, 2.0, 3.0, 4.0, 8.0, -4.0], 4.0);
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 2.0, -1.0]);
        assert_eq!(params_at_scale(ModelKind::AffineFlow, &p, 0.25)[4..], [8.0, -4.0]);
        assert_eq!(params_at_scale(ModelKind::RotationOnly, &[0.1, 0.2, 0.3], 4.0), vec![0.1, 0.2, 0.3]);
    }
}
