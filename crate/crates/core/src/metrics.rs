//! Flow, depth and pose error measures.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::warp::FlowField;

/// Endpoint error above which a pixel counts as an outlier.
pub const OUTLIER_PX: f64 = 3.0;
pub const DEFAULT_DEPTH_THRESHOLDS: [f64; 3] = [10.0, 20.0, 30.0];
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Converts px/bin flow to pixel displacement over `dt` seconds.
pub fn flow_to_displacement(flow: &FlowField, bins: usize, dt: f64, window: (f64, f64)) -> Result<FlowField> {
    let span = window.1 - window.0;
    if !(span > 0.0) {
        return Err(Error::Validation(format!(
            "zero-duration window [{}, {}]",
            window.0, window.1
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    if bins < 2 {
        return Err(Error::Validation("bins must be >= 2".into()));
    }
    Ok(flow.scaled((bins - 1) as f64 * dt / span))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowErrors {
    pub aee: f64,
    pub outlier_fraction: f64,
    pub pixels: usize,
}

/// Average endpoint error and outlier fraction over the masked pixels.
pub fn aee(pred: &FlowField, gt: &FlowField, mask: &[bool]) -> Result<FlowErrors> {
    if pred.height != gt.height || pred.width != gt.width || mask.len() != pred.u.len() {
        return Err(Error::Dimension(format!(
            "flow {}x{} vs ground truth {}x{} with mask of {}",
            pred.width,
            pred.height,
            gt.width,
            gt.height,
            mask.len()
        )));
    }
    let (mut sum, mut outliers, mut n) = (0.0, 0usize, 0usize);
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        let e = (pred.u[i] - gt.u[i]).hypot(pred.v[i] - gt.v[i]);
        sum += e;
        if e > OUTLIER_PX {
            outliers += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("AEE over an empty mask".into()));
    }
    Ok(FlowErrors {
        aee: sum / n as f64,
        outlier_fraction: outliers as f64 / n as f64,
        pixels: n,
    })
}

/// Mean absolute depth error per threshold; `None` where no pixel qualifies.
pub fn depth_error(pred: &Grid, gt: &Grid, event_mask: &[bool], thresholds: &[f64]) -> Result<Vec<Option<f64>>> {
    if !pred.same_shape(gt) || event_mask.len() != pred.data.len() {
        return Err(Error::Dimension("depth maps and mask differ in size".into()));
    }
    Ok(thresholds
        .iter()
        .map(|&d| {
            let (sum, n) = pred
                .data
                .iter()
                .zip(&gt.data)
                .zip(event_mask)
                .filter(|((_, g), m)| **m && **g <= d)
                .fold((0.0, 0usize), |(s, n), ((p, g), _)| (s + (p - g).abs(), n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect())
}

/// Angle between translation directions, radians.
pub fn rpe(t_pred: &Vector3<f64>, t_gt: &Vector3<f64>) -> Result<f64> {
    let (a, b) = (t_pred.norm(), t_gt.norm());
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::UndefinedMetric("RPE of a zero translation".into()));
    }
    Ok((t_pred.dot(t_gt) / (a * b)).clamp(-1.0, 1.0).acos())
}

fn check_rotation(r: &Matrix3<f64>, name: &str) -> Result<()> {
    let dev = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !(dev <= ORTHONORMAL_TOL) || !((r.determinant() - 1.0).abs() <= ORTHONORMAL_TOL * 10.0) {
        return Err(Error::Validation(format!(
            "{name} is not a rotation (orthonormality error {dev:e})"
        )));
    }
    Ok(())
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation vector of a rotation matrix (axis times angle in [0, π]).
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let vee = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-4 {
        // θ/(2 sin θ) ≈ 1/2 + θ²/12
        return vee * (0.5 + theta * theta / 12.0);
    }
    if std::f64::consts::PI - theta < 1e-4 {
        // near π the skew part vanishes; recover the axis from R + I = 2aaᵀ (+ O(π−θ))
        let b = (r + Matrix3::identity()) / 2.0;
        let k = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).unwrap();
        let mut axis = b.column(k).into_owned() / b[(k, k)].max(f64::MIN_POSITIVE).sqrt();
        axis.normalize_mut();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / (2.0 * theta.sin()))
}

/// Frobenius norm of logm(R_predᵀ R_gt).
pub fn rre(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> Result<f64> {
    check_rotation(r_pred, "predicted rotation")?;
    check_rotation(r_gt, "ground-truth rotation")?;
    let w = log_so3(&(r_pred.transpose() * r_gt));
    Ok(skew(&w).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    /// `None` when either translation is zero.
    pub rpe_rad: Option<f64>,
    pub rpe_deg: Option<f64>,
    pub rre_rad: f64,
    pub angle_err_deg: [f64; 3],
}

pub fn pose_errors(pred: &crate::egomotion::Pose, gt: &crate::egomotion::Pose) -> Result<PoseErrors> {
    let rpe_rad = rpe(&pred.translation(), &gt.translation()).ok();
    Ok(PoseErrors {
        rpe_rad,
        rpe_deg: rpe_rad.map(f64::to_degrees),
        rre_rad: rre(&pred.rotation(), &gt.rotation())?,
        angle_err_deg: [
            (pred.psi - gt.psi).to_degrees().abs(),
            (pred.beta - gt.beta).to_degrees().abs(),
            (pred.phi - gt.phi).to_degrees().abs(),
        ],
    })
}
