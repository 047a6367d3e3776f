//! Rigid camera motion: Euler angles, disparity/depth conversion and the
//! per-pixel flow induced by a pose and a disparity map.
//!
//! Conventions:
//! * `R = Rz(phi) * Ry(beta) * Rx(psi)` (ZYX).
//! * A point `P` in the first camera frame maps to `R * P + T` in the second.
//! * Depth uses the horizontal focal length: `Z = fx * b / d`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::CameraIntrinsics;
use crate::grid::Grid;
use crate::warp::FlowField;

/// Smallest disparity used in `f b / d`, in pixels.
pub const D_MIN: f64 = 0.1;
/// Reprojected depths at or below this are treated as behind the camera.
pub const Z_MIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub psi: f64,
    pub beta: f64,
    pub phi: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Pose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_parts(angles: [f64; 3], t: [f64; 3]) -> Self {
        Self {
            psi: angles[0],
            beta: angles[1],
            phi: angles[2],
            tx: t[0],
            ty: t[1],
            tz: t[2],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.psi, self.beta, self.phi, self.tx, self.ty, self.tz]
    }

    pub fn from_array(p: &[f64]) -> Self {
        Self::from_parts([p[0], p[1], p[2]], [p[3], p[4], p[5]])
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        euler_to_rotation(self.psi, self.beta, self.phi)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    /// Pose with angles and translation scaled by `tau` (linear interpolation
    /// from the identity).
    pub fn interpolate(&self, tau: f64) -> Self {
        Self::from_array(&self.to_array().map(|v| v * tau))
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn drot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

pub fn euler_to_rotation(psi: f64, beta: f64, phi: f64) -> Matrix3<f64> {
    rot_z(phi) * rot_y(beta) * rot_x(psi)
}

/// Partial derivatives of [`euler_to_rotation`] with respect to
/// `(psi, beta, phi)`.
pub fn euler_rotation_derivatives(psi: f64, beta: f64, phi: f64) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(psi), rot_y(beta), rot_z(phi));
    [
        rz * ry * drot_x(psi),
        rz * drot_y(beta) * rx,
        drot_z(phi) * ry * rx,
    ]
}

/// Inverse of [`euler_to_rotation`]; `beta` is returned in `[-pi/2, pi/2]`.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let beta = (-r[(2, 0)]).atan2((r[(2, 1)].powi(2) + r[(2, 2)].powi(2)).sqrt());
    let psi = r[(2, 1)].atan2(r[(2, 2)]);
    let phi = r[(1, 0)].atan2(r[(0, 0)]);
    (psi, beta, phi)
}

/// Per-pixel disparity in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityField(pub Grid);

impl DisparityField {
    pub fn uniform(height: usize, width: usize, d: f64) -> Self {
        Self(Grid::filled(height, width, d))
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.0.width as f64;
        if let Some(bad) = self.0.data.iter().find(|d| !(**d >= 0.0 && **d <= w)) {
            return Err(Error::Validation(format!(
                "disparity {bad} outside [0, {w}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Depth {
    pub z: f64,
    /// The disparity was at or below [`D_MIN`] and was clamped.
    pub clamped: bool,
}

pub fn disparity_to_depth(d: f64, focal: f64, baseline: f64) -> Depth {
    if d > D_MIN {
        Depth {
            z: focal * baseline / d,
            clamped: false,
        }
    } else {
        Depth {
            z: focal * baseline / D_MIN,
            clamped: true,
        }
    }
}

/// Flow induced by a rigid motion, with per-pixel guard flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidFlow {
    pub flow: FlowField,
    /// Pixels whose reprojected depth fell to [`Z_MIN`] or below; flow is 0.
    pub invalid: Vec<bool>,
    /// Pixels whose disparity was clamped to [`D_MIN`].
    pub clamped: usize,
}

/// Derivatives of one pixel's `(u, v)` with respect to
/// `(psi, beta, phi, tx, ty, tz, d)`, where `d` is that pixel's disparity.
pub type PixelFlowJacobian = [[f64; 7]; 2];

/// Projects pixel `(x, y)` at depth `z` through the pose; `None` when the
/// point ends up at or behind [`Z_MIN`].
pub fn reproject(pose: &Pose, k: &CameraIntrinsics, x: f64, y: f64, z: f64) -> Option<(f64, f64)> {
    let ray = Vector3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
    let q = pose.rotation() * (ray * z) + pose.translation();
    if q.z <= Z_MIN {
        return None;
    }
    Some((k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy))
}

pub fn pose_disparity_to_flow(
    pose: &Pose,
    disp: &DisparityField,
    k: &CameraIntrinsics,
    baseline: f64,
    bins: usize,
) -> RigidFlow {
    rigid_flow_impl(pose, disp, k, baseline, bins, None)
}

/// [`pose_disparity_to_flow`] plus its per-pixel Jacobian.
pub fn pose_disparity_flow_jacobian(
    pose: &Pose,
    disp: &DisparityField,
    k: &CameraIntrinsics,
    baseline: f64,
    bins: usize,
) -> (RigidFlow, Vec<PixelFlowJacobian>) {
    let mut jac = vec![[[0.0; 7]; 2]; disp.height() * disp.width()];
    let rf = rigid_flow_impl(pose, disp, k, baseline, bins, Some(&mut jac));
    (rf, jac)
}

fn rigid_flow_impl(
    pose: &Pose,
    disp: &DisparityField,
    k: &CameraIntrinsics,
    baseline: f64,
    bins: usize,
    mut jac: Option<&mut Vec<PixelFlowJacobian>>,
) -> RigidFlow {
    assert!(bins >= 2, "flow in pixels/bin needs at least two bins");
    let (h, w) = (disp.height(), disp.width());
    let inv_span = 1.0 / (bins - 1) as f64;
    let r = pose.rotation();
    let dr = euler_rotation_derivatives(pose.psi, pose.beta, pose.phi);
    let t = pose.translation();
    let fb = k.fx * baseline;

    let mut flow = FlowField::zeros(h, w);
    let mut invalid = vec![false; h * w];
    let mut clamped = 0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = disp.0.data[i];
            let depth = disparity_to_depth(d, k.fx, baseline);
            if depth.clamped {
                clamped += 1;
            }
            let ray = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
            let rray = r * ray;
            let q = rray * depth.z + t;
            if q.z <= Z_MIN {
                invalid[i] = true;
                continue;
            }
            let xs = k.fx * q.x / q.z + k.cx;
            let ys = k.fy * q.y / q.z + k.cy;
            flow.u[i] = (xs - x as f64) * inv_span;
            flow.v[i] = (ys - y as f64) * inv_span;

            if let Some(jac) = jac.as_deref_mut() {
                // d(xs, ys)/dq
                let proj = |dq: Vector3<f64>| -> [f64; 2] {
                    [
                        k.fx * (dq.x / q.z - q.x * dq.z / (q.z * q.z)) * inv_span,
                        k.fy * (dq.y / q.z - q.y * dq.z / (q.z * q.z)) * inv_span,
                    ]
                };
                let mut cols = [[0.0; 2]; 7];
                for a in 0..3 {
                    cols[a] = proj(dr[a] * ray * depth.z);
                }
                cols[3] = proj(Vector3::x());
                cols[4] = proj(Vector3::y());
                cols[5] = proj(Vector3::z());
                if !depth.clamped {
                    cols[6] = proj(rray * (-fb / (d * d)));
                }
                for (p, c) in cols.iter().enumerate() {
                    jac[i][0][p] = c[0];
                    jac[i][1][p] = c[1];
                }
            }
        }
    }
    RigidFlow {
        flow,
        invalid,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn k64() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 31.5, 31.5, 64, 64).unwrap()
    }

    #[test]
    fn identity_and_axis_case() {
        assert!((euler_to_rotation(0.0, 0.0, 0.0) - Matrix3::identity()).norm() < 1e-15);
        let r = euler_to_rotation(0.0, FRAC_PI_2, 0.0);
        assert!((r * Vector3::z() - Vector3::x()).norm() < 1e-15);
    }

    #[test]
    fn euler_roundtrip() {
        for &(a, b, c) in &[(0.1, -0.2, 0.3), (-1.2, 0.7, 2.9), (0.0, 1.4, -3.0)] {
            let (a2, b2, c2) = rotation_to_euler(&euler_to_rotation(a, b, c));
            assert!((a - a2).abs() < 1e-9 && (b - b2).abs() < 1e-9 && (c - c2).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_derivatives_match_differences() {
        let (a, b, c) = (0.3, -0.4, 1.1);
        let d = euler_rotation_derivatives(a, b, c);
        let h = 1e-6;
        let num = [
            (euler_to_rotation(a + h, b, c) - euler_to_rotation(a - h, b, c)) / (2.0 * h),
            (euler_to_rotation(a, b + h, c) - euler_to_rotation(a, b - h, c)) / (2.0 * h),
            (euler_to_rotation(a, b, c + h) - euler_to_rotation(a, b, c - h)) / (2.0 * h),
        ];
        for i in 0..3 {
            assert!((d[i] - num[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn depth_examples() {
        assert_eq!(disparity_to_depth(2.0, 1.0, 1.0).z, 0.5);
        assert_eq!(disparity_to_depth(10.0, 200.0, 0.1).z, 2.0);
        let g = disparity_to_depth(0.0, 200.0, 0.1);
        assert!(g.clamped);
        assert!((g.z - 200.0 * 0.1 / D_MIN).abs() < 1e-12);
    }

    #[test]
    fn identity_pose_gives_zero_flow() {
        let disp = DisparityField(Grid::from_fn(64, 64, |x, y| 1.0 + (x + y) as f64 * 0.1));
        let rf = pose_disparity_to_flow(&Pose::identity(), &disp, &k64(), 0.1, 9);
        assert!(rf.flow.u.iter().chain(&rf.flow.v).all(|&x| x.abs() < 1e-12));
        assert!(rf.invalid.iter().all(|&b| !b));
    }

    #[test]
    fn lateral_translation_closed_form() {
        let k = k64();
        let (b, d, tx, bins) = (0.1, 4.0, 0.3, 9);
        let disp = DisparityField::uniform(64, 64, d);
        let pose = Pose::from_parts([0.0; 3], [tx, 0.0, 0.0]);
        let rf = pose_disparity_to_flow(&pose, &disp, &k, b, bins);
        let z = k.fx * b / d;
        let expect = k.fx * tx / z / (bins - 1) as f64;
        for i in 0..rf.flow.u.len() {
            assert!((rf.flow.u[i] - expect).abs() < 1e-12);
            assert!(rf.flow.v[i].abs() < 1e-12);
        }
    }

    #[test]
    fn behind_camera_guard() {
        let disp = DisparityField::uniform(4, 4, 4.0);
        let k = CameraIntrinsics::centered(200.0, 4, 4).unwrap();
        let pose = Pose::from_parts([0.0; 3], [0.0, 0.0, -10.0]);
        let rf = pose_disparity_to_flow(&pose, &disp, &k, 0.1, 9);
        assert!(rf.invalid.iter().all(|&b| b));
        assert!(rf.flow.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let k = CameraIntrinsics::new(180.0, 170.0, 14.0, 9.0, 30, 20).unwrap();
        let pose = Pose::from_parts([0.02, -0.03, 0.05], [0.1, -0.05, 0.2]);
        let disp = DisparityField(Grid::from_fn(20, 30, |x, y| 2.0 + 0.05 * x as f64 + 0.03 * y as f64));
        let (rf, jac) = pose_disparity_flow_jacobian(&pose, &disp, &k, 0.1, 9);
        let h = 1e-6;
        for p in 0..6 {
            let mut a = pose.to_array();
            let mut b = pose.to_array();
            a[p] += h;
            b[p] -= h;
            let fa = pose_disparity_to_flow(&Pose::from_array(&a), &disp, &k, 0.1, 9).flow;
            let fb = pose_disparity_to_flow(&Pose::from_array(&b), &disp, &k, 0.1, 9).flow;
            for i in (0..600).step_by(37) {
                let nu = (fa.u[i] - fb.u[i]) / (2.0 * h);
                let nv = (fa.v[i] - fb.v[i]) / (2.0 * h);
                assert!((jac[i][0][p] - nu).abs() < 1e-5, "p{p} i{i}");
                assert!((jac[i][1][p] - nv).abs() < 1e-5, "p{p} i{i}");
            }
        }
        let i = 7 * 30 + 11;
        let mut up = disp.clone();
        let mut dn = disp.clone();
        up.0.data[i] += h;
        dn.0.data[i] -= h;
        let fa = pose_disparity_to_flow(&pose, &up, &k, 0.1, 9).flow;
        let fb = pose_disparity_to_flow(&pose, &dn, &k, 0.1, 9).flow;
        assert!((jac[i][0][6] - (fa.u[i] - fb.u[i]) / (2.0 * h)).abs() < 1e-6);
        assert!((jac[i][1][6] - (fa.v[i] - fb.v[i]) / (2.0 * h)).abs() < 1e-6);
        assert_eq!(rf.flow.u[i], pose_disparity_to_flow(&pose, &disp, &k, 0.1, 9).flow.u[i]);
    }
}
