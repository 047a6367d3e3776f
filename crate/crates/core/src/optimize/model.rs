use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::egomotion::{pose_disparity_flow_jacobian, DisparityField, Pose};
use crate::error::{Error, Result};
use crate::events::CameraIntrinsics;
use crate::warp::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `(u, v)` shared by every pixel.
    ConstantFlow,
    /// `(u, v) = A (x - cx, y - cy) + t`; params `[a11, a12, a21, a22, tu, tv]`.
    AffineFlow,
    /// Euler angles `[psi, beta, phi]` with zero translation.
    RotationOnly,
    /// Pose `[psi, beta, phi, tx, ty, tz]` plus inverse depth (1/m) of a
    /// fronto-parallel scene plane.
    RigidPlanar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::ConstantFlow,
        ModelKind::AffineFlow,
        ModelKind::RotationOnly,
        ModelKind::RigidPlanar,
    ];

    pub fn n_params(self) -> usize {
        match self {
            ModelKind::ConstantFlow => 2,
            ModelKind::AffineFlow => 6,
            ModelKind::RotationOnly => 3,
            ModelKind::RigidPlanar => 7,
        }
    }

    pub fn is_rigid(self) -> bool {
        matches!(self, ModelKind::RotationOnly | ModelKind::RigidPlanar)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::ConstantFlow => "constant_flow",
            ModelKind::AffineFlow => "affine_flow",
            ModelKind::RotationOnly => "rotation_only",
            ModelKind::RigidPlanar => "rigid_planar",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "constant_flow" | "constant" => Ok(ModelKind::ConstantFlow),
            "affine_flow" | "affine" => Ok(ModelKind::AffineFlow),
            "rotation_only" | "rotation" => Ok(ModelKind::RotationOnly),
            "rigid_planar" | "rigid" => Ok(ModelKind::RigidPlanar),
            other => Err(Error::Validation(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub kind: ModelKind,
    pub params: Vec<f64>,
}

impl MotionModel {
    pub fn new(kind: ModelKind, params: Vec<f64>) -> Result<Self> {
        let m = Self { kind, params };
        m.validate()?;
        Ok(m)
    }

    pub fn zeros(kind: ModelKind) -> Self {
        Self {
            kind,
            params: vec![0.0; kind.n_params()],
        }
    }

    pub fn constant(u: f64, v: f64) -> Self {
        Self {
            kind: ModelKind::ConstantFlow,
            params: vec![u, v],
        }
    }

    pub fn affine(a: [f64; 4], t: [f64; 2]) -> Self {
        Self {
            kind: ModelKind::AffineFlow,
            params: vec![a[0], a[1], a[2], a[3], t[0], t[1]],
        }
    }

    pub fn rotation(psi: f64, beta: f64, phi: f64) -> Self {
        Self {
            kind: ModelKind::RotationOnly,
            params: vec![psi, beta, phi],
        }
    }

    pub fn rigid(pose: Pose, inverse_depth: f64) -> Self {
        let mut params = pose.to_array().to_vec();
        params.push(inverse_depth);
        Self {
            kind: ModelKind::RigidPlanar,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.kind.n_params() {
            return Err(Error::Validation(format!(
                "{} takes {} parameters, got {}",
                self.kind,
                self.kind.n_params(),
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        Self {
            kind: self.kind,
            params: params.to_vec(),
        }
    }

    /// Camera pose for the rigid kinds.
    pub fn pose(&self) -> Option<Pose> {
        match self.kind {
            ModelKind::RotationOnly => Some(Pose::from_parts(
                [self.params[0], self.params[1], self.params[2]],
                [0.0; 3],
            )),
            ModelKind::RigidPlanar => Some(Pose::from_array(&self.params[..6])),
            _ => None,
        }
    }

    pub fn inverse_depth(&self) -> Option<f64> {
        (self.kind == ModelKind::RigidPlanar).then(|| self.params[6])
    }
}

/// Geometry a model is expanded against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelContext {
    pub intrinsics: CameraIntrinsics,
    pub baseline_m: f64,
    pub bins: usize,
}

impl ModelContext {
    /// Disparity corresponding to an inverse depth on this camera.
    pub fn disparity_for(&self, inverse_depth: f64) -> f64 {
        self.intrinsics.fx * self.baseline_m * inverse_depth
    }

    fn dims(&self) -> (usize, usize) {
        (self.intrinsics.height, self.intrinsics.width)
    }
}

/// Derivatives of every pixel's flow with respect to the model parameters,
/// stored pixel-major (`du[i * n_params + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowJacobian {
    pub n_params: usize,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl FlowJacobian {
    /// Pulls a gradient over the dense flow back onto the parameters.
    pub fn pull_back(&self, grad: &FlowField) -> Vec<f64> {
        let n = self.n_params;
        let mut out = vec![0.0; n];
        for i in 0..grad.u.len() {
            let (gu, gv) = (grad.u[i], grad.v[i]);
            if gu == 0.0 && gv == 0.0 {
                continue;
            }
            for k in 0..n {
                out[k] += gu * self.du[i * n + k] + gv * self.dv[i * n + k];
            }
        }
        out
    }
}

pub fn expand_model(model: &MotionModel, ctx: &ModelContext) -> FlowField {
    expand_impl(model, ctx, false).0
}

pub fn expand_with_jacobian(model: &MotionModel, ctx: &ModelContext) -> (FlowField, FlowJacobian) {
    let (f, j) = expand_impl(model, ctx, true);
    (f, j.expect("jacobian requested"))
}

/// Depth assumed by the rotation-only model; its flow does not depend on it.
const ROTATION_ONLY_DEPTH_M: f64 = 1.0;

fn expand_impl(
    model: &MotionModel,
    ctx: &ModelContext,
    want_jac: bool,
) -> (FlowField, Option<FlowJacobian>) {
    let (h, w) = ctx.dims();
    let n = model.kind.n_params();
    let p = &model.params;
    let k = &ctx.intrinsics;
    match model.kind {
        ModelKind::ConstantFlow => {
            let flow = FlowField::constant(h, w, p[0], p[1]);
            let jac = want_jac.then(|| {
                let mut du = vec![0.0; h * w * n];
                let mut dv = vec![0.0; h * w * n];
                for i in 0..h * w {
                    du[i * n] = 1.0;
                    dv[i * n + 1] = 1.0;
                }
                FlowJacobian { n_params: n, du, dv }
            });
            (flow, jac)
        }
        ModelKind::AffineFlow => {
            let flow = FlowField::from_fn(h, w, |x, y| {
                let (dx, dy) = (x as f64 - k.cx, y as f64 - k.cy);
                (p[0] * dx + p[1] * dy + p[4], p[2] * dx + p[3] * dy + p[5])
            });
            let jac = want_jac.then(|| {
                let mut du = vec![0.0; h * w * n];
                let mut dv = vec![0.0; h * w * n];
                for y in 0..h {
                    for x in 0..w {
                        let i = (y * w + x) * n;
                        let (dx, dy) = (x as f64 - k.cx, y as f64 - k.cy);
                        du[i] = dx;
                        du[i + 1] = dy;
                        du[i + 4] = 1.0;
                        dv[i + 2] = dx;
                        dv[i + 3] = dy;
                        dv[i + 5] = 1.0;
                    }
                }
                FlowJacobian { n_params: n, du, dv }
            });
            (flow, jac)
        }
        ModelKind::RotationOnly | ModelKind::RigidPlanar => {
            let pose = model.pose().expect("rigid kind");
            let (disp, dd_dparam) = match model.kind {
                ModelKind::RigidPlanar => (ctx.disparity_for(p[6]), ctx.disparity_for(1.0)),
                _ => (ctx.disparity_for(1.0 / ROTATION_ONLY_DEPTH_M), 0.0),
            };
            let disp = DisparityField::uniform(h, w, disp);
            let (rf, pj) = pose_disparity_flow_jacobian(&pose, &disp, k, ctx.baseline_m, ctx.bins);
            let jac = want_jac.then(|| {
                let mut du = vec![0.0; h * w * n];
                let mut dv = vec![0.0; h * w * n];
                for (i, j) in pj.iter().enumerate() {
                    if rf.invalid[i] {
                        continue;
                    }
                    let base = i * n;
                    let cols: &[usize] = if n == 3 { &[0, 1, 2] } else { &[0, 1, 2, 3, 4, 5] };
                    for (kk, &c) in cols.iter().enumerate() {
                        du[base + kk] = j[0][c];
                        dv[base + kk] = j[1][c];
                    }
                    if n == 7 {
                        du[base + 6] = j[0][6] * dd_dparam;
                        dv[base + 6] = j[1][6] * dd_dparam;
                    }
                }
                FlowJacobian { n_params: n, du, dv }
            });
            (rf.flow, jac)
        }
    }
}
