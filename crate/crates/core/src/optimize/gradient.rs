//! Objective evaluation for motion models, the analytic gradient through the
//! warp and projection chain, and a central-difference oracle.

use crate::egomotion::DisparityField;
use crate::error::{Error, Result};
use crate::events::{EventSlice, StereoRig};
use crate::losses::{
    census_stereo_grad, deblurred_count, lr_consistency_grad, smoothness_flow_grad,
    smoothness_loss, smoothness_scalar, smoothness_scalar_grad, time_loss, time_loss_flow_grad,
    LossReport, ObjectiveKind,
};

use super::model::{expand_model, expand_with_jacobian, ModelContext, ModelKind, MotionModel};
use super::OptimizeConfig;

/// Events a model is fitted to: a left slice and, for stereo, a right one.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub left: &'a EventSlice,
    pub right: Option<&'a EventSlice>,
    pub rig: &'a StereoRig,
}

impl<'a> FitData<'a> {
    pub fn mono(left: &'a EventSlice, rig: &'a StereoRig) -> Self {
        Self {
            left,
            right: None,
            rig,
        }
    }

    pub fn stereo(left: &'a EventSlice, right: &'a EventSlice, rig: &'a StereoRig) -> Self {
        Self {
            left,
            right: Some(right),
            rig,
        }
    }

    pub fn left_context(&self, bins: usize) -> ModelContext {
        ModelContext {
            intrinsics: self.rig.left,
            baseline_m: self.rig.baseline_m,
            bins,
        }
    }

    pub fn right_context(&self, bins: usize) -> ModelContext {
        ModelContext {
            intrinsics: self.rig.right,
            ..self.left_context(bins)
        }
    }
}

/// Which loss a model kind is scored with.
///
/// Flow kinds use `time + lambda1 smooth(flow)` on the left slice. Rigid
/// kinds use the structure-from-motion total: temporal terms from every
/// available camera, and for `rigid_planar` the disparity smoothness plus,
/// with a right slice, the census stereo and consistency terms.
pub fn evaluate(model: &MotionModel, data: &FitData, cfg: &OptimizeConfig) -> LossReport {
    let bins = cfg.bins;
    let w = cfg.weights;
    if !model.kind.is_rigid() {
        let flow = expand_model(model, &data.left_context(bins));
        return LossReport::new(
            ObjectiveKind::Flow,
            w,
            &[
                ("time", time_loss(data.left, &flow, bins)),
                ("smooth", smoothness_loss(&flow, cfg.eps)),
            ],
        );
    }
    let lctx = data.left_context(bins);
    let flow_l = expand_model(model, &lctx);
    let mut temporal = time_loss(data.left, &flow_l, bins);
    let mut flow_r = None;
    if let Some(right) = data.right {
        let f = expand_model(model, &data.right_context(bins));
        temporal += time_loss(right, &f, bins);
        flow_r = Some(f);
    }
    let mut terms = vec![("time", temporal)];
    if let Some(rho) = model.inverse_depth() {
        let disp = DisparityField::uniform(lctx.intrinsics.height, lctx.intrinsics.width, lctx.disparity_for(rho));
        let mut smooth = smoothness_scalar(&disp.0, cfg.eps);
        if let (Some(right), Some(flow_r)) = (data.right, flow_r.as_ref()) {
            let count_l = deblurred_count(data.left, &flow_l, bins);
            let count_r = deblurred_count(right, flow_r, bins);
            let (stereo, _, _) =
                census_stereo_grad(&count_l, &count_r, &disp, &disp, cfg.census_window, cfg.eps)
                    .expect("same sensor");
            let (consistency, _, _) = lr_consistency_grad(&disp, &disp, cfg.eps).expect("same sensor");
            smooth += smoothness_scalar(&disp.0, cfg.eps);
            terms.push(("stereo", stereo));
            terms.push(("consistency", consistency));
        }
        terms.push(("smooth", smooth));
    }
    LossReport::new(ObjectiveKind::Sfm, w, &terms)
}

/// Exact gradient of [`evaluate`]'s total with respect to the model
/// parameters. Census signs are treated as constants.
pub fn analytic_gradient(
    model: &MotionModel,
    data: &FitData,
    cfg: &OptimizeConfig,
) -> (LossReport, Vec<f64>) {
    let bins = cfg.bins;
    let w = cfg.weights;
    let n = model.kind.n_params();
    let lctx = data.left_context(bins);
    let (flow_l, jac_l) = expand_with_jacobian(model, &lctx);
    let (t_l, mut g_flow_l) = time_loss_flow_grad(data.left, &flow_l, bins);

    if !model.kind.is_rigid() {
        let (s, gs) = smoothness_flow_grad(&flow_l, cfg.eps);
        for (a, b) in g_flow_l.u.iter_mut().zip(&gs.u) {
            *a += w.lambda1 * b;
        }
        for (a, b) in g_flow_l.v.iter_mut().zip(&gs.v) {
            *a += w.lambda1 * b;
        }
        let grad = jac_l.pull_back(&g_flow_l);
        let report = LossReport::new(ObjectiveKind::Flow, w, &[("time", t_l), ("smooth", s)]);
        return (report, grad);
    }

    let mut grad = jac_l.pull_back(&g_flow_l);
    let mut temporal = t_l;
    let mut flow_r = None;
    if let Some(right) = data.right {
        let (f, jac_r) = expand_with_jacobian(model, &data.right_context(bins));
        let (t_r, g_r) = time_loss_flow_grad(right, &f, bins);
        temporal += t_r;
        for (a, b) in grad.iter_mut().zip(jac_r.pull_back(&g_r)) {
            *a += b;
        }
        flow_r = Some(f);
    }
    let mut terms = vec![("time", temporal)];
    if let Some(rho) = model.inverse_depth() {
        let dd = lctx.disparity_for(1.0);
        let (h, wd) = (lctx.intrinsics.height, lctx.intrinsics.width);
        let disp = DisparityField::uniform(h, wd, lctx.disparity_for(rho));
        let (mut smooth, gs) = smoothness_scalar_grad(&disp.0, cfg.eps);
        let mut g_rho = w.lambda4 * gs.sum();
        if let (Some(right), Some(flow_r)) = (data.right, flow_r.as_ref()) {
            let count_l = deblurred_count(data.left, &flow_l, bins);
            let count_r = deblurred_count(right, flow_r, bins);
            let (stereo, gl, gr) =
                census_stereo_grad(&count_l, &count_r, &disp, &disp, cfg.census_window, cfg.eps)
                    .expect("same sensor");
            let (consistency, cl, cr) = lr_consistency_grad(&disp, &disp, cfg.eps).expect("same sensor");
            let (s2, gs2) = smoothness_scalar_grad(&disp.0, cfg.eps);
            smooth += s2;
            g_rho += w.lambda2 * (gl.sum() + gr.sum())
                + w.lambda3 * (cl.sum() + cr.sum())
                + w.lambda4 * gs2.sum();
            terms.push(("stereo", stereo));
            terms.push(("consistency", consistency));
        }
        terms.push(("smooth", smooth));
        grad[n - 1] += g_rho * dd;
    }
    let mut report = LossReport::new(ObjectiveKind::Sfm, w, &terms);
    report.gradient = Some(grad.clone());
    (report, grad)
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h`.
pub fn numeric_gradient(
    mut objective: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Validation(format!("step must be positive, got {h}")));
    }
    let mut probe = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = objective(&probe);
        if !up.is_finite() {
            return Err(Error::NonFinite {
                coordinate: i,
                value: up,
            });
        }
        probe[i] = params[i] - h;
        let down = objective(&probe);
        if !down.is_finite() {
            return Err(Error::NonFinite {
                coordinate: i,
                value: down,
            });
        }
        probe[i] = params[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference gradient of [`evaluate`]'s total.
pub fn model_numeric_gradient(
    model: &MotionModel,
    data: &FitData,
    cfg: &OptimizeConfig,
    h: f64,
) -> Result<Vec<f64>> {
    numeric_gradient(
        |p| evaluate(&model.with_params(p), data, cfg).total,
        &model.params,
        h,
    )
}

/// `max_k |a_k - b_k| / max(max_k |b_k|, floor)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let scale = numeric
        .iter()
        .map(|x| x.abs())
        .fold(floor, f64::max);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Kinds whose objective has no stereo or disparity part.
pub fn is_flow_kind(kind: ModelKind) -> bool {
    !kind.is_rigid()
}
