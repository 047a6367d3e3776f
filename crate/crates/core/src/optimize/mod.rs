//! Direct fitting of parametric motion models to event slices.
//!
//! The optimizer is momentum-free gradient descent with per-parameter RMS
//! scaling and an Armijo backtracking line search, so every accepted step
//! lowers the objective.

mod gradient;
mod model;
mod search;

use serde::{Deserialize, Serialize};

pub use gradient::{
    analytic_gradient, evaluate, is_flow_kind, model_numeric_gradient, numeric_gradient,
    relative_error, FitData,
};
pub use search::{grid_search, SearchConfig};
pub use model::{
    expand_model, expand_with_jacobian, FlowJacobian, ModelContext, ModelKind, MotionModel,
};

use crate::egomotion::{DisparityField, Pose};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::losses::{
    census_stereo_grad, census_stereo_loss, deblurred_count, lr_consistency_grad,
    smoothness_scalar_grad, LossReport, LossWeights, DEFAULT_CENSUS_WINDOW, DEFAULT_EPS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Stop once an accepted step lowers the loss by less than this fraction.
    pub tolerance: f64,
    /// First trial step, in units of RMS-normalized gradient.
    pub initial_step: f64,
    pub max_step: f64,
    /// Line-search halvings before declaring a stall.
    pub max_backtracks: usize,
    pub bins: usize,
    pub weights: LossWeights,
    pub eps: f64,
    pub census_window: usize,
    /// Seeds the restart perturbations; unused when `restarts == 0`.
    pub seed: u64,
    /// Extra fits started from seeded perturbations of the initial model;
    /// the lowest final loss wins.
    pub restarts: usize,
    pub restart_scale: f64,
    /// Per-parameter mask; `false` holds a parameter at its initial value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free: Option<Vec<bool>>,
    /// Grid search seeding the gradient fit; `None` starts from the given model.
    #[serde(default)]
    pub search: Option<SearchConfig>,
}


impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-7,
            initial_step: 0.05,
            max_step: 1.0,
            max_backtracks: 40,
            bins: 9,
            weights: LossWeights::default(),
            eps: DEFAULT_EPS,
            census_window: DEFAULT_CENSUS_WINDOW,
            seed: 0,
            restarts: 0,
            restart_scale: 0.5,
            free: None,
            search: Some(SearchConfig::default()),
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Validation("max_iters must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation("tolerance must be > 0".into()));
        }
        if !(self.initial_step > 0.0) || !(self.max_step >= self.initial_step) {
            return Err(Error::Validation("step sizes must satisfy 0 < initial <= max".into()));
        }
        if self.bins < 2 {
            return Err(Error::Validation("bins must be >= 2".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Validation("eps must be > 0".into()));
        }
        if self.census_window < 3 || self.census_window % 2 == 0 {
            return Err(Error::Validation("census window must be odd and >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Tolerance,
    /// No step along the descent direction lowered the loss.
    Stalled,
    ZeroGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub params: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

const ARMIJO_C: f64 = 1e-4;
const RMS_DECAY: f64 = 0.9;

/// Minimizes `objective` (value and gradient) from `init`.
///
/// The returned trace starts with the initial loss and holds one entry per
/// accepted step; it is non-increasing.
pub fn minimize(
    mut objective: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    mut value: impl FnMut(&[f64]) -> f64,
    init: &[f64],
    cfg: &OptimizeConfig,
) -> Result<Minimum> {
    cfg.validate()?;
    let n = init.len();
    let free = match &cfg.free {
        Some(mask) if mask.len() != n => {
            return Err(Error::Validation(format!(
                "free mask has {} entries for {n} parameters",
                mask.len()
            )))
        }
        Some(mask) => mask.clone(),
        None => vec![true; n],
    };
    let mut p = init.to_vec();
    let (mut f, mut g) = objective(&p);
    if !f.is_finite() {
        return Err(Error::Diverged(format!("initial loss is {f}")));
    }
    let mut trace = vec![f];
    let mut rms: Option<Vec<f64>> = None;
    let mut step = cfg.initial_step;
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let acc = match rms.as_mut() {
            None => rms.insert(g.iter().map(|x| x * x).collect()),
            Some(v) => {
                for (vi, gi) in v.iter_mut().zip(&g) {
                    *vi = RMS_DECAY * *vi + (1.0 - RMS_DECAY) * gi * gi;
                }
                v
            }
        };
        let dir: Vec<f64> = (0..n)
            .map(|k| {
                if free[k] && acc[k] > 0.0 {
                    -g[k] / acc[k].sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 || dir.iter().all(|&d| d == 0.0) {
            stop = StopReason::ZeroGradient;
            break;
        }

        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<f64> = p.iter().zip(&dir).map(|(pi, d)| pi + alpha * d).collect();
            let ft = value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C * alpha * slope && ft < f {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        let rel = (f - ft) / f.abs().max(f64::MIN_POSITIVE);
        p = trial;
        f = ft;
        g = objective(&p).1;
        trace.push(f);
        step = (alpha * 2.0).min(cfg.max_step);
        if rel < cfg.tolerance {
            stop = StopReason::Tolerance;
            break;
        }
    }
    Ok(Minimum {
        params: p,
        trace,
        iterations,
        stop,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MotionModel,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    pub report: LossReport,
}

/// Fits `init` to the data by minimizing [`evaluate`]'s total: an optional
/// grid search picks the starting point, then [`minimize`] refines it.
pub fn fit(init: &MotionModel, data: &FitData, cfg: &OptimizeConfig) -> Result<FitResult> {
    init.validate()?;
    cfg.validate()?;
    let start = match &cfg.search {
        Some(sc) => grid_search(init, data, cfg, sc),
        None => init.clone(),
    };
    let run = |from: &MotionModel| -> Result<Minimum> {
        minimize(
            |p| {
                let (r, g) = analytic_gradient(&from.with_params(p), data, cfg);
                (r.total, g)
            },
            |p| evaluate(&from.with_params(p), data, cfg).total,
            &from.params,
            cfg,
        )
    };
    let mut best = run(&start)?;
    if cfg.restarts > 0 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.restarts {
            let params: Vec<f64> = start
                .params
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let held = cfg.free.as_ref().is_some_and(|m| !m[k]);
                    if held {
                        *p
                    } else {
                        p + rng.gen_range(-1.0..=1.0) * cfg.restart_scale
                    }
                })
                .collect();
            let cand = run(&start.with_params(&params))?;
            if cand.trace.last() < best.trace.last() {
                best = cand;
            }
        }
    }
    let model = start.with_params(&best.params);
    let report = evaluate(&model, data, cfg);
    if !report.total.is_finite() {
        return Err(Error::Diverged(format!("final loss is {}", report.total)));
    }
    Ok(FitResult {
        model,
        trace: best.trace,
        iterations: best.iterations,
        stop: best.stop,
        report,
    })
}

/// Inverse depth used to seed monocular `rigid_planar` fits (5 m).
pub const DEFAULT_INVERSE_DEPTH: f64 = 0.2;

/// Staged egomotion fit.
///
/// The rotation is located by fitting the rotation-only model to the left
/// slice (grid search, then gradient). `rotation_only` is then refined on
/// all data. `rigid_planar` starts from that rotation with zero translation
/// and an inverse depth taken from `inverse_depth`, else from an integer
/// disparity sweep when a right slice is present, else
/// [`DEFAULT_INVERSE_DEPTH`]; all seven parameters are then refined jointly
/// by gradient descent.
pub fn fit_egomotion(
    kind: ModelKind,
    inverse_depth: Option<f64>,
    max_disparity: usize,
    data: &FitData,
    cfg: &OptimizeConfig,
) -> Result<FitResult> {
    if !kind.is_rigid() {
        return Err(Error::Validation(format!("{kind} is not an egomotion model")));
    }
    let left_only = FitData {
        right: None,
        ..*data
    };
    let rot_cfg = OptimizeConfig {
        free: None,
        ..cfg.clone()
    };
    let rot = fit(&MotionModel::zeros(ModelKind::RotationOnly), &left_only, &rot_cfg)?;
    let refine = OptimizeConfig {
        search: None,
        ..cfg.clone()
    };
    if kind == ModelKind::RotationOnly {
        return if data.right.is_some() {
            fit(&rot.model, data, &refine)
        } else {
            Ok(rot)
        };
    }
    let r = &rot.model.params;
    let pose = Pose::from_parts([r[0], r[1], r[2]], [0.0; 3]);
    let rho = match (inverse_depth, data.right) {
        (Some(rho), _) => rho,
        (None, Some(_)) => initial_inverse_depth(&MotionModel::rigid(pose, 0.0), data, cfg, max_disparity)?,
        (None, None) => DEFAULT_INVERSE_DEPTH,
    };
    fit(&MotionModel::rigid(pose, rho), data, &refine)
}

/// Integer disparity in `0..=max_disparity` minimizing the census stereo
/// loss between two count images under a uniform disparity.
pub fn stereo_disparity_sweep(
    left_count: &Grid,
    right_count: &Grid,
    max_disparity: usize,
    window: usize,
    eps: f64,
) -> Result<(usize, Vec<f64>)> {
    let (h, w) = (left_count.height, left_count.width);
    let costs = (0..=max_disparity)
        .map(|d| {
            let disp = DisparityField::uniform(h, w, d as f64);
            census_stereo_loss(left_count, right_count, &disp, &disp, window, eps)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(d, _)| d)
        .unwrap_or(0);
    Ok((best, costs))
}

/// Starting inverse depth for a stereo `rigid_planar` fit: the best integer
/// disparity of the count images deblurred under `model`'s current motion.
pub fn initial_inverse_depth(
    model: &MotionModel,
    data: &FitData,
    cfg: &OptimizeConfig,
    max_disparity: usize,
) -> Result<f64> {
    let right = data
        .right
        .ok_or_else(|| Error::Validation("stereo initialization needs a right slice".into()))?;
    let lctx = data.left_context(cfg.bins);
    let flow_l = expand_model(model, &lctx);
    let flow_r = expand_model(model, &data.right_context(cfg.bins));
    let cl = deblurred_count(data.left, &flow_l, cfg.bins);
    let cr = deblurred_count(right, &flow_r, cfg.bins);
    let (d, _) = stereo_disparity_sweep(&cl, &cr, max_disparity, cfg.census_window, cfg.eps)?;
    Ok(d.max(1) as f64 / lctx.disparity_for(1.0))
}

/// Dense per-pixel disparity fitting under the stereo objective
/// `lambda2 stereo + lambda3 consistency + lambda4 smoothness` for fixed
/// deblurred count images.
pub fn fit_disparity(
    left_count: &Grid,
    right_count: &Grid,
    init_left: &DisparityField,
    init_right: &DisparityField,
    cfg: &OptimizeConfig,
) -> Result<(DisparityField, DisparityField, Vec<f64>)> {
    let (h, w) = (left_count.height, left_count.width);
    let n = h * w;
    let wts = cfg.weights;
    let split = |p: &[f64]| {
        (
            DisparityField(Grid::from_vec(h, w, p[..n].to_vec()).expect("shape")),
            DisparityField(Grid::from_vec(h, w, p[n..].to_vec()).expect("shape")),
        )
    };
    let eval = |p: &[f64]| -> (f64, Vec<f64>) {
        let (dl, dr) = split(p);
        let (s, sl, sr) =
            census_stereo_grad(left_count, right_count, &dl, &dr, cfg.census_window, cfg.eps)
                .expect("shape");
        let (c, cl, cr) = lr_consistency_grad(&dl, &dr, cfg.eps).expect("shape");
        let (ml, gml) = smoothness_scalar_grad(&dl.0, cfg.eps);
        let (mr, gmr) = smoothness_scalar_grad(&dr.0, cfg.eps);
        let total = wts.lambda2 * s + wts.lambda3 * c + wts.lambda4 * (ml + mr);
        let mut g = Vec::with_capacity(2 * n);
        for i in 0..n {
            g.push(wts.lambda2 * sl.data[i] + wts.lambda3 * cl.data[i] + wts.lambda4 * gml.data[i]);
        }
        for i in 0..n {
            g.push(wts.lambda2 * sr.data[i] + wts.lambda3 * cr.data[i] + wts.lambda4 * gmr.data[i]);
        }
        (total, g)
    };
    let mut init = init_left.0.data.clone();
    init.extend_from_slice(&init_right.0.data);
    let min = minimize(eval, |p| eval(p).0, &init, cfg)?;
    let (dl, dr) = split(&min.params);
    Ok((dl, dr, min.trace))
}
