//! Synthetic scenes checked against the geometry and optimizer.

use evmc::egomotion::{disparity_to_depth, pose_disparity_to_flow, reproject, DisparityField, Pose};
use evmc::events::{CameraIntrinsics, Polarity, StereoRig};
use evmc::losses::deblurred_count;
use evmc::optimize::{expand_model, fit, stereo_disparity_sweep, FitData, ModelKind, MotionModel, OptimizeConfig};
use evmc::synth::{gen_stereo_pair, SceneMotion, Source, SourceSpec, SynthScene};
use evmc::warp::{propagate_events, FlowField};

const BINS: usize = 9;

fn scene(motion: SceneMotion, sources: SourceSpec, seed: u64) -> SynthScene {
    SynthScene {
        seed,
        height: 64,
        width: 64,
        bins: BINS,
        duration_s: 1.0,
        events_per_source: 20,
        noise_rate: 0.0,
        sources,
        motion,
    }
}

fn spread(xs: &[(f64, f64)]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in xs {
        for b in xs {
            worst = worst.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    worst
}

#[test]
fn true_flow_collapses_each_source() {
    let src = Source {
        x: 20.25,
        y: 30.5,
        polarity: Polarity::Positive,
    };
    let sc = scene(SceneMotion::ConstantFlow { u: 1.5, v: -0.75 }, SourceSpec::Explicit(vec![src]), 4);
    let (slice, truth) = sc.generate().unwrap();
    let w = propagate_events(&slice, &truth.flow_field(), 0.0, BINS);
    let pts: Vec<(f64, f64)> = w.events.iter().map(|e| (e.x, e.y)).collect();
    // zero up to the f32 rounding of stored coordinates
    assert!(spread(&pts) < 1e-5, "{}", spread(&pts));
    assert!((pts[0].0 - src.x).abs() < 1e-5 && (pts[0].1 - src.y).abs() < 1e-5);
}

#[test]
fn true_rigid_motion_collapses_within_half_pixel() {
    let k = CameraIntrinsics::centered(200.0, 64, 64).unwrap();
    let pose = Pose::from_parts([0.02, -0.015, 0.03], [0.05, 0.02, 0.0]);
    let src = Source {
        x: 40.0,
        y: 20.0,
        polarity: Polarity::Negative,
    };
    let sc = scene(
        SceneMotion::Rigid {
            pose,
            depth_m: 5.0,
            intrinsics: k,
        },
        SourceSpec::Explicit(vec![src]),
        5,
    );
    let (slice, truth) = sc.generate().unwrap();
    let w = propagate_events(&slice, &truth.flow_field(), 0.0, BINS);
    let pts: Vec<(f64, f64)> = w.events.iter().map(|e| (e.x, e.y)).collect();
    assert!(spread(&pts) < 0.5, "{}", spread(&pts));
}

#[test]
fn yaw_trajectory_matches_linear_flow() {
    let k = CameraIntrinsics::centered(200.0, 64, 64).unwrap();
    let pose = Pose::from_parts([0.0, 2f64.to_radians(), 0.0], [0.0; 3]);
    let flow = pose_disparity_to_flow(&pose, &DisparityField::uniform(64, 64, 200.0 * 0.1 / 5.0), &k, 0.1, BINS).flow;
    for (x, y) in [(10usize, 50usize), (32, 32), (50, 12)] {
        let end = reproject(&pose, &k, x as f64, y as f64, 5.0).unwrap();
        let (u, v) = flow.at(x, y);
        let span = (BINS - 1) as f64;
        assert!((x as f64 + span * u - end.0).abs() < 0.1, "({x},{y}) u");
        assert!((y as f64 + span * v - end.1).abs() < 0.1, "({x},{y}) v");
    }
}

#[test]
fn disparity_depth_conversion() {
    let d = disparity_to_depth(4.0, 200.0, 0.1);
    assert!((d.z - 5.0).abs() < 1e-12 && !d.clamped);
}

#[test]
fn stereo_sweep_finds_true_disparity() {
    let k = CameraIntrinsics::centered(200.0, 64, 64).unwrap();
    let pose = Pose::from_parts([0.01, 0.0, 0.0], [0.0; 3]);
    let sc = scene(
        SceneMotion::Rigid {
            pose,
            depth_m: 5.0,
            intrinsics: k,
        },
        SourceSpec::Random(40),
        7,
    );
    let (l, r, truth) = gen_stereo_pair(&sc, 0.1, 4.0).unwrap();
    let flow = truth.flow_field();
    let cl = deblurred_count(&l, &flow, BINS);
    let cr = deblurred_count(&r, &flow, BINS);
    let (best, costs) = stereo_disparity_sweep(&cl, &cr, 8, 5, 1e-3).unwrap();
    assert_eq!(best, 4, "{costs:?}");
}

#[test]
fn fit_trace_is_monotone_and_repeatable() {
    let k = CameraIntrinsics::centered(200.0, 64, 64).unwrap();
    let rig = StereoRig::symmetric(k, 0.1).unwrap();
    let sc = SynthScene {
        noise_rate: 100.0,
        ..scene(SceneMotion::ConstantFlow { u: 0.8, v: 1.9 }, SourceSpec::Random(30), 8)
    };
    let (slice, _) = sc.generate().unwrap();
    let data = FitData::mono(&slice, &rig);
    let cfg = OptimizeConfig {
        restarts: 2,
        seed: 17,
        ..OptimizeConfig::default()
    };
    let a = fit(&MotionModel::zeros(ModelKind::AffineFlow), &data, &cfg).unwrap();
    assert!(a.trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", a.trace);
    let b = fit(&MotionModel::zeros(ModelKind::AffineFlow), &data, &cfg).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.trace, b.trace);
    let flow = expand_model(&a.model, &data.left_context(BINS));
    let truth = FlowField::constant(64, 64, 0.8, 1.9);
    let (u, v) = (flow.at(32, 32), truth.at(32, 32));
    assert!((u.0 - v.0).abs() < 0.2 && (u.1 - v.1).abs() < 0.2, "{u:?}");
}

#[test]
fn identity_pose_gives_static_events_and_zero_rotation() {
    let k = CameraIntrinsics::centered(200.0, 64, 64).unwrap();
    let rig = StereoRig::symmetric(k, 0.1).unwrap();
    let sc = scene(
        SceneMotion::Rigid {
            pose: Pose::identity(),
            depth_m: 5.0,
            intrinsics: k,
        },
        SourceSpec::Random(30),
        9,
    );
    let (slice, _) = sc.generate().unwrap();
    let r = fit(&MotionModel::zeros(ModelKind::RotationOnly), &FitData::mono(&slice, &rig), &OptimizeConfig::default())
        .unwrap();
    assert!(r.model.params.iter().all(|a| a.abs() < 0.1f64.to_radians()), "{:?}", r.model.params);
}
