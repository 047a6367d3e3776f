//! Synthetic event slices with known motion.
//!
//! Each source pixel emits events along its exact trajectory: a straight line
//! for constant flow, or the reprojection of a fronto-parallel scene point
//! under a pose interpolated linearly in (angles, translation) for rigid
//! motion. Signal times are drawn uniformly on the bin axis with the first
//! and last pinned to the window ends, so rescaling a generated slice's
//! timestamps reproduces the generator's bin times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::egomotion::{pose_disparity_to_flow, reproject, DisparityField, Pose, Z_MIN};
use crate::error::{Error, Result};
use crate::events::{CameraIntrinsics, Event, EventSlice, Polarity};
use crate::warp::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub x: f64,
    pub y: f64,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneMotion {
    ConstantFlow { u: f64, v: f64 },
    Rigid {
        pose: Pose,
        depth_m: f64,
        intrinsics: CameraIntrinsics,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    Random(usize),
    Explicit(Vec<Source>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScene {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub bins: usize,
    pub duration_s: f64,
    pub events_per_source: usize,
    /// Spurious events per second, uniform in position, time and polarity.
    pub noise_rate: f64,
    pub sources: SourceSpec,
    pub motion: SceneMotion,
}

/// Ground truth written next to generated events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    ConstantFlow {
        flow: [f64; 2],
        height: usize,
        width: usize,
        bins: usize,
        duration_s: f64,
    },
    Rigid {
        pose: Pose,
        depth_m: f64,
        intrinsics: CameraIntrinsics,
        bins: usize,
        duration_s: f64,
    },
    Stereo {
        disparity_px: f64,
        baseline_m: f64,
        scene: Box<GroundTruth>,
    },
}

impl GroundTruth {
    pub fn bins(&self) -> usize {
        match self {
            GroundTruth::ConstantFlow { bins, .. } | GroundTruth::Rigid { bins, .. } => *bins,
            GroundTruth::Stereo { scene, .. } => scene.bins(),
        }
    }

    /// Dense flow in pixels/bin at the window start.
    pub fn flow_field(&self) -> FlowField {
        match self {
            GroundTruth::ConstantFlow {
                flow,
                height,
                width,
                ..
            } => FlowField::constant(*height, *width, flow[0], flow[1]),
            GroundTruth::Rigid {
                pose,
                depth_m,
                intrinsics,
                bins,
                ..
            } => {
                // unit baseline: the disparity is only a carrier for the depth
                let d = intrinsics.fx / depth_m;
                let disp = DisparityField::uniform(intrinsics.height, intrinsics.width, d);
                pose_disparity_to_flow(pose, &disp, intrinsics, 1.0, *bins).flow
            }
            GroundTruth::Stereo { scene, .. } => scene.flow_field(),
        }
    }

    pub fn pose(&self) -> Option<Pose> {
        match self {
            GroundTruth::Rigid { pose, .. } => Some(*pose),
            GroundTruth::Stereo { scene, .. } => scene.pose(),
            GroundTruth::ConstantFlow { .. } => None,
        }
    }
}

/// Frame margin kept around every trajectory, in pixels.
const MARGIN: f64 = 1.0;
/// Trajectory samples used for the in-frame check of rigid sources.
const TRAJECTORY_CHECKS: usize = 17;
const MAX_PLACEMENT_TRIES: usize = 200;

impl SynthScene {
    fn validate(&self) -> Result<()> {
        if self.bins < 2 || self.height == 0 || self.width == 0 {
            return Err(Error::Validation("scene needs bins >= 2 and a non-empty frame".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Validation("scene duration must be positive".into()));
        }
        if !(self.noise_rate >= 0.0) {
            return Err(Error::Validation("noise rate must be >= 0".into()));
        }
        if let SceneMotion::Rigid {
            depth_m,
            intrinsics,
            ..
        } = &self.motion
        {
            if !(*depth_m > Z_MIN) {
                return Err(Error::Validation(format!("depth {depth_m} m must exceed {Z_MIN} m")));
            }
            if intrinsics.width != self.width || intrinsics.height != self.height {
                return Err(Error::Dimension("intrinsics resolution differs from the scene".into()));
            }
        }
        Ok(())
    }

    /// Position of a source at bin time `tb`.
    fn trace(&self, src: &Source, tb: f64) -> Option<(f64, f64)> {
        match &self.motion {
            SceneMotion::ConstantFlow { u, v } => Some((src.x + tb * u, src.y + tb * v)),
            SceneMotion::Rigid {
                pose,
                depth_m,
                intrinsics,
            } => {
                let tau = tb / (self.bins - 1) as f64;
                reproject(&pose.interpolate(tau), intrinsics, src.x, src.y, *depth_m)
            }
        }
    }

    fn in_frame(&self, src: &Source, left_margin: f64) -> bool {
        let span = (self.bins - 1) as f64;
        let (w, h) = (self.width as f64, self.height as f64);
        (0..TRAJECTORY_CHECKS).all(|k| {
            let tb = span * k as f64 / (TRAJECTORY_CHECKS - 1) as f64;
            match self.trace(src, tb) {
                Some((x, y)) => {
                    x >= MARGIN + left_margin && x <= w - 1.0 - MARGIN && y >= MARGIN && y <= h - 1.0 - MARGIN
                }
                None => false,
            }
        })
    }

    fn choose_sources(&self, rng: &mut ChaCha8Rng, left_margin: f64) -> Result<Vec<Source>> {
        match &self.sources {
            SourceSpec::Explicit(list) => {
                let bad: Vec<String> = list
                    .iter()
                    .filter(|s| !self.in_frame(s, left_margin))
                    .map(|s| format!("({}, {})", s.x, s.y))
                    .collect();
                if !bad.is_empty() {
                    return Err(Error::OutOfFrame(format!(
                        "sources leave the frame: {}",
                        bad.join(", ")
                    )));
                }
                Ok(list.clone())
            }
            SourceSpec::Random(n) => {
                let mut out: Vec<Source> = Vec::with_capacity(*n);
                for _ in 0..*n {
                    let mut placed = false;
                    for _ in 0..MAX_PLACEMENT_TRIES {
                        let src = Source {
                            x: rng.gen_range(0.0..(self.width - 1) as f64),
                            y: rng.gen_range(0.0..(self.height - 1) as f64),
                            polarity: if rng.gen_bool(0.5) {
                                Polarity::Positive
                            } else {
                                Polarity::Negative
                            },
                        };
                        let taken = out
                            .iter()
                            .any(|o| (o.x - src.x).abs() < 1.0 && (o.y - src.y).abs() < 1.0);
                        if !taken && self.in_frame(&src, left_margin) {
                            out.push(src);
                            placed = true;
                            break;
                        }
                    }
                    if !placed {
                        return Err(Error::OutOfFrame(format!(
                            "no in-frame source position found for a {}x{} frame under {:?}",
                            self.width, self.height, self.motion
                        )));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Noise-free events, times in seconds, unsorted.
    fn signal(&self, rng: &mut ChaCha8Rng, left_margin: f64) -> Result<Vec<Event>> {
        self.validate()?;
        let sources = self.choose_sources(rng, left_margin)?;
        let span = (self.bins - 1) as f64;
        let mut draws: Vec<(usize, f64)> = Vec::new();
        for (si, _) in sources.iter().enumerate() {
            for _ in 0..self.events_per_source {
                draws.push((si, rng.gen_range(0.0..=span)));
            }
        }
        // pin the window ends so that t0/tN of the slice match the bin axis
        if draws.len() >= 2 {
            let (imin, _) = draws
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .unwrap();
            draws[imin].1 = 0.0;
            let (imax, _) = draws
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != imin)
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .unwrap();
            draws[imax].1 = span;
        }
        draws
            .into_iter()
            .map(|(si, tb)| {
                let src = &sources[si];
                let (x, y) = self.trace(src, tb).ok_or_else(|| {
                    Error::OutOfFrame(format!("source ({}, {}) went behind the camera", src.x, src.y))
                })?;
                Ok(Event::new(
                    x as f32,
                    y as f32,
                    tb / span * self.duration_s,
                    src.polarity,
                ))
            })
            .collect()
    }

    fn noise(&self, rng: &mut ChaCha8Rng) -> Vec<Event> {
        let count = (self.noise_rate * self.duration_s).round() as usize;
        (0..count)
            .map(|_| {
                Event::new(
                    rng.gen_range(0.0..=(self.width - 1) as f64) as f32,
                    rng.gen_range(0.0..=(self.height - 1) as f64) as f32,
                    rng.gen_range(0.0..=self.duration_s),
                    if rng.gen_bool(0.5) {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    },
                )
            })
            .collect()
    }

    fn truth(&self) -> GroundTruth {
        match &self.motion {
            SceneMotion::ConstantFlow { u, v } => GroundTruth::ConstantFlow {
                flow: [*u, *v],
                height: self.height,
                width: self.width,
                bins: self.bins,
                duration_s: self.duration_s,
            },
            SceneMotion::Rigid {
                pose,
                depth_m,
                intrinsics,
            } => GroundTruth::Rigid {
                pose: *pose,
                depth_m: *depth_m,
                intrinsics: *intrinsics,
                bins: self.bins,
                duration_s: self.duration_s,
            },
        }
    }

    pub fn generate(&self) -> Result<(EventSlice, GroundTruth)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut events = self.signal(&mut rng, 0.0)?;
        events.extend(self.noise(&mut rng));
        Ok((sorted_slice(events), self.truth()))
    }
}

fn sorted_slice(mut events: Vec<Event>) -> EventSlice {
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    EventSlice::new(events)
}

#[allow(clippy::too_many_arguments)]
pub fn gen_constant_flow(
    n_sources: usize,
    events_per_source: usize,
    flow: (f64, f64),
    bins: usize,
    height: usize,
    width: usize,
    seed: u64,
    noise_rate: f64,
) -> Result<(EventSlice, FlowField)> {
    let scene = SynthScene {
        seed,
        height,
        width,
        bins,
        duration_s: 1.0,
        events_per_source,
        noise_rate,
        sources: SourceSpec::Random(n_sources),
        motion: SceneMotion::ConstantFlow {
            u: flow.0,
            v: flow.1,
        },
    };
    let (slice, truth) = scene.generate()?;
    Ok((slice, truth.flow_field()))
}

#[allow(clippy::too_many_arguments)]
pub fn gen_rigid(
    pose: Pose,
    depth_m: f64,
    intrinsics: CameraIntrinsics,
    bins: usize,
    n_sources: usize,
    events_per_source: usize,
    seed: u64,
    noise_rate: f64,
) -> Result<(EventSlice, Pose)> {
    let scene = SynthScene {
        seed,
        height: intrinsics.height,
        width: intrinsics.width,
        bins,
        duration_s: 1.0,
        events_per_source,
        noise_rate,
        sources: SourceSpec::Random(n_sources),
        motion: SceneMotion::Rigid {
            pose,
            depth_m,
            intrinsics,
        },
    };
    let (slice, _) = scene.generate()?;
    Ok((slice, pose))
}

/// Left/right slices of one scene: right events are the left signal shifted
/// by `-disparity` in x; each camera gets its own noise.
pub fn gen_stereo_pair(
    scene: &SynthScene,
    baseline_m: f64,
    disparity_px: f64,
) -> Result<(EventSlice, EventSlice, GroundTruth)> {
    if !(disparity_px >= 0.0) {
        return Err(Error::Validation(format!("disparity {disparity_px} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let signal = scene.signal(&mut rng, disparity_px)?;
    let mut left = signal.clone();
    left.extend(scene.noise(&mut rng));
    let mut right: Vec<Event> = signal
        .iter()
        .map(|e| Event::new((e.x as f64 - disparity_px) as f32, e.y, e.t, e.p))
        .collect();
    let mut rng_r = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x9e37_79b9_7f4a_7c15);
    right.extend(scene.noise(&mut rng_r));
    let truth = GroundTruth::Stereo {
        disparity_px,
        baseline_m,
        scene: Box::new(scene.truth()),
    };
    Ok((sorted_slice(left), sorted_slice(right), truth))
}
