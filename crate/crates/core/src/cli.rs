//! Command-line frontend.
//!
//! Every subcommand writes machine-readable JSON (to `--out` or stdout) and,
//! where useful, PGM/PNG images. `EVMC_THREADS` caps volume-building
//! parallelism; `0` forces the single-threaded path.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::egomotion::Pose;
use crate::events::{
    load_calibration, load_events, save_calibration, save_events, CameraIntrinsics, EventFormat,
    EventSlice, StereoRig,
};
use crate::export::{
    load_flow, load_json, save_json, write_flow_png, write_pgm, write_volume, write_volume_pgms,
};
use crate::grid::Grid;
use crate::losses::{
    smoothness_loss, time_loss, LossReport, LossWeights, ObjectiveKind, DEFAULT_CENSUS_WINDOW,
    DEFAULT_EPS,
};
use crate::metrics::{aee, flow_to_displacement, pose_errors};
use crate::optimize::{
    expand_model, fit, fit_egomotion, FitData, FitResult, ModelContext, ModelKind, MotionModel,
    OptimizeConfig, SearchConfig, StopReason,
};
use crate::synth::{gen_stereo_pair, GroundTruth, SceneMotion, SourceSpec, SynthScene};
use crate::voxel::build_volume_parallel;
use crate::warp::{count_image, propagate_events, timestamp_images, FlowField, RefTime};

/// Default events per window.
pub const DEFAULT_MAX_EVENTS: usize = 30_000;
pub const DEFAULT_BINS: usize = 9;
/// Focal length assumed when no calibration is given; only the principal
/// point matters for flow models.
const PLACEHOLDER_FOCAL: f64 = 200.0;
const PLACEHOLDER_BASELINE: f64 = 0.1;

#[derive(Parser, Debug)]
#[command(name = "evmc", version, about = "Event-camera motion compensation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a discretized event volume and export it.
    Voxelize(VoxelizeArgs),
    /// Warp events under a flow and write count and timestamp images.
    Deblur(DeblurArgs),
    /// Print the flow objective for an event file and flow field.
    Loss(LossArgs),
    /// Fit a constant or affine flow model.
    FitFlow(FitFlowArgs),
    /// Fit a rotation-only or rigid-planar egomotion model.
    FitEgomotion(FitEgoArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Flow metrics against ground truth.
    EvalFlow(EvalFlowArgs),
    /// Pose metrics against ground truth.
    EvalPose(EvalPoseArgs),
    /// Render flow, volume or count images.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct EventInput {
    /// Event file (CSV `t x y p`, or 21-byte binary records for .bin/.evb).
    #[arg(long)]
    events: PathBuf,
    /// Override the format guessed from the extension.
    #[arg(long)]
    format: Option<EventFormat>,
    /// Keep at most this many events (the first ones in time).
    #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
    max_events: usize,
}

impl EventInput {
    fn load(&self) -> anyhow::Result<EventSlice> {
        load_slice(&self.events, self.format, self.max_events)
    }
}

fn load_slice(path: &Path, format: Option<EventFormat>, max: usize) -> anyhow::Result<EventSlice> {
    let fmt = format.unwrap_or_else(|| EventFormat::from_path(path));
    let slice = load_events(path, fmt)?;
    for w in &slice.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(slice.truncated(max))
}

#[derive(Args, Debug)]
struct VoxelizeArgs {
    #[command(flatten)]
    input: EventInput,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Sensor size as HxW.
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    /// Flat binary volume output.
    #[arg(long)]
    out: PathBuf,
    /// Also write one PGM per bin as `{prefix}_bin{b}.pgm`.
    #[arg(long)]
    pgm_prefix: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TPrime {
    Start,
    End,
}

#[derive(Args, Debug)]
struct DeblurArgs {
    #[command(flatten)]
    input: EventInput,
    /// Dense flow JSON (px/bin).
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    flow: Option<PathBuf>,
    /// Motion model JSON (a fit result or a bare model).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sensor size as HxW; required with --model unless --calib is given.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_enum, default_value = "start")]
    t_prime: TPrime,
    /// Writes `{prefix}_count.pgm`, `{prefix}_time_pos.pgm`, `{prefix}_time_neg.pgm`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args, Debug)]
struct LossArgs {
    #[command(flatten)]
    input: EventInput,
    #[arg(long)]
    flow: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// lambda1..lambda4, comma separated.
    #[arg(long, value_parser = parse_weights, allow_hyphen_values = true)]
    weights: Option<LossWeights>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitCommon {
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_parser = parse_weights, allow_hyphen_values = true)]
    weights: Option<LossWeights>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    restarts: usize,
    /// Skip the initial grid search.
    #[arg(long)]
    no_search: bool,
    /// Fit result JSON (model, trace, loss report).
    #[arg(long)]
    out: PathBuf,
}

impl FitCommon {
    fn config(&self) -> OptimizeConfig {
        OptimizeConfig {
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            bins: self.bins,
            weights: self.weights.unwrap_or_default(),
            eps: self.eps,
            census_window: DEFAULT_CENSUS_WINDOW,
            seed: self.seed,
            restarts: self.restarts,
            search: (!self.no_search).then(SearchConfig::default),
            ..OptimizeConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitFlowArgs {
    #[command(flatten)]
    input: EventInput,
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    /// `constant` or `affine`.
    #[arg(long, default_value = "constant")]
    model: ModelKind,
    /// Initial parameters, comma separated (default zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    init: Option<Vec<f64>>,
    /// Also write the fitted dense flow JSON.
    #[arg(long)]
    flow_out: Option<PathBuf>,
    #[command(flatten)]
    common: FitCommon,
}

#[derive(Args, Debug)]
struct FitEgoArgs {
    #[command(flatten)]
    input: EventInput,
    /// Right-camera events; enables the stereo terms for `rigid`.
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long)]
    calib: PathBuf,
    /// `rotation` or `rigid`.
    #[arg(long, default_value = "rotation")]
    model: ModelKind,
    /// Fixed starting inverse depth (1/m) for `rigid`.
    #[arg(long)]
    inverse_depth: Option<f64>,
    /// Largest disparity tried when seeding the inverse depth.
    #[arg(long, default_value_t = 16)]
    max_disparity: usize,
    #[command(flatten)]
    common: FitCommon,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    Flow,
    Rigid,
    Stereo,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "flow")]
    kind: SynthKind,
    #[arg(long, value_parser = parse_size, default_value = "64x64")]
    size: (usize, usize),
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Constant flow u,v in px/bin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [2.0, -1.0])]
    flow: Vec<f64>,
    /// Pose psi,beta,phi (degrees),tx,ty,tz (m) over the window.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0; 6])]
    pose: Vec<f64>,
    /// Depth of the scene plane, m.
    #[arg(long, default_value_t = 5.0)]
    depth: f64,
    /// Stereo disparity in px; the plane depth follows from it.
    #[arg(long, default_value_t = 4.0)]
    disparity: f64,
    #[arg(long, default_value_t = PLACEHOLDER_FOCAL)]
    focal: f64,
    #[arg(long, default_value_t = PLACEHOLDER_BASELINE)]
    baseline: f64,
    #[arg(long, default_value_t = 40)]
    sources: usize,
    #[arg(long, default_value_t = 20)]
    events_per_source: usize,
    /// Spurious events per second.
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    /// Window duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "csv")]
    format: EventFormat,
    /// Writes `{prefix}.csv` (or `_left`/`_right`), `{prefix}_truth.json`
    /// and, for rigid and stereo scenes, `{prefix}_calib.txt`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args, Debug)]
struct EvalFlowArgs {
    /// Predicted flow: dense flow JSON or a flow fit result.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth: synth sidecar or dense flow JSON.
    #[arg(long)]
    truth: PathBuf,
    /// Restrict to pixels with at least one event.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    format: Option<EventFormat>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Report displacement over this many seconds instead of px/bin.
    #[arg(long, requires = "events")]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalPoseArgs {
    /// Fit result, pose JSON or synth sidecar.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Dense flow JSON (or flow fit result) rendered as a color PNG.
    #[arg(long, conflicts_with_all = ["volume", "events"])]
    flow: Option<PathBuf>,
    /// Magnitude mapped to full saturation (default: field maximum).
    #[arg(long)]
    max_mag: Option<f64>,
    /// Flat binary volume rendered as one PGM per bin.
    #[arg(long, conflicts_with = "events")]
    volume: Option<PathBuf>,
    /// Events rendered as a raw count PGM.
    #[arg(long, requires = "size")]
    events: Option<PathBuf>,
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    /// Output file (flow, events) or prefix (volume).
    #[arg(long)]
    out: String,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height `{h}`: {e}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("width `{w}`: {e}"))?;
    if h == 0 || w == 0 {
        return Err("size must be at least 1x1".into());
    }
    Ok((h, w))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn parse_weights(s: &str) -> Result<LossWeights, String> {
    LossWeights::from_slice(&parse_list(s)?).map_err(|e| e.to_string())
}

/// Worker threads for volume building: `EVMC_THREADS`, else all cores.
pub fn thread_budget() -> usize {
    match std::env::var("EVMC_THREADS") {
        Ok(v) => v.trim().parse().unwrap_or(0),
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Voxelize(a) => voxelize(a),
        Command::Deblur(a) => deblur(a),
        Command::Loss(a) => loss(a),
        Command::FitFlow(a) => fit_flow(a),
        Command::FitEgomotion(a) => fit_ego(a),
        Command::Synth(a) => synth(a),
        Command::EvalFlow(a) => eval_flow(a),
        Command::EvalPose(a) => eval_pose(a),
        Command::Render(a) => render(a),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    match out {
        Some(p) => save_json(p, value).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct VolumeSummary {
    bins: usize,
    height: usize,
    width: usize,
    events: usize,
    dropped: usize,
    total_mass: f64,
}

fn voxelize(a: VoxelizeArgs) -> anyhow::Result<()> {
    let slice = a.input.load()?;
    let (h, w) = a.size;
    let vol = build_volume_parallel(&slice, a.bins, h, w, thread_budget());
    write_volume(&a.out, &vol)?;
    if let Some(prefix) = &a.pgm_prefix {
        write_volume_pgms(prefix, &vol)?;
    }
    emit(
        None,
        &VolumeSummary {
            bins: vol.bins,
            height: vol.height,
            width: vol.width,
            events: slice.len(),
            dropped: vol.dropped,
            total_mass: vol.total_mass(),
        },
    )
}

/// Flow fit results carry a model; bare model files are accepted too.
fn load_model(path: &Path) -> anyhow::Result<MotionModel> {
    let v: Value = load_json(path)?;
    let m = v.get("model").cloned().unwrap_or(v);
    let model: MotionModel = serde_json::from_value(m).with_context(|| format!("{}: not a motion model", path.display()))?;
    model.validate()?;
    Ok(model)
}

fn placeholder_rig(h: usize, w: usize) -> anyhow::Result<StereoRig> {
    Ok(StereoRig::symmetric(
        CameraIntrinsics::centered(PLACEHOLDER_FOCAL, w, h)?,
        PLACEHOLDER_BASELINE,
    )?)
}

fn rig_for(calib: Option<&Path>, size: Option<(usize, usize)>) -> anyhow::Result<StereoRig> {
    match (calib, size) {
        (Some(c), _) => {
            let cal = load_calibration(c)?;
            for w in &cal.warnings {
                eprintln!("warning: {}: {w}", c.display());
            }
            Ok(cal.rig)
        }
        (None, Some((h, w))) => placeholder_rig(h, w),
        (None, None) => bail!("--size or --calib is required"),
    }
}

fn deblur(a: DeblurArgs) -> anyhow::Result<()> {
    let slice = a.input.load()?;
    let flow = match (&a.flow, &a.model) {
        (Some(f), _) => load_flow(f)?,
        (None, Some(m)) => {
            let model = load_model(m)?;
            if model.kind.is_rigid() && a.calib.is_none() {
                bail!("--calib is required for {} models", model.kind);
            }
            let rig = rig_for(a.calib.as_deref(), a.size)?;
            expand_model(
                &model,
                &ModelContext {
                    intrinsics: rig.left,
                    baseline_m: rig.baseline_m,
                    bins: a.bins,
                },
            )
        }
        (None, None) => unreachable!("clap requires one of --flow/--model"),
    };
    let t_prime = match a.t_prime {
        TPrime::Start => RefTime::Start,
        TPrime::End => RefTime::End,
    };
    let warped = propagate_events(&slice, &flow, t_prime.bins(a.bins), a.bins);
    let (h, w) = (flow.height, flow.width);
    let ts = timestamp_images(&warped, h, w);
    write_pgm(Path::new(&format!("{}_count.pgm", a.out_prefix)), &count_image(&warped, h, w))?;
    write_pgm(Path::new(&format!("{}_time_pos.pgm", a.out_prefix)), &ts.t_plus)?;
    write_pgm(Path::new(&format!("{}_time_neg.pgm", a.out_prefix)), &ts.t_minus)?;
    Ok(())
}

fn loss(a: LossArgs) -> anyhow::Result<()> {
    let slice = a.input.load()?;
    let flow = load_flow(&a.flow)?;
    if !(a.eps > 0.0) {
        bail!("--eps must be positive");
    }
    let weights = a.weights.unwrap_or_default();
    let report = LossReport::new(
        ObjectiveKind::Flow,
        weights,
        &[
            ("time", time_loss(&slice, &flow, a.bins)),
            ("smooth", smoothness_loss(&flow, a.eps)),
        ],
    );
    emit(a.out.as_deref(), &report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: MotionModel,
    pub bins: usize,
    pub iterations: usize,
    pub stop: StopReason,
    pub trace: Vec<f64>,
    pub report: LossReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disparity_px: Option<f64>,
}

impl FitOutput {
    fn new(r: FitResult, bins: usize, ctx: Option<&ModelContext>) -> Self {
        Self {
            pose: r.model.pose(),
            disparity_px: r
                .model
                .inverse_depth()
                .zip(ctx)
                .map(|(rho, c)| c.disparity_for(rho)),
            model: r.model,
            bins,
            iterations: r.iterations,
            stop: r.stop,
            trace: r.trace,
            report: r.report,
        }
    }
}

fn fit_flow(a: FitFlowArgs) -> anyhow::Result<()> {
    if a.model.is_rigid() {
        bail!("fit-flow takes a flow model; use fit-egomotion for {}", a.model);
    }
    let slice = a.input.load()?;
    let (h, w) = a.size;
    let rig = placeholder_rig(h, w)?;
    let init = match &a.init {
        Some(p) => MotionModel::new(a.model, p.clone())?,
        None => MotionModel::zeros(a.model),
    };
    let cfg = a.common.config();
    let data = FitData::mono(&slice, &rig);
    let r = fit(&init, &data, &cfg)?;
    let ctx = data.left_context(cfg.bins);
    if let Some(p) = &a.flow_out {
        save_json(p, &expand_model(&r.model, &ctx))?;
    }
    emit(Some(&a.common.out), &FitOutput::new(r, cfg.bins, None))
}

fn fit_ego(a: FitEgoArgs) -> anyhow::Result<()> {
    if !a.model.is_rigid() {
        bail!("fit-egomotion takes `rotation` or `rigid`, got {}", a.model);
    }
    let left = a.input.load()?;
    let right = match &a.right {
        Some(p) => Some(load_slice(p, a.input.format, a.input.max_events)?),
        None => None,
    };
    let rig = rig_for(Some(&a.calib), None)?;
    let data = FitData {
        left: &left,
        right: right.as_ref(),
        rig: &rig,
    };
    let cfg = a.common.config();
    let r = fit_egomotion(a.model, a.inverse_depth, a.max_disparity, &data, &cfg)?;
    let ctx = data.left_context(cfg.bins);
    emit(Some(&a.common.out), &FitOutput::new(r, cfg.bins, Some(&ctx)))
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let (h, w) = a.size;
    let k = CameraIntrinsics::centered(a.focal, w, h)?;
    let rig = StereoRig::symmetric(k, a.baseline)?;
    let pose = || -> anyhow::Result<Pose> {
        if a.pose.len() != 6 {
            bail!("--pose takes 6 values, got {}", a.pose.len());
        }
        let p = &a.pose;
        Ok(Pose::from_parts(
            [p[0].to_radians(), p[1].to_radians(), p[2].to_radians()],
            [p[3], p[4], p[5]],
        ))
    };
    let motion = match a.kind {
        SynthKind::Flow => {
            if a.flow.len() != 2 {
                bail!("--flow takes 2 values, got {}", a.flow.len());
            }
            SceneMotion::ConstantFlow {
                u: a.flow[0],
                v: a.flow[1],
            }
        }
        SynthKind::Rigid => SceneMotion::Rigid {
            pose: pose()?,
            depth_m: a.depth,
            intrinsics: k,
        },
        SynthKind::Stereo => {
            if !(a.disparity > 0.0) {
                bail!("stereo scenes need a positive --disparity");
            }
            SceneMotion::Rigid {
                pose: pose()?,
                depth_m: a.focal * a.baseline / a.disparity,
                intrinsics: k,
            }
        }
    };
    let scene = SynthScene {
        seed: a.seed,
        height: h,
        width: w,
        bins: a.bins,
        duration_s: a.duration,
        events_per_source: a.events_per_source,
        noise_rate: a.noise_rate,
        sources: SourceSpec::Random(a.sources),
        motion,
    };
    let ext = match a.format {
        EventFormat::Csv => "csv",
        EventFormat::Binary => "bin",
    };
    let prefix = &a.out_prefix;
    let truth = match a.kind {
        SynthKind::Stereo => {
            let (l, r, truth) = gen_stereo_pair(&scene, a.baseline, a.disparity)?;
            save_events(format!("{prefix}_left.{ext}"), a.format, &l)?;
            save_events(format!("{prefix}_right.{ext}"), a.format, &r)?;
            truth
        }
        _ => {
            let (s, truth) = scene.generate()?;
            save_events(format!("{prefix}.{ext}"), a.format, &s)?;
            truth
        }
    };
    if !matches!(a.kind, SynthKind::Flow) {
        save_calibration(format!("{prefix}_calib.txt"), &rig)?;
    }
    save_json(Path::new(&format!("{prefix}_truth.json")), &truth)?;
    Ok(())
}

/// Dense flow from a flow JSON, a flow fit result, or a synth sidecar.
fn load_any_flow(path: &Path, size_hint: Option<(usize, usize)>) -> anyhow::Result<FlowField> {
    let v: Value = load_json(path)?;
    if v.get("u").is_some() {
        let f: FlowField = serde_json::from_value(v)?;
        f.validate()?;
        return Ok(f);
    }
    if let Ok(t) = serde_json::from_value::<GroundTruth>(v.clone()) {
        return Ok(t.flow_field());
    }
    if v.get("model").is_some() {
        let model = load_model(path)?;
        if model.kind.is_rigid() {
            bail!("{}: rigid fit results need calibration; use eval-pose", path.display());
        }
        let (h, w) = size_hint.ok_or_else(|| anyhow!("{}: flow model needs a frame size", path.display()))?;
        let rig = placeholder_rig(h, w)?;
        let bins = v.get("bins").and_then(Value::as_u64).unwrap_or(DEFAULT_BINS as u64) as usize;
        return Ok(expand_model(
            &model,
            &ModelContext {
                intrinsics: rig.left,
                baseline_m: rig.baseline_m,
                bins,
            },
        ));
    }
    bail!("{}: not a flow field, fit result or ground-truth file", path.display())
}

#[derive(Serialize)]
struct FlowReport {
    unit: &'static str,
    aee: f64,
    outlier_fraction: f64,
    pixels: usize,
}

fn eval_flow(a: EvalFlowArgs) -> anyhow::Result<()> {
    let gt = load_any_flow(&a.truth, None)?;
    let mut pred = load_any_flow(&a.pred, Some((gt.height, gt.width)))?;
    let mut gt = gt;
    let mut mask = vec![true; gt.u.len()];
    let mut unit = "px/bin";
    if let Some(ev) = &a.events {
        let slice = load_slice(ev, a.format, usize::MAX)?;
        mask = event_mask(&slice, gt.height, gt.width);
        if let Some(dt) = a.dt {
            let window = (slice.t0(), slice.tn());
            pred = flow_to_displacement(&pred, a.bins, dt, window)?;
            gt = flow_to_displacement(&gt, a.bins, dt, window)?;
            unit = "px";
        }
    }
    let e = aee(&pred, &gt, &mask)?;
    println!("AEE {:.4} {unit}  %Outlier {:.2}", e.aee, 100.0 * e.outlier_fraction);
    let report = FlowReport {
        unit,
        aee: e.aee,
        outlier_fraction: e.outlier_fraction,
        pixels: e.pixels,
    };
    match &a.out {
        Some(p) => emit(Some(p), &report),
        None => Ok(()),
    }
}

/// Pixels holding at least one event at its rounded position.
pub fn event_mask(slice: &EventSlice, height: usize, width: usize) -> Vec<bool> {
    let mut m = vec![false; height * width];
    for e in slice.events() {
        let (x, y) = (e.x.round(), e.y.round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
            m[y as usize * width + x as usize] = true;
        }
    }
    m
}

fn load_pose(path: &Path) -> anyhow::Result<Pose> {
    let v: Value = load_json(path)?;
    if let Ok(t) = serde_json::from_value::<GroundTruth>(v.clone()) {
        return t
            .pose()
            .ok_or_else(|| anyhow!("{}: ground truth has no pose", path.display()));
    }
    if let Some(p) = v.get("pose").filter(|p| !p.is_null()) {
        return Ok(serde_json::from_value(p.clone())?);
    }
    if v.get("model").is_some() {
        return load_model(path)?
            .pose()
            .ok_or_else(|| anyhow!("{}: model has no pose", path.display()));
    }
    serde_json::from_value(v).with_context(|| format!("{}: no pose found", path.display()))
}

fn eval_pose(a: EvalPoseArgs) -> anyhow::Result<()> {
    let pred = load_pose(&a.pred)?;
    let gt = load_pose(&a.truth)?;
    let e = pose_errors(&pred, &gt)?;
    let rpe = e.rpe_deg.map_or("n/a".to_string(), |d| format!("{d:.4}"));
    println!("RPE(deg) {rpe}  RRE(rad) {:.6}", e.rre_rad);
    match &a.out {
        Some(p) => emit(Some(p), &e),
        None => Ok(()),
    }
}

fn render(a: RenderArgs) -> anyhow::Result<()> {
    if let Some(f) = &a.flow {
        let flow = load_any_flow(f, None)?;
        write_flow_png(Path::new(&a.out), &flow, a.max_mag)?;
    } else if let Some(v) = &a.volume {
        let vol = crate::export::read_volume(v)?;
        write_volume_pgms(&a.out, &vol)?;
    } else if let Some(e) = &a.events {
        let (h, w) = a.size.expect("clap requires --size");
        let slice = load_slice(e, None, usize::MAX)?;
        let mut counts = Grid::zeros(h, w);
        for ev in slice.events() {
            let (x, y) = (ev.x.round(), ev.y.round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                *counts.at_mut(x as usize, y as usize) += 1.0;
            }
        }
        write_pgm(Path::new(&a.out), &counts)?;
    } else {
        bail!("render needs one of --flow, --volume or --events");
    }
    Ok(())
}
