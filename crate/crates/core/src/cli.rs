//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, PoseSE3};
use crate::grid::Mask;
use crate::image::ImageBuffer;
use crate::io;
use crate::losses::{loss_from_parts, DirectionInputs, LossWeights};
use crate::masks::{combine, repeated_masking, MaskSet, DEFAULT_ROUNDS};
use crate::metrics::{ate_snippets, depth_metrics, DepthEvalConfig};
use crate::refine::{refine_depth, refine_pose, RefineConfig, RefineOutput, StopReason};
use crate::synth::{preset, MaskAudit, Preset, PresetName, Visibility, VisibilityLabels};
use crate::warp::reconstruct;

#[derive(Debug, Parser)]
#[command(
    name = "multimask",
    version,
    about = "Multi-mask view synthesis on synthetic and file-based frame pairs"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for preset textures.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Two-way masking rounds.
    #[arg(long, global = true, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Defaults to 0.03, or 0.2 with --dn.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, default_value_t = 4)]
    pub scales: usize,
    /// Normalize depth by its mean inside the smoothness term.
    #[arg(long, global = true)]
    pub dn: bool,
    /// Median-scale predictions before evaluation.
    #[arg(long, global = true, default_value_t = true, action = clap::ArgAction::Set)]
    pub median_scale: bool,
    /// Evaluation depth cap in meters.
    #[arg(long, global = true, default_value = "80", value_parser = ["50", "80"])]
    pub cap: String,
}

impl GlobalArgs {
    pub fn weights(&self) -> Result<LossWeights> {
        let mut w = LossWeights::for_depth_normalization(self.dn);
        if let Some(a) = self.alpha {
            w.alpha = a;
        }
        if let Some(b) = self.beta {
            w.beta = b;
        }
        if let Some(g) = self.gamma {
            w.gamma = g;
        }
        w.num_scales = self.scales;
        w.validate()?;
        Ok(w)
    }

    pub fn eval_config(&self) -> DepthEvalConfig {
        DepthEvalConfig {
            cap: self.cap.parse().expect("restricted by parser"),
            median_scale: self.median_scale,
        }
    }

    fn check_rounds(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("--rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// A frame pair, either rendered from a preset or read from files.
#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// Render the pair from a named preset instead of reading files.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub x_t: Option<PathBuf>,
    #[arg(long)]
    pub x_tm1: Option<PathBuf>,
    #[arg(long)]
    pub d_t: Option<PathBuf>,
    #[arg(long)]
    pub d_tm1: Option<PathBuf>,
    /// JSON pose mapping frame-t camera points into the t−1 camera.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a preset pair with depths, poses, intrinsics and visibility labels.
    Synth {
        #[arg(long)]
        preset: String,
    },
    /// Inverse-warp each frame of a pair from the other.
    Warp(PairArgs),
    /// Two-way repeated masking: six masks, two reconstructions and a summary.
    Masks(PairArgs),
    /// Multi-scale masked loss of a pair.
    Loss(PairArgs),
    /// Refine frame-t depth with the pose held fixed.
    RefineDepth {
        #[command(flatten)]
        pair: PairArgs,
        /// Starting depth; defaults to the frame-t depth times --init-scale.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 1.2)]
        init_scale: f64,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Refine the relative pose with frame-t depth held fixed.
    RefinePose {
        #[command(flatten)]
        pair: PairArgs,
        /// Starting pose; defaults to the pair pose offset by --perturb.
        #[arg(long)]
        init_pose: Option<PathBuf>,
        /// Translation offset in meters, as x,y,z.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.05, 0.0, 0.0])]
        perturb: Vec<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Depth error and accuracy metrics.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Optional validity mask PNG; nonzero pixels are evaluated.
        #[arg(long)]
        valid: Option<PathBuf>,
    },
    /// Trajectory error over fixed-length snippets.
    EvalAte {
        /// JSON array of camera-to-world poses.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 5)]
        snippet: usize,
    },
}

struct Pair {
    preset: Option<Preset>,
    x_t: ImageBuffer,
    x_tm1: ImageBuffer,
    d_t: Option<DepthMap>,
    d_tm1: Option<DepthMap>,
    pose: PoseSE3,
    intr: Intrinsics,
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("missing --{flag} (or use --preset)")))
}

impl Pair {
    fn load(args: &PairArgs, seed: u64) -> Result<Self> {
        if let Some(name) = &args.preset {
            let p = preset(name.parse::<PresetName>()?, seed)?;
            let r = p.render()?;
            return Ok(Pair {
                x_t: r.x_t,
                x_tm1: r.x_tm1,
                d_t: Some(r.d_t),
                d_tm1: Some(r.d_tm1),
                pose: r.pose_t,
                intr: p.intrinsics,
                preset: Some(p),
            });
        }
        let depth = |p: &Option<PathBuf>| p.as_deref().map(io::read_depth_pfm).transpose();
        let pair = Pair {
            preset: None,
            x_t: io::read_image_png(required(&args.x_t, "x-t")?)?,
            x_tm1: io::read_image_png(required(&args.x_tm1, "x-tm1")?)?,
            d_t: depth(&args.d_t)?,
            d_tm1: depth(&args.d_tm1)?,
            pose: io::read_json(required(&args.pose, "pose")?)?,
            intr: io::read_json(required(&args.intrinsics, "intrinsics")?)?,
        };
        pair.x_t.same_shape(&pair.x_tm1)?;
        Ok(pair)
    }

    fn d_t(&self) -> Result<&DepthMap> {
        self.d_t
            .as_ref()
            .ok_or_else(|| Error::Config("missing --d-t (or use --preset)".into()))
    }

    fn d_tm1(&self) -> Result<&DepthMap> {
        self.d_tm1
            .as_ref()
            .ok_or_else(|| Error::Config("missing --d-tm1 (or use --preset)".into()))
    }
}

fn labels_png(labels: &VisibilityLabels) -> crate::grid::Grid<u8> {
    labels.map(|l: &Visibility| l.gray())
}

#[derive(Serialize)]
struct MaskCounts {
    edge: usize,
    overlap: usize,
    blank: usize,
    combined: usize,
}

impl MaskCounts {
    fn new(set: &MaskSet) -> Self {
        Self {
            edge: set.edge.count_ones(),
            overlap: set.overlap.count_ones(),
            blank: set.blank.count_ones(),
            combined: combine(set).count_ones(),
        }
    }
}

#[derive(Serialize)]
struct MasksSummary {
    width: usize,
    height: usize,
    rounds_requested: usize,
    rounds_run: usize,
    /// Pixels kept (value 1) by each mask.
    kept_t: MaskCounts,
    kept_tm1: MaskCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_t: Option<MaskAudit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_tm1: Option<MaskAudit>,
}

#[derive(Serialize)]
struct WarpSummary {
    samplable_t: usize,
    samplable_tm1: Option<usize>,
}

#[derive(Serialize)]
struct RefineSummary {
    target: &'static str,
    stop: StopReason,
    iterations: usize,
    initial_loss: f64,
    final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_rel_unscaled: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation_error: Option<[f64; 2]>,
}

fn refine_summary<T>(target: &'static str, out: &RefineOutput<T>) -> RefineSummary {
    RefineSummary {
        target,
        stop: out.stop,
        iterations: out.trace.last().map_or(0, |e| e.iter),
        initial_loss: out.trace.first().map_or(f64::NAN, |e| e.loss),
        final_loss: out.trace.last().map_or(f64::NAN, |e| e.loss),
        abs_rel_unscaled: None,
        translation_error: None,
    }
}

fn diverged(stop: StopReason) -> Result<()> {
    match stop {
        StopReason::Diverged { iter } => Err(Error::Divergence { iter }),
        _ => Ok(()),
    }
}

fn abs_rel_unscaled(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let cfg = DepthEvalConfig {
        cap: f64::INFINITY,
        median_scale: false,
    };
    Ok(depth_metrics(pred, gt, &Mask::ones(gt.width(), gt.height()), &cfg)?.abs_rel)
}

fn refine_config(
    base: RefineConfig,
    weights: LossWeights,
    iters: Option<usize>,
    step: Option<f64>,
) -> RefineConfig {
    let mut cfg = base;
    cfg.weights = weights;
    if let Some(n) = iters {
        cfg.max_iters = n;
    }
    if let Some(s) = step {
        cfg.step_size = s;
    }
    cfg
}

/// Runs one parsed invocation, writing all outputs under `--out`.
pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    g.check_rounds()?;
    let out = &g.out;
    fs::create_dir_all(out)?;
    match &cli.command {
        Command::Synth { preset: name } => {
            let p = preset(name.parse::<PresetName>()?, g.seed)?;
            let r = p.render()?;
            io::write_image_png(&out.join("x_t.png"), &r.x_t)?;
            io::write_image_png(&out.join("x_tm1.png"), &r.x_tm1)?;
            io::write_depth_pfm(&out.join("d_t.pfm"), &r.d_t)?;
            io::write_depth_pfm(&out.join("d_tm1.pfm"), &r.d_tm1)?;
            io::write_json(&out.join("pose.json"), &r.pose_t)?;
            io::write_json(&out.join("cameras.json"), &[p.camera_tm1, p.camera_t])?;
            io::write_json(&out.join("intrinsics.json"), &p.intrinsics)?;
            io::write_gray_png(&out.join("labels_t.png"), &labels_png(&p.labels_t()?))?;
            io::write_gray_png(&out.join("labels_tm1.png"), &labels_png(&p.labels_tm1()?))?;
        }
        Command::Warp(args) => {
            let pair = Pair::load(args, g.seed)?;
            let (recon_t, rec_t) = reconstruct(&pair.x_tm1, pair.d_t()?, &pair.pose, &pair.intr)?;
            io::write_image_png(&out.join("recon_t.png"), &recon_t)?;
            let mut summary = WarpSummary {
                samplable_t: count_samplable(&rec_t, pair.intr.dims()),
                samplable_tm1: None,
            };
            if let Some(d_tm1) = &pair.d_tm1 {
                let (recon_tm1, rec_tm1) =
                    reconstruct(&pair.x_t, d_tm1, &pair.pose.inverse(), &pair.intr)?;
                io::write_image_png(&out.join("recon_tm1.png"), &recon_tm1)?;
                summary.samplable_tm1 = Some(count_samplable(&rec_tm1, pair.intr.dims()));
            }
            io::write_json(&out.join("warp.json"), &summary)?;
        }
        Command::Masks(args) => {
            let pair = Pair::load(args, g.seed)?;
            let m = repeated_masking(
                &pair.x_t,
                &pair.x_tm1,
                pair.d_t()?,
                pair.d_tm1()?,
                &pair.pose,
                &pair.intr,
                g.rounds,
            )?;
            for (dir, set) in [("t", &m.masks_t), ("tm1", &m.masks_tm1)] {
                io::write_mask_png(&out.join(format!("mask_edge_{dir}.png")), &set.edge)?;
                io::write_mask_png(&out.join(format!("mask_overlap_{dir}.png")), &set.overlap)?;
                io::write_mask_png(&out.join(format!("mask_blank_{dir}.png")), &set.blank)?;
            }
            io::write_image_png(&out.join("recon_t.png"), &m.recon_t)?;
            io::write_image_png(&out.join("recon_tm1.png"), &m.recon_tm1)?;
            let audit = |labels: Result<VisibilityLabels>, set: &MaskSet| -> Result<MaskAudit> {
                MaskAudit::new(&labels?, &combine(set))
            };
            let (oracle_t, oracle_tm1) = match &pair.preset {
                Some(p) => (
                    Some(audit(p.labels_t(), &m.masks_t)?),
                    Some(audit(p.labels_tm1(), &m.masks_tm1)?),
                ),
                None => (None, None),
            };
            let (w, h) = pair.intr.dims();
            io::write_json(
                &out.join("masks.json"),
                &MasksSummary {
                    width: w,
                    height: h,
                    rounds_requested: g.rounds,
                    rounds_run: m.rounds_run,
                    kept_t: MaskCounts::new(&m.masks_t),
                    kept_tm1: MaskCounts::new(&m.masks_tm1),
                    oracle_t,
                    oracle_tm1,
                },
            )?;
        }
        Command::Loss(args) => {
            let pair = Pair::load(args, g.seed)?;
            let weights = g.weights()?;
            let (d_t, d_tm1) = (pair.d_t()?, pair.d_tm1()?);
            let m = repeated_masking(
                &pair.x_t,
                &pair.x_tm1,
                d_t,
                d_tm1,
                &pair.pose,
                &pair.intr,
                g.rounds,
            )?;
            let (m_t, m_tm1) = (combine(&m.masks_t), combine(&m.masks_tm1));
            let report = loss_from_parts(
                DirectionInputs {
                    image: &pair.x_t,
                    recon: &m.recon_t,
                    mask: &m_t,
                    depth: d_t,
                },
                DirectionInputs {
                    image: &pair.x_tm1,
                    recon: &m.recon_tm1,
                    mask: &m_tm1,
                    depth: d_tm1,
                },
                &weights,
                g.dn,
            )?;
            io::write_json(&out.join("loss.json"), &report)?;
        }
        Command::RefineDepth {
            pair: args,
            init,
            init_scale,
            iters,
            step,
        } => {
            let pair = Pair::load(args, g.seed)?;
            let initial = match init {
                Some(p) => io::read_depth_pfm(p)?,
                None => pair.d_t()?.scaled(*init_scale)?,
            };
            let mut cfg = refine_config(RefineConfig::depth(), g.weights()?, *iters, *step);
            cfg.depth_normalization = g.dn;
            let res = refine_depth(
                &initial,
                &pair.x_t,
                &pair.x_tm1,
                &pair.pose,
                &pair.intr,
                &cfg,
            )?;
            fs::write(out.join("trace.csv"), res.trace_csv())?;
            diverged(res.stop)?;
            io::write_depth_pfm(&out.join("depth.pfm"), &res.estimate)?;
            let mut summary = refine_summary("depth", &res);
            if let Some(gt) = &pair.d_t {
                summary.abs_rel_unscaled = Some([
                    abs_rel_unscaled(&initial, gt)?,
                    abs_rel_unscaled(&res.estimate, gt)?,
                ]);
            }
            io::write_json(&out.join("refine.json"), &summary)?;
        }
        Command::RefinePose {
            pair: args,
            init_pose,
            perturb,
            iters,
            step,
        } => {
            let pair = Pair::load(args, g.seed)?;
            let initial = match init_pose {
                Some(p) => io::read_json(p)?,
                None => {
                    if perturb.len() != 3 {
                        return Err(Error::Config(format!(
                            "--perturb takes x,y,z, got {} values",
                            perturb.len()
                        )));
                    }
                    let offset = Vector3::new(perturb[0], perturb[1], perturb[2]);
                    PoseSE3::from_translation(offset).compose(&pair.pose)
                }
            };
            let cfg = refine_config(RefineConfig::pose(), g.weights()?, *iters, *step);
            let res = refine_pose(
                &initial,
                pair.d_t()?,
                &pair.x_t,
                &pair.x_tm1,
                &pair.intr,
                &cfg,
            )?;
            fs::write(out.join("trace.csv"), res.trace_csv())?;
            diverged(res.stop)?;
            io::write_json(&out.join("pose.json"), &res.estimate)?;
            let mut summary = refine_summary("pose", &res);
            let err = |p: &PoseSE3| (p.translation() - pair.pose.translation()).norm();
            summary.translation_error = Some([err(&initial), err(&res.estimate)]);
            io::write_json(&out.join("refine.json"), &summary)?;
        }
        Command::EvalDepth { pred, gt, valid } => {
            let pred = io::read_depth_pfm(pred)?;
            let gt = io::read_depth_pfm(gt)?;
            let valid = match valid {
                Some(p) => io::read_mask_png(p)?,
                None => Mask::ones(gt.width(), gt.height()),
            };
            let m = depth_metrics(&pred, &gt, &valid, &g.eval_config())?;
            io::write_json(&out.join("depth_metrics.json"), &m)?;
        }
        Command::EvalAte { pred, gt, snippet } => {
            let pred: Vec<PoseSE3> = io::read_json(pred)?;
            let gt: Vec<PoseSE3> = io::read_json(gt)?;
            let stats = ate_snippets(&pred, &gt, *snippet)?;
            io::write_json(&out.join("ate.json"), &stats)?;
        }
    }
    Ok(())
}

fn count_samplable(record: &crate::warp::ProjectionRecord, bounds: (usize, usize)) -> usize {
    record
        .coords()
        .iter()
        .zip(record.valid())
        .filter(|(c, &ok)| ok && crate::warp::footprint((c[0], c[1]), bounds).samplable())
        .count()
}

/// Parses arguments and runs. Usage errors carry kind `usage`; `--help` and
/// `--version` are returned as `Ok(Some(text))`.
pub fn run_from<I, T>(args: I) -> Result<Option<String>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli).map(|_| None),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                Ok(Some(e.to_string()))
            }
            _ => Err(Error::Usage(first_line(&e.to_string()))),
        },
    }
}

fn first_line(s: &str) -> String {
    let line = s
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("invalid arguments");
    line.trim_start_matches("error: ").trim().to_string()
}

/// Single-line error report: `error[<kind>]: <message>`.
pub fn format_error(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error[{}]: {}", e.kind(), msg)
}
