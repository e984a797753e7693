//! Command-line front end. [`main_with_args`] returns the process exit code
//! so every command can also be driven in-process.
//!
//! Exit codes: 0 success, 2 usage, 3 parse or I/O failure, 4 numerical
//! precondition failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;
use sha2::{Digest, Sha256};

use crate::adrp::{overlap_metrics, DepthRange};
use crate::config::{PipelineConfig, RangeSource, KEYS};
use crate::error::{Error, ErrorKind, Result};
use crate::fusion::{default_merge_radius, fuse, geometric_consistency};
use crate::grid::{DepthMap, Map2};
use crate::io::pfm::{read_map_pfm, read_pfm, write_map_pfm, write_pfm};
use crate::io::ply::{read_ply, write_ply};
use crate::io::scene::view_name;
use crate::io::synth::Texture;
use crate::io::{read_scene, synth_scene, write_scene, SceneBundle, SynthSceneSpec};
use crate::metrics::{cloud_metrics, depth_errors, pnumd, relative_inliers};
use crate::pipeline::{gt_pyramid, gt_range, reconstruct, stage_metric, ViewReconstruction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const DEFAULT_PNUMD_TOL: f64 = 0.1;
pub const DEFAULT_INLIER_RATIO: f64 = 0.01;
/// Start and step of the fixed-range ablation `[start, start + step * N]`.
pub const DEFAULT_FIXED_START: f64 = 425.0;
pub const DEFAULT_FIXED_STEP: f64 = 2.5;

pub const ABLATION_MODES: &[&str] = &[
    "fixed_range_32",
    "fixed_range_128",
    "fixed_range_512",
    "adrp",
    "no_adia",
    "linear_adia",
];

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::ParseOrIo => EXIT_PARSE_IO,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn key_help(key: &str) -> &'static str {
    match key {
        "planes" => "Depth hypotheses per stage (1 or 4 comma-separated values)",
        "range_sources" => "Range source per stage: fixed, adrp, adia or pixel_equal",
        "temperatures" => "Softmax temperature per stage",
        "reg_radius" => "Cost regularization box radius per stage",
        "reg_passes" => "Cost regularization passes per stage",
        "depth_min" => "Stage-1 sweep start; overrides camera hints",
        "depth_max" => "Stage-1 sweep end; overrides camera hints",
        "alpha" => "Range scalar applied at the nearest depth",
        "beta" => "Range scalar applied at the farthest depth",
        "adia_mode" => "Offset scores: zscore or linear",
        "census_window" => "Census window side, odd",
        "robust_extremes" => "Fraction of depths trimmed at each end before range adjustment",
        "max_sources" => "Source views per reference; 0 uses all",
        "stage_weights" => "Per-stage weights of the stage metric",
        "max_reproj_err" => "Fusion: round-trip reprojection limit in pixels",
        "max_rel_depth_diff" => "Fusion: relative depth disagreement limit",
        "min_consistent_views" => "Fusion: agreeing source views needed to keep a pixel",
        "min_confidence" => "Fusion: confidence needed to keep a pixel",
        "merge_radius" => "Fusion: point merge radius; 0 derives one from the data",
        "seed" => "Seed recorded in the manifest",
        "threads" => "Worker threads; 0 uses every core",
        "calibration_scenes" => "Comma-separated scenes used to fit alpha and beta",
        _ => "",
    }
}

fn config_args(cmd: Command) -> Command {
    let mut cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Config file of `key = value` lines; flags override it"),
    );
    for key in KEYS {
        let mut arg = Arg::new(*key)
            .long(key.replace('_', "-"))
            .value_name("VALUE")
            .help(key_help(key));
        if key.contains('_') {
            arg = arg.alias(*key);
        }
        if *key == "temperatures" {
            arg = arg.alias("temperature");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .required(true)
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

fn threads_arg() -> Arg {
    Arg::new("threads")
        .long("threads")
        .value_name("N")
        .value_parser(clap::value_parser!(usize))
        .help("Worker threads; 0 uses every core")
}

fn metric_args(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("pnumd_tol")
            .long("pnumd-tol")
            .value_name("UNITS")
            .value_parser(clap::value_parser!(f64))
            .default_value("0.1")
            .help("Absolute tolerance of the near-ground-truth percentage"),
    )
    .arg(
        Arg::new("inlier_ratio")
            .long("inlier-ratio")
            .value_name("RATIO")
            .value_parser(clap::value_parser!(f64))
            .default_value("0.01")
            .help("Relative error bound of the inlier percentage"),
    )
}

pub fn command() -> Command {
    Command::new("adaptive-mvs")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Coarse-to-fine multi-view stereo with adaptive depth ranges")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("synth")
                .about("Render a synthetic scene with ground truth")
                .arg(path_arg("out", "Scene directory to create"))
                .arg(
                    Arg::new("geometry")
                        .long("geometry")
                        .default_value("sphere")
                        .value_parser(["plane", "slanted_plane", "sphere", "two_planes", "wedge"]),
                )
                .arg(
                    Arg::new("views")
                        .long("views")
                        .default_value("5")
                        .value_parser(clap::value_parser!(usize)),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .default_value("0")
                        .value_parser(clap::value_parser!(u64)),
                )
                .arg(
                    Arg::new("near")
                        .long("near")
                        .default_value("20")
                        .value_parser(clap::value_parser!(f64)),
                )
                .arg(
                    Arg::new("far")
                        .long("far")
                        .default_value("40")
                        .value_parser(clap::value_parser!(f64)),
                )
                .arg(
                    Arg::new("width")
                        .long("width")
                        .default_value("80")
                        .value_parser(clap::value_parser!(usize)),
                )
                .arg(
                    Arg::new("height")
                        .long("height")
                        .default_value("64")
                        .value_parser(clap::value_parser!(usize)),
                )
                .arg(
                    Arg::new("texture")
                        .long("texture")
                        .default_value("noise")
                        .value_parser(["noise", "checker"]),
                )
                .arg(threads_arg()),
        )
        .subcommand(config_args(
            Command::new("reconstruct")
                .about("Estimate a depth map for every view")
                .arg(path_arg("scene", "Scene directory"))
                .arg(path_arg("out", "Output directory"))
                .arg(
                    Arg::new("references")
                        .long("references")
                        .value_name("IDS")
                        .help("Comma-separated reference views; default all"),
                ),
        ))
        .subcommand(config_args(
            Command::new("fuse")
                .about("Filter depth maps by cross-view consistency and fuse them into a point cloud")
                .arg(path_arg("scene", "Scene directory"))
                .arg(path_arg("depth", "Output directory of `reconstruct`"))
                .arg(path_arg("out", "Output directory")),
        ))
        .subcommand(metric_args(
            Command::new("eval")
                .about("Score depth maps and point clouds against ground truth")
                .arg(path_arg("scene", "Scene directory with ground truth"))
                .arg(
                    Arg::new("depth")
                        .long("depth")
                        .value_name("PATH")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("Output directory of `reconstruct`"),
                )
                .arg(
                    Arg::new("cloud")
                        .long("cloud")
                        .value_name("PATH")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("Point cloud to score"),
                )
                .arg(
                    Arg::new("tau")
                        .long("tau")
                        .value_name("UNITS")
                        .value_parser(clap::value_parser!(f64))
                        .help("Point-cloud distance threshold; default 1% of the median true depth"),
                )
                .arg(
                    Arg::new("range")
                        .long("range")
                        .value_name("LO:HI")
                        .action(ArgAction::Append)
                        .help("Depth range to score against each view's true range"),
                )
                .arg(path_arg("out", "Metrics CSV to write"))
                .arg(threads_arg()),
        ))
        .subcommand(metric_args(config_args(
            Command::new("ablate")
                .about("Compare the configured pipeline with one ablated variant")
                .arg(path_arg("scene", "Scene directory with ground truth"))
                .arg(
                    Arg::new("mode")
                        .long("mode")
                        .required(true)
                        .value_parser(ABLATION_MODES.to_vec()),
                )
                .arg(path_arg("out", "Output directory"))
                .arg(
                    Arg::new("fixed_start")
                        .long("fixed-start")
                        .value_parser(clap::value_parser!(f64))
                        .default_value("425"),
                )
                .arg(
                    Arg::new("fixed_step")
                        .long("fixed-step")
                        .value_parser(clap::value_parser!(f64))
                        .default_value("2.5"),
                ),
        )))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&matches) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let args = recorded_args(sub);
    match name {
        "synth" => with_threads(sub.get_one::<usize>("threads").copied().unwrap_or(0), || {
            cmd_synth(sub, &args)
        }),
        "reconstruct" => {
            let cfg = resolve_config(sub)?;
            with_threads(cfg.threads, || cmd_reconstruct(sub, &cfg, &args))
        }
        "fuse" => {
            let cfg = resolve_config(sub)?;
            with_threads(cfg.threads, || cmd_fuse(sub, &cfg, &args))
        }
        "eval" => with_threads(sub.get_one::<usize>("threads").copied().unwrap_or(0), || cmd_eval(sub)),
        "ablate" => {
            let cfg = resolve_config(sub)?;
            with_threads(cfg.threads, || cmd_ablate(sub, &cfg, &args))
        }
        other => Err(usage(format!("unknown command {other}"))),
    }
}

/// Explicitly given flags in a stable order, for the manifest.
fn recorded_args(m: &ArgMatches) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for id in m.ids() {
        let id = id.as_str();
        if m.value_source(id) != Some(clap::parser::ValueSource::CommandLine) {
            continue;
        }
        if let Ok(Some(values)) = m.try_get_raw(id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            out.push((id.to_string(), joined.join(" ")));
        }
    }
    out.sort();
    out
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(f)
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_config(m: &ArgMatches) -> Result<PipelineConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Plain `key = value` record of a run, written next to its outputs.
pub struct RunManifest {
    pub command: String,
    pub args: Vec<(String, String)>,
    pub seed: u64,
    pub config_path: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
    pub extra: Vec<(String, String)>,
}

impl RunManifest {
    fn new(command: &str, args: &[(String, String)], seed: u64) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            seed,
            config_path: None,
            metrics_csv: None,
            timings: Vec::new(),
            outputs: Vec::new(),
            extra: Vec::new(),
        }
    }

    /// Output paths are written relative to `root` with their SHA-256.
    pub fn render(&self, root: &Path) -> Result<String> {
        let rel = |p: &Path| p.strip_prefix(root).unwrap_or(p).display().to_string();
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.args {
            let _ = writeln!(s, "arg.{k} = {v}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(p) = &self.config_path {
            let _ = writeln!(s, "config = {}", rel(p));
        }
        if let Some(p) = &self.metrics_csv {
            let _ = writeln!(s, "metrics_csv = {}", rel(p));
        }
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, ms) in &self.timings {
            let _ = writeln!(s, "time.{k}_ms = {ms:.3}");
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output.{} = {}", rel(p), sha256_file(p)?);
        }
        Ok(s)
    }

    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let path = root.join("manifest.txt");
        write_text(&path, &self.render(root)?)?;
        Ok(path)
    }
}

/// Rows of `metric,scene,view,value`.
#[derive(Debug, Default)]
pub struct MetricsTable {
    rows: Vec<(String, String, String, f64)>,
}

impl MetricsTable {
    pub fn push(&mut self, metric: impl Into<String>, scene: &str, view: impl Into<String>, value: f64) {
        self.rows.push((metric.into(), scene.to_string(), view.into(), value));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,scene,view,value\n");
        for (m, sc, v, x) in &self.rows {
            let _ = writeln!(s, "{m},{sc},{v},{x}");
        }
        s
    }

    /// Writes the table; the parent directory must already exist.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

fn scene_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| "scene".into())
}

fn cmd_synth(m: &ArgMatches, args: &[(String, String)]) -> Result<()> {
    let out = m.get_one::<PathBuf>("out").expect("required");
    let geometry = m.get_one::<String>("geometry").expect("defaulted");
    let seed = *m.get_one::<u64>("seed").expect("defaulted");
    let mut spec = SynthSceneSpec::preset_sized(
        geometry,
        *m.get_one::<f64>("near").expect("defaulted"),
        *m.get_one::<f64>("far").expect("defaulted"),
        *m.get_one::<usize>("views").expect("defaulted"),
        seed,
        *m.get_one::<usize>("width").expect("defaulted"),
        *m.get_one::<usize>("height").expect("defaulted"),
    )?;
    if m.get_one::<String>("texture").map(String::as_str) == Some("checker") {
        let cell = match spec.texture {
            Texture::Noise { cell, .. } | Texture::Checker { cell } => cell / 4.0,
        };
        spec.texture = Texture::Checker { cell };
    }
    let start = Instant::now();
    let scene = synth_scene(&spec)?;
    create_dir(out)?;
    let written = write_scene(out, &scene)?;
    let mut manifest = RunManifest::new("synth", args, seed);
    manifest
        .timings
        .push(("render".into(), start.elapsed().as_secs_f64() * 1e3));
    manifest.outputs = written;
    manifest.write(out)?;
    info!("wrote {} views to {}", scene.len(), out.display());
    Ok(())
}

fn parse_ids(text: &str, count: usize) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            let id: usize = t.trim().parse().map_err(|_| usage(format!("bad view id {t:?}")))?;
            if id >= count {
                return Err(usage(format!("view {id} out of range for {count} views")));
            }
            Ok(id)
        })
        .collect()
}

fn depth_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("depth").join(format!("{}.pfm", view_name(i)))
}

fn confidence_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("confidence").join(format!("{}.pfm", view_name(i)))
}

/// Fits the range scalars on the configured calibration scenes, if any.
fn calibrated(cfg: &PipelineConfig) -> Result<PipelineConfig> {
    let mut cfg = cfg.clone();
    if !cfg.calibration_scenes.is_empty() {
        let scenes = cfg
            .calibration_scenes
            .iter()
            .map(|p| read_scene(p))
            .collect::<Result<Vec<_>>>()?;
        cfg.scalars = crate::pipeline::calibrate_on_scenes(&scenes, &cfg)?;
        info!("calibrated range scalars: {:?}", cfg.scalars);
    }
    Ok(cfg)
}

/// Per-view depth metrics of one result against ground truth.
#[allow(clippy::too_many_arguments)]
fn push_view_metrics(
    table: &mut MetricsTable,
    prefix: &str,
    scene: &str,
    rec: &ViewReconstruction,
    gt: &DepthMap,
    cfg: &PipelineConfig,
    pnumd_tol: f64,
    inlier_ratio: f64,
) -> Result<()> {
    let view = view_name(rec.reference);
    let e = depth_errors(&rec.depth, gt)?;
    table.push(format!("{prefix}epe"), scene, view.as_str(), e.epe);
    table.push(format!("{prefix}e1"), scene, view.as_str(), e.e1);
    table.push(format!("{prefix}e3"), scene, view.as_str(), e.e3);
    table.push(
        format!("{prefix}pnumd"),
        scene,
        view.as_str(),
        pnumd(&rec.depth, gt, pnumd_tol)?,
    );
    table.push(
        format!("{prefix}inliers"),
        scene,
        view.as_str(),
        relative_inliers(&rec.depth, gt, inlier_ratio)?,
    );
    let levels = gt_pyramid(gt);
    table.push(
        format!("{prefix}stage_metric"),
        scene,
        view.as_str(),
        stage_metric(&rec.stages, &levels, &cfg.stage_weights)?,
    );
    if let Some(s2) = rec.stages.get(1) {
        let o = overlap_metrics(&gt_range(gt)?, &s2.range);
        table.push(format!("{prefix}aog"), scene, view.as_str(), o.aog);
        table.push(format!("{prefix}aos"), scene, view.as_str(), o.aos);
    }
    Ok(())
}

fn cmd_reconstruct(m: &ArgMatches, cfg: &PipelineConfig, args: &[(String, String)]) -> Result<()> {
    let scene_dir = m.get_one::<PathBuf>("scene").expect("required");
    let out = m.get_one::<PathBuf>("out").expect("required");
    let scene = read_scene(scene_dir)?;
    let refs = match m.get_one::<String>("references") {
        Some(t) => Some(parse_ids(t, scene.len())?),
        None => None,
    };
    let cfg = calibrated(cfg)?;
    let start = Instant::now();
    let results = reconstruct(&scene, &cfg, refs.as_deref())?;
    let total = start.elapsed().as_secs_f64() * 1e3;
    create_dir(&out.join("depth"))?;
    create_dir(&out.join("confidence"))?;
    let mut manifest = RunManifest::new("reconstruct", args, cfg.seed);
    for r in &results {
        let d = depth_path(out, r.reference);
        let c = confidence_path(out, r.reference);
        write_pfm(&d, &r.depth)?;
        write_map_pfm(&c, &r.confidence)?;
        manifest.outputs.extend([d, c]);
        for (k, ms) in r.stage_millis.iter().enumerate() {
            manifest
                .timings
                .push((format!("view.{}.stage{}", view_name(r.reference), k + 1), *ms));
        }
        for (k, s) in r.stages.iter().enumerate() {
            manifest.extra.push((
                format!("range.{}.stage{}", view_name(r.reference), k + 1),
                format!("{} {}", s.range.d_min, s.range.d_max),
            ));
        }
    }
    manifest.timings.push(("total".into(), total));
    let config_path = out.join("config.txt");
    write_text(&config_path, &cfg.to_text())?;
    manifest.config_path = Some(config_path.clone());
    manifest.outputs.push(config_path);
    if let Some(gt) = &scene.gt_depths {
        let mut table = MetricsTable::default();
        let name = scene_name(scene_dir);
        for r in &results {
            push_view_metrics(
                &mut table,
                "",
                &name,
                r,
                &gt[r.reference],
                &cfg,
                DEFAULT_PNUMD_TOL,
                DEFAULT_INLIER_RATIO,
            )?;
        }
        let csv = out.join("metrics.csv");
        table.write(&csv)?;
        manifest.outputs.push(csv.clone());
        manifest.metrics_csv = Some(csv);
    }
    manifest.write(out)?;
    info!("reconstructed {} views in {:.1} ms", results.len(), total);
    Ok(())
}

fn read_depths(scene: &SceneBundle, dir: &Path) -> Result<(Vec<DepthMap>, Vec<Map2>)> {
    let mut depths = Vec::with_capacity(scene.len());
    let mut confs = Vec::with_capacity(scene.len());
    for i in 0..scene.len() {
        let d = read_pfm(&depth_path(dir, i))?;
        let cpath = confidence_path(dir, i);
        let c = if cpath.is_file() {
            read_map_pfm(&cpath)?
        } else {
            Map2::filled(d.width, d.height, 1.0)
        };
        depths.push(d);
        confs.push(c);
    }
    Ok((depths, confs))
}

fn cmd_fuse(m: &ArgMatches, cfg: &PipelineConfig, args: &[(String, String)]) -> Result<()> {
    let scene = read_scene(m.get_one::<PathBuf>("scene").expect("required"))?;
    let depth_dir = m.get_one::<PathBuf>("depth").expect("required");
    let out = m.get_one::<PathBuf>("out").expect("required");
    let (depths, confs) = read_depths(&scene, depth_dir)?;
    let start = Instant::now();
    let masks = geometric_consistency(&depths, &confs, &scene.views, &cfg.fusion)?;
    let radius = if cfg.merge_radius > 0.0 {
        cfg.merge_radius
    } else {
        default_merge_radius(&depths, &scene.views)
    };
    let cloud = fuse(&depths, &masks, &scene.images, &scene.views, radius)?;
    create_dir(out)?;
    let ply = out.join("cloud.ply");
    write_ply(&ply, &cloud)?;
    let mut manifest = RunManifest::new("fuse", args, cfg.seed);
    manifest
        .timings
        .push(("fuse".into(), start.elapsed().as_secs_f64() * 1e3));
    manifest.extra.push(("points".into(), cloud.len().to_string()));
    manifest.extra.push(("merge_radius".into(), radius.to_string()));
    let config_path = out.join("config.txt");
    write_text(&config_path, &cfg.to_text())?;
    manifest.config_path = Some(config_path.clone());
    manifest.outputs = vec![ply, config_path];
    manifest.write(out)?;
    info!("fused {} points", cloud.len());
    Ok(())
}

fn parse_range(text: &str) -> Result<DepthRange> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("range {text:?} is not LO:HI")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("bad range bound {t:?}")))
    };
    DepthRange::new(parse(lo)?, parse(hi)?)
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let scene_dir = m.get_one::<PathBuf>("scene").expect("required");
    let out = m.get_one::<PathBuf>("out").expect("required");
    let scene = read_scene(scene_dir)?;
    let gt = scene
        .gt_depths
        .as_ref()
        .ok_or_else(|| usage(format!("{} has no ground truth", scene_dir.display())))?;
    let ranges = m
        .get_many::<String>("range")
        .into_iter()
        .flatten()
        .map(|t| Ok((t.clone(), parse_range(t)?)))
        .collect::<Result<Vec<_>>>()?;
    let tol = *m.get_one::<f64>("pnumd_tol").expect("defaulted");
    let ratio = *m.get_one::<f64>("inlier_ratio").expect("defaulted");
    let name = scene_name(scene_dir);
    let mut table = MetricsTable::default();
    for (i, g) in gt.iter().enumerate() {
        let truth = gt_range(g)?;
        for (label, r) in &ranges {
            let o = overlap_metrics(&truth, r);
            table.push(format!("aog[{label}]"), &name, view_name(i), o.aog);
            table.push(format!("aos[{label}]"), &name, view_name(i), o.aos);
        }
    }
    if let Some(dir) = m.get_one::<PathBuf>("depth") {
        let (sums, n) = {
            let mut sums = [0.0; 5];
            let mut n = 0usize;
            for (i, g) in gt.iter().enumerate() {
                let path = depth_path(dir, i);
                if !path.is_file() {
                    continue;
                }
                let pred = read_pfm(&path)?;
                let e = depth_errors(&pred, g)?;
                let vals = [
                    e.epe,
                    e.e1,
                    e.e3,
                    pnumd(&pred, g, tol)?,
                    relative_inliers(&pred, g, ratio)?,
                ];
                for (k, (metric, v)) in ["epe", "e1", "e3", "pnumd", "inliers"].iter().zip(vals).enumerate() {
                    table.push(*metric, &name, view_name(i), v);
                    sums[k] += v;
                }
                n += 1;
            }
            (sums, n)
        };
        if n == 0 {
            return Err(Error::io(
                dir.join("depth"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no depth maps"),
            ));
        }
        for (metric, s) in ["epe", "e1", "e3", "pnumd", "inliers"].iter().zip(sums) {
            table.push(*metric, &name, "mean", s / n as f64);
        }
    }
    if let Some(path) = m.get_one::<PathBuf>("cloud") {
        let pred = read_ply(path)?;
        let masks: Vec<Vec<bool>> = gt.iter().map(|g| g.valid.clone()).collect();
        let truth = fuse(
            gt,
            &masks,
            &scene.images,
            &scene.views,
            default_merge_radius(gt, &scene.views),
        )?;
        let tau = match m.get_one::<f64>("tau") {
            Some(t) => *t,
            None => {
                0.01 * median(
                    gt.iter()
                        .flat_map(|g| g.data.iter().zip(&g.valid).filter(|(_, v)| **v).map(|(d, _)| *d))
                        .collect(),
                )
            }
        };
        let r = cloud_metrics(&pred, &truth, tau)?;
        for (metric, v) in [
            ("acc", r.acc),
            ("comp", r.comp),
            ("overall", r.overall),
            ("precision", r.precision),
            ("recall", r.recall),
            ("f_score", r.f_score),
        ] {
            table.push(metric, &name, "all", v);
        }
    }
    table.write(out)
}

/// The configuration of an ablated variant.
pub fn ablation_config(base: &PipelineConfig, mode: &str, fixed_start: f64, fixed_step: f64) -> Result<PipelineConfig> {
    let mut cfg = base.clone();
    match mode {
        "fixed_range_32" | "fixed_range_128" | "fixed_range_512" => {
            let n: f64 = mode["fixed_range_".len()..].parse().expect("mode names are fixed");
            cfg.depth_range = Some(DepthRange::new(fixed_start, fixed_start + fixed_step * n)?);
            cfg.stages[1].range_source = RangeSource::Fixed;
        }
        "adrp" => cfg.stages[1].range_source = RangeSource::Adrp,
        "no_adia" => {
            for s in &mut cfg.stages[2..] {
                s.range_source = RangeSource::PixelEqual;
            }
        }
        "linear_adia" => cfg.adia_mode = crate::adia::OffsetMode::Linear,
        other => return Err(usage(format!("unknown ablation mode {other}"))),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_ablate(m: &ArgMatches, cfg: &PipelineConfig, args: &[(String, String)]) -> Result<()> {
    let scene_dir = m.get_one::<PathBuf>("scene").expect("required");
    let out = m.get_one::<PathBuf>("out").expect("required");
    let mode = m.get_one::<String>("mode").expect("required");
    let tol = *m.get_one::<f64>("pnumd_tol").expect("defaulted");
    let ratio = *m.get_one::<f64>("inlier_ratio").expect("defaulted");
    let scene = read_scene(scene_dir)?;
    let gt = scene
        .gt_depths
        .clone()
        .ok_or_else(|| usage(format!("{} has no ground truth", scene_dir.display())))?;
    let base = calibrated(cfg)?;
    let variant = ablation_config(
        &base,
        mode,
        *m.get_one::<f64>("fixed_start").expect("defaulted"),
        *m.get_one::<f64>("fixed_step").expect("defaulted"),
    )?;
    let name = scene_name(scene_dir);
    let mut table = MetricsTable::default();
    let mut manifest = RunManifest::new("ablate", args, base.seed);
    for (label, c) in [("default", &base), (mode.as_str(), &variant)] {
        let start = Instant::now();
        let results = reconstruct(&scene, c, None)?;
        manifest
            .timings
            .push((label.to_string(), start.elapsed().as_secs_f64() * 1e3));
        for r in &results {
            push_view_metrics(
                &mut table,
                &format!("{label}/"),
                &name,
                r,
                &gt[r.reference],
                c,
                tol,
                ratio,
            )?;
        }
    }
    create_dir(out)?;
    let csv = out.join("metrics.csv");
    table.write(&csv)?;
    let config_path = out.join("config.txt");
    write_text(&config_path, &base.to_text())?;
    manifest.config_path = Some(config_path.clone());
    manifest.metrics_csv = Some(csv.clone());
    manifest.outputs = vec![csv, config_path];
    manifest.write(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(ErrorKind::Usage), 2);
        assert_eq!(exit_code(ErrorKind::ParseOrIo), 3);
        assert_eq!(exit_code(ErrorKind::Numerical), 4);
    }

    #[test]
    fn unknown_mode_is_a_usage_error() {
        let code = main_with_args([
            "adaptive-mvs",
            "ablate",
            "--scene",
            "x",
            "--out",
            "y",
            "--mode",
            "bogus",
        ]);
        assert_eq!(code, EXIT_USAGE);
        assert!(ablation_config(&PipelineConfig::default(), "bogus", 425.0, 2.5).is_err());
    }

    #[test]
    fn ablation_configs() {
        let base = PipelineConfig::default();
        let c = ablation_config(&base, "fixed_range_128", 425.0, 2.5).unwrap();
        assert_eq!(
            c.depth_range,
            Some(DepthRange {
                d_min: 425.0,
                d_max: 745.0
            })
        );
        assert_eq!(c.stages[1].range_source, RangeSource::Fixed);
        let c = ablation_config(&base, "no_adia", 425.0, 2.5).unwrap();
        assert_eq!(c.stages[3].range_source, RangeSource::PixelEqual);
        let c = ablation_config(&base, "linear_adia", 425.0, 2.5).unwrap();
        assert_eq!(c.adia_mode, crate::adia::OffsetMode::Linear);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        fs::write(&file, "planes = 8,32,8,4\ntemperatures = 0.5\n").unwrap();
        let m = command()
            .try_get_matches_from([
                "adaptive-mvs",
                "reconstruct",
                "--scene",
                "s",
                "--out",
                "o",
                "--config",
                file.to_str().unwrap(),
                "--planes",
                "16,64,16,8",
            ])
            .unwrap();
        let cfg = resolve_config(m.subcommand().unwrap().1).unwrap();
        assert_eq!(cfg.stages.map(|s| s.planes), [16, 64, 16, 8]);
        assert!(cfg.stages.iter().all(|s| s.temperature == 0.5));
    }

    #[test]
    fn csv_layout() {
        let mut t = MetricsTable::default();
        t.push("epe", "s", "00000000", 0.5);
        assert_eq!(t.to_csv(), "metric,scene,view,value\nepe,s,00000000,0.5\n");
    }

    #[test]
    fn range_parsing() {
        assert_eq!(
            parse_range("425:745").unwrap(),
            DepthRange {
                d_min: 425.0,
                d_max: 745.0
            }
        );
        assert!(parse_range("425").is_err());
        assert!(parse_range("9:1").is_err());
    }
}
