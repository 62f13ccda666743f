//! The `wheelplan` command line: scene generation, costmap construction,
//! planning, dataset labeling, losses, navigation, evaluation and rendering.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use wheelplan::costmap::{load_costmap, perceive, BuildOptions, Costmap, RobotFootprint};
use wheelplan::evaluation::{
    bin_by_quality, bins_to_text, evaluate_suite, summarize, trend_slope, EvalRecord, EvalSample, SuiteResult,
    DEFAULT_BINS,
};
use wheelplan::geometry::{mix_seed, Point2, Pose2D};
use wheelplan::labels::{
    generate_dataset, manifest_path, parse_manifest, BinaryMask, DatasetConfig, SplitRatio,
};
use wheelplan::navigation::{corridor_world, open_world, simulate_navigation, NavConfig, NavigationReport, Scenario};
use wheelplan::planeloss::{combined_losses, fit_mask_plane, loss_ep, loss_er, loss_ip, loss_ir, LossWeights};
use wheelplan::planners::{load_path, plan_to_goal, Algorithm, PlannerParams};
use wheelplan::render::{render_ppm, render_svg, Overlay, GOAL_RGB};
use wheelplan::scene::{
    encode_depth_pgm, encode_semantic_pgm, generate_scene, load_camera, load_depth, load_semantic, random_scene,
    CameraModel, NoiseSpec, RgbRef, SceneSpec,
};
use wheelplan::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "WHEELPLAN_THREADS";

const DEPTH_SCALE: f64 = 0.001;

#[derive(Parser, Debug)]
#[command(name = "wheelplan", version, about = "Goal-directed wheelchair path planning toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate random synthetic scenes and their renders.
    GenScenes(GenScenesArgs),
    /// Build a costmap from a depth and a semantic image.
    BuildCostmap(BuildCostmapArgs),
    /// Plan a 25-node path on a costmap.
    Plan(PlanArgs),
    /// Label scenes with planned paths and write a dataset manifest.
    GenDataset(GenDatasetArgs),
    /// Evaluate the training losses for a prediction against a label.
    Losses(LossesArgs),
    /// Simulate closed-loop navigation with intermediate goals.
    Navigate(NavigateArgs),
    /// Tabulate success rate and turning cost per planner.
    Evaluate(EvaluateArgs),
    /// Draw a costmap with path overlays as PPM or SVG.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
pub struct CameraArg {
    /// Camera configuration file; the built-in wheelchair camera otherwise.
    #[arg(long)]
    pub camera: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenScenesArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Depth noise standard deviation, meters.
    #[arg(long, default_value_t = 0.0)]
    pub depth_sigma: f64,
    /// Semantic misclassification probability for both classes.
    #[arg(long, default_value_t = 0.0)]
    pub misclass: f64,
    #[command(flatten)]
    pub camera: CameraArg,
}

#[derive(Args, Debug)]
pub struct BuildCostmapArgs {
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub semantic: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// One hull over all obstacle points.
    #[arg(long)]
    pub single_hull: bool,
    /// Leave the area under the robot Unknown when unseen.
    #[arg(long)]
    pub no_footprint_seed: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub camera: CameraArg,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// `x,y` or `x,y,theta` in the map frame.
    #[arg(long, default_value = "0,0")]
    pub start: PoseArg,
    #[arg(long)]
    pub goal: PoseArg,
    #[arg(long, default_value = "astar")]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    /// Directory of scene files from `gen-scenes`.
    #[arg(long, conflicts_with = "count")]
    pub scenes: Option<PathBuf>,
    /// Number of random scenes to generate on the fly.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub goals_per_scene: usize,
    #[arg(long, default_value = "astar")]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub camera: CameraArg,
}

#[derive(Args, Debug)]
pub struct LossesArgs {
    #[arg(long)]
    pub depth: PathBuf,
    /// Predicted path mask (values in [0, 1]).
    #[arg(long)]
    pub pred_mask: PathBuf,
    #[arg(long)]
    pub label_mask: PathBuf,
    #[arg(long)]
    pub pred_path: PathBuf,
    #[arg(long)]
    pub label_path: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub camera: CameraArg,
}

#[derive(Args, Debug)]
pub struct NavigateArgs {
    /// `corridor` or `open`.
    #[arg(long, default_value = "corridor")]
    pub world: String,
    /// Seed of the world layout.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    #[arg(long, default_value = "rrtstar")]
    pub algo: Algorithm,
    /// Per-cell Free/Occupied flip probability when sensing.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0, conflicts_with = "seeds")]
    pub seed: u64,
    /// Half-open seed range `a..b`; runs in parallel and prints one line per seed.
    #[arg(long)]
    pub seeds: Option<SeedRange>,
    /// Ignore occlusion when placing intermediate goals.
    #[arg(long)]
    pub fov_only: bool,
    /// Trajectory CSV of a single run.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[command(flatten)]
    pub camera: CameraArg,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Dataset manifest; planners are run on each sample's perceived costmap.
    #[arg(long, required_unless_present = "sweep")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "astar,jps,rrtstar,prm")]
    pub algos: Vec<Algorithm>,
    /// `train`, `val`, `test` or `all`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Closed-loop noise sweep on corridor worlds instead of a manifest.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, value_delimiter = ',', default_value = "0,0.02,0.05,0.1,0.15,0.2")]
    pub noise: Vec<f64>,
    #[arg(long, default_value = "0..20")]
    pub seeds: SeedRange,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table as CSV to this file as well.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Path CSV files to overlay.
    #[arg(long)]
    pub path: Vec<PathBuf>,
    /// Robot position the overlays start from, map frame.
    #[arg(long, default_value = "0,0")]
    pub start: PoseArg,
    /// Output file; `.svg` selects vector output, anything else PPM.
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per cell.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseArg(pub Pose2D);

impl FromStr for PoseArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<Result<_, _>>()?;
        match v.as_slice() {
            [x, y] => Ok(PoseArg(Pose2D::new(*x, *y, 0.0))),
            [x, y, t] => Ok(PoseArg(Pose2D::new(*x, *y, *t))),
            _ => Err("expected `x,y` or `x,y,theta`".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.start..self.end).collect()
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once("..").ok_or("expected `a..b`")?;
        let start = a.trim().parse::<u64>().map_err(|e| e.to_string())?;
        let end = b.trim().parse::<u64>().map_err(|e| e.to_string())?;
        if end <= start {
            return Err("seed range is empty".into());
        }
        Ok(SeedRange { start, end })
    }
}

/// A run failure: exit code 1 with the reason tag on stderr.
#[derive(Debug)]
pub struct Failure {
    pub reason: String,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            reason: e.reason().into(),
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn fail(reason: &str, message: impl Into<String>) -> Failure {
    Failure {
        reason: reason.into(),
        message: message.into(),
    }
}

/// Header lines echoed at the top of every artifact.
#[derive(Clone, Debug)]
struct Provenance {
    lines: Vec<String>,
}

impl Provenance {
    fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            lines: vec![
                format!("wheelplan {VERSION}"),
                format!("subcommand: {subcommand}"),
                format!("seed: {seed}"),
            ],
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::from(Error::Io { path: path.into(), source: e }))?;
        self.lines.push(format!("input {role} sha256:{}", hex::encode(Sha256::digest(&bytes))));
        Ok(bytes)
    }

    fn note(&mut self, line: String) {
        self.lines.push(line);
    }

    fn text_block(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::from(Error::Io { path: dir.into(), source: e }))?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io { path: path.into(), source: e }.into())
}

fn camera(arg: &CameraArg, prov: &mut Provenance) -> Result<CameraModel, Failure> {
    match &arg.camera {
        Some(p) => {
            prov.input("camera", p)?;
            Ok(load_camera(p)?)
        }
        None => Ok(CameraModel::default_wheelchair()),
    }
}

/// Scene files hold `#` comment lines followed by the JSON scene spec.
pub fn scene_to_text(spec: &SceneSpec, header: &[String]) -> String {
    let mut s: String = header.iter().map(|l| format!("# {l}\n")).collect();
    s.push_str(&serde_json::to_string_pretty(spec).expect("scene specs serialize"));
    s.push('\n');
    s
}

pub fn parse_scene(text: &str) -> Result<SceneSpec, Error> {
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let spec: SceneSpec = serde_json::from_str(&body).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

fn gen_scenes(a: &GenScenesArgs) -> CmdResult {
    let mut prov = Provenance::new("gen-scenes", a.seed);
    let cam = camera(&a.camera, &mut prov)?;
    let noise = NoiseSpec {
        depth_sigma: a.depth_sigma,
        misclass_drivable: a.misclass,
        misclass_obstacle: a.misclass,
    };
    let h = &prov.lines;
    for i in 0..a.count {
        let seed = mix_seed(a.seed, i as u64);
        let spec = random_scene(seed, noise);
        let render = generate_scene(&spec, &cam, seed)?;
        let stem = a.out.join(format!("scene_{i:04}"));
        let with = |suffix: &str| PathBuf::from(format!("{}{suffix}", stem.display()));
        write_file(&with(".json"), scene_to_text(&spec, h).as_bytes())?;
        write_file(&with("_depth.pgm"), &encode_depth_pgm(&render.depth, DEPTH_SCALE, h))?;
        write_file(&with("_semantic.pgm"), &encode_semantic_pgm(&render.semantic, h))?;
        write_file(&with("_gt.costmap"), render.ground_truth.to_text(h).as_bytes())?;
        if let RgbRef::Blob(b) = &render.rgb {
            write_file(&with("_rgb.ppm"), b)?;
        }
    }
    println!("wrote {} scenes to {}", a.count, a.out.display());
    Ok(())
}

fn build_costmap_cmd(a: &BuildCostmapArgs) -> CmdResult {
    let mut prov = Provenance::new("build-costmap", a.seed);
    let cam = camera(&a.camera, &mut prov)?;
    prov.input("depth", &a.depth)?;
    prov.input("semantic", &a.semantic)?;
    let depth = load_depth(&a.depth)?;
    let semantic = load_semantic(&a.semantic)?;
    let cam = cam.scaled_to(depth.width(), depth.height());
    let opts = BuildOptions {
        single_hull: a.single_hull,
        seed_footprint: !a.no_footprint_seed,
        ..BuildOptions::default()
    };
    let map = perceive(&depth, &semantic, &cam, &RobotFootprint::default(), &opts)?;
    write_file(&a.out, map.to_text(&prov.lines).as_bytes())
}

fn plan_cmd(a: &PlanArgs) -> CmdResult {
    let mut prov = Provenance::new("plan", a.seed);
    prov.input("map", &a.map)?;
    prov.note(format!("algorithm: {}", a.algo));
    let map = load_costmap(&a.map)?;
    let params = PlannerParams::new(a.algo, a.seed);
    let plan = plan_to_goal(&map, &a.start.0, &a.goal.0, &params)?;
    write_file(&a.out, plan.path.to_csv(&prov.lines).as_bytes())
}

fn split_ratio(s: &str) -> Result<SplitRatio, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| fail("contract_violation", format!("split: {e}")))?;
    match v.as_slice() {
        [train, val, test] => Ok(SplitRatio {
            train: *train,
            val: *val,
            test: *test,
        }),
        _ => Err(fail("contract_violation", "split needs three fractions")),
    }
}

fn gen_dataset_cmd(a: &GenDatasetArgs) -> CmdResult {
    let mut prov = Provenance::new("gen-dataset", a.seed);
    let cam = camera(&a.camera, &mut prov)?;
    let scenes: Vec<SceneSpec> = match (&a.scenes, a.count) {
        (Some(dir), _) => {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Failure::from(Error::Io { path: dir.clone(), source: e }))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            let mut out = Vec::with_capacity(files.len());
            for f in &files {
                let bytes = prov.input("scene", f)?;
                out.push(parse_scene(&String::from_utf8_lossy(&bytes))?);
            }
            out
        }
        (None, Some(n)) => (0..n)
            .map(|i| random_scene(mix_seed(a.seed, i as u64), NoiseSpec::default()))
            .collect(),
        (None, None) => return Err(fail("contract_violation", "either --scenes or --count is required")),
    };
    if scenes.is_empty() {
        return Err(fail("contract_violation", "no scenes to label"));
    }
    prov.note(format!("planner: {}", a.algo));
    prov.note(format!("goals_per_scene: {}", a.goals_per_scene));
    let mut cfg = DatasetConfig::new(cam, PlannerParams::new(a.algo, a.seed), a.goals_per_scene, a.seed);
    cfg.ratio = split_ratio(&a.split)?;
    cfg.header = prov.lines.clone();
    let manifest = generate_dataset(&scenes, &cfg, &a.out)?;
    let ok = manifest.records.iter().filter(|r| r.is_ok()).count();
    println!(
        "labeled {ok} of {} samples from {} scenes into {}",
        manifest.records.len(),
        scenes.len(),
        manifest_path(&a.out).display()
    );
    Ok(())
}

fn losses_cmd(a: &LossesArgs) -> CmdResult {
    let mut prov = Provenance::new("losses", a.seed);
    let cam = camera(&a.camera, &mut prov)?;
    for (role, p) in [
        ("depth", &a.depth),
        ("pred_mask", &a.pred_mask),
        ("label_mask", &a.label_mask),
        ("pred_path", &a.pred_path),
        ("label_path", &a.label_path),
    ] {
        prov.input(role, p)?;
    }
    let depth = load_depth(&a.depth)?;
    let cam = cam.scaled_to(depth.width(), depth.height());
    let pred_mask = BinaryMask::load(&a.pred_mask)?;
    let label_mask = BinaryMask::load(&a.label_mask)?;
    let pred_path = load_path(&a.pred_path)?;
    let label_path = load_path(&a.label_path)?;

    let l_ep = loss_ep(&pred_mask, &label_mask)?;
    let l_ip = loss_ip(&pred_path, &label_path)?;
    let er = loss_er(&pred_mask, &depth);
    let ir = loss_ir(&pred_path, &depth, &cam);
    let fmt = |r: &Result<f64, Error>| r.as_ref().map_or_else(|_| "nan".to_string(), |v| format!("{v:.9e}"));
    let (er_s, ir_s) = (fmt(&er), fmt(&ir));
    let combined = combined_losses(l_ep, er, l_ip, ir, &LossWeights::default())?;
    let (n_p, phi_deg) = match fit_mask_plane(&pred_mask, &depth) {
        Ok(f) => (f.sample_count, format!("{:.6}", f.phi.to_degrees())),
        Err(_) => (0, "nan".into()),
    };
    let mut s = prov.text_block();
    let _ = writeln!(s, "l_ep: {l_ep:.9}");
    let _ = writeln!(s, "l_er: {er_s}");
    let _ = writeln!(s, "l_ip: {l_ip:.9}");
    let _ = writeln!(s, "l_ir: {ir_s}");
    let _ = writeln!(s, "l_e: {:.9}", combined.l_e);
    let _ = writeln!(s, "l_i: {:.9}", combined.l_i);
    let _ = writeln!(s, "n_p: {n_p}");
    let _ = writeln!(s, "phi_deg: {phi_deg}");
    print!("{s}");
    Ok(())
}

fn scenario(name: &str, seed: u64) -> Result<Scenario, Failure> {
    match name {
        "corridor" => Ok(corridor_world(seed)),
        "open" => Ok(open_world(20.0)),
        other => Err(fail("contract_violation", format!("unknown world `{other}`"))),
    }
}

fn nav_config(a: &NavigateArgs, cam: &CameraModel, seed: u64) -> NavConfig {
    let mut cfg = NavConfig::new(a.algo, a.noise, seed);
    cfg.camera = cam.clone();
    cfg.fov_only = a.fov_only;
    cfg
}

fn navigate_cmd(a: &NavigateArgs) -> CmdResult {
    let mut prov = Provenance::new("navigate", a.seeds.map_or(a.seed, |r| r.start));
    let cam = camera(&a.camera, &mut prov)?;
    let sc = scenario(&a.world, a.world_seed)?;
    prov.note(format!("world: {} (seed {})", a.world, a.world_seed));
    prov.note(format!("local planner: {}", a.algo));
    prov.note(format!("noise: {}", a.noise));
    if let Some(range) = a.seeds {
        prov.note(format!("seeds: {}..{}", range.start, range.end));
        let reports: Vec<NavigationReport> = range
            .seeds()
            .par_iter()
            .map(|&s| simulate_navigation(&sc.world, &sc.start, &sc.goal, &nav_config(a, &cam, s)))
            .collect();
        let mut out = prov.text_block();
        let _ = writeln!(out, "seed,outcome,legs,collisions,path_length_m,mean_D,mean_TC");
        let mut successes = 0;
        for (s, r) in range.seeds().iter().zip(&reports) {
            successes += usize::from(r.is_success());
            let _ = writeln!(
                out,
                "{s},{},{},{},{:.6},{:.6},{:.6}",
                r.outcome,
                r.legs.len(),
                r.collisions,
                r.path_length,
                r.mean_d(),
                r.mean_tc()
            );
        }
        let _ = writeln!(out, "# success: {successes}/{}", reports.len());
        print!("{out}");
        return Ok(());
    }
    let report = simulate_navigation(&sc.world, &sc.start, &sc.goal, &nav_config(a, &cam, a.seed));
    print!("{}{}", prov.text_block(), report.to_text());
    if let Some(t) = &a.trajectory {
        write_file(t, report.trajectory_csv(&prov.lines).as_bytes())?;
    }
    if report.is_success() {
        Ok(())
    } else {
        Err(fail(report.outcome.as_str(), format!("navigation ended with {}", report.outcome)))
    }
}

fn split_matches(filter: &str, split: &str) -> bool {
    filter == "all" || filter == split
}

fn evaluate_manifest(a: &EvaluateArgs, path: &Path, prov: &mut Provenance) -> Result<SuiteResult, Failure> {
    let bytes = prov.input("manifest", path)?;
    let manifest = parse_manifest(&String::from_utf8_lossy(&bytes))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut cache: std::collections::BTreeMap<String, (Arc<Costmap>, Option<Arc<Costmap>>)> = Default::default();
    let mut samples = Vec::new();
    for (i, r) in manifest.records.iter().enumerate() {
        if !split_matches(&a.split, &r.split) {
            continue;
        }
        let stem = r.scene_stem().to_string();
        if !cache.contains_key(&stem) {
            let perceived = Arc::new(load_costmap(dir.join(r.perceived_costmap()))?);
            let gt = load_costmap(dir.join(r.ground_truth_costmap())).ok().map(Arc::new);
            cache.insert(stem.clone(), (perceived, gt));
        }
        let (perceived, gt) = &cache[&stem];
        samples.push(EvalSample {
            id: format!("{stem}#{i}"),
            perceived: perceived.clone(),
            ground_truth: gt.clone(),
            goal: r.goal(),
        });
    }
    if samples.is_empty() {
        return Err(fail("contract_violation", format!("no samples in split `{}`", a.split)));
    }
    Ok(evaluate_suite(&samples, &a.algos, &PlannerParams::new(Algorithm::Astar, a.seed)))
}

/// The closed-loop robustness sweep on corridor worlds: each seed picks its
/// own corridor layout.
pub fn noise_sweep(algo: Algorithm, noise: &[f64], seeds: &[u64]) -> Vec<EvalRecord> {
    let jobs: Vec<(f64, u64)> = noise.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    jobs.par_iter()
        .map(|&(p, s)| {
            let sc = corridor_world(s);
            let r = simulate_navigation(&sc.world, &sc.start, &sc.goal, &NavConfig::new(algo, p, s));
            EvalRecord::from_navigation(format!("p{p}_s{s}"), algo, &r)
        })
        .collect()
}

fn evaluate_cmd(a: &EvaluateArgs) -> CmdResult {
    let mut prov = Provenance::new("evaluate", a.seed);
    let (result, bins) = if a.sweep {
        let algo = *a.algos.first().ok_or_else(|| fail("contract_violation", "no planner given"))?;
        prov.note(format!("sweep: {} noise levels, seeds {}..{}", a.noise.len(), a.seeds.start, a.seeds.end));
        let records = noise_sweep(algo, &a.noise, &a.seeds.seeds());
        let rows = summarize(&records, &[algo.name().to_string()]);
        let bins = bin_by_quality(&records, a.bins)?;
        (
            SuiteResult {
                rows,
                records,
                skipped: 0,
            },
            Some(bins),
        )
    } else {
        let path = a.manifest.as_ref().expect("clap enforces --manifest");
        (evaluate_manifest(a, path, &mut prov)?, None)
    };
    let mut out = prov.text_block();
    out.push_str(&result.to_text());
    if let Some(bins) = &bins {
        out.push('\n');
        out.push_str(&bins_to_text(bins));
        match trend_slope(bins) {
            Some(s) => {
                let _ = writeln!(out, "trend_slope: {s:.6}");
            }
            None => out.push_str("trend_slope: -\n"),
        }
    }
    if result.skipped > 0 {
        let _ = writeln!(out, "skipped: {}", result.skipped);
    }
    print!("{out}");
    if let Some(csv) = &a.csv {
        write_file(csv, format!("{}{}", prov.text_block(), result.to_csv()).as_bytes())?;
    }
    Ok(())
}

fn render_cmd(a: &RenderArgs) -> CmdResult {
    let mut prov = Provenance::new("render", a.seed);
    prov.input("map", &a.map)?;
    let map = load_costmap(&a.map)?;
    let palette = [[220, 40, 40], [40, 160, 60], [200, 120, 20], [140, 40, 200]];
    let mut overlays = Vec::new();
    for (i, p) in a.path.iter().enumerate() {
        prov.input("path", p)?;
        let path = load_path(p)?;
        let mut pts: Vec<Point2> = vec![a.start.0.position()];
        pts.extend(path.positions());
        let mut o = Overlay::path(pts);
        o.color = palette[i % palette.len()];
        overlays.push(o);
    }
    debug_assert!(overlays.iter().all(|o| o.color != GOAL_RGB));
    let svg = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
    if svg {
        write_file(&a.out, render_svg(&map, &overlays, a.scale, &prov.lines).as_bytes())
    } else {
        write_file(&a.out, &render_ppm(&map, &overlays, a.scale, &prov.lines))
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::GenScenes(a) => gen_scenes(a),
        Command::BuildCostmap(a) => build_costmap_cmd(a),
        Command::Plan(a) => plan_cmd(a),
        Command::GenDataset(a) => gen_dataset_cmd(a),
        Command::Losses(a) => losses_cmd(a),
        Command::Navigate(a) => navigate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Render(a) => render_cmd(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on a domain failure, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}: {}", f.reason, f.message);
            1
        }
    }
}
