use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmap::{perceive, BuildOptions, Costmap, RobotFootprint};
use crate::error::{Error, Result};
use crate::geometry::{mix_seed, Pose2D};
use crate::planners::{plan_to_goal, PlannedPath, PlannerParams};
use crate::scene::{
    encode_depth_pgm, encode_semantic_pgm, generate_scene, CameraModel, DepthImage, RgbRef, SceneSpec,
    SemanticImage,
};

use super::{project_goal, project_to_mask, sample_goal, BinaryMask, MaskStatus, DEFAULT_MIN_GOAL_DIST, DEFAULT_THICKNESS};

const DEPTH_SCALE: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatio {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::contract("split ratios must be non-negative and sum to 1"));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items; leftover items go to the
    /// largest fractional parts, earlier splits first on ties.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let quotas = [self.train * n as f64, self.val * n as f64, self.test * n as f64];
        let mut counts = quotas.map(|q| q.floor() as usize);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
        let mut left = n.saturating_sub(counts.iter().sum());
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// Whole scenes are assigned to splits by a seeded shuffle.
pub fn assign_splits(scene_count: usize, ratio: &SplitRatio, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..scene_count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX)));
    let [train, val, _] = ratio.counts(scene_count);
    let mut out = vec![Split::Test; scene_count];
    for (rank, &scene) in order.iter().enumerate() {
        out[scene] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub camera: CameraModel,
    pub planner: PlannerParams,
    pub goals_per_scene: usize,
    pub seed: u64,
    pub ratio: SplitRatio,
    /// Path stroke width, pixels.
    pub thickness: f64,
    /// Goal disc radius, pixels.
    pub goal_radius: f64,
    pub min_goal_dist: f64,
    /// Comment lines written at the top of every artifact.
    pub header: Vec<String>,
}

impl DatasetConfig {
    pub fn new(camera: CameraModel, planner: PlannerParams, goals_per_scene: usize, seed: u64) -> Self {
        Self {
            camera,
            planner,
            goals_per_scene,
            seed,
            ratio: SplitRatio::default(),
            thickness: DEFAULT_THICKNESS,
            goal_radius: DEFAULT_THICKNESS,
            min_goal_dist: DEFAULT_MIN_GOAL_DIST,
            header: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub rgb: RgbRef,
    pub depth: DepthImage,
    pub semantic: SemanticImage,
    pub goal: Pose2D,
    pub path: PlannedPath,
    pub mask_path: BinaryMask,
    pub mask_goal: BinaryMask,
    pub split: Split,
}

/// One label attempt: the goal tried and either the label or a failure tag.
#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub goal: Pose2D,
    pub label: std::result::Result<(PlannedPath, BinaryMask, BinaryMask), &'static str>,
}

#[derive(Clone, Debug)]
pub struct SceneLabels {
    pub depth: DepthImage,
    pub semantic: SemanticImage,
    pub rgb: RgbRef,
    pub perceived: Costmap,
    pub ground_truth: Costmap,
    pub samples: Vec<SampleOutcome>,
}

impl SceneLabels {
    pub fn labeled(&self, split: Split) -> Vec<LabeledSample> {
        self.samples
            .iter()
            .filter_map(|s| s.label.as_ref().ok().map(|l| (s.goal, l)))
            .map(|(goal, (path, mp, mg))| LabeledSample {
                rgb: self.rgb.clone(),
                depth: self.depth.clone(),
                semantic: self.semantic.clone(),
                goal,
                path: path.clone(),
                mask_path: mp.clone(),
                mask_goal: mg.clone(),
                split,
            })
            .collect()
    }
}

/// Renders one scene, perceives its costmap and labels `goals_per_scene`
/// sampled goals.
pub fn label_scene(spec: &SceneSpec, scene_seed: u64, cfg: &DatasetConfig) -> Result<SceneLabels> {
    let cam = &cfg.camera;
    let render = generate_scene(spec, cam, scene_seed)?;
    let perceived = perceive(
        &render.depth,
        &render.semantic,
        cam,
        &RobotFootprint::default(),
        &BuildOptions::default(),
    )?;
    let start = Pose2D::default();
    let mut samples = Vec::with_capacity(cfg.goals_per_scene);
    for k in 0..cfg.goals_per_scene as u64 {
        let goal = match sample_goal(&perceived, mix_seed(scene_seed, 2 * k), cfg.min_goal_dist) {
            Ok(g) => g,
            Err(_) => {
                samples.push(SampleOutcome {
                    goal: start,
                    label: Err("no_free_space"),
                });
                continue;
            }
        };
        let mut params = cfg.planner;
        params.seed = mix_seed(scene_seed, 2 * k + 1);
        let label = match plan_to_goal(&perceived, &start, &goal, &params) {
            Err(Error::NoFreeSpace) => Err("no_free_space"),
            Err(Error::NoPathFound(_)) => Err("no_path"),
            Err(e) => return Err(e),
            Ok(plan) => {
                let mut line = vec![start.position()];
                line.extend(plan.path.positions());
                let mp = project_to_mask(&line, cam, cfg.thickness)?;
                let mg = project_goal(&plan.snapped_goal, cam, cfg.goal_radius)?;
                if mp.status == MaskStatus::Empty {
                    Err("out_of_view")
                } else {
                    Ok((plan.path, mp.mask, mg.mask))
                }
            }
        };
        let goal = match &label {
            Ok((p, _, _)) => p.goal(),
            Err(_) => goal,
        };
        samples.push(SampleOutcome { goal, label });
    }
    Ok(SceneLabels {
        depth: render.depth,
        semantic: render.semantic,
        rgb: render.rgb,
        perceived,
        ground_truth: render.ground_truth,
        samples,
    })
}

/// One manifest line. File paths are relative to the manifest directory;
/// they are empty for failed samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub rgb: String,
    pub depth: String,
    pub semantic: String,
    pub goal_x: f64,
    pub goal_y: f64,
    pub goal_theta: f64,
    pub mask_goal: String,
    pub mask_path: String,
    pub path_csv: String,
    pub planner: String,
    pub split: String,
    pub status: String,
}

impl ManifestRecord {
    pub fn goal(&self) -> Pose2D {
        Pose2D::new(self.goal_x, self.goal_y, self.goal_theta)
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Common file-name prefix of the scene's artifacts.
    pub fn scene_stem(&self) -> &str {
        self.depth.strip_suffix("_depth.pgm").unwrap_or(&self.depth)
    }

    pub fn perceived_costmap(&self) -> String {
        format!("{}_perceived.costmap", self.scene_stem())
    }

    pub fn ground_truth_costmap(&self) -> String {
        format!("{}_gt.costmap", self.scene_stem())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub header: Vec<String>,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            s.push_str("# ");
            s.push_str(h);
            s.push('\n');
        }
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split.as_str()).count()
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut m = Manifest::default();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let l = line.trim_end();
        if let Some(h) = l.strip_prefix('#') {
            m.header.push(h.trim_start().to_string());
        } else if !l.is_empty() {
            m.records
                .push(serde_json::from_str(l).map_err(|e| Error::parse(offset, e.to_string()))?);
        }
        offset += line.len();
    }
    Ok(m)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| Error::io(p, e))
}

fn write_scene(dir: &Path, index: usize, labels: &SceneLabels, split: Split, cfg: &DatasetConfig) -> Result<Vec<ManifestRecord>> {
    let stem = format!("scene_{index:04}");
    let h = &cfg.header;
    let rgb = format!("{stem}_rgb.ppm");
    let depth = format!("{stem}_depth.pgm");
    let semantic = format!("{stem}_semantic.pgm");
    match &labels.rgb {
        RgbRef::Blob(b) => write(dir, &rgb, b)?,
        RgbRef::Path(p) => {
            fs::copy(p, dir.join(&rgb)).map_err(|e| Error::io(p, e))?;
        }
    }
    write(dir, &depth, &encode_depth_pgm(&labels.depth, DEPTH_SCALE, h))?;
    write(dir, &semantic, &encode_semantic_pgm(&labels.semantic, h))?;
    write(dir, &format!("{stem}_perceived.costmap"), labels.perceived.to_text(h).as_bytes())?;
    write(dir, &format!("{stem}_gt.costmap"), labels.ground_truth.to_text(h).as_bytes())?;

    let planner = cfg.planner.algorithm.name().to_string();
    let mut out = Vec::with_capacity(labels.samples.len());
    for (k, s) in labels.samples.iter().enumerate() {
        let base = ManifestRecord {
            rgb: rgb.clone(),
            depth: depth.clone(),
            semantic: semantic.clone(),
            goal_x: s.goal.x,
            goal_y: s.goal.y,
            goal_theta: s.goal.theta,
            mask_goal: String::new(),
            mask_path: String::new(),
            path_csv: String::new(),
            planner: planner.clone(),
            split: "none".into(),
            status: String::new(),
        };
        out.push(match &s.label {
            Err(reason) => ManifestRecord {
                status: (*reason).into(),
                ..base
            },
            Ok((path, mp, mg)) => {
                let sample = format!("{stem}_g{k:03}");
                let rec = ManifestRecord {
                    mask_goal: format!("{sample}_mask_goal.pgm"),
                    mask_path: format!("{sample}_mask_path.pgm"),
                    path_csv: format!("{sample}_path.csv"),
                    split: split.as_str().into(),
                    status: "ok".into(),
                    ..base
                };
                write(dir, &rec.mask_goal, &mg.to_pgm(h))?;
                write(dir, &rec.mask_path, &mp.to_pgm(h))?;
                write(dir, &rec.path_csv, path.to_csv(h).as_bytes())?;
                rec
            }
        });
    }
    Ok(out)
}

/// Labels every scene in parallel, writes images, costmaps, masks and paths
/// into `out_dir` and returns the manifest, which is also written there as
/// `manifest.jsonl`. Output is identical for identical inputs.
pub fn generate_dataset(scenes: &[SceneSpec], cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.ratio.validate()?;
    cfg.planner.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let splits = assign_splits(scenes.len(), &cfg.ratio, cfg.seed);
    let per_scene: Vec<Vec<ManifestRecord>> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let labels = label_scene(spec, mix_seed(cfg.seed, i as u64), cfg)?;
            write_scene(out_dir, i, &labels, splits[i], cfg)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        header: cfg.header.clone(),
        records: per_scene.into_iter().flatten().collect(),
    };
    write(out_dir, "manifest.jsonl", manifest.to_jsonl().as_bytes())?;
    Ok(manifest)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.jsonl")
}
