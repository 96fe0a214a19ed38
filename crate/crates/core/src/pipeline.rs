//! End-to-end workflows: render a dataset, build templates, run an
//! estimator over a dataset and score the results.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{discover_models, global_bbox, load_model, model_scale, AssetError, ModelAsset, ModelManifest, PartManifest};
use crate::dataset::{
    self, read_manifest, read_record, record_entry_path, round_all, write_manifest, write_record, CategoryEntry, DatasetError,
    InstanceEntry, Manifest, RecordEntry, RecordFiles, RecordPayload, ViewRecord,
};
use crate::estimator::{estimator_by_name, EstimatorConfig, EstimatorError, PoseEstimate};
use crate::metrics::{evaluate_pose, EvalRecord, EvalReport, IouConfig, MetricsError, PoseError, SymmetryGroup, Thresholds, TranslationThreshold};
use crate::primitives;
use crate::render::{depth_to_pointcloud, CameraIntrinsics, Scene};
use crate::se3::{PoseJson, Se3Pose};
use crate::template::{build_template, read_template, write_template, TemplateError, TemplateParams, TemplatePointCloud};
use crate::views::{optical_axis, sample_viewpoints, ViewError, ViewSamplingConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("aborted after {failed} failure(s): {first}")]
    Aborted { failed: usize, first: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Everything a run needs. Read from TOML or JSON; unknown keys are
/// rejected so typos surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory searched for `*.model.json`; built-in fixtures when unset.
    pub asset_root: Option<PathBuf>,
    /// Instances per category when using built-in fixtures.
    pub fixture_instances: usize,
    /// Categories to process; empty means all.
    pub categories: Vec<String>,
    pub views: ViewSamplingConfig,
    pub intrinsics: CameraIntrinsics,
    pub output: PathBuf,
    pub render_rgb: bool,
    pub template: TemplateParams,
    pub template_dir: PathBuf,
    pub estimator: String,
    pub estimator_config: EstimatorConfig,
    pub thresholds: Thresholds,
    pub min_visibility: f64,
    pub iou: IouConfig,
    /// Symmetry group name per category (see `SymmetryGroup::by_name`).
    pub symmetry: BTreeMap<String, String>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Stop at the first failing record.
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            asset_root: None,
            fixture_instances: 2,
            categories: Vec::new(),
            views: ViewSamplingConfig { n_views: 30, radius_m: 0.6, roll_min_rad: -0.5, roll_max_rad: 0.5, seed: 1, hemisphere_only: false },
            intrinsics: CameraIntrinsics::vga(),
            output: PathBuf::from("dataset"),
            render_rgb: false,
            template: TemplateParams { k: 2048, poisson_radius: 0.005, seed: 0 },
            template_dir: PathBuf::from("templates"),
            estimator: "baseline".into(),
            estimator_config: EstimatorConfig::default(),
            thresholds: Thresholds { rotation_deg: 10.0, translation: TranslationThreshold::DiameterFraction(0.02), iou: 0.25 },
            min_visibility: 0.6,
            iou: IouConfig::default(),
            symmetry: BTreeMap::new(),
            jobs: 0,
            strict: false,
        }
    }
}

impl PipelineConfig {
    /// Loads a `.toml` or `.json` file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |e: String| PipelineError::Config(format!("{}: {e}", path.display()));
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| bad(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let cfg_err = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.views.validate().map_err(|e| cfg_err(&e))?;
        self.intrinsics.validate().map_err(|e| cfg_err(&e))?;
        self.estimator_config.validate().map_err(|e| cfg_err(&e))?;
        self.thresholds.validate().map_err(|e| cfg_err(&e))?;
        if self.fixture_instances == 0 {
            return bad("fixture_instances must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_visibility) {
            return bad(format!("min_visibility {} must lie in [0, 1]", self.min_visibility));
        }
        if self.template.k == 0 || !(self.template.poisson_radius > 0.0) {
            return bad("template k and poisson_radius must be positive".into());
        }
        for (cat, name) in &self.symmetry {
            if SymmetryGroup::by_name(name).is_none() {
                return bad(format!("unknown symmetry {name:?} for category {cat}"));
            }
        }
        Ok(())
    }

    pub fn symmetry_for(&self, category: &str) -> SymmetryGroup {
        self.symmetry.get(category).and_then(|n| SymmetryGroup::by_name(n)).unwrap_or_else(SymmetryGroup::identity)
    }

    fn wants(&self, category: &str) -> bool {
        self.categories.is_empty() || self.categories.iter().any(|c| c == category)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// JSON-lines event log. Lines from parallel workers interleave in any order.
pub struct JsonLog {
    out: Option<Mutex<Box<dyn Write + Send>>>,
}

impl JsonLog {
    pub fn stderr() -> Self {
        Self { out: Some(Mutex::new(Box::new(std::io::stderr()))) }
    }

    pub fn to_writer(w: Box<dyn Write + Send>) -> Self {
        Self { out: Some(Mutex::new(w)) }
    }

    pub fn disabled() -> Self {
        Self { out: None }
    }

    pub fn event(&self, value: serde_json::Value) {
        if let Some(out) = &self.out {
            let mut w = out.lock().unwrap_or_else(|p| p.into_inner());
            let _ = writeln!(w, "{value}");
        }
    }
}

/// Loads the configured models, sorted by category then instance. Models
/// that fail to load are returned as errors in place.
pub fn load_models(cfg: &PipelineConfig) -> Result<Vec<Result<ModelAsset, (PathBuf, AssetError)>>, PipelineError> {
    let mut out = Vec::new();
    match &cfg.asset_root {
        None => {
            for cat in primitives::ASYMMETRIC_CATEGORIES.iter().filter(|c| cfg.wants(c)) {
                for v in 0..cfg.fixture_instances {
                    out.push(Ok(primitives::fixture_model(cat, v)));
                }
            }
            for cat in &cfg.categories {
                if !primitives::ASYMMETRIC_CATEGORIES.contains(&cat.as_str()) {
                    return Err(PipelineError::Config(format!("no built-in fixture for category {cat:?}")));
                }
            }
        }
        Some(root) => {
            for path in discover_models(root)? {
                match load_model(&path) {
                    Ok(m) if cfg.wants(m.category()) => out.push(Ok(m)),
                    Ok(_) => {}
                    Err(e) => out.push(Err((path, e))),
                }
            }
            out.sort_by(|a, b| match (a, b) {
                (Ok(a), Ok(b)) => (a.category(), a.instance_id()).cmp(&(b.category(), b.instance_id())),
                (Ok(_), Err(_)) => std::cmp::Ordering::Less,
                (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
                (Err((a, _)), Err((b, _))) => a.cmp(b),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub records: usize,
    pub failed: usize,
    pub manifest: PathBuf,
    pub seconds: f64,
}

struct Unit<'a> {
    model: usize,
    scene: &'a Scene,
    view_index: u32,
    camera_pose: Se3Pose,
    instance_pose: Se3Pose,
}

/// Renders every (instance, view) pair and writes records plus a manifest.
///
/// Work runs on `cfg.jobs` threads; output does not depend on the thread
/// count. Failed records are logged and skipped, or abort the run in strict
/// mode. The manifest is marked incomplete unless every record was written.
pub fn render_dataset(cfg: &PipelineConfig, log: &JsonLog) -> Result<RenderSummary, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let root = &cfg.output;
    write_manifest(root, &Manifest::new(config_snapshot(cfg), Vec::new(), false))?;

    let loaded = load_models(cfg)?;
    let mut models = Vec::new();
    let mut load_failures = 0;
    for m in loaded {
        match m {
            Ok(m) => models.push(m),
            Err((path, e)) => {
                load_failures += 1;
                log.event(serde_json::json!({"event": "asset_error", "path": path, "error": e.to_string()}));
                if cfg.strict {
                    return Err(PipelineError::Aborted { failed: 1, first: e.to_string() });
                }
            }
        }
    }
    let views = sample_viewpoints(&cfg.views)?;
    let scenes: Vec<Scene> = models.iter().map(Scene::new).collect();
    let units: Vec<Unit> = scenes
        .iter()
        .enumerate()
        .flat_map(|(mi, scene)| {
            views.iter().map(move |v| Unit {
                model: mi,
                scene,
                view_index: v.lattice_index as u32,
                camera_pose: v.camera_pose,
                instance_pose: v.instance_pose,
            })
        })
        .collect();

    let abort = AtomicBool::new(false);
    let render_one = |u: &Unit| -> Option<Result<(usize, RecordEntry), String>> {
        if abort.load(Ordering::Relaxed) {
            return None;
        }
        let model = &models[u.model];
        let t0 = Instant::now();
        let result = (|| -> Result<RecordEntry, PipelineError> {
            let k = &cfg.intrinsics;
            let (depth, mask) = u.scene.render_depth(&u.camera_pose, k);
            let rgb = cfg.render_rgb.then(|| u.scene.render_shaded(&u.camera_pose, k, &optical_axis(&u.camera_pose)));
            let t_render = t0.elapsed().as_secs_f64();
            let visibility = u.scene.frame_visibility(&u.camera_pose, k);
            let cloud = depth_to_pointcloud(&depth, &mask, k).map_err(|e| PipelineError::Config(e.to_string()))?;
            let scale = model_scale(&global_bbox(model))?;
            let record = ViewRecord {
                category: model.category().to_string(),
                instance_id: model.instance_id().to_string(),
                view_index: u.view_index,
                intrinsics: *k,
                camera_pose: u.camera_pose,
                instance_pose: u.instance_pose,
                scale,
                files: RecordFiles::for_view(u.view_index, cfg.render_rgb),
            };
            let points = cloud.len();
            write_record(root, &record, &RecordPayload { depth, mask, cloud, rgb })?;
            log.event(serde_json::json!({
                "event": "view_rendered",
                "category": record.category,
                "instance_id": record.instance_id,
                "view_index": u.view_index,
                "points": points,
                "visibility": visibility,
                "render_ms": t_render * 1e3,
                "total_ms": t0.elapsed().as_secs_f64() * 1e3,
            }));
            Ok(RecordEntry {
                view_index: u.view_index,
                pose: record_entry_path(model.category(), model.instance_id(), u.view_index),
                visibility: dataset::round_sig9(visibility),
            })
        })();
        Some(match result {
            Ok(entry) => Ok((u.model, entry)),
            Err(e) => {
                log.event(serde_json::json!({
                    "event": "record_error",
                    "category": model.category(),
                    "instance_id": model.instance_id(),
                    "view_index": u.view_index,
                    "error": e.to_string(),
                }));
                if cfg.strict {
                    abort.store(true, Ordering::Relaxed);
                }
                Err(e.to_string())
            }
        })
    };
    let results: Vec<Option<Result<(usize, RecordEntry), String>>> = cfg.pool()?.install(|| units.par_iter().map(render_one).collect());

    let mut per_model: Vec<Vec<RecordEntry>> = vec![Vec::new(); models.len()];
    let mut errors = Vec::new();
    for r in results.into_iter().flatten() {
        match r {
            Ok((mi, entry)) => per_model[mi].push(entry),
            Err(e) => errors.push(e),
        }
    }
    let written: usize = per_model.iter().map(Vec::len).sum();
    let complete = errors.is_empty() && load_failures == 0 && written == units.len();
    let mut categories: Vec<CategoryEntry> = Vec::new();
    for (model, records) in models.iter().zip(per_model) {
        let bbox = global_bbox(model);
        let c = bbox.center();
        let entry = InstanceEntry {
            instance_id: model.instance_id().to_string(),
            scale: model_scale(&bbox)?,
            bbox_center: round_all([c.x, c.y, c.z]),
            records,
        };
        match categories.last_mut() {
            Some(cat) if cat.name == model.category() => cat.instances.push(entry),
            _ => categories.push(CategoryEntry { name: model.category().to_string(), instances: vec![entry] }),
        }
    }
    let manifest = write_manifest(root, &Manifest::new(config_snapshot(cfg), categories, complete))?;
    let seconds = start.elapsed().as_secs_f64();
    log.event(serde_json::json!({"event": "render_done", "records": written, "failed": errors.len() + load_failures, "seconds": seconds}));
    if cfg.strict && !errors.is_empty() {
        return Err(PipelineError::Aborted { failed: errors.len(), first: errors[0].clone() });
    }
    Ok(RenderSummary { records: written, failed: errors.len() + load_failures, manifest, seconds })
}

/// The parts of the config that determine dataset content. Parallelism
/// and output paths are left out so reruns compare equal.
fn config_snapshot(cfg: &PipelineConfig) -> serde_json::Value {
    serde_json::json!({
        "asset_root": cfg.asset_root,
        "fixture_instances": cfg.fixture_instances,
        "categories": cfg.categories,
        "views": cfg.views,
        "intrinsics": cfg.intrinsics,
        "render_rgb": cfg.render_rgb,
    })
}

/// Builds one template per category from its first instance.
pub fn build_templates(cfg: &PipelineConfig) -> Result<Vec<TemplatePointCloud>, PipelineError> {
    let mut firsts: BTreeMap<String, ModelAsset> = BTreeMap::new();
    for m in load_models(cfg)? {
        let m = m.map_err(|(_, e)| e)?;
        firsts.entry(m.category().to_string()).or_insert(m);
    }
    let models: Vec<ModelAsset> = firsts.into_values().collect();
    let built: Result<Vec<_>, TemplateError> = cfg.pool()?.install(|| models.par_iter().map(|m| build_template(m, &cfg.template)).collect());
    Ok(built?)
}

pub fn write_templates(dir: &Path, templates: &[TemplatePointCloud], params: &TemplateParams) -> Result<Vec<PathBuf>, PipelineError> {
    templates.iter().map(|t| Ok(write_template(dir, t, params)?.1)).collect()
}

/// Reads every `<category>.json` template sidecar in `dir`.
pub fn read_templates(dir: &Path) -> Result<BTreeMap<String, TemplatePointCloud>, PipelineError> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    for p in paths {
        let t = read_template(&p)?;
        out.insert(t.category.clone(), t);
    }
    Ok(out)
}

/// Estimate for one record; `error` is set when the estimator failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub category: String,
    pub instance_id: String,
    pub view_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<PoseEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub estimator: String,
    pub config: EstimatorConfig,
    pub records: Vec<EstimateRecord>,
}

impl EstimateSet {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.estimate.is_none()).count()
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("estimates serialize");
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

/// Runs the configured estimator on every record of a dataset.
pub fn estimate_dataset(root: &Path, templates: &BTreeMap<String, TemplatePointCloud>, cfg: &PipelineConfig, log: &JsonLog) -> Result<EstimateSet, PipelineError> {
    let estimator = estimator_by_name(&cfg.estimator, cfg.estimator_config)?;
    let manifest = read_manifest(root)?;
    let entries: Vec<(&CategoryEntry, &InstanceEntry, &RecordEntry)> = manifest.records().filter(|(c, _, _)| cfg.wants(&c.name)).collect();
    let run = |(c, i, r): &(&CategoryEntry, &InstanceEntry, &RecordEntry)| {
        let t0 = Instant::now();
        let result = templates
            .get(&c.name)
            .ok_or_else(|| format!("no template for category {}", c.name))
            .and_then(|t| {
                let rec = read_record(&root.join(&r.pose)).map_err(|e| e.to_string())?;
                estimator.estimate(&rec.cloud, t).map_err(|e| e.to_string())
            });
        log.event(serde_json::json!({
            "event": "estimate",
            "category": c.name,
            "instance_id": i.instance_id,
            "view_index": r.view_index,
            "ok": result.is_ok(),
            "ms": t0.elapsed().as_secs_f64() * 1e3,
        }));
        let (estimate, error) = match result {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e)),
        };
        EstimateRecord { category: c.name.clone(), instance_id: i.instance_id.clone(), view_index: r.view_index, estimate, error }
    };
    let records = cfg.pool()?.install(|| entries.par_iter().map(run).collect());
    Ok(EstimateSet { estimator: estimator.name().to_string(), config: cfg.estimator_config, records })
}

/// Ground-truth pose of the bounding-box frame in the camera.
pub fn ground_truth_pose(record: &ViewRecord, bbox_center: [f64; 3]) -> Se3Pose {
    record.instance_pose.compose(&Se3Pose::from_translation(bbox_center.into()))
}

/// Scores estimates against the dataset's ground truth. A failed estimate
/// is scored as a pose at the camera origin with no overlap.
pub fn evaluate_estimates(root: &Path, estimates: &EstimateSet, cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let manifest = read_manifest(root)?;
    let mut lookup = BTreeMap::new();
    for (c, i, r) in manifest.records() {
        lookup.insert((c.name.as_str(), i.instance_id.as_str(), r.view_index), (i, r));
    }
    let mut records = Vec::with_capacity(estimates.records.len());
    for e in &estimates.records {
        let (inst, entry) = lookup.get(&(e.category.as_str(), e.instance_id.as_str(), e.view_index)).ok_or_else(|| {
            PipelineError::Config(format!("estimate for {}/{}/{} has no dataset record", e.category, e.instance_id, e.view_index))
        })?;
        let gt_record = dataset::read_pose_file(&root.join(&entry.pose))?;
        let gt = ground_truth_pose(&gt_record, inst.bbox_center);
        let (error, fitness, degraded) = match &e.estimate {
            Some(est) => {
                let err = evaluate_pose((&est.pose, &est.scale), (&gt, &inst.scale), &cfg.symmetry_for(&e.category), cfg.iou)?;
                (err, est.fitness, est.degraded)
            }
            None => (
                PoseError { rotation_error_deg: 180.0, translation_error_m: gt.translation().norm(), iou3d: 0.0, diameter_m: Some(inst.scale.diagonal()) },
                0.0,
                true,
            ),
        };
        records.push(EvalRecord {
            category: e.category.clone(),
            instance_id: e.instance_id.clone(),
            view_index: e.view_index,
            visibility: entry.visibility,
            fitness,
            degraded,
            error,
        });
    }
    Ok(EvalReport::build(records, cfg.thresholds, cfg.min_visibility)?)
}

/// Writes the built-in fixture models as OBJ meshes plus `*.model.json`
/// manifests under `root/<category>/<instance>/`.
pub fn write_fixture_assets(root: &Path, categories: &[String], instances: usize) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for cat in primitives::ASYMMETRIC_CATEGORIES.iter().filter(|c| categories.is_empty() || categories.iter().any(|x| x == *c)) {
        for v in 0..instances {
            let model = primitives::fixture_model(cat, v);
            let dir = root.join(cat).join(model.instance_id());
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let mut parts = Vec::new();
            for (pi, part) in model.parts().iter().enumerate() {
                let name = format!("part{pi}.obj");
                let path = dir.join(&name);
                std::fs::write(&path, primitives::to_obj(&part.mesh)).map_err(io_err(&path))?;
                parts.push(PartManifest { mesh_path: name.into(), transform: PoseJson::from(&part.local_transform) });
            }
            let manifest = ModelManifest { category: cat.to_string(), instance_id: model.instance_id().to_string(), unit_scale: 1.0, parts };
            let path = dir.join(format!("{}.model.json", model.instance_id()));
            std::fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&path))?;
            out.push(path);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(out: &Path) -> PipelineConfig {
        PipelineConfig {
            categories: vec!["wedge".into()],
            fixture_instances: 1,
            views: ViewSamplingConfig { n_views: 4, ..PipelineConfig::default().views },
            intrinsics: CameraIntrinsics::new(120.0, 120.0, 40.0, 30.0, 80, 60).unwrap(),
            output: out.to_path_buf(),
            template: TemplateParams { k: 256, poisson_radius: 0.01, seed: 0 },
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }

    #[test]
    fn render_is_independent_of_thread_count() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let s = render_dataset(&PipelineConfig { jobs: 1, ..small_cfg(&a) }, &JsonLog::disabled()).unwrap();
        assert_eq!((s.records, s.failed), (4, 0));
        render_dataset(&PipelineConfig { jobs: 3, ..small_cfg(&b) }, &JsonLog::disabled()).unwrap();
        for entry in walkdir::WalkDir::new(&a).into_iter().filter_map(Result::ok).filter(|e| e.file_type().is_file()) {
            let rel = entry.path().strip_prefix(&a).unwrap();
            assert_eq!(std::fs::read(entry.path()).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{}", rel.display());
        }
        let report = dataset::validate_dataset(&a);
        assert!(report.is_ok(), "{:?}", report.violations);
        assert!(read_manifest(&a).unwrap().complete);
    }

    #[test]
    fn fixture_assets_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture_assets(dir.path(), &["gadget".into()], 1).unwrap();
        let m = load_model(&paths[0]).unwrap();
        let orig = primitives::fixture_model("gadget", 0);
        assert_eq!(m.parts().len(), orig.parts().len());
        assert!((global_bbox(&m).diagonal() - global_bbox(&orig).diagonal()).abs() < 1e-12);
    }

    #[test]
    fn strict_mode_aborts_on_bad_asset() {
        let dir = tempfile::tempdir().unwrap();
        let assets = dir.path().join("assets");
        write_fixture_assets(&assets, &["wedge".into()], 1).unwrap();
        std::fs::write(assets.join("broken.model.json"), "{").unwrap();
        let cfg = PipelineConfig { asset_root: Some(assets), strict: true, categories: vec![], ..small_cfg(&dir.path().join("out")) };
        assert!(matches!(render_dataset(&cfg, &JsonLog::disabled()), Err(PipelineError::Aborted { .. })));
        assert!(!read_manifest(&cfg.output).unwrap().complete);
        let lenient = PipelineConfig { strict: false, ..cfg };
        let s = render_dataset(&lenient, &JsonLog::disabled()).unwrap();
        assert_eq!((s.records, s.failed), (4, 1));
        assert!(!read_manifest(&lenient.output).unwrap().complete);
    }
}
