//! `posekit` command-line tool.
//!
//! Exit codes: 0 success, 1 validation or contract failure, 2 usage error.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use posekit_core::dataset::validate_dataset;
use posekit_core::grasp::{plan_task, resolve_grasp, FrameChain, GraspLibrary, PlaceTarget, PlannerConfig};
use posekit_core::instruction::{
    episodes, mean_clarifications, parse_response, read_transcript, run_transcript, HttpLlmClient, LlmClient, ParseOutcome, ScriptedStub,
    TaskKind,
};
use posekit_core::metrics::{Thresholds, TranslationThreshold};
use posekit_core::pipeline::{
    build_templates, estimate_dataset, evaluate_estimates, read_templates, render_dataset, write_fixture_assets, write_templates, EstimateSet,
    JsonLog, PipelineConfig, PipelineError,
};
use posekit_core::se3::{PoseJson, Scale3, Se3Pose};

#[derive(Parser)]
#[command(name = "posekit", version, about = "Synthetic depth datasets, category templates, pose evaluation and grasp planning")]
struct Cli {
    /// Suppress JSON-lines progress logs on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Append JSON-lines logs to this file instead of stderr.
    #[arg(long, global = true, value_name = "FILE")]
    log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that read a pipeline config.
#[derive(clap::Args, Clone)]
struct Common {
    /// Pipeline config (TOML or JSON). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated category filter.
    #[arg(long, value_delimiter = ',')]
    categories: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a pose-annotated depth dataset.
    Render {
        #[command(flatten)]
        common: Common,
        /// Dataset root directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory of `*.model.json` assets (built-in fixtures otherwise).
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Instances per built-in fixture category.
        #[arg(long)]
        instances: Option<usize>,
        /// Views per instance.
        #[arg(long)]
        views: Option<usize>,
        /// View sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Abort at the first failing record.
        #[arg(long)]
        strict: bool,
        /// Also write shaded RGB images.
        #[arg(long)]
        rgb: bool,
    },
    /// Build canonical point-cloud templates, one per category.
    Template {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Template size.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate object poses for every record of a dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long, default_value = "estimates.json")]
        out: PathBuf,
    },
    /// Score estimates against dataset ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        /// `ROT_DEG,TRANS,IOU`; TRANS in meters, or a diameter fraction
        /// with a `d` suffix (e.g. `10,0.02d,0.25`).
        #[arg(long, value_parser = parse_thresholds)]
        thresholds: Option<Thresholds>,
        #[arg(long)]
        min_visibility: Option<f64>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Also write per-record errors as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Turn an estimate and a grasp library into a waypoint plan.
    Plan {
        /// Grasp spec file or directory of spec files.
        #[arg(long)]
        grasps: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long, value_parser = parse_task)]
        task: TaskKind,
        /// JSON with `pose` and `scale` (an estimate record works).
        #[arg(long)]
        estimate: PathBuf,
        /// Camera-in-base pose JSON `{quat_wxyz, translation}`.
        #[arg(long)]
        extrinsics: PathBuf,
        /// Place target JSON: `{pose}` or, to stack, `{pose, scale}`.
        #[arg(long)]
        place: Option<PathBuf>,
        /// Planner config JSON.
        #[arg(long)]
        planner: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse model replies: a transcript, a single reply, or a live prompt.
    Parse {
        /// JSON-lines transcript of exchanges.
        #[arg(long, conflicts_with_all = ["response", "prompt"])]
        transcript: Option<PathBuf>,
        /// File with one model reply (`-` for stdin).
        #[arg(long, conflicts_with = "prompt")]
        response: Option<PathBuf>,
        /// Send this prompt to the model and parse the reply.
        #[arg(long)]
        prompt: Option<String>,
        /// Canned-response corpus used instead of a live endpoint.
        #[arg(long, requires = "prompt")]
        stub: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a dataset against its manifest and file schema.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the built-in fixture models as OBJ assets.
    Assets {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        categories: Vec<String>,
        #[arg(long, default_value_t = 2)]
        instances: usize,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Contract(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Contract(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Failure::Usage(e.into()),
            other => Failure::Contract(other.into()),
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [rot, trans, iou] = parts[..] else {
        return Err("expected ROT_DEG,TRANS,IOU".into());
    };
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let translation = match trans.strip_suffix(['d', 'D']) {
        Some(f) => TranslationThreshold::DiameterFraction(num(f)?),
        None => TranslationThreshold::Meters(num(trans.trim_end_matches('m'))?),
    };
    let t = Thresholds { rotation_deg: num(rot)?, translation, iou: num(iou)? };
    t.validate().map_err(|e| e.to_string())?;
    Ok(t)
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    TaskKind::parse(s).ok_or_else(|| format!("unknown task {s:?}; expected pick_place, handover, stack or tidy"))
}

fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if !common.categories.is_empty() {
        cfg.categories = common.categories.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?,
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            // a closed reader (e.g. `| head`) is not an error
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(anyhow!("writing stdout: {e}").into()),
            _ => {}
        },
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Usage)?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
struct ObjectFile {
    pose: PoseJson,
    scale: Scale3,
}

#[derive(Deserialize)]
struct PlaceFile {
    pose: PoseJson,
    #[serde(default)]
    scale: Option<Scale3>,
}

fn to_pose(p: PoseJson, what: &str) -> Result<Se3Pose, Failure> {
    Se3Pose::try_from(p).map_err(|e| usage(format!("{what}: {e}")))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let log = match (&cli.log, cli.quiet) {
        (_, true) => JsonLog::disabled(),
        (Some(p), false) => {
            let f = std::fs::OpenOptions::new().create(true).append(true).open(p).with_context(|| format!("opening log {}", p.display()))?;
            JsonLog::to_writer(Box::new(f))
        }
        (None, false) => JsonLog::stderr(),
    };
    match cli.command {
        Command::Render { common, out, assets, instances, views, seed, strict, rgb } => {
            let mut cfg = load_config(&common)?;
            if let Some(o) = out {
                cfg.output = o;
            }
            if assets.is_some() {
                cfg.asset_root = assets;
            }
            if let Some(n) = instances {
                cfg.fixture_instances = n;
            }
            if let Some(n) = views {
                cfg.views.n_views = n;
            }
            if let Some(s) = seed {
                cfg.views.seed = s;
            }
            cfg.strict |= strict;
            cfg.render_rgb |= rgb;
            cfg.validate()?;
            let summary = render_dataset(&cfg, &log)?;
            emit(&serde_json::to_value(&summary).unwrap(), None)?;
            Ok(summary.failed == 0)
        }
        Command::Template { common, out, assets, k, seed } => {
            let mut cfg = load_config(&common)?;
            if let Some(o) = out {
                cfg.template_dir = o;
            }
            if assets.is_some() {
                cfg.asset_root = assets;
            }
            if let Some(k) = k {
                cfg.template.k = k;
            }
            if let Some(s) = seed {
                cfg.template.seed = s;
            }
            cfg.validate()?;
            let templates = build_templates(&cfg)?;
            let paths = write_templates(&cfg.template_dir, &templates, &cfg.template)?;
            emit(&serde_json::json!({ "templates": paths }), None)?;
            Ok(true)
        }
        Command::Estimate { common, dataset, templates, estimator, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = estimator {
                cfg.estimator = e;
            }
            let dir = templates.unwrap_or_else(|| cfg.template_dir.clone());
            let templates = read_templates(&dir)?;
            let set = estimate_dataset(&dataset, &templates, &cfg, &log).map_err(|e| match e {
                PipelineError::Estimator(posekit_core::estimator::EstimatorError::UnknownEstimator(_)) => usage(e),
                other => other.into(),
            })?;
            set.write(&out)?;
            emit(&serde_json::json!({ "estimates": out, "records": set.records.len(), "failed": set.failed() }), None)?;
            Ok(set.failed() == 0)
        }
        Command::Eval { common, dataset, estimates, thresholds, min_visibility, out, csv } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            if let Some(v) = min_visibility {
                cfg.min_visibility = v;
            }
            cfg.validate()?;
            let set = EstimateSet::read(&estimates)?;
            let report = evaluate_estimates(&dataset, &set, &cfg)?;
            emit(&serde_json::to_value(&report).unwrap(), Some(&out))?;
            if let Some(p) = csv {
                let f = std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                report.write_csv(f).context("writing csv")?;
            }
            emit(
                &serde_json::json!({
                    "report": out,
                    "evaluated": report.evaluated,
                    "accuracy": report.accuracy,
                    "per_category": report.per_category,
                }),
                None,
            )?;
            Ok(set.failed() == 0)
        }
        Command::Plan { grasps, category, task, estimate, extrinsics, place, planner, out } => {
            let lib = GraspLibrary::load(&grasps).map_err(usage)?;
            let spec = lib.get(&category, task).map_err(usage)?;
            let obj: ObjectFile = read_json(&estimate)?;
            let chain = FrameChain {
                object_in_camera: to_pose(obj.pose, "estimate pose")?,
                object_scale: obj.scale,
                camera_in_base: to_pose(read_json(&extrinsics)?, "extrinsics")?,
            };
            let cfg: PlannerConfig = match planner {
                Some(p) => read_json(&p)?,
                None => PlannerConfig::default(),
            };
            let place = match place {
                Some(p) => {
                    let f: PlaceFile = read_json(&p)?;
                    let pose = to_pose(f.pose, "place pose")?;
                    Some(match (task, f.scale) {
                        (TaskKind::Stack, Some(scale)) => PlaceTarget::OnTopOf { pose, scale },
                        (TaskKind::Stack, None) => return Err(usage("stack needs a place target with a scale")),
                        _ => PlaceTarget::Pose(pose),
                    })
                }
                None => None,
            };
            let plan = resolve_grasp(spec, &chain, &cfg.workspace)
                .and_then(|g| plan_task(task, &g, place.as_ref(), &cfg))
                .map_err(|e| match e {
                    posekit_core::grasp::GraspError::MissingPlaceTarget(_) => usage(e),
                    other => Failure::Contract(other.into()),
                })?;
            emit(&serde_json::to_value(&plan).unwrap(), out.as_deref())?;
            Ok(true)
        }
        Command::Parse { transcript, response, prompt, stub, out } => {
            if let Some(path) = transcript {
                let exchanges = read_transcript(&path).map_err(usage)?;
                let rounds = run_transcript(&exchanges).map_err(|e| Failure::Contract(e.into()))?;
                let eps = episodes(&rounds);
                let ok = rounds.iter().all(|r| !matches!(r.outcome, ParseOutcome::ParseError { .. }));
                emit(
                    &serde_json::json!({
                        "rounds": rounds,
                        "episodes": eps.len(),
                        "clarifications": eps.iter().map(|e| e.clarifications).collect::<Vec<_>>(),
                        "mean_clarifications": mean_clarifications(&eps),
                    }),
                    out.as_deref(),
                )?;
                return Ok(ok);
            }
            let text = if let Some(p) = prompt {
                let reply = match stub {
                    Some(s) => {
                        let corpus = std::fs::read_to_string(&s).with_context(|| format!("reading {}", s.display())).map_err(Failure::Usage)?;
                        ScriptedStub::from_jsonl(&corpus).map_err(usage)?.send(&p)
                    }
                    None => HttpLlmClient::from_env().and_then(|c| c.send(&p)),
                };
                reply.map_err(|e| Failure::Contract(e.into()))?
            } else {
                match response.as_deref() {
                    Some(p) if p != Path::new("-") => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::Usage)?,
                    _ => {
                        let mut s = String::new();
                        std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
                        s
                    }
                }
            };
            let outcome = parse_response(&text);
            let ok = !matches!(outcome, ParseOutcome::ParseError { .. });
            emit(&serde_json::to_value(&outcome).unwrap(), out.as_deref())?;
            Ok(ok)
        }
        Command::Validate { dataset, out } => {
            let report = validate_dataset(&dataset);
            emit(&serde_json::to_value(&report).unwrap(), out.as_deref())?;
            Ok(report.is_ok())
        }
        Command::Assets { out, categories, instances } => {
            let paths = write_fixture_assets(&out, &categories, instances)?;
            emit(&serde_json::json!({ "models": paths }), None)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Contract(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
    }
}
