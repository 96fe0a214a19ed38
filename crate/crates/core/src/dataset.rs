//! On-disk dataset layout, record serialization and validation.
//!
//! ```text
//! root/manifest.json
//! root/<category>/<instance>/<view:05>.depth.png   16-bit, millimeters, 0 = no hit
//! root/<category>/<instance>/<view:05>.mask.png    8-bit, 0 or 255
//! root/<category>/<instance>/<view:05>.cloud.ply   binary little-endian, camera frame
//! root/<category>/<instance>/<view:05>.pose.json
//! root/<category>/<instance>/<view:05>.rgb.png     optional shaded image
//! ```
//!
//! Serialization is canonical: reading a record and writing it again
//! reproduces every file byte for byte.

use std::collections::{BTreeSet, HashSet};
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Frame, PointCloud};
use crate::ply;
use crate::render::{CameraIntrinsics, DepthImage, InstanceMask, ShadedImage};
use crate::se3::{PoseJson, Scale3, Se3Pose};

pub const SCHEMA_VERSION: u32 = 1;
pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Largest storable depth in meters.
pub const MAX_DEPTH_M: f64 = 65.535;

/// Tolerance on `τ ∘ λ = I` for stored records.
pub const POSE_INVERSE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("depth {depth_m} m at pixel {pixel} exceeds {MAX_DEPTH_M} m")]
    DepthOutOfRange { pixel: usize, depth_m: f64 },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("schema mismatch in {path}: {reason}")]
    SchemaMismatch { path: PathBuf, reason: String },
    #[error("corrupt payload {path}: {reason}")]
    CorruptPayload { path: PathBuf, reason: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io { path: path.to_path_buf(), source }
        }
    }
}

fn corrupt(path: &Path, reason: impl ToString) -> DatasetError {
    DatasetError::CorruptPayload { path: path.to_path_buf(), reason: reason.to_string() }
}

fn schema(path: &Path, reason: impl ToString) -> DatasetError {
    DatasetError::SchemaMismatch { path: path.to_path_buf(), reason: reason.to_string() }
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap()
}

pub fn round_all<const N: usize>(v: [f64; N]) -> [f64; N] {
    v.map(round_sig9)
}

/// File names of one record, relative to its instance directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFiles {
    pub depth: String,
    pub mask: String,
    pub cloud: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
}

impl RecordFiles {
    pub fn for_view(view_index: u32, with_rgb: bool) -> Self {
        let stem = view_stem(view_index);
        Self {
            depth: format!("{stem}.depth.png"),
            mask: format!("{stem}.mask.png"),
            cloud: format!("{stem}.cloud.ply"),
            rgb: with_rgb.then(|| format!("{stem}.rgb.png")),
        }
    }

    pub fn names(&self) -> Vec<&str> {
        let mut v = vec![self.depth.as_str(), self.mask.as_str(), self.cloud.as_str()];
        if let Some(rgb) = &self.rgb {
            v.push(rgb);
        }
        v
    }
}

pub fn view_stem(view_index: u32) -> String {
    format!("{view_index:05}")
}

pub fn instance_dir(root: &Path, category: &str, instance_id: &str) -> PathBuf {
    root.join(category).join(instance_id)
}

pub fn pose_path(root: &Path, category: &str, instance_id: &str, view_index: u32) -> PathBuf {
    instance_dir(root, category, instance_id).join(format!("{}.pose.json", view_stem(view_index)))
}

/// Ground truth for one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub category: String,
    pub instance_id: String,
    pub view_index: u32,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world pose τ.
    pub camera_pose: Se3Pose,
    /// Object-in-camera pose λ = τ⁻¹.
    pub instance_pose: Se3Pose,
    /// Bounding-box extents in meters.
    pub scale: Scale3,
    pub files: RecordFiles,
}

impl ViewRecord {
    pub fn pose_inverse_residual(&self) -> f64 {
        self.camera_pose.compose(&self.instance_pose).identity_deviation()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    schema_version: u32,
    category: String,
    instance_id: String,
    view_index: u32,
    intrinsics: CameraIntrinsics,
    camera_pose: PoseJson,
    instance_pose: PoseJson,
    scale_m: [f64; 3],
    files: RecordFiles,
}

fn pose_json(p: &Se3Pose) -> PoseJson {
    let raw = PoseJson::from(p);
    PoseJson { quat_wxyz: round_all(raw.quat_wxyz), translation: round_all(raw.translation) }
}

fn encode_pose_file(r: &ViewRecord) -> Vec<u8> {
    let k = &r.intrinsics;
    let file = PoseFile {
        schema_version: SCHEMA_VERSION,
        category: r.category.clone(),
        instance_id: r.instance_id.clone(),
        view_index: r.view_index,
        intrinsics: CameraIntrinsics { fx: round_sig9(k.fx), fy: round_sig9(k.fy), cx: round_sig9(k.cx), cy: round_sig9(k.cy), ..*k },
        camera_pose: pose_json(&r.camera_pose),
        instance_pose: pose_json(&r.instance_pose),
        scale_m: round_all(r.scale.to_array()),
        files: r.files.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&file).unwrap();
    out.push(b'\n');
    out
}

fn decode_pose_file(path: &Path, bytes: &[u8]) -> Result<ViewRecord, DatasetError> {
    let file: PoseFile = serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => schema(path, e),
        _ => corrupt(path, e),
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(schema(path, format!("unsupported schema version {}", file.schema_version)));
    }
    let pose = |p: PoseJson, name: &str| {
        Se3Pose::from_wxyz_stored(p.quat_wxyz, p.translation).map_err(|e| schema(path, format!("{name}: {e}")))
    };
    let [sx, sy, sz] = file.scale_m;
    Ok(ViewRecord {
        camera_pose: pose(file.camera_pose, "camera_pose")?,
        instance_pose: pose(file.instance_pose, "instance_pose")?,
        scale: Scale3::new(sx, sy, sz).map_err(|e| schema(path, e))?,
        intrinsics: {
            file.intrinsics.validate().map_err(|e| schema(path, e))?;
            file.intrinsics
        },
        category: file.category,
        instance_id: file.instance_id,
        view_index: file.view_index,
        files: file.files,
    })
}

/// Depth in meters to stored millimeters, rounding half up.
pub fn quantize_depth_mm(depth_m: f64) -> Option<u16> {
    if !(depth_m.is_finite() && depth_m >= 0.0) {
        return None;
    }
    let mm = (depth_m * 1000.0 + 0.5).floor();
    (mm <= u16::MAX as f64).then_some(mm as u16)
}

pub fn encode_depth_png(depth: &DepthImage) -> Result<Vec<u8>, DatasetError> {
    let mut raw = Vec::with_capacity(depth.data.len() * 2);
    for (pixel, d) in depth.data.iter().enumerate() {
        let mm = quantize_depth_mm(*d).ok_or(DatasetError::DepthOutOfRange { pixel, depth_m: *d })?;
        raw.extend_from_slice(&mm.to_be_bytes());
    }
    Ok(encode_png(depth.width, depth.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &raw))
}

pub fn encode_mask_png(mask: &InstanceMask) -> Vec<u8> {
    let raw: Vec<u8> = mask.data.iter().map(|m| if *m { 255 } else { 0 }).collect();
    encode_png(mask.width, mask.height, png::ColorType::Grayscale, png::BitDepth::Eight, &raw)
}

pub fn encode_rgb_png(img: &ShadedImage) -> Vec<u8> {
    encode_png(img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &img.to_rgb8())
}

fn encode_png(width: u32, height: u32, color: png::ColorType, bits: png::BitDepth, raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width, height);
    enc.set_color(color);
    enc.set_depth(bits);
    enc.set_compression(png::Compression::Fast);
    let mut w = enc.write_header().expect("png header to memory");
    w.write_image_data(raw).expect("png data to memory");
    w.finish().expect("png finish to memory");
    out
}

fn decode_png(path: &Path, bytes: &[u8], color: png::ColorType, bits: png::BitDepth) -> Result<(u32, u32, Vec<u8>), DatasetError> {
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(|e| corrupt(path, e))?;
    let info = reader.info();
    if info.color_type != color || info.bit_depth != bits {
        return Err(corrupt(path, format!("expected {color:?}/{bits:?}, found {:?}/{:?}", info.color_type, info.bit_depth)));
    }
    let size = reader.output_buffer_size().ok_or_else(|| corrupt(path, "image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| corrupt(path, e))?;
    buf.truncate(frame.buffer_size());
    Ok((frame.width, frame.height, buf))
}

pub fn decode_depth_png(path: &Path, bytes: &[u8]) -> Result<DepthImage, DatasetError> {
    let (width, height, raw) = decode_png(path, bytes, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let data = raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0).collect();
    Ok(DepthImage { width, height, data })
}

pub fn decode_mask_png(path: &Path, bytes: &[u8]) -> Result<InstanceMask, DatasetError> {
    let (width, height, raw) = decode_png(path, bytes, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    if let Some(v) = raw.iter().find(|v| **v != 0 && **v != 255) {
        return Err(corrupt(path, format!("mask value {v} is neither 0 nor 255")));
    }
    Ok(InstanceMask { width, height, data: raw.into_iter().map(|v| v == 255).collect() })
}

pub fn encode_cloud_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::new();
    let frame = format!("frame {}", cloud.frame.as_str());
    ply::write_points(&mut out, &cloud.points, &[&frame]).expect("ply to memory");
    out
}

pub fn decode_cloud_ply(path: &Path, bytes: &[u8]) -> Result<PointCloud, DatasetError> {
    let data = ply::parse(bytes).map_err(|e| corrupt(path, e))?;
    let frame = data
        .comments
        .iter()
        .find_map(|c| c.strip_prefix("frame ").and_then(Frame::parse))
        .ok_or_else(|| corrupt(path, "missing frame comment"))?;
    Ok(PointCloud::new(data.vertices, frame))
}

/// Image payloads of one record.
#[derive(Debug, Clone)]
pub struct RecordPayload {
    pub depth: DepthImage,
    pub mask: InstanceMask,
    pub cloud: PointCloud,
    pub rgb: Option<ShadedImage>,
}

/// A record read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRecord {
    pub record: ViewRecord,
    pub depth: DepthImage,
    pub mask: InstanceMask,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrittenPaths {
    pub pose: PathBuf,
    pub depth: PathBuf,
    pub mask: PathBuf,
    pub cloud: PathBuf,
    pub rgb: Option<PathBuf>,
}

/// Writes all files of one record under `root`.
pub fn write_record(root: &Path, record: &ViewRecord, payload: &RecordPayload) -> Result<WrittenPaths, DatasetError> {
    let k = &record.intrinsics;
    let dims = [(payload.depth.width, payload.depth.height), (payload.mask.width, payload.mask.height)];
    if dims.iter().any(|&(w, h)| w != k.width || h != k.height) {
        return Err(DatasetError::InvalidRecord(format!("payload size does not match {}x{} intrinsics", k.width, k.height)));
    }
    if payload.rgb.is_some() != record.files.rgb.is_some() {
        return Err(DatasetError::InvalidRecord("rgb payload and rgb path must both be present or absent".into()));
    }
    let residual = record.pose_inverse_residual();
    if residual > POSE_INVERSE_TOL {
        return Err(DatasetError::InvalidRecord(format!("camera and instance poses are not inverse (residual {residual:e})")));
    }
    let depth_png = encode_depth_png(&payload.depth)?;
    let dir = instance_dir(root, &record.category, &record.instance_id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let write = |name: &str, bytes: &[u8]| -> Result<PathBuf, DatasetError> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        Ok(path)
    };
    let f = &record.files;
    Ok(WrittenPaths {
        depth: write(&f.depth, &depth_png)?,
        mask: write(&f.mask, &encode_mask_png(&payload.mask))?,
        cloud: write(&f.cloud, &encode_cloud_ply(&payload.cloud))?,
        rgb: match (&f.rgb, &payload.rgb) {
            (Some(name), Some(img)) => Some(write(name, &encode_rgb_png(img))?),
            _ => None,
        },
        pose: write(&format!("{}.pose.json", view_stem(record.view_index)), &encode_pose_file(record))?,
    })
}

pub fn read_pose_file(path: &Path) -> Result<ViewRecord, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_pose_file(path, &bytes)
}

/// Reads a record from its pose JSON path; payload files are resolved next
/// to it.
pub fn read_record(pose_path: &Path) -> Result<LoadedRecord, DatasetError> {
    let record = read_pose_file(pose_path)?;
    let dir = pose_path.parent().unwrap_or(Path::new("."));
    let load = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(io_err(&p)).map(|b| (p, b))
    };
    let (dp, db) = load(&record.files.depth)?;
    let (mp, mb) = load(&record.files.mask)?;
    let (cp, cb) = load(&record.files.cloud)?;
    let depth = decode_depth_png(&dp, &db)?;
    let mask = decode_mask_png(&mp, &mb)?;
    let cloud = decode_cloud_ply(&cp, &cb)?;
    let k = &record.intrinsics;
    for (p, w, h) in [(&dp, depth.width, depth.height), (&mp, mask.width, mask.height)] {
        if w != k.width || h != k.height {
            return Err(corrupt(p, format!("{w}x{h} image, intrinsics say {}x{}", k.width, k.height)));
        }
    }
    Ok(LoadedRecord { record, depth, mask, cloud })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub view_index: u32,
    /// Pose JSON path relative to the dataset root, `/`-separated.
    pub pose: String,
    /// Fraction of the object's silhouette inside the image.
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub instance_id: String,
    pub scale: Scale3,
    /// Bounding-box center in the model frame. Estimated poses place this
    /// point, not the model origin.
    pub bbox_center: [f64; 3],
    pub records: Vec<RecordEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub name: String,
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_version: u32,
    /// False while generation is in progress or after an aborted run.
    pub complete: bool,
    /// Generation config snapshot.
    pub config: serde_json::Value,
    pub categories: Vec<CategoryEntry>,
    pub record_count: usize,
}

impl Manifest {
    pub fn new(config: serde_json::Value, categories: Vec<CategoryEntry>, complete: bool) -> Self {
        let record_count = categories.iter().flat_map(|c| &c.instances).map(|i| i.records.len()).sum();
        Self { dataset_version: DATASET_VERSION, complete, config, categories, record_count }
    }

    pub fn records(&self) -> impl Iterator<Item = (&CategoryEntry, &InstanceEntry, &RecordEntry)> {
        self.categories
            .iter()
            .flat_map(|c| c.instances.iter().flat_map(move |i| i.records.iter().map(move |r| (c, i, r))))
    }
}

pub fn record_entry_path(category: &str, instance_id: &str, view_index: u32) -> String {
    format!("{category}/{instance_id}/{}.pose.json", view_stem(view_index))
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<PathBuf, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    let mut bytes = serde_json::to_vec_pretty(manifest).unwrap();
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| schema(&path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingManifest,
    MissingFile,
    SchemaMismatch,
    CorruptPayload,
    PoseInverse,
    RecordMismatch,
    MaskDepthMismatch,
    CloudCountMismatch,
    CountMismatch,
    DuplicateCategory,
    OrphanFile,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records_checked: usize,
    pub records_valid: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

fn classify(e: &DatasetError) -> ViolationKind {
    match e {
        DatasetError::MissingFile(_) => ViolationKind::MissingFile,
        DatasetError::SchemaMismatch { .. } => ViolationKind::SchemaMismatch,
        _ => ViolationKind::CorruptPayload,
    }
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Checks the manifest against the files on disk. Each problem is reported
/// once; checks that depend on an unreadable file are skipped.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut report = ValidationReport { records_checked: 0, records_valid: 0, violations: Vec::new() };
    let push = |report: &mut ValidationReport, kind, path: String, detail: String| {
        report.violations.push(Violation { kind, path, detail });
    };
    let manifest = match read_manifest(root) {
        Ok(m) => m,
        Err(e) => {
            let kind = if matches!(e, DatasetError::MissingFile(_)) { ViolationKind::MissingManifest } else { classify(&e) };
            push(&mut report, kind, MANIFEST_FILE.into(), e.to_string());
            return report;
        }
    };
    if !manifest.complete {
        push(&mut report, ViolationKind::Incomplete, MANIFEST_FILE.into(), "generation did not finish".into());
    }
    let mut names = HashSet::new();
    for c in &manifest.categories {
        if !names.insert(c.name.as_str()) {
            push(&mut report, ViolationKind::DuplicateCategory, MANIFEST_FILE.into(), c.name.clone());
        }
    }
    let listed = manifest.records().count();
    if listed != manifest.record_count {
        push(&mut report, ViolationKind::CountMismatch, MANIFEST_FILE.into(), format!("record_count {} but {listed} records listed", manifest.record_count));
    }

    let mut expected: BTreeSet<PathBuf> = BTreeSet::new();
    expected.insert(root.join(MANIFEST_FILE));
    for (cat, inst, entry) in manifest.records() {
        report.records_checked += 1;
        let before = report.violations.len();
        let pose_path = root.join(&entry.pose);
        expected.insert(pose_path.clone());
        let dir = pose_path.parent().unwrap_or(root).to_path_buf();
        let stem_files = RecordFiles::for_view(entry.view_index, dir.join(format!("{}.rgb.png", view_stem(entry.view_index))).exists());
        let record = match read_pose_file(&pose_path) {
            Ok(r) => r,
            Err(e) => {
                // still account for the payload files so they are not orphans
                expected.extend(stem_files.names().iter().map(|n| dir.join(n)));
                push(&mut report, classify(&e), entry.pose.clone(), e.to_string());
                continue;
            }
        };
        expected.extend(record.files.names().iter().map(|n| dir.join(n)));
        if record.category != cat.name || record.instance_id != inst.instance_id || record.view_index != entry.view_index {
            push(
                &mut report,
                ViolationKind::RecordMismatch,
                entry.pose.clone(),
                format!("record says {}/{}/{}", record.category, record.instance_id, record.view_index),
            );
        }
        let residual = record.pose_inverse_residual();
        if residual > POSE_INVERSE_TOL {
            push(&mut report, ViolationKind::PoseInverse, entry.pose.clone(), format!("residual {residual:e}"));
        }
        let load = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(io_err(&p)).map(|b| (p, b))
        };
        let fail = |report: &mut ValidationReport, e: DatasetError| {
            let path = match &e {
                DatasetError::MissingFile(p) | DatasetError::CorruptPayload { path: p, .. } => rel(root, p),
                _ => entry.pose.clone(),
            };
            push(report, classify(&e), path, e.to_string());
        };
        let depth = load(&record.files.depth).and_then(|(p, b)| decode_depth_png(&p, &b)).map_err(|e| fail(&mut report, e)).ok();
        let mask = load(&record.files.mask).and_then(|(p, b)| decode_mask_png(&p, &b)).map_err(|e| fail(&mut report, e)).ok();
        let cloud = load(&record.files.cloud).and_then(|(p, b)| decode_cloud_ply(&p, &b)).map_err(|e| fail(&mut report, e)).ok();
        if let Some(name) = &record.files.rgb {
            if let Err(e) = load(name).and_then(|(p, b)| decode_png(&p, &b, png::ColorType::Rgb, png::BitDepth::Eight)) {
                fail(&mut report, e);
            }
        }
        if let (Some(depth), Some(mask)) = (&depth, &mask) {
            if (depth.width, depth.height) != (mask.width, mask.height)
                || depth.data.iter().zip(&mask.data).any(|(d, m)| (*d > 0.0) != *m)
            {
                push(&mut report, ViolationKind::MaskDepthMismatch, rel(root, &dir.join(&record.files.mask)), "mask differs from depth > 0".into());
            }
        }
        if let (Some(mask), Some(cloud)) = (&mask, &cloud) {
            if mask.count() != cloud.len() {
                push(
                    &mut report,
                    ViolationKind::CloudCountMismatch,
                    rel(root, &dir.join(&record.files.cloud)),
                    format!("{} points for {} mask pixels", cloud.len(), mask.count()),
                );
            }
        }
        if report.violations.len() == before {
            report.records_valid += 1;
        }
    }

    for entry in walkdir::WalkDir::new(root).sort_by_file_name().into_iter().filter_map(Result::ok) {
        if entry.file_type().is_file() && !expected.contains(entry.path()) {
            push(&mut report, ViolationKind::OrphanFile, rel(root, entry.path()), "not referenced by the manifest".into());
        }
    }
    report
}
