//! Batch analysis pipeline: ingest a JSON body description, run the
//! stages (classification, uniformity, unisymmetry, geometry,
//! homogeneity) in dependency order, and emit machine- and
//! human-readable reports plus plottable per-point CSV fields.
//!
//! Reports are deterministic: the same description and seed produce
//! byte-identical `report.json`. Nothing time- or host-dependent is
//! written.

use crate::classify::SymmetryDescriptor;
use crate::constitutive::ConstitutiveModel;
use crate::geometry::curvature::{riemann, sampled_field_tol};
use crate::geometry::fields::{intrinsic_metric, metric_invariance_check, volume_form, FrameField};
use crate::geometry::grid::BodyGrid;
use crate::geometry::homogeneity::{homogeneity_verdict, HomogeneityStatus, HomogeneityVerdict};
use crate::material::{
    classify_grid, fgm_verdict_with, is_uniform_with, reduced_vertex_group, verify_reduced_group,
    ClassifiedGrid, MaterialOpts, ReducedGroupClaim, UniformityVerdict,
};
use crate::smallmat::{PointId, Vec3};
use serde::Serialize;
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Version stamp carried by every `report.json`.
pub const REPORT_SCHEMA_VERSION: &str = "1";

/// Metric invariance under the accepted arrows holds by construction
/// (the cross-section is pushed along those same arrows), so any defect
/// is pure floating-point roundoff.
const METRIC_INVARIANCE_TOL: f64 = 1e-9;

/// Trials for the reduced-group recomputation at the archetype.
const REDUCED_CHECK_TRIALS: usize = 6;

/// How many per-point problems a report lists verbatim before switching
/// to counts only.
const DETAIL_CAP: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("table \"{name}\" holds {got} values but the grid has {expected} points")]
    TableShape { name: String, expected: usize, got: usize },
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// Process exit code: 2 for input problems, 3 for stage or output
    /// failures. Negative verdicts are not failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input { .. }
            | PipelineError::Parse { .. }
            | PipelineError::Schema(_)
            | PipelineError::TableShape { .. } => 2,
            PipelineError::Stage { .. } | PipelineError::Output { .. } => 3,
        }
    }
}

fn stage_failure<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// The analysis stages, in canonical (dependency) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Classify,
    Uniformity,
    Unisymmetry,
    Geometry,
    Homogeneity,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Classify,
        Stage::Uniformity,
        Stage::Unisymmetry,
        Stage::Geometry,
        Stage::Homogeneity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Uniformity => "uniformity",
            Stage::Unisymmetry => "unisymmetry",
            Stage::Geometry => "geometry",
            Stage::Homogeneity => "homogeneity",
        }
    }

    fn parse(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Stages this one cannot run without.
    fn requirements(self) -> &'static [Stage] {
        match self {
            Stage::Classify => &[],
            Stage::Uniformity | Stage::Unisymmetry => &[Stage::Classify],
            Stage::Geometry => &[Stage::Uniformity],
            Stage::Homogeneity => &[Stage::Geometry],
        }
    }

    /// The requested stages closed under dependencies, in canonical order.
    pub fn closure(requested: impl IntoIterator<Item = Stage>) -> Vec<Stage> {
        let mut set: BTreeSet<Stage> = requested.into_iter().collect();
        loop {
            let more: Vec<Stage> = set
                .iter()
                .flat_map(|s| s.requirements().iter().copied())
                .filter(|s| !set.contains(s))
                .collect();
            if more.is_empty() {
                break;
            }
            set.extend(more);
        }
        Stage::ALL.into_iter().filter(|s| set.contains(s)).collect()
    }
}

/// Report output formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Txt,
    Csv,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Txt => "txt",
            Format::Csv => "csv",
        }
    }

    pub fn parse(name: &str) -> Option<Format> {
        [Format::Json, Format::Txt, Format::Csv].into_iter().find(|f| f.name() == name)
    }
}

/// Resolved analysis tolerances; all positive.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    /// Acceptance tolerance on symmetry residuals (classification).
    pub tol_sym: f64,
    /// Acceptance tolerance on isomorphism residuals (uniformity).
    pub tol_iso: f64,
    /// Curvature / finite-difference defect budget (geometry,
    /// homogeneity); defaults to the stencil floor for the grid spacing.
    pub tol_curv: f64,
}

/// A validated body description with every default filled in.
#[derive(Debug, Clone)]
pub struct BodyDescription {
    pub grid: BodyGrid,
    /// The box the grid spans, `[lo, hi]` per axis.
    pub bounds: [[f64; 2]; 3],
    pub model: ConstitutiveModel,
    /// Requested stages closed under dependencies, canonical order.
    pub stages: Vec<Stage>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

// ---------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescription {
    grid: Option<RawGrid>,
    model: RawModel,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    tables: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(rename = "box")]
    bounds: [[f64; 2]; 3],
    dims: [usize; 3],
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    id: String,
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    stages: Option<Vec<String>>,
    #[serde(default)]
    tolerances: RawTolerances,
    seed: Option<u64>,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    tol_sym: Option<f64>,
    tol_iso: Option<f64>,
    tol_curv: Option<f64>,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<Vec<String>>,
}

/// Reads and validates a body description file.
pub fn ingest(path: &Path) -> Result<BodyDescription, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|source| PipelineError::Input { path: path.to_path_buf(), source })?;
    parse_description(&text)
}

/// Parses and validates a body description from JSON text, filling
/// defaults: a 21^3 grid over the unit box, all stages, seed 0, and
/// json + txt output into the working directory.
pub fn parse_description(text: &str) -> Result<BodyDescription, PipelineError> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let message = full.split(" at line ").next().unwrap_or(&full).to_string();
        PipelineError::Parse { line: e.line(), column: e.column(), message }
    })?;
    let raw: RawDescription =
        serde_json::from_value(value).map_err(|e| PipelineError::Schema(e.to_string()))?;

    let raw_grid =
        raw.grid.unwrap_or(RawGrid { bounds: [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], dims: [21; 3] });
    let (grid, bounds) = build_grid(&raw_grid)?;

    let model_value = resolve_model_card(&raw.model.id, &raw.model.params, &raw.tables, &grid)?;
    let model: ConstitutiveModel = serde_json::from_value(model_value)
        .map_err(|e| PipelineError::Schema(format!("model: {e}")))?;
    model.validate().map_err(|e| PipelineError::Schema(format!("model: {e}")))?;

    let stages = match raw.analysis.stages {
        None => Stage::ALL.to_vec(),
        Some(names) => {
            if names.is_empty() {
                return Err(PipelineError::Schema("analysis.stages must not be empty".into()));
            }
            let mut requested = BTreeSet::new();
            for name in &names {
                let stage = Stage::parse(name).ok_or_else(|| {
                    PipelineError::Schema(format!(
                        "analysis.stages: unknown stage \"{name}\" (expected classify, \
                         uniformity, unisymmetry, geometry, or homogeneity)"
                    ))
                })?;
                requested.insert(stage);
            }
            // Close under dependencies so every requested stage can run.
            Stage::closure(requested)
        }
    };

    let rt = raw.analysis.tolerances;
    let tolerances = Tolerances {
        tol_sym: positive_tol("tol_sym", rt.tol_sym, 1e-8)?,
        tol_iso: positive_tol("tol_iso", rt.tol_iso, 1e-7)?,
        tol_curv: positive_tol("tol_curv", rt.tol_curv, sampled_field_tol(grid.spacing()))?,
    };

    let formats = match raw.output.formats {
        None => vec![Format::Json, Format::Txt],
        Some(names) => {
            let mut formats = Vec::new();
            for name in &names {
                let format = Format::parse(name).ok_or_else(|| {
                    PipelineError::Schema(format!(
                        "output.formats: unknown format \"{name}\" (expected json, txt, or csv)"
                    ))
                })?;
                if !formats.contains(&format) {
                    formats.push(format);
                }
            }
            formats
        }
    };

    Ok(BodyDescription {
        grid,
        bounds,
        model,
        stages,
        tolerances,
        seed: raw.analysis.seed.unwrap_or(0),
        out_dir: PathBuf::from(raw.output.dir.unwrap_or_else(|| ".".into())),
        formats,
    })
}

fn build_grid(raw: &RawGrid) -> Result<(BodyGrid, [[f64; 2]; 3]), PipelineError> {
    for (a, &d) in raw.dims.iter().enumerate() {
        if d < 5 {
            return Err(PipelineError::Schema(format!(
                "grid.dims[{a}] = {d}: differential stages need at least 5 points per axis"
            )));
        }
    }
    let mut spacings = [0.0; 3];
    for a in 0..3 {
        let [lo, hi] = raw.bounds[a];
        if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
            return Err(PipelineError::Schema(format!(
                "grid.box[{a}]: bounds must be finite with the upper strictly above the lower"
            )));
        }
        spacings[a] = (hi - lo) / (raw.dims[a] - 1) as f64;
    }
    let h = spacings[0];
    if spacings.iter().any(|s| (s - h).abs() > 1e-9 * h.abs()) {
        return Err(PipelineError::Schema(format!(
            "grid.box: per-axis spacings {:?} differ; the body chart uses one uniform spacing \
             (choose box extents proportional to dims - 1)",
            spacings
        )));
    }
    let origin = [raw.bounds[0][0], raw.bounds[1][0], raw.bounds[2][0]];
    let grid =
        BodyGrid::new(raw.dims, origin, h).map_err(|e| PipelineError::Schema(e.to_string()))?;
    Ok((grid, raw.bounds))
}

fn positive_tol(name: &str, given: Option<f64>, default: f64) -> Result<f64, PipelineError> {
    let v = given.unwrap_or(default);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(PipelineError::Schema(format!("analysis.tolerances.{name} must be positive, got {v}")))
    }
}

/// Turns a `{id, params}` model card into the tagged form the model
/// deserializer expects, resolving table references and nested cards
/// (split halves, pre-distortion inner) along the way.
fn resolve_model_card(
    id: &str,
    params: &Map<String, Value>,
    tables: &BTreeMap<String, Vec<f64>>,
    grid: &BodyGrid,
) -> Result<Value, PipelineError> {
    let mut out = Map::new();
    out.insert("model".into(), Value::String(id.to_string()));
    for (key, value) in params {
        out.insert(key.clone(), resolve_param(key, value, tables, grid)?);
    }
    Ok(Value::Object(out))
}

fn resolve_param(
    key: &str,
    value: &Value,
    tables: &BTreeMap<String, Vec<f64>>,
    grid: &BodyGrid,
) -> Result<Value, PipelineError> {
    let Value::Object(obj) = value else {
        return Ok(value.clone());
    };
    if obj.contains_key("table") {
        let (Some(Value::String(name)), 1) = (obj.get("table"), obj.len()) else {
            return Err(PipelineError::Schema(format!(
                "model.params.{key}: a table reference must be exactly {{\"table\": \"name\"}}"
            )));
        };
        let Some(values) = tables.get(name) else {
            return Err(PipelineError::Schema(format!(
                "model.params.{key}: table \"{name}\" is not declared under \"tables\""
            )));
        };
        if values.len() != grid.point_count() {
            return Err(PipelineError::TableShape {
                name: name.clone(),
                expected: grid.point_count(),
                got: values.len(),
            });
        }
        return Ok(serde_json::json!({
            "origin": grid.origin(),
            "spacing": grid.spacing(),
            "dims": grid.dims(),
            "values": values,
        }));
    }
    if let Some(Value::String(id)) = obj.get("id") {
        if let Some(bad) = obj.keys().find(|k| *k != "id" && *k != "params") {
            return Err(PipelineError::Schema(format!(
                "model.params.{key}: unexpected field \"{bad}\" in a nested model card"
            )));
        }
        let empty = Map::new();
        let params = match obj.get("params") {
            None => &empty,
            Some(Value::Object(m)) => m,
            Some(_) => {
                return Err(PipelineError::Schema(format!(
                    "model.params.{key}.params must be an object"
                )))
            }
        };
        return resolve_model_card(id, params, tables, grid);
    }
    Ok(value.clone())
}

// ---------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GridProvenance {
    #[serde(rename = "box")]
    pub bounds: [[f64; 2]; 3],
    pub dims: [usize; 3],
    pub spacing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub grid: GridProvenance,
    pub model: String,
    pub stages: Vec<String>,
    pub tolerances: Tolerances,
}

/// One stage slot of the report: either it ran and carries its summary
/// (flattened) or it was skipped for a stated reason.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord<T> {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(flatten)]
    pub data: Option<T>,
}

impl<T> StageRecord<T> {
    fn ran(data: T) -> Self {
        StageRecord { status: "ran", reason: None, data: Some(data) }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        StageRecord { status: "skipped", reason: Some(reason.into()), data: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointProblem {
    pub point: PointId,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationSummary {
    pub points: usize,
    pub classified: usize,
    pub kind_histogram: BTreeMap<String, usize>,
    /// Worst verified-generator symmetry residual among classified points.
    pub worst_residual: f64,
    /// Points carrying a distinguished axis (transverse / fluid-crystal).
    pub axis_points: usize,
    pub error_count: usize,
    /// First few per-point classification errors, verbatim.
    pub errors: Vec<PointProblem>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformitySummary {
    pub uniform: bool,
    pub archetype: PointId,
    pub arrow_count: usize,
    pub failure_count: usize,
    pub failures: Vec<PointId>,
    pub residual_max: f64,
    pub residual_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedGroupSummary {
    pub kind: String,
    /// What the orthogonal (or unimodular) reduction of the normalizer
    /// family collapses to.
    pub claim: &'static str,
    /// Predicate recomputation at the archetype: sampled reduced members
    /// re-checked against the model.
    pub verified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnisymmetrySummary {
    pub unisymmetric: bool,
    pub archetype: PointId,
    pub conjugator_count: usize,
    pub failure_count: usize,
    pub failures: Vec<PointProblem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_vertex_group: Option<ReducedGroupSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometrySummary {
    pub curvature_max: f64,
    pub curvature_tol: f64,
    pub relaxable: bool,
    pub metric_invariance: bool,
    pub volume_form_range: [f64; 2],
    pub interior_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneitySummary {
    /// `true`/`false` when the kind's criterion decides; absent when only
    /// necessary conditions exist or the fluid volume answer applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homogeneous: Option<bool>,
    pub verdict: HomogeneityVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub provenance: Provenance,
    pub classification: StageRecord<ClassificationSummary>,
    pub uniformity: StageRecord<UniformitySummary>,
    pub unisymmetry: StageRecord<UnisymmetrySummary>,
    pub geometry: StageRecord<GeometrySummary>,
    pub homogeneity: StageRecord<HomogeneitySummary>,
}

/// Per-point fields for CSV export, in point-id (row-major) order.
#[derive(Debug, Clone, Default)]
pub struct FieldExports {
    /// Grid index triple and unit axis, for each point carrying one.
    pub axes: Vec<([usize; 3], Vec3)>,
    /// Grid index triple and Riemann norm over the metric's interior.
    pub curvature: Vec<([usize; 3], f64)>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: AnalysisReport,
    pub fields: FieldExports,
}

// ---------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------

fn material_opts(desc: &BodyDescription) -> MaterialOpts {
    let mut opts = MaterialOpts::default();
    opts.seed = desc.seed;
    opts.tol = desc.tolerances.tol_iso;
    opts.classify.seed = desc.seed;
    opts.classify.tol_accept = desc.tolerances.tol_sym;
    // The pairwise closure is O(n^2) arrows; the generating star carries
    // the same information at grid scale.
    opts.emit_closure = false;
    opts
}

/// Runs the requested stages in dependency order. Later stages are
/// skipped with a reason when a prerequisite verdict blocks them; hard
/// evaluation errors abort with the stage name attached.
pub fn run_pipeline(desc: &BodyDescription) -> Result<PipelineOutcome, PipelineError> {
    let opts = material_opts(desc);
    let grid = &desc.grid;
    let wants = |s: Stage| desc.stages.contains(&s);
    let mut fields = FieldExports::default();

    // Classification is the root dependency; the stage closure always
    // includes it.
    let classified = classify_grid(&desc.model, grid, &opts);
    let (class_summary, axes) = summarize_classification(grid, &classified)?;
    fields.axes = axes;
    let kind_histogram = class_summary.kind_histogram.clone();
    let unclassified = class_summary.points - class_summary.classified;
    let classification = StageRecord::ran(class_summary);

    let mut uniformity = StageRecord::skipped("not requested");
    let mut uniformity_verdict: Option<UniformityVerdict> = None;
    if wants(Stage::Uniformity) {
        let verdict = is_uniform_with(&desc.model, grid, &opts, &classified)
            .map_err(stage_failure("uniformity"))?;
        uniformity = StageRecord::ran(summarize_uniformity(&verdict));
        uniformity_verdict = Some(verdict);
    }

    let mut unisymmetry = StageRecord::skipped("not requested");
    if wants(Stage::Unisymmetry) {
        let verdict = fgm_verdict_with(&desc.model, grid, &opts, &classified)
            .map_err(stage_failure("unisymmetry"))?;
        let reduced = if verdict.unisymmetric {
            let desc_arch = &verdict.descriptors[&verdict.archetype];
            let x = grid.coords(verdict.archetype).map_err(stage_failure("unisymmetry"))?;
            let reduced = reduced_vertex_group(desc_arch);
            let verified = verify_reduced_group(
                &desc.model,
                &x,
                desc_arch,
                desc.seed,
                REDUCED_CHECK_TRIALS,
            )
            .map_err(stage_failure("unisymmetry"))?;
            Some(ReducedGroupSummary {
                kind: desc_arch.kind.label().to_string(),
                claim: claim_name(reduced.claim),
                verified,
            })
        } else {
            None
        };
        let mut failures: Vec<PointProblem> = verdict
            .failures
            .iter()
            .map(|(point, message)| PointProblem { point: *point, message: message.clone() })
            .collect();
        let failure_count = failures.len();
        failures.truncate(DETAIL_CAP);
        unisymmetry = StageRecord::ran(UnisymmetrySummary {
            unisymmetric: verdict.unisymmetric,
            archetype: verdict.archetype,
            conjugator_count: verdict.conjugators.as_ref().map_or(0, |c| c.arrows().len()),
            failure_count,
            failures,
            reduced_vertex_group: reduced,
        });
    }

    let mut geometry = StageRecord::skipped("not requested");
    let mut frames: Option<FrameField> = None;
    if wants(Stage::Geometry) {
        match geometry_stage(desc, &classified, uniformity_verdict.as_ref(), &mut fields)? {
            Ok((summary, field)) => {
                geometry = StageRecord::ran(summary);
                frames = Some(field);
            }
            Err(reason) => geometry = StageRecord::skipped(reason),
        }
    }

    let mut homogeneity = StageRecord::skipped("not requested");
    if wants(Stage::Homogeneity) {
        // Reasons in specificity order: classification gaps and mixed
        // kinds explain the block better than the uniformity failure
        // they usually cause.
        if unclassified > 0 {
            homogeneity =
                StageRecord::skipped(format!("{unclassified} points did not classify"));
        } else if kind_histogram.len() > 1 {
            let kinds: Vec<&str> = kind_histogram.keys().map(String::as_str).collect();
            homogeneity = StageRecord::skipped(format!(
                "mixed symmetry kinds: {} (no single structure group)",
                kinds.join(" vs ")
            ));
        } else if let Some(frames) = &frames {
            let descriptors: BTreeMap<PointId, SymmetryDescriptor> = classified
                .iter()
                .map(|(id, r)| (*id, r.as_ref().expect("no gaps checked above").clone()))
                .collect();
            let verdict = homogeneity_verdict(&descriptors, frames, desc.tolerances.tol_curv)
                .map_err(stage_failure("homogeneity"))?;
            let homogeneous = match verdict.status {
                HomogeneityStatus::Homogeneous => Some(true),
                HomogeneityStatus::NotHomogeneous => Some(false),
                HomogeneityStatus::NecessaryConditionsPassed
                | HomogeneityStatus::LocallyHomogeneousByVolume => None,
            };
            homogeneity = StageRecord::ran(HomogeneitySummary { homogeneous, verdict });
        } else {
            let reason = match &geometry.reason {
                Some(r) => r.clone(),
                None => "geometry stage did not run".into(),
            };
            homogeneity = StageRecord::skipped(reason);
        }
    }

    let report = AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION.to_string(),
        provenance: Provenance {
            tool: "matsym".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: desc.seed,
            grid: GridProvenance {
                bounds: desc.bounds,
                dims: desc.grid.dims(),
                spacing: desc.grid.spacing(),
            },
            model: desc.model.id().to_string(),
            stages: desc.stages.iter().map(|s| s.name().to_string()).collect(),
            tolerances: desc.tolerances.clone(),
        },
        classification,
        uniformity,
        unisymmetry,
        geometry,
        homogeneity,
    };
    Ok(PipelineOutcome { report, fields })
}

fn claim_name(claim: ReducedGroupClaim) -> &'static str {
    match claim {
        ReducedGroupClaim::FullOrthogonal => "full_orthogonal",
        ReducedGroupClaim::OriginalSymmetryGroup => "original_symmetry_group",
        ReducedGroupClaim::FullUnimodular => "full_unimodular",
    }
}

type Axes = Vec<([usize; 3], Vec3)>;

fn summarize_classification(
    grid: &BodyGrid,
    classified: &ClassifiedGrid,
) -> Result<(ClassificationSummary, Axes), PipelineError> {
    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    let mut axes = Vec::new();
    let mut errors = Vec::new();
    let mut worst = 0.0f64;
    let mut classified_count = 0usize;
    for (&id, outcome) in classified {
        match outcome {
            Ok(d) => {
                classified_count += 1;
                *histogram.entry(d.kind.label().to_string()).or_insert(0) += 1;
                worst = worst.max(d.residual);
                if let Some(axis) = d.axis {
                    axes.push((grid.index(id).map_err(stage_failure("classify"))?, axis));
                }
            }
            Err(e) => errors.push(PointProblem { point: id, message: e.to_string() }),
        }
    }
    let error_count = errors.len();
    errors.truncate(DETAIL_CAP);
    let summary = ClassificationSummary {
        points: grid.point_count(),
        classified: classified_count,
        kind_histogram: histogram,
        worst_residual: worst,
        axis_points: axes.len(),
        error_count,
        errors,
    };
    Ok((summary, axes))
}

fn summarize_uniformity(verdict: &UniformityVerdict) -> UniformitySummary {
    let residuals: Vec<f64> = verdict.residuals.values().copied().collect();
    let max = residuals.iter().copied().fold(0.0f64, f64::max);
    let mean = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().sum::<f64>() / residuals.len() as f64
    };
    let mut failures = verdict.failures.clone();
    let failure_count = failures.len();
    failures.truncate(DETAIL_CAP * 2);
    UniformitySummary {
        uniform: verdict.uniform,
        archetype: verdict.archetype,
        arrow_count: verdict.arrows.as_ref().map_or(0, |a| a.arrows().len()),
        failure_count,
        failures,
        residual_max: max,
        residual_mean: mean,
    }
}

/// Geometry over the adapted cross-section: the archetype's undistorted
/// frame pushed along the accepted arrows. `Ok(Err(reason))` is a
/// blocked stage; hard errors come back as `Err`.
fn geometry_stage(
    desc: &BodyDescription,
    classified: &ClassifiedGrid,
    uniformity: Option<&UniformityVerdict>,
    fields: &mut FieldExports,
) -> Result<Result<(GeometrySummary, FrameField), String>, PipelineError> {
    let Some(verdict) = uniformity else {
        return Ok(Err("uniformity stage did not run".into()));
    };
    if !verdict.uniform {
        return Ok(Err(
            "the body is not uniform: no global adapted cross-section exists".into()
        ));
    }
    let arrows = verdict.arrows.as_ref().expect("uniform verdicts carry arrows");
    let Some(Ok(archetype_desc)) = classified.get(&verdict.archetype) else {
        return Ok(Err("the archetype point did not classify".into()));
    };

    let fail = stage_failure("geometry");
    let grid = &desc.grid;
    let frames = FrameField::from_arrows(
        grid,
        arrows,
        verdict.archetype,
        archetype_desc.kind,
        &archetype_desc.undistorted_frame,
    )
    .map_err(fail)?;
    let metric = intrinsic_metric(&frames).map_err(stage_failure("geometry"))?;
    let volume = volume_form(&frames).map_err(stage_failure("geometry"))?;
    let curvature = riemann(&metric).map_err(stage_failure("geometry"))?;
    let invariant = metric_invariance_check(&metric, arrows, METRIC_INVARIANCE_TOL)
        .map_err(stage_failure("geometry"))?;

    let interior = curvature.interior();
    fields.curvature.clear();
    for &id in &interior {
        let index = grid.index(id).map_err(stage_failure("geometry"))?;
        let norm = curvature.norm_at(id).expect("interior point carries curvature");
        fields.curvature.push((index, norm));
    }

    let max = curvature.max_norm();
    let (lo, hi) = volume.range();
    let summary = GeometrySummary {
        curvature_max: max,
        curvature_tol: desc.tolerances.tol_curv,
        relaxable: max <= desc.tolerances.tol_curv,
        metric_invariance: invariant,
        volume_form_range: [lo, hi],
        interior_points: interior.len(),
    };
    Ok(Ok((summary, frames)))
}

// ---------------------------------------------------------------------
// Emit
// ---------------------------------------------------------------------

/// Serializes the report deterministically (pretty JSON, LF endings,
/// trailing newline).
pub fn render_json(report: &AnalysisReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    text.push('\n');
    text
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

/// Renders the human-readable report; deterministic like the JSON form.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let p = &report.provenance;
    let _ = writeln!(out, "material symmetry analysis (schema {})", report.schema_version);
    let _ = writeln!(out, "tool: {} {}", p.tool, p.version);
    let _ = writeln!(out, "seed: {}", p.seed);
    let _ = writeln!(
        out,
        "grid: {} x {} x {} points over [{}, {}] x [{}, {}] x [{}, {}], spacing {}",
        p.grid.dims[0],
        p.grid.dims[1],
        p.grid.dims[2],
        p.grid.bounds[0][0],
        p.grid.bounds[0][1],
        p.grid.bounds[1][0],
        p.grid.bounds[1][1],
        p.grid.bounds[2][0],
        p.grid.bounds[2][1],
        p.grid.spacing,
    );
    let _ = writeln!(out, "model: {}", p.model);
    let _ = writeln!(out, "stages: {}", p.stages.join(", "));
    let _ = writeln!(
        out,
        "tolerances: symmetry {}, isomorphism {}, curvature {}",
        sci(p.tolerances.tol_sym),
        sci(p.tolerances.tol_iso),
        sci(p.tolerances.tol_curv),
    );

    section(&mut out, "classification", &report.classification, |out, c| {
        let _ = writeln!(out, "  classified points: {} / {}", c.classified, c.points);
        if c.kind_histogram.is_empty() {
            let _ = writeln!(out, "  kinds: (none)");
        } else {
            let kinds: Vec<String> =
                c.kind_histogram.iter().map(|(k, n)| format!("{k} ({n})")).collect();
            let _ = writeln!(out, "  kinds: {}", kinds.join(", "));
        }
        let _ = writeln!(out, "  worst symmetry residual: {}", sci(c.worst_residual));
        let _ = writeln!(out, "  points with a distinguished axis: {}", c.axis_points);
        for e in &c.errors {
            let _ = writeln!(out, "  point {} failed: {}", e.point, e.message);
        }
        if c.error_count > c.errors.len() {
            let _ = writeln!(out, "  ... and {} more failures", c.error_count - c.errors.len());
        }
    });

    section(&mut out, "uniformity", &report.uniformity, |out, u| {
        let _ = writeln!(out, "  uniform: {}", yes_no(u.uniform));
        let _ = writeln!(out, "  archetype point id: {}", u.archetype);
        let _ = writeln!(out, "  accepted arrows: {}", u.arrow_count);
        let _ = writeln!(
            out,
            "  isomorphism residual max {}, mean {}",
            sci(u.residual_max),
            sci(u.residual_mean)
        );
        if u.failure_count > 0 {
            let _ = writeln!(
                out,
                "  unreachable points: {} (first: {:?})",
                u.failure_count, u.failures
            );
        }
    });

    section(&mut out, "unisymmetry", &report.unisymmetry, |out, u| {
        let _ = writeln!(out, "  unisymmetric: {}", yes_no(u.unisymmetric));
        let _ = writeln!(out, "  verified conjugators: {}", u.conjugator_count);
        if let Some(r) = &u.reduced_vertex_group {
            let phrase = match r.claim {
                "full_orthogonal" => "the full orthogonal group in the undistorted frame",
                "original_symmetry_group" => "the symmetry group itself",
                "full_unimodular" => "the full volume-preserving group",
                other => other,
            };
            let _ = writeln!(
                out,
                "  reduced vertex group: {} (recomputation {})",
                phrase,
                if r.verified { "passed" } else { "FAILED" }
            );
        }
        for f in &u.failures {
            let _ = writeln!(out, "  point {}: {}", f.point, f.message);
        }
        if u.failure_count > u.failures.len() {
            let _ =
                writeln!(out, "  ... and {} more failures", u.failure_count - u.failures.len());
        }
    });

    section(&mut out, "geometry", &report.geometry, |out, g| {
        let _ = writeln!(
            out,
            "  max Riemann curvature norm: {} (budget {})",
            sci(g.curvature_max),
            sci(g.curvature_tol)
        );
        let _ = writeln!(out, "  relaxable (curvature-flat): {}", yes_no(g.relaxable));
        let _ =
            writeln!(out, "  metric invariant under accepted arrows: {}", yes_no(g.metric_invariance));
        let _ = writeln!(
            out,
            "  volume form range: [{}, {}]",
            sci(g.volume_form_range[0]),
            sci(g.volume_form_range[1])
        );
        let _ = writeln!(out, "  interior points with curvature: {}", g.interior_points);
    });

    section(&mut out, "homogeneity", &report.homogeneity, |out, h| {
        let v = &h.verdict;
        let status = match v.status {
            HomogeneityStatus::Homogeneous => "homogeneous",
            HomogeneityStatus::NotHomogeneous => "not homogeneous",
            HomogeneityStatus::NecessaryConditionsPassed => {
                "necessary conditions passed (no sufficient finite test for this kind)"
            }
            HomogeneityStatus::LocallyHomogeneousByVolume => {
                "locally homogeneous by volume structure"
            }
        };
        let _ = writeln!(out, "  status: {}", status);
        let _ = writeln!(out, "  kind: {}", v.kind.label());
        let _ = writeln!(out, "  defect budget: {}", sci(v.tol));
        if let Some(c) = v.max_curvature {
            let _ = writeln!(out, "  max curvature norm: {}", sci(c));
        }
        if let Some(c) = v.max_structure_function {
            let _ = writeln!(out, "  max structure-function magnitude: {}", sci(c));
        }
        if let Some(b) = &v.axis_battery {
            let _ = writeln!(
                out,
                "  axis battery: curvature {}, plane bracket {}, covariant derivative {}",
                sci(b.curvature_max),
                sci(b.frobenius_defect),
                sci(b.covariant_derivative_defect)
            );
        }
        if let Some((lo, hi)) = v.volume_range {
            let _ = writeln!(out, "  volume density range: [{}, {}]", sci(lo), sci(hi));
        }
    });

    out
}

fn section<T>(
    out: &mut String,
    name: &str,
    record: &StageRecord<T>,
    body: impl FnOnce(&mut String, &T),
) {
    let _ = writeln!(out);
    let _ = writeln!(out, "[{name}] {}", record.status);
    match (&record.data, &record.reason) {
        (Some(data), _) => body(out, data),
        (None, Some(reason)) => {
            let _ = writeln!(out, "  reason: {reason}");
        }
        (None, None) => {}
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text)
        .map_err(|source| PipelineError::Output { path: path.to_path_buf(), source })
}

/// 17 significant digits: round-trips any f64 exactly.
fn csv_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the selected report files into `dir` and returns their paths.
/// An empty format list writes nothing (callers warn, exit code stays 0).
pub fn emit(
    outcome: &PipelineOutcome,
    dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    if formats.is_empty() {
        return Ok(written);
    }
    fs::create_dir_all(dir)
        .map_err(|source| PipelineError::Output { path: dir.to_path_buf(), source })?;
    let mut seen = Vec::new();
    for &format in formats {
        if seen.contains(&format) {
            continue;
        }
        seen.push(format);
        match format {
            Format::Json => {
                let path = dir.join("report.json");
                write_file(&path, &render_json(&outcome.report))?;
                written.push(path);
            }
            Format::Txt => {
                let path = dir.join("report.txt");
                write_file(&path, &render_text(&outcome.report))?;
                written.push(path);
            }
            Format::Csv => {
                let fdir = dir.join("fields");
                if !outcome.fields.axes.is_empty() || !outcome.fields.curvature.is_empty() {
                    fs::create_dir_all(&fdir)
                        .map_err(|source| PipelineError::Output { path: fdir.clone(), source })?;
                }
                if !outcome.fields.axes.is_empty() {
                    let mut text = String::from("i,j,k,axis_1,axis_2,axis_3\n");
                    for ([i, j, k], a) in &outcome.fields.axes {
                        let _ = writeln!(
                            text,
                            "{i},{j},{k},{},{},{}",
                            csv_num(a[0]),
                            csv_num(a[1]),
                            csv_num(a[2])
                        );
                    }
                    let path = fdir.join("axis.csv");
                    write_file(&path, &text)?;
                    written.push(path);
                }
                if !outcome.fields.curvature.is_empty() {
                    let mut text = String::from("i,j,k,riemann_norm\n");
                    for ([i, j, k], norm) in &outcome.fields.curvature {
                        let _ = writeln!(text, "{i},{j},{k},{}", csv_num(*norm));
                    }
                    let path = fdir.join("curvature.csv");
                    write_file(&path, &text)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}
