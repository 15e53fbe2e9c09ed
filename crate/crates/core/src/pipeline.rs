//! Stage orchestration shared by the one-shot pipeline and the per-stage commands,
//! so that both produce identical files.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::features::{extract_features, feature_names, write_features_csv, FeatureRow, FEATURE_VERSION};
use crate::flow::{flow_sequence, read_field_csv, write_field_csv, DisplacementField, FlowError};
use crate::geometry::{build_charts, densify_landmarks, warp_to_canonical, DenseLandmarkSet, GeometryError};
use crate::ingest::{self, descriptor_digest, write_pfm, write_pgm, write_y4m_rgb, FrameMesh, IngestError};
use crate::model::{Anchor, CanonicalFaceModel, FrameImage, PipelineConfig, Point, VideoSequence};
use crate::render::{field_to_frame, render_overlay, OverlayFrame, RenderOptions};
use crate::smoothing::{DescriptorError, MuscleDescriptorSet, SmoothedField, SmoothingError, SmoothingStack};

pub const FIELD_SCHEMA: &str = "facegps displacement field v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Warp,
    Flow,
    Smooth,
    Overlay,
    Features,
    Classify,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Warp => "warp",
            Stage::Flow => "flow",
            Stage::Smooth => "smooth",
            Stage::Overlay => "overlay",
            Stage::Features => "features",
            Stage::Classify => "classify",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

/// Bad or inconsistent inputs versus a numerical breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Numeric,
}

#[derive(Debug, Error)]
#[error("error [{stage}]: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    pub fn input(stage: Stage, e: impl fmt::Display) -> Self {
        Self {
            stage,
            kind: FailureKind::Input,
            message: e.to_string(),
        }
    }

    pub fn numeric(stage: Stage, e: impl fmt::Display) -> Self {
        Self {
            stage,
            kind: FailureKind::Numeric,
            message: e.to_string(),
        }
    }

    /// 2 for input errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Input => 2,
            FailureKind::Numeric => 3,
        }
    }
}

fn geometry_error(stage: Stage, e: GeometryError) -> PipelineError {
    match e {
        GeometryError::DegenerateTriangle(_) => PipelineError::numeric(stage, e),
        other => PipelineError::input(stage, other),
    }
}

fn smoothing_error(e: SmoothingError) -> PipelineError {
    PipelineError::input(Stage::Smooth, e)
}

/// Where descriptors come from.
#[derive(Debug, Clone)]
pub enum DescriptorChoice {
    File(MuscleDescriptorSet),
    /// `m` unit-weight descriptors spread over the dense landmarks.
    Uniform(usize),
}

/// Greedy farthest-point sampling, seeded by the point nearest the centroid; ties
/// go to the lower index.
pub fn farthest_point_sample(points: &[Point], m: usize) -> Vec<Point> {
    if points.is_empty() || m == 0 {
        return Vec::new();
    }
    let n = points.len() as f64;
    let centroid = Point::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
    let to_centroid: Vec<f64> = points.iter().map(|p| -(p - centroid).norm_squared()).collect();
    let mut chosen = vec![argmax(&to_centroid)];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[chosen[0]]).norm_squared()).collect();
    while chosen.len() < m.min(points.len()) {
        let next = argmax(&dist);
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Inputs resolved against the canonical model: dense points and descriptors with
/// their effective bandwidth.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: PipelineConfig,
    pub canonical: CanonicalFaceModel,
    pub dense: DenseLandmarkSet,
    pub descriptors: MuscleDescriptorSet,
    pub descriptor_source: &'static str,
}

impl Prepared {
    /// Bandwidth: config value if set, else the descriptor file's, else the raster default.
    pub fn new(
        config: PipelineConfig,
        canonical: CanonicalFaceModel,
        choice: DescriptorChoice,
    ) -> Result<Self, PipelineError> {
        config.validate().map_err(|e| PipelineError::input(Stage::Config, e))?;
        let dense = densify_landmarks(canonical.mesh(), config.subdivision_depth);
        let descriptor_error = |e: DescriptorError| PipelineError::input(Stage::Ingest, e);
        let (descriptors, source) = match choice {
            DescriptorChoice::File(set) => {
                let gamma = config.mks_gamma.unwrap_or(set.gamma());
                (set.with_gamma(gamma).map_err(descriptor_error)?, "file")
            }
            DescriptorChoice::Uniform(m) => {
                if m == 0 {
                    return Err(PipelineError::input(Stage::Ingest, IngestError::EmptyDescriptorSet));
                }
                if m > dense.len() {
                    return Err(PipelineError::input(
                        Stage::Config,
                        format!("{m} uniform descriptors requested but only {} dense points exist", dense.len()),
                    ));
                }
                let gamma = config.gamma_for(canonical.raster_width());
                let positions = farthest_point_sample(&dense.points, m);
                (MuscleDescriptorSet::uniform(&positions, gamma).map_err(descriptor_error)?, "uniform")
            }
        };
        descriptors
            .check_within(canonical.raster_width(), canonical.raster_height())
            .map_err(descriptor_error)?;
        Ok(Self {
            config,
            canonical,
            dense,
            descriptors,
            descriptor_source: source,
        })
    }

    fn raster(&self) -> (usize, usize) {
        (self.canonical.raster_width(), self.canonical.raster_height())
    }

    /// Warps every frame onto the canonical raster through its own mesh's charts.
    pub fn warp(&self, frames: &VideoSequence, meshes: &[FrameMesh]) -> Result<Vec<FrameImage>, PipelineError> {
        if meshes.len() != frames.frame_count() {
            return Err(PipelineError::input(
                Stage::Ingest,
                IngestError::CountMismatch {
                    what: "landmark frame entries",
                    expected: frames.frame_count(),
                    got: meshes.len(),
                },
            ));
        }
        for (i, m) in meshes.iter().enumerate() {
            if (m.width, m.height) != (frames.width(), frames.height()) {
                return Err(PipelineError::input(
                    Stage::Ingest,
                    format!(
                        "landmark frame {i} is {}x{} but video frames are {}x{}",
                        m.width,
                        m.height,
                        frames.width(),
                        frames.height()
                    ),
                ));
            }
        }
        frames
            .frames()
            .par_iter()
            .zip(meshes)
            .map(|(frame, m)| {
                warp_to_canonical(frame, &m.mesh, &self.canonical).map_err(|e| geometry_error(Stage::Warp, e))
            })
            .collect()
    }

    pub fn flow(&self, canonical_frames: &[FrameImage]) -> Result<Vec<DisplacementField>, PipelineError> {
        let (w, h) = self.raster();
        if let Some(f) = canonical_frames.iter().find(|f| (f.width(), f.height()) != (w, h)) {
            return Err(PipelineError::input(
                Stage::Flow,
                FlowError::SizeMismatch(f.width(), f.height(), w, h),
            ));
        }
        flow_sequence(canonical_frames, &self.dense.points, &self.config).map_err(|e| PipelineError::input(Stage::Flow, e))
    }

    pub fn smoothing_stack(&self) -> Result<SmoothingStack, PipelineError> {
        SmoothingStack::new(
            &self.dense,
            self.config.spectral_modes,
            self.descriptors.clone(),
            self.config.wavelet_threshold_mode,
        )
        .map_err(smoothing_error)
    }

    pub fn smooth(&self, raw: &[DisplacementField]) -> Result<Vec<SmoothedField>, PipelineError> {
        self.check_points(raw, Stage::Smooth)?;
        let out = self.smoothing_stack()?.smooth_sequence(raw).map_err(smoothing_error)?;
        let finite = out
            .iter()
            .all(|s| s.field.displacements.iter().all(|d| d.x.is_finite() && d.y.is_finite()));
        if !finite {
            return Err(PipelineError::numeric(Stage::Smooth, "smoothed field contains non-finite values"));
        }
        Ok(out)
    }

    fn check_points(&self, fields: &[DisplacementField], stage: Stage) -> Result<(), PipelineError> {
        for f in fields {
            if f.points != self.dense.points {
                return Err(PipelineError::input(
                    stage,
                    format!(
                        "field {}-{} was not computed on this canonical model's dense points (subdivision {})",
                        f.frame_pair.0, f.frame_pair.1, self.config.subdivision_depth
                    ),
                ));
            }
        }
        Ok(())
    }

    /// One overlay per field: consecutive pairs `(i, i+1)` draw on frame `i`,
    /// anchored pairs `(0, i)` on frame `i`.
    pub fn overlay(
        &self,
        frames: &VideoSequence,
        meshes: &[FrameMesh],
        smoothed: &[DisplacementField],
        heat: bool,
    ) -> Result<Vec<(OverlayFrame, usize)>, PipelineError> {
        self.check_points(smoothed, Stage::Overlay)?;
        let options = RenderOptions {
            scale: self.config.overlay_scale,
            heat,
        };
        smoothed
            .par_iter()
            .map(|field| {
                let target = match self.config.anchor {
                    Anchor::Consecutive => field.frame_pair.0,
                    Anchor::First => field.frame_pair.1,
                };
                let (Some(frame), Some(mesh)) = (frames.frames().get(target), meshes.get(target)) else {
                    return Err(PipelineError::input(
                        Stage::Overlay,
                        format!("field {}-{} refers to a missing frame", field.frame_pair.0, field.frame_pair.1),
                    ));
                };
                let charts = build_charts(&mesh.mesh, self.canonical.mesh()).map_err(|e| geometry_error(Stage::Overlay, e))?;
                let mapped = field_to_frame(field, &charts, self.canonical.triangle_map());
                Ok((render_overlay(frame, &mapped.vectors, options), mapped.skipped))
            })
            .collect()
    }

    pub fn features(&self, smoothed: &[DisplacementField]) -> Result<Vec<f64>, PipelineError> {
        extract_features(smoothed, &self.descriptors).map_err(|e| PipelineError::input(Stage::Features, e))
    }

    pub fn raw_comments(&self) -> Vec<String> {
        vec![
            FIELD_SCHEMA.to_string(),
            "stage=raw".into(),
            format!("config_digest={}", self.config.digest()),
            format!("dense_points={}", self.dense.len()),
            format!("subdivision={}", self.config.subdivision_depth),
            format!("anchor={}", anchor_name(self.config.anchor)),
        ]
    }

    pub fn smoothed_comments(&self) -> Vec<String> {
        vec![
            FIELD_SCHEMA.to_string(),
            "stage=smoothed".into(),
            format!("config_digest={}", self.config.digest()),
            format!("spectral_k={}", self.config.spectral_modes),
            format!("gamma={}", self.descriptors.gamma()),
            format!("threshold={}", self.config.wavelet_threshold_mode),
            format!("descriptor_digest={}", descriptor_digest(&self.descriptors)),
            format!("descriptor_source={}", self.descriptor_source),
        ]
    }

    pub fn feature_comments(&self) -> Vec<String> {
        vec![
            format!("facegps features v{FEATURE_VERSION}"),
            format!("config_digest={}", self.config.digest()),
            format!("descriptor_digest={}", descriptor_digest(&self.descriptors)),
        ]
    }
}

fn anchor_name(a: Anchor) -> &'static str {
    match a {
        Anchor::Consecutive => "consecutive",
        Anchor::First => "first",
    }
}

fn output_error(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::input(Stage::Output, format!("{}: {e}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|e| output_error(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| output_error(path, e))
}

/// `dir/{prefix}_{t:06}.csv` per field.
pub fn write_fields(
    dir: &Path,
    prefix: &str,
    fields: &[DisplacementField],
    comments: &[String],
) -> Result<(), PipelineError> {
    create_dir(dir)?;
    for (t, f) in fields.iter().enumerate() {
        let path = dir.join(format!("{prefix}_{t:06}.csv"));
        let file = fs::File::create(&path).map_err(|e| output_error(&path, e))?;
        write_field_csv(BufWriter::new(file), f, comments).map_err(|e| output_error(&path, e))?;
    }
    Ok(())
}

/// Reads `dir/{prefix}_*.csv` in file-name order.
pub fn read_fields(dir: &Path, prefix: &str, stage: Stage) -> Result<Vec<DisplacementField>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::input(stage, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&format!("{prefix}_")) && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PipelineError::input(stage, format!("no {prefix}_*.csv files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let file = fs::File::open(p).map_err(|e| PipelineError::input(stage, format!("{}: {e}", p.display())))?;
            read_field_csv(std::io::BufReader::new(file))
                .map_err(|e| PipelineError::input(stage, format!("{}: {e}", p.display())))
        })
        .collect()
}

/// `canonical_{i:06}.pfm` (exact) plus 8-bit previews under `preview/`.
pub fn write_canonical_frames(dir: &Path, frames: &[FrameImage]) -> Result<(), PipelineError> {
    let preview = dir.join("preview");
    create_dir(&preview)?;
    for (i, f) in frames.iter().enumerate() {
        let mut pfm = Vec::new();
        write_pfm(&mut pfm, f).map_err(|e| output_error(dir, e))?;
        write_bytes(&dir.join(format!("canonical_{i:06}.pfm")), &pfm)?;
        let mut pgm = Vec::new();
        write_pgm(&mut pgm, f).map_err(|e| output_error(dir, e))?;
        write_bytes(&preview.join(format!("canonical_{i:06}.pgm")), &pgm)?;
    }
    Ok(())
}

/// Overlay PNGs (`overlay_{t:06}.png`) and, optionally, `overlay.y4m`.
pub fn write_overlays(dir: &Path, overlays: &[(OverlayFrame, usize)], y4m: bool) -> Result<(), PipelineError> {
    create_dir(dir)?;
    for (t, (o, _)) in overlays.iter().enumerate() {
        write_bytes(&dir.join(format!("overlay_{t:06}.png")), &o.to_png())?;
    }
    if y4m {
        if let Some((first, _)) = overlays.first() {
            let path = dir.join("overlay.y4m");
            let rgb: Vec<Vec<u8>> = overlays.iter().map(|(o, _)| o.rgb.clone()).collect();
            let file = fs::File::create(&path).map_err(|e| output_error(&path, e))?;
            write_y4m_rgb(BufWriter::new(file), first.width, first.height, &rgb).map_err(|e| output_error(&path, e))?;
        }
    }
    Ok(())
}

pub fn write_feature_file(
    path: &Path,
    prepared: &Prepared,
    rows: &[FeatureRow],
) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    write_features_csv(&mut buf, &feature_names(&prepared.descriptors), rows, &prepared.feature_comments())
        .map_err(|e| output_error(path, e))?;
    write_bytes(path, &buf)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub method: &'static str,
    pub modes: usize,
    pub full_basis: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub version: u32,
    pub tool_version: &'static str,
    pub config_digest: String,
    pub config: PipelineConfig,
    pub frame_count: usize,
    pub field_count: usize,
    pub dense_landmark_count: usize,
    pub subdivision: usize,
    pub spectral: SpectralSummary,
    pub gamma: f64,
    pub descriptor_source: &'static str,
    pub descriptor_digest: String,
    pub descriptor_count: usize,
    pub valid_points: Vec<usize>,
    pub skipped_points: Vec<usize>,
    pub arrows_drawn: Vec<usize>,
}

/// Everything the one-shot pipeline needs.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub frames: VideoSequence,
    pub meshes: Vec<FrameMesh>,
    pub prepared: Prepared,
    pub sequence_id: String,
    pub label: Option<String>,
    pub emit_canonical: bool,
    pub heat: bool,
    pub y4m: bool,
}

/// In-memory products of a full run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub canonical_frames: Vec<FrameImage>,
    pub raw: Vec<DisplacementField>,
    pub smoothed: Vec<SmoothedField>,
    pub overlays: Vec<(OverlayFrame, usize)>,
    pub features: Vec<f64>,
    pub metadata: RunMetadata,
}

/// warp, flow, smoothing, overlay, features; nothing is written.
pub fn run_pipeline(inputs: &PipelineInputs) -> Result<PipelineOutput, PipelineError> {
    let p = &inputs.prepared;
    let canonical_frames = p.warp(&inputs.frames, &inputs.meshes)?;
    let raw = p.flow(&canonical_frames)?;
    let stack = p.smoothing_stack()?;
    let smoothed = p.smooth(&raw)?;
    let cartesian: Vec<DisplacementField> = smoothed.iter().map(|s| s.field.clone()).collect();
    let overlays = p.overlay(&inputs.frames, &inputs.meshes, &cartesian, inputs.heat)?;
    let features = p.features(&cartesian)?;
    let basis = stack.spectral().basis();
    let metadata = RunMetadata {
        version: 1,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_digest: p.config.digest(),
        config: p.config.clone(),
        frame_count: inputs.frames.frame_count(),
        field_count: raw.len(),
        dense_landmark_count: p.dense.len(),
        subdivision: p.config.subdivision_depth,
        spectral: SpectralSummary {
            method: "graph-laplacian-lowpass",
            modes: basis.mode_count(),
            full_basis: basis.is_full(),
            converged: basis.converged(),
            iterations: basis.iterations(),
        },
        gamma: p.descriptors.gamma(),
        descriptor_source: p.descriptor_source,
        descriptor_digest: descriptor_digest(&p.descriptors),
        descriptor_count: p.descriptors.len(),
        valid_points: raw.iter().map(|f| f.valid_count()).collect(),
        skipped_points: overlays.iter().map(|(_, s)| *s).collect(),
        arrows_drawn: overlays.iter().map(|(o, _)| o.arrows_drawn).collect(),
    };
    Ok(PipelineOutput {
        canonical_frames,
        raw,
        smoothed,
        overlays,
        features,
        metadata,
    })
}

/// Writes every output of [`run_pipeline`] under `out_dir`.
pub fn write_pipeline_output(
    out_dir: &Path,
    inputs: &PipelineInputs,
    output: &PipelineOutput,
) -> Result<(), PipelineError> {
    let p = &inputs.prepared;
    create_dir(out_dir)?;
    if inputs.emit_canonical {
        write_canonical_frames(&out_dir.join("canonical"), &output.canonical_frames)?;
    }
    write_fields(out_dir, "raw", &output.raw, &p.raw_comments())?;
    let cartesian: Vec<DisplacementField> = output.smoothed.iter().map(|s| s.field.clone()).collect();
    write_fields(out_dir, "smoothed", &cartesian, &p.smoothed_comments())?;
    write_overlays(out_dir, &output.overlays, inputs.y4m)?;
    let row = FeatureRow {
        sequence: inputs.sequence_id.clone(),
        values: output.features.clone(),
        label: inputs.label.clone(),
    };
    write_feature_file(&out_dir.join("features.csv"), p, &[row])?;
    let json = serde_json::to_string_pretty(&output.metadata).expect("metadata serializes");
    write_bytes(&out_dir.join("run.json"), json.as_bytes())
}

/// Loads a canonical model, mapping failures to the ingest stage.
pub fn load_canonical(path: &Path) -> Result<CanonicalFaceModel, PipelineError> {
    ingest::load_canonical_model(path).map_err(|e| PipelineError::input(Stage::Ingest, e))
}
