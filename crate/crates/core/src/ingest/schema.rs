//! Versioned JSON schemas for landmarks, the canonical model, descriptors and config.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IngestError;
use crate::model::{CanonicalError, CanonicalFaceModel, FaceMesh, MeshError, PipelineConfig, Point};
use crate::smoothing::{DescriptorError, MuscleDescriptor, MuscleDescriptorSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub landmarks: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkFile {
    pub version: u32,
    pub triangles: Vec<[u32; 3]>,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalFile {
    pub version: u32,
    pub raster_width: usize,
    pub raster_height: usize,
    pub triangles: Vec<[u32; 3]>,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorEntry {
    pub name: String,
    pub position: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorFile {
    pub version: u32,
    pub gamma: f64,
    pub descriptors: Vec<DescriptorEntry>,
}

/// A per-frame mesh together with the frame size it was detected on.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMesh {
    pub width: usize,
    pub height: usize,
    pub mesh: FaceMesh,
}

fn check_version(v: u32) -> Result<(), IngestError> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(IngestError::Schema(format!("unsupported version {v}")))
    }
}

fn schema_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))
}

fn points(entry: &[[f64; 2]]) -> Vec<Point> {
    entry.iter().map(|p| Point::new(p[0], p[1])).collect()
}

fn mesh_error(e: MeshError) -> IngestError {
    IngestError::Mesh(e)
}

/// Validates a landmark file: version, dense frame indices, a constant landmark count.
pub fn parse_landmarks(text: &str) -> Result<Vec<FrameMesh>, IngestError> {
    let file: LandmarkFile = schema_json(text)?;
    check_version(file.version)?;
    if file.frames.is_empty() {
        return Err(IngestError::Schema("no frame entries".into()));
    }
    let expected = file.frames[0].landmarks.len();
    file.frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.index != i {
                return Err(IngestError::Schema(format!(
                    "frame entry {i} has index {}; indices must be 0..p-1 in order",
                    f.index
                )));
            }
            if f.landmarks.len() != expected {
                return Err(IngestError::CountMismatch {
                    what: "landmarks",
                    expected,
                    got: f.landmarks.len(),
                });
            }
            let mesh = FaceMesh::new(points(&f.landmarks), file.triangles.clone()).map_err(mesh_error)?;
            Ok(FrameMesh {
                width: f.width,
                height: f.height,
                mesh,
            })
        })
        .collect()
}

pub fn landmarks_to_json(frames: &[FrameMesh]) -> String {
    let file = LandmarkFile {
        version: SCHEMA_VERSION,
        triangles: frames.first().map(|f| f.mesh.triangles().to_vec()).unwrap_or_default(),
        frames: frames
            .iter()
            .enumerate()
            .map(|(index, f)| FrameEntry {
                index,
                width: f.width,
                height: f.height,
                landmarks: f.mesh.landmarks().iter().map(|p| [p.x, p.y]).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("landmark file serializes")
}

/// Canonical model: one frame entry whose landmarks lie inside the raster.
pub fn parse_canonical(text: &str) -> Result<CanonicalFaceModel, IngestError> {
    let file: CanonicalFile = schema_json(text)?;
    check_version(file.version)?;
    let [entry] = file.frames.as_slice() else {
        return Err(IngestError::Schema(format!(
            "canonical model needs exactly one frame entry, found {}",
            file.frames.len()
        )));
    };
    let mesh = FaceMesh::new(points(&entry.landmarks), file.triangles).map_err(mesh_error)?;
    CanonicalFaceModel::new(mesh, file.raster_width, file.raster_height).map_err(|e| match e {
        CanonicalError::Mesh(m) => IngestError::Mesh(m),
        other => IngestError::Schema(other.to_string()),
    })
}

pub fn canonical_to_json(model: &CanonicalFaceModel) -> String {
    let file = CanonicalFile {
        version: SCHEMA_VERSION,
        raster_width: model.raster_width(),
        raster_height: model.raster_height(),
        triangles: model.mesh().triangles().to_vec(),
        frames: vec![FrameEntry {
            index: 0,
            width: model.raster_width(),
            height: model.raster_height(),
            landmarks: model.mesh().landmarks().iter().map(|p| [p.x, p.y]).collect(),
        }],
    };
    serde_json::to_string_pretty(&file).expect("canonical file serializes")
}

/// Descriptor file; weights are kept as given.
pub fn parse_descriptors(text: &str) -> Result<MuscleDescriptorSet, IngestError> {
    let file: DescriptorFile = schema_json(text)?;
    check_version(file.version)?;
    let descriptors = file
        .descriptors
        .into_iter()
        .map(|d| MuscleDescriptor {
            name: d.name,
            position: Point::new(d.position[0], d.position[1]),
            weight: d.weight,
        })
        .collect();
    MuscleDescriptorSet::new(descriptors, file.gamma).map_err(|e| match e {
        DescriptorError::Empty => IngestError::EmptyDescriptorSet,
        DescriptorError::NegativeWeight(name) => IngestError::NegativeWeight(name),
        other => IngestError::Schema(other.to_string()),
    })
}

pub fn descriptors_to_json(set: &MuscleDescriptorSet) -> String {
    let file = DescriptorFile {
        version: SCHEMA_VERSION,
        gamma: set.gamma(),
        descriptors: set
            .descriptors()
            .iter()
            .map(|d| DescriptorEntry {
                name: d.name.clone(),
                position: [d.position.x, d.position.y],
                weight: d.weight,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("descriptor file serializes")
}

/// SHA-256 of the canonical JSON form, so equal sets share a digest regardless of file layout.
pub fn descriptor_digest(set: &MuscleDescriptorSet) -> String {
    hex::encode(Sha256::digest(descriptors_to_json(set).as_bytes()))
}

/// Pipeline config; absent keys take their defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig, IngestError> {
    let config: PipelineConfig = schema_json(text)?;
    config.validate().map_err(|e| IngestError::Schema(e.to_string()))?;
    Ok(config)
}

pub fn config_to_json(config: &PipelineConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}
