//! Reading and writing every on-disk input: frames, landmark tracks, the canonical
//! model, descriptor sets and the pipeline config.

pub mod frames;
pub mod schema;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{CanonicalFaceModel, MeshError, PipelineConfig};
use crate::smoothing::MuscleDescriptorSet;

pub use frames::{
    decode_png, encode_png_gray, encode_png_rgb, load_frames, read_frame_file, read_pfm, read_pgm,
    read_y4m, write_pfm, write_pgm, write_y4m_rgb, FrameFormat,
};
pub use schema::{
    canonical_to_json, config_to_json, descriptor_digest, descriptors_to_json, landmarks_to_json,
    parse_canonical, parse_config, parse_descriptors, parse_landmarks, FrameMesh,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("{}{detail}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Decode { path: Option<PathBuf>, detail: String },
    #[error("frame {0} has dimensions different from frame 0")]
    InconsistentDimensions(usize),
    #[error("a video sequence needs at least two frames")]
    FewerThanTwoFrames,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("expected {expected} {what}, got {got}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("descriptor set is empty")]
    EmptyDescriptorSet,
    #[error("descriptor `{0}` has a negative weight")]
    NegativeWeight(String),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches a file path to decode errors that lack one.
    pub(crate) fn at(self, path: &Path) -> Self {
        match self {
            Self::Decode { path: None, detail } => Self::Decode {
                path: Some(path.to_path_buf()),
                detail,
            },
            other => other,
        }
    }
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}

pub fn load_landmarks(path: &Path) -> Result<Vec<FrameMesh>, IngestError> {
    parse_landmarks(&read_text(path)?)
}

pub fn load_canonical_model(path: &Path) -> Result<CanonicalFaceModel, IngestError> {
    parse_canonical(&read_text(path)?)
}

pub fn load_descriptors(path: &Path) -> Result<MuscleDescriptorSet, IngestError> {
    parse_descriptors(&read_text(path)?)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, IngestError> {
    parse_config(&read_text(path)?)
}
