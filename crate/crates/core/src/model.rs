//! Core domain types shared by every pipeline stage.
//!
//! Coordinates are continuous pixel coordinates: pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)` and its sample sits at the center `(i + 0.5, j + 0.5)`.

use std::collections::BTreeSet;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{rasterize_triangle_map, TriangleMap};

/// 2-D point in pixel coordinates.
pub type Point = Point2<f64>;
/// 2-D displacement in pixel units.
pub type Vec2 = Vector2<f64>;

/// Absolute signed-area threshold below which a triangle is treated as degenerate.
pub const AREA_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("frame {frame_index}: expected {expected} pixels, got {got}")]
    PixelCount {
        frame_index: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame {frame_index}: intensity at pixel {pixel} is not finite or outside [0, 1]")]
    IntensityRange { frame_index: usize, pixel: usize },
    #[error("frame has zero width or height")]
    EmptyFrame,
    #[error("a video sequence needs at least two frames")]
    FewerThanTwoFrames,
    #[error("frame {0} has dimensions different from frame 0")]
    InconsistentDimensions(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("triangle {0} references a landmark index out of range")]
    IndexOutOfRange(usize),
    #[error("mesh graph is not connected")]
    DisconnectedMesh,
    #[error("triangle {0} has winding opposite to triangle 0")]
    InconsistentWinding(usize),
    #[error("mesh has no triangles")]
    NoTriangles,
    #[error("landmark {0} is not finite")]
    NonFiniteLandmark(usize),
}

/// One grayscale video frame with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    frame_index: usize,
}

impl FrameImage {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        frame_index: usize,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyFrame);
        }
        if pixels.len() != width * height {
            return Err(ModelError::PixelCount {
                frame_index,
                expected: width * height,
                got: pixels.len(),
            });
        }
        if let Some(pixel) = pixels
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(ModelError::IntensityRange { frame_index, pixel });
        }
        Ok(Self {
            width,
            height,
            pixels,
            frame_index,
        })
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel center, clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        frame_index: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x as f64 + 0.5, y as f64 + 0.5);
                pixels.push(if v.is_finite() { v.clamp(0.0, 1.0) as f32 } else { 0.0 });
            }
        }
        Self {
            width,
            height,
            pixels,
            frame_index,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample in index coordinates (pixel `(i, j)` sits at `(i, j)`),
    /// clamping to the border.
    #[inline]
    pub fn sample_index(&self, u: f64, v: f64) -> f64 {
        bilinear_clamped(&self.pixels, self.width, self.height, u, v)
    }

    /// Bilinear sample at a continuous pixel coordinate.
    #[inline]
    pub fn sample(&self, p: &Point) -> f64 {
        self.sample_index(p.x - 0.5, p.y - 0.5)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// Bilinear interpolation on a row-major grid in index coordinates, clamped to the border.
#[inline]
pub(crate) fn bilinear_clamped(data: &[f32], width: usize, height: usize, u: f64, v: f64) -> f64 {
    let u = u.clamp(0.0, (width - 1) as f64);
    let v = v.clamp(0.0, (height - 1) as f64);
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let ax = u - x0 as f64;
    let ay = v - y0 as f64;
    let row0 = y0 * width;
    let row1 = y1 * width;
    let i00 = data[row0 + x0] as f64;
    let i10 = data[row0 + x1] as f64;
    let i01 = data[row1 + x0] as f64;
    let i11 = data[row1 + x1] as f64;
    let top = i00 + ax * (i10 - i00);
    let bottom = i01 + ax * (i11 - i01);
    top + ay * (bottom - top)
}

/// Ordered frames of one video, all with the same dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<FrameImage>,
}

impl VideoSequence {
    pub fn new(frames: Vec<FrameImage>) -> Result<Self, ModelError> {
        if frames.len() < 2 {
            return Err(ModelError::FewerThanTwoFrames);
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if let Some(i) = frames
            .iter()
            .position(|f| f.width != w || f.height != h)
        {
            return Err(ModelError::InconsistentDimensions(i));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[FrameImage] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// Landmarks plus a triangulation. Construction validates every mesh invariant,
/// so any `FaceMesh` value is non-degenerate, connected and consistently wound.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMesh {
    landmarks: Vec<Point>,
    triangles: Vec<[u32; 3]>,
}

impl FaceMesh {
    pub fn new(landmarks: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        validate_parts(&landmarks, &triangles)?;
        Ok(Self {
            landmarks,
            triangles,
        })
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, k: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[k];
        [
            self.landmarks[a as usize],
            self.landmarks[b as usize],
            self.landmarks[c as usize],
        ]
    }

    pub fn signed_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangle(k);
        signed_area(&a, &b, &c)
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut set = BTreeSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    /// Same triangulation with new landmark positions.
    pub fn with_landmarks(&self, landmarks: Vec<Point>) -> Result<Self, MeshError> {
        Self::new(landmarks, self.triangles.clone())
    }

    /// Applies `f` to every landmark and revalidates.
    pub fn map_landmarks(&self, f: impl Fn(&Point) -> Point) -> Result<Self, MeshError> {
        self.with_landmarks(self.landmarks.iter().map(f).collect())
    }
}

/// Re-checks every mesh invariant; returns the mesh unchanged when they hold.
pub fn validate_mesh(mesh: FaceMesh) -> Result<FaceMesh, MeshError> {
    validate_parts(&mesh.landmarks, &mesh.triangles)?;
    Ok(mesh)
}

pub fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

fn validate_parts(landmarks: &[Point], triangles: &[[u32; 3]]) -> Result<(), MeshError> {
    if triangles.is_empty() {
        return Err(MeshError::NoTriangles);
    }
    if let Some(i) = landmarks
        .iter()
        .position(|p| !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(MeshError::NonFiniteLandmark(i));
    }
    let n = landmarks.len();
    let mut reference_sign = 0.0;
    for (k, t) in triangles.iter().enumerate() {
        if t.iter().any(|&i| i as usize >= n) {
            return Err(MeshError::IndexOutOfRange(k));
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(MeshError::DegenerateTriangle(k));
        }
        let area = signed_area(
            &landmarks[t[0] as usize],
            &landmarks[t[1] as usize],
            &landmarks[t[2] as usize],
        );
        if area.abs() < AREA_EPSILON {
            return Err(MeshError::DegenerateTriangle(k));
        }
        if k == 0 {
            reference_sign = area.signum();
        } else if area.signum() != reference_sign {
            return Err(MeshError::InconsistentWinding(k));
        }
    }

    // every landmark must be reachable through triangle edges
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2])] {
            let ra = find(&mut parent, a as usize);
            let rb = find(&mut parent, b as usize);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let root = find(&mut parent, 0);
    if (1..n).any(|i| find(&mut parent, i) != root) {
        return Err(MeshError::DisconnectedMesh);
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("raster dimensions must be positive")]
    EmptyRaster,
    #[error("canonical landmark {index} at ({x}, {y}) lies outside the {width}x{height} raster")]
    OutOfRaster {
        index: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
}

/// The reference face every frame is warped onto, with its per-pixel triangle lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFaceModel {
    mesh: FaceMesh,
    raster_width: usize,
    raster_height: usize,
    triangle_map: TriangleMap,
}

impl CanonicalFaceModel {
    pub fn new(
        mesh: FaceMesh,
        raster_width: usize,
        raster_height: usize,
    ) -> Result<Self, CanonicalError> {
        if raster_width == 0 || raster_height == 0 {
            return Err(CanonicalError::EmptyRaster);
        }
        for (index, p) in mesh.landmarks().iter().enumerate() {
            if !(p.x >= 0.0
                && p.y >= 0.0
                && p.x < raster_width as f64
                && p.y < raster_height as f64)
            {
                return Err(CanonicalError::OutOfRaster {
                    index,
                    x: p.x,
                    y: p.y,
                    width: raster_width,
                    height: raster_height,
                });
            }
        }
        let triangle_map = rasterize_triangle_map(&mesh, raster_width, raster_height);
        Ok(Self {
            mesh,
            raster_width,
            raster_height,
            triangle_map,
        })
    }

    pub fn mesh(&self) -> &FaceMesh {
        &self.mesh
    }

    pub fn raster_width(&self) -> usize {
        self.raster_width
    }

    pub fn raster_height(&self) -> usize {
        self.raster_height
    }

    pub fn triangle_map(&self) -> &TriangleMap {
        &self.triangle_map
    }
}

/// Wavelet shrinkage rule applied to temporal angle series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Soft thresholding at `sigma * sqrt(2 ln n)`, sigma from the finest-level MAD.
    SoftUniversal,
    /// Threshold fixed at zero; the transform round-trips the input.
    Zero,
}

impl std::fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThresholdMode::SoftUniversal => "soft-universal",
            ThresholdMode::Zero => "zero",
        })
    }
}

/// How frames are paired for flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// Pairs `(i, i + 1)`.
    Consecutive,
    /// Pairs `(0, i)`.
    First,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config field `{0}` must be strictly positive")]
    NotPositive(&'static str),
    #[error("lk_window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("unsupported config version {0}")]
    Version(u32),
}

/// Tunables for the full pipeline. Serialized as the `version: 1` JSON config schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub version: u32,
    pub lk_window: usize,
    pub lk_pyramid_levels: usize,
    pub lk_max_iters: usize,
    pub lk_epsilon: f64,
    pub lk_min_eigen: f64,
    pub spectral_modes: usize,
    pub wavelet_threshold_mode: ThresholdMode,
    /// RBF bandwidth; `None` means `1 / (2 sigma^2)` with `sigma = 0.15 * raster width`.
    pub mks_gamma: Option<f64>,
    pub subdivision_depth: usize,
    pub overlay_scale: f64,
    pub anchor: Anchor,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: 1,
            lk_window: 21,
            lk_pyramid_levels: 3,
            lk_max_iters: 30,
            lk_epsilon: 0.01,
            lk_min_eigen: 1e-4,
            spectral_modes: 64,
            wavelet_threshold_mode: ThresholdMode::SoftUniversal,
            mks_gamma: None,
            subdivision_depth: 3,
            overlay_scale: 4.0,
            anchor: Anchor::Consecutive,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != 1 {
            return Err(ConfigError::Version(self.version));
        }
        let positive_counts = [
            ("lk_window", self.lk_window),
            ("lk_pyramid_levels", self.lk_pyramid_levels),
            ("lk_max_iters", self.lk_max_iters),
            ("spectral_modes", self.spectral_modes),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        let positive_reals = [
            ("lk_epsilon", self.lk_epsilon),
            ("lk_min_eigen", self.lk_min_eigen),
            ("overlay_scale", self.overlay_scale),
            ("mks_gamma", self.mks_gamma.unwrap_or(1.0)),
        ];
        for (name, v) in positive_reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.lk_window.is_multiple_of(2) {
            return Err(ConfigError::EvenWindow(self.lk_window));
        }
        Ok(())
    }

    /// Kernel bandwidth for a canonical raster of the given width.
    pub fn gamma_for(&self, raster_width: usize) -> f64 {
        self.mks_gamma
            .unwrap_or_else(|| default_gamma(raster_width))
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn default_gamma(raster_width: usize) -> f64 {
    let sigma = 0.15 * raster_width as f64;
    1.0 / (2.0 * sigma * sigma)
}
