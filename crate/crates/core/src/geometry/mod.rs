//! Piecewise-affine geometry between frame meshes and the canonical face.
//!
//! Each triangle pair gets an [`AffineChart`]: `forward` maps the frame triangle onto
//! the canonical triangle, `inverse` maps back. Warping, dense sampling and the
//! canonical-to-frame mapping of displacement vectors all go through these charts.

mod dense;
mod raster;
mod warp;

pub use dense::{densify_landmarks, DenseLandmarkSet};
pub use raster::{rasterize_triangle_map, TriangleMap};
pub use warp::warp_to_canonical;

use nalgebra::{Matrix2, Matrix2x3};
use thiserror::Error;

use crate::model::{signed_area, FaceMesh, Point, Vec2, AREA_EPSILON};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("frame mesh has {frame_landmarks} landmarks / {frame_triangles} triangles, canonical has {canonical_landmarks} / {canonical_triangles}")]
    MeshMismatch {
        frame_landmarks: usize,
        frame_triangles: usize,
        canonical_landmarks: usize,
        canonical_triangles: usize,
    },
    #[error("point ({x}, {y}) lies outside the canonical face")]
    OutsideFace { x: f64, y: f64 },
}

/// `p -> linear * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub linear: Matrix2<f64>,
    pub translation: Vec2,
}

impl Affine2 {
    pub fn identity() -> Self {
        Self {
            linear: Matrix2::identity(),
            translation: Vec2::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.linear * p.coords + self.translation)
    }

    /// Maps a difference vector (translation drops out).
    #[inline]
    pub fn apply_vector(&self, v: &Vec2) -> Vec2 {
        self.linear * v
    }

    /// The 2x3 matrix `[linear | translation]`.
    pub fn matrix(&self) -> Matrix2x3<f64> {
        Matrix2x3::new(
            self.linear[(0, 0)],
            self.linear[(0, 1)],
            self.translation.x,
            self.linear[(1, 0)],
            self.linear[(1, 1)],
            self.translation.y,
        )
    }
}

/// Affine chart for triangle `triangle_id`: frame -> canonical and back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineChart {
    pub triangle_id: usize,
    pub forward: Affine2,
    pub inverse: Affine2,
}

/// Solves the unique affine map sending `src[i]` to `dst[i]`, and its inverse.
///
/// Both directions are built from the vertex correspondences directly rather than
/// by inverting one matrix, so each maps its own source vertices exactly up to rounding.
pub fn solve_affine(
    src: &[Point; 3],
    dst: &[Point; 3],
) -> Result<(Affine2, Affine2), GeometryError> {
    let forward = affine_from_triangles(src, dst).ok_or(GeometryError::DegenerateTriangle(0))?;
    let inverse = affine_from_triangles(dst, src).ok_or(GeometryError::DegenerateTriangle(0))?;
    Ok((forward, inverse))
}

fn affine_from_triangles(src: &[Point; 3], dst: &[Point; 3]) -> Option<Affine2> {
    if signed_area(&src[0], &src[1], &src[2]).abs() < AREA_EPSILON
        || signed_area(&dst[0], &dst[1], &dst[2]).abs() < AREA_EPSILON
    {
        return None;
    }
    let s = Matrix2::from_columns(&[src[1] - src[0], src[2] - src[0]]);
    let d = Matrix2::from_columns(&[dst[1] - dst[0], dst[2] - dst[0]]);
    let det = s.determinant();
    let s_inv = Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;
    let linear = d * s_inv;
    let translation = dst[0].coords - linear * src[0].coords;
    Some(Affine2 {
        linear,
        translation,
    })
}

/// One chart per triangle, mapping `frame_mesh` onto `canonical_mesh`.
pub fn build_charts(
    frame_mesh: &FaceMesh,
    canonical_mesh: &FaceMesh,
) -> Result<Vec<AffineChart>, GeometryError> {
    if frame_mesh.landmark_count() != canonical_mesh.landmark_count()
        || frame_mesh.triangles() != canonical_mesh.triangles()
    {
        return Err(GeometryError::MeshMismatch {
            frame_landmarks: frame_mesh.landmark_count(),
            frame_triangles: frame_mesh.triangle_count(),
            canonical_landmarks: canonical_mesh.landmark_count(),
            canonical_triangles: canonical_mesh.triangle_count(),
        });
    }
    (0..frame_mesh.triangle_count())
        .map(|k| {
            let (forward, inverse) =
                solve_affine(&frame_mesh.triangle(k), &canonical_mesh.triangle(k))
                    .map_err(|_| GeometryError::DegenerateTriangle(k))?;
            Ok(AffineChart {
                triangle_id: k,
                forward,
                inverse,
            })
        })
        .collect()
}

/// Maps a canonical point back into frame coordinates through the chart of the
/// triangle covering its pixel.
pub fn map_point_to_frame(
    point: &Point,
    charts: &[AffineChart],
    triangle_map: &TriangleMap,
) -> Result<Point, GeometryError> {
    let k = triangle_map
        .at_point(point)
        .ok_or(GeometryError::OutsideFace {
            x: point.x,
            y: point.y,
        })?;
    Ok(charts[k].inverse.apply(point))
}
