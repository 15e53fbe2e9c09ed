use rayon::prelude::*;

use super::{build_charts, GeometryError};
use crate::model::{CanonicalFaceModel, FaceMesh, FrameImage, Point};

/// Warps a frame onto the canonical raster by inverse mapping.
///
/// Each canonical pixel covered by triangle `k` samples the frame at
/// `inverse_k(pixel center)` with bilinear interpolation; uncovered pixels are 0.
pub fn warp_to_canonical(
    frame: &FrameImage,
    frame_mesh: &FaceMesh,
    model: &CanonicalFaceModel,
) -> Result<FrameImage, GeometryError> {
    let charts = build_charts(frame_mesh, model.mesh())?;
    let (w, h) = (model.raster_width(), model.raster_height());
    let map = model.triangle_map();
    let mut pixels = vec![0f32; w * h];
    pixels
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                if let Some(k) = map.get(x, y) {
                    let q = charts[k]
                        .inverse
                        .apply(&Point::new(x as f64 + 0.5, y as f64 + 0.5));
                    *out = frame.sample(&q) as f32;
                }
            }
        });
    Ok(FrameImage::new(w, h, pixels, frame.frame_index()).expect("bilinear samples stay in [0, 1]"))
}
