//! Mapping smoothed canonical vectors back onto video frames and drawing them.
//!
//! Arrows are anti-aliased by distance coverage and coloured from a fixed
//! viridis-like lookup table, normalised by the largest magnitude in the frame.

use rayon::prelude::*;

use crate::flow::DisplacementField;
use crate::geometry::{AffineChart, TriangleMap};
use crate::ingest::frames::to_byte;
use crate::ingest::encode_png_rgb;
use crate::model::{FrameImage, Point, Vec2};

/// Arrows shorter than this many pixels after scaling are not drawn.
pub const MIN_ARROW_PX: f64 = 0.1;

/// Colour ramp stops from dark blue (low) through green to yellow (high).
pub const COLOR_RAMP: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

const HEAT_SIGMA_PX: f64 = 3.0;
const HEAT_OPACITY: f64 = 0.45;

/// A displacement in frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedVector {
    pub origin: Point,
    pub vector: Vec2,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameVectors {
    pub vectors: Vec<MappedVector>,
    /// Valid points dropped because their canonical pixel lies outside the face.
    pub skipped: usize,
}

/// Sends each valid point and its displaced endpoint through the inverse chart of
/// the triangle covering the point's canonical pixel.
pub fn field_to_frame(
    field: &DisplacementField,
    charts: &[AffineChart],
    triangle_map: &TriangleMap,
) -> FrameVectors {
    let mut vectors = Vec::with_capacity(field.len());
    let mut skipped = 0;
    for ((p, d), &ok) in field.points.iter().zip(&field.displacements).zip(&field.valid) {
        if !ok {
            continue;
        }
        let Some(k) = triangle_map.at_point(p) else {
            skipped += 1;
            continue;
        };
        let inv = &charts[k].inverse;
        let origin = inv.apply(p);
        let vector = inv.apply(&(p + d)) - origin;
        vectors.push(MappedVector {
            origin,
            vector,
            magnitude: vector.norm(),
        });
    }
    FrameVectors { vectors, skipped }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub scale: f64,
    pub heat: bool,
}

/// RGB overlay, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayFrame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub arrows_drawn: usize,
}

impl OverlayFrame {
    pub fn to_png(&self) -> Vec<u8> {
        encode_png_rgb(self.width, self.height, self.rgb.clone())
    }
}

/// Colour for `t` in `[0, 1]`, linear between ramp stops.
pub fn ramp_color(t: f64) -> [f64; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (COLOR_RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(COLOR_RAMP.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (COLOR_RAMP[i], COLOR_RAMP[i + 1]);
    [0, 1, 2].map(|c| a[c] as f64 * (1.0 - f) + b[c] as f64 * f)
}

struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<f64>,
}

impl Canvas {
    fn blend(&mut self, x: usize, y: usize, color: [f64; 3], alpha: f64) {
        let i = 3 * (y * self.width + x);
        for c in 0..3 {
            self.rgb[i + c] = self.rgb[i + c] * (1.0 - alpha) + color[c] * alpha;
        }
    }

    /// One-pixel-wide segment; coverage falls off linearly with distance from the centre line.
    fn line(&mut self, a: Point, b: Point, color: [f64; 3]) {
        let x0 = (a.x.min(b.x) - 1.5).floor().max(0.0) as usize;
        let y0 = (a.y.min(b.y) - 1.5).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + 1.5).ceil().max(0.0) as usize).min(self.width);
        let y1 = ((a.y.max(b.y) + 1.5).ceil().max(0.0) as usize).min(self.height);
        let ab = b - a;
        let len2 = ab.norm_squared();
        for y in y0..y1 {
            for x in x0..x1 {
                let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 { ((c - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let d = (c - (a + ab * t)).norm();
                let cover = (1.0 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    self.blend(x, y, color, cover);
                }
            }
        }
    }

    fn arrow(&mut self, from: Point, to: Point, color: [f64; 3]) {
        self.line(from, to, color);
        let shaft = to - from;
        let len = shaft.norm();
        if len < 2.0 {
            return;
        }
        let head = (0.3 * len).clamp(1.5, 6.0);
        let back = -shaft / len * head;
        let (s, c) = 25f64.to_radians().sin_cos();
        for sign in [-1.0, 1.0] {
            let wing = Vec2::new(c * back.x - sign * s * back.y, sign * s * back.x + c * back.y);
            self.line(to, to + wing, color);
        }
    }
}

/// Draws arrows of length `scale * |v|` from each origin onto a grayscale frame.
///
/// The heat layer, when enabled, blends a Gaussian splat of magnitudes under the arrows.
pub fn render_overlay(frame: &FrameImage, vectors: &[MappedVector], options: RenderOptions) -> OverlayFrame {
    let (w, h) = (frame.width(), frame.height());
    let mut canvas = Canvas {
        width: w,
        height: h,
        rgb: frame
            .pixels()
            .iter()
            .flat_map(|&v| {
                let b = to_byte(v) as f64;
                [b, b, b]
            })
            .collect(),
    };
    let max_mag = vectors.iter().map(|v| v.magnitude).fold(0.0, f64::max);

    if options.heat && max_mag > 0.0 {
        let heat = heat_map(w, h, vectors, max_mag);
        for y in 0..h {
            for x in 0..w {
                let v = heat[y * w + x];
                if v > 1e-3 {
                    canvas.blend(x, y, ramp_color(v), HEAT_OPACITY * v);
                }
            }
        }
    }

    let mut drawn = 0;
    for v in vectors {
        let len = options.scale * v.magnitude;
        if len.is_nan() || len < MIN_ARROW_PX {
            continue;
        }
        let color = ramp_color(v.magnitude / max_mag);
        canvas.arrow(v.origin, v.origin + v.vector * options.scale, color);
        drawn += 1;
    }

    OverlayFrame {
        width: w,
        height: h,
        rgb: canvas.rgb.iter().map(|&c| c.round().clamp(0.0, 255.0) as u8).collect(),
        arrows_drawn: drawn,
    }
}

/// Per-pixel max over vectors of `(|v| / max) * exp(-d^2 / (2 sigma^2))`.
fn heat_map(w: usize, h: usize, vectors: &[MappedVector], max_mag: f64) -> Vec<f64> {
    let reach = 3.0 * HEAT_SIGMA_PX;
    let mut heat = vec![0.0f64; w * h];
    heat.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let cy = y as f64 + 0.5;
        for v in vectors {
            if (v.origin.y - cy).abs() > reach {
                continue;
            }
            let x0 = (v.origin.x - reach).floor().max(0.0) as usize;
            let x1 = ((v.origin.x + reach).ceil().max(0.0) as usize).min(w);
            for (x, cell) in row.iter_mut().enumerate().take(x1).skip(x0) {
                let d2 = (x as f64 + 0.5 - v.origin.x).powi(2) + (cy - v.origin.y).powi(2);
                let val = v.magnitude / max_mag * (-d2 / (2.0 * HEAT_SIGMA_PX * HEAT_SIGMA_PX)).exp();
                if val > *cell {
                    *cell = val;
                }
            }
        }
    });
    heat
}
