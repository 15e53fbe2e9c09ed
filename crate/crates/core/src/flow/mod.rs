//! Pyramidal Lucas-Kanade flow at sparse canonical points.

mod csv_io;
mod pyramid;

pub use csv_io::{read_field_csv, write_field_csv, FieldCsvError};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Anchor, FrameImage, PipelineConfig, Point, Vec2};
use pyramid::Pyramid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("flow needs at least two frames")]
    FewerThanTwoFrames,
    #[error("field arrays differ in length: {points} points, {displacements} displacements, {valid} flags")]
    LengthMismatch {
        points: usize,
        displacements: usize,
        valid: usize,
    },
}

/// Per-point displacement between two frames, in canonical pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub frame_pair: (usize, usize),
    pub points: Vec<Point>,
    pub displacements: Vec<Vec2>,
    pub valid: Vec<bool>,
}

impl DisplacementField {
    /// Checks lengths and zeroes the displacement of invalid points.
    pub fn new(
        frame_pair: (usize, usize),
        points: Vec<Point>,
        mut displacements: Vec<Vec2>,
        valid: Vec<bool>,
    ) -> Result<Self, FlowError> {
        if points.len() != displacements.len() || points.len() != valid.len() {
            return Err(FlowError::LengthMismatch {
                points: points.len(),
                displacements: displacements.len(),
                valid: valid.len(),
            });
        }
        for (d, ok) in displacements.iter_mut().zip(&valid) {
            if !ok {
                *d = Vec2::zeros();
            }
        }
        Ok(Self {
            frame_pair,
            points,
            displacements,
            valid,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Same points and validity, every displacement multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            displacements: self.displacements.iter().map(|d| d * alpha).collect(),
            ..self.clone()
        }
    }
}

enum Track {
    Ok(Vec2),
    Lost,
}

/// Tracks every point from `prev` into `next`.
///
/// Per pyramid level (coarse to fine) the 2x2 normal equations `G d = b` are
/// iterated until the update is below `lk_epsilon` or `lk_max_iters` is hit. A point
/// is invalid when `min_eig(G) / window_area < lk_min_eigen` at any level or when
/// its tracked position leaves the raster.
pub fn lucas_kanade(
    prev: &FrameImage,
    next: &FrameImage,
    points: &[Point],
    config: &PipelineConfig,
) -> Result<DisplacementField, FlowError> {
    check_sizes(prev, next)?;
    let prev_pyr = Pyramid::build(prev, config.lk_pyramid_levels);
    let next_pyr = Pyramid::build(next, config.lk_pyramid_levels);
    Ok(track_points(
        &prev_pyr,
        &next_pyr,
        (prev.frame_index(), next.frame_index()),
        points,
        config,
    ))
}

fn check_sizes(a: &FrameImage, b: &FrameImage) -> Result<(), FlowError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(FlowError::SizeMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

fn track_points(
    prev: &Pyramid,
    next: &Pyramid,
    frame_pair: (usize, usize),
    points: &[Point],
    config: &PipelineConfig,
) -> DisplacementField {
    let results: Vec<Track> = points
        .par_iter()
        .map(|p| track_point(prev, next, p, config))
        .collect();
    let mut displacements = Vec::with_capacity(points.len());
    let mut valid = Vec::with_capacity(points.len());
    for r in results {
        match r {
            Track::Ok(d) => {
                displacements.push(d);
                valid.push(true);
            }
            Track::Lost => {
                displacements.push(Vec2::zeros());
                valid.push(false);
            }
        }
    }
    DisplacementField {
        frame_pair,
        points: points.to_vec(),
        displacements,
        valid,
    }
}

fn track_point(prev: &Pyramid, next: &Pyramid, p: &Point, config: &PipelineConfig) -> Track {
    let base = prev.levels[0].width as f64;
    let base_h = prev.levels[0].height as f64;
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x < base && p.y < base_h) {
        return Track::Lost;
    }
    let half = (config.lk_window / 2) as isize;
    let area = (config.lk_window * config.lk_window) as f64;
    let window = config.lk_window * config.lk_window;
    let mut template = vec![0f64; window];
    let mut gx = vec![0f64; window];
    let mut gy = vec![0f64; window];

    // index coordinates at level 0
    let q = Vec2::new(p.x - 0.5, p.y - 0.5);
    let mut guess = Vec2::zeros();
    let top = prev.levels.len() - 1;
    for level in (0..=top).rev() {
        let lp = &prev.levels[level];
        let ln = &next.levels[level];
        let scale = (1u32 << level) as f64;
        let u = q / scale;

        let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
        let mut w = 0;
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (u.x + dx as f64, u.y + dy as f64);
                template[w] = lp.sample(x, y);
                let (ix, iy) = lp.sample_grad(x, y);
                gx[w] = ix;
                gy[w] = iy;
                g11 += ix * ix;
                g12 += ix * iy;
                g22 += iy * iy;
                w += 1;
            }
        }
        let min_eig = 0.5 * (g11 + g22) - (0.25 * (g11 - g22).powi(2) + g12 * g12).sqrt();
        if min_eig / area < config.lk_min_eigen {
            return Track::Lost;
        }
        let det = g11 * g22 - g12 * g12;

        let mut step = Vec2::zeros();
        for _ in 0..config.lk_max_iters {
            let offset = u + guess + step;
            let (mut b1, mut b2) = (0.0, 0.0);
            let mut w = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let diff =
                        template[w] - ln.sample(offset.x + dx as f64, offset.y + dy as f64);
                    b1 += diff * gx[w];
                    b2 += diff * gy[w];
                    w += 1;
                }
            }
            let eta = Vec2::new(g22 * b1 - g12 * b2, g11 * b2 - g12 * b1) / det;
            step += eta;
            if eta.norm() < config.lk_epsilon {
                break;
            }
        }

        let tracked = u + guess + step;
        let (lw, lh) = (lp.width as f64, lp.height as f64);
        if !(tracked.x >= -0.5 && tracked.y >= -0.5 && tracked.x < lw - 0.5 && tracked.y < lh - 0.5)
            || !step.x.is_finite()
            || !step.y.is_finite()
        {
            return Track::Lost;
        }
        guess = if level > 0 {
            (guess + step) * 2.0
        } else {
            guess + step
        };
    }
    Track::Ok(guess)
}

/// Frame pairs for a sequence of `p` frames.
pub fn frame_pairs(frame_count: usize, anchor: Anchor) -> Vec<(usize, usize)> {
    match anchor {
        Anchor::Consecutive => (0..frame_count.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
        Anchor::First => (1..frame_count).map(|i| (0, i)).collect(),
    }
}

/// Flow for every frame pair (see [`frame_pairs`]), always tracking from the same
/// fixed `points`.
pub fn flow_sequence(
    canonical_frames: &[FrameImage],
    points: &[Point],
    config: &PipelineConfig,
) -> Result<Vec<DisplacementField>, FlowError> {
    if canonical_frames.len() < 2 {
        return Err(FlowError::FewerThanTwoFrames);
    }
    for f in &canonical_frames[1..] {
        check_sizes(&canonical_frames[0], f)?;
    }
    let pairs = frame_pairs(canonical_frames.len(), config.anchor);
    let levels = config.lk_pyramid_levels;
    let mut cached: Option<(usize, Pyramid)> = None;
    let mut fields = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let source = match cached.take() {
            Some((i, pyr)) if i == a => pyr,
            _ => Pyramid::build(&canonical_frames[a], levels),
        };
        let target = Pyramid::build(&canonical_frames[b], levels);
        fields.push(track_points(
            &source,
            &target,
            (canonical_frames[a].frame_index(), canonical_frames[b].frame_index()),
            points,
            config,
        ));
        cached = Some(match config.anchor {
            Anchor::Consecutive => (b, target),
            Anchor::First => (a, source),
        });
    }
    Ok(fields)
}
