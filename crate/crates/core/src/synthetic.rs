//! Deterministic synthetic fixtures: a 468-landmark / 854-triangle face-like mesh,
//! band-limited skin texture, smooth muscle-like displacement fields and labelled
//! expression sequences.
//!
//! Used by the test suites and by `facegps synth` to produce demo inputs.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::flow::DisplacementField;
use crate::model::{CanonicalFaceModel, FaceMesh, FrameImage, Point, Vec2};

/// Vertices per ring, innermost first; together with the center vertex this gives
/// 468 landmarks and 854 triangles.
pub const FACE_RINGS: [usize; 12] = [6, 12, 18, 24, 30, 36, 42, 48, 54, 57, 60, 80];

/// Elliptical face region used by [`face_mesh`]: `(center, rx, ry)`.
pub fn face_ellipse(width: usize, height: usize) -> (Point, f64, f64) {
    (
        Point::new(width as f64 * 0.5, height as f64 * 0.5),
        width as f64 * 0.38,
        height as f64 * 0.45,
    )
}

/// Concentric-ring triangulation of the face ellipse with 468 vertices and 854
/// counter-clockwise (in y-down pixel space: positive signed area) triangles.
pub fn face_mesh(width: usize, height: usize) -> FaceMesh {
    let (center, rx, ry) = face_ellipse(width, height);
    ring_mesh(center, rx, ry, &FACE_RINGS)
}

pub fn face_model(width: usize, height: usize) -> CanonicalFaceModel {
    CanonicalFaceModel::new(face_mesh(width, height), width, height)
        .expect("synthetic face fits its raster")
}

/// Disk triangulation: a center vertex plus rings of `ring_counts[i]` vertices at
/// radius fraction `(i + 1) / rings`, adjacent rings zipped by angle.
pub fn ring_mesh(center: Point, rx: f64, ry: f64, ring_counts: &[usize]) -> FaceMesh {
    let rings = ring_counts.len();
    let mut points = vec![center];
    let mut starts = Vec::with_capacity(rings);
    let mut angles: Vec<Vec<f64>> = Vec::with_capacity(rings);
    for (i, &count) in ring_counts.iter().enumerate() {
        starts.push(points.len());
        let offset = if i % 2 == 0 { 0.0 } else { 0.5 };
        let frac = (i + 1) as f64 / rings as f64;
        let ring: Vec<f64> = (0..count)
            .map(|m| TAU * (m as f64 + offset) / count as f64)
            .collect();
        for &a in &ring {
            points.push(Point::new(
                center.x + frac * rx * a.cos(),
                center.y + frac * ry * a.sin(),
            ));
        }
        angles.push(ring);
    }

    let mut triangles = Vec::new();
    let first = ring_counts[0];
    for m in 0..first {
        triangles.push([0, (starts[0] + m) as u32, (starts[0] + (m + 1) % first) as u32]);
    }
    for i in 0..rings.saturating_sub(1) {
        let (a, b) = (ring_counts[i], ring_counts[i + 1]);
        let (sa, sb) = (starts[i], starts[i + 1]);
        let inner = |p: usize| (sa + p % a) as u32;
        let outer = |q: usize| (sb + q % b) as u32;
        let angle_in = |p: usize| angles[i][p % a] + TAU * (p / a) as f64;
        let angle_out = |q: usize| angles[i + 1][q % b] + TAU * (q / b) as f64;
        let (mut p, mut q) = (0usize, 0usize);
        while p < a || q < b {
            let advance_inner = q == b || (p < a && angle_in(p + 1) <= angle_out(q + 1));
            if advance_inner {
                triangles.push([inner(p), outer(q), inner(p + 1)]);
                p += 1;
            } else {
                triangles.push([inner(p), outer(q), outer(q + 1)]);
                q += 1;
            }
        }
    }
    // normalize to positive signed area
    let triangles = triangles
        .into_iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| points[i as usize]);
            if crate::model::signed_area(&a, &b, &c) < 0.0 {
                [t[0], t[2], t[1]]
            } else {
                t
            }
        })
        .collect();
    FaceMesh::new(points, triangles).expect("ring mesh is a valid disk triangulation")
}

/// Band-limited texture: a sum of random plane waves with wavelengths in
/// `[6, 24]` pixels around mean intensity 0.5.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = 24;
        let amplitude = 0.15 * (2.0 / count as f64).sqrt();
        let waves = (0..count)
            .map(|_| {
                let wavelength: f64 = rng.random_range(6.0..24.0);
                let dir: f64 = rng.random_range(0.0..TAU);
                let phase: f64 = rng.random_range(0.0..TAU);
                let k = TAU / wavelength;
                (k * dir.cos(), k * dir.sin(), phase, amplitude)
            })
            .collect();
        Self { waves }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin())
            .sum();
        (0.5 + s).clamp(0.0, 1.0)
    }

    /// Frame whose content at pixel center `q` is the texture at `source(q)`.
    pub fn frame(
        &self,
        width: usize,
        height: usize,
        frame_index: usize,
        source: impl Fn(Point) -> Point,
    ) -> FrameImage {
        FrameImage::from_fn(width, height, frame_index, |x, y| {
            let p = source(Point::new(x, y));
            self.eval(p.x, p.y)
        })
    }
}

/// Smooth displacement inside an ellipse, vanishing on its boundary, with peak
/// magnitude at most `amplitude`.
#[derive(Debug, Clone, Copy)]
pub struct BumpField {
    pub center: Point,
    pub rx: f64,
    pub ry: f64,
    pub amplitude: f64,
}

impl BumpField {
    pub fn eval(&self, p: &Point) -> Vec2 {
        let u = (p.x - self.center.x) / self.rx;
        let v = (p.y - self.center.y) / self.ry;
        let rho2 = u * u + v * v;
        if rho2 >= 1.0 {
            return Vec2::zeros();
        }
        let envelope = (1.0 - rho2) * (1.0 - rho2);
        // rotating direction across the face, unit length
        let dir = Vec2::new((PI * v).cos() * 0.8, (PI * u).sin() * 0.6 + 0.4);
        let dir = dir / dir.norm().max(1e-12);
        dir * (self.amplitude * envelope)
    }

    /// Solves `p + eval(p) = q` by fixed-point iteration.
    pub fn preimage(&self, q: &Point) -> Point {
        let mut p = *q;
        for _ in 0..50 {
            let next = q - self.eval(&p);
            if (next - p).norm() < 1e-12 {
                return next;
            }
            p = next;
        }
        p
    }
}

/// Rigid head motion: rotation by `angle` about `pivot`, then translation.
#[derive(Debug, Clone, Copy)]
pub struct HeadMotion {
    pub pivot: Point,
    pub angle: f64,
    pub translation: Vec2,
}

impl HeadMotion {
    pub fn identity() -> Self {
        Self {
            pivot: Point::origin(),
            angle: 0.0,
            translation: Vec2::zeros(),
        }
    }

    pub fn apply(&self, p: &Point) -> Point {
        let (s, c) = self.angle.sin_cos();
        let d = p - self.pivot;
        self.pivot + Vec2::new(c * d.x - s * d.y, s * d.x + c * d.y) + self.translation
    }

    pub fn invert(&self, q: &Point) -> Point {
        let (s, c) = self.angle.sin_cos();
        let d = q - self.translation - self.pivot;
        self.pivot + Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// Frames, per-frame meshes and the canonical model of a synthetic clip.
#[derive(Debug, Clone)]
pub struct DemoClip {
    pub frames: Vec<FrameImage>,
    pub meshes: Vec<FaceMesh>,
    pub canonical: CanonicalFaceModel,
}

/// Frame `t` shows the canonical texture deformed by `bumps[t]` and moved by `motions[t]`;
/// its mesh is the canonical mesh moved by `motions[t]` alone.
pub fn render_clip(size: usize, texture: &Texture, bumps: &[Option<BumpField>], motions: &[HeadMotion]) -> DemoClip {
    assert_eq!(bumps.len(), motions.len(), "one bump and one motion per frame");
    let canonical = face_model(size, size);
    let frames = bumps
        .iter()
        .zip(motions)
        .enumerate()
        .map(|(t, (bump, motion))| {
            texture.frame(size, size, t, |q| {
                let c = motion.invert(&q);
                bump.map_or(c, |b| b.preimage(&c))
            })
        })
        .collect();
    let meshes = motions
        .iter()
        .map(|m| {
            canonical
                .mesh()
                .map_landmarks(|p| m.apply(p))
                .expect("rigid motion keeps the mesh valid")
        })
        .collect();
    DemoClip {
        frames,
        meshes,
        canonical,
    }
}

/// A small demo clip: a bump growing by `0.6 px` per frame under a slow head drift.
pub fn demo_clip(size: usize, frame_count: usize, seed: u64) -> DemoClip {
    let (center, rx, ry) = face_ellipse(size, size);
    let bumps: Vec<Option<BumpField>> = (0..frame_count)
        .map(|t| {
            Some(BumpField {
                center: center + Vec2::new(0.0, 0.2 * ry),
                rx: 0.5 * rx,
                ry: 0.4 * ry,
                amplitude: 0.6 * t as f64,
            })
        })
        .collect();
    let motions: Vec<HeadMotion> = (0..frame_count)
        .map(|t| HeadMotion {
            pivot: center,
            angle: (0.5 * t as f64).to_radians(),
            translation: Vec2::new(0.8 * t as f64, -0.5 * t as f64),
        })
        .collect();
    render_clip(size, &Texture::new(seed), &bumps, &motions)
}

/// One labelled synthetic sequence of raw displacement fields.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub label: usize,
    pub fields: Vec<DisplacementField>,
}

/// Parameters for [`expression_dataset`].
#[derive(Debug, Clone)]
pub struct ExpressionSpec {
    /// Canonical anchor points of the muscle regions.
    pub sites: Vec<Point>,
    /// Sites active for each class.
    pub class_sites: Vec<Vec<usize>>,
    /// Movement direction of each site (radians).
    pub site_angles: Vec<f64>,
    pub sequences_per_class: usize,
    pub fields_per_sequence: usize,
    /// Peak displacement magnitude in pixels.
    pub amplitude: f64,
    /// Noise standard deviation as a fraction of `amplitude`.
    pub noise_fraction: f64,
    /// Spatial bandwidth of each active region.
    pub region_gamma: f64,
    pub seed: u64,
}

/// Labelled sequences where class `c` moves the regions around `class_sites[c]`
/// with a rise-and-fall temporal profile, plus isotropic Gaussian noise on each
/// displacement component.
pub fn expression_dataset(points: &[Point], spec: &ExpressionSpec) -> Vec<SyntheticSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_fraction * spec.amplitude).expect("finite noise");
    let t_count = spec.fields_per_sequence;
    let mut out = Vec::new();
    for _ in 0..spec.sequences_per_class {
        for (label, sites) in spec.class_sites.iter().enumerate() {
            let peak_shift: f64 = rng.random_range(-0.15..0.15);
            let gain: f64 = rng.random_range(0.8..1.2);
            let fields = (0..t_count)
                .map(|t| {
                    let phase = (t as f64 + 0.5) / t_count as f64;
                    let profile = (PI * (phase + peak_shift).clamp(0.0, 1.0)).sin().max(0.0);
                    let displacements: Vec<Vec2> = points
                        .iter()
                        .map(|p| {
                            let mut d = Vec2::zeros();
                            for &s in sites {
                                let k = (-spec.region_gamma
                                    * (p - spec.sites[s]).norm_squared())
                                .exp();
                                let a = spec.site_angles[s];
                                d += Vec2::new(a.cos(), a.sin())
                                    * (spec.amplitude * gain * profile * k);
                            }
                            d + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                        })
                        .collect();
                    DisplacementField::new(
                        (t, t + 1),
                        points.to_vec(),
                        displacements,
                        vec![true; points.len()],
                    )
                    .expect("lengths agree")
                })
                .collect();
            out.push(SyntheticSequence { label, fields });
        }
    }
    out
}
