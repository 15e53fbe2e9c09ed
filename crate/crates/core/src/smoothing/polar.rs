use std::f64::consts::PI;

use super::SmoothingError;
use crate::flow::DisplacementField;
use crate::model::Vec2;

/// Polar view of a displacement field: magnitudes `>= 0`, angles in `(-pi, pi]`,
/// zero vectors mapped to `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField {
    pub magnitudes: Vec<f64>,
    pub angles: Vec<f64>,
    pub valid: Vec<bool>,
}

pub fn polar(d: &Vec2) -> (f64, f64) {
    if d.x == 0.0 && d.y == 0.0 {
        return (0.0, 0.0);
    }
    let theta = d.y.atan2(d.x);
    (d.x.hypot(d.y), if theta == -PI { PI } else { theta })
}

pub fn to_polar(field: &DisplacementField) -> PolarField {
    let (magnitudes, angles) = field.displacements.iter().map(polar).unzip();
    PolarField {
        magnitudes,
        angles,
        valid: field.valid.clone(),
    }
}

/// Rebuilds a Cartesian field on `template`'s points; invalid points stay `(0, 0)`.
pub fn to_cartesian(
    template: &DisplacementField,
    magnitudes: &[f64],
    angles: &[f64],
) -> Result<DisplacementField, SmoothingError> {
    let n = template.len();
    if magnitudes.len() != n || angles.len() != n {
        return Err(SmoothingError::LengthMismatch {
            expected: n,
            got: magnitudes.len().min(angles.len()),
        });
    }
    let displacements = magnitudes
        .iter()
        .zip(angles)
        .zip(&template.valid)
        .map(|((&r, &t), &ok)| {
            if ok && r != 0.0 {
                Vec2::new(r * t.cos(), r * t.sin())
            } else {
                Vec2::zeros()
            }
        })
        .collect();
    Ok(DisplacementField {
        frame_pair: template.frame_pair,
        points: template.points.clone(),
        displacements,
        valid: template.valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basic_cases() {
        let (r, t) = polar(&Vec2::new(3.0, 4.0));
        assert_eq!(r, 5.0);
        assert!((t - 0.927_295_218_001_612_2).abs() < 1e-15);
        assert_eq!(polar(&Vec2::new(0.0, 0.0)), (0.0, 0.0));
        assert_eq!(polar(&Vec2::new(-1.0, 0.0)), (1.0, PI));
        assert_eq!(polar(&Vec2::new(-1.0, -0.0)), (1.0, PI));
    }

    fn field(ds: Vec<Vec2>) -> DisplacementField {
        let n = ds.len();
        DisplacementField::new((0, 1), vec![Point::origin(); n], ds, vec![true; n]).unwrap()
    }

    #[test]
    fn cartesian_cases() {
        let f = field(vec![Vec2::zeros(); 2]);
        let out = to_cartesian(&f, &[5.0, 0.0], &[4f64.atan2(3.0), 1.3]).unwrap();
        assert!((out.displacements[0] - Vec2::new(3.0, 4.0)).norm() < 1e-14);
        assert_eq!(out.displacements[1], Vec2::zeros());
        assert!(matches!(
            to_cartesian(&f, &[1.0], &[0.0]),
            Err(SmoothingError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn invalid_points_stay_zero() {
        let f = DisplacementField::new(
            (0, 1),
            vec![Point::origin(); 2],
            vec![Vec2::new(1.0, 1.0); 2],
            vec![true, false],
        )
        .unwrap();
        let out = to_cartesian(&f, &[2.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(out.displacements[1], Vec2::zeros());
    }

    #[test]
    fn round_trip_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds: Vec<Vec2> = (0..1000)
            .map(|_| Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect();
        let f = field(ds);
        let p = to_polar(&f);
        assert!(p.magnitudes.iter().all(|&r| r >= 0.0));
        assert!(p.angles.iter().all(|&t| t > -PI && t <= PI));
        let back = to_cartesian(&f, &p.magnitudes, &p.angles).unwrap();
        let err = back
            .displacements
            .iter()
            .zip(&f.displacements)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9);
    }
}
