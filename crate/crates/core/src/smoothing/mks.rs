use thiserror::Error;

use crate::model::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("descriptor set is empty")]
    Empty,
    #[error("descriptor `{0}` has a negative weight")]
    NegativeWeight(String),
    #[error("descriptor `{0}` has a non-finite position or weight")]
    NonFinite(String),
    #[error("all descriptor weights are zero")]
    AllZeroWeights,
    #[error("gamma must be finite and > 0, got {0}")]
    BadGamma(f64),
    #[error("descriptor `{name}` at ({x}, {y}) lies outside the {width}x{height} canonical raster")]
    OutOfRaster {
        name: String,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
}

/// A canonical anchor point for one muscle region.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleDescriptor {
    pub name: String,
    pub position: Point,
    pub weight: f64,
}

/// Descriptors `D_i` with weights `w_i` sharing one RBF bandwidth `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleDescriptorSet {
    descriptors: Vec<MuscleDescriptor>,
    gamma: f64,
}

impl MuscleDescriptorSet {
    pub fn new(descriptors: Vec<MuscleDescriptor>, gamma: f64) -> Result<Self, DescriptorError> {
        if descriptors.is_empty() {
            return Err(DescriptorError::Empty);
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(DescriptorError::BadGamma(gamma));
        }
        for d in &descriptors {
            if !(d.position.x.is_finite() && d.position.y.is_finite() && d.weight.is_finite()) {
                return Err(DescriptorError::NonFinite(d.name.clone()));
            }
            if d.weight < 0.0 {
                return Err(DescriptorError::NegativeWeight(d.name.clone()));
            }
        }
        if descriptors.iter().all(|d| d.weight == 0.0) {
            return Err(DescriptorError::AllZeroWeights);
        }
        Ok(Self { descriptors, gamma })
    }

    /// `m` descriptors with weight 1 at the given positions.
    pub fn uniform(positions: &[Point], gamma: f64) -> Result<Self, DescriptorError> {
        let descriptors = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| MuscleDescriptor {
                name: format!("d{i}"),
                position,
                weight: 1.0,
            })
            .collect();
        Self::new(descriptors, gamma)
    }

    pub fn descriptors(&self) -> &[MuscleDescriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, DescriptorError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(DescriptorError::BadGamma(gamma));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_weights(&self, weights: &[f64]) -> Result<Self, DescriptorError> {
        assert_eq!(weights.len(), self.len(), "one weight per descriptor");
        let descriptors = self
            .descriptors
            .iter()
            .zip(weights)
            .map(|(d, &weight)| MuscleDescriptor {
                weight,
                ..d.clone()
            })
            .collect();
        Self::new(descriptors, self.gamma)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<(), DescriptorError> {
        for d in &self.descriptors {
            let p = d.position;
            if !(p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64) {
                return Err(DescriptorError::OutOfRaster {
                    name: d.name.clone(),
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
        }
        Ok(())
    }

    /// Gaussian RBF `exp(-gamma * |p - D_i|^2)` on Euclidean canonical distance.
    #[inline]
    pub fn kernel(&self, i: usize, p: &Point) -> f64 {
        (-self.gamma * (p - self.descriptors[i].position).norm_squared()).exp()
    }

    /// Multiplicative MKS gate at `p`: `(1/m) * sum_i w_i * k_i(p)`.
    pub fn gate(&self, p: &Point) -> f64 {
        let sum: f64 = (0..self.len())
            .map(|i| self.descriptors[i].weight * self.kernel(i, p))
            .sum();
        sum / self.len() as f64
    }
}

/// Multiple kernel smoothing: `r''_j = (1/m) * sum_i w_i * r'_j * k_i(X_j)`.
///
/// The sum is divided by `m`, not by the total weight.
pub fn mks(r_prime: &[f64], points: &[Point], descriptors: &MuscleDescriptorSet) -> Vec<f64> {
    assert_eq!(r_prime.len(), points.len(), "one magnitude per point");
    r_prime
        .iter()
        .zip(points)
        .map(|(&r, p)| r * descriptors.gate(p))
        .collect()
}
