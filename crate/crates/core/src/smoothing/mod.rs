//! Polar smoothing stack: spectral low-pass on magnitudes, wavelet shrinkage on
//! angles over time, then kernel gating by muscle descriptors.

pub mod mks;
pub mod polar;
pub mod spectral;
pub mod wavelet;

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::DisplacementField;
use crate::geometry::DenseLandmarkSet;
use crate::model::{Point, ThresholdMode};

pub use mks::{mks, DescriptorError, MuscleDescriptor, MuscleDescriptorSet};
pub use polar::{polar, to_cartesian, to_polar, PolarField};
pub use spectral::{Graph, SpectralBasis, SpectralSmoother};
pub use wavelet::{wavelet_smooth_angles, wrap_angle};

#[derive(Debug, Error)]
pub enum SmoothingError {
    #[error("landmark graph is disconnected")]
    DisconnectedGraph,
    #[error("spectral mode count {k} must be between 1 and the node count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no displacement fields to smooth")]
    EmptySequence,
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// One smoothed frame pair with its intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedField {
    /// Spectrally smoothed magnitudes.
    pub r_prime: Vec<f64>,
    /// Wavelet-smoothed angles in `(-pi, pi]`.
    pub theta_prime: Vec<f64>,
    /// Kernel-gated magnitudes.
    pub r_double_prime: Vec<f64>,
    /// Cartesian field built from `r_double_prime` and `theta_prime`.
    pub field: DisplacementField,
}

#[derive(Debug, Clone)]
pub struct SmoothingStack {
    spectral: SpectralSmoother,
    points: Vec<Point>,
    descriptors: MuscleDescriptorSet,
    threshold: ThresholdMode,
}

impl SmoothingStack {
    pub fn new(
        dense: &DenseLandmarkSet,
        k: usize,
        descriptors: MuscleDescriptorSet,
        threshold: ThresholdMode,
    ) -> Result<Self, SmoothingError> {
        let spectral = SpectralSmoother::new(dense.len(), &dense.edges(), k)?;
        Ok(Self {
            spectral,
            points: dense.points.clone(),
            descriptors,
            threshold,
        })
    }

    pub fn spectral(&self) -> &SpectralSmoother {
        &self.spectral
    }

    pub fn descriptors(&self) -> &MuscleDescriptorSet {
        &self.descriptors
    }

    pub fn threshold(&self) -> ThresholdMode {
        self.threshold
    }

    /// Smooths a whole sequence of raw fields, ordered by frame pair.
    ///
    /// Angle series skip samples that are invalid or have zero magnitude; those
    /// hold the nearest earlier usable angle (or the next one at the start).
    pub fn smooth_sequence(
        &self,
        raw: &[DisplacementField],
    ) -> Result<Vec<SmoothedField>, SmoothingError> {
        if raw.is_empty() {
            return Err(SmoothingError::EmptySequence);
        }
        let n = self.points.len();
        for f in raw {
            if f.len() != n {
                return Err(SmoothingError::LengthMismatch {
                    expected: n,
                    got: f.len(),
                });
            }
        }
        let polars: Vec<PolarField> = raw.iter().map(to_polar).collect();
        let r_prime: Vec<Vec<f64>> = polars
            .par_iter()
            .map(|p| self.spectral.smooth(&p.magnitudes, &p.valid))
            .collect::<Result<_, _>>()?;

        let t_count = raw.len();
        let per_point: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let series: Vec<Option<f64>> = polars
                    .iter()
                    .map(|p| (p.valid[j] && p.magnitudes[j] > 0.0).then_some(p.angles[j]))
                    .collect();
                wavelet_smooth_angles(&fill_gaps(&series), self.threshold)
            })
            .collect();

        (0..t_count)
            .map(|t| {
                let theta: Vec<f64> = per_point.iter().map(|s| s[t]).collect();
                let r2 = mks(&r_prime[t], &self.points, &self.descriptors);
                let field = to_cartesian(&raw[t], &r2, &theta)?;
                Ok(SmoothedField {
                    r_prime: r_prime[t].clone(),
                    theta_prime: theta,
                    r_double_prime: r2,
                    field,
                })
            })
            .collect()
    }
}

/// Forward-fills missing samples, back-filling a missing prefix; all-missing gives zeros.
fn fill_gaps(series: &[Option<f64>]) -> Vec<f64> {
    let Some(first) = series.iter().flatten().next().copied() else {
        return vec![0.0; series.len()];
    };
    let mut last = first;
    series
        .iter()
        .map(|s| {
            if let Some(v) = s {
                last = *v;
            }
            last
        })
        .collect()
}
