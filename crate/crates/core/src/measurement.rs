//! Sampled displacement data: the output of the top-surface sampling
//! operator and the input of the stage-1 objective.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// Sample locations (mm).
    pub points: Vec<[f64; 2]>,
    /// Vertical displacement at each location (mm).
    pub values: Vec<f64>,
    /// Noise amplitude γ_n as a fraction (0.05 = 5 %).
    pub noise_level: f64,
    pub noise_seed: Option<u64>,
}

impl MeasurementSet {
    pub fn new(points: Vec<[f64; 2]>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::param(format!(
                "{} sample points but {} values",
                points.len(),
                values.len()
            )));
        }
        Ok(MeasurementSet {
            points,
            values,
            noise_level: 0.0,
            noise_seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MeasurementSet {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Reorders samples by `order[k]` = index of the k-th new sample.
    pub fn permuted(&self, order: &[usize]) -> Self {
        MeasurementSet {
            points: order.iter().map(|&i| self.points[i]).collect(),
            values: order.iter().map(|&i| self.values[i]).collect(),
            ..self.clone()
        }
    }
}
