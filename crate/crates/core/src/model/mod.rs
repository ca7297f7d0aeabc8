//! The parameterized model under study.
//!
//! Physical parameters live in a box and are mapped affinely onto the unit
//! cube; everything downstream (design, surrogate, directions) works in
//! unit coordinates.

mod config;
pub mod ode;
mod runner;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{CostConfig, InitialConfig, Lever, ModelConfig, ParameterConfig, TransmissionConfig};
pub use runner::{evaluate_design, ExternalRunner, ModelRunner, EXTERNAL_COMMAND_ENV};
pub use synthetic::{outcomes, ModelState, OutcomeVector, SyntheticModel, Trajectory, CARE_STAGES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Uniform,
}

/// The box Γ = Γ₁×…×Γ_m and its bijection onto `[0,1]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub density: Vec<Density>,
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = names.len();
        if m == 0 || lower.len() != m || upper.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} names, {} lower bounds, {} upper bounds",
                m,
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..m {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::Config(format!(
                    "parameter {} has an empty box [{}, {}]",
                    names[i], lower[i], upper[i]
                )));
            }
        }
        Ok(Self {
            names,
            lower,
            upper,
            density: vec![Density::Uniform; m],
        })
    }

    /// The identity box `[0,1]^m`.
    pub fn unit(m: usize) -> Self {
        Self::new(
            (1..=m).map(|i| format!("theta_{i}")).collect(),
            vec![0.0; m],
            vec![1.0; m],
        )
        .expect("unit box is valid")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {n}, parameter space has dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn to_unit(&self, theta_hat: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta_hat.len())?;
        theta_hat
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                if !(lo..=hi).contains(&v) {
                    return Err(Error::OutsideBox {
                        name: self.names[i].clone(),
                        value: v,
                        lower: lo,
                        upper: hi,
                    });
                }
                Ok((v - lo) / (hi - lo))
            })
            .collect()
    }

    pub fn from_unit(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta.len())?;
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::OutsideCube { index: i, value: t });
                }
                let (lo, hi) = (self.lower[i], self.upper[i]);
                // pin the endpoints so the boundary maps exactly onto the box
                Ok(if t == 1.0 { hi } else { lo + t * (hi - lo) })
            })
            .collect()
    }
}

pub fn to_unit(space: &ParameterSpace, theta_hat: &[f64]) -> Result<Vec<f64>> {
    space.to_unit(theta_hat)
}

pub fn from_unit(space: &ParameterSpace, theta: &[f64]) -> Result<Vec<f64>> {
    space.from_unit(theta)
}
