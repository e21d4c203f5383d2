use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the dimer in units with hbar = 1.
///
/// `g` is the macroscopic interaction strength held fixed in the mean-field
/// limit. The many-particle Hamiltonian uses the microscopic constant
/// `g / N`, see [`ModelParams::microscopic_c`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub v: f64,
    pub g: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(epsilon: f64, v: f64, g: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            epsilon,
            v,
            g,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric (epsilon = 0) parameters.
    pub fn symmetric(v: f64, g: f64, gamma: f64) -> Result<Self> {
        Self::new(0.0, v, g, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("epsilon", self.epsilon),
            ("v", self.v),
            ("g", self.g),
            ("gamma", self.gamma),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParams(format!("{name} = {x} is not finite")));
            }
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma = {} must be non-negative",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Pairwise interaction constant of the N-particle Hamiltonian.
    pub fn microscopic_c(&self, n_particles: usize) -> f64 {
        self.g / n_particles as f64
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }
}

/// How an interaction constant quoted for an N-particle run maps onto `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionConvention {
    /// The quoted value already is the macroscopic `g = N c`.
    #[default]
    Macroscopic,
    /// The quoted value is the microscopic `c`; `g = N c`.
    Microscopic,
}

impl InteractionConvention {
    pub fn macroscopic_g(self, quoted: f64, n_particles: usize) -> f64 {
        match self {
            InteractionConvention::Macroscopic => quoted,
            InteractionConvention::Microscopic => quoted * n_particles as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionConvention::Macroscopic => "macroscopic",
            InteractionConvention::Microscopic => "microscopic",
        }
    }
}

impl std::str::FromStr for InteractionConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macroscopic" | "macro" => Ok(Self::Macroscopic),
            "microscopic" | "micro" => Ok(Self::Microscopic),
            other => Err(Error::InvalidParams(format!(
                "unknown interaction convention `{other}` (expected macroscopic|microscopic)"
            ))),
        }
    }
}
