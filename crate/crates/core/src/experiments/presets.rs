//! Parameter presets of the three reference figures.

use serde::{Deserialize, Serialize};

use super::{ExperimentSpec, InitialCondition};
use crate::error::{Error, Result};
use crate::ode::Solver;
use crate::params::{InteractionConvention, ModelParams};

pub const FIG_N: usize = 20;

/// Bloch-sphere flow panels: `(g, gamma)` in `{0, 2} x {0, 0.75}`, v = 1.
pub fn figure1_panels() -> Vec<(&'static str, ModelParams)> {
    [
        ("upper-left", 0.0, 0.0),
        ("upper-right", 2.0, 0.0),
        ("lower-left", 0.0, 0.75),
        ("lower-right", 2.0, 0.75),
    ]
    .into_iter()
    .map(|(name, g, gamma)| (name, ModelParams::symmetric(1.0, g, gamma).expect("valid preset")))
    .collect()
}

/// Survival staircase: quoted c = 0.1, gamma = 0.01, v = 1, N = 20, south pole.
pub fn figure2_spec(convention: InteractionConvention) -> ExperimentSpec {
    ExperimentSpec {
        id: format!("figure2-{}", convention.as_str()),
        epsilon: 0.0,
        v: 1.0,
        g: 0.1,
        gamma: 0.01,
        convention,
        n_particles: FIG_N,
        initial: InitialCondition::SouthPole,
        t_max: 20.0,
        samples: 2001,
        solver: Solver::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fig3Panel {
    /// g = 0.5, gamma = 0.1.
    Top,
    /// g = 2, gamma = 0.5.
    Bottom,
}

impl std::str::FromStr for Fig3Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "top" => Ok(Self::Top),
            "bottom" => Ok(Self::Bottom),
            other => Err(Error::InvalidParams(format!("unknown panel `{other}` (expected top|bottom)"))),
        }
    }
}

/// Population imbalance from the north pole, N = 20, v = 1.
pub fn figure3_spec(panel: Fig3Panel) -> ExperimentSpec {
    let (name, g, gamma) = match panel {
        Fig3Panel::Top => ("top", 0.5, 0.1),
        Fig3Panel::Bottom => ("bottom", 2.0, 0.5),
    };
    ExperimentSpec {
        id: format!("figure3-{name}"),
        epsilon: 0.0,
        v: 1.0,
        g,
        gamma,
        convention: InteractionConvention::Macroscopic,
        n_particles: FIG_N,
        initial: InitialCondition::NorthPole,
        t_max: 40.0,
        samples: 4001,
        solver: Solver::default(),
    }
}
