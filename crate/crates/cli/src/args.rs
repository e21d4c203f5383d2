use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dimer", version, about = "Non-hermitian Bose-Hubbard dimer: many-particle vs. mean-field dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate an SU(2) coherent state in the Fock basis.
    MpEvolve(Common),
    /// Integrate the mean-field Bloch equations.
    MfEvolve(Common),
    /// Integrate the two-mode discrete Gross-Pitaevskii equation.
    GpeEvolve(Common),
    /// Many-particle vs. mean-field comparison; several `--spec` files run as a batch.
    Compare(Common),
    /// Stationary points of the Bloch flow with their stability.
    FixedPoints(Common),
    /// Fixed-point census over a (g, gamma) grid.
    RegionScan(Common),
    /// Bloch-sphere trajectories from a grid of seeds.
    PhasePortrait(Common),
    /// Reference figure presets.
    Figure(FigureArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MpEvolve(_) => "mp-evolve",
            Command::MfEvolve(_) => "mf-evolve",
            Command::GpeEvolve(_) => "gpe-evolve",
            Command::Compare(_) => "compare",
            Command::FixedPoints(_) => "fixed-points",
            Command::RegionScan(_) => "region-scan",
            Command::PhasePortrait(_) => "phase-portrait",
            Command::Figure(_) => "figure",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::MpEvolve(c)
            | Command::MfEvolve(c)
            | Command::GpeEvolve(c)
            | Command::Compare(c)
            | Command::FixedPoints(c)
            | Command::RegionScan(c)
            | Command::PhasePortrait(c) => c,
            Command::Figure(f) => &f.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// Figure number: 1, 2 or 3.
    pub which: Option<String>,
    /// Figure 3 panel: top, bottom or both.
    #[arg(long)]
    pub panel: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

/// Flags shared by every subcommand. Each one maps to the spec-file key of the same name.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// Flat `key = value` spec file or a JSON manifest from an earlier run.
    #[arg(long = "spec", value_name = "FILE")]
    pub specs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, env = "DIMER_OUT_DIR", value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run identifier, used as the file stem of the outputs.
    #[arg(long)]
    pub id: Option<String>,

    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
    /// Interaction strength, read according to `--convention`.
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Particle number.
    #[arg(long)]
    pub n: Option<usize>,
    /// Initial state: north, south, bloch:SX,SY,SZ or spinor:RE1,IM1,RE2,IM2.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of output samples on [0, t-max].
    #[arg(long)]
    pub samples: Option<usize>,

    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Use classical RK4 with this step instead of the adaptive solver.
    #[arg(long)]
    pub fixed_step: Option<f64>,

    /// How `--g` is read: macroscopic (g = cN) or microscopic (c).
    #[arg(long)]
    pub convention: Option<String>,
    /// Nonlinearity normalization for gpe-evolve: normalized or unnormalized.
    #[arg(long)]
    pub kappa: Option<String>,
    /// Worker threads for sweeps and batches; 1 runs sequentially.
    #[arg(long)]
    pub threads: Option<usize>,

    #[arg(long, allow_hyphen_values = true)]
    pub g_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub g_max: Option<f64>,
    #[arg(long)]
    pub g_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    pub gamma_steps: Option<usize>,

    /// Phase-portrait seeds along the polar angle.
    #[arg(long)]
    pub seeds_theta: Option<usize>,
    /// Phase-portrait seeds along the azimuth.
    #[arg(long)]
    pub seeds_phi: Option<usize>,
}
