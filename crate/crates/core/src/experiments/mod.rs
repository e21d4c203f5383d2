//! Scripted mean-field vs. many-particle runs and the figure presets.

pub mod metrics;
pub mod output;
pub mod presets;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fixedpoints::{self, FixedPointRecord, Stability};
use crate::fock::{self, ObservableRecord};
use crate::meanfield::{self, BlochState};
use crate::ode::Solver;
use crate::params::{InteractionConvention, ModelParams};

use metrics::{relative_deviation, DeviationSummary};

/// Relative survival deviation must stay below this up to [`EARLY_HORIZON`].
pub const STAIRCASE_MAX_REL_DEV: f64 = 0.05;
pub const EARLY_HORIZON: f64 = 10.0;
/// Number of windows used for the growth trend of the survival deviation.
pub const DEVIATION_WINDOWS: usize = 4;
/// Relative tolerance on the decay-rate period against pi / v.
pub const STAIRCASE_PERIOD_TOL: f64 = 0.05;
pub const MIN_STAIRCASE_STEPS: usize = 3;
/// Relative tolerance on the many-particle vs. mean-field s_z period.
pub const PERIOD_MATCH_TOL: f64 = 0.05;
/// Number of leading periods over which the amplitude must shrink.
pub const ENVELOPE_PERIODS: usize = 5;
/// Long-time distance of the many-particle s_z from the mean-field sink.
pub const SINK_DISTANCE_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    NorthPole,
    SouthPole,
    Bloch { sx: f64, sy: f64, sz: f64 },
    Spinor { x1: Complex64, x2: Complex64 },
}

impl InitialCondition {
    /// Coherent-state parameters `(x1, x2)`.
    pub fn spinor(&self) -> Result<(Complex64, Complex64)> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match *self {
            InitialCondition::NorthPole => Ok((one, zero)),
            InitialCondition::SouthPole => Ok((zero, one)),
            InitialCondition::Bloch { sx, sy, sz } => {
                let psi = meanfield::spinor_from_bloch(&BlochState::new(sx, sy, sz, 1.0))?;
                Ok((psi.psi1, psi.psi2))
            }
            InitialCondition::Spinor { x1, x2 } => Ok((x1, x2)),
        }
    }

    pub fn bloch(&self) -> Result<BlochState> {
        let (x1, x2) = self.spinor()?;
        let s = meanfield::bloch_from_spinor(&meanfield::SpinorState::new(x1, x2))?;
        if let InitialCondition::Bloch { sx, sy, sz } = *self {
            return Ok(BlochState::new(sx, sy, sz, s.n));
        }
        Ok(s)
    }
}

/// Full description of one comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub epsilon: f64,
    pub v: f64,
    /// Interaction strength as quoted; see `convention`.
    pub g: f64,
    pub gamma: f64,
    pub convention: InteractionConvention,
    pub n_particles: usize,
    pub initial: InitialCondition,
    pub t_max: f64,
    pub samples: usize,
    pub solver: Solver,
}

impl ExperimentSpec {
    /// Model parameters with `g` converted to the macroscopic convention.
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.epsilon,
            self.v,
            self.convention.macroscopic_g(self.g, self.n_particles),
            self.gamma,
        )
    }

    /// Uniform sample grid on `[0, t_max]`, both ends included.
    pub fn times(&self) -> Vec<f64> {
        let n = self.samples;
        (0..n)
            .map(|i| if i + 1 == n { self.t_max } else { self.t_max * i as f64 / (n - 1) as f64 })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.solver.validate()?;
        if self.n_particles < 1 {
            return Err(Error::InvalidParams("particle number must be >= 1".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParams(format!("t_max = {} must be positive", self.t_max)));
        }
        if self.samples < 2 {
            return Err(Error::InvalidParams("need at least two samples".into()));
        }
        self.initial.bloch()?.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub mp: ObservableRecord,
    pub mf: BlochState,
    pub mf_survival: f64,
    pub mf_pop1: f64,
    pub mf_pop2: f64,
    pub abs_dev: [f64; 3],
    pub rel_dev_survival: f64,
    pub rel_dev_pop1: f64,
    pub rel_dev_pop2: f64,
}

impl ComparisonRow {
    fn new(mp: ObservableRecord, mf: BlochState, n_particles: usize) -> Self {
        let mf_survival = mf.survival(n_particles);
        let mf_pop1 = (0.5 + mf.sz) * mf_survival;
        let mf_pop2 = (0.5 - mf.sz) * mf_survival;
        Self {
            t: mp.t,
            mp,
            mf,
            mf_survival,
            mf_pop1,
            mf_pop2,
            abs_dev: [(mp.sx - mf.sx).abs(), (mp.sy - mf.sy).abs(), (mp.sz - mf.sz).abs()],
            rel_dev_survival: relative_deviation(mp.survival, mf_survival),
            rel_dev_pop1: relative_deviation(mp.pop1, mf_pop1),
            rel_dev_pop2: relative_deviation(mp.pop2, mf_pop2),
        }
    }

    /// Mean-field values in the many-particle record layout.
    pub fn mf_record(&self) -> ObservableRecord {
        ObservableRecord {
            t: self.t,
            sx: self.mf.sx,
            sy: self.mf.sy,
            sz: self.mf.sz,
            survival: self.mf_survival,
            pop1: self.mf_pop1,
            pop2: self.mf_pop2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSeries {
    pub spec: ExperimentSpec,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonSeries {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn mp_records(&self) -> Vec<ObservableRecord> {
        self.rows.iter().map(|r| r.mp).collect()
    }

    pub fn mf_records(&self) -> Vec<ObservableRecord> {
        self.rows.iter().map(ComparisonRow::mf_record).collect()
    }

    pub fn summary(&self) -> Result<DeviationSummary> {
        metrics::deviation_metrics(&self.mp_records(), &self.mf_records())
    }
}

/// Runs both engines from the same coherent initial state on the spec's grid.
pub fn run_comparison(spec: &ExperimentSpec) -> Result<ComparisonSeries> {
    spec.validate()?;
    let params = spec.params()?;
    let times = spec.times();
    let (x1, x2) = spec.initial.spinor()?;
    let psi0 = fock::coherent_state(x1, x2, spec.n_particles)?;
    let h = fock::build_hamiltonian(&params, spec.n_particles)?;
    let mp = fock::propagate_sampled(&psi0, &h, 0.0, &times, &spec.solver)?;
    let mf = meanfield::integrate_bloch(&spec.initial.bloch()?, &params, 0.0, &times, &spec.solver)?;
    let rows = mp
        .iter()
        .zip(&mf)
        .map(|(state, (t, s))| ComparisonRow::new(state.observables(*t), *s, spec.n_particles))
        .collect();
    Ok(ComparisonSeries {
        spec: spec.clone(),
        rows,
    })
}

/// Independent comparison runs, fanned out according to `exec`.
pub fn run_batch(specs: &[ExperimentSpec], exec: Execution) -> Vec<Result<ComparisonSeries>> {
    exec.map(specs, run_comparison)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseReport {
    pub series: ComparisonSeries,
    pub summary: DeviationSummary,
    /// `-d ln <psi|psi> / dt` of the many-particle run on the sample grid.
    pub decay_rate: Vec<f64>,
    pub rate_period: Option<f64>,
    /// Number of decay-rate maxima, i.e. steep segments of the staircase.
    pub steps: usize,
    pub survival_non_increasing: bool,
    pub max_rel_dev_early: f64,
    pub window_maxima: Vec<f64>,
    pub deviation_grows: bool,
}

impl StaircaseReport {
    /// Period check against the linear Rabi value pi / v.
    pub fn period_matches_rabi(&self) -> bool {
        let rabi = std::f64::consts::PI / self.series.spec.v.abs();
        self.rate_period
            .is_some_and(|p| ((p - rabi) / rabi).abs() <= STAIRCASE_PERIOD_TOL)
    }

    pub fn passes(&self) -> bool {
        self.survival_non_increasing
            && self.steps >= MIN_STAIRCASE_STEPS
            && self.period_matches_rabi()
            && self.max_rel_dev_early < STAIRCASE_MAX_REL_DEV
            && self.deviation_grows
    }
}

fn require_initial(spec: &ExperimentSpec, want_sz: f64, what: &str) -> Result<()> {
    let s = spec.initial.bloch()?;
    if (s.sz - want_sz).abs() > 1e-12 {
        return Err(Error::InvalidParams(format!(
            "experiment `{}` must start at the {what} (s_z = {want_sz}), got s_z = {}",
            spec.id, s.sz
        )));
    }
    Ok(())
}

/// Survival decay from the south pole with staircase diagnostics.
pub fn run_survival_staircase(spec: &ExperimentSpec) -> Result<StaircaseReport> {
    require_initial(spec, -0.5, "south pole")?;
    let series = run_comparison(spec)?;
    let summary = series.summary()?;
    let times = series.times();
    let log_surv: Vec<f64> = series.rows.iter().map(|r| r.mp.survival.ln()).collect();
    let decay_rate: Vec<f64> = metrics::derivative(&times, &log_surv).into_iter().map(|d| -d).collect();
    let rate_period = metrics::estimate_period(&times, &decay_rate);
    let steps = metrics::extrema(&times, &decay_rate).iter().filter(|e| e.is_max).count();
    let survival_non_increasing = series
        .rows
        .windows(2)
        .all(|w| w[1].mp.survival <= w[0].mp.survival * (1.0 + 1e-12));
    let max_rel_dev_early = series
        .rows
        .iter()
        .filter(|r| r.t <= EARLY_HORIZON)
        .fold(0.0f64, |m, r| m.max(r.rel_dev_survival));
    let rel: Vec<f64> = series.rows.iter().map(|r| r.rel_dev_survival).collect();
    let window_maxima = metrics::windowed_maxima(&times, &rel, DEVIATION_WINDOWS);
    let deviation_grows = window_maxima.windows(2).all(|w| w[1] >= w[0]);
    Ok(StaircaseReport {
        series,
        summary,
        decay_rate,
        rate_period,
        steps,
        survival_non_increasing,
        max_rel_dev_early,
        window_maxima,
        deviation_grows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub series: ComparisonSeries,
    pub summary: DeviationSummary,
    pub period_mp: Option<f64>,
    pub period_mf: Option<f64>,
    /// Peak-to-peak s_z per period of the respective engine.
    pub envelope_mp: Vec<f64>,
    pub envelope_mf: Vec<f64>,
    pub final_sz_mp: f64,
    pub final_sz_mf: f64,
    /// s_z of the mean-field sink, when one exists.
    pub sink_sz: Option<f64>,
    pub sink_distance_mp: Option<f64>,
}

impl ImbalanceReport {
    pub fn period_mismatch(&self) -> Option<f64> {
        match (self.period_mp, self.period_mf) {
            (Some(a), Some(b)) => Some(((a - b) / b).abs()),
            _ => None,
        }
    }

    /// Strictly decreasing many-particle amplitude over the leading periods.
    pub fn envelope_decreasing(&self, periods: usize) -> bool {
        self.envelope_mp.len() >= periods && self.envelope_mp[..periods].windows(2).all(|w| w[1] < w[0])
    }
}

/// Population imbalance from the north pole.
pub fn run_population_imbalance(spec: &ExperimentSpec) -> Result<ImbalanceReport> {
    require_initial(spec, 0.5, "north pole")?;
    let series = run_comparison(spec)?;
    let summary = series.summary()?;
    let times = series.times();
    let sz_mp: Vec<f64> = series.rows.iter().map(|r| r.mp.sz).collect();
    let sz_mf: Vec<f64> = series.rows.iter().map(|r| r.mf.sz).collect();
    let period_mp = summary.period_mp;
    let period_mf = summary.period_mf;
    let envelope_mp = period_mp.map_or_else(Vec::new, |p| metrics::per_period_amplitude(&times, &sz_mp, p));
    let envelope_mf = period_mf.map_or_else(Vec::new, |p| metrics::per_period_amplitude(&times, &sz_mf, p));
    let params = series.spec.params()?;
    let sink_sz = if params.v != 0.0 {
        fixedpoints::fixed_points(&params)?
            .into_iter()
            .find(|r| r.class == Stability::Sink)
            .map(|r| r.s[2])
    } else {
        None
    };
    let final_sz_mp = *sz_mp.last().expect("non-empty");
    let final_sz_mf = *sz_mf.last().expect("non-empty");
    Ok(ImbalanceReport {
        sink_distance_mp: sink_sz.map(|s| (final_sz_mp - s).abs()),
        series,
        summary,
        period_mp,
        period_mf,
        envelope_mp,
        envelope_mf,
        final_sz_mp,
        final_sz_mf,
        sink_sz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: BlochState,
    pub samples: Vec<(f64, BlochState)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub params: ModelParams,
    pub trajectories: Vec<Trajectory>,
    pub fixed_points: Vec<FixedPointRecord>,
}

/// Seeds on a `n_theta x n_phi` angular grid avoiding the poles.
pub fn seed_grid(n_theta: usize, n_phi: usize) -> Vec<BlochState> {
    let pi = std::f64::consts::PI;
    (0..n_theta)
        .flat_map(|i| {
            (0..n_phi).map(move |j| {
                BlochState::from_angles(pi * (i as f64 + 0.5) / n_theta as f64, 2.0 * pi * j as f64 / n_phi as f64)
            })
        })
        .collect()
}

/// Integrates every seed and attaches the fixed-point overlay.
pub fn run_phase_portrait(
    params: &ModelParams,
    seeds: &[BlochState],
    t_max: f64,
    samples: usize,
    solver: &Solver,
    exec: Execution,
) -> Result<PhasePortrait> {
    if samples < 2 || !(t_max > 0.0) {
        return Err(Error::InvalidParams("phase portrait needs t_max > 0 and >= 2 samples".into()));
    }
    let times: Vec<f64> = (0..samples).map(|i| t_max * i as f64 / (samples - 1) as f64).collect();
    let trajectories = exec
        .map(seeds, |seed| {
            meanfield::integrate_bloch(seed, params, 0.0, &times, solver).map(|samples| Trajectory {
                seed: *seed,
                samples,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let fixed_points = if params.v != 0.0 {
        fixedpoints::fixed_points(params)?
    } else {
        Vec::new()
    };
    Ok(PhasePortrait {
        params: *params,
        trajectories,
        fixed_points,
    })
}
