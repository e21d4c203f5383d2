use std::path::{Path, PathBuf};

use serde_json::json;

use dimer_core::exec::Execution;
use dimer_core::experiments::output::{self, Manifest};
use dimer_core::experiments::presets::{self, Fig3Panel};
use dimer_core::experiments::{self as exp, ExperimentSpec, InitialCondition};
use dimer_core::fixedpoints::{self, GridAxis};
use dimer_core::meanfield::{self, KappaConvention, SpinorState};
use dimer_core::{fock, InteractionConvention, ModelParams, Solver};

use crate::args::Command;
use crate::config::{format_init, Config};
use crate::error::CliError;

const DEFAULT_N: usize = 20;
const DEFAULT_T_MAX: f64 = 20.0;
const DEFAULT_SAMPLES: usize = 201;
const PORTRAIT_SAMPLES: usize = 401;

/// Accumulates the files of one run and writes its manifest last.
struct Run<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl<'a> Run<'a> {
    fn new(dir: &'a Path, id: &str, command: &str, cfg: &Config, solver: Solver) -> Self {
        let mut manifest = Manifest::new(id, command, solver);
        manifest.config = cfg.entries().clone();
        manifest.config.insert("id".into(), id.into());
        Self { dir, manifest }
    }

    fn file(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        output::write_file(self.dir, name, contents)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.manifest.write(self.dir)?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    let name = command.name();
    let common = command.common();
    let mut cfg = Config::default();
    for path in specs_for_base(command) {
        cfg.merge(&Config::load(path, name)?);
    }
    let flags = match command {
        Command::Figure(f) => Config::from_figure_flags(f),
        _ => Config::from_flags(common),
    };
    cfg.merge(&flags);
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    configure_threads(&cfg)?;

    match command {
        Command::MpEvolve(_) => mp_evolve(&cfg, &out),
        Command::MfEvolve(_) => mf_evolve(&cfg, &out),
        Command::GpeEvolve(_) => gpe_evolve(&cfg, &out),
        Command::Compare(c) if c.specs.len() > 1 => {
            let cfgs = c
                .specs
                .iter()
                .map(|p| {
                    let mut one = Config::load(p, name)?;
                    one.merge(&flags);
                    Ok(one)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            compare(&cfgs, &out, execution(&cfg)?)
        }
        Command::Compare(_) => compare(&[cfg.clone()], &out, execution(&cfg)?),
        Command::FixedPoints(_) => fixed_points(&cfg, &out),
        Command::RegionScan(_) => region_scan(&cfg, &out),
        Command::PhasePortrait(_) => phase_portrait(&cfg, &out),
        Command::Figure(_) => figure(&cfg, &out),
    }
}

/// Batched `compare` layers each spec separately; everything else stacks them.
fn specs_for_base(command: &Command) -> &[PathBuf] {
    match command {
        Command::Compare(c) if c.specs.len() > 1 => &[],
        _ => &command.common().specs,
    }
}

fn configure_threads(cfg: &Config) -> Result<(), CliError> {
    if let Some(n) = cfg.parse::<usize>("threads")? {
        if n == 0 {
            return Err(CliError::Usage("`threads` must be >= 1".into()));
        }
        // Fails only if a pool already exists, which keeps the first setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execution(cfg: &Config) -> Result<Execution, CliError> {
    Ok(match cfg.parse::<usize>("threads")? {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    })
}

fn convention(cfg: &Config) -> Result<InteractionConvention, CliError> {
    cfg.parse_or("convention", InteractionConvention::Macroscopic)
}

fn params(cfg: &Config, n: usize) -> Result<ModelParams, CliError> {
    let g = convention(cfg)?.macroscopic_g(cfg.parse_or("g", 0.0)?, n);
    Ok(ModelParams::new(
        cfg.parse_or("epsilon", 0.0)?,
        cfg.parse_or("v", 1.0)?,
        g,
        cfg.parse_or("gamma", 0.0)?,
    )?)
}

fn id(cfg: &Config, default: &str) -> String {
    cfg.get("id").unwrap_or(default).to_string()
}

fn time_grid(cfg: &Config, default_samples: usize) -> Result<Vec<f64>, CliError> {
    let t_max: f64 = cfg.parse_or("t-max", DEFAULT_T_MAX)?;
    let samples: usize = cfg.parse_or("samples", default_samples)?;
    if !(t_max > 0.0 && t_max.is_finite()) || samples < 2 {
        return Err(CliError::Usage("need t-max > 0 and samples >= 2".into()));
    }
    Ok((0..samples)
        .map(|i| if i + 1 == samples { t_max } else { t_max * i as f64 / (samples - 1) as f64 })
        .collect())
}

fn mp_evolve(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let n = cfg.parse_or("n", DEFAULT_N)?;
    let p = params(cfg, n)?;
    let solver = cfg.solver()?;
    let times = time_grid(cfg, DEFAULT_SAMPLES)?;
    let (x1, x2) = cfg.initial(InitialCondition::SouthPole)?.spinor()?;
    let state = fock::coherent_state(x1, x2, n)?;
    let h = fock::build_hamiltonian(&p, n)?;
    let records: Vec<_> = fock::propagate_sampled(&state, &h, 0.0, &times, &solver)?
        .iter()
        .zip(&times)
        .map(|(s, &t)| s.observables(t))
        .collect();
    let run_id = id(cfg, "mp-evolve");
    let mut run = Run::new(out, &run_id, "mp-evolve", cfg, solver);
    run.file(&format!("{run_id}.csv"), &output::observables_csv(&records))?;
    if let Some(last) = records.last() {
        run.manifest
            .diagnostics
            .insert("final".into(), json!({ "t": last.t, "sz": last.sz, "survival": last.survival }));
    }
    run.finish()?;
    Ok(())
}

fn mf_evolve(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let p = params(cfg, cfg.parse_or("n", DEFAULT_N)?)?;
    let solver = cfg.solver()?;
    let times = time_grid(cfg, DEFAULT_SAMPLES)?;
    let s0 = cfg.initial(InitialCondition::SouthPole)?.bloch()?;
    s0.validate()?;
    let samples = meanfield::integrate_bloch(&s0, &p, 0.0, &times, &solver)?;
    let run_id = id(cfg, "mf-evolve");
    let mut run = Run::new(out, &run_id, "mf-evolve", cfg, solver);
    run.file(&format!("{run_id}.csv"), &output::bloch_csv(&samples))?;
    let max_defect = samples.iter().fold(0.0f64, |m, (_, s)| m.max(s.sphere_defect()));
    run.manifest.diagnostics.insert("max_sphere_defect".into(), json!(max_defect));
    run.finish()?;
    Ok(())
}

fn gpe_evolve(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let p = params(cfg, cfg.parse_or("n", DEFAULT_N)?)?;
    let kappa: KappaConvention = cfg.parse_or("kappa", KappaConvention::Normalized)?;
    let solver = cfg.solver()?;
    let times = time_grid(cfg, DEFAULT_SAMPLES)?;
    let (x1, x2) = cfg.initial(InitialCondition::SouthPole)?.spinor()?;
    let samples = meanfield::integrate_gpe(&SpinorState::new(x1, x2), &p, kappa, 0.0, &times, &solver)?;
    let run_id = id(cfg, "gpe-evolve");
    let mut run = Run::new(out, &run_id, "gpe-evolve", cfg, solver);
    run.file(&format!("{run_id}.csv"), &output::gpe_csv(&samples)?)?;
    run.finish()?;
    Ok(())
}

fn apply_overrides(spec: &mut ExperimentSpec, cfg: &Config) -> Result<(), CliError> {
    if let Some(id) = cfg.get("id") {
        spec.id = id.to_string();
    }
    spec.epsilon = cfg.parse_or("epsilon", spec.epsilon)?;
    spec.v = cfg.parse_or("v", spec.v)?;
    spec.g = cfg.parse_or("g", spec.g)?;
    spec.gamma = cfg.parse_or("gamma", spec.gamma)?;
    spec.convention = cfg.parse_or("convention", spec.convention)?;
    spec.n_particles = cfg.parse_or("n", spec.n_particles)?;
    spec.initial = cfg.initial(spec.initial)?;
    spec.t_max = cfg.parse_or("t-max", spec.t_max)?;
    spec.samples = cfg.parse_or("samples", spec.samples)?;
    if ["rtol", "atol", "fixed-step"].iter().any(|k| cfg.contains(k)) {
        spec.solver = cfg.solver()?;
    }
    spec.validate()?;
    Ok(())
}

/// Configuration that reproduces `spec` exactly.
fn spec_config(base: &Config, spec: &ExperimentSpec) -> Config {
    let mut cfg = base.clone();
    cfg.set("id", &spec.id);
    cfg.set("epsilon", spec.epsilon);
    cfg.set("v", spec.v);
    cfg.set("g", spec.g);
    cfg.set("gamma", spec.gamma);
    cfg.set("convention", spec.convention.as_str());
    cfg.set("n", spec.n_particles);
    cfg.set("init", format_init(&spec.initial));
    cfg.set("t-max", spec.t_max);
    cfg.set("samples", spec.samples);
    cfg
}

fn summary_json(summary: &exp::metrics::DeviationSummary) -> Result<serde_json::Value, CliError> {
    Ok(serde_json::to_value(summary).map_err(dimer_core::Error::from)?)
}

fn compare(cfgs: &[Config], out: &Path, exec: Execution) -> Result<(), CliError> {
    let specs = cfgs
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            let mut spec = ExperimentSpec {
                id: if cfgs.len() > 1 { format!("compare-{}", i + 1) } else { "compare".into() },
                epsilon: 0.0,
                v: 1.0,
                g: 0.0,
                gamma: 0.0,
                convention: InteractionConvention::Macroscopic,
                n_particles: DEFAULT_N,
                initial: InitialCondition::SouthPole,
                t_max: DEFAULT_T_MAX,
                samples: DEFAULT_SAMPLES,
                solver: Solver::default(),
            };
            apply_overrides(&mut spec, cfg)?;
            Ok(spec)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for (i, a) in specs.iter().enumerate() {
        if specs[..i].iter().any(|b| b.id == a.id) {
            return Err(CliError::Usage(format!("duplicate run id `{}` in batch", a.id)));
        }
    }
    let results = exp::run_batch(&specs, exec);
    for ((spec, cfg), result) in specs.iter().zip(cfgs).zip(results) {
        let series = result?;
        write_comparison(out, "compare", &spec_config(cfg, spec), &series, &series.summary()?, |_| {})?;
    }
    Ok(())
}

fn write_comparison(
    out: &Path,
    command: &str,
    cfg: &Config,
    series: &exp::ComparisonSeries,
    summary: &exp::metrics::DeviationSummary,
    extra: impl FnOnce(&mut Manifest),
) -> Result<(), CliError> {
    let spec = &series.spec;
    let mut run = Run::new(out, &spec.id, command, cfg, spec.solver);
    run.file(&format!("{}.csv", spec.id), &output::comparison_csv(series))?;
    run.manifest.spec = Some(serde_json::to_value(spec).map_err(dimer_core::Error::from)?);
    run.manifest.diagnostics.insert("summary".into(), summary_json(summary)?);
    extra(&mut run.manifest);
    println!(
        "{}: max rel. survival deviation {:.3e}, max |d sz| {:.3e}",
        spec.id, summary.max_rel_dev_survival, summary.max_abs_dev_sz
    );
    run.finish()?;
    Ok(())
}

fn fixed_points(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let p = params(cfg, cfg.parse_or("n", DEFAULT_N)?)?;
    let records = fixedpoints::fixed_points(&p)?;
    print!("{}", output::fixed_points_table(&records));
    let run_id = id(cfg, "fixed-points");
    let mut run = Run::new(out, &run_id, "fixed-points", cfg, Solver::default());
    run.file(&format!("{run_id}.csv"), &output::fixed_points_csv(&records))?;
    if p.epsilon == 0.0 {
        let label = fixedpoints::region(&p)?;
        println!("region ({})", label.label.letter());
        run.manifest.diagnostics.insert("region".into(), json!(label.label.letter().to_string()));
    }
    run.manifest
        .diagnostics
        .insert("index_sum".into(), json!(fixedpoints::index_sum_check(&records)));
    run.finish()?;
    Ok(())
}

fn region_scan(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let v = cfg.parse_or("v", 1.0)?;
    let g_axis = GridAxis::new(cfg.parse_or("g-min", 0.0)?, cfg.parse_or("g-max", 3.0)?, cfg.parse_or("g-steps", 61)?)?;
    let gamma_axis = GridAxis::new(
        cfg.parse_or("gamma-min", 0.0)?,
        cfg.parse_or("gamma-max", 3.0)?,
        cfg.parse_or("gamma-steps", 61)?,
    )?;
    let scan = fixedpoints::bifurcation_scan(v, g_axis, gamma_axis, execution(cfg)?)?;
    let run_id = id(cfg, "region-scan");
    let mut run = Run::new(out, &run_id, "region-scan", cfg, Solver::default());
    run.file(&format!("{run_id}.csv"), &output::scan_csv(&scan))?;
    run.file(&format!("{run_id}-crossings.csv"), &output::crossings_csv(&scan))?;
    let count = |k: usize| scan.points.iter().filter(|p| p.count == k).count();
    println!(
        "{} grid points: {} with 2 fixed points, {} with 4, {} boundary crossings, {} exceptional points",
        scan.points.len(),
        count(2),
        count(4),
        scan.crossings.len(),
        scan.exceptional_points.len()
    );
    run.manifest.diagnostics.insert("crossings".into(), json!(scan.crossings.len()));
    run.manifest
        .diagnostics
        .insert("exceptional_points".into(), json!(scan.exceptional_points));
    run.finish()?;
    Ok(())
}

fn portrait_files(run: &mut Run, stem: &str, cfg: &Config, p: &ModelParams) -> Result<(), CliError> {
    let seeds = exp::seed_grid(cfg.parse_or("seeds-theta", 6)?, cfg.parse_or("seeds-phi", 12)?);
    let t_max = cfg.parse_or("t-max", DEFAULT_T_MAX)?;
    let samples = cfg.parse_or("samples", PORTRAIT_SAMPLES)?;
    let portrait = exp::run_phase_portrait(p, &seeds, t_max, samples, &run.manifest.solver, execution(cfg)?)?;
    run.file(&format!("{stem}-trajectories.csv"), &output::trajectories_csv(&portrait))?;
    run.file(&format!("{stem}-fixed-points.csv"), &output::fixed_points_csv(&portrait.fixed_points))?;
    Ok(())
}

fn phase_portrait(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let p = params(cfg, cfg.parse_or("n", DEFAULT_N)?)?;
    let run_id = id(cfg, "phase-portrait");
    let mut run = Run::new(out, &run_id, "phase-portrait", cfg, cfg.solver()?);
    portrait_files(&mut run, &run_id, cfg, &p)?;
    run.finish()?;
    Ok(())
}

fn figure(cfg: &Config, out: &Path) -> Result<(), CliError> {
    match cfg.get("figure").map(str::trim) {
        Some("1") => figure1(cfg, out),
        Some("2") => figure2(cfg, out),
        Some("3") => figure3(cfg, out),
        Some(other) => Err(CliError::Usage(format!("unknown figure `{other}` (expected 1, 2 or 3)"))),
        None => Err(CliError::Usage("figure number required (1, 2 or 3)".into())),
    }
}

fn figure1(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let run_id = id(cfg, "figure1");
    let mut run = Run::new(out, &run_id, "figure", cfg, cfg.solver()?);
    for (name, p) in presets::figure1_panels() {
        portrait_files(&mut run, &format!("{run_id}-{name}"), cfg, &p)?;
        let records = fixedpoints::fixed_points(&p)?;
        let classes: Vec<&str> = records.iter().map(|r| r.class.as_str()).collect();
        println!("{name}: g = {}, gamma = {}: {}", p.g, p.gamma, classes.join(", "));
        run.manifest.diagnostics.insert(name.into(), json!(classes));
    }
    run.finish()?;
    Ok(())
}

fn figure2(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let conventions = match cfg.get("convention") {
        Some(_) => vec![convention(cfg)?],
        None => vec![InteractionConvention::Macroscopic, InteractionConvention::Microscopic],
    };
    let specs = conventions
        .iter()
        .map(|&c| {
            let mut spec = presets::figure2_spec(c);
            let mut one = cfg.clone();
            one.set("convention", c.as_str());
            if conventions.len() > 1 {
                one.remove("id");
            }
            apply_overrides(&mut spec, &one)?;
            Ok((spec, one))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let reports = execution(cfg)?.map(&specs, |(spec, _)| exp::run_survival_staircase(spec));
    for ((spec, one), report) in specs.iter().zip(reports) {
        let r = report?;
        let passes = r.passes();
        write_comparison(out, "figure", &spec_config(one, spec), &r.series, &r.summary, |m| {
            m.thresholds.insert("max_rel_dev_early".into(), exp::STAIRCASE_MAX_REL_DEV);
            m.thresholds.insert("early_horizon".into(), exp::EARLY_HORIZON);
            m.thresholds.insert("period_tol".into(), exp::STAIRCASE_PERIOD_TOL);
            m.thresholds.insert("min_steps".into(), exp::MIN_STAIRCASE_STEPS as f64);
            m.diagnostics.insert(
                "staircase".into(),
                json!({
                    "rate_period": r.rate_period,
                    "steps": r.steps,
                    "survival_non_increasing": r.survival_non_increasing,
                    "max_rel_dev_early": r.max_rel_dev_early,
                    "window_maxima": r.window_maxima,
                    "deviation_grows": r.deviation_grows,
                    "passes": passes,
                }),
            );
        })?;
        println!(
            "{}: staircase {} (period {:?}, {} steps, early deviation {:.3e})",
            spec.id,
            if passes { "reproduced" } else { "not reproduced" },
            r.rate_period,
            r.steps,
            r.max_rel_dev_early
        );
    }
    Ok(())
}

fn figure3(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let panels = match cfg.get("panel").map(|s| s.trim().to_ascii_lowercase()) {
        None => vec![Fig3Panel::Top, Fig3Panel::Bottom],
        Some(s) if s == "both" => vec![Fig3Panel::Top, Fig3Panel::Bottom],
        Some(s) => vec![s.parse::<Fig3Panel>()?],
    };
    let specs = panels
        .iter()
        .map(|&panel| {
            let mut spec = presets::figure3_spec(panel);
            let mut one = cfg.clone();
            one.set("panel", if panel == Fig3Panel::Top { "top" } else { "bottom" });
            if panels.len() > 1 {
                one.remove("id");
            }
            apply_overrides(&mut spec, &one)?;
            Ok((spec, one))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let reports = execution(cfg)?.map(&specs, |(spec, _)| exp::run_population_imbalance(spec));
    for ((spec, one), report) in specs.iter().zip(reports) {
        let r = report?;
        write_comparison(out, "figure", &spec_config(one, spec), &r.series, &r.summary, |m| {
            m.thresholds.insert("period_match_tol".into(), exp::PERIOD_MATCH_TOL);
            m.thresholds.insert("envelope_periods".into(), exp::ENVELOPE_PERIODS as f64);
            m.thresholds.insert("sink_distance_tol".into(), exp::SINK_DISTANCE_TOL);
            m.diagnostics.insert(
                "imbalance".into(),
                json!({
                    "period_mp": r.period_mp,
                    "period_mf": r.period_mf,
                    "period_mismatch": r.period_mismatch(),
                    "envelope_mp": r.envelope_mp,
                    "envelope_decreasing": r.envelope_decreasing(exp::ENVELOPE_PERIODS),
                    "final_sz_mp": r.final_sz_mp,
                    "final_sz_mf": r.final_sz_mf,
                    "sink_sz": r.sink_sz,
                    "sink_distance_mp": r.sink_distance_mp,
                }),
            );
        })?;
        println!(
            "{}: period MP {:?} / MF {:?}, final sz MP {:.6} / MF {:.6}, sink {:?}",
            spec.id, r.period_mp, r.period_mf, r.final_sz_mp, r.final_sz_mf, r.sink_sz
        );
    }
    Ok(())
}
