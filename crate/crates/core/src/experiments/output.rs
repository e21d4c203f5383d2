//! CSV datasets and per-run JSON manifests.
//!
//! Floats use the shortest round-trip `Display` form, so identical runs
//! produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ComparisonSeries, PhasePortrait};
use crate::error::Result;
use crate::fixedpoints::{FixedPointRecord, ScanResult};
use crate::fock::ObservableRecord;
use crate::meanfield::{bloch_from_spinor, BlochState, SpinorState};
use crate::ode::Solver;

pub const COMPARISON_HEADER: &str = "t,sx_mp,sy_mp,sz_mp,sx_mf,sy_mf,sz_mf,survival_mp,survival_mf,\
pop1_mp,pop1_mf,pop2_mp,pop2_mf,abs_dev_sx,abs_dev_sy,abs_dev_sz,rel_dev_survival,rel_dev_pop1,rel_dev_pop2";

fn row(out: &mut String, fields: &[f64]) {
    for (i, x) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x}");
    }
    out.push('\n');
}

pub fn comparison_csv(series: &ComparisonSeries) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in &series.rows {
        row(
            &mut out,
            &[
                r.t,
                r.mp.sx,
                r.mp.sy,
                r.mp.sz,
                r.mf.sx,
                r.mf.sy,
                r.mf.sz,
                r.mp.survival,
                r.mf_survival,
                r.mp.pop1,
                r.mf_pop1,
                r.mp.pop2,
                r.mf_pop2,
                r.abs_dev[0],
                r.abs_dev[1],
                r.abs_dev[2],
                r.rel_dev_survival,
                r.rel_dev_pop1,
                r.rel_dev_pop2,
            ],
        );
    }
    out
}

pub fn observables_csv(records: &[ObservableRecord]) -> String {
    let mut out = String::from("t,sx,sy,sz,survival,pop1,pop2\n");
    for r in records {
        row(&mut out, &[r.t, r.sx, r.sy, r.sz, r.survival, r.pop1, r.pop2]);
    }
    out
}

pub fn bloch_csv(samples: &[(f64, BlochState)]) -> String {
    let mut out = String::from("t,sx,sy,sz,n\n");
    for (t, s) in samples {
        row(&mut out, &[*t, s.sx, s.sy, s.sz, s.n]);
    }
    out
}

pub fn gpe_csv(samples: &[(f64, SpinorState)]) -> Result<String> {
    let mut out = String::from("t,re_psi1,im_psi1,re_psi2,im_psi2,beta,n,sx,sy,sz\n");
    for (t, psi) in samples {
        let b = bloch_from_spinor(psi)?;
        row(
            &mut out,
            &[*t, psi.psi1.re, psi.psi1.im, psi.psi2.re, psi.psi2.im, psi.beta, b.n, b.sx, b.sy, b.sz],
        );
    }
    Ok(out)
}

pub fn trajectories_csv(portrait: &PhasePortrait) -> String {
    let mut out = String::from("trajectory,t,sx,sy,sz,n\n");
    for (i, traj) in portrait.trajectories.iter().enumerate() {
        for (t, s) in &traj.samples {
            let _ = write!(out, "{i},");
            row(&mut out, &[*t, s.sx, s.sy, s.sz, s.n]);
        }
    }
    out
}

pub fn fixed_points_csv(records: &[FixedPointRecord]) -> String {
    let mut out = String::from("sx,sy,sz,re_lambda1,im_lambda1,re_lambda2,im_lambda2,class,index,residual\n");
    for r in records {
        let [l1, l2] = r.eigenvalues;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.s[0],
            r.s[1],
            r.s[2],
            l1.re,
            l1.im,
            l2.re,
            l2.im,
            r.class.as_str(),
            r.index,
            r.residual
        );
    }
    out
}

/// Human-readable fixed-point table.
pub fn fixed_points_table(records: &[FixedPointRecord]) -> String {
    let mut out = format!(
        "{:>10} {:>10} {:>10}  {:>22}  {:>22}  {:<8} {:>5}\n",
        "sx", "sy", "sz", "lambda1", "lambda2", "class", "index"
    );
    for r in records {
        let [l1, l2] = r.eigenvalues;
        let _ = writeln!(
            out,
            "{:>10.6} {:>10.6} {:>10.6}  {:>10.6}{:+10.6}i  {:>10.6}{:+10.6}i  {:<8} {:>5}",
            r.s[0],
            r.s[1],
            r.s[2],
            l1.re,
            l1.im,
            l2.re,
            l2.im,
            r.class.as_str(),
            r.index
        );
    }
    out
}

pub fn scan_csv(scan: &ScanResult) -> String {
    let mut out =
        String::from("g,gamma,region,count,centers,saddles,sinks,sources,marginal,index_sum,exceptional\n");
    for p in &scan.points {
        let region = p.region.map(|r| r.letter().to_string()).unwrap_or_default();
        let index_sum = p.index_sum.map(|i| i.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.g,
            p.gamma,
            region,
            p.count,
            p.centers,
            p.saddles,
            p.sinks,
            p.sources,
            p.marginal,
            index_sum,
            p.exceptional
        );
    }
    out
}

pub fn crossings_csv(scan: &ScanResult) -> String {
    let mut out = String::from("g,gamma,from_count,to_count\n");
    for c in &scan.crossings {
        let _ = writeln!(out, "{},{},{},{}", c.g, c.gamma, c.from_count, c.to_count);
    }
    out
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Everything needed to repeat a run. No timestamps, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub run_id: String,
    pub command: String,
    /// Effective flat key-value configuration after all overrides.
    pub config: BTreeMap<String, String>,
    /// Fully resolved experiment description, when the run has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<serde_json::Value>,
    pub solver: Solver,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(run_id: impl Into<String>, command: impl Into<String>, solver: Solver) -> Self {
        Self {
            tool: "dimer".into(),
            version: crate::VERSION.into(),
            run_id: run_id.into(),
            command: command.into(),
            config: BTreeMap::new(),
            spec: None,
            solver,
            outputs: Vec::new(),
            thresholds: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.manifest.json", self.run_id)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(dir, &self.file_name(), &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
