//! Fixed points of the nonlinear Bloch flow, their linear stability on the
//! sphere and the (g, gamma) parameter-plane structure for epsilon = 0.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::meanfield::spin_rhs;
use crate::params::ModelParams;

/// Maximum `|f(s)|` accepted for a fixed point.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Classification band around the imaginary axis.
pub const CLASSIFY_TOL: f64 = 1e-8;
/// Parameter points closer than this to a bifurcation boundary are marginal.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Imaginary-part cutoff for real quartic roots.
pub const ROOT_IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Center,
    Saddle,
    Sink,
    Source,
    /// Too close to a bifurcation to classify.
    Marginal,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Center => "center",
            Stability::Saddle => "saddle",
            Stability::Sink => "sink",
            Stability::Source => "source",
            Stability::Marginal => "marginal",
        }
    }

    /// Poincare index; 0 for marginal points.
    pub fn index(self) -> i32 {
        match self {
            Stability::Saddle => -1,
            Stability::Marginal => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub s: [f64; 3],
    /// Spectrum of the Jacobian restricted to the tangent plane.
    pub eigenvalues: [Complex64; 2],
    pub class: Stability,
    pub index: i32,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub eigenvalues: [Complex64; 2],
    pub class: Stability,
    pub index: i32,
}

/// Max-norm of the spin right-hand side at `s`.
pub fn residual(s: [f64; 3], p: &ModelParams) -> f64 {
    spin_rhs(s, p).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Analytic 3x3 Jacobian of the spin flow.
pub fn jacobian([sx, sy, sz]: [f64; 3], p: &ModelParams) -> Matrix3<f64> {
    let ModelParams { epsilon, v, g, gamma } = *p;
    Matrix3::new(
        4.0 * gamma * sz,
        -2.0 * epsilon - 4.0 * g * sz,
        -4.0 * g * sy + 4.0 * gamma * sx,
        2.0 * epsilon + 4.0 * g * sz,
        4.0 * gamma * sz,
        4.0 * g * sx - 2.0 * v + 4.0 * gamma * sy,
        0.0,
        2.0 * v,
        8.0 * gamma * sz,
    )
}

/// Orthonormal basis of the tangent plane of the sphere at `s`.
fn tangent_basis(s: [f64; 3]) -> (Vector3<f64>, Vector3<f64>) {
    let n = Vector3::from(s).normalize();
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = n.cross(&axis).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Tangent-plane Jacobian spectrum at `s`.
pub fn tangent_spectrum(s: [f64; 3], p: &ModelParams) -> [Complex64; 2] {
    let j = jacobian(s, p);
    let (e1, e2) = tangent_basis(s);
    let (je1, je2) = (j * e1, j * e2);
    let (a, b, c, d) = (e1.dot(&je1), e1.dot(&je2), e2.dot(&je1), e2.dot(&je2));
    let half_tr = 0.5 * (a + d);
    let disc = Complex64::new(0.25 * (a - d) * (a - d) + b * c, 0.0).sqrt();
    let mut ev = [half_tr + disc, half_tr - disc];
    if ev[0].im < ev[1].im || (ev[0].im == ev[1].im && ev[0].re < ev[1].re) {
        ev.swap(0, 1);
    }
    ev
}

fn class_from_spectrum(ev: [Complex64; 2]) -> Result<Stability> {
    let marginal = || Error::Marginal {
        re1: ev[0].re,
        im1: ev[0].im,
        re2: ev[1].re,
        im2: ev[1].im,
    };
    let complex = ev[0].im.abs() > CLASSIFY_TOL;
    let (r1, r2) = (ev[0].re, ev[1].re);
    if complex {
        return if r1.abs() < CLASSIFY_TOL && r2.abs() < CLASSIFY_TOL {
            Ok(Stability::Center)
        } else if r1 < -CLASSIFY_TOL && r2 < -CLASSIFY_TOL {
            Ok(Stability::Sink)
        } else if r1 > CLASSIFY_TOL && r2 > CLASSIFY_TOL {
            Ok(Stability::Source)
        } else {
            Err(marginal())
        };
    }
    if r1.abs() < CLASSIFY_TOL || r2.abs() < CLASSIFY_TOL {
        Err(marginal())
    } else if r1 * r2 < 0.0 {
        Ok(Stability::Saddle)
    } else if r1 < 0.0 {
        Ok(Stability::Sink)
    } else {
        Ok(Stability::Source)
    }
}

/// Linear stability of the fixed point `s`.
pub fn classify(s: [f64; 3], p: &ModelParams) -> Result<Classification> {
    let res = residual(s, p);
    if !(res < RESIDUAL_TOL) {
        return Err(Error::InvalidState(format!("not a fixed point: residual {res:e}")));
    }
    let eigenvalues = tangent_spectrum(s, p);
    let class = class_from_spectrum(eigenvalues)?;
    Ok(Classification {
        eigenvalues,
        class,
        index: class.index(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `g^2 + gamma^2 < v^2`: two centers.
    A,
    /// `|gamma| > |v|`: sink and source.
    B,
    /// Otherwise: sink, source (centers at gamma = 0), center and saddle.
    C,
}

impl Region {
    pub fn letter(self) -> char {
        match self {
            Region::A => 'a',
            Region::B => 'b',
            Region::C => 'c',
        }
    }

    pub fn expected_count(self) -> usize {
        match self {
            Region::A | Region::B => 2,
            Region::C => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub label: Region,
    /// `g^2 + gamma^2 - v^2`.
    pub self_trapping_distance: f64,
    /// `|gamma| - |v|`.
    pub decay_distance: f64,
}

impl RegionLabel {
    pub fn near_boundary(&self) -> bool {
        self.self_trapping_distance.abs() < BOUNDARY_TOL || self.decay_distance.abs() < BOUNDARY_TOL
    }
}

/// Region of the symmetric (epsilon = 0) parameter plane.
pub fn region(p: &ModelParams) -> Result<RegionLabel> {
    p.validate()?;
    if p.epsilon != 0.0 {
        return Err(Error::InvalidParams(
            "regions are only defined for the symmetric case epsilon = 0".into(),
        ));
    }
    let self_trapping_distance = p.g * p.g + p.gamma * p.gamma - p.v * p.v;
    let decay_distance = p.gamma.abs() - p.v.abs();
    let label = if self_trapping_distance < 0.0 {
        Region::A
    } else if decay_distance > 0.0 {
        Region::B
    } else {
        Region::C
    };
    Ok(RegionLabel {
        label,
        self_trapping_distance,
        decay_distance,
    })
}

/// Non-generic bifurcation point `g = 0, |gamma| = |v|`.
pub fn is_exceptional_point(p: &ModelParams) -> bool {
    p.epsilon == 0.0 && p.g.abs() < BOUNDARY_TOL && (p.gamma.abs() - p.v.abs()).abs() < BOUNDARY_TOL
}

fn require_coupling(p: &ModelParams) -> Result<()> {
    p.validate()?;
    if p.v == 0.0 {
        return Err(Error::InvalidParams(
            "fixed points require v != 0 (the flow degenerates for uncoupled sites)".into(),
        ));
    }
    Ok(())
}

fn push_unique(points: &mut Vec<[f64; 3]>, s: [f64; 3]) {
    let dup = points
        .iter()
        .any(|q| q.iter().zip(&s).all(|(a, b)| (a - b).abs() < 1e-9));
    if !dup {
        points.push(s);
    }
}

/// Closed-form fixed points for epsilon = 0.
pub fn closed_form_points(p: &ModelParams) -> Result<Vec<[f64; 3]>> {
    require_coupling(p)?;
    if p.epsilon != 0.0 {
        return Err(Error::InvalidParams("closed forms require epsilon = 0".into()));
    }
    let ModelParams { v, g, gamma, .. } = *p;
    let mut pts = Vec::with_capacity(4);
    if gamma.abs() <= v.abs() {
        let sy = gamma / (2.0 * v);
        let sx = (v * v - gamma * gamma).sqrt() / (2.0 * v.abs());
        push_unique(&mut pts, [sx, sy, 0.0]);
        push_unique(&mut pts, [-sx, sy, 0.0]);
    }
    let big = g * g + gamma * gamma;
    if big >= v * v {
        let sy = v * gamma / (2.0 * big);
        // (g / gamma) s_y, written so that gamma -> 0 is regular.
        let sx = g * v / (2.0 * big);
        let sz = ((big - v * v) / big).sqrt() / 2.0;
        push_unique(&mut pts, [sx, sy, sz]);
        push_unique(&mut pts, [sx, sy, -sz]);
    }
    Ok(pts)
}

/// Coefficients `[a0, a1, a2, a3, a4]` of the fixed-point quartic in `s_z`.
pub fn quartic_coefficients(p: &ModelParams) -> [f64; 5] {
    let ModelParams { epsilon: e, v, g, gamma } = *p;
    [
        -e * e / 4.0,
        -g * e,
        e * e + v * v - g * g - gamma * gamma,
        4.0 * g * e,
        4.0 * (g * g + gamma * gamma),
    ]
}

fn eval_poly(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &a in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

/// Real roots of `sum c_i x^i` via companion-matrix eigenvalues.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let companion = DMatrix::from_fn(deg, deg, |i, j| {
        if j == deg - 1 {
            -coeffs[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<Complex64> = companion.complex_eigenvalues().iter().copied().collect();
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    // Multiple roots split by O(sqrt(eps)); their cluster mean is accurate.
    let mut merged: Vec<Complex64> = Vec::with_capacity(deg);
    let mut i = 0;
    while i < roots.len() {
        let mut j = i + 1;
        let tol = 1e-6 * roots[i].norm().max(1.0);
        while j < roots.len() && (roots[j] - roots[i]).norm() < tol {
            j += 1;
        }
        let mean = roots[i..j].iter().sum::<Complex64>() / (j - i) as f64;
        merged.push(mean);
        i = j;
    }

    let poly = &coeffs[..=deg];
    merged
        .into_iter()
        .filter(|r| r.im.abs() < ROOT_IMAG_TOL.max(1e-12 * r.norm()))
        .map(|r| {
            let mut x = r.re;
            for _ in 0..8 {
                let (f, df) = eval_poly(poly, x);
                if df == 0.0 {
                    break;
                }
                let next = x - f / df;
                if eval_poly(poly, next).0.abs() < f.abs() {
                    x = next;
                } else {
                    break;
                }
            }
            x
        })
        .collect()
}

/// Gauss-Newton refinement of `f(s) = 0`, `|s|^2 = 1/4`.
fn polish(mut s: [f64; 3], p: &ModelParams) -> [f64; 3] {
    for _ in 0..6 {
        let before = residual(s, p);
        if before < 1e-15 {
            break;
        }
        let f = Vector3::from(spin_rhs(s, p));
        let j = jacobian(s, p);
        let sv = Vector3::from(s);
        let sphere = sv.norm_squared() - 0.25;
        let grad = 2.0 * sv;
        let jtj = j.transpose() * j + grad * grad.transpose();
        let jtf = j.transpose() * f + grad * sphere;
        let Some(delta) = jtj.lu().solve(&(-jtf)) else { break };
        let mut next = sv + delta;
        next *= 0.5 / next.norm();
        let cand = [next.x, next.y, next.z];
        if residual(cand, p) < before {
            s = cand;
        } else {
            break;
        }
    }
    s
}

/// Fixed points from the quartic in `s_z` (any epsilon).
pub fn quartic_points(p: &ModelParams) -> Result<Vec<[f64; 3]>> {
    require_coupling(p)?;
    let ModelParams { v, gamma, .. } = *p;
    let mut pts = Vec::with_capacity(4);
    for sz in real_roots(&quartic_coefficients(p)) {
        if sz.abs() > 0.5 + 1e-12 {
            continue;
        }
        let sz = sz.clamp(-0.5, 0.5);
        let sy = gamma * (1.0 - 4.0 * sz * sz) / (2.0 * v);
        let sx_sqr = 0.25 - sy * sy - sz * sz;
        if sx_sqr < -1e-9 {
            continue;
        }
        let sx_abs = sx_sqr.max(0.0).sqrt();
        for sx in [sx_abs, -sx_abs] {
            let s = polish([sx, sy, sz], p);
            if residual(s, p) < RESIDUAL_TOL {
                push_unique(&mut pts, s);
            }
        }
    }
    Ok(pts)
}

/// All fixed points of the Bloch flow with their stability.
///
/// For epsilon = 0 the closed forms are used; otherwise the quartic. Points
/// within [`BOUNDARY_TOL`] of a bifurcation boundary are marked
/// [`Stability::Marginal`].
pub fn fixed_points(p: &ModelParams) -> Result<Vec<FixedPointRecord>> {
    require_coupling(p)?;
    let symmetric = p.epsilon == 0.0;
    let (points, near_boundary) = if symmetric {
        (closed_form_points(p)?, region(p)?.near_boundary())
    } else {
        (quartic_points(p)?, false)
    };
    if near_boundary {
        log::warn!("parameters {p:?} lie within {BOUNDARY_TOL:e} of a bifurcation boundary");
    }
    let mut records = Vec::with_capacity(points.len());
    for s in points {
        let res = residual(s, p);
        if res >= RESIDUAL_TOL {
            log::debug!("discarding candidate {s:?} with residual {res:e}");
            continue;
        }
        let eigenvalues = tangent_spectrum(s, p);
        let numeric = class_from_spectrum(eigenvalues).unwrap_or(Stability::Marginal);
        let class = if near_boundary {
            Stability::Marginal
        } else if symmetric {
            // Centers are fixed by the region analysis; the spectrum only has
            // to be consistent with it.
            let center_expected = numeric != Stability::Saddle && (s[2] == 0.0 || p.gamma == 0.0);
            match (center_expected, numeric) {
                (true, Stability::Center) => Stability::Center,
                (false, Stability::Center) | (true, _) => Stability::Marginal,
                (false, other) => other,
            }
        } else {
            numeric
        };
        records.push(FixedPointRecord {
            s,
            eigenvalues,
            class,
            index: class.index(),
            residual: res,
        });
    }
    Ok(records)
}

/// Sum of Poincare indices.
pub fn index_sum_check(records: &[FixedPointRecord]) -> i32 {
    records.iter().map(|r| r.index).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) || steps < 2 {
            return Err(Error::InvalidParams(format!(
                "grid axis [{min}, {max}] with {steps} points is invalid"
            )));
        }
        Ok(Self { min, max, steps })
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.steps - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub g: f64,
    pub gamma: f64,
    pub region: Option<Region>,
    pub count: usize,
    pub centers: usize,
    pub saddles: usize,
    pub sinks: usize,
    pub sources: usize,
    pub marginal: usize,
    /// `None` when any fixed point is marginal.
    pub index_sum: Option<i32>,
    pub exceptional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCrossing {
    pub g: f64,
    pub gamma: f64,
    pub from_count: usize,
    pub to_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPolyline {
    pub from_count: usize,
    pub to_count: usize,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub v: f64,
    pub g_axis: GridAxis,
    pub gamma_axis: GridAxis,
    /// Row-major, gamma fastest.
    pub points: Vec<ScanPoint>,
    pub crossings: Vec<BoundaryCrossing>,
    pub polylines: Vec<BoundaryPolyline>,
    /// Locations of `g = 0, gamma = +-v` inside the scanned rectangle.
    pub exceptional_points: Vec<(f64, f64)>,
}

impl ScanResult {
    pub fn at(&self, ig: usize, igamma: usize) -> &ScanPoint {
        &self.points[ig * self.gamma_axis.steps + igamma]
    }
}

/// Fixed-point census of one symmetric parameter point.
pub fn scan_point(v: f64, g: f64, gamma: f64) -> Result<ScanPoint> {
    let p = ModelParams::symmetric(v, g, gamma)?;
    let records = fixed_points(&p)?;
    let count_of = |c: Stability| records.iter().filter(|r| r.class == c).count();
    let marginal = count_of(Stability::Marginal);
    Ok(ScanPoint {
        g,
        gamma,
        region: Some(region(&p)?.label),
        count: records.len(),
        centers: count_of(Stability::Center),
        saddles: count_of(Stability::Saddle),
        sinks: count_of(Stability::Sink),
        sources: count_of(Stability::Source),
        marginal,
        index_sum: (marginal == 0).then(|| index_sum_check(&records)),
        exceptional: is_exceptional_point(&p),
    })
}

/// Scans the symmetric (g, gamma) plane at fixed `v`.
pub fn bifurcation_scan(v: f64, g_axis: GridAxis, gamma_axis: GridAxis, exec: Execution) -> Result<ScanResult> {
    if gamma_axis.min < 0.0 {
        return Err(Error::InvalidParams("gamma axis must be non-negative".into()));
    }
    let cells: Vec<(f64, f64)> = (0..g_axis.steps)
        .flat_map(|i| (0..gamma_axis.steps).map(move |j| (i, j)))
        .map(|(i, j)| (g_axis.value(i), gamma_axis.value(j)))
        .collect();
    let points = exec
        .map(&cells, |&(g, gamma)| scan_point(v, g, gamma))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let idx = |i: usize, j: usize| i * gamma_axis.steps + j;
    let mut crossings = Vec::new();
    for i in 0..g_axis.steps {
        for j in 0..gamma_axis.steps {
            let a = &points[idx(i, j)];
            let mut neighbours = Vec::with_capacity(2);
            if i + 1 < g_axis.steps {
                neighbours.push(&points[idx(i + 1, j)]);
            }
            if j + 1 < gamma_axis.steps {
                neighbours.push(&points[idx(i, j + 1)]);
            }
            for b in neighbours {
                if a.count != b.count {
                    crossings.push(BoundaryCrossing {
                        g: 0.5 * (a.g + b.g),
                        gamma: 0.5 * (a.gamma + b.gamma),
                        from_count: a.count.min(b.count),
                        to_count: a.count.max(b.count),
                    });
                }
            }
        }
    }
    let link = 2.0 * g_axis.spacing().hypot(gamma_axis.spacing());
    let polylines = chain_polylines(&crossings, link);

    let exceptional_points = [v.abs(), -v.abs()]
        .into_iter()
        .filter(|&gm| {
            let inside = |x: f64, ax: &GridAxis| x >= ax.min - 0.5 * ax.spacing() && x <= ax.max + 0.5 * ax.spacing();
            inside(0.0, &g_axis) && inside(gm, &gamma_axis)
        })
        .map(|gm| (0.0, gm))
        .collect();

    Ok(ScanResult {
        v,
        g_axis,
        gamma_axis,
        points,
        crossings,
        polylines,
        exceptional_points,
    })
}

/// Greedy nearest-neighbour chaining of crossings of equal type.
fn chain_polylines(crossings: &[BoundaryCrossing], link: f64) -> Vec<BoundaryPolyline> {
    let mut kinds: Vec<(usize, usize)> = crossings.iter().map(|c| (c.from_count, c.to_count)).collect();
    kinds.sort_unstable();
    kinds.dedup();
    let mut out = Vec::new();
    for (from, to) in kinds {
        let mut pool: Vec<(f64, f64)> = crossings
            .iter()
            .filter(|c| c.from_count == from && c.to_count == to)
            .map(|c| (c.g, c.gamma))
            .collect();
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        while !pool.is_empty() {
            let mut line = vec![pool.remove(0)];
            loop {
                let tail = *line.last().expect("non-empty");
                let nearest = pool
                    .iter()
                    .enumerate()
                    .map(|(k, q)| (k, (q.0 - tail.0).hypot(q.1 - tail.1)))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match nearest {
                    Some((k, d)) if d <= link => line.push(pool.remove(k)),
                    _ => break,
                }
            }
            out.push(BoundaryPolyline {
                from_count: from,
                to_count: to,
                points: line,
            });
        }
    }
    out
}
