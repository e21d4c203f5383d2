//! Exact many-particle engine in the (N+1)-dimensional Fock basis
//! `|k, N-k>`, where `k` counts the bosons in the decaying site 1.
//!
//! States are stored as a unit direction vector plus the logarithm of the
//! survival probability `<psi|psi>`, so that strongly decayed states do not
//! underflow.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeSystem, Solver};
use crate::params::ModelParams;

/// Central-difference step used by [`heisenberg_residual`].
pub const FD_STEP: f64 = 1e-4;

/// Basis of the fixed-N sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    n_particles: usize,
}

impl FockBasis {
    pub fn new(n_particles: usize) -> Result<Self> {
        if n_particles < 1 {
            return Err(Error::InvalidParams("particle number N must be >= 1".into()));
        }
        Ok(Self { n_particles })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.n_particles + 1
    }

    /// Matrix element of `a1^dag a2` between `|k>` and `|k+1>`.
    #[inline]
    pub fn hop(&self, k: usize) -> f64 {
        (((k + 1) * (self.n_particles - k)) as f64).sqrt()
    }
}

/// Complex-symmetric tridiagonal many-particle Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    basis: FockBasis,
    diag: Vec<Complex64>,
    off: Vec<f64>,
}

impl Hamiltonian {
    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn diagonal(&self) -> &[Complex64] {
        &self.diag
    }

    /// Entries `H[k][k+1] = H[k+1][k]`.
    pub fn off_diagonal(&self) -> &[f64] {
        &self.off
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => Complex64::new(self.off[i.min(j)], 0.0),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.get(i, j))
    }

    /// `out = H x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim();
        for k in 0..d {
            let mut acc = self.diag[k] * x[k];
            if k > 0 {
                acc += x[k - 1] * self.off[k - 1];
            }
            if k + 1 < d {
                acc += x[k + 1] * self.off[k];
            }
            out[k] = acc;
        }
    }

    /// Normalized expectation `<psi|H|psi> / <psi|psi>`.
    pub fn expectation(&self, state: &ManyParticleState) -> Complex64 {
        let mut hx = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.apply(&state.direction, &mut hx);
        inner(&state.direction, &hx) / norm_sqr(&state.direction)
    }
}

/// Assembles the N-particle Hamiltonian with microscopic interaction `g / N`.
pub fn build_hamiltonian(params: &ModelParams, n_particles: usize) -> Result<Hamiltonian> {
    params.validate()?;
    let basis = FockBasis::new(n_particles)?;
    let n = n_particles as f64;
    let c = params.microscopic_c(n_particles);
    let diag = (0..basis.dim())
        .map(|k| {
            let k = k as f64;
            let imbalance = 2.0 * k - n;
            Complex64::new(
                params.epsilon * k - params.epsilon * (n - k) + 0.5 * c * imbalance * imbalance,
                -2.0 * params.gamma * k,
            )
        })
        .collect();
    let off = (0..n_particles).map(|k| params.v * basis.hop(k)).collect();
    Ok(Hamiltonian { basis, diag, off })
}

/// Many-particle state `psi = exp(log_survival / 2) * direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManyParticleState {
    pub direction: Vec<Complex64>,
    pub log_survival: f64,
}

impl ManyParticleState {
    /// Builds a state from unnormalized amplitudes.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState("state needs at least two Fock amplitudes".into()));
        }
        let nrm = norm_sqr(&amplitudes);
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::InvalidState(format!("amplitude norm {nrm} is not positive and finite")));
        }
        let s = nrm.sqrt().recip();
        Ok(Self {
            direction: amplitudes.into_iter().map(|a| a * s).collect(),
            log_survival: nrm.ln(),
        })
    }

    /// Fock state `|k, N-k>` with unit norm.
    pub fn fock(n_particles: usize, k: usize) -> Result<Self> {
        let basis = FockBasis::new(n_particles)?;
        if k > n_particles {
            return Err(Error::InvalidState(format!("k = {k} exceeds N = {n_particles}")));
        }
        let mut direction = vec![Complex64::new(0.0, 0.0); basis.dim()];
        direction[k] = Complex64::new(1.0, 0.0);
        Ok(Self {
            direction,
            log_survival: 0.0,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.direction.len() - 1
    }

    pub fn survival(&self) -> f64 {
        self.log_survival.exp()
    }

    /// Unnormalized amplitudes; underflow to zero for strongly decayed states.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let s = (0.5 * self.log_survival).exp();
        self.direction.iter().map(|d| d * s).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.direction.len() < 2 {
            return Err(Error::InvalidState("state needs at least two Fock amplitudes".into()));
        }
        let nrm = norm_sqr(&self.direction);
        if (nrm - 1.0).abs() > 1e-8 || !self.log_survival.is_finite() {
            return Err(Error::InvalidState(format!(
                "direction norm^2 = {nrm}, log survival = {}",
                self.log_survival
            )));
        }
        Ok(())
    }

    pub fn observables(&self, t: f64) -> ObservableRecord {
        observables(self, t)
    }
}

/// Per-particle expectation values and survival of a many-particle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub survival: f64,
    pub pop1: f64,
    pub pop2: f64,
}

/// SU(2) coherent state `(x1 a1^dag + x2 a2^dag)^N |0> / sqrt(N!)`.
pub fn coherent_state(x1: Complex64, x2: Complex64, n_particles: usize) -> Result<ManyParticleState> {
    let basis = FockBasis::new(n_particles)?;
    let n = x1.norm_sqr() + x2.norm_sqr();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidState("coherent-state spinor must be non-zero and finite".into()));
    }
    let scale = n.sqrt().recip();
    let (u1, u2) = (x1 * scale, x2 * scale);
    let (r1, r2) = (u1.norm(), u2.norm());
    let (p1, p2) = (u1.arg(), u2.arg());

    // ln C(N, k), built incrementally.
    let mut ln_binom = 0.0;
    let mut direction = Vec::with_capacity(basis.dim());
    for k in 0..=n_particles {
        if k > 0 {
            ln_binom += ((n_particles - k + 1) as f64).ln() - (k as f64).ln();
        }
        let m = n_particles - k;
        let amp = if (k > 0 && r1 == 0.0) || (m > 0 && r2 == 0.0) {
            0.0
        } else {
            let mut ln_amp = 0.5 * ln_binom;
            if k > 0 {
                ln_amp += k as f64 * r1.ln();
            }
            if m > 0 {
                ln_amp += m as f64 * r2.ln();
            }
            ln_amp.exp()
        };
        direction.push(Complex64::from_polar(amp, k as f64 * p1 + m as f64 * p2));
    }
    let renorm = norm_sqr(&direction).sqrt().recip();
    direction.iter_mut().for_each(|d| *d *= renorm);
    Ok(ManyParticleState {
        direction,
        log_survival: n_particles as f64 * n.ln(),
    })
}

/// Schroedinger flow `i d psi/dt = H psi` on the packed layout
/// `[re d_0, im d_0, ..., re d_N, im d_N, log_survival]`.
struct FockFlow<'a> {
    h: &'a Hamiltonian,
}

impl OdeSystem for FockFlow<'_> {
    fn dim(&self) -> usize {
        2 * self.h.dim() + 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.h.dim();
        let x = |k: usize| Complex64::new(y[2 * k], y[2 * k + 1]);
        for k in 0..d {
            let mut acc = self.h.diag[k] * x(k);
            if k > 0 {
                acc += x(k - 1) * self.h.off[k - 1];
            }
            if k + 1 < d {
                acc += x(k + 1) * self.h.off[k];
            }
            // -i * acc
            dy[2 * k] = acc.im;
            dy[2 * k + 1] = -acc.re;
        }
        dy[2 * d] = 0.0;
    }

    fn project(&self, y: &mut [f64]) -> bool {
        let d = self.h.dim();
        let nrm: f64 = y[..2 * d].iter().map(|a| a * a).sum();
        let s = nrm.sqrt().recip();
        y[..2 * d].iter_mut().for_each(|a| *a *= s);
        y[2 * d] += nrm.ln();
        true
    }
}

fn pack(state: &ManyParticleState) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * state.direction.len() + 1);
    for d in &state.direction {
        y.push(d.re);
        y.push(d.im);
    }
    y.push(state.log_survival);
    y
}

fn unpack(y: &[f64]) -> ManyParticleState {
    let d = (y.len() - 1) / 2;
    ManyParticleState {
        direction: (0..d).map(|k| Complex64::new(y[2 * k], y[2 * k + 1])).collect(),
        log_survival: y[2 * d],
    }
}

fn check_shapes(state: &ManyParticleState, h: &Hamiltonian) -> Result<()> {
    state.validate()?;
    if state.direction.len() != h.dim() {
        return Err(Error::InvalidState(format!(
            "state dimension {} does not match Hamiltonian dimension {}",
            state.direction.len(),
            h.dim()
        )));
    }
    Ok(())
}

/// Propagates `state` from `t0` to `t1 >= t0` under the (non-unitary) flow of `h`.
pub fn propagate(
    state: &ManyParticleState,
    h: &Hamiltonian,
    t0: f64,
    t1: f64,
    solver: &Solver,
) -> Result<ManyParticleState> {
    if t1 < t0 {
        return Err(Error::InvalidParams(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    Ok(propagate_sampled(state, h, t0, &[t1], solver)?.pop().expect("one sample"))
}

/// Propagates and returns the state at every sample time (monotone, on one
/// side of `t0`; backward sampling is used by the finite-difference checks).
pub fn propagate_sampled(
    state: &ManyParticleState,
    h: &Hamiltonian,
    t0: f64,
    times: &[f64],
    solver: &Solver,
) -> Result<Vec<ManyParticleState>> {
    check_shapes(state, h)?;
    let flow = FockFlow { h };
    let out = ode::integrate(&flow, t0, &pack(state), times, solver)?;
    Ok(out.iter().map(|y| unpack(y)).collect())
}

/// Per-particle observables of a state.
pub fn observables(state: &ManyParticleState, t: f64) -> ObservableRecord {
    let basis = FockBasis {
        n_particles: state.n_particles(),
    };
    let n = basis.n_particles as f64;
    let d = &state.direction;
    let nrm = norm_sqr(d);
    let mut lz = 0.0;
    let mut lplus = Complex64::new(0.0, 0.0);
    for k in 0..basis.dim() {
        lz += (k as f64 - 0.5 * n) * d[k].norm_sqr();
        if k + 1 < basis.dim() {
            lplus += d[k + 1].conj() * d[k] * basis.hop(k);
        }
    }
    let sz = lz / (n * nrm);
    let survival = state.survival();
    ObservableRecord {
        t,
        sx: lplus.re / (n * nrm),
        sy: lplus.im / (n * nrm),
        sz,
        survival,
        pop1: (0.5 + sz) * survival,
        pop2: (0.5 - sz) * survival,
    }
}

/// Hermitian generators acting on the fixed-N sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    Lx,
    Ly,
    Lz,
    N,
}

impl Observable {
    pub const ANGULAR: [Observable; 3] = [Observable::Lx, Observable::Ly, Observable::Lz];

    /// `out = O x` in the basis of `x`'s sector.
    pub fn apply(self, x: &[Complex64]) -> Vec<Complex64> {
        let basis = FockBasis {
            n_particles: x.len() - 1,
        };
        let n = basis.n_particles as f64;
        let d = basis.dim();
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Observable::Lz => (0..d).map(|k| x[k] * (k as f64 - 0.5 * n)).collect(),
            Observable::N => x.iter().map(|a| a * n).collect(),
            Observable::Lx | Observable::Ly => {
                // (L+ x)_k = hop(k-1) x_{k-1},  (L- x)_k = hop(k) x_{k+1}
                let raise = |k: usize| if k > 0 { x[k - 1] * basis.hop(k - 1) } else { zero };
                let lower = |k: usize| if k + 1 < d { x[k + 1] * basis.hop(k) } else { zero };
                (0..d)
                    .map(|k| match self {
                        Observable::Lx => 0.5 * (raise(k) + lower(k)),
                        _ => Complex64::new(0.0, -0.5) * (raise(k) - lower(k)),
                    })
                    .collect()
            }
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Lx" | "lx" | "L_x" => Ok(Observable::Lx),
            "Ly" | "ly" | "L_y" => Ok(Observable::Ly),
            "Lz" | "lz" | "L_z" => Ok(Observable::Lz),
            "N" | "n" => Ok(Observable::N),
            other => Err(Error::UnsupportedObservable(other.to_string())),
        }
    }
}

/// Normalized expectation `<A>`.
pub fn expectation(state: &ManyParticleState, a: Observable) -> f64 {
    let d = &state.direction;
    inner(d, &a.apply(d)).re / norm_sqr(d)
}

/// `<[A, B]_+>` for hermitian `A`, `B`.
pub fn anticommutator(state: &ManyParticleState, a: Observable, b: Observable) -> f64 {
    let d = &state.direction;
    2.0 * inner(&a.apply(d), &b.apply(d)).re / norm_sqr(d)
}

/// Covariance `<[A, B]_+ / 2> - <A><B>`.
pub fn covariance(state: &ManyParticleState, a: Observable, b: Observable) -> f64 {
    0.5 * anticommutator(state, a, b) - expectation(state, a) * expectation(state, b)
}

/// String-keyed variant of [`covariance`].
pub fn covariance_by_name(state: &ManyParticleState, a: &str, b: &str) -> Result<f64> {
    Ok(covariance(state, a.parse()?, b.parse()?))
}

/// Exact rate `d log<psi|psi> / dt = -2 gamma (2 <Lz> + N)`.
pub fn log_survival_rate(state: &ManyParticleState, params: &ModelParams) -> f64 {
    let n = state.n_particles() as f64;
    -2.0 * params.gamma * (2.0 * expectation(state, Observable::Lz) + n)
}

/// Right-hand sides of the exact evolution equations for `<L_x>, <L_y>, <L_z>`
/// evaluated from expectations and covariances.
pub fn heisenberg_rhs(state: &ManyParticleState, params: &ModelParams) -> [f64; 3] {
    use Observable::*;
    let c = params.microscopic_c(state.n_particles());
    let (eps, v, gam) = (params.epsilon, params.v, params.gamma);
    let ex = |a| expectation(state, a);
    let ac = |a, b| anticommutator(state, a, b);
    let cov = |a, b| covariance(state, a, b);
    [
        -2.0 * eps * ex(Ly) - 2.0 * c * ac(Ly, Lz) - 2.0 * gam * (2.0 * cov(Lx, Lz) + cov(Lx, N)),
        2.0 * eps * ex(Lx) + 2.0 * c * ac(Lx, Lz) - 2.0 * v * ex(Lz)
            - 2.0 * gam * (2.0 * cov(Ly, Lz) + cov(Ly, N)),
        2.0 * v * ex(Ly) - 2.0 * gam * (2.0 * cov(Lz, Lz) + cov(Lz, N)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergCheck {
    /// Evolution-equation right-hand sides.
    pub rhs: [f64; 3],
    /// Central finite-difference estimate of `d<L_i>/dt`.
    pub finite_difference: [f64; 3],
    pub residual: [f64; 3],
}

impl HeisenbergCheck {
    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Compares the evolution-equation right-hand sides against a central
/// difference of `<L_i>` obtained by propagating `state` by `+-step`.
pub fn heisenberg_residual(
    state: &ManyParticleState,
    params: &ModelParams,
    step: f64,
    solver: &Solver,
) -> Result<HeisenbergCheck> {
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("finite-difference step {step} must be > 0")));
    }
    let h = build_hamiltonian(params, state.n_particles())?;
    let fwd = propagate_sampled(state, &h, 0.0, &[step], solver)?;
    let bwd = propagate_sampled(state, &h, 0.0, &[-step], solver)?;
    let rhs = heisenberg_rhs(state, params);
    let mut finite_difference = [0.0; 3];
    let mut residual = [0.0; 3];
    for (i, op) in Observable::ANGULAR.into_iter().enumerate() {
        finite_difference[i] = (expectation(&fwd[0], op) - expectation(&bwd[0], op)) / (2.0 * step);
        residual[i] = rhs[i] - finite_difference[i];
    }
    Ok(HeisenbergCheck {
        rhs,
        finite_difference,
        residual,
    })
}

/// Largest deviation from the coherent-state factorization
/// `<[L_i, L_j]_+> = 2 (1 - 1/N) <L_i><L_j> + delta_ij N / 2`.
pub fn factorization_check(x1: Complex64, x2: Complex64, n_particles: usize) -> Result<f64> {
    let state = coherent_state(x1, x2, n_particles)?;
    let n = n_particles as f64;
    let d = &state.direction;
    let applied: Vec<Vec<Complex64>> = Observable::ANGULAR.iter().map(|o| o.apply(d)).collect();
    let means: Vec<f64> = applied.iter().map(|ad| inner(d, ad).re).collect();
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let lhs = 2.0 * inner(&applied[i], &applied[j]).re;
            let delta = if i == j { 0.5 * n } else { 0.0 };
            let rhs = 2.0 * (1.0 - 1.0 / n) * means[i] * means[j] + delta;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

#[inline]
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}
