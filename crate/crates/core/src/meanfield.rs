//! Mean-field dynamics: the nonlinear Bloch equations for the per-particle
//! spin `(s_x, s_y, s_z)` with the decaying norm `n`, and the equivalent
//! two-component non-hermitian discrete GPE.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeSystem, Solver};
use crate::params::ModelParams;

/// Accepted distance of `|s|^2` from 1/4 for initial conditions.
pub const SPHERE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    /// Per-particle norm; the N-particle survival is `n^N`.
    pub n: f64,
}

impl BlochState {
    pub fn new(sx: f64, sy: f64, sz: f64, n: f64) -> Self {
        Self { sx, sy, sz, n }
    }

    /// Point on the sphere from polar angle `theta` (measured from the north
    /// pole, `s_z = 1/2`) and azimuth `phi`, with unit norm.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self {
            sx: 0.5 * theta.sin() * phi.cos(),
            sy: 0.5 * theta.sin() * phi.sin(),
            sz: 0.5 * theta.cos(),
            n: 1.0,
        }
    }

    pub fn north_pole() -> Self {
        Self::new(0.0, 0.0, 0.5, 1.0)
    }

    pub fn south_pole() -> Self {
        Self::new(0.0, 0.0, -0.5, 1.0)
    }

    pub fn spin(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn radius_sqr(&self) -> f64 {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    pub fn sphere_defect(&self) -> f64 {
        (self.radius_sqr() - 0.25).abs()
    }

    /// N-particle survival probability `n^N`.
    pub fn survival(&self, n_particles: usize) -> f64 {
        (n_particles as f64 * self.n.ln()).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.sx, self.sy, self.sz, self.n].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidState("Bloch state has non-finite entries".into()));
        }
        if self.sphere_defect() > SPHERE_TOL {
            return Err(Error::InvalidState(format!(
                "Bloch vector off the sphere: |s|^2 = {} (expected 0.25)",
                self.radius_sqr()
            )));
        }
        if self.n <= 0.0 {
            return Err(Error::InvalidState(format!("norm n = {} must be positive", self.n)));
        }
        Ok(())
    }
}

/// Right-hand side `(ds_x, ds_y, ds_z, dn)` of the nonlinear Bloch flow.
pub fn bloch_rhs(s: &BlochState, p: &ModelParams) -> [f64; 4] {
    let [ds_x, ds_y, ds_z] = spin_rhs(s.spin(), p);
    [ds_x, ds_y, ds_z, -2.0 * p.gamma * (2.0 * s.sz + 1.0) * s.n]
}

/// Spin part of [`bloch_rhs`].
pub fn spin_rhs([sx, sy, sz]: [f64; 3], p: &ModelParams) -> [f64; 3] {
    let ModelParams { epsilon, v, g, gamma } = *p;
    [
        -2.0 * epsilon * sy - 4.0 * g * sz * sy + 4.0 * gamma * sz * sx,
        2.0 * epsilon * sx + 4.0 * g * sz * sx - 2.0 * v * sz + 4.0 * gamma * sz * sy,
        2.0 * v * sy - gamma * (1.0 - 4.0 * sz * sz),
    ]
}

/// Packed as `[s_x, s_y, s_z, ln n]`; the spin is projected back onto the
/// radius-1/2 sphere after every step.
struct BlochFlow<'a> {
    p: &'a ModelParams,
}

impl OdeSystem for BlochFlow<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = spin_rhs([y[0], y[1], y[2]], self.p);
        dy[..3].copy_from_slice(&d);
        dy[3] = -2.0 * self.p.gamma * (2.0 * y[2] + 1.0);
    }

    fn project(&self, y: &mut [f64]) -> bool {
        let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let s = 0.5 / r;
        y[..3].iter_mut().for_each(|a| *a *= s);
        true
    }
}

/// Integrates the Bloch flow from `(t0, s0)` and samples at `times`.
pub fn integrate_bloch(
    s0: &BlochState,
    p: &ModelParams,
    t0: f64,
    times: &[f64],
    solver: &Solver,
) -> Result<Vec<(f64, BlochState)>> {
    s0.validate()?;
    p.validate()?;
    let y0 = [s0.sx, s0.sy, s0.sz, s0.n.ln()];
    let out = ode::integrate(&BlochFlow { p }, t0, &y0, times, solver)?;
    Ok(times
        .iter()
        .zip(out)
        .map(|(&t, y)| (t, BlochState::new(y[0], y[1], y[2], y[3].exp())))
        .collect())
}

/// Choice of the population imbalance `kappa` entering the GPE nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaConvention {
    /// `kappa = (|psi1|^2 - |psi2|^2) / n`, consistent with the Bloch flow.
    #[default]
    Normalized,
    /// `kappa = |psi1|^2 - |psi2|^2`; gives different dynamics once `n` decays.
    Unnormalized,
}

impl std::str::FromStr for KappaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normalized" => Ok(Self::Normalized),
            "unnormalized" => Ok(Self::Unnormalized),
            other => Err(Error::InvalidParams(format!(
                "unknown kappa convention `{other}` (expected normalized|unnormalized)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinorState {
    pub psi1: Complex64,
    pub psi2: Complex64,
    /// Accumulated global phase, starts at zero.
    pub beta: f64,
}

impl SpinorState {
    pub fn new(psi1: Complex64, psi2: Complex64) -> Self {
        Self { psi1, psi2, beta: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.psi1.norm_sqr() + self.psi2.norm_sqr()
    }

    pub fn kappa(&self, convention: KappaConvention) -> f64 {
        let diff = self.psi1.norm_sqr() - self.psi2.norm_sqr();
        match convention {
            KappaConvention::Normalized => diff / self.norm(),
            KappaConvention::Unnormalized => diff,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) || !self.beta.is_finite() {
            return Err(Error::InvalidState("spinor must be non-zero and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpeDerivative {
    pub dpsi1: Complex64,
    pub dpsi2: Complex64,
    pub dbeta: f64,
}

/// Time derivatives of the discrete non-hermitian GPE.
pub fn gpe_rhs(psi: &SpinorState, p: &ModelParams, convention: KappaConvention) -> Result<GpeDerivative> {
    psi.validate()?;
    Ok(gpe_rhs_unchecked(psi.psi1, psi.psi2, psi.kappa(convention), p))
}

fn gpe_rhs_unchecked(psi1: Complex64, psi2: Complex64, kappa: f64, p: &ModelParams) -> GpeDerivative {
    let minus_i = Complex64::new(0.0, -1.0);
    let e1 = Complex64::new(p.epsilon + p.g * kappa, -2.0 * p.gamma);
    let e2 = -(p.epsilon + p.g * kappa);
    GpeDerivative {
        dpsi1: minus_i * (e1 * psi1 + p.v * psi2),
        dpsi2: minus_i * (p.v * psi1 + e2 * psi2),
        dbeta: -p.g * kappa * kappa,
    }
}

/// Packed as `[re u1, im u1, re u2, im u2, beta, ln n]` with `|u| = 1` and
/// `psi = exp(ln n / 2) u`.
struct GpeFlow<'a> {
    p: &'a ModelParams,
    convention: KappaConvention,
}

impl OdeSystem for GpeFlow<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let u1 = Complex64::new(y[0], y[1]);
        let u2 = Complex64::new(y[2], y[3]);
        let un = u1.norm_sqr() + u2.norm_sqr();
        let diff = u1.norm_sqr() - u2.norm_sqr();
        let kappa = match self.convention {
            KappaConvention::Normalized => diff / un,
            KappaConvention::Unnormalized => diff * y[5].exp(),
        };
        let d = gpe_rhs_unchecked(u1, u2, kappa, self.p);
        dy[0] = d.dpsi1.re;
        dy[1] = d.dpsi1.im;
        dy[2] = d.dpsi2.re;
        dy[3] = d.dpsi2.im;
        dy[4] = d.dbeta;
        dy[5] = 0.0;
    }

    fn project(&self, y: &mut [f64]) -> bool {
        let nrm: f64 = y[..4].iter().map(|a| a * a).sum();
        let s = nrm.sqrt().recip();
        y[..4].iter_mut().for_each(|a| *a *= s);
        y[5] += nrm.ln();
        true
    }
}

/// Integrates the spinor-form GPE and samples at `times`.
pub fn integrate_gpe(
    psi0: &SpinorState,
    p: &ModelParams,
    convention: KappaConvention,
    t0: f64,
    times: &[f64],
    solver: &Solver,
) -> Result<Vec<(f64, SpinorState)>> {
    psi0.validate()?;
    p.validate()?;
    let n0 = psi0.norm();
    let s = n0.sqrt().recip();
    let y0 = [
        psi0.psi1.re * s,
        psi0.psi1.im * s,
        psi0.psi2.re * s,
        psi0.psi2.im * s,
        psi0.beta,
        n0.ln(),
    ];
    let out = ode::integrate(&GpeFlow { p, convention }, t0, &y0, times, solver)?;
    Ok(times
        .iter()
        .zip(out)
        .map(|(&t, y)| {
            let a = (0.5 * y[5]).exp();
            let psi = SpinorState {
                psi1: Complex64::new(y[0], y[1]) * a,
                psi2: Complex64::new(y[2], y[3]) * a,
                beta: y[4],
            };
            (t, psi)
        })
        .collect())
}

/// Spin expectation values per particle of the coherent state with
/// parameters `(psi1, psi2)`.
pub fn bloch_from_spinor(psi: &SpinorState) -> Result<BlochState> {
    psi.validate()?;
    let n = psi.norm();
    let cross = psi.psi1.conj() * psi.psi2;
    Ok(BlochState {
        sx: cross.re / n,
        sy: cross.im / n,
        sz: (psi.psi1.norm_sqr() - psi.psi2.norm_sqr()) / (2.0 * n),
        n,
    })
}

/// Inverse of [`bloch_from_spinor`] in the gauge with `psi2` real and
/// non-negative. At the north pole, where `psi2 = 0`, `psi1` is real instead.
pub fn spinor_from_bloch(s: &BlochState) -> Result<SpinorState> {
    s.validate()?;
    let a1 = (s.n * (0.5 + s.sz).max(0.0)).sqrt();
    let a2 = (s.n * (0.5 - s.sz).max(0.0)).sqrt();
    let phi = if s.sx == 0.0 && s.sy == 0.0 { 0.0 } else { s.sy.atan2(s.sx) };
    Ok(SpinorState {
        psi1: Complex64::from_polar(a1, -phi),
        psi2: Complex64::new(a2, 0.0),
        beta: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn params(epsilon: f64, v: f64, g: f64, gamma: f64) -> ModelParams {
        ModelParams { epsilon, v, g, gamma }
    }

    #[test]
    fn rhs_at_equator_point() {
        let s = BlochState::new(0.5, 0.0, 0.0, 0.8);
        for (g, gamma, v) in [(0.0, 0.3, 1.0), (2.0, 0.7, -1.5)] {
            let d = bloch_rhs(&s, &params(0.0, v, g, gamma));
            assert_eq!(d[0], 0.0);
            assert_eq!(d[1], 0.0);
            assert!((d[2] + gamma).abs() < 1e-15);
            assert!((d[3] + 2.0 * gamma * 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn rhs_linear_rabi_limit() {
        let v = 1.3;
        let s = BlochState::new(0.1, -0.2, 0.3, 1.0);
        let d = bloch_rhs(&s, &params(0.0, v, 0.0, 0.0));
        assert_eq!(d, [0.0, -2.0 * v * 0.3, 2.0 * v * -0.2, 0.0]);
    }

    #[test]
    fn rhs_vanishes_at_sink() {
        // g = 2, gamma = 0.5, v = 1: s_y = v gamma / (2 (g^2 + gamma^2)), s_x = (g / gamma) s_y.
        let gg: f64 = 4.25;
        let sy = 0.5 / (2.0 * gg);
        let sz = -((gg - 1.0f64) / gg).sqrt() / 2.0;
        let d = spin_rhs([4.0 * sy, sy, sz], &params(0.0, 1.0, 2.0, 0.5));
        assert!(d.iter().all(|x| x.abs() < 1e-12), "{d:?}");
        assert!((4.0 * sy - 0.235294).abs() < 1e-6);
        assert!((sy - 0.0588235).abs() < 1e-7);
        assert!((sz + 0.437238).abs() < 1e-6);
    }

    #[test]
    fn rabi_oscillation_closed_form() {
        let v = 0.7;
        let p = params(0.0, v, 0.0, 0.0);
        let tol = 1e-10;
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let traj = integrate_bloch(&BlochState::north_pole(), &p, 0.0, &times, &Solver::with_tol(tol)).unwrap();
        for (t, s) in traj {
            assert!((s.sz - 0.5 * (2.0 * v * t).cos()).abs() < 10.0 * tol, "t = {t}");
            assert_eq!(s.n, 1.0);
        }
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = params(0.0, 1.0, 0.0, 0.6);
        let s0 = BlochState::new(0.4, 0.3, 0.0, 1.0);
        let traj = integrate_bloch(&s0, &p, 0.0, &[5.0, 10.0], &Solver::default()).unwrap();
        for (_, s) in traj {
            assert!((s.sx - 0.4).abs() < 1e-9 && (s.sy - 0.3).abs() < 1e-9 && s.sz.abs() < 1e-9);
        }
    }

    #[test]
    fn off_sphere_initial_state_is_rejected() {
        let r = integrate_bloch(&BlochState::new(0.5, 0.1, 0.0, 1.0), &params(0.0, 1.0, 0.0, 0.0), 0.0, &[1.0], &Solver::default());
        assert!(matches!(r, Err(Error::InvalidState(_))));
    }

    #[test]
    fn gpe_rhs_examples() {
        let p = params(0.3, 1.1, 2.0, 0.4);
        let psi = SpinorState::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let d = gpe_rhs(&psi, &p, KappaConvention::Normalized).unwrap();
        // i dpsi1 = (eps + g - 2 i gamma), i dpsi2 = v
        let i = Complex64::new(0.0, 1.0);
        assert!((i * d.dpsi1 - Complex64::new(0.3 + 2.0, -0.8)).norm() < 1e-15);
        assert!((i * d.dpsi2 - Complex64::new(1.1, 0.0)).norm() < 1e-15);
        assert!((d.dbeta + 2.0).abs() < 1e-15);

        let balanced = SpinorState::new(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0));
        let with_g = gpe_rhs(&balanced, &p, KappaConvention::Normalized).unwrap();
        let without = gpe_rhs(&balanced, &p.with_g(0.0), KappaConvention::Normalized).unwrap();
        assert!((with_g.dpsi1 - without.dpsi1).norm() < 1e-15);
        assert!((with_g.dpsi2 - without.dpsi2).norm() < 1e-15);

        assert!(gpe_rhs(&SpinorState::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)), &p, KappaConvention::Normalized).is_err());
    }

    #[test]
    fn gpe_hermitian_linear_limit_conserves_norm() {
        let p = params(0.4, 1.0, 0.0, 0.0);
        let psi0 = SpinorState::new(Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.5));
        let traj = integrate_gpe(&psi0, &p, KappaConvention::Normalized, 0.0, &[1.0, 7.0], &Solver::with_tol(1e-12)).unwrap();
        for (_, psi) in traj {
            assert!((psi.norm() - psi0.norm()).abs() < 1e-10);
            assert!(psi.beta.is_finite());
        }
    }

    #[test]
    fn conversion_examples() {
        let pole = bloch_from_spinor(&SpinorState::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))).unwrap();
        assert_eq!(pole.spin(), [0.0, 0.0, 0.5]);
        let eq = bloch_from_spinor(&SpinorState::new(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0))).unwrap();
        assert!((eq.sx - 0.5).abs() < 1e-15 && eq.sy.abs() < 1e-15 && eq.sz.abs() < 1e-15);
        let north = spinor_from_bloch(&BlochState::north_pole()).unwrap();
        assert_eq!(north.psi1, Complex64::new(1.0, 0.0));
        assert_eq!(north.psi2, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn reversal_symmetry() {
        // s(t) solves the flow at gamma  =>  (s_x, -s_y, s_z)(-t) solves it at -gamma.
        let p = params(0.7, -1.2, 1.9, 0.45);
        let q = ModelParams { gamma: -p.gamma, ..p };
        for s in [[0.1, 0.2, (0.25f64 - 0.05).sqrt()], [-0.3, 0.35, -0.1]] {
            let f = spin_rhs(s, &p);
            let h = spin_rhs([s[0], -s[1], s[2]], &q);
            assert!((h[0] + f[0]).abs() < 1e-15);
            assert!((h[1] - f[1]).abs() < 1e-15);
            assert!((h[2] + f[2]).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn spinor_round_trip(
            r1 in 0.0f64..2.0, p1 in -3.1f64..3.1, r2 in 0.01f64..2.0, p2 in -3.1f64..3.1,
        ) {
            let psi = SpinorState::new(Complex64::from_polar(r1, p1), Complex64::from_polar(r2, p2));
            let s = bloch_from_spinor(&psi).unwrap();
            prop_assert!(s.sphere_defect() < 1e-14);
            prop_assert!((2.0 * s.sz - psi.kappa(KappaConvention::Normalized)).abs() < 1e-14);
            let back = spinor_from_bloch(&s).unwrap();
            prop_assert!(back.psi2.im == 0.0 && back.psi2.re >= 0.0);
            let overlap = psi.psi1.conj() * back.psi1 + psi.psi2.conj() * back.psi2;
            prop_assert!((overlap.norm() - psi.norm()).abs() < 1e-12 * psi.norm().max(1.0));
        }

        #[test]
        fn sphere_is_invariant_of_the_vector_field(
            theta in 0.0..std::f64::consts::PI, phi in -std::f64::consts::PI..std::f64::consts::PI,
            eps in -3.0f64..3.0, v in -3.0f64..3.0, g in -3.0f64..3.0, gamma in 0.0f64..3.0,
        ) {
            let s = BlochState::from_angles(theta, phi).spin();
            let f = spin_rhs(s, &params(eps, v, g, gamma));
            let radial: f64 = s.iter().zip(f).map(|(a, b)| a * b).sum();
            prop_assert!(radial.abs() < 1e-13);
        }
    }
}
