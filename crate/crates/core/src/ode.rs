//! Explicit Runge-Kutta drivers for the real first-order systems used by the
//! many-particle and mean-field engines.
//!
//! Two methods are available: the embedded Dormand-Prince 5(4) pair with
//! step-size control, and classical fixed-step RK4 for runs that have to be
//! reproducible independently of error-control heuristics. Both emit the
//! state exactly at caller-specified sample times; internal steps never leak
//! into the output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real ODE system `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Hook applied to the state after every accepted step. Returns `true`
    /// if the state was modified.
    fn project(&self, _y: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Adaptive,
    FixedStep { dt: f64 },
}

/// Integrator settings shared by every engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solver {
    pub rtol: f64,
    pub atol: f64,
    pub method: Method,
    pub max_steps: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            method: Method::Adaptive,
            max_steps: 50_000_000,
        }
    }
}

impl Solver {
    /// Adaptive solver with `rtol = tol` and `atol = tol * 1e-3`.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol * 1e-3,
            ..Self::default()
        }
    }

    pub fn fixed_step(dt: f64) -> Self {
        Self {
            method: Method::FixedStep { dt },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(Error::InvalidParams(format!("rtol = {} must be > 0", self.rtol)));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(Error::InvalidParams(format!("atol = {} must be > 0", self.atol)));
        }
        if let Method::FixedStep { dt } = self.method {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParams(format!("fixed step dt = {dt} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Integrates `sys` from `(t0, y0)` and returns the state at every entry of
/// `times`. The sample times must be monotone and lie on one side of `t0`
/// (backward integration is allowed).
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    times: &[f64],
    solver: &Solver,
) -> Result<Vec<Vec<f64>>> {
    solver.validate()?;
    if y0.len() != sys.dim() {
        return Err(Error::InvalidState(format!(
            "state has length {}, system expects {}",
            y0.len(),
            sys.dim()
        )));
    }
    if !t0.is_finite() || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParams("non-finite sample time".into()));
    }
    let dir = times
        .iter()
        .map(|&t| t - t0)
        .find(|d| *d != 0.0)
        .map_or(1.0, f64::signum);
    let mut prev = t0;
    for &t in times {
        if (t - prev) * dir < 0.0 {
            return Err(Error::InvalidParams(
                "sample times must be monotone and start at or after t0".into(),
            ));
        }
        prev = t;
    }

    match solver.method {
        Method::Adaptive => dopri5(sys, t0, y0, times, dir, solver),
        Method::FixedStep { dt } => rk4(sys, t0, y0, times, dt, solver),
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], solver: &Solver) -> f64 {
    let n = y.len().max(1) as f64;
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = solver.atol + solver.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    solver: &Solver,
) -> f64 {
    let n = y0.len();
    let scale = |i: usize| solver.atol + solver.rtol * y0[i].abs();
    let rms = |v: &dyn Fn(usize) -> f64| ((0..n).map(|i| v(i).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = rms(&|i| y0[i] / scale(i));
    let d1 = rms(&|i| f0[i] / scale(i));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + dir * h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t0 + dir * h0, &y1, &mut f1);
    let d2 = rms(&|i| (f1[i] - f0[i]) / scale(i)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

fn dopri5<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    times: &[f64],
    dir: f64,
    solver: &Solver,
) -> Result<Vec<Vec<f64>>> {
    let n = y0.len();
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    sys.project(&mut y);
    let mut t = t0;
    sys.rhs(t, &y, &mut st.k[0]);
    let mut h = initial_step(sys, t, &y, &st.k[0], dir, solver);
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(times.len());

    for &target in times {
        loop {
            let remaining = (target - t) * dir;
            if remaining <= 4.0 * f64::EPSILON * t.abs().max(target.abs()) {
                break;
            }
            let hit = h >= remaining;
            let h_step = if hit { remaining } else { h };
            if h_step <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("step size underflow (h = {h_step:e})"),
                });
            }
            steps += 1;
            if steps > solver.max_steps {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("exceeded {} steps", solver.max_steps),
                });
            }
            let hs = dir * h_step;
            dopri_stages(sys, t, &y, hs, &mut st);
            let err = error_norm(&y, &st.y_new, &st.err, solver);
            if err.is_finite() && err <= 1.0 {
                t = if hit { target } else { t + hs };
                std::mem::swap(&mut y, &mut st.y_new);
                if sys.project(&mut y) {
                    sys.rhs(t, &y, &mut st.k[0]);
                } else {
                    st.k.swap(0, 6);
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Clamped steps do not shrink the controller's natural step.
                h = if hit { h.max(h_step * fac) } else { h_step * fac };
            } else {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h = h_step * fac;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn dopri_stages<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], h: f64, st: &mut Stages) {
    let n = y.len();
    let Stages { k, tmp, y_new, err } = st;
    let (k1, rest) = k.split_at_mut(1);
    let k1 = &k1[0];
    let [k2, k3, k4, k5, k6, k7] = rest else {
        unreachable!()
    };

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    sys.rhs(t + C2 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    sys.rhs(t + C3 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    sys.rhs(t + C4 * h, tmp, k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    sys.rhs(t + C5 * h, tmp, k5);
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    sys.rhs(t + h, tmp, k6);
    for i in 0..n {
        y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    sys.rhs(t + h, y_new, k7);
    for i in 0..n {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
}

fn rk4<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    times: &[f64],
    dt: f64,
    solver: &Solver,
) -> Result<Vec<Vec<f64>>> {
    let n = y0.len();
    let mut y = y0.to_vec();
    sys.project(&mut y);
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(times.len());

    for &target in times {
        let span = target - t;
        if span != 0.0 {
            let m = ((span.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / m as f64;
            for j in 0..m {
                steps += 1;
                if steps > solver.max_steps {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: format!("exceeded {} steps", solver.max_steps),
                    });
                }
                sys.rhs(t, &y, &mut k1);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                sys.rhs(t + 0.5 * h, &tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                sys.rhs(t + 0.5 * h, &tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = y[i] + h * k3[i];
                }
                sys.rhs(t + h, &tmp, &mut k4);
                for i in 0..n {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                sys.project(&mut y);
                t = if j + 1 == m { target } else { t + h };
                if y.iter().any(|x| !x.is_finite()) {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: "state became non-finite".into(),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator(f64);

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = self.0 * y[1];
            dy[1] = -self.0 * y[0];
        }
    }

    struct Decay;

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -2.0 * t * y[0];
        }
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let out = integrate(&Oscillator(2.0), 0.0, &[1.0, 0.0], &times, &Solver::with_tol(1e-11)).unwrap();
        for (t, y) in times.iter().zip(&out) {
            assert!((y[0] - (2.0 * t).cos()).abs() < 1e-9, "t={t}");
            assert!((y[1] + (2.0 * t).sin()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn non_autonomous_and_backward() {
        let out = integrate(&Decay, 0.0, &[1.0], &[1.5], &Solver::with_tol(1e-12)).unwrap();
        assert!((out[0][0] - (-2.25f64).exp()).abs() < 1e-11);
        let back = integrate(&Decay, 1.5, &out[0], &[0.0], &Solver::with_tol(1e-12)).unwrap();
        assert!((back[0][0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fixed_step_rk4_converges_at_fourth_order() {
        let err = |dt: f64| {
            let out = integrate(&Oscillator(1.0), 0.0, &[1.0, 0.0], &[3.0], &Solver::fixed_step(dt)).unwrap();
            (out[0][0] - 3f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn fixed_step_is_bit_reproducible() {
        let times = [0.3, 1.0, 2.7];
        let a = integrate(&Oscillator(1.3), 0.0, &[1.0, 0.2], &times, &Solver::fixed_step(0.01)).unwrap();
        let b = integrate(&Oscillator(1.3), 0.0, &[1.0, 0.2], &times, &Solver::fixed_step(0.01)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn samples_include_start_time() {
        let out = integrate(&Oscillator(1.0), 0.0, &[1.0, 0.0], &[0.0, 0.0, 1.0], &Solver::default()).unwrap();
        assert_eq!(out[0], vec![1.0, 0.0]);
        assert_eq!(out[1], vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_non_monotone_times() {
        let r = integrate(&Oscillator(1.0), 0.0, &[1.0, 0.0], &[1.0, 0.5], &Solver::default());
        assert!(matches!(r, Err(Error::InvalidParams(_))));
    }

    struct Blowup;

    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[0] * y[0];
        }
    }

    #[test]
    fn finite_time_blowup_reports_time_reached() {
        let r = integrate(&Blowup, 0.0, &[1.0], &[2.0], &Solver::default());
        match r {
            Err(Error::IntegrationFailure { t, .. }) => assert!(t > 0.9 && t <= 1.0, "t = {t}"),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
