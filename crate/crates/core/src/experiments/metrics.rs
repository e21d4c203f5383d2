//! Deviation and oscillation diagnostics on sampled time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::ObservableRecord;

/// Denominator floor of [`relative_deviation`].
pub const REL_FLOOR: f64 = 1e-12;

/// `|a - b| / max(|b|, 1e-12)`, with `b` the mean-field reference.
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(REL_FLOOR)
}

/// First time the series drops below 1/2, linearly interpolated between samples.
pub fn half_life(times: &[f64], survival: &[f64]) -> Option<f64> {
    crossing_below(times, survival, 0.5)
}

fn crossing_below(times: &[f64], y: &[f64], level: f64) -> Option<f64> {
    if y.first().is_some_and(|&y0| y0 < level) {
        return times.first().copied();
    }
    times.windows(2).zip(y.windows(2)).find_map(|(t, w)| {
        (w[1] < level && w[0] >= level).then(|| t[0] + (t[1] - t[0]) * (w[0] - level) / (w[0] - w[1]))
    })
}

/// Hysteresis band of [`upward_crossings`] as a fraction of the signal range.
pub const CROSSING_HYSTERESIS: f64 = 0.05;

/// Upward crossings of `y - mean(y)`, linearly interpolated. A crossing only
/// counts once the signal has dipped below and then risen above a band of
/// [`CROSSING_HYSTERESIS`] times its range around the mean, so small
/// residual wiggles are ignored.
pub fn upward_crossings(times: &[f64], y: &[f64]) -> Vec<f64> {
    if y.is_empty() {
        return Vec::new();
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let band = CROSSING_HYSTERESIS * (hi - lo);
    let mut out = Vec::new();
    let mut armed = false;
    let mut pending: Option<f64> = None;
    for i in 0..y.len() {
        let d = y[i] - mean;
        if d < -band {
            armed = true;
            pending = None;
        }
        if i > 0 {
            let a = y[i - 1] - mean;
            if armed && a < 0.0 && d >= 0.0 {
                pending = Some(times[i - 1] + (times[i] - times[i - 1]) * (-a) / (d - a));
            }
        }
        if armed && d > band {
            if let Some(t) = pending.take() {
                out.push(t);
            }
            armed = false;
        }
    }
    out
}

/// Oscillation period as the median spacing of consecutive upward mean
/// crossings; the median skips gaps where the oscillation has collapsed.
pub fn estimate_period(times: &[f64], y: &[f64]) -> Option<f64> {
    let c = upward_crossings(times, y);
    let mut gaps: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len();
    Some(if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t: f64,
    pub value: f64,
    pub is_max: bool,
}

/// Strict interior local extrema.
pub fn extrema(times: &[f64], y: &[f64]) -> Vec<Extremum> {
    (1..y.len().saturating_sub(1))
        .filter_map(|i| {
            let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
            if b > a && b >= c {
                Some(Extremum { t: times[i], value: b, is_max: true })
            } else if b < a && b <= c {
                Some(Extremum { t: times[i], value: b, is_max: false })
            } else {
                None
            }
        })
        .collect()
}

/// Peak-to-peak amplitude between consecutive alternating extrema.
pub fn amplitude_envelope(times: &[f64], y: &[f64]) -> Vec<f64> {
    let ex = extrema(times, y);
    ex.windows(2)
        .filter(|w| w[0].is_max != w[1].is_max)
        .map(|w| (w[0].value - w[1].value).abs())
        .collect()
}

/// Peak-to-peak amplitude over consecutive windows of length `period`.
pub fn per_period_amplitude(times: &[f64], y: &[f64], period: f64) -> Vec<f64> {
    if !(period > 0.0) || times.is_empty() {
        return Vec::new();
    }
    let t0 = times[0];
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let (lo, hi) = (t0 + k as f64 * period, t0 + (k + 1) as f64 * period);
        if hi > times[times.len() - 1] + 1e-12 {
            break;
        }
        let window = times.iter().zip(y).filter(|(t, _)| **t >= lo && **t <= hi).map(|(_, v)| *v);
        let (mn, mx) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        out.push(mx - mn);
        k += 1;
    }
    out
}

/// Maximum of `y` over `windows` equal sub-intervals of the grid.
pub fn windowed_maxima(times: &[f64], y: &[f64], windows: usize) -> Vec<f64> {
    if times.is_empty() || windows == 0 {
        return Vec::new();
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let w = (t1 - t0) / windows as f64;
    (0..windows)
        .map(|k| {
            let (lo, hi) = (t0 + k as f64 * w, t0 + (k + 1) as f64 * w);
            times
                .iter()
                .zip(y)
                .filter(|(t, _)| **t >= lo && **t <= hi)
                .fold(0.0f64, |m, (_, v)| m.max(*v))
        })
        .collect()
}

/// Central-difference derivative on a (possibly non-uniform) grid,
/// one-sided at the ends.
pub fn derivative(times: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (y[b] - y[a]) / (times[b] - times[a])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub max_rel_dev_survival: f64,
    pub mean_rel_dev_survival: f64,
    pub max_abs_dev_sz: f64,
    pub half_life_mp: Option<f64>,
    pub half_life_mf: Option<f64>,
    /// `|T_mp - T_mf| / T_mf`; `None` if either half-life lies outside the grid.
    pub half_life_mismatch: Option<f64>,
    pub period_mp: Option<f64>,
    pub period_mf: Option<f64>,
}

/// Compares a many-particle series against its mean-field counterpart.
pub fn deviation_metrics(mp: &[ObservableRecord], mf: &[ObservableRecord]) -> Result<DeviationSummary> {
    if mp.len() != mf.len() || mp.iter().zip(mf).any(|(a, b)| a.t != b.t) {
        return Err(Error::InvalidParams("deviation metrics need identical time grids".into()));
    }
    if mp.is_empty() {
        return Err(Error::InvalidParams("empty series".into()));
    }
    let times: Vec<f64> = mp.iter().map(|r| r.t).collect();
    let rel: Vec<f64> = mp.iter().zip(mf).map(|(a, b)| relative_deviation(a.survival, b.survival)).collect();
    let surv = |s: &[ObservableRecord]| s.iter().map(|r| r.survival).collect::<Vec<_>>();
    let sz = |s: &[ObservableRecord]| s.iter().map(|r| r.sz).collect::<Vec<_>>();
    let half_life_mp = half_life(&times, &surv(mp));
    let half_life_mf = half_life(&times, &surv(mf));
    Ok(DeviationSummary {
        max_rel_dev_survival: rel.iter().fold(0.0f64, |m, x| m.max(*x)),
        mean_rel_dev_survival: rel.iter().sum::<f64>() / rel.len() as f64,
        max_abs_dev_sz: mp.iter().zip(mf).fold(0.0f64, |m, (a, b)| m.max((a.sz - b.sz).abs())),
        half_life_mp,
        half_life_mf,
        half_life_mismatch: match (half_life_mp, half_life_mf) {
            (Some(a), Some(b)) if b > 0.0 => Some((a - b).abs() / b),
            (Some(a), Some(b)) if a == b => Some(0.0),
            _ => None,
        },
        period_mp: estimate_period(&times, &sz(mp)),
        period_mf: estimate_period(&times, &sz(mf)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn half_life_of_exponential() {
        let t = grid(2001, 10.0);
        let y: Vec<f64> = t.iter().map(|t| (-0.3 * t).exp()).collect();
        let h = half_life(&t, &y).unwrap();
        assert!((h - 2f64.ln() / 0.3).abs() < 1e-4);
        assert_eq!(half_life(&t[..10], &y[..10]), None);
    }

    #[test]
    fn period_and_envelope_of_damped_cosine() {
        let t = grid(20001, 40.0);
        let y: Vec<f64> = t.iter().map(|t| (-0.05 * t).exp() * (2.0 * t).cos()).collect();
        let p = estimate_period(&t, &y).unwrap();
        assert!((p - std::f64::consts::PI).abs() < 1e-3, "{p}");
        let env = per_period_amplitude(&t, &y, p);
        assert!(env.windows(2).all(|w| w[1] < w[0]));
        let half = amplitude_envelope(&t, &y);
        assert!(half.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn small_wiggles_do_not_count_as_crossings() {
        let t = grid(4001, 20.0);
        let y: Vec<f64> = t.iter().map(|t| t.cos() + 0.01 * (40.0 * t).sin()).collect();
        let p = estimate_period(&t, &y).unwrap();
        assert!((p - 2.0 * std::f64::consts::PI).abs() < 0.05, "{p}");
    }

    #[test]
    fn relative_deviation_floor() {
        assert_eq!(relative_deviation(1.0, 0.0), 1e12);
        assert_eq!(relative_deviation(1.1, 1.0), (1.1f64 - 1.0).abs());
    }

    #[test]
    fn identical_series_have_zero_deviation() {
        let recs: Vec<ObservableRecord> = grid(101, 5.0)
            .into_iter()
            .map(|t| ObservableRecord {
                t,
                sx: 0.0,
                sy: 0.5 * t.sin(),
                sz: 0.5 * t.cos(),
                survival: (-t).exp(),
                pop1: 0.0,
                pop2: 0.0,
            })
            .collect();
        let s = deviation_metrics(&recs, &recs).unwrap();
        assert_eq!(s.max_rel_dev_survival, 0.0);
        assert_eq!(s.max_abs_dev_sz, 0.0);
        assert_eq!(s.half_life_mismatch, Some(0.0));
        assert!(deviation_metrics(&recs, &recs[1..]).is_err());
    }

    #[test]
    fn windowed_maxima_and_derivative() {
        let t = grid(11, 10.0);
        let y: Vec<f64> = t.iter().map(|t| t * t).collect();
        assert_eq!(windowed_maxima(&t, &y, 2), vec![25.0, 100.0]);
        let d = derivative(&t, &y);
        assert_eq!(d[5], 10.0);
    }
}
