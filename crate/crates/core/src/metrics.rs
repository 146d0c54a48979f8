//! Trajectory analysis: distance to the orbit, decay rates, periods and
//! oscillation amplitudes.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::orbit::OrbitTarget;

/// Minimum samples in a rate-fit window.
pub const MIN_FIT_SAMPLES: usize = 20;
/// Values below this are floating-point noise and end the fit window.
pub const FIT_FLOOR: f64 = 1e-10;
/// Fits with a lower coefficient of determination are not reported as rates.
pub const MIN_R_SQUARED: f64 = 0.99;

/// `‖x‖_𝒜`.
pub fn dist_to_orbit(orbit: &OrbitTarget, x: &Vector) -> f64 {
    orbit.distance(x)
}

/// `z = (Φ(x_p), x_ℓ - x_ℓ*)`.
pub fn transverse_coords(orbit: &OrbitTarget, x: &Vector) -> Vector {
    orbit.transverse(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub channel: String,
    /// Positive for decay.
    pub rate: f64,
    pub r_squared: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

impl RateFit {
    pub fn accepted(&self) -> bool {
        self.r_squared > MIN_R_SQUARED && self.samples >= MIN_FIT_SAMPLES
    }
}

/// Log-linear least squares on `|values|` over the window that starts at the
/// first sample with `dist < ½·dist[0]` and ends before the first value under
/// [`FIT_FLOOR`].
pub fn fit_exponential_rate(channel: &str, t: &[f64], values: &[f64], dist: &[f64]) -> Result<RateFit> {
    let start = dist
        .iter()
        .position(|&d| d < 0.5 * dist[0])
        .unwrap_or(t.len());
    let end = (start..t.len())
        .find(|&k| !(values[k].abs() >= FIT_FLOOR))
        .unwrap_or(t.len());
    let samples = end.saturating_sub(start);
    if samples < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooShort { samples });
    }
    let ts = &t[start..end];
    let ys: Vec<f64> = values[start..end].iter().map(|v| v.abs().ln()).collect();
    let (slope, r_squared) = linear_fit(ts, &ys);
    Ok(RateFit {
        channel: channel.to_string(),
        rate: -slope,
        r_squared,
        t_start: ts[0],
        t_end: ts[samples - 1],
        samples,
    })
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Cumulative angle with ±2π jump correction.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (k, &p) in phase.iter().enumerate() {
        if k > 0 {
            let d = p - phase[k - 1];
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Mean time per full revolution of `phase` after `t_start`, from the
/// interpolated instants where the unwrapped phase advances by 2π.
pub fn estimate_period(t: &[f64], phase: &[f64], t_start: f64) -> Result<f64> {
    let first = t.iter().position(|&s| s >= t_start).unwrap_or(t.len());
    let unwrapped = unwrap_phase(&phase[first..]);
    let t = &t[first..];
    if unwrapped.len() < 2 {
        return Err(Error::InsufficientCycles { cycles: 0 });
    }
    let dir = (unwrapped[unwrapped.len() - 1] - unwrapped[0]).signum();
    let rel: Vec<f64> = unwrapped.iter().map(|p| dir * (p - unwrapped[0])).collect();
    let mut crossings = Vec::new();
    let mut next = 2.0 * PI;
    for k in 1..rel.len() {
        while rel[k] >= next && rel[k - 1] < next {
            let a = (next - rel[k - 1]) / (rel[k] - rel[k - 1]);
            crossings.push(t[k - 1] + a * (t[k] - t[k - 1]));
            next += 2.0 * PI;
        }
    }
    if crossings.len() < 4 {
        return Err(Error::InsufficientCycles {
            cycles: crossings.len(),
        });
    }
    Ok((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Interpolated zero crossings of `signal` after `t_start`, with the sign of the slope.
pub fn zero_crossings(t: &[f64], signal: &[f64], t_start: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for k in 1..t.len() {
        if t[k - 1] < t_start {
            continue;
        }
        let (a, b) = (signal[k - 1], signal[k]);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let s = a / (a - b);
            out.push((t[k - 1] + s * (t[k] - t[k - 1]), (b - a).signum()));
        }
    }
    out
}

/// Oscillation period from velocity zero crossings: twice the mean spacing.
/// Requires three full cycles (seven crossings) with alternating slopes.
pub fn oscillation_period(t: &[f64], velocity: &[f64], t_start: f64) -> Result<f64> {
    let zc = zero_crossings(t, velocity, t_start);
    if zc.len() < 7 {
        return Err(Error::InsufficientCycles { cycles: zc.len() / 2 });
    }
    if zc.windows(2).any(|w| w[0].1 == w[1].1) {
        return Err(Error::InsufficientCycles { cycles: 0 });
    }
    Ok(2.0 * (zc[zc.len() - 1].0 - zc[0].0) / (zc.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurningPoint {
    pub t: f64,
    pub value: f64,
    /// `true` for a maximum.
    pub maximum: bool,
}

/// Extrema of `angle` located by sign changes of `velocity`, refined with a
/// 3-point parabola. Samples straddling an angle wrap are skipped.
pub fn turning_points(t: &[f64], angle: &[f64], velocity: &[f64]) -> Vec<TurningPoint> {
    let mut out = Vec::new();
    for i in 0..t.len().saturating_sub(1) {
        let (a, b) = (velocity[i], velocity[i + 1]);
        let maximum = a > 0.0 && b <= 0.0;
        let minimum = a < 0.0 && b >= 0.0;
        if !(maximum || minimum) {
            continue;
        }
        let k = if a.abs() <= b.abs() { i } else { i + 1 };
        if k == 0 || k + 1 >= t.len() {
            continue;
        }
        let (y0, y1, y2) = (angle[k - 1], angle[k], angle[k + 1]);
        if (y1 - y0).abs() > PI || (y2 - y1).abs() > PI {
            continue;
        }
        let curv = y0 - 2.0 * y1 + y2;
        let (dt, value) = if curv.abs() > 0.0 {
            let s = 0.5 * (y0 - y2) / curv;
            (s, y1 - 0.25 * (y0 - y2) * s)
        } else {
            (0.0, y1)
        };
        let h = t[k + 1] - t[k];
        out.push(TurningPoint {
            t: t[k] + dt * h,
            value,
            maximum,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Amplitudes {
    /// Mean of the maxima in the last quartile.
    pub upper: f64,
    /// Mean of the minima in the last quartile.
    pub lower: f64,
    pub count: usize,
}

/// Steady oscillation amplitude from the last quartile of turning points.
pub fn steady_amplitudes(points: &[TurningPoint]) -> Option<Amplitudes> {
    let tail = &points[points.len() - points.len() / 4..];
    let maxima: Vec<f64> = tail.iter().filter(|p| p.maximum).map(|p| p.value).collect();
    let minima: Vec<f64> = tail.iter().filter(|p| !p.maximum).map(|p| p.value).collect();
    if maxima.is_empty() || minima.is_empty() {
        return None;
    }
    Some(Amplitudes {
        upper: maxima.iter().sum::<f64>() / maxima.len() as f64,
        lower: minima.iter().sum::<f64>() / minima.len() as f64,
        count: tail.len(),
    })
}

/// Largest one-step increase of a sequence (negative when strictly decreasing).
pub fn max_increment(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub final_dist: f64,
    pub fitted_rates: Vec<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Amplitudes>,
}
