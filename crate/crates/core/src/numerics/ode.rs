//! Explicit integrators for autonomous vector fields.

use serde::{Deserialize, Serialize};

use super::linalg::{is_finite, Vector};
use crate::error::{Error, Result};

/// An autonomous vector field `ẋ = F(x)`.
pub trait VectorField {
    fn eval(&self, x: &Vector) -> Result<Vector>;

    /// Maps the state back onto its manifold after every accepted step
    /// (angle wrapping). Default: identity.
    fn wrap(&self, _x: &mut Vector) {}
}

impl<F> VectorField for F
where
    F: Fn(&Vector) -> Vector,
{
    fn eval(&self, x: &Vector) -> Result<Vector> {
        Ok(self(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Classic fixed-step fourth-order Runge-Kutta.
    Rk4 { step: f64 },
    /// Dormand-Prince 5(4) embedded pair with step-size control.
    DormandPrince {
        rel_tol: f64,
        abs_tol: f64,
        max_step: f64,
    },
}

impl Default for Method {
    fn default() -> Self {
        Method::Rk4 { step: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    #[serde(flatten)]
    pub method: Method,
    pub t_end: f64,
    /// Time between stored samples. For RK4 it must be a whole number of steps.
    #[serde(default = "default_output_interval")]
    pub output_interval: f64,
}

fn default_output_interval() -> f64 {
    1e-2
}

impl IntegratorSettings {
    pub fn rk4(step: f64, t_end: f64, output_interval: f64) -> Self {
        IntegratorSettings {
            method: Method::Rk4 { step },
            t_end,
            output_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSettings(msg.to_string()));
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be positive");
        }
        if !(self.output_interval > 0.0) {
            return bad("output_interval must be positive");
        }
        match self.method {
            Method::Rk4 { step } => {
                if !(step > 0.0) {
                    return bad("step must be positive");
                }
                self.rk4_stride(step)?;
            }
            Method::DormandPrince {
                rel_tol,
                abs_tol,
                max_step,
            } => {
                if !(rel_tol > 0.0) || !(abs_tol > 0.0) {
                    return bad("tolerances must be positive");
                }
                if !(max_step > 0.0) {
                    return bad("max_step must be positive");
                }
            }
        }
        Ok(())
    }

    fn rk4_stride(&self, step: f64) -> Result<usize> {
        let ratio = self.output_interval / step;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidSettings(format!(
                "output_interval {} is not a whole multiple of step {}",
                self.output_interval, step
            )));
        }
        Ok(stride as usize)
    }
}

/// Raw integration output: sample times and states.
#[derive(Debug, Clone, Default)]
pub struct Solution {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
}

pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &Vector,
    settings: &IntegratorSettings,
) -> Result<Solution> {
    settings.validate()?;
    if !is_finite(x0) {
        return Err(Error::NonFiniteState { t: 0.0 });
    }
    let mut x = x0.clone();
    field.wrap(&mut x);
    match settings.method {
        Method::Rk4 { step } => rk4(field, x, step, settings),
        Method::DormandPrince {
            rel_tol,
            abs_tol,
            max_step,
        } => dopri5(field, x, rel_tol, abs_tol, max_step, settings),
    }
}

fn rk4<F: VectorField + ?Sized>(
    field: &F,
    mut x: Vector,
    step: f64,
    settings: &IntegratorSettings,
) -> Result<Solution> {
    let stride = settings.rk4_stride(step)?;
    let t_end = settings.t_end;
    let n_steps = (t_end / step - 1e-9).ceil().max(1.0) as usize;
    let mut sol = Solution::default();
    sol.t.push(0.0);
    sol.x.push(x.clone());

    for k in 0..n_steps {
        // times are computed from the step index so repeated runs are bit-identical
        let t = k as f64 * step;
        let t_next = if k + 1 == n_steps {
            t_end
        } else {
            (k + 1) as f64 * step
        };
        let h = t_next - t;
        let k1 = field.eval(&x)?;
        let k2 = field.eval(&(&x + &k1 * (0.5 * h)))?;
        let k3 = field.eval(&(&x + &k2 * (0.5 * h)))?;
        let k4 = field.eval(&(&x + &k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !is_finite(&x) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        field.wrap(&mut x);
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            sol.t.push(t_next);
            sol.x.push(x.clone());
        }
    }
    Ok(sol)
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri5<F: VectorField + ?Sized>(
    field: &F,
    mut x: Vector,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    settings: &IntegratorSettings,
) -> Result<Solution> {
    let t_end = settings.t_end;
    let n_out = (t_end / settings.output_interval - 1e-9).ceil().max(1.0) as usize;
    let out_time = |i: usize| {
        if i >= n_out {
            t_end
        } else {
            i as f64 * settings.output_interval
        }
    };

    let mut sol = Solution::default();
    sol.t.push(0.0);
    sol.x.push(x.clone());

    let mut t = 0.0;
    let mut next_out = 1;
    let mut h = (max_step).min(settings.output_interval).min(1e-2);
    let mut k: Vec<Vector> = Vec::with_capacity(7);

    while next_out <= n_out {
        let target = out_time(next_out);
        let h_try = h.min(target - t).min(max_step);
        if h_try < 1e-14 {
            return Err(Error::StepUnderflow { t });
        }
        k.clear();
        for row in A.iter() {
            let mut xs = x.clone();
            for (kj, &a) in k.iter().zip(row.iter()) {
                if a != 0.0 {
                    xs.axpy(h_try * a, kj, 1.0);
                }
            }
            k.push(field.eval(&xs)?);
        }
        let mut x5 = x.clone();
        let mut x4 = x.clone();
        for (stage, ks) in k.iter().enumerate() {
            x5.axpy(h_try * B5[stage], ks, 1.0);
            x4.axpy(h_try * B4[stage], ks, 1.0);
        }
        let err = {
            let mut acc = 0.0;
            for i in 0..x.len() {
                let sc = abs_tol + rel_tol * x[i].abs().max(x5[i].abs());
                acc += ((x5[i] - x4[i]) / sc).powi(2);
            }
            (acc / x.len().max(1) as f64).sqrt()
        };
        if !err.is_finite() {
            return Err(Error::NonFiniteState { t: t + h_try });
        }
        if err <= 1.0 {
            t = if h_try == target - t { target } else { t + h_try };
            x = x5;
            field.wrap(&mut x);
            if t >= target {
                sol.t.push(target);
                sol.x.push(x.clone());
                next_out += 1;
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            // a step clipped to hit an output time says nothing about the next one
            if h_try >= h {
                h = (h_try * factor).min(max_step);
            }
        } else {
            h = h_try * factor;
            if h < 1e-14 {
                return Err(Error::StepUnderflow { t });
            }
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn decay(x: &Vector) -> Vector {
        -x
    }

    fn rotation(x: &Vector) -> Vector {
        Vector::from_vec(vec![-x[1], x[0]])
    }

    #[test]
    fn rk4_exponential_decay() {
        let s = IntegratorSettings::rk4(1e-3, 1.0, 1e-3);
        let sol = integrate(&decay, &Vector::from_vec(vec![1.0]), &s).unwrap();
        let last = sol.x.last().unwrap()[0];
        assert!((last - (-1.0f64).exp()).abs() < 1e-9);
        assert!((last - 0.3678794).abs() < 1e-7);
        assert_eq!(*sol.t.last().unwrap(), 1.0);
        assert_eq!(sol.t.len(), 1001);
    }

    #[test]
    fn rk4_rotation_returns_home() {
        let s = IntegratorSettings::rk4(1e-3, 2.0 * PI, 1e-3);
        let sol = integrate(&rotation, &Vector::from_vec(vec![1.0, 0.0]), &s).unwrap();
        let last = sol.x.last().unwrap();
        assert!((last[0] - 1.0).abs() < 1e-6 && last[1].abs() < 1e-6);
    }

    #[test]
    fn rk4_order_is_four() {
        let err = |h: f64| {
            let s = IntegratorSettings::rk4(h, 1.0, h);
            let sol = integrate(&decay, &Vector::from_vec(vec![1.0]), &s).unwrap();
            (sol.x.last().unwrap()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rk4_is_bit_reproducible() {
        let s = IntegratorSettings::rk4(1e-3, 3.0, 1e-2);
        let a = integrate(&rotation, &Vector::from_vec(vec![0.3, 0.1]), &s).unwrap();
        let b = integrate(&rotation, &Vector::from_vec(vec![0.3, 0.1]), &s).unwrap();
        assert_eq!(a.t, b.t);
        for (xa, xb) in a.x.iter().zip(&b.x) {
            assert_eq!(xa.as_slice(), xb.as_slice());
        }
    }

    #[test]
    fn output_stride_must_divide() {
        let s = IntegratorSettings::rk4(1e-3, 1.0, 1.5e-3);
        assert!(matches!(
            integrate(&decay, &Vector::from_vec(vec![1.0]), &s),
            Err(Error::InvalidSettings(_))
        ));
    }

    #[test]
    fn bad_settings_rejected() {
        for s in [
            IntegratorSettings::rk4(0.0, 1.0, 1e-2),
            IntegratorSettings::rk4(1e-3, 0.0, 1e-2),
            IntegratorSettings {
                method: Method::DormandPrince {
                    rel_tol: 0.0,
                    abs_tol: 1e-9,
                    max_step: 0.1,
                },
                t_end: 1.0,
                output_interval: 0.1,
            },
        ] {
            assert!(s.validate().is_err());
        }
    }

    #[test]
    fn non_finite_state_reports_time() {
        // blows up in finite time t = 1
        let blow = |x: &Vector| Vector::from_vec(vec![x[0] * x[0]]);
        let s = IntegratorSettings::rk4(1e-3, 2.0, 1e-3);
        match integrate(&blow, &Vector::from_vec(vec![1.0]), &s) {
            Err(Error::NonFiniteState { t }) => assert!(t > 0.9 && t <= 2.0),
            other => panic!("expected NonFiniteState, got {other:?}"),
        }
    }

    #[test]
    fn dopri_matches_analytic() {
        let s = IntegratorSettings {
            method: Method::DormandPrince {
                rel_tol: 1e-10,
                abs_tol: 1e-12,
                max_step: 0.1,
            },
            t_end: 2.0 * PI,
            output_interval: PI / 2.0,
        };
        let sol = integrate(&rotation, &Vector::from_vec(vec![1.0, 0.0]), &s).unwrap();
        assert_eq!(sol.t.len(), 5);
        let last = sol.x.last().unwrap();
        assert!((last[0] - 1.0).abs() < 1e-8 && last[1].abs() < 1e-8);
        let quarter = &sol.x[1];
        assert!(quarter[0].abs() < 1e-8 && (quarter[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dopri_respects_tolerance() {
        let run = |tol: f64| {
            let s = IntegratorSettings {
                method: Method::DormandPrince {
                    rel_tol: tol,
                    abs_tol: tol,
                    max_step: 1.0,
                },
                t_end: 5.0,
                output_interval: 5.0,
            };
            let sol = integrate(&decay, &Vector::from_vec(vec![1.0]), &s).unwrap();
            (sol.x.last().unwrap()[0] - (-5.0f64).exp()).abs()
        };
        assert!(run(1e-6) < 1e-5);
        assert!(run(1e-10) < 1e-9);
    }

    #[test]
    fn wrap_is_applied_after_each_step() {
        struct Spin;
        impl VectorField for Spin {
            fn eval(&self, _x: &Vector) -> Result<Vector> {
                Ok(Vector::from_vec(vec![1.0]))
            }
            fn wrap(&self, x: &mut Vector) {
                x[0] = crate::numerics::wrap_angle(x[0]);
            }
        }
        let s = IntegratorSettings::rk4(1e-3, 10.0, 1e-2);
        let sol = integrate(&Spin, &Vector::from_vec(vec![0.0]), &s).unwrap();
        assert!(sol.x.iter().all(|x| x[0] > -PI && x[0] <= PI));
        let expected = crate::numerics::wrap_angle(10.0);
        assert!((sol.x.last().unwrap()[0] - expected).abs() < 1e-9);
    }
}
