//! Planar pendulum on a cart, normalized: `θ̇ = ω`, `ω̇ = sinθ - u cosθ`.

use std::f64::consts::FRAC_PI_3;
use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::epd::{EpdDesign, EpdParts};
use crate::error::{Error, Result};
use crate::numerics::{wrap_angle, Matrix, Vector};
use crate::orbit::{CurveSource, OrbitTarget, PlanarPredicate, DEFAULT_CURVE_SAMPLES};
use crate::ph::{ControlAffinePlant, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PendulumVariant {
    Local { gamma: f64 },
    AlmostGlobal { gamma1: f64, gamma2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub variant: PendulumVariant,
    pub theta_star: f64,
}

impl PendulumParams {
    pub fn local(gamma: f64, theta_star: f64) -> Self {
        PendulumParams {
            variant: PendulumVariant::Local { gamma },
            theta_star,
        }
    }

    pub fn almost_global(gamma1: f64, gamma2: f64, theta_star: f64) -> Self {
        PendulumParams {
            variant: PendulumVariant::AlmostGlobal { gamma1, gamma2 },
            theta_star,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let gains: &[(&str, f64)] = match &self.variant {
            PendulumVariant::Local { gamma } => &[("gamma", *gamma)],
            PendulumVariant::AlmostGlobal { gamma1, gamma2 } => &[("gamma1", *gamma1), ("gamma2", *gamma2)],
        };
        for &(name, v) in gains {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        let t = self.theta_star.abs();
        if !(t < FRAC_PI_3) {
            return Err(Error::invalid("theta_star", "must lie in (-pi/3, pi/3)"));
        }
        if t < 1e-6 {
            return Err(Error::invalid("theta_star", "zero amplitude collapses the orbit to the upright equilibrium"));
        }
        Ok(())
    }

    /// `H_p* = -(cosθ⋆ - ½)²`.
    pub fn hp_star(&self) -> f64 {
        -(self.theta_star.cos() - 0.5).powi(2)
    }
}

#[derive(Debug, Clone)]
pub struct PendulumSystem {
    pub params: PendulumParams,
    pub plant: ControlAffinePlant,
    pub epd: EpdDesign,
    pub orbit: OrbitTarget,
}

impl PendulumSystem {
    /// Active branch of the piecewise gain, for the almost-global design.
    pub fn branch(&self, x: &Vector) -> Option<&'static str> {
        match self.params.variant {
            PendulumVariant::Local { .. } => None,
            PendulumVariant::AlmostGlobal { .. } => Some(if inner_region(x[0]) { "gamma1" } else { "gamma2" }),
        }
    }
}

pub fn pendulum_plant() -> ControlAffinePlant {
    ControlAffinePlant::new(
        "pendulum",
        2,
        1,
        |x: &Vector| Vector::from_vec(vec![x[1], x[0].sin()]),
        |x: &Vector| Matrix::from_row_slice(2, 1, &[0.0, -x[0].cos()]),
    )
    .expect("fixed dimensions")
    .with_angles(vec![0])
}

/// `H_p = -(cosθ - ½)² + ½ω²`.
pub fn hp(xp: &Vector2<f64>) -> f64 {
    -(xp[0].cos() - 0.5).powi(2) + 0.5 * xp[1] * xp[1]
}

pub fn grad_hp(xp: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new((2.0 * xp[0]).sin() - xp[0].sin(), xp[1])
}

/// `|θ| < π/3` after wrapping.
pub fn inner_region(theta: f64) -> bool {
    wrap_angle(theta).abs() < FRAC_PI_3
}

/// The energy-shaping gain `P(θ, ω)` of the controller `u = 2sinθ + ωP cosθ`.
pub fn gain_p(params: &PendulumParams, x: &Vector) -> f64 {
    let phi = hp(&Vector2::new(x[0], x[1])) - params.hp_star();
    match params.variant {
        PendulumVariant::Local { gamma } => gamma * phi,
        PendulumVariant::AlmostGlobal { gamma1, gamma2 } => {
            let q = if inner_region(x[0]) { gamma1 * phi } else { gamma2 };
            (1.5 * x[0].cos() + 0.5 * x[1] * x[1] - 0.75) * q
        }
    }
}

pub fn pendulum_control(params: &PendulumParams, x: &Vector) -> f64 {
    2.0 * x[0].sin() + x[1] * gain_p(params, x) * x[0].cos()
}

fn pendulum_orbit(params: &PendulumParams) -> Result<OrbitTarget> {
    let hp_star = params.hp_star();
    let domain: PlanarPredicate = Arc::new(|xp: &Vector2<f64>| xp[0].abs() < FRAC_PI_3);
    OrbitTarget::build(
        Partition::leading(2)?,
        move |xp: &Vector2<f64>| hp(xp) - hp_star,
        grad_hp,
        Vector::zeros(0),
        CurveSource::Traced {
            seed: Vector2::new(params.theta_star.abs(), 0.0),
            step: 1e-3,
        },
        DEFAULT_CURVE_SAMPLES,
        Some(domain),
    )
}

fn build(params: &PendulumParams, name: &str) -> Result<PendulumSystem> {
    params.validate()?;
    let orbit = pendulum_orbit(params)?;
    let p = *params;
    let epd = EpdDesign::new(EpdParts {
        name: name.into(),
        orbit: orbit.clone(),
        interconnection: Arc::new(|_x: &Vector| Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
        damping: Arc::new(move |x: &Vector| {
            let mut r = Matrix::zeros(2, 2);
            r[(1, 1)] = x[0].cos().powi(2) * gain_p(&p, x);
            r
        }),
        hp: Arc::new(hp),
        grad_hp: Arc::new(grad_hp),
        hl: Arc::new(|_xl: &Vector| 0.0),
        grad_hl: Arc::new(|_xl: &Vector| Vector::zeros(0)),
        hp_star: params.hp_star(),
        xp_star: Vector2::zeros(),
        singular: None,
        controller: Some(Arc::new(move |x: &Vector| Vector::from_element(1, pendulum_control(&p, x)))),
    });
    Ok(PendulumSystem {
        params: *params,
        plant: pendulum_plant(),
        epd,
        orbit,
    })
}

pub fn pendulum_local(params: &PendulumParams) -> Result<PendulumSystem> {
    if !matches!(params.variant, PendulumVariant::Local { .. }) {
        return Err(Error::invalid("variant", "expected the local design"));
    }
    build(params, "pendulum_local")
}

pub fn pendulum_almost_global(params: &PendulumParams) -> Result<PendulumSystem> {
    if !matches!(params.variant, PendulumVariant::AlmostGlobal { .. }) {
        return Err(Error::invalid("variant", "expected the almost-global design"));
    }
    build(params, "pendulum_global")
}

/// Dispatches on the variant.
pub fn pendulum_system(params: &PendulumParams) -> Result<PendulumSystem> {
    match params.variant {
        PendulumVariant::Local { .. } => pendulum_local(params),
        PendulumVariant::AlmostGlobal { .. } => pendulum_almost_global(params),
    }
}
