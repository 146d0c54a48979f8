//! Current-fed induction motor, normalized: `ψ̇ = -Rψ + ω𝕁ψ + Ru`, `ω̇ = uᵀ𝕁ψ`.

use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::epd::{EpdDesign, EpdParts};
use crate::error::{Error, Result};
use crate::msea::{H0Split, MseaDesign, MseaParts};
use crate::numerics::{rotation, skew_j, Matrix, Vector};
use crate::orbit::{CurveSource, OrbitTarget, DEFAULT_CURVE_SAMPLES};
use crate::ph::{ControlAffinePlant, Partition};

/// Half-width of the shell around `|x_p| = β⋆` where the MSEA matrices are not evaluated.
pub const ORBIT_SHELL: f64 = 1e-3;
/// Flux norms below this are treated as the origin.
pub const FLUX_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImParams {
    #[serde(rename = "R")]
    pub r: f64,
    pub beta_star: f64,
    pub omega_star: f64,
    pub k: f64,
}

impl Default for ImParams {
    fn default() -> Self {
        ImParams {
            r: 1.0,
            beta_star: 1.0,
            omega_star: 5.0,
            k: 1.0,
        }
    }
}

impl ImParams {
    fn validate_gains(&self) -> Result<()> {
        for (name, v) in [("R", self.r), ("beta_star", self.beta_star), ("k", self.k)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !self.omega_star.is_finite() {
            return Err(Error::invalid("omega_star", "must be finite"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_gains()?;
        if self.omega_star == 0.0 {
            return Err(Error::invalid("omega_star", "must be nonzero"));
        }
        Ok(())
    }
}

/// Fixed-frame plant with its MSEA and EPD designs.
#[derive(Debug, Clone)]
pub struct ImSystem {
    pub params: ImParams,
    pub plant: ControlAffinePlant,
    pub msea: MseaDesign,
    pub epd: EpdDesign,
    pub orbit: OrbitTarget,
}

pub fn im_plant(p: &ImParams) -> ControlAffinePlant {
    let r = p.r;
    ControlAffinePlant::new(
        "im_fixed",
        3,
        2,
        move |x: &Vector| Vector::from_vec(vec![-r * x[0] - x[2] * x[1], -r * x[1] + x[2] * x[0], 0.0]),
        move |x: &Vector| Matrix::from_row_slice(3, 2, &[r, 0.0, 0.0, r, -x[1], x[0]]),
    )
    .expect("fixed dimensions")
}

fn flux_norm(x: &Vector) -> f64 {
    x[0].hypot(x[1])
}

/// `u = β⋆x̂ - (k/β⋆)(ω - ω⋆)𝕁x̂` with `x̂ = x_p/|x_p|`.
pub fn im_control(p: &ImParams, x: &Vector) -> Vector2<f64> {
    let xp = Vector2::new(x[0], x[1]);
    let unit = xp / xp.norm();
    unit * p.beta_star - skew_j() * unit * (p.k / p.beta_star * (x[2] - p.omega_star))
}

pub fn im_orbit(p: &ImParams) -> Result<OrbitTarget> {
    let (beta, omega) = (p.beta_star, p.omega_star);
    Ok(OrbitTarget::build(
        Partition::leading(3)?,
        move |xp: &Vector2<f64>| xp.norm() - beta,
        |xp: &Vector2<f64>| xp / xp.norm(),
        Vector::from_vec(vec![omega]),
        CurveSource::Parameterized(Box::new(move |s| Vector2::new(beta * s.cos(), beta * s.sin()))),
        DEFAULT_CURVE_SAMPLES,
        None,
    )?
    .with_analytic_distance(move |x: &Vector| (flux_norm(x) - beta).hypot(x[2] - omega)))
}

/// The `J₍₁,₃₎`, `J₍₂,₃₎` coupling shared by both designs.
fn couple_speed(j: &mut Matrix, p: &ImParams, x: &Vector) {
    let s = p.k * p.r / p.beta_star / flux_norm(x);
    j[(0, 2)] = s * x[1];
    j[(2, 0)] = -s * x[1];
    j[(1, 2)] = -s * x[0];
    j[(2, 1)] = s * x[0];
}

/// MSEA design without the `ω⋆ ≠ 0` requirement, so that its failure can be audited.
pub fn im_msea_design(p: &ImParams) -> Result<MseaDesign> {
    p.validate_gains()?;
    let orbit = im_orbit(p)?;
    let q = *p;
    let interconnection = Arc::new(move |x: &Vector| {
        let norm = flux_norm(x);
        let mut j = Matrix::zeros(3, 3);
        j[(0, 1)] = -x[2] * norm / (norm - q.beta_star);
        j[(1, 0)] = -j[(0, 1)];
        couple_speed(&mut j, &q, x);
        j
    });
    let damping = Arc::new(move |x: &Vector| {
        Matrix::from_diagonal(&Vector::from_vec(vec![q.r, q.r, q.k / q.beta_star * flux_norm(x)]))
    });
    let omega = p.omega_star;
    let beta = p.beta_star;
    Ok(MseaDesign::new(MseaParts {
        name: "im_msea".into(),
        orbit,
        interconnection,
        damping,
        h0: Arc::new(move |x0, xl| 0.5 * x0 * x0 + 0.5 * (xl[0] - omega).powi(2)),
        grad_h0: Arc::new(move |x0, xl| (x0, Vector::from_vec(vec![xl[0] - omega]))),
        c: Arc::new(|x: &Vector| -x[2] * flux_norm(x)),
        singular: Some(Arc::new(move |x: &Vector| {
            let norm = flux_norm(x);
            norm < FLUX_FLOOR || (norm - beta).abs() <= ORBIT_SHELL
        })),
        controller: Some(Arc::new(move |x: &Vector| {
            let u = im_control(&q, x);
            Vector::from_vec(vec![u[0], u[1]])
        })),
        split: Some(H0Split {
            h1: Arc::new(|x0| 0.5 * x0 * x0),
            h1_prime: Arc::new(|x0| x0),
            hl: Arc::new(move |xl: &Vector| 0.5 * (xl[0] - omega).powi(2)),
            grad_hl: Arc::new(move |xl: &Vector| Vector::from_vec(vec![xl[0] - omega])),
        }),
    }))
}

/// EPD form with `H_p = ½|x_p|²`, `H_p* = ½β⋆²`, `J₍₁,₂₎ = -ω` and
/// `R_pp = R(1 - β⋆/|x_p|)I`.
pub fn im_epd_design(p: &ImParams, orbit: &OrbitTarget) -> Result<EpdDesign> {
    p.validate_gains()?;
    let q = *p;
    let orbit = orbit.with_level_function(
        move |xp: &Vector2<f64>| 0.5 * xp.norm_squared() - 0.5 * q.beta_star * q.beta_star,
        |xp: &Vector2<f64>| *xp,
    )?;
    let omega = p.omega_star;
    Ok(EpdDesign::new(EpdParts {
        name: "im_epd".into(),
        orbit,
        interconnection: Arc::new(move |x: &Vector| {
            let mut j = Matrix::zeros(3, 3);
            j[(0, 1)] = -x[2];
            j[(1, 0)] = x[2];
            couple_speed(&mut j, &q, x);
            j
        }),
        damping: Arc::new(move |x: &Vector| {
            let norm = flux_norm(x);
            let d = q.r * (1.0 - q.beta_star / norm);
            Matrix::from_diagonal(&Vector::from_vec(vec![d, d, q.k / q.beta_star * norm]))
        }),
        hp: Arc::new(|xp: &Vector2<f64>| 0.5 * xp.norm_squared()),
        grad_hp: Arc::new(|xp: &Vector2<f64>| *xp),
        hl: Arc::new(move |xl: &Vector| 0.5 * (xl[0] - omega).powi(2)),
        grad_hl: Arc::new(move |xl: &Vector| Vector::from_vec(vec![xl[0] - omega])),
        hp_star: 0.5 * p.beta_star * p.beta_star,
        xp_star: Vector2::zeros(),
        singular: Some(Arc::new(|x: &Vector| flux_norm(x) < FLUX_FLOOR)),
        controller: Some(Arc::new(move |x: &Vector| {
            let u = im_control(&q, x);
            Vector::from_vec(vec![u[0], u[1]])
        })),
    }))
}

pub fn im_fixed_frame(p: &ImParams) -> Result<ImSystem> {
    p.validate()?;
    let msea = im_msea_design(p)?;
    let orbit = msea.orbit().clone();
    let epd = im_epd_design(p, &orbit)?;
    Ok(ImSystem {
        params: *p,
        plant: im_plant(p),
        msea,
        epd,
        orbit,
    })
}

/// Rejects initial states at the unstable origin.
pub fn check_initial_flux(x0: &[f64]) -> Result<()> {
    if x0.len() >= 2 && x0[0].hypot(x0[1]) < FLUX_FLOOR {
        return Err(Error::invalid("initial", "initial flux at unstable origin (|x_p(0)| < 1e-6)"));
    }
    Ok(())
}

/// Rotating-frame plant `λ̇ = -Rλ + Rv`, `ω̇ = vᵀ𝕁λ`.
pub fn im_rotating_plant(p: &ImParams) -> ControlAffinePlant {
    let r = p.r;
    ControlAffinePlant::new(
        "im_rotating",
        3,
        2,
        move |x: &Vector| Vector::from_vec(vec![-r * x[0], -r * x[1], 0.0]),
        move |x: &Vector| Matrix::from_row_slice(3, 2, &[r, 0.0, 0.0, r, -x[1], x[0]]),
    )
    .expect("fixed dimensions")
}

/// `(β, ρ) = (|λ|, atan2(λ₂, λ₁))`.
pub fn polar(lambda: &Vector2<f64>) -> (f64, f64) {
    (lambda.norm(), lambda[1].atan2(lambda[0]))
}

/// Direct FOC: `v = e^{𝕁ρ}[β⋆; (k/β⋆)(ω⋆ - ω)]`.
pub fn foc_control(p: &ImParams, x: &Vector) -> Vector2<f64> {
    foc_control_with_gain(p, p.k, x)
}

fn foc_control_with_gain(p: &ImParams, k: f64, x: &Vector) -> Vector2<f64> {
    let (_, rho) = polar(&Vector2::new(x[0], x[1]));
    rotation(rho) * Vector2::new(p.beta_star, k / p.beta_star * (p.omega_star - x[2]))
}

/// Polar-coordinate field `(β̇, ρ̇, ω̇) = (-Rβ + Ri_d, (R/β)i_q, βi_q)`.
pub fn polar_field(p: &ImParams, beta: f64, i_dq: &Vector2<f64>) -> [f64; 3] {
    [-p.r * beta + p.r * i_dq[0], p.r / beta * i_dq[1], beta * i_dq[1]]
}

/// `u_msea(x) - e^{𝕁θ}v_foc(e^{-𝕁θ}x_p, ω)`.
pub fn foc_equivalence_residual(p: &ImParams, x: &Vector, theta: f64) -> Vector2<f64> {
    foc_equivalence_residual_with_gain(p, p.k, x, theta)
}

/// Same as [`foc_equivalence_residual`] with a different `k` on the FOC side.
pub fn foc_equivalence_residual_with_gain(p: &ImParams, foc_k: f64, x: &Vector, theta: f64) -> Vector2<f64> {
    let lambda = rotation(-theta) * Vector2::new(x[0], x[1]);
    let rotating = Vector::from_vec(vec![lambda[0], lambda[1], x[2]]);
    im_control(p, x) - rotation(theta) * foc_control_with_gain(p, foc_k, &rotating)
}

/// Fixed-frame state for a rotating-frame state at frame angle `θ`.
pub fn to_fixed_frame(x: &Vector, theta: f64) -> Vector {
    let psi = rotation(theta) * Vector2::new(x[0], x[1]);
    Vector::from_vec(vec![psi[0], psi[1], x[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid;
    use crate::ph::{closed_loop_field, ida_control, matching_residual};

    fn sys() -> ImSystem {
        im_fixed_frame(&ImParams::default()).unwrap()
    }

    fn states(n: usize) -> Vec<Vector> {
        grid::uniform_grid(
            &grid::SampleBox::new(vec![(-3.0, 3.0), (-3.0, 3.0), (-10.0, 10.0)]),
            n,
            grid::DEFAULT_SEED,
            |x| {
                let r = x[0].hypot(x[1]);
                r > FLUX_FLOOR && (r - 1.0).abs() > ORBIT_SHELL
            },
        )
    }

    #[test]
    fn controller_on_orbit() {
        let u = im_control(&ImParams::default(), &Vector::from_vec(vec![1.0, 0.0, 5.0]));
        assert_eq!(u, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn msea_matches_plant() {
        let s = sys();
        for x in states(1000) {
            let res = matching_residual(&s.plant, s.msea.base(), &x).unwrap();
            assert!(res.norm() < 1e-9, "{x}: {res}");
            let u = ida_control(&s.plant, s.msea.base(), &x).unwrap();
            let closed = s.msea.base().closed_form_control(&x).unwrap();
            assert!((&u - &closed).norm() < 1e-9 * (1.0 + u.norm()));
        }
    }

    #[test]
    fn epd_matches_plant_and_msea() {
        let s = sys();
        for x in states(1000) {
            let res = matching_residual(&s.plant, s.epd.base(), &x).unwrap();
            assert!(res.norm() < 1e-9);
            let a = closed_loop_field(s.msea.base(), &x).unwrap();
            let b = closed_loop_field(s.epd.base(), &x).unwrap();
            assert!((&a - &b).norm() < 1e-12 * (1.0 + a.norm()));
        }
        // matching identity at (1.2, 0, ω⋆)
        let x = Vector::from_vec(vec![1.2, 0.0, 5.0]);
        let u = ida_control(&s.plant, s.epd.base(), &x).unwrap();
        let lhs = s.plant.field(&x, &u);
        assert!((lhs - closed_loop_field(s.epd.base(), &x).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn on_orbit_rotation_speed() {
        let s = sys();
        let x = Vector::from_vec(vec![0.6, 0.8, 5.0]);
        let u = im_control(&s.params, &x);
        let f = s.plant.field(&x, &Vector::from_vec(vec![u[0], u[1]]));
        let expected = skew_j() * Vector2::new(0.6, 0.8) * 5.0;
        assert!((f[0] - expected[0]).abs() < 1e-12 && (f[1] - expected[1]).abs() < 1e-12);
        assert!(f[2].abs() < 1e-12);
    }

    #[test]
    fn foc_formula_example() {
        let p = ImParams {
            k: 2.0,
            omega_star: 5.0,
            ..ImParams::default()
        };
        let v = foc_control(&p, &Vector::from_vec(vec![0.7, 0.0, 4.5]));
        assert!((v - Vector2::new(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn foc_equivalence_on_orbit_and_random() {
        let p = ImParams::default();
        let r = foc_equivalence_residual(&p, &Vector::from_vec(vec![1.0, 0.0, 5.0]), 0.0);
        assert_eq!(r, Vector2::zeros());
        let mut rng = grid::rng(grid::DEFAULT_SEED);
        use rand::Rng;
        for _ in 0..1000 {
            let x = Vector::from_vec(vec![
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-10.0..10.0),
            ]);
            let th = rng.random_range(-10.0..10.0);
            assert!(foc_equivalence_residual(&p, &x, th).norm() < 1e-12);
        }
    }

    #[test]
    fn mismatched_gain_residual_is_linear() {
        let p = ImParams::default();
        let x = Vector::from_vec(vec![0.3, -1.1, 3.0]);
        for dk in [0.1, 0.2, 0.4] {
            let r = foc_equivalence_residual_with_gain(&p, p.k + dk, &x, 0.9).norm();
            let oracle = dk * (x[2] - p.omega_star).abs() / p.beta_star;
            assert!((r - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn polar_field_under_foc() {
        let p = ImParams::default();
        let i = Vector2::new(p.beta_star, 0.5);
        let f = polar_field(&p, 0.5, &i);
        assert!((f[0] - 0.5).abs() < 1e-15);
        assert!((f[1] - 1.0).abs() < 1e-15);
        assert!((f[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_origin_and_bad_params() {
        assert!(check_initial_flux(&[0.0, 0.0, 1.0]).unwrap_err().to_string().contains("unstable origin"));
        assert!(check_initial_flux(&[0.3, 0.1, 0.0]).is_ok());
        assert!(im_fixed_frame(&ImParams { omega_star: 0.0, ..ImParams::default() }).is_err());
        assert!(im_fixed_frame(&ImParams { r: -1.0, ..ImParams::default() }).is_err());
    }

    #[test]
    fn analytic_distance_example() {
        let s = sys();
        let d = s.orbit.distance(&Vector::from_vec(vec![2.0, 0.0, 6.0]));
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }
}
