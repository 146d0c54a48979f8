//! Mexican-sombrero energy assignment: `H(x) = H₀(Φ(x_p), x_ℓ)` with its
//! minimum on the target orbit.

use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::orbit::OrbitTarget;
use crate::ph::{MatrixFn, PhDesign, Predicate, ScalarFn, VectorFn};
use crate::report::CheckResult;

pub type H0Fn = Arc<dyn Fn(f64, &Vector) -> f64 + Send + Sync>;
/// `(∂H₀/∂x₀, ∇_{x_ℓ}H₀)`.
pub type H0GradFn = Arc<dyn Fn(f64, &Vector) -> (f64, Vector) + Send + Sync>;

/// `H₀(x₀, x_ℓ) = H₁(x₀) + H_ℓ(x_ℓ)`, needed for the MSEA → EPD map.
#[derive(Clone)]
pub struct H0Split {
    pub h1: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub h1_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub hl: Arc<dyn Fn(&Vector) -> f64 + Send + Sync>,
    pub grad_hl: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

/// Ingredients of an MSEA design before composition.
pub struct MseaParts {
    pub name: String,
    pub orbit: OrbitTarget,
    pub interconnection: MatrixFn,
    pub damping: MatrixFn,
    pub h0: H0Fn,
    pub grad_h0: H0GradFn,
    /// The H2 parameterization `c(x)` of `J₍₁,₂₎`.
    pub c: ScalarFn,
    pub singular: Option<Predicate>,
    pub controller: Option<VectorFn>,
    pub split: Option<H0Split>,
}

#[derive(Clone)]
pub struct MseaDesign {
    base: PhDesign,
    orbit: OrbitTarget,
    h0: H0Fn,
    grad_h0: H0GradFn,
    c: ScalarFn,
    split: Option<H0Split>,
}

impl std::fmt::Debug for MseaDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MseaDesign")
            .field("base", &self.base)
            .field("orbit", &self.orbit)
            .field("split", &self.split.is_some())
            .finish()
    }
}

impl MseaDesign {
    pub fn new(parts: MseaParts) -> Self {
        let MseaParts {
            name,
            orbit,
            interconnection,
            damping,
            h0,
            grad_h0,
            c,
            singular,
            controller,
            split,
        } = parts;
        let n = orbit.partition().n();

        let (o1, h) = (orbit.clone(), h0.clone());
        let hamiltonian = move |x: &Vector| {
            let part = o1.partition();
            h(o1.phi_p(&part.xp(x)), &part.xl(x))
        };
        let (o2, gh) = (orbit.clone(), grad_h0.clone());
        let gradient: VectorFn = Arc::new(move |x: &Vector| chain_rule(&o2, &*gh, x));

        let (j, r) = (interconnection.clone(), damping.clone());
        let base = PhDesign::new(name, n, move |x: &Vector| j(x), move |x: &Vector| r(x), hamiltonian)
            .with_parts(Some(gradient), singular, controller);

        MseaDesign {
            base,
            orbit,
            h0,
            grad_h0,
            c,
            split,
        }
    }

    pub fn base(&self) -> &PhDesign {
        &self.base
    }

    pub fn orbit(&self) -> &OrbitTarget {
        &self.orbit
    }

    pub fn name(&self) -> &str {
        self.base.name()
    }

    pub fn c(&self, x: &Vector) -> f64 {
        (self.c)(x)
    }

    pub fn c_fn(&self) -> ScalarFn {
        self.c.clone()
    }

    pub fn h0(&self, x0: f64, xl: &Vector) -> f64 {
        (self.h0)(x0, xl)
    }

    pub fn grad_h0(&self, x0: f64, xl: &Vector) -> (f64, Vector) {
        (self.grad_h0)(x0, xl)
    }

    pub fn split(&self) -> Option<&H0Split> {
        self.split.as_ref()
    }

    /// Replaces the interconnection matrix, keeping everything else. Used to
    /// build negative controls.
    pub fn with_interconnection(&self, j: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        let mut out = self.clone();
        let (grad, singular, controller) = self.base.parts();
        let damping = self.base.clone();
        out.base = PhDesign::new(
            self.base.name(),
            self.base.n(),
            j,
            move |x: &Vector| damping.r(x),
            {
                let h = self.base.hamiltonian_fn();
                move |x: &Vector| h(x)
            },
        )
        .with_parts(grad, singular, controller);
        out
    }

    /// Replaces the damping matrix, keeping everything else.
    pub fn with_damping(&self, r: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        let mut out = self.clone();
        let (grad, singular, controller) = self.base.parts();
        let inter = self.base.clone();
        out.base = PhDesign::new(
            self.base.name(),
            self.base.n(),
            move |x: &Vector| inter.j(x),
            r,
            {
                let h = self.base.hamiltonian_fn();
                move |x: &Vector| h(x)
            },
        )
        .with_parts(grad, singular, controller);
        out
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        let mut out = self.clone();
        out.base = out.base.renamed(name);
        out
    }

    /// `[J - R]∇H` with the `J_pp ∇_p H` block evaluated in the product form
    /// `[0 c; -c 0]∇Φ`, which stays finite on the orbit.
    pub fn regularized_field(&self, x: &Vector) -> Vector {
        let part = self.orbit.partition();
        let [p0, p1] = part.p_indices();
        let mut j = self.base.j(x);
        j[(p0, p1)] = 0.0;
        j[(p1, p0)] = 0.0;
        j[(p0, p0)] = 0.0;
        j[(p1, p1)] = 0.0;
        let grad = self.base.grad_h(x);
        let mut out = (j - self.base.r(x)) * &grad;
        let gp = self.orbit.grad_phi_p(&part.xp(x));
        let c = self.c(x);
        out[p0] += c * gp[1];
        out[p1] -= c * gp[0];
        out
    }
}

fn chain_rule(orbit: &OrbitTarget, grad_h0: &(dyn Fn(f64, &Vector) -> (f64, Vector) + Send + Sync), x: &Vector) -> Vector {
    let part = orbit.partition();
    let xp = part.xp(x);
    let (d0, dl) = grad_h0(orbit.phi_p(&xp), &part.xl(x));
    let gp = orbit.grad_phi_p(&xp) * d0;
    part.assemble(&gp, &dl)
}

/// `(H(x), ∇H(x))` through `H₀(Φ(x_p), x_ℓ)` and the chain rule.
pub fn compose_hamiltonian(design: &MseaDesign, x: &Vector) -> (f64, Vector) {
    (design.base.h(x), design.base.grad_h(x))
}

/// Shell points around `𝒜` at orbit distance in `[r_min, r_max]`, outside the
/// design's singular set.
pub fn shell_points(design: &MseaDesign, count: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<Vector> {
    design
        .orbit()
        .tube_points(count, r_min, r_max, seed, |x| !design.base.is_singular(x))
}

/// Checks the H2 parameterization `J₍₁,₂₎·∂H₀/∂x₀ = c(x)` on shells
/// `‖x‖_𝒜 ∈ [0.05, 0.5]` and `0 < |c| < ∞` on the sampled orbit.
pub fn check_h2(design: &MseaDesign, count: usize, seed: u64) -> CheckResult {
    let mut check = CheckResult::new("h2_interconnection");
    let orbit = design.orbit();
    let part = orbit.partition();
    let [p0, p1] = part.p_indices();

    for x in shell_points(design, count, 0.05, 0.5, seed) {
        let j12 = design.base.j(&x)[(p0, p1)];
        let (d0, _) = design.grad_h0(orbit.phi(&x), &part.xl(&x));
        let c = design.c(&x);
        let residual = (j12 * d0 - c).abs();
        check.observe(residual);
        if !(residual <= 1e-9) {
            check.violate(&x, residual, "J12 * dH0/dx0 != c(x)");
        }
    }
    for x in orbit.orbit_points() {
        let c = design.c(&x);
        check.observe(0.0);
        if !c.is_finite() || c.abs() <= 1e-9 {
            check.violate(&x, c, "c(x) must satisfy 0 < |c| < inf on the orbit");
        }
    }
    check
}

/// Residual dynamics on the orbit.
#[derive(Debug, Clone)]
pub struct OnOrbitField {
    pub field: Vector,
    pub one_norm: f64,
    /// The field vanishes: the point is an equilibrium inside `𝒜`.
    pub equilibrium: bool,
}

/// `ẋ_p = [0 c; -c 0]∇Φ`, `ẋ_ℓ = 0` at a point of `𝒜`.
pub fn on_orbit_residual_field(design: &MseaDesign, x: &Vector) -> Result<OnOrbitField> {
    let orbit = design.orbit();
    let part = orbit.partition();
    let phi = orbit.phi(x).abs();
    let ell = (part.xl(x) - orbit.xl_star()).norm();
    if phi > 1e-6 || ell > 1e-6 {
        return Err(Error::OffOrbit { phi, ell });
    }
    let c = design.c(x);
    let g = orbit.grad_phi_p(&part.xp(x));
    let xp_dot = Vector2::new(c * g[1], -c * g[0]);
    let field = part.assemble(&xp_dot, &Vector::zeros(part.l_indices().len()));
    let one_norm = field.lp_norm(1);
    Ok(OnOrbitField {
        field,
        one_norm,
        equilibrium: !(one_norm > 1e-12),
    })
}

/// Every orbit sample must carry a non-vanishing residual field.
pub fn check_orbit_nonvanishing(design: &MseaDesign) -> CheckResult {
    let mut check = CheckResult::new("orbit_field_nonvanishing");
    for x in design.orbit().orbit_points() {
        match on_orbit_residual_field(design, &x) {
            Ok(f) => {
                check.observe(-f.one_norm);
                if f.equilibrium {
                    check.violate(&x, f.one_norm, "equilibrium on the orbit");
                }
            }
            Err(e) => check.violate(&x, f64::NAN, e.to_string()),
        }
    }
    check
}

/// `∇H = 0` at 20 orbit points and `H > H|_𝒜` at `count` tube points with
/// `0 < ‖x‖_𝒜 < radius`.
pub fn check_minimum(design: &MseaDesign, count: usize, radius: f64, seed: u64) -> CheckResult {
    let mut check = CheckResult::new("minimum_on_orbit");
    let orbit = design.orbit();
    let h_orbit = design.h0(0.0, orbit.xl_star());
    let points: Vec<Vector> = orbit.orbit_points().collect();
    let stride = (points.len() / 20).max(1);
    for x in points.iter().step_by(stride).take(20) {
        let g = design.base.grad_h(x).norm();
        check.observe(g);
        if g > 1e-9 {
            check.violate(x, g, "gradient of H does not vanish on the orbit");
        }
    }
    for x in shell_points(design, count, 1e-3, radius, seed) {
        let excess = design.base.h(&x) - h_orbit;
        check.observe(-excess);
        if !(excess > 0.0) {
            check.violate(&x, excess, "H not above its orbit value inside the tube");
        }
    }
    check
}

/// Closedness and simplicity of the sampled curve.
pub fn check_jordan(orbit: &OrbitTarget) -> CheckResult {
    let mut check = CheckResult::new("jordan_curve");
    check.checked = orbit.samples().len();
    if let Some(defect) = orbit.jordan_defect() {
        check.fail(defect);
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid;
    use crate::numerics::grad_fd;
    use crate::plants::im::{im_fixed_frame, im_msea_design, ImParams};

    fn params() -> ImParams {
        ImParams {
            r: 1.0,
            beta_star: 1.0,
            omega_star: 5.0,
            k: 1.0,
        }
    }

    #[test]
    fn im_hamiltonian_vanishes_on_orbit() {
        let sys = im_fixed_frame(&params()).unwrap();
        let x = Vector::from_vec(vec![0.6, 0.8, 5.0]);
        let (h, g) = compose_hamiltonian(&sys.msea, &x);
        assert!(h.abs() < 1e-15);
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn im_hamiltonian_known_value() {
        let sys = im_fixed_frame(&params()).unwrap();
        let (h, _) = compose_hamiltonian(&sys.msea, &Vector::from_vec(vec![3.0, 4.0, 5.0]));
        assert!((h - 8.0).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let sys = im_fixed_frame(&params()).unwrap();
        let base = sys.msea.base().clone();
        let pts = grid::uniform_grid(
            &grid::SampleBox::new(vec![(-3.0, 3.0), (-3.0, 3.0), (-8.0, 8.0)]),
            100,
            grid::DEFAULT_SEED,
            |x| x.rows(0, 2).norm() > 0.1,
        );
        for x in pts {
            let (_, g) = compose_hamiltonian(&sys.msea, &x);
            let b = base.clone();
            let fd = grad_fd(move |y| b.h(y), &x, 1.0);
            assert!((g - fd).norm() < 1e-5);
        }
    }

    #[test]
    fn h2_passes_for_im() {
        let sys = im_fixed_frame(&params()).unwrap();
        let check = check_h2(&sys.msea, 500, grid::DEFAULT_SEED);
        assert!(check.passed, "{check:?}");
        // c on the orbit is -β⋆ω⋆
        let x = Vector::from_vec(vec![1.0, 0.0, 5.0]);
        assert!((sys.msea.c(&x) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn h2_fails_when_speed_reference_is_zero() {
        let p = ImParams { omega_star: 0.0, ..params() };
        let design = im_msea_design(&p).unwrap();
        let check = check_h2(&design, 100, grid::DEFAULT_SEED);
        assert!(!check.passed);
        assert!(check.violations.iter().any(|v| v.detail.contains("0 < |c|")));
    }

    #[test]
    fn h2_detects_doubled_interconnection() {
        let sys = im_fixed_frame(&params()).unwrap();
        let base = sys.msea.base().clone();
        let doubled = sys.msea.with_interconnection(move |x: &Vector| {
            let mut j = base.j(x);
            j[(0, 1)] *= 2.0;
            j[(1, 0)] *= 2.0;
            j
        });
        let check = check_h2(&doubled, 200, grid::DEFAULT_SEED);
        assert!(!check.passed);
        // residual = |2c - c| = |c|
        for v in &check.violations {
            let x = Vector::from_vec(v.point.clone());
            assert!((v.value - doubled.c(&x).abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn on_orbit_field_rotates_flux() {
        let sys = im_fixed_frame(&params()).unwrap();
        let x = Vector::from_vec(vec![1.0, 0.0, 5.0]);
        let f = on_orbit_residual_field(&sys.msea, &x).unwrap();
        assert!((f.field[0]).abs() < 1e-15);
        assert!((f.field[1] - 5.0).abs() < 1e-12);
        assert_eq!(f.field[2], 0.0);
        assert!((f.one_norm - 5.0).abs() < 1e-12);
        assert!(!f.equilibrium);
        // agrees with the plant-side closed loop
        let u = sys.msea.base().closed_form_control(&x).unwrap();
        let plant_field = sys.plant.field(&x, &u);
        assert!((plant_field - &f.field).norm() < 1e-12);
    }

    #[test]
    fn on_orbit_field_rejects_off_orbit_points() {
        let sys = im_fixed_frame(&params()).unwrap();
        let x = Vector::from_vec(vec![1.1, 0.0, 5.0]);
        assert!(matches!(on_orbit_residual_field(&sys.msea, &x), Err(Error::OffOrbit { .. })));
    }

    #[test]
    fn zero_c_is_flagged_as_equilibrium() {
        let p = ImParams { omega_star: 0.0, ..params() };
        let design = im_msea_design(&p).unwrap();
        let f = on_orbit_residual_field(&design, &Vector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert!(f.equilibrium);
        assert_eq!(f.one_norm, 0.0);
        assert!(!check_orbit_nonvanishing(&design).passed);
    }

    #[test]
    fn minimum_condition_holds_for_im() {
        let sys = im_fixed_frame(&params()).unwrap();
        let check = check_minimum(&sys.msea, 1000, 0.5, grid::DEFAULT_SEED);
        assert!(check.passed, "{check:?}");
        assert!(check.checked >= 1000);
    }

    #[test]
    fn regularized_field_matches_factored_form_off_orbit() {
        let sys = im_fixed_frame(&params()).unwrap();
        let x = Vector::from_vec(vec![1.7, -0.4, 2.0]);
        let direct = crate::ph::closed_loop_field(sys.msea.base(), &x).unwrap();
        assert!((direct - sys.msea.regularized_field(&x)).norm() < 1e-12);
        // and stays finite exactly on the orbit
        let on = Vector::from_vec(vec![0.0, 1.0, 5.0]);
        let f = sys.msea.regularized_field(&on);
        assert!(crate::numerics::is_finite(&f));
    }
}
