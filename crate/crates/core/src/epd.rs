//! Energy pumping-and-damping designs: `H = H_p(x_p) + H_ℓ(x_ℓ)` with a damping
//! block whose sign follows `Φ = H_p - H_p*`.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::msea::MseaDesign;
use crate::numerics::{hessian_fd, Matrix, Vector};
use crate::orbit::{OrbitTarget, PlanarGradient, PlanarScalar};
use crate::ph::{MatrixFn, Partition, PhDesign, Predicate, VectorFn};
use crate::report::CheckResult;

pub type LScalar = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type LGradient = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Largest ball radius tried by the H5 bisection unless the design says otherwise.
pub const DEFAULT_H5_MAX_RADIUS: f64 = 4.0;

pub struct EpdParts {
    pub name: String,
    pub orbit: OrbitTarget,
    pub interconnection: MatrixFn,
    pub damping: MatrixFn,
    pub hp: PlanarScalar,
    pub grad_hp: PlanarGradient,
    pub hl: LScalar,
    pub grad_hl: LGradient,
    pub hp_star: f64,
    /// Minimizer of `H_p`.
    pub xp_star: Vector2<f64>,
    pub singular: Option<Predicate>,
    pub controller: Option<VectorFn>,
}

#[derive(Clone)]
pub struct EpdDesign {
    base: PhDesign,
    orbit: OrbitTarget,
    hp: PlanarScalar,
    grad_hp: PlanarGradient,
    hl: LScalar,
    grad_hl: LGradient,
    hp_star: f64,
    xp_star: Vector2<f64>,
    h5_max_radius: f64,
}

impl std::fmt::Debug for EpdDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpdDesign")
            .field("base", &self.base)
            .field("hp_star", &self.hp_star)
            .field("xp_star", &self.xp_star.as_slice())
            .finish()
    }
}

impl EpdDesign {
    pub fn new(parts: EpdParts) -> Self {
        let EpdParts {
            name,
            orbit,
            interconnection,
            damping,
            hp,
            grad_hp,
            hl,
            grad_hl,
            hp_star,
            xp_star,
            singular,
            controller,
        } = parts;
        let part = orbit.partition().clone();
        let n = part.n();

        let (p1, hp1, hl1) = (part.clone(), hp.clone(), hl.clone());
        let hamiltonian = move |x: &Vector| hp1(&p1.xp(x)) + hl1(&p1.xl(x));
        let (p2, ghp, ghl) = (part, grad_hp.clone(), grad_hl.clone());
        let gradient: VectorFn = Arc::new(move |x: &Vector| p2.assemble(&ghp(&p2.xp(x)), &ghl(&p2.xl(x))));
        let (j, r) = (interconnection, damping);
        let base = PhDesign::new(name, n, move |x: &Vector| j(x), move |x: &Vector| r(x), hamiltonian)
            .with_parts(Some(gradient), singular, controller);

        EpdDesign {
            base,
            orbit,
            hp,
            grad_hp,
            hl,
            grad_hl,
            hp_star,
            xp_star,
            h5_max_radius: DEFAULT_H5_MAX_RADIUS,
        }
    }

    pub fn with_h5_max_radius(mut self, r: f64) -> Self {
        self.h5_max_radius = r;
        self
    }

    pub fn base(&self) -> &PhDesign {
        &self.base
    }

    pub fn name(&self) -> &str {
        self.base.name()
    }

    pub fn orbit(&self) -> &OrbitTarget {
        &self.orbit
    }

    pub fn partition(&self) -> &Partition {
        self.orbit.partition()
    }

    pub fn hp(&self, xp: &Vector2<f64>) -> f64 {
        (self.hp)(xp)
    }

    pub fn grad_hp(&self, xp: &Vector2<f64>) -> Vector2<f64> {
        (self.grad_hp)(xp)
    }

    pub fn hl(&self, xl: &Vector) -> f64 {
        (self.hl)(xl)
    }

    pub fn grad_hl(&self, xl: &Vector) -> Vector {
        (self.grad_hl)(xl)
    }

    pub fn hp_star(&self) -> f64 {
        self.hp_star
    }

    pub fn xp_star(&self) -> Vector2<f64> {
        self.xp_star
    }

    pub fn xl_star(&self) -> &Vector {
        self.orbit.xl_star()
    }

    /// `Φ(x_p) = H_p(x_p) - H_p*`.
    pub fn phi(&self, x: &Vector) -> f64 {
        self.hp(&self.partition().xp(x)) - self.hp_star
    }

    pub fn rpp(&self, x: &Vector) -> Matrix2<f64> {
        self.partition().pp(&self.base.r(x))
    }

    pub fn rll(&self, x: &Vector) -> Matrix {
        self.partition().ll(&self.base.r(x))
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        let mut out = self.clone();
        out.base = out.base.renamed(name);
        out
    }

    /// Replaces the damping matrix, keeping everything else.
    pub fn with_damping(&self, r: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        let mut out = self.clone();
        let (grad, singular, controller) = self.base.parts();
        let inter = self.base.clone();
        let h = self.base.hamiltonian_fn();
        out.base = PhDesign::new(self.name(), self.base.n(), move |x: &Vector| inter.j(x), r, move |x: &Vector| h(x))
            .with_parts(grad, singular, controller);
        out
    }

    /// Replaces the interconnection matrix, keeping everything else.
    pub fn with_interconnection(&self, j: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        let mut out = self.clone();
        let (grad, singular, controller) = self.base.parts();
        let damp = self.base.clone();
        let h = self.base.hamiltonian_fn();
        out.base = PhDesign::new(self.name(), self.base.n(), j, move |x: &Vector| damp.r(x), move |x: &Vector| h(x))
            .with_parts(grad, singular, controller);
        out
    }
}

/// Pumping-and-damping condition: `R_pp Φ ⪰ 0` and `R_pp = 0 ⟺ Φ = 0`, with
/// `R_pp` diagonal.
pub fn pd_condition_check(design: &EpdDesign, points: &[Vector]) -> CheckResult {
    let mut check = CheckResult::new("pumping_damping");
    for x in points {
        if design.base.is_singular(x) {
            continue;
        }
        let rpp = design.rpp(x);
        let phi = design.phi(x);
        let scaled = rpp * phi;
        let worst = scaled[(0, 0)].min(scaled[(1, 1)]);
        check.observe(-worst);
        if !(worst >= -1e-12) {
            check.violate(x, worst, "R_pp * Phi is not positive semidefinite");
        }
        let off = rpp[(0, 1)].abs().max(rpp[(1, 0)].abs());
        if off > 1e-12 {
            check.violate(x, off, "R_pp is not diagonal");
        }
        let norm = rpp.norm();
        if norm < 1e-9 && !(phi.abs() < 1e-6) {
            check.violate(x, phi, "R_pp vanishes off the level set");
        }
        if phi.abs() < 1e-9 && !(norm < 1e-6) {
            check.violate(x, norm, "R_pp nonzero on the level set");
        }
    }
    check
}

/// `J₍₁,₂₎ ≠ 0` and `∇H_pᵀ J_pℓ = 0`.
pub fn check_h4(design: &EpdDesign, points: &[Vector]) -> CheckResult {
    let mut check = CheckResult::new("h4_energy_flow");
    let part = design.partition();
    let [p0, p1] = part.p_indices();
    for x in points {
        if design.base.is_singular(x) {
            continue;
        }
        let j = design.base.j(x);
        let j12 = j[(p0, p1)];
        let flow = if part.l_indices().is_empty() {
            0.0
        } else {
            let gp = design.grad_hp(&part.xp(x));
            let jpl = part.pl(&j);
            let row = jpl.transpose() * Vector::from_column_slice(gp.as_slice());
            row.amax()
        };
        check.observe(flow);
        if !(j12.abs() > 1e-9) {
            check.violate(x, j12, "J12 vanishes");
        }
        if !(flow < 1e-10) {
            check.violate(x, flow, "grad H_p^T J_pl is nonzero");
        }
    }
    check
}

fn hessian_pd(design: &EpdDesign, xp: &Vector2<f64>) -> bool {
    let hp = design.hp.clone();
    let h = hessian_fd(
        move |v: &Vector| hp(&Vector2::new(v[0], v[1])),
        &Vector::from_column_slice(xp.as_slice()),
        1.0,
    );
    let (a, b, d) = (h[(0, 0)], 0.5 * (h[(0, 1)] + h[(1, 0)]), h[(1, 1)]);
    a > 0.0 && a * d - b * b > 0.0
}

const RINGS: usize = 8;
const RING_POINTS: usize = 64;

fn ball_points(center: &Vector2<f64>, radius: f64) -> impl Iterator<Item = Vector2<f64>> + '_ {
    (1..=RINGS).flat_map(move |i| {
        let r = radius * i as f64 / RINGS as f64;
        (0..RING_POINTS).map(move |k| {
            let s = 2.0 * std::f64::consts::PI * k as f64 / RING_POINTS as f64;
            center + Vector2::new(r * s.cos(), r * s.sin())
        })
    })
}

fn pd_on_ball(design: &EpdDesign, radius: f64) -> bool {
    let c = design.xp_star;
    hessian_pd(design, &c) && ball_points(&c, radius).all(|p| hessian_pd(design, &p))
}

/// Largest `ε*` (resolution 1e-3) with a positive definite Hessian of `H_p`
/// throughout `B_ε*(x_p*)`.
pub fn h5_radius(design: &EpdDesign) -> Result<f64> {
    let (mut lo, mut hi) = (1e-3, design.h5_max_radius);
    if !pd_on_ball(design, lo) {
        return Err(Error::NoValidRadius);
    }
    if pd_on_ball(design, hi) {
        return Ok(hi);
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if pd_on_ball(design, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `∇H_p(x_p*) = 0`, `∇²H_p > 0` on `B_ε*(x_p*)` and `max_{B_ε*} H_p > H_p*`.
pub fn check_h5(design: &EpdDesign) -> CheckResult {
    let mut check = CheckResult::new("h5_local_minimum");
    let c = design.xp_star;
    let center = Vector::from_column_slice(c.as_slice());
    let g = design.grad_hp(&c).norm();
    check.observe(g);
    if !(g < 1e-8) {
        check.violate(&center, g, "grad H_p does not vanish at x_p*");
    }
    let h_min = design.hp(&c);
    if !(design.hp_star > h_min) {
        check.violate(&center, design.hp_star - h_min, "H_p* is not above min H_p");
    }
    match h5_radius(design) {
        Err(e) => check.violate(&center, f64::NAN, e.to_string()),
        Ok(eps) => {
            let max = ball_points(&c, eps).map(|p| design.hp(&p)).fold(h_min, f64::max);
            let margin = max - design.hp_star;
            check.observe(-margin);
            check = check.with_note(format!("epsilon_star = {eps:.4}, max H_p on ball = {max:.6}, H_p* = {:.6}", design.hp_star));
            if !(margin > 0.0) {
                check.violate(&center, margin, format!("max of H_p over B_eps*(x_p*) with eps* = {eps:.4} does not exceed H_p*"));
            }
        }
    }
    check
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRates {
    pub dhp: f64,
    pub dhl: f64,
    /// Rate of `V = ½Φ²`.
    pub dv: f64,
}

pub fn energy_rates(design: &EpdDesign, x: &Vector) -> EnergyRates {
    let part = design.partition();
    let gp = design.grad_hp(&part.xp(x));
    let rpp = design.rpp(x);
    let dhp = -(gp.transpose() * rpp * gp)[(0, 0)];
    let dhl = if part.l_indices().is_empty() {
        0.0
    } else {
        let gl = design.grad_hl(&part.xl(x));
        -(gl.transpose() * design.rll(x) * &gl)[(0, 0)]
    };
    EnergyRates {
        dhp,
        dhl,
        dv: design.phi(x) * dhp,
    }
}

/// Flags states where `∇H_p ∈ ker R_pp` off the level set. Isolated hits are
/// expected at turning points; a run of `persistent` consecutive flags fails.
pub fn kernel_diagnostic(design: &EpdDesign, states: &[Vector], persistent: usize) -> CheckResult {
    let mut check = CheckResult::new("damping_kernel").heuristic();
    let part = design.partition();
    let mut run = 0usize;
    for x in states {
        let gp = design.grad_hp(&part.xp(x));
        // direction test: R_pp scaled to unit norm, so a small R_pp near Φ = 0 is not a kernel hit
        let rpp = design.rpp(x);
        let scale = rpp.norm();
        let flagged = (scale == 0.0 || (rpp / scale * gp).norm() < 1e-9)
            && gp.norm() > 1e-6
            && design.phi(x).abs() > 1e-9;
        check.observe(if flagged { 1.0 } else { 0.0 });
        run = if flagged { run + 1 } else { 0 };
        if run == persistent {
            check.violate(x, run as f64, "grad H_p stays in ker R_pp off the level set");
        }
    }
    check
}

/// Rewrites an MSEA design in EPD form: `H_p = Φ`, `H_ℓ = ℋ_ℓ`, `H_p* = 0`,
/// `J_pp ← ℋ₁′ J_pp` (taken as `c(x)` through the H2 parameterization),
/// `R_pp ← ℋ₁′ R_pp`, off-diagonal blocks copied.
pub fn msea_to_epd(m: &MseaDesign, spot_checks: &[Vector]) -> Result<EpdDesign> {
    let split = m
        .split()
        .cloned()
        .ok_or_else(|| Error::DecompositionUnavailable("H0 has no H1 + H_l split".into()))?;
    let orbit = m.orbit().clone();
    let part = orbit.partition().clone();
    let base = m.base().clone();

    for x in spot_checks.iter().filter(|x| !base.is_singular(x)) {
        let r = base.r(x);
        let off = (0..r.nrows())
            .flat_map(|i| (0..r.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| r[(i, j)].abs())
            .fold(0.0, f64::max);
        if off > 1e-12 {
            return Err(Error::DecompositionUnavailable("R is not diagonal".into()));
        }
        let rpp = part.pp(&r);
        if rpp.norm() < 1e-12 {
            return Err(Error::DecompositionUnavailable("R_pp vanishes".into()));
        }
        let gphi = orbit.grad_phi_p(&part.xp(x));
        let flow = part.pl(&base.j(x)).transpose() * Vector::from_column_slice(gphi.as_slice());
        if flow.amax() > 1e-10 {
            return Err(Error::DecompositionUnavailable("grad Phi^T J_pl is nonzero".into()));
        }
    }

    let (p1, b1, c1) = (part.clone(), base.clone(), m.c_fn());
    let j_bold = move |x: &Vector| {
        let j = b1.j(x);
        let c = c1(x);
        let pp = Matrix2::new(0.0, c, -c, 0.0);
        p1.from_blocks(&pp, &p1.pl(&j), &p1.lp(&j), &p1.ll(&j))
    };
    let (o2, s2, p2, b2) = (orbit.clone(), split.clone(), part.clone(), base.clone());
    let r_bold = move |x: &Vector| {
        let r = b2.r(x);
        let scale = (s2.h1_prime)(o2.phi(x));
        p2.from_blocks(&(p2.pp(&r) * scale), &p2.pl(&r), &p2.lp(&r), &p2.ll(&r))
    };
    let (jb, rb) = (j_bold.clone(), r_bold.clone());
    let singular: Predicate = Arc::new(move |x: &Vector| {
        !(jb(x).iter().all(|v| v.is_finite()) && rb(x).iter().all(|v| v.is_finite()))
    });
    let (_, _, controller) = base.parts();
    let centroid = orbit.samples().iter().fold(Vector2::zeros(), |a, s| a + s) / orbit.samples().len() as f64;
    let (hl, ghl) = (split.hl.clone(), split.grad_hl.clone());

    Ok(EpdDesign::new(EpdParts {
        name: format!("{}_as_epd", m.name()),
        orbit: orbit.clone(),
        interconnection: Arc::new(j_bold),
        damping: Arc::new(r_bold),
        hp: orbit.phi_fn(),
        grad_hp: orbit.grad_phi_fn(),
        hl: Arc::new(move |xl: &Vector| hl(xl)),
        grad_hl: Arc::new(move |xl: &Vector| ghl(xl)),
        hp_star: 0.0,
        xp_star: centroid,
        singular: Some(singular),
        controller,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid;
    use crate::plants::im::{im_fixed_frame, ImParams};
    use crate::plants::pendulum::{pendulum_local, PendulumParams};
    use crate::ph::{closed_loop_field, ida_control};

    fn im() -> crate::plants::im::ImSystem {
        im_fixed_frame(&ImParams {
            r: 1.0,
            beta_star: 1.0,
            omega_star: 5.0,
            k: 1.0,
        })
        .unwrap()
    }

    fn pendulum_grid(n: usize) -> Vec<Vector> {
        let third = std::f64::consts::FRAC_PI_3;
        grid::uniform_grid(
            &grid::SampleBox::new(vec![(-third, third), (-2.0, 2.0)]),
            n,
            grid::DEFAULT_SEED,
            |_| true,
        )
    }

    #[test]
    fn pendulum_pd_condition_holds() {
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        let check = pd_condition_check(&sys.epd, &pendulum_grid(1000));
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn flipped_damping_violates_sign_everywhere_off_level_set() {
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        let d = sys.epd.clone();
        let flipped = sys.epd.with_damping(move |x: &Vector| {
            let mut r = Matrix::zeros(2, 2);
            r[(1, 1)] = -d.phi(x);
            r
        });
        let pts = pendulum_grid(200);
        let check = pd_condition_check(&flipped, &pts);
        let off = pts.iter().filter(|x| flipped.phi(x).abs() > 1e-9).count();
        let sign = check.violations.iter().filter(|v| v.detail.contains("semidefinite")).count();
        assert_eq!(check.violation_count, off);
        assert_eq!(sign, off.min(crate::report::MAX_LISTED_VIOLATIONS));
    }

    #[test]
    fn squared_damping_fails_only_where_phi_negative() {
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        let d = sys.epd.clone();
        let squared = sys.epd.with_damping(move |x: &Vector| {
            let mut r = Matrix::zeros(2, 2);
            r[(1, 1)] = d.phi(x).powi(2);
            r
        });
        let pts = pendulum_grid(300);
        let check = pd_condition_check(&squared, &pts);
        assert!(!check.passed);
        for v in &check.violations {
            let x = Vector::from_vec(v.point.clone());
            assert!(squared.phi(&x) < 0.0);
            assert!(v.detail.contains("semidefinite"));
        }
        let negative = pts.iter().filter(|x| squared.phi(x) < -1e-4).count();
        assert!(check.violation_count >= negative);
    }

    #[test]
    fn h4_passes_for_pendulum_and_im() {
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        assert!(check_h4(&sys.epd, &pendulum_grid(200)).passed);

        let im = im();
        let pts = grid::uniform_grid(
            &grid::SampleBox::new(vec![(-3.0, 3.0), (-3.0, 3.0), (-8.0, 8.0)]),
            500,
            grid::DEFAULT_SEED,
            |x| x.rows(0, 2).norm() > 1e-3,
        );
        let check = check_h4(&im.epd, &pts);
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn h4_detects_energy_leak() {
        let sys = im();
        let base = sys.epd.clone();
        let leaky = sys.epd.with_interconnection(move |x: &Vector| {
            let mut j = base.base().j(x);
            j[(0, 2)] = 1.0;
            j[(2, 0)] = -1.0;
            j[(1, 2)] = 0.0;
            j[(2, 1)] = 0.0;
            j
        });
        let x = Vector::from_vec(vec![0.7, -0.2, 1.0]);
        let check = check_h4(&leaky, std::slice::from_ref(&x));
        assert!(!check.passed);
        assert!((check.violations[0].value - 0.7).abs() < 1e-12);
        let on_axis = Vector::from_vec(vec![0.0, 0.9, 1.0]);
        assert!(check_h4(&leaky, &[on_axis]).passed);
    }

    #[test]
    fn quadratic_hp_h5_radius_and_margin() {
        let sys = im();
        let check = check_h5(&sys.epd);
        assert!(check.passed, "{check:?}");
        assert!(h5_radius(&sys.epd).unwrap() > 1.0);
        // ε* capped just below β⋆: the ball never reaches the level
        let capped = sys.epd.clone().with_h5_max_radius(0.99);
        assert!(!check_h5(&capped).passed);
    }

    #[test]
    fn h5_rejects_level_below_minimum() {
        let sys = im();
        let mut d = sys.epd.clone();
        d.hp_star = -1.0;
        let check = check_h5(&d);
        assert!(check.violations.iter().any(|v| v.detail.contains("min H_p")));
    }

    #[test]
    fn pendulum_hessian_radius_matches_analytic_bound() {
        // ∂²H_p/∂θ² = 2cos2θ - cosθ changes sign at cosθ = (1 + √33)/8
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        let bound = ((1.0 + 33f64.sqrt()) / 8.0).acos();
        let eps = h5_radius(&sys.epd).unwrap();
        assert!((eps - bound).abs() < 2e-3, "{eps} vs {bound}");
    }

    #[test]
    fn energy_rates_signs() {
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        let x = Vector::from_vec(vec![0.2, 0.1]);
        assert!(sys.epd.phi(&x) < 0.0);
        let r = energy_rates(&sys.epd, &x);
        assert!(r.dhp > 0.0);
        assert!(r.dv <= 0.0);
        assert_eq!(r.dhl, 0.0);
        // oracle: -γ cos²θ Φ ω²
        let (th, w) = (0.2f64, 0.1f64);
        let oracle = -5.0 * th.cos().powi(2) * sys.epd.phi(&x) * w * w;
        assert!((r.dhp - oracle).abs() < 1e-15);

        let zero = energy_rates(&sys.epd, &Vector::from_vec(vec![0.0, 0.0]));
        assert_eq!((zero.dhp, zero.dhl, zero.dv), (0.0, 0.0, 0.0));
    }

    #[test]
    fn im_speed_energy_never_increases() {
        let sys = im();
        let pts = grid::uniform_grid(
            &grid::SampleBox::new(vec![(-3.0, 3.0), (-3.0, 3.0), (-8.0, 8.0)]),
            10_000,
            grid::DEFAULT_SEED,
            |x| x.rows(0, 2).norm() > 1e-3,
        );
        assert!(pts.iter().all(|x| energy_rates(&sys.epd, x).dhl <= 0.0));
        assert!(pts.iter().all(|x| energy_rates(&sys.epd, x).dv <= 0.0));
    }

    #[test]
    fn msea_to_epd_preserves_field_and_control() {
        let sys = im();
        let pts = grid::uniform_grid(
            &grid::SampleBox::new(vec![(-3.0, 3.0), (-3.0, 3.0), (-8.0, 8.0)]),
            1000,
            grid::DEFAULT_SEED,
            |x| x.rows(0, 2).norm() > 1e-3,
        );
        let epd = msea_to_epd(&sys.msea, &pts[..50]).unwrap();
        assert_eq!(epd.hp_star(), 0.0);
        for x in &pts {
            if sys.msea.base().is_singular(x) {
                let a = sys.msea.regularized_field(x);
                let b = closed_loop_field(epd.base(), x).unwrap();
                assert!((a - b).norm() < 1e-9);
                continue;
            }
            let a = closed_loop_field(sys.msea.base(), x).unwrap();
            let b = closed_loop_field(epd.base(), x).unwrap();
            assert!((&a - &b).norm() <= 1e-12 * (1.0 + a.norm()), "{x}");
            let ua = ida_control(&sys.plant, sys.msea.base(), x).unwrap();
            let ub = ida_control(&sys.plant, epd.base(), x).unwrap();
            assert!((ua - ub).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn msea_to_epd_damping_is_phi_scaled() {
        let sys = im();
        let epd = msea_to_epd(&sys.msea, &[]).unwrap();
        let x = Vector::from_vec(vec![2.0, 0.0, 1.0]);
        let phi = 1.0;
        assert!((epd.rpp(&x) - Matrix2::identity() * phi).norm() < 1e-12);
        assert!(pd_condition_check(&epd, &[x]).passed);
    }

    #[test]
    fn msea_to_epd_needs_split() {
        let sys = im();
        let bare = crate::msea::MseaDesign::new(crate::msea::MseaParts {
            name: "bare".into(),
            orbit: sys.orbit.clone(),
            interconnection: Arc::new(|_x: &Vector| Matrix::zeros(3, 3)),
            damping: Arc::new(|_x: &Vector| Matrix::identity(3, 3)),
            h0: Arc::new(|x0, _| 0.5 * x0 * x0),
            grad_h0: Arc::new(|x0, _| (x0, Vector::zeros(1))),
            c: Arc::new(|_| 1.0),
            singular: None,
            controller: None,
            split: None,
        });
        assert!(matches!(msea_to_epd(&bare, &[]), Err(Error::DecompositionUnavailable(_))));
    }

    #[test]
    fn kernel_diagnostic_tolerates_isolated_hits() {
        let sys = pendulum_local(&PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4)).unwrap();
        let turning = Vector::from_vec(vec![0.3, 0.0]);
        let moving = Vector::from_vec(vec![0.3, 0.2]);
        let states = vec![moving.clone(), turning.clone(), moving.clone()];
        assert!(kernel_diagnostic(&sys.epd, &states, 10).passed);
        let stuck = vec![turning; 12];
        assert!(!kernel_diagnostic(&sys.epd, &stuck, 10).passed);
        // just off the level set R_pp is tiny but grad H_p is not in its kernel
        let th: f64 = 0.3;
        let w = (2.0 * (sys.epd.hp_star() + 5e-9 + (th.cos() - 0.5).powi(2))).sqrt();
        let near = vec![Vector::from_vec(vec![th, w]); 12];
        assert!((sys.epd.phi(&near[0]) - 5e-9).abs() < 1e-12);
        assert!(kernel_diagnostic(&sys.epd, &near, 10).passed);
    }
}
