//! Control-affine plants, port-Hamiltonian target designs, and the IDA-PBC
//! matching machinery tying them together.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::numerics::{grad_fd, left_annihilator, pseudo_inverse, wrap_angle, Matrix, Vector};

pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// Open-loop system `ẋ = f(x) + g(x)u`.
#[derive(Clone)]
pub struct ControlAffinePlant {
    name: String,
    n: usize,
    m: usize,
    drift: VectorFn,
    input: MatrixFn,
    angles: Vec<usize>,
}

impl ControlAffinePlant {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        drift: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        input: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::Dimension(format!(
                "input dimension {m} must satisfy 1 <= m <= n = {n}"
            )));
        }
        Ok(ControlAffinePlant {
            name: name.into(),
            n,
            m,
            drift: Arc::new(drift),
            input: Arc::new(input),
            angles: Vec::new(),
        })
    }

    /// Marks coordinates that live on the circle; they are wrapped to (-π, π].
    pub fn with_angles(mut self, angles: Vec<usize>) -> Self {
        self.angles = angles;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn angles(&self) -> &[usize] {
        &self.angles
    }

    pub fn f(&self, x: &Vector) -> Vector {
        (self.drift)(x)
    }

    pub fn g(&self, x: &Vector) -> Matrix {
        (self.input)(x)
    }

    /// Open-loop field `f(x) + g(x)u`.
    pub fn field(&self, x: &Vector, u: &Vector) -> Vector {
        self.f(x) + self.g(x) * u
    }

    pub fn wrap(&self, x: &mut Vector) {
        for &i in &self.angles {
            x[i] = wrap_angle(x[i]);
        }
    }

    pub fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "plant `{}` expects a state of dimension {}, got {}",
                self.name,
                self.n,
                x.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for ControlAffinePlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffinePlant")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("angles", &self.angles)
            .finish()
    }
}

/// Target closed loop `ẋ = [J(x) - R(x)]∇H(x)`.
#[derive(Clone)]
pub struct PhDesign {
    name: String,
    n: usize,
    interconnection: MatrixFn,
    damping: MatrixFn,
    hamiltonian: ScalarFn,
    gradient: Option<VectorFn>,
    singular: Option<Predicate>,
    controller: Option<VectorFn>,
}

impl PhDesign {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        interconnection: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        damping: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        hamiltonian: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhDesign {
            name: name.into(),
            n,
            interconnection: Arc::new(interconnection),
            damping: Arc::new(damping),
            hamiltonian: Arc::new(hamiltonian),
            gradient: None,
            singular: None,
            controller: None,
        }
    }

    /// Registers an analytic gradient; without one, central differences are used.
    pub fn with_gradient(mut self, grad: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(grad));
        self
    }

    /// Points where `J` must not be evaluated directly.
    pub fn with_singular_set(mut self, pred: impl Fn(&Vector) -> bool + Send + Sync + 'static) -> Self {
        self.singular = Some(Arc::new(pred));
        self
    }

    /// Registers a closed-form control law valid everywhere the plant is defined.
    pub fn with_controller(mut self, u: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.controller = Some(Arc::new(u));
        self
    }

    pub(crate) fn with_parts(
        mut self,
        gradient: Option<VectorFn>,
        singular: Option<Predicate>,
        controller: Option<VectorFn>,
    ) -> Self {
        self.gradient = gradient;
        self.singular = singular;
        self.controller = controller;
        self
    }

    pub(crate) fn parts(&self) -> (Option<VectorFn>, Option<Predicate>, Option<VectorFn>) {
        (
            self.gradient.clone(),
            self.singular.clone(),
            self.controller.clone(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self, x: &Vector) -> Matrix {
        (self.interconnection)(x)
    }

    pub fn r(&self, x: &Vector) -> Matrix {
        (self.damping)(x)
    }

    pub fn h(&self, x: &Vector) -> f64 {
        (self.hamiltonian)(x)
    }

    pub fn grad_h(&self, x: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(x),
            None => {
                let h = self.hamiltonian.clone();
                grad_fd(move |y| h(y), x, 1.0)
            }
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn is_singular(&self, x: &Vector) -> bool {
        self.singular.as_ref().is_some_and(|p| p(x))
    }

    pub fn closed_form_control(&self, x: &Vector) -> Option<Vector> {
        self.controller.as_ref().map(|u| u(x))
    }

    pub fn hamiltonian_fn(&self) -> ScalarFn {
        self.hamiltonian.clone()
    }

    fn ensure_regular(&self, x: &Vector) -> Result<()> {
        if self.is_singular(x) {
            return Err(Error::SingularEvaluation {
                design: self.name.clone(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for PhDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhDesign")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("closed_form_controller", &self.controller.is_some())
            .finish()
    }
}

/// Split of the state into the planar oscillating pair `x_p` and the rest `x_ℓ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    p: [usize; 2],
    l: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, p: [usize; 2]) -> Result<Self> {
        if p[0] == p[1] || p[0] >= n || p[1] >= n {
            return Err(Error::invalid(
                "partition",
                format!("p indices {p:?} must be distinct and below n = {n}"),
            ));
        }
        let l = (0..n).filter(|i| !p.contains(i)).collect();
        Ok(Partition { p, l })
    }

    /// `x_p` is the first two coordinates.
    pub fn leading(n: usize) -> Result<Self> {
        Partition::new(n, [0, 1])
    }

    pub fn p_indices(&self) -> [usize; 2] {
        self.p
    }

    pub fn l_indices(&self) -> &[usize] {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.l.len() + 2
    }

    pub fn xp(&self, x: &Vector) -> Vector2<f64> {
        Vector2::new(x[self.p[0]], x[self.p[1]])
    }

    pub fn xl(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.l.len(), self.l.iter().map(|&i| x[i]))
    }

    pub fn assemble(&self, xp: &Vector2<f64>, xl: &Vector) -> Vector {
        let mut x = Vector::zeros(self.n());
        x[self.p[0]] = xp[0];
        x[self.p[1]] = xp[1];
        for (k, &i) in self.l.iter().enumerate() {
            x[i] = xl[k];
        }
        x
    }

    pub fn pp(&self, a: &Matrix) -> Matrix2<f64> {
        Matrix2::from_fn(|r, c| a[(self.p[r], self.p[c])])
    }

    pub fn pl(&self, a: &Matrix) -> Matrix {
        Matrix::from_fn(2, self.l.len(), |r, c| a[(self.p[r], self.l[c])])
    }

    pub fn lp(&self, a: &Matrix) -> Matrix {
        Matrix::from_fn(self.l.len(), 2, |r, c| a[(self.l[r], self.p[c])])
    }

    pub fn ll(&self, a: &Matrix) -> Matrix {
        Matrix::from_fn(self.l.len(), self.l.len(), |r, c| a[(self.l[r], self.l[c])])
    }

    /// Reassembles a full matrix from its four blocks.
    pub fn from_blocks(&self, pp: &Matrix2<f64>, pl: &Matrix, lp: &Matrix, ll: &Matrix) -> Matrix {
        let n = self.n();
        let mut a = Matrix::zeros(n, n);
        for r in 0..2 {
            for c in 0..2 {
                a[(self.p[r], self.p[c])] = pp[(r, c)];
            }
            for (c, &lc) in self.l.iter().enumerate() {
                a[(self.p[r], lc)] = pl[(r, c)];
                a[(lc, self.p[r])] = lp[(c, r)];
            }
        }
        for (r, &lr) in self.l.iter().enumerate() {
            for (c, &lc) in self.l.iter().enumerate() {
                a[(lr, lc)] = ll[(r, c)];
            }
        }
        a
    }
}

/// `[J(x) - R(x)]∇H(x)`.
pub fn closed_loop_field(design: &PhDesign, x: &Vector) -> Result<Vector> {
    design.ensure_regular(x)?;
    Ok((design.j(x) - design.r(x)) * design.grad_h(x))
}

/// `g⊥(x)·(f(x) - [J - R]∇H)`, empty for fully actuated plants.
pub fn matching_residual(plant: &ControlAffinePlant, design: &PhDesign, x: &Vector) -> Result<Vector> {
    plant.check_dim(x)?;
    let target = closed_loop_field(design, x)?;
    if plant.m() == plant.n() {
        crate::numerics::check_full_column_rank(&plant.g(x))?;
        return Ok(Vector::zeros(0));
    }
    let annihilator = left_annihilator(&plant.g(x))?;
    Ok(annihilator * (plant.f(x) - target))
}

/// Generic IDA-PBC law `g†([J - R]∇H - f)`.
///
/// Inside the design's singular set the registered closed-form controller is
/// returned instead; without one this is a [`Error::SingularEvaluation`].
pub fn ida_control(plant: &ControlAffinePlant, design: &PhDesign, x: &Vector) -> Result<Vector> {
    plant.check_dim(x)?;
    if design.is_singular(x) {
        return design
            .closed_form_control(x)
            .ok_or_else(|| Error::SingularEvaluation {
                design: design.name().to_string(),
            });
    }
    let target = closed_loop_field(design, x)?;
    Ok(pseudo_inverse(&plant.g(x))? * (target - plant.f(x)))
}

/// Feedback used in simulation: the closed-form law when registered, else the generic one.
pub fn feedback(plant: &ControlAffinePlant, design: &PhDesign, x: &Vector) -> Result<Vector> {
    match design.closed_form_control(x) {
        Some(u) => Ok(u),
        None => ida_control(plant, design, x),
    }
}

/// `Ḣ = -∇Hᵀ R ∇H` along the target closed loop.
pub fn hamiltonian_rate(design: &PhDesign, x: &Vector) -> Result<f64> {
    design.ensure_regular(x)?;
    let grad = design.grad_h(x);
    Ok(-(grad.transpose() * design.r(x) * &grad)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> (ControlAffinePlant, PhDesign) {
        // q̇ = p, ṗ = u; target J = [[0,1],[-1,0]], R = diag(0, 1), H = q²/2 + p²/2
        let plant = ControlAffinePlant::new(
            "double_integrator",
            2,
            1,
            |x: &Vector| Vector::from_vec(vec![x[1], 0.0]),
            |_x: &Vector| Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let design = PhDesign::new(
            "di",
            2,
            |_x: &Vector| Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            |_x: &Vector| Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            |x: &Vector| 0.5 * x.norm_squared(),
        );
        (plant, design)
    }

    #[test]
    fn critical_point_gives_zero_field() {
        let (_, d) = double_integrator();
        let f = closed_loop_field(&d, &Vector::zeros(2)).unwrap();
        assert!(f.norm() < 1e-9);
        assert_eq!(hamiltonian_rate(&d, &Vector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn double_integrator_matches_and_controls() {
        let (plant, d) = double_integrator();
        let x = Vector::from_vec(vec![0.7, -0.2]);
        let res = matching_residual(&plant, &d, &x).unwrap();
        assert_eq!(res.len(), 1);
        assert!(res.norm() < 1e-9);
        let u = ida_control(&plant, &d, &x).unwrap();
        // u = -q - p
        assert!((u[0] - (-0.7 + 0.2)).abs() < 1e-8);
        let closed = plant.field(&x, &u);
        assert!((closed - closed_loop_field(&d, &x).unwrap()).norm() < 1e-9);
        assert!(hamiltonian_rate(&d, &x).unwrap() <= 0.0);
    }

    #[test]
    fn fully_actuated_residual_is_empty() {
        let plant = ControlAffinePlant::new(
            "full",
            2,
            2,
            |x: &Vector| x.map(|v| v.sin()),
            |_x: &Vector| Matrix::identity(2, 2),
        )
        .unwrap();
        let (_, d) = double_integrator();
        let res = matching_residual(&plant, &d, &Vector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(res.len(), 0);
    }

    #[test]
    fn singular_set_is_enforced() {
        let (plant, d) = double_integrator();
        let d = d.with_singular_set(|x: &Vector| x[0].abs() < 0.1);
        let x = Vector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            closed_loop_field(&d, &x),
            Err(Error::SingularEvaluation { .. })
        ));
        assert!(matches!(
            ida_control(&plant, &d, &x),
            Err(Error::SingularEvaluation { .. })
        ));
        let d = d.with_controller(|_x: &Vector| Vector::from_vec(vec![42.0]));
        assert_eq!(ida_control(&plant, &d, &x).unwrap()[0], 42.0);
    }

    #[test]
    fn fd_gradient_fallback() {
        let (_, d) = double_integrator();
        assert!(!d.has_analytic_gradient());
        let g = d.grad_h(&Vector::from_vec(vec![3.0, 4.0]));
        assert!((g[0] - 3.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn partition_blocks_roundtrip() {
        let part = Partition::new(4, [2, 0]).unwrap();
        assert_eq!(part.l_indices(), &[1, 3]);
        let a = Matrix::from_fn(4, 4, |r, c| (10 * r + c) as f64);
        let back = part.from_blocks(&part.pp(&a), &part.pl(&a), &part.lp(&a), &part.ll(&a));
        assert_eq!(a, back);
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(part.xp(&x), Vector2::new(3.0, 1.0));
        assert_eq!(part.assemble(&part.xp(&x), &part.xl(&x)), x);
        assert!(Partition::new(3, [1, 1]).is_err());
        assert!(Partition::new(3, [0, 3]).is_err());
    }

    #[test]
    fn plant_dimension_checks() {
        assert!(ControlAffinePlant::new("bad", 2, 3, |x: &Vector| x.clone(), |_x: &Vector| Matrix::zeros(2, 3)).is_err());
        let (plant, d) = double_integrator();
        assert!(matches!(
            matching_residual(&plant, &d, &Vector::zeros(3)),
            Err(Error::Dimension(_))
        ));
    }
}
