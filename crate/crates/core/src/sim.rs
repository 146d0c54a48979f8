//! Closed-loop simulation through the plant side `f + g·u` and the
//! trajectory CSV format.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{integrate, is_finite, IntegratorSettings, Method, Vector, VectorField};
use crate::ph::{ControlAffinePlant, ScalarFn};

pub type Controller = Arc<dyn Fn(&Vector) -> Result<Vector> + Send + Sync>;
pub type BranchFn = Arc<dyn Fn(&Vector) -> Option<&'static str> + Send + Sync>;

/// A plant closed with a feedback law, plus the observables recorded per sample.
#[derive(Clone)]
pub struct ClosedLoop {
    plant: ControlAffinePlant,
    controller: Controller,
    hamiltonian: Option<ScalarFn>,
    phi: Option<ScalarFn>,
    distance: Option<ScalarFn>,
    branch: Option<BranchFn>,
    fixed_step_only: bool,
}

impl std::fmt::Debug for ClosedLoop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedLoop")
            .field("plant", &self.plant.name())
            .field("fixed_step_only", &self.fixed_step_only)
            .finish()
    }
}

impl ClosedLoop {
    pub fn new(plant: ControlAffinePlant, controller: impl Fn(&Vector) -> Result<Vector> + Send + Sync + 'static) -> Self {
        ClosedLoop {
            plant,
            controller: Arc::new(controller),
            hamiltonian: None,
            phi: None,
            distance: None,
            branch: None,
            fixed_step_only: false,
        }
    }

    pub fn with_hamiltonian(mut self, h: ScalarFn) -> Self {
        self.hamiltonian = Some(h);
        self
    }

    pub fn with_phi(mut self, phi: ScalarFn) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_distance(mut self, d: ScalarFn) -> Self {
        self.distance = Some(d);
        self
    }

    /// Piecewise controllers: records the active branch and forces fixed-step integration.
    pub fn with_branch(mut self, b: BranchFn) -> Self {
        self.branch = Some(b);
        self.fixed_step_only = true;
        self
    }

    pub fn plant(&self) -> &ControlAffinePlant {
        &self.plant
    }

    pub fn control(&self, x: &Vector) -> Result<Vector> {
        (self.controller)(x)
    }

    pub fn simulate(&self, x0: &Vector, settings: &IntegratorSettings) -> Result<Trajectory> {
        self.plant.check_dim(x0)?;
        if self.fixed_step_only && !matches!(settings.method, Method::Rk4 { .. }) {
            return Err(Error::InvalidSettings(
                "piecewise controller requires the fixed-step rk4 method".into(),
            ));
        }
        let sol = integrate(self, x0, settings)?;
        let mut traj = Trajectory::with_capacity(self.plant.n(), self.plant.m(), sol.t.len());
        for (t, x) in sol.t.into_iter().zip(sol.x) {
            let u = self.control(&x)?;
            traj.t.push(t);
            traj.u.push(u);
            traj.h.push(self.hamiltonian.as_ref().map_or(f64::NAN, |h| h(&x)));
            traj.phi.push(self.phi.as_ref().map_or(f64::NAN, |p| p(&x)));
            traj.dist.push(self.distance.as_ref().map_or(f64::NAN, |d| d(&x)));
            traj.branch.push(self.branch.as_ref().and_then(|b| b(&x)).unwrap_or(""));
            traj.x.push(x);
        }
        Ok(traj)
    }
}

impl VectorField for ClosedLoop {
    fn eval(&self, x: &Vector) -> Result<Vector> {
        let u = self.control(x)?;
        if !is_finite(&u) {
            return Err(Error::Controller(format!("non-finite control at state {:?}", x.as_slice())));
        }
        Ok(self.plant.field(x, &u))
    }

    fn wrap(&self, x: &mut Vector) {
        self.plant.wrap(x);
    }
}

/// Sampled closed-loop run. Channels without an observable hold NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub dist: Vec<f64>,
    pub branch: Vec<&'static str>,
}

impl Trajectory {
    fn with_capacity(n: usize, m: usize, len: usize) -> Self {
        Trajectory {
            n,
            m,
            t: Vec::with_capacity(len),
            x: Vec::with_capacity(len),
            u: Vec::with_capacity(len),
            h: Vec::with_capacity(len),
            phi: Vec::with_capacity(len),
            dist: Vec::with_capacity(len),
            branch: Vec::with_capacity(len),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// State component `i` over time.
    pub fn state(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|x| x[i]).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        names.extend((1..=self.n).map(|i| format!("x_{i}")));
        names.extend((1..=self.m).map(|i| format!("u_{i}")));
        names.extend(["H", "Phi", "dist_A", "branch"].map(String::from));
        names
    }

    /// Numeric row `k` in column order (the branch column excluded).
    pub fn row(&self, k: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.n + self.m + 4);
        row.push(self.t[k]);
        row.extend(self.x[k].iter());
        row.extend(self.u[k].iter());
        row.extend([self.h[k], self.phi[k], self.dist[k]]);
        row
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Io {
            path: "trajectory.csv".into(),
            message: e.to_string(),
        };
        w.write_record(self.column_names()).map_err(io)?;
        for k in 0..self.len() {
            let mut rec: Vec<String> = self.row(k).into_iter().map(format_value).collect();
            rec.push(self.branch[k].to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("trajectory.csv", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// 17 significant digits; NaN written as `nan`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}
