//! Scenario configs: plant + controller + initial state + integrator +
//! analyses, and the runner that writes `trajectory.csv`, `summary.toml` and
//! `report.toml`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::custom::ExpressionController;
use crate::error::{Error, Result};
use crate::grid::{self, SampleBox};
use crate::metrics::{self, Amplitudes, RateFit};
use crate::numerics::{IntegratorSettings, Vector};
use crate::ph::{self, ScalarFn};
use crate::plants::im::{self, ImParams};
use crate::plants::pendulum::{self, PendulumParams, PendulumSystem, PendulumVariant};
use crate::report::{CheckResult, Report};
use crate::sim::{ClosedLoop, Trajectory};
use crate::verify::{self, VerifyOptions};

/// Environment variable overriding the config seed.
pub const SEED_ENV: &str = "ORBITFORGE_SEED";

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub plant: PlantSection,
    #[serde(default)]
    pub controller: ControllerSection,
    pub initial: InitialSection,
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// `im_fixed`, `im_rotating`, `pendulum_local` or `pendulum_global`.
    pub name: String,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    /// `msea`, `epd`, `foc` or `custom`; defaults per plant.
    #[serde(default)]
    pub variant: Option<String>,
    /// Expression file for `custom`, relative to the config file.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub state: Option<Vec<f64>>,
    /// Draw the initial state uniformly from this box using the seed.
    #[serde(default)]
    pub random_box: Option<Vec<[f64; 2]>>,
}

/// Analyses to run and their thresholds. Expected values (rates, period,
/// amplitude) come from the plant parameters.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analyses {
    pub simulate: bool,
    pub verify: bool,
    pub verify_grid: usize,
    /// Upper bound on `‖x(t_end)‖_𝒜`.
    pub final_dist: Option<f64>,
    /// `H` non-increasing up to 1e-9 per sample.
    pub energy_monotone: bool,
    /// Transverse decay rates against `R` and `k`.
    pub rates: bool,
    pub rate_tolerance: f64,
    /// Orbit period against `2π/|ω⋆|` (IM) or reported only (pendulum).
    pub period: bool,
    pub period_tolerance: f64,
    /// Steady turning points against `±θ⋆`.
    pub turning_points: bool,
    pub amplitude_tolerance: f64,
    /// Upper bound on `|Φ(x(t_end))|`.
    pub final_phi: Option<f64>,
    /// `|Φ|` non-increasing up to 1e-9 per sample.
    pub phi_monotone: bool,
    /// `sign(Ḣ_p)·sign(Φ) ≤ 0` wherever `|ω cosθ| > 1e-6`.
    pub pumping_sign: bool,
    /// `Φ̇ = -ω²cos²θ·P(θ, ω)` pointwise within 1e-8.
    pub phi_identity: bool,
    /// Outer gain branch at the start, inner branch over the last quarter.
    pub branch_switch: bool,
    /// Upper bound on `|ẋ(t_end)|`: convergence to a point.
    pub settle: Option<f64>,
    /// Lower bound on `|ẋ(t_end)|`: a persistent periodic motion.
    pub persistent_motion: Option<f64>,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            simulate: true,
            verify: false,
            verify_grid: 1000,
            final_dist: None,
            energy_monotone: false,
            rates: false,
            rate_tolerance: 0.1,
            period: false,
            period_tolerance: 0.005,
            turning_points: false,
            amplitude_tolerance: 0.02,
            final_phi: None,
            phi_monotone: false,
            pumping_sign: false,
            phi_identity: false,
            branch_switch: false,
            settle: None,
            persistent_motion: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_value(toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn load(path: &Path) -> Result<(Self, toml::Value)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_value(value.clone())?;
        Ok((cfg, value))
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        // the flattened integrator section cannot use deny_unknown_fields
        const INTEGRATOR_KEYS: [&str; 7] = ["method", "step", "rel_tol", "abs_tol", "max_step", "t_end", "output_interval"];
        if let Some(table) = value.get("integrator").and_then(toml::Value::as_table) {
            if let Some(key) = table.keys().find(|k| !INTEGRATOR_KEYS.contains(&k.as_str())) {
                return Err(Error::Config(format!("integrator.{key}: unknown field")));
            }
        }
        value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Config seed, overridden by `ORBITFORGE_SEED`.
    pub fn effective_seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(s) => parse_seed(&s),
            Err(_) => Ok(self.seed.unwrap_or(grid::DEFAULT_SEED)),
        }
    }
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| Error::Config(format!("{SEED_ENV}: cannot parse seed '{s}'")))
}

fn param(table: &toml::Table, key: &str, default: Option<f64>) -> Result<f64> {
    match table.get(key) {
        Some(toml::Value::Float(f)) => Ok(*f),
        Some(toml::Value::Integer(i)) => Ok(*i as f64),
        Some(other) => Err(Error::Config(format!("plant.params.{key}: expected a number, got {other}"))),
        None => default.ok_or_else(|| Error::Config(format!("plant.params.{key}: missing"))),
    }
}

fn check_keys(table: &toml::Table, allowed: &[&str]) -> Result<()> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "plant.params.{key}: unknown parameter (expected {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

pub fn im_params(table: &toml::Table) -> Result<ImParams> {
    check_keys(table, &["R", "beta_star", "omega_star", "k"])?;
    let d = ImParams::default();
    Ok(ImParams {
        r: param(table, "R", Some(d.r))?,
        beta_star: param(table, "beta_star", Some(d.beta_star))?,
        omega_star: param(table, "omega_star", Some(d.omega_star))?,
        k: param(table, "k", Some(d.k))?,
    })
}

pub fn pendulum_params(plant: &str, table: &toml::Table) -> Result<PendulumParams> {
    let theta_star = param(table, "theta_star", Some(std::f64::consts::FRAC_PI_4))?;
    if plant == "pendulum_local" {
        check_keys(table, &["gamma", "theta_star"])?;
        Ok(PendulumParams::local(param(table, "gamma", Some(5.0))?, theta_star))
    } else {
        check_keys(table, &["gamma1", "gamma2", "theta_star"])?;
        Ok(PendulumParams::almost_global(
            param(table, "gamma1", Some(20.0))?,
            param(table, "gamma2", Some(2.0))?,
            theta_star,
        ))
    }
}

/// Plant instance resolved from a config.
pub enum PlantSetup {
    ImFixed { params: ImParams, sys: Box<im::ImSystem> },
    ImRotating { params: ImParams },
    Pendulum { sys: Box<PendulumSystem> },
}

impl PlantSetup {
    pub fn from_section(section: &PlantSection) -> Result<Self> {
        let map = |e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::Config(format!("plant.params.{name}: {reason}")),
            other => other,
        };
        match section.name.as_str() {
            "im_fixed" => {
                let params = im_params(&section.params)?;
                let sys = im::im_fixed_frame(&params).map_err(map)?;
                Ok(PlantSetup::ImFixed { params, sys: Box::new(sys) })
            }
            "im_rotating" => {
                let params = im_params(&section.params)?;
                params.validate().map_err(map)?;
                Ok(PlantSetup::ImRotating { params })
            }
            "pendulum_local" | "pendulum_global" => {
                let params = pendulum_params(&section.name, &section.params)?;
                Ok(PlantSetup::Pendulum {
                    sys: Box::new(pendulum::pendulum_system(&params).map_err(map)?),
                })
            }
            other => Err(Error::Config(format!(
                "plant.name: unknown plant '{other}' (expected im_fixed, im_rotating, pendulum_local, pendulum_global)"
            ))),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            PlantSetup::Pendulum { .. } => 2,
            _ => 3,
        }
    }

    fn default_variant(&self) -> &'static str {
        match self {
            PlantSetup::ImFixed { .. } => "msea",
            PlantSetup::ImRotating { .. } => "foc",
            PlantSetup::Pendulum { .. } => "epd",
        }
    }

    fn constants(&self) -> BTreeMap<String, f64> {
        match self {
            PlantSetup::ImFixed { params, .. } | PlantSetup::ImRotating { params } => BTreeMap::from([
                ("R".to_string(), params.r),
                ("beta_star".to_string(), params.beta_star),
                ("omega_star".to_string(), params.omega_star),
                ("k".to_string(), params.k),
            ]),
            PlantSetup::Pendulum { sys } => {
                let p = sys.params;
                let mut m = BTreeMap::from([
                    ("theta_star".to_string(), p.theta_star),
                    ("hp_star".to_string(), p.hp_star()),
                ]);
                match p.variant {
                    PendulumVariant::Local { gamma } => {
                        m.insert("gamma".into(), gamma);
                    }
                    PendulumVariant::AlmostGlobal { gamma1, gamma2 } => {
                        m.insert("gamma1".into(), gamma1);
                        m.insert("gamma2".into(), gamma2);
                    }
                }
                m
            }
        }
    }

    /// Closed loop for the requested controller variant with the observables
    /// `H`, `Φ`, `‖x‖_𝒜` and the gain branch attached.
    pub fn closed_loop(&self, variant: Option<&str>, custom: Option<ExpressionController>) -> Result<ClosedLoop> {
        let variant = variant.unwrap_or(self.default_variant());
        let custom = match (variant, custom) {
            ("custom", Some(c)) => Some(c),
            ("custom", None) => return Err(Error::Config("controller.file: required for the custom variant".into())),
            _ => None,
        };
        let custom_law = custom.map(|c| Arc::new(move |x: &Vector| c.eval(x)));
        let bad = || {
            Error::Config(format!(
                "controller.variant: '{variant}' is not available for this plant"
            ))
        };
        match self {
            PlantSetup::ImFixed { params, sys } => {
                let beta = params.beta_star;
                let phi: ScalarFn = Arc::new(move |x: &Vector| x[0].hypot(x[1]) - beta);
                let orbit = sys.orbit.clone();
                let dist: ScalarFn = Arc::new(move |x: &Vector| orbit.distance(x));
                let cl = match (variant, custom_law) {
                    ("msea", _) => {
                        let q = *params;
                        ClosedLoop::new(sys.plant.clone(), move |x: &Vector| {
                            let u = im::im_control(&q, x);
                            Ok(Vector::from_vec(vec![u[0], u[1]]))
                        })
                        .with_hamiltonian(sys.msea.base().hamiltonian_fn())
                    }
                    ("epd", _) => {
                        let (plant, design) = (sys.plant.clone(), sys.epd.base().clone());
                        ClosedLoop::new(sys.plant.clone(), move |x: &Vector| ph::ida_control(&plant, &design, x))
                            .with_hamiltonian(sys.epd.base().hamiltonian_fn())
                    }
                    ("custom", Some(law)) => ClosedLoop::new(sys.plant.clone(), move |x: &Vector| law(x))
                        .with_hamiltonian(sys.msea.base().hamiltonian_fn()),
                    _ => return Err(bad()),
                };
                Ok(cl.with_phi(phi).with_distance(dist))
            }
            PlantSetup::ImRotating { params } => {
                let q = *params;
                let plant = im::im_rotating_plant(params);
                // H, Φ and the set distance are invariant under the frame rotation.
                let h = im::im_msea_design(params)?.base().hamiltonian_fn();
                let phi: ScalarFn = Arc::new(move |x: &Vector| x[0].hypot(x[1]) - q.beta_star);
                let dist: ScalarFn =
                    Arc::new(move |x: &Vector| (x[0].hypot(x[1]) - q.beta_star).hypot(x[2] - q.omega_star));
                let cl = match (variant, custom_law) {
                    ("foc", _) => ClosedLoop::new(plant, move |x: &Vector| {
                        let v = im::foc_control(&q, x);
                        Ok(Vector::from_vec(vec![v[0], v[1]]))
                    }),
                    ("custom", Some(law)) => ClosedLoop::new(plant, move |x: &Vector| law(x)),
                    _ => return Err(bad()),
                };
                Ok(cl.with_hamiltonian(h).with_phi(phi).with_distance(dist))
            }
            PlantSetup::Pendulum { sys } => {
                let d = sys.epd.clone();
                let phi: ScalarFn = Arc::new(move |x: &Vector| d.phi(x));
                let orbit = sys.orbit.clone();
                let dist: ScalarFn = Arc::new(move |x: &Vector| orbit.distance(x));
                let cl = match (variant, custom_law) {
                    ("epd", _) => {
                        let p = sys.params;
                        ClosedLoop::new(sys.plant.clone(), move |x: &Vector| {
                            Ok(Vector::from_element(1, pendulum::pendulum_control(&p, x)))
                        })
                    }
                    ("custom", Some(law)) => ClosedLoop::new(sys.plant.clone(), move |x: &Vector| law(x)),
                    _ => return Err(bad()),
                }
                .with_hamiltonian(sys.epd.base().hamiltonian_fn())
                .with_phi(phi)
                .with_distance(dist);
                Ok(match sys.params.variant {
                    PendulumVariant::AlmostGlobal { .. } => {
                        let s = sys.clone();
                        cl.with_branch(Arc::new(move |x: &Vector| s.branch(x)))
                    }
                    PendulumVariant::Local { .. } => cl,
                })
            }
        }
    }
}

/// A config resolved into something runnable.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub setup: PlantSetup,
    pub closed_loop: ClosedLoop,
    pub x0: Vector,
    pub seed: u64,
}

impl Scenario {
    /// `base_dir` resolves relative controller files.
    pub fn build(config: ScenarioConfig, base_dir: &Path) -> Result<Self> {
        let seed = config.effective_seed()?;
        let setup = PlantSetup::from_section(&config.plant)?;
        let n = setup.n();
        let m = match setup {
            PlantSetup::Pendulum { .. } => 1,
            _ => 2,
        };
        let custom = match (&config.controller.variant, &config.controller.file) {
            (Some(v), Some(file)) if v == "custom" => {
                Some(ExpressionController::load(&base_dir.join(file), n, m, setup.constants())?)
            }
            (_, Some(_)) => return Err(Error::Config("controller.file: only used with variant = \"custom\"".into())),
            _ => None,
        };
        let closed_loop = setup.closed_loop(config.controller.variant.as_deref(), custom)?;
        let x0 = initial_state(&config.initial, n, seed)?;
        match setup {
            PlantSetup::ImFixed { .. } => im::check_initial_flux(x0.as_slice())?,
            PlantSetup::ImRotating { .. } => {
                if x0[0].hypot(x0[1]) < im::FLUX_FLOOR {
                    return Err(Error::invalid("initial", "rotating-frame flux at the polar singularity (|lambda(0)| < 1e-6)"));
                }
            }
            PlantSetup::Pendulum { .. } => {}
        }
        config
            .integrator
            .validate()
            .map_err(|e| Error::Config(format!("integrator: {e}")))?;
        Ok(Scenario {
            config,
            setup,
            closed_loop,
            x0,
            seed,
        })
    }

    pub fn simulate(&self) -> Result<Trajectory> {
        self.closed_loop.simulate(&self.x0, &self.config.integrator)
    }
}

fn initial_state(init: &InitialSection, n: usize, seed: u64) -> Result<Vector> {
    match (&init.state, &init.random_box) {
        (Some(s), None) => {
            if s.len() != n {
                return Err(Error::Config(format!("initial.state: has {} entries, plant has n = {n}", s.len())));
            }
            Ok(Vector::from_column_slice(s))
        }
        (None, Some(b)) => {
            if b.len() != n {
                return Err(Error::Config(format!("initial.random_box: has {} ranges, plant has n = {n}", b.len())));
            }
            let region = SampleBox::new(b.iter().map(|r| (r[0], r[1])).collect());
            let x = grid::uniform_grid(&region, 1, seed, |x| x[0].hypot(x[1]) > 0.05)
                .pop()
                .ok_or_else(|| Error::Config("initial.random_box: no admissible state".into()))?;
            Ok(x)
        }
        _ => Err(Error::Config("initial: give exactly one of state or random_box".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub passed: bool,
    /// Pass/fail per analysis.
    pub analyses: BTreeMap<String, bool>,
    pub final_dist: f64,
    pub fitted_rates: Vec<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Amplitudes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_speed: Option<f64>,
}

impl Summary {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Everything a run produced.
pub struct RunOutcome {
    pub trajectory: Option<Trajectory>,
    pub summary: Summary,
    pub report: Report,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.summary.passed
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(t) = &self.trajectory {
            t.save_csv(&dir.join("trajectory.csv"))?;
        }
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("summary.toml", self.summary.to_toml()?)?;
        write("report.toml", self.report.to_toml()?)
    }
}

fn speed(cl: &ClosedLoop, x: &Vector, u: &Vector) -> f64 {
    cl.plant().field(x, u).norm()
}

/// Runs every requested analysis.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutcome> {
    let a = &sc.config.analyses;
    let mut report = Report::new(&sc.config.name);
    let mut summary = Summary {
        scenario: sc.config.name.clone(),
        seed: sc.seed,
        passed: true,
        analyses: BTreeMap::new(),
        final_dist: f64::NAN,
        fitted_rates: Vec::new(),
        period: None,
        amplitudes: None,
        final_speed: None,
    };

    if a.verify {
        let opts = VerifyOptions {
            grid: a.verify_grid,
            seed: sc.seed,
            ..VerifyOptions::default()
        };
        let suite = match (&sc.setup, sc.config.controller.variant.as_deref()) {
            (PlantSetup::ImFixed { params, .. }, Some("epd")) => verify::im_suite(params, true)?,
            (PlantSetup::ImFixed { params, .. }, _) => verify::im_suite(params, false)?,
            (PlantSetup::Pendulum { sys }, _) => verify::pendulum_suite(&sys.params)?,
            (PlantSetup::ImRotating { .. }, _) => {
                return Err(Error::Config("analyses.verify: no pH design registered for im_rotating".into()))
            }
        };
        let vr = verify::run_suite(&suite, &opts);
        let mut check = CheckResult::new("verify");
        check.checked = vr.checks.len();
        if !vr.passed {
            check.fail(format!("{} violations", vr.violation_count));
        }
        for c in vr.checks {
            report.push(c);
        }
        record(&mut summary, &mut report, check);
    }

    let traj = if a.simulate {
        let traj = sc.simulate()?;
        analyse(sc, &traj, &mut summary, &mut report)?;
        Some(traj)
    } else {
        None
    };
    summary.passed = report.passed;
    Ok(RunOutcome {
        trajectory: traj,
        summary,
        report,
    })
}

fn record(summary: &mut Summary, report: &mut Report, check: CheckResult) {
    summary.analyses.insert(check.name.clone(), check.passed);
    report.push(check);
}

fn analyse(sc: &Scenario, traj: &Trajectory, summary: &mut Summary, report: &mut Report) -> Result<()> {
    let a = &sc.config.analyses;
    let last = traj.len() - 1;
    let x_end = &traj.x[last];
    summary.final_dist = traj.dist[last];
    let v_end = speed(&sc.closed_loop, x_end, &traj.u[last]);
    summary.final_speed = Some(v_end);

    let mut sim = CheckResult::new("simulate");
    sim.checked = traj.len();
    record(summary, report, sim);

    if let Some(limit) = a.final_dist {
        let mut c = CheckResult::new("final_dist");
        c.observe(summary.final_dist);
        if !(summary.final_dist < limit) {
            c.violate(x_end, summary.final_dist, format!("distance to orbit at t = {} exceeds {limit:e}", traj.t[last]));
        }
        record(summary, report, c);
    }

    if a.energy_monotone {
        let mut c = CheckResult::new("energy_monotone");
        for k in 1..traj.len() {
            let inc = traj.h[k] - traj.h[k - 1];
            c.observe(inc);
            if !(inc <= 1e-9) {
                c.violate(&traj.x[k], inc, format!("H increased at t = {}", traj.t[k]));
            }
        }
        record(summary, report, c);
    }

    if a.rates {
        let mut c = CheckResult::new("rates");
        match &sc.setup {
            PlantSetup::ImFixed { params, .. } => {
                let z1: Vec<f64> = traj.phi.clone();
                let z2: Vec<f64> = traj.x.iter().map(|x| x[2] - params.omega_star).collect();
                for (name, values, expected) in [("z1", z1, params.r), ("z2", z2, params.k)] {
                    match metrics::fit_exponential_rate(name, &traj.t, &values, &traj.dist) {
                        Ok(fit) => {
                            let rel = (fit.rate - expected).abs() / expected;
                            c.observe(rel);
                            if !fit.accepted() {
                                c.violate(x_end, fit.r_squared, format!("{name}: R^2 = {:.5} not above 0.99", fit.r_squared));
                            }
                            if !(rel <= a.rate_tolerance) {
                                c.violate(x_end, fit.rate, format!("{name}: rate {:.5} vs expected {expected}", fit.rate));
                            }
                            summary.fitted_rates.push(fit);
                        }
                        Err(e) => c.violate(x_end, f64::NAN, format!("{name}: {e}")),
                    }
                }
            }
            _ => c.fail("rate targets are defined for im_fixed only"),
        }
        record(summary, report, c);
    }

    if a.period {
        let mut c = CheckResult::new("period");
        let half = traj.t[last] / 2.0;
        match &sc.setup {
            PlantSetup::ImFixed { params, .. } => {
                let phase: Vec<f64> = traj.x.iter().map(|x| x[1].atan2(x[0])).collect();
                match metrics::estimate_period(&traj.t, &phase, half) {
                    Ok(p) => {
                        let expected = 2.0 * PI / params.omega_star.abs();
                        let rel = (p - expected).abs() / expected;
                        c.observe(rel);
                        if !(rel <= a.period_tolerance) {
                            c.violate(x_end, p, format!("period {p:.6} vs expected {expected:.6}"));
                        }
                        summary.period = Some(p);
                    }
                    Err(e) => c.violate(x_end, f64::NAN, e.to_string()),
                }
            }
            PlantSetup::Pendulum { .. } => match metrics::oscillation_period(&traj.t, &traj.state(1), half) {
                Ok(p) => summary.period = Some(p),
                Err(e) => c.violate(x_end, f64::NAN, e.to_string()),
            },
            PlantSetup::ImRotating { .. } => c.fail("no orbit in the rotating frame"),
        }
        record(summary, report, c);
    }

    if a.turning_points {
        let mut c = CheckResult::new("turning_points");
        match &sc.setup {
            PlantSetup::Pendulum { sys } => {
                let tp = metrics::turning_points(&traj.t, &traj.state(0), &traj.state(1));
                let target = sys.params.theta_star.abs();
                match metrics::steady_amplitudes(&tp) {
                    Some(amp) => {
                        let err = (amp.upper - target).abs().max((amp.lower + target).abs());
                        c.observe(err);
                        if !(err <= a.amplitude_tolerance) {
                            c.violate(x_end, err, format!("steady turning points {:.5}/{:.5} vs ±{target:.5}", amp.upper, amp.lower));
                        }
                        summary.amplitudes = Some(amp);
                    }
                    None => c.fail("no steady oscillation found"),
                }
            }
            _ => c.fail("turning points are defined for the pendulum only"),
        }
        record(summary, report, c);
    }

    if let Some(limit) = a.final_phi {
        let mut c = CheckResult::new("final_phi");
        let v = traj.phi[last].abs();
        c.observe(v);
        if !(v < limit) {
            c.violate(x_end, v, format!("|Phi| at t = {} exceeds {limit:e}", traj.t[last]));
        }
        record(summary, report, c);
    }

    if a.phi_monotone {
        let mut c = CheckResult::new("phi_monotone");
        for k in 1..traj.len() {
            let inc = traj.phi[k].abs() - traj.phi[k - 1].abs();
            c.observe(inc);
            if !(inc <= 1e-9) {
                c.violate(&traj.x[k], inc, format!("|Phi| increased at t = {}", traj.t[k]));
            }
        }
        record(summary, report, c);
    }

    if a.pumping_sign || a.phi_identity {
        let PlantSetup::Pendulum { sys } = &sc.setup else {
            return Err(Error::Config("analyses.pumping_sign/phi_identity: pendulum plants only".into()));
        };
        let mut sign = CheckResult::new("pumping_sign");
        let mut ident = CheckResult::new("phi_identity");
        for k in 0..traj.len() {
            let x = &traj.x[k];
            let xdot = sc.closed_loop.plant().field(x, &traj.u[k]);
            let g = pendulum::grad_hp(&Vector2::new(x[0], x[1]));
            let hp_dot = g[0] * xdot[0] + g[1] * xdot[1];
            let phi = traj.phi[k];
            let (th, w) = (x[0], x[1]);
            if (w * th.cos()).abs() > 1e-6 {
                // below this |Ḣ_p| is at the rounding level of ∇H_p·ẋ
                let s = if hp_dot.abs() < 1e-13 { 0.0 } else { hp_dot.signum() };
                let prod = s * if phi == 0.0 { 0.0 } else { phi.signum() };
                sign.observe(prod);
                if prod > 0.0 {
                    sign.violate(x, hp_dot, format!("H_p rate has the sign of Phi at t = {}", traj.t[k]));
                }
            }
            let oracle = -w * w * th.cos().powi(2) * pendulum::gain_p(&sys.params, x);
            let err = (hp_dot - oracle).abs();
            ident.observe(err);
            if !(err <= 1e-8) {
                ident.violate(x, err, format!("Phi rate identity off at t = {}", traj.t[k]));
            }
        }
        if a.pumping_sign {
            record(summary, report, sign);
        }
        if a.phi_identity {
            record(summary, report, ident);
        }
    }

    if a.branch_switch {
        let mut c = CheckResult::new("branch_switch");
        let tail = &traj.branch[traj.len() * 3 / 4..];
        c.checked = traj.len();
        if traj.branch[0] != "gamma2" {
            c.violate(&traj.x[0], f64::NAN, format!("initial branch is '{}', expected gamma2", traj.branch[0]));
        }
        if let Some(k) = tail.iter().position(|b| *b != "gamma1") {
            let idx = traj.len() * 3 / 4 + k;
            c.violate(&traj.x[idx], traj.t[idx], format!("outer branch active late, at t = {}", traj.t[idx]));
        }
        record(summary, report, c);
    }

    if let Some(limit) = a.settle {
        let mut c = CheckResult::new("settle");
        c.observe(v_end);
        if !(v_end < limit) {
            c.violate(x_end, v_end, format!("state speed {v_end:.3e} at t = {} exceeds {limit:e}", traj.t[last]));
        }
        record(summary, report, c);
    }

    if let Some(limit) = a.persistent_motion {
        let mut c = CheckResult::new("persistent_motion");
        c.observe(-v_end);
        if !(v_end > limit) {
            c.violate(x_end, v_end, format!("state speed {v_end:.3e} at t = {} below {limit:e}", traj.t[last]));
        }
        record(summary, report, c);
    }
    Ok(())
}

/// Sets a dotted key (`plant.params.k`, `integrator.step`) in a config value.
/// A bare key is looked up in `plant.params` first.
pub fn set_key(config: &mut toml::Value, key: &str, value: f64) -> Result<()> {
    let path: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else {
        vec!["plant", "params", key]
    };
    let mut node = config;
    for part in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("--param {key}: '{part}' is not a table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("--param {key}: parent is not a table")))?;
    table.insert(path[path.len() - 1].to_string(), toml::Value::Float(value));
    Ok(())
}

/// `key=a:b:steps` (inclusive linspace) or `key=v1,v2,...`.
pub fn parse_sweep(arg: &str) -> Result<(String, Vec<f64>)> {
    let bad = |why: &str| Error::Config(format!("--param {arg}: {why}"));
    let (key, range) = arg.split_once('=').ok_or_else(|| bad("expected key=a:b:steps"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let values = if range.contains(':') {
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected a:b:steps"));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let steps: usize = parts[2].trim().parse().map_err(|_| bad("steps must be a positive integer"))?;
        match steps {
            0 => return Err(bad("steps must be a positive integer")),
            1 => vec![a],
            _ => (0..steps).map(|i| a + (b - a) * i as f64 / (steps - 1) as f64).collect(),
        }
    } else {
        range.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    Ok((key.trim().to_string(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    const IM: &str = r#"
name = "im_test"
[plant]
name = "im_fixed"
params = { R = 1.0, beta_star = 1.0, omega_star = 5.0, k = 1.0 }
[initial]
state = [0.3, 0.1, 0.0]
[integrator]
method = "rk4"
step = 1e-3
t_end = 20.0
output_interval = 1e-2
[analyses]
final_dist = 1e-6
energy_monotone = true
rates = true
period = true
"#;

    fn build(text: &str) -> Result<Scenario> {
        Scenario::build(ScenarioConfig::from_toml(text)?, Path::new("."))
    }

    #[test]
    fn im_scenario_passes() {
        let sc = build(IM).unwrap();
        let out = run_scenario(&sc).unwrap();
        assert!(out.passed(), "{}", out.report.to_toml().unwrap());
        assert_eq!(out.summary.fitted_rates.len(), 2);
        assert!(out.summary.to_toml().unwrap().contains("fitted_rates"));
    }

    #[test]
    fn rejects_origin_and_unknown_plant() {
        let origin = IM.replace("[0.3, 0.1, 0.0]", "[0.0, 0.0, 1.0]");
        let err = build(&origin).err().unwrap();
        assert!(err.to_string().contains("initial flux at unstable origin"));
        let unknown = IM.replace("\"im_fixed\"", "\"im_nope\"");
        assert!(matches!(build(&unknown), Err(Error::Config(_))));
        let dims = IM.replace("[0.3, 0.1, 0.0]", "[0.3, 0.1]");
        assert!(build(&dims).err().unwrap().to_string().contains("initial.state"));
        let typo = IM.replace("t_end = 20.0", "t_ned = 20.0");
        assert!(build(&typo).err().unwrap().to_string().contains("integrator.t_ned"));
        let param = IM.replace("k = 1.0", "kk = 1.0");
        assert!(build(&param).err().unwrap().to_string().contains("plant.params.kk"));
    }

    #[test]
    fn sweep_specs() {
        assert_eq!(parse_sweep("k=0.5:2:4").unwrap(), ("k".into(), vec![0.5, 1.0, 1.5, 2.0]));
        assert_eq!(parse_sweep("R=0.5,1,2").unwrap().1, vec![0.5, 1.0, 2.0]);
        assert!(parse_sweep("k").is_err());
        assert!(parse_sweep("k=1:2:0").is_err());
    }

    #[test]
    fn set_key_paths() {
        let mut v: toml::Value = toml::from_str(IM).unwrap();
        set_key(&mut v, "k", 2.0).unwrap();
        set_key(&mut v, "integrator.t_end", 5.0).unwrap();
        let cfg = ScenarioConfig::from_value(v).unwrap();
        assert_eq!(im_params(&cfg.plant.params).unwrap().k, 2.0);
        assert_eq!(cfg.integrator.t_end, 5.0);
    }

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seed("0x5EED").unwrap(), 0x5EED);
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert!(parse_seed("x").is_err());
    }
}
