//! Verification suites for the built-in designs.

use std::f64::consts::FRAC_PI_3;
use std::sync::Arc;

use rayon::prelude::*;

use crate::epd::{self, EpdDesign};
use crate::error::{Error, Result};
use crate::grid::{self, SampleBox};
use crate::msea::{self, MseaDesign};
use crate::numerics::{grad_fd, skew_defect, symmetry_defect, IntegratorSettings, Vector};
use crate::orbit::OrbitTarget;
use crate::ph::{self, ControlAffinePlant, PhDesign};
use crate::plants::{im, pendulum, ImParams, PendulumParams};
use crate::report::{CheckResult, Report};
use crate::sim::ClosedLoop;

/// The designs `verify` accepts without further parameters.
pub const BUILTIN_DESIGNS: [&str; 4] = ["im_msea", "im_epd", "pendulum_local", "pendulum_global"];
/// IM MSEA design with `R₃₃` offset by +0.1; must fail.
pub const NEGATIVE_CONTROL: &str = "im_msea_perturbed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub grid: usize,
    pub seed: u64,
    /// Initial states for the simulation falsifiers; 0 disables them.
    pub falsifier_states: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grid: 1000,
            seed: grid::DEFAULT_SEED,
            falsifier_states: 50,
        }
    }
}

/// Simulation settings and acceptance for a falsifier run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Falsifier {
    pub tube_radius: f64,
    pub settings: IntegratorSettings,
    pub final_dist: f64,
}

pub enum DesignKind {
    Msea(MseaDesign),
    Epd(EpdDesign),
}

/// A design with everything needed to audit it.
pub struct Suite {
    pub plant: ControlAffinePlant,
    pub design: DesignKind,
    pub region: SampleBox,
    pub falsifier: Falsifier,
}

impl Suite {
    pub fn name(&self) -> &str {
        self.base().name()
    }

    pub fn base(&self) -> &PhDesign {
        match &self.design {
            DesignKind::Msea(d) => d.base(),
            DesignKind::Epd(d) => d.base(),
        }
    }

    pub fn orbit(&self) -> &OrbitTarget {
        match &self.design {
            DesignKind::Msea(d) => d.orbit(),
            DesignKind::Epd(d) => d.orbit(),
        }
    }

    /// Grid points inside the region, outside the singular set.
    pub fn grid(&self, count: usize, seed: u64) -> Vec<Vector> {
        let base = self.base();
        grid::uniform_grid(&self.region, count, seed, |x| !base.is_singular(x))
    }
}

fn im_region() -> SampleBox {
    SampleBox::new(vec![(-3.0, 3.0), (-3.0, 3.0), (-10.0, 10.0)])
}

fn pendulum_region() -> SampleBox {
    SampleBox::new(vec![(-FRAC_PI_3, FRAC_PI_3), (-2.0, 2.0)])
}

fn im_falsifier() -> Falsifier {
    Falsifier {
        tube_radius: 0.5,
        settings: IntegratorSettings::rk4(1e-3, 30.0, 1e-2),
        final_dist: 1e-6,
    }
}

fn pendulum_falsifier() -> Falsifier {
    Falsifier {
        tube_radius: 0.2,
        settings: IntegratorSettings::rk4(1e-3, 60.0, 1e-2),
        final_dist: 1e-3,
    }
}

pub fn im_suite(params: &ImParams, epd_form: bool) -> Result<Suite> {
    let sys = im::im_fixed_frame(params)?;
    Ok(Suite {
        plant: sys.plant,
        design: if epd_form {
            DesignKind::Epd(sys.epd)
        } else {
            DesignKind::Msea(sys.msea)
        },
        region: im_region(),
        falsifier: im_falsifier(),
    })
}

pub fn im_perturbed_suite(params: &ImParams) -> Result<Suite> {
    let sys = im::im_fixed_frame(params)?;
    let base = sys.msea.base().clone();
    let perturbed = sys
        .msea
        .with_damping(move |x: &Vector| {
            let mut r = base.r(x);
            r[(2, 2)] += 0.1;
            r
        })
        .renamed(NEGATIVE_CONTROL);
    Ok(Suite {
        plant: sys.plant,
        design: DesignKind::Msea(perturbed),
        region: im_region(),
        falsifier: im_falsifier(),
    })
}

pub fn pendulum_suite(params: &PendulumParams) -> Result<Suite> {
    let sys = pendulum::pendulum_system(params)?;
    Ok(Suite {
        plant: sys.plant,
        design: DesignKind::Epd(sys.epd),
        region: pendulum_region(),
        falsifier: pendulum_falsifier(),
    })
}

/// Built-in suite by name, with the default parameters.
pub fn builtin_suite(name: &str) -> Result<Suite> {
    let pi4 = std::f64::consts::FRAC_PI_4;
    match name {
        "im_msea" => im_suite(&ImParams::default(), false),
        "im_epd" => im_suite(&ImParams::default(), true),
        "pendulum_local" => pendulum_suite(&PendulumParams::local(5.0, pi4)),
        "pendulum_global" => pendulum_suite(&PendulumParams::almost_global(20.0, 2.0, pi4)),
        NEGATIVE_CONTROL => im_perturbed_suite(&ImParams::default()),
        other => Err(Error::Config(format!(
            "unknown design '{other}' (expected one of {}, {NEGATIVE_CONTROL})",
            BUILTIN_DESIGNS.join(", ")
        ))),
    }
}

pub fn verify_builtin(name: &str, opts: &VerifyOptions) -> Result<Report> {
    Ok(run_suite(&builtin_suite(name)?, opts))
}

pub fn run_suite(suite: &Suite, opts: &VerifyOptions) -> Report {
    let points = suite.grid(opts.grid, opts.seed);
    let mut report = Report::new(suite.name());
    for check in common_checks(&suite.plant, suite.base(), &points) {
        report.push(check);
    }
    match &suite.design {
        DesignKind::Msea(d) => {
            report.push(msea::check_h2(d, opts.grid, opts.seed));
            report.push(msea::check_orbit_nonvanishing(d));
            report.push(msea::check_minimum(d, opts.grid, 0.5, opts.seed));
            report.push(msea::check_jordan(d.orbit()));
        }
        DesignKind::Epd(d) => {
            report.push(epd::pd_condition_check(d, &points));
            report.push(epd::check_h4(d, &points));
            report.push(epd::check_h5(d));
            report.push(energy_rate_check(d, &points));
            report.push(msea::check_jordan(d.orbit()));
        }
    }
    if opts.falsifier_states > 0 {
        for check in falsify(suite, opts) {
            report.push(check);
        }
    }
    report
}

/// Skew/symmetry, matching residual, matching identity and gradient consistency.
pub fn common_checks(plant: &ControlAffinePlant, design: &PhDesign, points: &[Vector]) -> Vec<CheckResult> {
    let mut structure = CheckResult::new("skew_symmetry");
    let mut residual = CheckResult::new("matching_residual");
    let mut identity = CheckResult::new("matching_identity");
    let mut gradient = CheckResult::new("gradient_consistency");

    for (k, x) in points.iter().enumerate() {
        let defect = skew_defect(&design.j(x)).max(symmetry_defect(&design.r(x)));
        structure.observe(defect);
        if !(defect < 1e-12) {
            structure.violate(x, defect, "J not skew or R not symmetric");
        }

        match ph::matching_residual(plant, design, x) {
            Ok(r) => {
                let v = r.amax();
                residual.observe(v);
                if !(v < 1e-9) {
                    residual.violate(x, v, "g_perp (f - (J - R) grad H) is nonzero");
                }
            }
            Err(e) => residual.violate(x, f64::NAN, e.to_string()),
        }

        let closed = ph::closed_loop_field(design, x).and_then(|target| {
            let u = ph::ida_control(plant, design, x)?;
            Ok((plant.field(x, &u) - target).amax())
        });
        match closed {
            Ok(v) => {
                identity.observe(v);
                if !(v < 1e-9) {
                    identity.violate(x, v, "f + g u differs from the target field");
                }
            }
            Err(e) => identity.violate(x, f64::NAN, e.to_string()),
        }

        if k < 100 {
            let h = design.hamiltonian_fn();
            let fd = grad_fd(move |y: &Vector| h(y), x, 1.0);
            let g = design.grad_h(x);
            let v = (&g - fd).amax() / (1.0 + g.amax());
            gradient.observe(v);
            if !(v < 1e-5) {
                gradient.violate(x, v, "analytic gradient disagrees with finite differences");
            }
        }
    }
    vec![structure, residual, identity, gradient]
}

/// `dH_ℓ ≤ 0` and `dV ≤ 0` pointwise.
pub fn energy_rate_check(design: &EpdDesign, points: &[Vector]) -> CheckResult {
    let mut check = CheckResult::new("energy_rates");
    for x in points {
        let r = epd::energy_rates(design, x);
        let worst = r.dhl.max(r.dv);
        check.observe(worst);
        if !(worst <= 1e-12) {
            check.violate(x, worst, "dH_l or dV positive");
        }
    }
    check
}

/// Closed loop through the registered controller (generic law as fallback).
pub fn closed_loop(plant: &ControlAffinePlant, design: &PhDesign) -> ClosedLoop {
    let (p, d) = (plant.clone(), design.clone());
    ClosedLoop::new(plant.clone(), move |x: &Vector| ph::feedback(&p, &d, x))
}

/// Simulation falsifiers for the hypotheses that have no finite check: from
/// perturbed states near the orbit, trajectories must reach it (H1 for MSEA,
/// H3 for EPD) with the design's energy function never increasing.
pub fn falsify(suite: &Suite, opts: &VerifyOptions) -> Vec<CheckResult> {
    let orbit = suite.orbit().clone();
    let base = suite.base().clone();
    let f = suite.falsifier;
    let starts = orbit.tube_points(opts.falsifier_states, 1e-2, f.tube_radius, opts.seed ^ 0xFA15, |x| !base.is_singular(x));

    let energy: Arc<dyn Fn(&Vector) -> f64 + Send + Sync> = match &suite.design {
        DesignKind::Msea(d) => d.base().hamiltonian_fn(),
        DesignKind::Epd(d) => {
            let d = d.clone();
            Arc::new(move |x: &Vector| 0.5 * d.phi(x).powi(2))
        }
    };
    let cl = closed_loop(&suite.plant, &base);
    let runs: Vec<_> = starts
        .par_iter()
        .map(|x0| (x0.clone(), cl.simulate(x0, &f.settings)))
        .collect();

    let (conv_name, energy_name) = match suite.design {
        DesignKind::Msea(_) => ("h1_falsifier", "energy_descent"),
        DesignKind::Epd(_) => ("h3_falsifier", "v_descent"),
    };
    let mut conv = CheckResult::new(conv_name).heuristic();
    let mut descent = CheckResult::new(energy_name)
        .heuristic()
        .with_note("increments counted between consecutive samples inside the design domain");
    let mut kernel = CheckResult::new("damping_kernel").heuristic();
    if starts.len() < opts.falsifier_states {
        conv.fail(format!("only {} of {} initial states found", starts.len(), opts.falsifier_states));
    }
    for (x0, run) in runs {
        let traj = match run {
            Ok(t) => t,
            Err(e) => {
                conv.violate(&x0, f64::NAN, e.to_string());
                continue;
            }
        };
        let last = traj.x.last().expect("non-empty trajectory");
        let d = orbit.distance(last);
        conv.observe(d);
        if !(d < f.final_dist) {
            conv.violate(&x0, d, format!("distance to orbit {d:.3e} at t = {}", f.settings.t_end));
        }
        // descent is only claimed while the state stays in the design domain
        let part = orbit.partition();
        let inside: Vec<bool> = traj.x.iter().map(|x| orbit.in_domain(&part.xp(x))).collect();
        let values: Vec<f64> = traj.x.iter().map(|x| energy(x)).collect();
        let inc = (1..values.len())
            .filter(|&k| inside[k - 1] && inside[k])
            .map(|k| values[k] - values[k - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        descent.observe(inc);
        if !(inc <= 1e-9) {
            descent.violate(&x0, inc, "energy increased along the trajectory");
        }
        if let DesignKind::Epd(d) = &suite.design {
            let k = epd::kernel_diagnostic(d, &traj.x, 10);
            kernel.checked += k.checked;
            if !k.passed {
                kernel.violate(&x0, k.violation_count as f64, "persistent damping-kernel samples");
            }
        }
    }
    let mut out = vec![conv, descent];
    if matches!(suite.design, DesignKind::Epd(_)) {
        out.push(kernel);
    }
    out
}
