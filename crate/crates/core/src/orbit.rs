//! Target orbits `𝒜 = 𝒞 × {x_ℓ*}` with `𝒞 = {x_p : Φ(x_p) = 0}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector2;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid;
use crate::ph::Partition;
use crate::numerics::Vector;

pub type PlanarScalar = Arc<dyn Fn(&Vector2<f64>) -> f64 + Send + Sync>;
pub type PlanarGradient = Arc<dyn Fn(&Vector2<f64>) -> Vector2<f64> + Send + Sync>;
pub type PlanarPredicateFn = dyn Fn(&Vector2<f64>) -> bool + Send + Sync;
pub type PlanarPredicate = Arc<PlanarPredicateFn>;
type Distance = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

pub const DEFAULT_CURVE_SAMPLES: usize = 2048;

/// How the curve samples are produced.
pub enum CurveSource {
    /// Closed-form parameterization over `s ∈ [0, 2π)`.
    Parameterized(Box<dyn Fn(f64) -> Vector2<f64>>),
    /// Follow the level set from a seed point near the curve.
    Traced { seed: Vector2<f64>, step: f64 },
}

#[derive(Clone)]
pub struct OrbitTarget {
    partition: Partition,
    phi: PlanarScalar,
    grad_phi: PlanarGradient,
    xl_star: Vector,
    samples: Vec<Vector2<f64>>,
    domain: Option<PlanarPredicate>,
    analytic_distance: Option<Distance>,
}

impl fmt::Debug for OrbitTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OrbitTarget")
            .field("partition", &self.partition)
            .field("xl_star", &self.xl_star.as_slice())
            .field("samples", &self.samples.len())
            .field("analytic_distance", &self.analytic_distance.is_some())
            .finish()
    }
}

impl OrbitTarget {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        partition: Partition,
        phi: impl Fn(&Vector2<f64>) -> f64 + Send + Sync + 'static,
        grad_phi: impl Fn(&Vector2<f64>) -> Vector2<f64> + Send + Sync + 'static,
        xl_star: Vector,
        source: CurveSource,
        n_samples: usize,
        domain: Option<PlanarPredicate>,
    ) -> Result<Self> {
        if xl_star.len() != partition.l_indices().len() {
            return Err(Error::Dimension(format!(
                "x_l* has {} entries, partition expects {}",
                xl_star.len(),
                partition.l_indices().len()
            )));
        }
        if n_samples < 8 {
            return Err(Error::invalid("n_samples", "need at least 8 curve samples"));
        }
        let phi: PlanarScalar = Arc::new(phi);
        let grad_phi: PlanarGradient = Arc::new(grad_phi);
        let samples = match source {
            CurveSource::Parameterized(param) => (0..n_samples)
                .map(|k| param(2.0 * std::f64::consts::PI * k as f64 / n_samples as f64))
                .collect(),
            CurveSource::Traced { seed, step } => {
                trace_level_set(&*phi, &*grad_phi, seed, step, n_samples, domain.as_deref())?
            }
        };
        let target = OrbitTarget {
            partition,
            phi,
            grad_phi,
            xl_star,
            samples,
            domain,
            analytic_distance: None,
        };
        target.validate_samples()?;
        Ok(target)
    }

    pub fn with_analytic_distance(mut self, d: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        self.analytic_distance = Some(Arc::new(d));
        self
    }

    /// Same curve, different implicit function (e.g. `H_p - H_p*` instead of `|x_p| - β⋆`).
    pub fn with_level_function(
        &self,
        phi: impl Fn(&Vector2<f64>) -> f64 + Send + Sync + 'static,
        grad_phi: impl Fn(&Vector2<f64>) -> Vector2<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let mut out = self.clone();
        out.phi = Arc::new(phi);
        out.grad_phi = Arc::new(grad_phi);
        out.validate_samples()?;
        Ok(out)
    }

    fn validate_samples(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            let v = (self.phi)(s);
            if !(v.abs() < 1e-10) {
                return Err(Error::OrbitTrace(format!(
                    "sample {k} at ({:.6}, {:.6}) has |Phi| = {:.3e}",
                    s[0],
                    s[1],
                    v.abs()
                )));
            }
            if !((self.grad_phi)(s).norm() > 1e-9) {
                return Err(Error::OrbitTrace(format!("grad Phi vanishes at sample {k}")));
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn xl_star(&self) -> &Vector {
        &self.xl_star
    }

    pub fn samples(&self) -> &[Vector2<f64>] {
        &self.samples
    }

    pub fn phi_p(&self, xp: &Vector2<f64>) -> f64 {
        (self.phi)(xp)
    }

    pub fn grad_phi_p(&self, xp: &Vector2<f64>) -> Vector2<f64> {
        (self.grad_phi)(xp)
    }

    pub fn phi(&self, x: &Vector) -> f64 {
        self.phi_p(&self.partition.xp(x))
    }

    pub fn phi_fn(&self) -> PlanarScalar {
        self.phi.clone()
    }

    pub fn grad_phi_fn(&self) -> PlanarGradient {
        self.grad_phi.clone()
    }

    pub fn in_domain(&self, xp: &Vector2<f64>) -> bool {
        self.domain.as_ref().is_none_or(|d| d(xp))
    }

    /// Full-state points of `𝒜` at the curve samples.
    pub fn orbit_points(&self) -> impl Iterator<Item = Vector> + '_ {
        self.samples
            .iter()
            .map(|s| self.partition.assemble(s, &self.xl_star))
    }

    /// Transverse coordinates `(Φ(x_p), x_ℓ - x_ℓ*)`.
    pub fn transverse(&self, x: &Vector) -> Vector {
        let xl = self.partition.xl(x) - &self.xl_star;
        let mut z = Vector::zeros(1 + xl.len());
        z[0] = self.phi(x);
        z.rows_mut(1, xl.len()).copy_from(&xl);
        z
    }

    /// `‖x‖_𝒜`: analytic when registered, otherwise through the sampled curve.
    pub fn distance(&self, x: &Vector) -> f64 {
        match &self.analytic_distance {
            Some(d) => d(x),
            None => self.sampled_distance(x),
        }
    }

    /// Distance to the closed polyline through the curve samples, combined with the x_ℓ offset.
    pub fn sampled_distance(&self, x: &Vector) -> f64 {
        let xp = self.partition.xp(x);
        let ell = (self.partition.xl(x) - &self.xl_star).norm_squared();
        let n = self.samples.len();
        let mut best = f64::INFINITY;
        for k in 0..n {
            let a = self.samples[k];
            let b = self.samples[(k + 1) % n];
            best = best.min(point_segment_dist2(&xp, &a, &b));
        }
        (best + ell).sqrt()
    }

    /// Random points with `r_min ≤ ‖x‖_𝒜 ≤ r_max` that satisfy `accept`,
    /// drawn as orbit samples plus a random direction and radius.
    pub fn tube_points(
        &self,
        count: usize,
        r_min: f64,
        r_max: f64,
        seed: u64,
        accept: impl Fn(&Vector) -> bool,
    ) -> Vec<Vector> {
        let n = self.partition.n();
        let mut rng = grid::rng(seed);
        let mut out = Vec::with_capacity(count);
        let mut draws = 0;
        while out.len() < count && draws < 200 * count {
            draws += 1;
            let s = self.samples[rng.random_range(0..self.samples.len())];
            let base = self.partition.assemble(&s, &self.xl_star);
            let mut dir = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let norm = dir.norm();
            if norm < 1e-3 {
                continue;
            }
            dir /= norm;
            let x = base + dir * rng.random_range(r_min..r_max);
            let d = self.distance(&x);
            if d >= r_min && d <= r_max && self.in_domain(&self.partition.xp(&x)) && accept(&x) {
                out.push(x);
            }
        }
        out
    }

    /// Mean spacing between consecutive samples.
    pub fn sample_spacing(&self) -> f64 {
        let n = self.samples.len();
        let len: f64 = (0..n)
            .map(|k| (self.samples[(k + 1) % n] - self.samples[k]).norm())
            .sum();
        len / n as f64
    }

    /// Closedness and simplicity of the sampled curve. Returns a description of
    /// the first problem found.
    pub fn jordan_defect(&self) -> Option<String> {
        let n = self.samples.len();
        let spacing = self.sample_spacing();
        let gap = (self.samples[0] - self.samples[n - 1]).norm();
        if gap > 4.0 * spacing {
            return Some(format!(
                "curve not closed: end gap {gap:.3e} vs spacing {spacing:.3e}"
            ));
        }
        for i in 0..n {
            let (a, b) = (self.samples[i], self.samples[(i + 1) % n]);
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (self.samples[j], self.samples[(j + 1) % n]);
                if segments_cross(&a, &b, &c, &d) {
                    return Some(format!("self-intersection between segments {i} and {j}"));
                }
            }
        }
        None
    }
}

fn point_segment_dist2(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm_squared()
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn segments_cross(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn project_to_curve(
    phi: &dyn Fn(&Vector2<f64>) -> f64,
    grad: &dyn Fn(&Vector2<f64>) -> Vector2<f64>,
    mut y: Vector2<f64>,
) -> Result<Vector2<f64>> {
    for _ in 0..60 {
        let v = phi(&y);
        if v.abs() < 1e-14 {
            return Ok(y);
        }
        let g = grad(&y);
        let g2 = g.norm_squared();
        if !(g2 > 1e-24) {
            return Err(Error::OrbitTrace("grad Phi vanishes while projecting".into()));
        }
        y -= g * (v / g2);
    }
    if phi(&y).abs() < 1e-11 {
        Ok(y)
    } else {
        Err(Error::OrbitTrace("Newton projection onto Phi = 0 did not converge".into()))
    }
}

/// Follows `Φ = 0` along the unit tangent `𝕁∇Φ/|∇Φ|` until the curve closes,
/// then resamples it uniformly in arc length.
fn trace_level_set(
    phi: &dyn Fn(&Vector2<f64>) -> f64,
    grad: &dyn Fn(&Vector2<f64>) -> Vector2<f64>,
    seed: Vector2<f64>,
    step: f64,
    n_samples: usize,
    domain: Option<&PlanarPredicateFn>,
) -> Result<Vec<Vector2<f64>>> {
    if !(step > 0.0) {
        return Err(Error::invalid("trace step", "must be positive"));
    }
    let tangent = |y: &Vector2<f64>| {
        let g = grad(y);
        Vector2::new(-g[1], g[0]) / g.norm()
    };
    let start = project_to_curve(phi, grad, seed)?;
    let t0 = tangent(&start);
    let mut pts = vec![start];
    let mut y = start;
    let mut travelled = 0.0;
    let max_steps = 10_000_000usize.min((1e4 / step) as usize + 1000);

    for _ in 0..max_steps {
        let k1 = tangent(&y);
        let k2 = tangent(&(y + k1 * (0.5 * step)));
        let k3 = tangent(&(y + k2 * (0.5 * step)));
        let k4 = tangent(&(y + k3 * step));
        let next = project_to_curve(phi, grad, y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0))?;
        if let Some(d) = domain {
            if !d(&next) {
                return Err(Error::OrbitTrace(format!(
                    "level set leaves the domain at ({:.6}, {:.6})",
                    next[0], next[1]
                )));
            }
        }
        travelled += (next - y).norm();
        let before = (y - start).dot(&t0);
        let after = (next - start).dot(&t0);
        if travelled > 20.0 * step && before < 0.0 && after >= 0.0 && (next - start).norm() < 10.0 * step {
            // crossing of the normal line through the start point
            let s = before / (before - after);
            let hit = y + (next - y) * s;
            let gap = (hit - start).norm();
            if gap > 1e-6 {
                return Err(Error::OrbitTrace(format!("curve does not close (gap {gap:.3e})")));
            }
            return resample(&pts, n_samples, phi, grad);
        }
        pts.push(next);
        y = next;
    }
    Err(Error::OrbitTrace("curve did not close within the step budget".into()))
}

fn resample(
    pts: &[Vector2<f64>],
    n_samples: usize,
    phi: &dyn Fn(&Vector2<f64>) -> f64,
    grad: &dyn Fn(&Vector2<f64>) -> Vector2<f64>,
) -> Result<Vec<Vector2<f64>>> {
    let n = pts.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for k in 0..n {
        let seg = (pts[(k + 1) % n] - pts[k]).norm();
        cum.push(cum[k] + seg);
    }
    let total = cum[n];
    let mut out = Vec::with_capacity(n_samples);
    let mut seg = 0;
    for i in 0..n_samples {
        let s = total * i as f64 / n_samples as f64;
        while seg + 1 < n && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let p = pts[seg] + (pts[(seg + 1) % n] - pts[seg]) * w;
        out.push(project_to_curve(phi, grad, p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(radius: f64, source: CurveSource) -> Result<OrbitTarget> {
        OrbitTarget::build(
            Partition::leading(3).unwrap(),
            move |p: &Vector2<f64>| p.norm() - radius,
            |p: &Vector2<f64>| p / p.norm(),
            Vector::from_vec(vec![2.0]),
            source,
            DEFAULT_CURVE_SAMPLES,
            None,
        )
    }

    #[test]
    fn parameterized_circle_samples_on_curve() {
        let o = circle(1.5, CurveSource::Parameterized(Box::new(|s| Vector2::new(1.5 * s.cos(), 1.5 * s.sin())))).unwrap();
        assert_eq!(o.samples().len(), 2048);
        assert!(o.jordan_defect().is_none());
        let on = Vector::from_vec(vec![1.5, 0.0, 2.0]);
        assert!(o.sampled_distance(&on) < 1e-12);
        let off = Vector::from_vec(vec![3.0, 0.0, 3.0]);
        assert!((o.sampled_distance(&off) - (1.5f64.powi(2) + 1.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn traced_circle_matches_parameterized() {
        let o = circle(1.0, CurveSource::Traced { seed: Vector2::new(1.2, 0.1), step: 1e-3 }).unwrap();
        assert!(o.jordan_defect().is_none());
        let spacing = o.sample_spacing();
        assert!((spacing - 2.0 * PI / 2048.0).abs() < 1e-5);
        for s in o.samples() {
            assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn figure_eight_is_not_jordan() {
        // lemniscate-like samples crossing at the origin
        let partition = Partition::leading(2).unwrap();
        let mut o = circle(1.0, CurveSource::Parameterized(Box::new(|s| Vector2::new(s.cos(), s.sin())))).unwrap();
        o.partition = partition;
        o.xl_star = Vector::zeros(0);
        o.samples = (0..256)
            .map(|k| {
                let s = 2.0 * PI * k as f64 / 256.0;
                Vector2::new(s.sin(), s.sin() * s.cos())
            })
            .collect();
        assert!(o.jordan_defect().unwrap().contains("self-intersection"));
    }

    #[test]
    fn tracing_rejects_domain_exit() {
        let err = OrbitTarget::build(
            Partition::leading(2).unwrap(),
            |p: &Vector2<f64>| p.norm() - 1.0,
            |p: &Vector2<f64>| p / p.norm(),
            Vector::zeros(0),
            CurveSource::Traced { seed: Vector2::new(1.0, 0.0), step: 1e-3 },
            256,
            Some(Arc::new(|p: &Vector2<f64>| p[0] > -0.5)),
        );
        assert!(matches!(err, Err(Error::OrbitTrace(_))));
    }

    #[test]
    fn transverse_coordinates() {
        let o = circle(1.0, CurveSource::Parameterized(Box::new(|s| Vector2::new(s.cos(), s.sin())))).unwrap();
        let z = o.transverse(&Vector::from_vec(vec![3.0, 4.0, 4.0]));
        assert_eq!(z.as_slice(), &[4.0, 2.0]);
        let z0 = o.transverse(&Vector::from_vec(vec![0.0, 1.0, 2.0]));
        assert!(z0.norm() < 1e-15);
    }
}
