use super::linalg::{Matrix, Vector};

/// Central-difference gradient with per-coordinate step `cbrt(eps) * max(|x_i|, scale)`.
pub fn grad_fd<F>(h: F, x: &Vector, scale: f64) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    let base = f64::EPSILON.cbrt();
    let mut probe = x.clone();
    Vector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let step = base * x[i].abs().max(scale);
            probe[i] = x[i] + step;
            let up = h(&probe);
            probe[i] = x[i] - step;
            let down = h(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        }),
    )
}

/// Central-difference Hessian, step `eps^(1/4) * max(|x_i|, scale)`.
pub fn hessian_fd<F>(h: F, x: &Vector, scale: f64) -> Matrix
where
    F: Fn(&Vector) -> f64,
{
    let n = x.len();
    let base = f64::EPSILON.powf(0.25);
    let steps: Vec<f64> = x.iter().map(|xi| base * xi.abs().max(scale)).collect();
    let mut out = Matrix::zeros(n, n);
    let mut p = x.clone();
    let mut eval = |di: f64, i: usize, dj: f64, j: usize| {
        p.copy_from(x);
        p[i] += di;
        p[j] += dj;
        h(&p)
    };
    for i in 0..n {
        for j in i..n {
            let (si, sj) = (steps[i], steps[j]);
            let v = if i == j {
                let f0 = eval(0.0, i, 0.0, i);
                (eval(si, i, 0.0, i) - 2.0 * f0 + eval(-si, i, 0.0, i)) / (si * si)
            } else {
                (eval(si, i, sj, j) - eval(si, i, -sj, j) - eval(-si, i, sj, j)
                    + eval(-si, i, -sj, j))
                    / (4.0 * si * sj)
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let g = grad_fd(|x| 0.5 * x.norm_squared(), &Vector::from_vec(vec![3.0, 4.0]), 1.0);
        assert!((g[0] - 3.0).abs() < 1e-6);
        assert!((g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn bilinear_gradient() {
        let g = grad_fd(|x| x[0] * x[1], &Vector::from_vec(vec![2.0, 5.0]), 1.0);
        assert!((g[0] - 5.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_of_cubic() {
        // h = x³ + x y², Hessian [[6x, 2y], [2y, 2x]]
        let x = Vector::from_vec(vec![0.7, -0.3]);
        let hess = hessian_fd(|v| v[0].powi(3) + v[0] * v[1] * v[1], &x, 1.0);
        assert!((hess[(0, 0)] - 4.2).abs() < 1e-5);
        assert!((hess[(0, 1)] + 0.6).abs() < 1e-5);
        assert!((hess[(1, 1)] - 1.4).abs() < 1e-5);
    }
}
