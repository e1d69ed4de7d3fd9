//! Small numerical helpers: derivative-free simplex minimization, damped
//! Newton descent, scalar bisection, and polynomial least squares.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("bisection bracket does not change sign: f(a)={fa}, f(b)={fb}")]
    NoBracket { fa: f64, fb: f64 },
    #[error("iteration limit reached without convergence")]
    NoConvergence,
    #[error("least-squares system is rank deficient")]
    RankDeficient,
}

/// Nelder–Mead simplex minimization. Deterministic; `scale` sets the
/// initial simplex edge per coordinate. Returns (x, f(x)).
pub fn nelder_mead<F>(
    f: F,
    x0: &[f64],
    scale: &[f64],
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        // Convergence: simplex extent and value spread.
        let spread = simplex[n].1 - simplex[0].1;
        let extent = (0..n)
            .map(|i| {
                simplex
                    .iter()
                    .map(|(x, _)| x[i])
                    .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
            })
            .map(|(lo, hi)| hi - lo)
            .fold(0.0f64, f64::max);
        if extent < xtol && spread.abs() < ftol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let refl: Vec<f64> = (0..n)
            .map(|i| centroid[i] + alpha * (centroid[i] - worst.0[i]))
            .collect();
        let f_refl = f(&refl);
        if f_refl < simplex[0].1 {
            let exp: Vec<f64> = (0..n)
                .map(|i| centroid[i] + gamma * (refl[i] - centroid[i]))
                .collect();
            let f_exp = f(&exp);
            simplex[n] = if f_exp < f_refl { (exp, f_exp) } else { (refl, f_refl) };
        } else if f_refl < simplex[n - 1].1 {
            simplex[n] = (refl, f_refl);
        } else {
            let contr: Vec<f64> = (0..n)
                .map(|i| centroid[i] + rho * (worst.0[i] - centroid[i]))
                .collect();
            let f_contr = f(&contr);
            if f_contr < worst.1 {
                simplex[n] = (contr, f_contr);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n)
                        .map(|i| best[i] + sigma * (item.0[i] - best[i]))
                        .collect();
                    let fx = f(&x);
                    *item = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].clone()
}

/// Damped Newton descent on a 3-D scalar function with externally supplied
/// gradient. The Hessian is taken by central differences of the gradient.
/// Returns `Some((x, grad_norm))` when the gradient norm drops below
/// `gtol`, `None` on divergence or iteration exhaustion.
pub fn newton_descent_3d<F, G>(
    f: F,
    grad: G,
    x0: Vector3<f64>,
    gtol: f64,
    max_step: f64,
    max_iter: usize,
) -> Option<(Vector3<f64>, f64)>
where
    F: Fn(&Vector3<f64>) -> f64,
    G: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let mut x = x0;
    let mut fx = f(&x);
    for _ in 0..max_iter {
        let g = grad(&x);
        let gnorm = g.norm();
        if gnorm < gtol {
            return Some((x, gnorm));
        }
        let h = 2e-8;
        let mut hess = Matrix3::zeros();
        for j in 0..3 {
            let mut pp = x;
            let mut pm = x;
            pp[j] += h;
            pm[j] -= h;
            hess.set_column(j, &((grad(&pp) - grad(&pm)) / (2.0 * h)));
        }
        hess = (hess + hess.transpose()) * 0.5;
        // Newton step, regularized toward gradient descent if indefinite
        // or nearly singular.
        let mut step = match hess.try_inverse() {
            Some(inv) => -(inv * g),
            None => -g.normalize() * max_step,
        };
        if !step.iter().all(|v| v.is_finite()) || step.dot(&g) > 0.0 {
            step = -g.normalize() * max_step;
        }
        if step.norm() > max_step {
            step = step.normalize() * max_step;
        }
        // Backtracking line search on f.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xn = x + step * t;
            if xn.y > 0.0 {
                let fn_ = f(&xn);
                if fn_ <= fx {
                    x = xn;
                    fx = fn_;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // Stuck: accept only if gradient already small-ish.
            let g = grad(&x);
            return if g.norm() < gtol * 100.0 { Some((x, g.norm())) } else { None };
        }
    }
    let g = grad(&x);
    if g.norm() < gtol * 100.0 {
        Some((x, g.norm()))
    } else {
        None
    }
}

/// Bisection root finding on `[a, b]`.
pub fn bisect<F>(f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Result<f64, OptimError>
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(OptimError::NoBracket { fa, fb });
    }
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a).abs() < xtol {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Least-squares polynomial fit: returns coefficients `c[0..=degree]` of
/// Σ c_k x^k minimizing the residual over the samples.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>, OptimError> {
    assert_eq!(xs.len(), ys.len());
    let m = xs.len();
    let n = degree + 1;
    if m < n {
        return Err(OptimError::RankDeficient);
    }
    // Scale x for conditioning.
    let sx = xs.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut a = DMatrix::zeros(m, n);
    for (i, &x) in xs.iter().enumerate() {
        let t = x / sx;
        let mut pw = 1.0;
        for j in 0..n {
            a[(i, j)] = pw;
            pw *= t;
        }
    }
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|_| OptimError::RankDeficient)?;
    Ok((0..n).map(|j| sol[j] / sx.powi(j as i32)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nelder_mead_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let (x, fx) = nelder_mead(f, &[0.0, 0.0], &[0.1, 0.1], 1e-12, 1e-18, 500);
        assert_relative_eq!(x[0], 1.5, epsilon = 1e-6);
        assert_relative_eq!(x[1], -0.5, epsilon = 1e-6);
        assert!(fx < 1e-12);
    }

    #[test]
    fn newton_finds_minimum() {
        let f = |p: &nalgebra::Vector3<f64>| {
            (p.x - 1e-5).powi(2) + 2.0 * (p.y - 2e-5).powi(2) + 0.5 * (p.z + 1e-5).powi(2)
        };
        let g = |p: &nalgebra::Vector3<f64>| {
            nalgebra::Vector3::new(
                2.0 * (p.x - 1e-5),
                4.0 * (p.y - 2e-5),
                p.z + 1e-5,
            )
        };
        let (x, gn) = newton_descent_3d(
            f,
            g,
            nalgebra::Vector3::new(0.0, 1e-5, 0.0),
            1e-12,
            1e-4,
            100,
        )
        .unwrap();
        assert!(gn < 1e-10);
        assert_relative_eq!(x.x, 1e-5, epsilon = 1e-10);
        assert_relative_eq!(x.y, 2e-5, epsilon = 1e-10);
        assert_relative_eq!(x.z, -1e-5, epsilon = 1e-10);
    }

    #[test]
    fn bisect_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12, 200).unwrap();
        assert_relative_eq!(r, std::f64::consts::SQRT_2, epsilon = 1e-10);
        assert!(bisect(|x| x * x + 1.0, 0.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn polyfit_exact_quartic() {
        let c_true = [0.3, -1.2, 0.0, 2.0, -0.7];
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| c_true.iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum())
            .collect();
        let c = polyfit(&xs, &ys, 4).unwrap();
        for (a, b) in c.iter().zip(c_true.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }
}
