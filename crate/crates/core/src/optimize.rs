//! Small numerical optimisers shared by the fitting code: weighted
//! Levenberg–Marquardt with analytic Jacobians, Nelder–Mead simplex, and
//! golden-section line search.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Weighted least-squares problem `min Σ ((y_i − model(x_i; p)) / σ_i)²`.
pub trait Model {
    fn n_params(&self) -> usize;
    /// Model value and gradient with respect to the parameters at `x`.
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64;
    /// Whether `p` is inside the model's domain.
    fn admissible(&self, _p: &[f64]) -> bool {
        true
    }
}

#[derive(Clone, Debug)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Inverse of the weighted normal matrix, i.e. parameter covariance for
    /// absolute data uncertainties.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative χ² decrease falls below this.
    pub ftol: f64,
    /// Stop when the relative step size falls below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 500, ftol: 1e-15, xtol: 1e-13 }
    }
}

fn normal_equations<M: Model>(m: &M, x: &[f64], y: &[f64], sigma: &[f64], p: &[f64]) -> (DMatrix<f64>, DVector<f64>, f64) {
    let k = m.n_params();
    let mut jtj = DMatrix::zeros(k, k);
    let mut jtr = DVector::zeros(k);
    let mut chi2 = 0.0;
    let mut g = vec![0.0; k];
    for i in 0..x.len() {
        let v = m.eval(x[i], p, &mut g);
        let w = 1.0 / (sigma[i] * sigma[i]);
        let r = y[i] - v;
        chi2 += r * r * w;
        for a in 0..k {
            jtr[a] += w * g[a] * r;
            for b in 0..=a {
                jtj[(a, b)] += w * g[a] * g[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            jtj[(b, a)] = jtj[(a, b)];
        }
    }
    (jtj, jtr, chi2)
}

fn chi2_at<M: Model>(m: &M, x: &[f64], y: &[f64], sigma: &[f64], p: &[f64]) -> f64 {
    let mut g = vec![0.0; m.n_params()];
    x.iter()
        .zip(y)
        .zip(sigma)
        .map(|((&xi, &yi), &si)| {
            let r = (yi - m.eval(xi, p, &mut g)) / si;
            r * r
        })
        .sum()
}

/// Levenberg–Marquardt with Marquardt diagonal scaling.
pub fn levenberg_marquardt<M: Model>(
    model: &M,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
    opts: LmOptions,
) -> Result<LmFit> {
    let k = model.n_params();
    if p0.len() != k {
        return Err(Error::invalid("initial parameter vector has wrong length"));
    }
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::invalid("x, y and sigma must have equal length"));
    }
    if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("data uncertainties must be positive and finite"));
    }
    if !model.admissible(p0) {
        return Err(Error::invalid("initial parameters outside the model domain"));
    }
    let mut p = p0.to_vec();
    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut chi2) = normal_equations(model, x, y, sigma, &p);
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let mut a = jtj.clone();
        for d in 0..k {
            a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
        }
        let step = match a.clone().cholesky() {
            Some(c) => c.solve(&jtr),
            None => {
                lambda *= 10.0;
                if lambda > 1e30 {
                    break;
                }
                continue;
            }
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(pi, si)| pi + si).collect();
        let trial_chi2 = if model.admissible(&trial) { chi2_at(model, x, y, sigma, &trial) } else { f64::INFINITY };
        if trial_chi2.is_finite() && trial_chi2 <= chi2 {
            let rel_f = (chi2 - trial_chi2) / chi2.max(1e-300);
            let rel_x = step
                .iter()
                .zip(&p)
                .map(|(s, pi)| (s / pi.abs().max(1e-300)).abs())
                .fold(0.0, f64::max);
            p = trial;
            let ne = normal_equations(model, x, y, sigma, &p);
            jtj = ne.0;
            jtr = ne.1;
            chi2 = ne.2;
            lambda = (lambda * 0.3).max(1e-12);
            if rel_f < opts.ftol || rel_x < opts.xtol || chi2 < 1e-28 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e30 {
                // no descent direction left: at a (numerical) minimum
                converged = jtr.norm() < 1e-6 * (1.0 + chi2);
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: it, residual: chi2 });
    }
    let cov = jtj
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular normal matrix at the optimum".into()))?;
    let covariance = (0..k).map(|a| (0..k).map(|b| cov[(a, b)]).collect()).collect();
    Ok(LmFit { params: p, covariance, chi2, iterations: it })
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Convergence threshold on the spread of simplex values.
    pub ftol: f64,
    /// Convergence threshold on the simplex size (per coordinate, absolute).
    pub xtol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_evals: 4000, ftol: 1e-10, xtol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead minimisation. `f` may return `+∞` to mark infeasible points.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], scale: &[f64], opts: SimplexOptions) -> SimplexResult {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for d in 0..n {
        let mut p = x0.to_vec();
        p[d] += scale[d];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let fspread = (vals[n] - vals[0]).abs();
        let xspread = (1..=n)
            .flat_map(|i| (0..n).map(move |d| (i, d)))
            .map(|(i, d)| (pts[i][d] - pts[0][d]).abs())
            .fold(0.0, f64::max);
        if vals[n].is_finite() && fspread <= opts.ftol * (1.0 + vals[0].abs()) && xspread <= opts.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|d| pts[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (pts[n][d] - centroid[d])).collect() };

        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    for d in 0..n {
                        pts[i][d] = pts[0][d] + 0.5 * (pts[i][d] - pts[0][d]);
                    }
                    vals[i] = f(&pts[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    SimplexResult { x: pts[best].clone(), value: vals[best], evals, converged }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fx <= fc.min(fd) {
        (x, fx)
    } else if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Evaluate `f` on `n` uniform nodes of `[a, b)` and refine the best node by
/// golden section between its neighbours. With `periodic`, brackets may wrap
/// past the interval ends and the result is mapped back into `[a, b)`.
pub fn grid_then_golden<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize, periodic: bool, tol: f64) -> (f64, f64) {
    let n = n.max(3);
    let h = (b - a) / n as f64;
    let (mut best_i, mut best_v) = (0usize, f64::INFINITY);
    for i in 0..n {
        let v = f(a + i as f64 * h);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let x0 = a + best_i as f64 * h;
    let (lo, hi) = if periodic {
        (x0 - h, x0 + h)
    } else {
        ((x0 - h).max(a), (x0 + h).min(b))
    };
    let (x, v) = golden_section(&mut f, lo, hi, tol);
    let (x, v) = if v <= best_v { (x, v) } else { (x0, best_v) };
    if periodic {
        let period = b - a;
        (a + (x - a).rem_euclid(period), v)
    } else {
        (x, v)
    }
}

/// Bisection root finder for a continuous function with a sign change on `[a, b]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a).abs() < tol {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;
    impl Model for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
            g[0] = 1.0;
            g[1] = x;
            p[0] + p[1] * x
        }
    }

    #[test]
    fn lm_solves_linear_problem_exactly() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.5 - 0.25 * x).collect();
        let s = vec![0.1; 10];
        let fit = levenberg_marquardt(&Line, &x, &y, &s, &[0.0, 0.0], LmOptions::default()).unwrap();
        assert!((fit.params[0] - 1.5).abs() < 1e-10);
        assert!((fit.params[1] + 0.25).abs() < 1e-10);
        // covariance of slope for uniform σ: σ² / Σ (x − x̄)²
        let sxx: f64 = x.iter().map(|x| (x - 4.5) * (x - 4.5)).sum();
        assert!((fit.covariance[1][1] - 0.01 / sxx).abs() < 1e-12);
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let r = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            SimplexOptions { max_evals: 10_000, ftol: 1e-16, xtol: 1e-10 },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn golden_and_grid() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
        let (x, v) = grid_then_golden(|a| (2.0 * (a - 0.1)).cos(), 0.0, std::f64::consts::PI, 181, true, 1e-12);
        assert!((x - (0.1 + std::f64::consts::FRAC_PI_2)).abs() < 1e-7);
        assert!((v + 1.0).abs() < 1e-12);
        // minimum just below the interval start wraps to the top end
        let (x, _) = grid_then_golden(|a| -(2.0 * (a + 0.004)).cos(), 0.0, std::f64::consts::PI, 181, true, 1e-12);
        assert!((x - (std::f64::consts::PI - 0.004)).abs() < 1e-7);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
