//! Independent numerical oracles for the rating kernels.
//!
//! Nothing here calls into the crate's kernels: truncated-Gaussian moments
//! come from composite Gauss-Legendre quadrature of the density itself.

#![allow(dead_code)]

use std::f64::consts::PI;

pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on [-1, 1] by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [lo, hi] split into `panels` equal pieces.
    pub fn integrate(&self, lo: f64, hi: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            let mid = a + 0.5 * h;
            let mut s = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                s += w * f(mid + 0.5 * h * x);
            }
            total += 0.5 * h * s;
        }
        total
    }
}

pub fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// (v, w) for a win: Y ~ N(0,1) truncated to Y > -(t - eps).
///
/// With a = eps - t and Y = a + u, the density ratio phi(a + u) / phi(a) is
/// exp(-a u - u^2 / 2), which stays representable for every |t| <= 8.
pub fn win_moments(t: f64, eps: f64) -> (f64, f64) {
    let gl = GaussLegendre::new(20);
    let a = eps - t;
    let hi = (-a).max(0.0) + 16.0;
    let panels = (hi * 8.0).ceil() as usize;
    let kernel = |u: f64| (-a * u - 0.5 * u * u).exp();
    let i0 = gl.integrate(0.0, hi, panels, kernel);
    let i1 = gl.integrate(0.0, hi, panels, |u| u * kernel(u));
    let i2 = gl.integrate(0.0, hi, panels, |u| u * u * kernel(u));
    // moments of u, then shift by a
    let mean_u = i1 / i0;
    let var = i2 / i0 - mean_u * mean_u;
    let v = a + mean_u;
    (v, 1.0 - var)
}

/// (v, w) for a draw: Y ~ N(0,1) truncated to [-eps - t, eps - t].
pub fn draw_moments(t: f64, eps: f64) -> (f64, f64) {
    let gl = GaussLegendre::new(20);
    let lo = -eps - t;
    let hi = eps - t;
    // centre the integrand on the end of the window nearest the origin
    let anchor = if hi < 0.0 {
        hi
    } else if lo > 0.0 {
        lo
    } else {
        0.0
    };
    let scale = density(anchor);
    let f = |y: f64| density(y) / scale;
    let panels = ((hi - lo) * 40.0).ceil().max(8.0) as usize;
    let m0 = gl.integrate(lo, hi, panels, f);
    let m1 = gl.integrate(lo, hi, panels, |y| (y - anchor) * f(y));
    let m2 = gl.integrate(lo, hi, panels, |y| (y - anchor) * (y - anchor) * f(y));
    let mean_shift = m1 / m0;
    let var = m2 / m0 - mean_shift * mean_shift;
    (anchor + mean_shift, 1.0 - var)
}

/// Posterior mean and stddev of both skills after "A beats B by more than
/// eps", by conditioning the joint Gaussian of (skill, performance gap) and
/// integrating the truncated gap distribution numerically.
pub fn win_posterior(
    (mu_a, sigma_a): (f64, f64),
    (mu_b, sigma_b): (f64, f64),
    beta: f64,
    tau: f64,
    eps: f64,
) -> ((f64, f64), (f64, f64)) {
    let var_a = sigma_a * sigma_a + tau * tau;
    let var_b = sigma_b * sigma_b + tau * tau;
    let gap_mean = mu_a - mu_b;
    let gap_var = var_a + var_b + 2.0 * beta * beta;
    let gap_sd = gap_var.sqrt();

    let gl = GaussLegendre::new(20);
    let hi = gap_mean.max(eps) + 40.0 * gap_sd;
    let panels = 4000;
    let f = |d: f64| density((d - gap_mean) / gap_sd);
    let m0 = gl.integrate(eps, hi, panels, f);
    let m1 = gl.integrate(eps, hi, panels, |d| (d - gap_mean) * f(d));
    let m2 = gl.integrate(eps, hi, panels, |d| (d - gap_mean) * (d - gap_mean) * f(d));
    let gap_shift = m1 / m0;
    let gap_trunc_var = m2 / m0 - gap_shift * gap_shift;

    // Cov(s_a, gap) = var_a, Cov(s_b, gap) = -var_b
    let post = |mu: f64, var: f64, cov: f64| {
        let k = cov / gap_var;
        let mean = mu + k * gap_shift;
        let v = var - cov * cov / gap_var + k * k * gap_trunc_var;
        (mean, v.sqrt())
    };
    (post(mu_a, var_a, var_a), post(mu_b, var_b, -var_b))
}

/// Standard normal CDF by quadrature, for bisection oracles.
pub fn cdf(x: f64) -> f64 {
    let gl = GaussLegendre::new(20);
    if x <= 0.0 {
        gl.integrate(x - 40.0, x, 800, density)
    } else {
        1.0 - gl.integrate(-x - 40.0, -x, 800, density)
    }
}
