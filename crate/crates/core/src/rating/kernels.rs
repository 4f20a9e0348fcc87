//! Truncated-Gaussian correction functions used by the two-player update.
//!
//! `v` is the shift of the mean and `w` the relative shrink of the variance
//! when a unit Gaussian centred at `t` is truncated to the region consistent
//! with the observed outcome (`x > eps` for a win, `|x| < eps` for a draw).
//!
//! All ratios are evaluated through the Mills ratio `Q(y) / phi(y)`, which in
//! turn is a scaled complementary error function. The naive density over
//! CDF form underflows long before `t = -40`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument the scaled erfc switches from `exp(z^2) erfc(z)` to a
/// continued fraction. `z = 7` corresponds to `t = -9.9` in the win kernel.
const ERFCX_CF_THRESHOLD: f64 = 7.0;
const ERFCX_CF_TERMS: usize = 80;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function `exp(z^2) erfc(z)`.
pub fn erfcx(z: f64) -> f64 {
    if z < 0.0 {
        // reflection; overflows to +inf for z < -26.6
        2.0 * (z * z).exp() - erfcx(-z)
    } else if z < ERFCX_CF_THRESHOLD {
        (z * z).exp() * libm::erfc(z)
    } else {
        // erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
        let mut tail = z;
        for k in (1..=ERFCX_CF_TERMS).rev() {
            tail = z + (k as f64 * 0.5) / tail;
        }
        1.0 / (PI.sqrt() * tail)
    }
}

/// Mills ratio `(1 - Phi(y)) / phi(y)`.
pub fn mills_ratio(y: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(y * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Rational approximation (Acklam) followed by one Halley refinement step,
/// which brings the relative error down to roughly machine precision.
pub fn inverse_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse normal CDF needs p in (0, 1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley step on Phi(x) - p
    let e = cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

fn check_finite(t: f64, eps: f64) -> Result<()> {
    if t.is_finite() && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "kernel arguments must be finite, got t = {t}, eps = {eps}"
        )))
    }
}

/// Keeps a variance multiplier strictly inside (0, 1) where the exact value
/// is closer to a bound than f64 can represent.
fn clamp_open_unit(w: f64) -> f64 {
    w.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Mean correction for a win: `phi(t - eps) / Phi(t - eps)`.
pub fn v_win(t: f64, eps: f64) -> Result<f64> {
    check_finite(t, eps)?;
    let x = t - eps;
    if x >= 0.0 {
        Ok(pdf(x) / cdf(x))
    } else {
        Ok(1.0 / mills_ratio(-x))
    }
}

/// Variance correction for a win: `v (v + t - eps)`.
pub fn w_win(t: f64, eps: f64) -> Result<f64> {
    let v = v_win(t, eps)?;
    Ok(clamp_open_unit(v * (v + t - eps)))
}

/// Both draw corrections for `t >= 0`, as `(v, w)`.
fn draw_corrections_nonneg(s: f64, eps: f64) -> Result<(f64, f64)> {
    let lo = s - eps;
    let hi = s + eps;
    let (v, tail) = if lo < 0.0 {
        // the truncation window contains the origin; evaluate directly,
        // erf sum has no cancellation here
        let den = 0.5 * (libm::erf((eps - s) * FRAC_1_SQRT_2) + libm::erf(hi * FRAC_1_SQRT_2));
        if !(den > 0.0 && den.is_finite()) {
            return Err(degenerate(s, eps, den));
        }
        let v = (pdf(hi) - pdf(lo)) / den;
        (v, ((eps - s) * pdf(lo) + hi * pdf(hi)) / den)
    } else {
        // everything scaled by phi(lo); phi(hi) / phi(lo) = exp(-2 s eps)
        let ratio = (-2.0 * s * eps).exp();
        let den = mills_ratio(lo) - mills_ratio(hi) * ratio;
        if !(den > 0.0 && den.is_finite()) {
            return Err(degenerate(s, eps, den));
        }
        let v = (-2.0 * s * eps).exp_m1() / den;
        (v, (hi * ratio - lo) / den)
    };
    Ok((v, clamp_open_unit(v * v + tail)))
}

fn degenerate(t: f64, eps: f64, den: f64) -> Error {
    Error::NumericDomain(format!(
        "draw window probability is not positive (t = {t}, eps = {eps}, scaled mass = {den:e}); \
         a draw needs a positive draw margin"
    ))
}

/// Mean correction for a draw:
/// `(phi(-eps - t) - phi(eps - t)) / (Phi(eps - t) - Phi(-eps - t))`.
pub fn v_draw(t: f64, eps: f64) -> Result<f64> {
    check_finite(t, eps)?;
    let (v, _) = draw_corrections_nonneg(t.abs(), eps)?;
    Ok(if t < 0.0 { -v } else { v })
}

/// Variance correction for a draw.
pub fn w_draw(t: f64, eps: f64) -> Result<f64> {
    check_finite(t, eps)?;
    let (_, w) = draw_corrections_nonneg(t.abs(), eps)?;
    Ok(w)
}

/// Draw margin for a configured draw probability:
/// `Phi^-1((p + 1) / 2) * sqrt(n_players) * beta`.
pub fn eps_from_draw_probability(p: f64, beta: f64, n_players: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "draw probability must be in [0, 1), got {p}"
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(inverse_cdf((p + 1.0) / 2.0)? * f64::from(n_players).sqrt() * beta)
}

/// Inverse of [`eps_from_draw_probability`].
pub fn draw_probability_from_eps(eps: f64, beta: f64, n_players: u32) -> Result<f64> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "draw margin must be >= 0, got {eps}"
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let z = eps / (f64::from(n_players).sqrt() * beta);
    // 2 Phi(z) - 1 = erf(z / sqrt 2)
    Ok(libm::erf(z / SQRT_2))
}
