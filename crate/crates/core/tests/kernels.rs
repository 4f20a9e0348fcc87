mod common;

use judgeboard_core::rating::kernels::{
    draw_probability_from_eps, eps_from_draw_probability, v_draw, v_win, w_draw, w_win,
};
use judgeboard_core::rating::{match_quality, update_pair, Gaussian, MatchOutcome, RatingParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

#[test]
fn oracle_self_check() {
    // closed forms at t = 0: v = sqrt(2/pi), w = 2/pi
    let (v, w) = common::win_moments(0.0, 0.0);
    assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-13);
    assert!((w - 2.0 / std::f64::consts::PI).abs() < 1e-13);
    let (v, _) = common::draw_moments(0.0, 0.74);
    assert!(v.abs() < 1e-14);
}

#[test]
fn win_kernels_match_quadrature() {
    for eps in [0.0, 0.3, 0.74, 2.0] {
        for t in grid(-8.0, 8.0, 0.25) {
            let (v_ref, w_ref) = common::win_moments(t, eps);
            let v = v_win(t, eps).unwrap();
            let w = w_win(t, eps).unwrap();
            assert!(
                (v - v_ref).abs() < 1e-9,
                "v_win({t}, {eps}) = {v}, oracle {v_ref}"
            );
            assert!(
                (w - w_ref).abs() < 1e-9,
                "w_win({t}, {eps}) = {w}, oracle {w_ref}"
            );
        }
    }
}

#[test]
fn draw_kernels_match_quadrature() {
    for eps in [0.05, 0.5, 0.74, 2.0, 5.0] {
        for t in grid(-8.0, 8.0, 0.25) {
            let (v_ref, w_ref) = common::draw_moments(t, eps);
            let v = v_draw(t, eps).unwrap();
            let w = w_draw(t, eps).unwrap();
            assert!(
                (v - v_ref).abs() < 1e-9,
                "v_draw({t}, {eps}) = {v}, oracle {v_ref}"
            );
            assert!(
                (w - w_ref).abs() < 1e-9,
                "w_draw({t}, {eps}) = {w}, oracle {w_ref}"
            );
        }
    }
    let (_, w_ref) = common::draw_moments(0.0, 0.74);
    let w = w_draw(0.0, 0.74).unwrap();
    assert!(w > 0.0 && w < 1.0);
    assert!((w - w_ref).abs() < 1e-9);
}

#[test]
fn win_kernel_range_and_monotonicity() {
    let mut prev = f64::INFINITY;
    for t in grid(-40.0, 8.0, 0.25) {
        let v = v_win(t, 0.0).unwrap();
        let w = w_win(t, 0.0).unwrap();
        assert!(v > 0.0 && v.is_finite(), "v_win({t}) = {v}");
        assert!(w > 0.0 && w < 1.0, "w_win({t}) = {w}");
        assert!(v < prev, "v_win not decreasing at {t}");
        prev = v;
    }
}

#[test]
fn draw_kernel_symmetry_on_grid() {
    for eps in [0.1, 0.74, 3.0] {
        for t in grid(0.0, 40.0, 0.5) {
            let (v_pos, v_neg) = (v_draw(t, eps).unwrap(), v_draw(-t, eps).unwrap());
            let (w_pos, w_neg) = (w_draw(t, eps).unwrap(), w_draw(-t, eps).unwrap());
            assert!((v_pos + v_neg).abs() < 1e-10);
            assert!((w_pos - w_neg).abs() < 1e-10);
            assert!(w_pos > 0.0 && w_pos < 1.0, "w_draw({t}, {eps}) = {w_pos}");
        }
    }
}

#[test]
fn kernels_stay_finite_over_full_range() {
    for eps in grid(0.0, 5.0, 0.25) {
        for t in grid(-40.0, 40.0, 0.25) {
            for value in [v_win(t, eps), w_win(t, eps)] {
                let x = value.unwrap();
                assert!(x.is_finite(), "win kernel at ({t}, {eps}) = {x}");
            }
            if eps > 0.0 {
                for value in [v_draw(t, eps), w_draw(t, eps)] {
                    let x = value.unwrap();
                    assert!(x.is_finite(), "draw kernel at ({t}, {eps}) = {x}");
                }
            }
        }
    }
}

#[test]
#[allow(clippy::excessive_precision)]
fn deep_tail_matches_high_precision_values() {
    // phi(t)/Phi(t) evaluated with 50-digit arithmetic
    let reference = [
        (-15.0, 15.066_086_827_167_822),
        (-25.0, 25.039_873_012_057_563),
        (-40.0, 40.024_968_847_207_264),
    ];
    for (t, want) in reference {
        let v = v_win(t, 0.0).unwrap();
        assert!(((v - want) / want).abs() < 1e-14, "{t}: {v} vs {want}");
        // leading terms of the asymptotic series: -t + 1/(-t)
        assert!((v - (-t + 1.0 / -t)).abs() < 2.0 / (-t).powi(3));
    }
}

#[test]
fn draw_margin_matches_bisection() {
    let beta = 25.0 / 6.0;
    for p in [0.1, 0.3, 0.44] {
        // forward map p(eps) = 2 Phi(eps / (sqrt 2 beta)) - 1, Phi by quadrature
        let forward = |eps: f64| 2.0 * common::cdf(eps / (2.0f64.sqrt() * beta)) - 1.0;
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if forward(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let eps = eps_from_draw_probability(p, beta, 2).unwrap();
        assert!((eps - lo).abs() < 1e-6, "p = {p}: {eps} vs bisection {lo}");
        let back = draw_probability_from_eps(eps, beta, 2).unwrap();
        assert!((back - p).abs() < 1e-9);
    }
    let eps = eps_from_draw_probability(0.10, beta, 2).unwrap();
    assert!((eps - 0.7404).abs() < 1e-4, "{eps}");
    assert!(eps_from_draw_probability(0.2, beta, 2).unwrap() > eps);
}

#[test]
fn first_win_matches_posterior_quadrature() {
    let p = RatingParams::default();
    let eps = eps_from_draw_probability(p.draw_probability, p.beta, 2).unwrap();
    let ((ma, sa), (mb, sb)) =
        common::win_posterior((p.mu0, p.sigma0), (p.mu0, p.sigma0), p.beta, p.tau, eps);
    let (a, b) = update_pair(p.prior(), p.prior(), MatchOutcome::WinA, &p).unwrap();
    assert!((a.mean() - ma).abs() < 1e-3);
    assert!((a.stddev() - sa).abs() < 1e-3);
    assert!((b.mean() - mb).abs() < 1e-3);
    assert!((b.stddev() - sb).abs() < 1e-3);
    assert!(
        (ma - 29.396).abs() < 1e-3 && (sa - 7.171).abs() < 1e-3,
        "oracle {ma} {sa}"
    );
}

#[test]
fn uneven_ratings_match_posterior_quadrature() {
    let p = RatingParams {
        tau: 0.3,
        draw_probability: 0.3,
        ..Default::default()
    };
    let eps = eps_from_draw_probability(p.draw_probability, p.beta, 2).unwrap();
    for (a, b) in [
        ((20.0, 3.0), (31.0, 6.5)),
        ((40.0, 1.2), (10.0, 8.0)),
        ((25.0, 0.5), (25.5, 0.7)),
    ] {
        let ((ma, sa), (mb, sb)) = common::win_posterior(a, b, p.beta, p.tau, eps);
        let (na, nb) = update_pair(
            Gaussian::new(a.0, a.1).unwrap(),
            Gaussian::new(b.0, b.1).unwrap(),
            MatchOutcome::WinA,
            &p,
        )
        .unwrap();
        for (got, want) in [
            (na.mean(), ma),
            (na.stddev(), sa),
            (nb.mean(), mb),
            (nb.stddev(), sb),
        ] {
            assert!((got - want).abs() < 1e-8, "{a:?} vs {b:?}: {got} vs {want}");
        }
    }
}

#[test]
fn match_quality_agrees_with_monte_carlo_draw_rate() {
    // q is the draw likelihood relative to a perfectly known, equal match:
    // P(|gap| < delta) / P0(|gap| < delta) for small delta.
    let p = RatingParams::default();
    let a = p.prior();
    let b = Gaussian::new(30.0, 5.0).unwrap();
    let q = match_quality(a, b, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let delta = 0.25;
    let n = 2_000_000;
    let mut hits = 0u64;
    let mut hits_ref = 0u64;
    for _ in 0..n {
        let sa = a.mean() + a.stddev() * normal(&mut rng);
        let sb = b.mean() + b.stddev() * normal(&mut rng);
        let gap = sa - sb + p.beta * normal(&mut rng) - p.beta * normal(&mut rng);
        hits += u64::from(gap.abs() < delta);
        let gap_ref = p.beta * normal(&mut rng) - p.beta * normal(&mut rng);
        hits_ref += u64::from(gap_ref.abs() < delta);
    }
    let estimate = hits as f64 / hits_ref as f64;
    assert!((estimate - q).abs() < 0.01, "monte carlo {estimate} vs {q}");
    let fresh = match_quality(p.prior(), p.prior(), &p).unwrap();
    assert!((fresh - 0.447).abs() < 1e-3);
}
