use wavemap::matching::*;
use wavemap::segment_solver::*;

fn cfg() -> PicardConfig {
    PicardConfig::default()
}

fn psi(gap: f64, outside: bool) -> (f64, f64, f64) {
    let a = if outside { 1.0 + gap } else { 1.0 - gap };
    let p1 = (a * a - 1.0).abs() / (a * a);
    (a, p1, p1 * ((a - 1.0).abs() / (a + 1.0)).ln())
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn zero_data_give_zero_profile() {
    let im = match_interior(0.0, &cfg()).unwrap();
    assert_eq!((im.d1, im.d2, im.d3), (0.0, 0.0, 0.0));
    let em = match_exterior(0.0, 0.0, &cfg()).unwrap();
    assert_eq!((em.d1t, em.d2t, em.d3t), (0.0, 0.0, 0.0));
    let p = glue_at_cone(0.0, ExteriorChoice::Small { q1: 0.0 }, &cfg()).unwrap();
    for a in [0.1, 0.7, 1.3, 50.0] {
        assert_eq!(p.evaluate(a).unwrap().0, 0.0);
    }
    let c = p.cone_expansion;
    assert_eq!((c.inner.c1, c.inner.c2, c.c3, c.q4_envelope), (0.0, 0.0, 0.0, 0.0));
    assert_eq!((p.farfield.limit, p.farfield.coeff), (0.0, 0.0));
}

#[test]
fn interior_match_converges_and_is_odd() {
    let plus = match_interior(0.01, &cfg()).unwrap();
    let minus = match_interior(-0.01, &cfg()).unwrap();
    assert!(plus.newton.residual <= 1e-10);
    assert!(plus.newton.condition.is_finite() && plus.newton.jacobian_det.abs() > 1.0);
    assert!((plus.d1 + minus.d1).abs() < 1e-10);
    assert!((plus.d2 + minus.d2).abs() < 1e-10);
    assert!((plus.d3 + minus.d3).abs() < 1e-10);
}

#[test]
fn exterior_match_and_linear_response() {
    let em = match_exterior(0.01, 0.01, &cfg()).unwrap();
    assert!(em.newton.residual <= 1e-10);
    // linear theory: both sides solve the same linear equation, so the map is the identity
    let h = 1e-3;
    let col = |dq1: f64, dq2: f64| {
        let p = match_exterior(dq1, dq2, &cfg()).unwrap();
        let m = match_exterior(-dq1, -dq2, &cfg()).unwrap();
        [(p.d1t - m.d1t) / (2.0 * h), (p.d2t - m.d2t) / (2.0 * h)]
    };
    let (c1, c2) = (col(h, 0.0), col(0.0, h));
    let j = [[c1[0], c2[0]], [c1[1], c2[1]]];
    let id = [[1.0, 0.0], [0.0, 1.0]];
    for i in 0..2 {
        for k in 0..2 {
            assert!((j[i][k] - id[i][k]).abs() < 0.05, "J[{i}][{k}] = {}", j[i][k]);
        }
    }
}

#[test]
fn newton_converges_quadratically() {
    let im = match_interior(0.1, &cfg()).unwrap();
    let h = &im.newton.residual_history;
    let ratios: Vec<f64> = h
        .windows(2)
        .filter(|w| w[0] < 1e-4 && w[1] > 1e-14)
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    assert!(h.len() >= 2 && *h.last().unwrap() <= 1e-10, "{h:?}");
    if ratios.len() >= 2 {
        for w in ratios.windows(2) {
            let r = w[1] / w[0];
            assert!(r > 0.2 && r < 5.0, "{h:?}");
        }
    }
    // a residual below 1e-4 must reach the floor within two more steps
    let first = h.iter().position(|&r| r < 1e-4).unwrap();
    assert!(h.len() - first <= 4, "{h:?}");
}

#[test]
fn small_gluing() {
    let p = glue_at_cone(0.01, ExteriorChoice::Small { q1: 0.02 }, &cfg()).unwrap();
    assert!(p.cone_trace.residual() <= 1e-8);
    assert!((p.cone_trace.left - 2.0 * p.params.d3).abs() < 1e-12);
    assert!((p.cone_trace.right + 2.0 * p.params.d3t).abs() < 1e-12);
    for r in p.matching.interior.iter().chain(&p.matching.exterior) {
        assert!(r.abs() <= 1e-10);
    }
    let res = p.ode_residual();
    assert!(res.sup_on(0.05, 1.0 - 1e-8) < 1e-8);
    assert!(res.sup_on(1.0 + 1e-8, p.a_max()) < 1e-8);
    let q1 = p.params.q1;
    let c2 = -4.0 * p.params.q2;
    assert!((p.farfield.limit - q1).abs() < 0.01 * q1.abs());
    assert!((p.farfield.coeff - c2).abs() < 0.01 * c2.abs());
    // q1 - 4 q2/a on [10, 1e3] up to an O(1/a²) remainder
    for a in [10.0, 100.0, 1000.0] {
        let q = p.evaluate(a).unwrap().0;
        assert!((q - (q1 + c2 / a)).abs() * a * a < q1.abs() + c2.abs(), "a = {a}");
    }
}

#[test]
fn large_gluing() {
    let p = glue_at_cone(0.01, ExteriorChoice::Large { d1t: 100.0 }, &cfg()).unwrap();
    assert!(p.cone_trace.residual() <= 1e-8);
    assert!(p.matching.interior.iter().all(|r| r.abs() <= 1e-10));
    let m = p.supercone_max();
    assert!((3.0..=30.0).contains(&m), "max {m}");
    assert!(p.ode_residual().relative_sup() < 1e-8);
    let f = p.farfield;
    assert!(f.limit.abs() > 1.0 && f.coeff.abs() > 1.0);
    assert!(f.remainder_envelope.is_finite());
    assert!((p.cone_expansion.outer.c1 - 100.0).abs() < 1e-3);
}

#[test]
fn synthetic_cone_fixture_is_recovered() {
    let q = |gap: f64, outside: bool| {
        let (a, p1, p2) = psi(gap, outside);
        Ok(0.3 * p1 - 0.1 * p2 + 0.05 * 2.0 / a)
    };
    let c = fit_cone_expansion(
        |g| q(g, false),
        |g| q(g, true),
        CONE_FIT_WINDOW,
        CONE_FIT_WINDOW,
    )
    .unwrap();
    for s in [c.inner, c.outer] {
        assert!((s.c1 - 0.3).abs() < 1e-6);
        assert!((s.c2 + 0.1).abs() < 1e-6);
    }
    assert!((c.c3 - 0.05).abs() < 1e-6);
    assert!(c.q4_envelope < 1e-3);
}

#[test]
fn cone_expansion_of_glued_profile() {
    let p = glue_at_cone(0.01, ExteriorChoice::Small { q1: 0.02 }, &cfg()).unwrap();
    let c = p.cone_expansion;
    let d = p.params;
    assert!((c.c3 - d.d3).abs() < 1e-9);
    assert!((c.inner.c2 - d.d2).abs() < 1e-6 && (c.outer.c2 - d.d2t).abs() < 1e-6);

    // reconstruction within the reported envelope
    for k in 0..97 {
        let g = 10f64.powf(-8.0 + 6.0 * k as f64 / 96.0);
        for (outside, s) in [(false, c.inner), (true, c.outer)] {
            let (a, p1, p2) = psi(g, outside);
            let fit = s.c1 * p1 + s.c2 * p2 + c.c3 * 2.0 / a;
            let err = (p.evaluate(a).unwrap().0 - fit).abs();
            assert!(err <= 1.05 * c.q4_envelope * (g * g.ln()).powi(2) + 1e-15, "g = {g}");
        }
    }

    // log growth of Q' at the cone with slope 2|C2|
    let ds: Vec<f64> = (0..=40).map(|k| 10f64.powf(-7.0 + 4.0 * k as f64 / 40.0)).collect();
    let logs: Vec<f64> = ds.iter().map(|d| -d.ln()).collect();
    for (sign, s) in [(-1.0, c.inner), (1.0, c.outer)] {
        assert!(s.c2 != 0.0);
        let dq: Vec<f64> = ds.iter().map(|d| p.evaluate(1.0 + sign * d).unwrap().1.abs()).collect();
        let k = slope(&logs, &dq);
        assert!((k / (2.0 * s.c2.abs()) - 1.0).abs() < 0.15, "slope {k} vs C2 {}", s.c2);
    }
}

#[test]
fn farfield_fit_recovers_known_parameters() {
    let seg = solve_farfield(0.02, 0.01, &cfg()).unwrap();
    let (limit, coeff, env) = fit_farfield(|a| seg.evaluate(a).map(|v| v.0), 100.0, 1000.0).unwrap();
    assert!((limit - 0.02).abs() < 2e-4);
    assert!((coeff + 0.04).abs() < 4e-4);
    assert!(env.is_finite());
    assert!(fit_farfield(|_| Ok(0.0), 100.0, 150.0).is_err());
}

#[test]
fn pointwise_residual_between_nodes() {
    let p = glue_at_cone(0.01, ExteriorChoice::Small { q1: 0.02 }, &cfg()).unwrap();
    for k in 0..200 {
        let a = 0.013 + 0.0049 * k as f64;
        if (a - 1.0).abs() < 1e-3 {
            continue;
        }
        assert!(p.residual_at(a).unwrap().abs() < 1e-8, "a = {a}");
    }
    for a in [5.5, 77.7, 999.0] {
        assert!(p.residual_at(a).unwrap().abs() < 1e-8, "a = {a}");
    }
    assert!(p.residual_at(1.0).is_err());
}
