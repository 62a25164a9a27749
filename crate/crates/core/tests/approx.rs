use std::f64::consts::PI;

use wavemap::approx::*;
use wavemap::matching::*;
use wavemap::segment_solver::*;

fn small_field(c: f64) -> ApproxSolutionField {
    let p = glue_at_cone(0.01, ExteriorChoice::Small { q1: 0.02 }, &PicardConfig::default()).unwrap();
    ApproxSolutionField::new(p, CutoffSpec::new(c).unwrap())
}

#[test]
fn cutoff_shape() {
    let cut = CutoffSpec::new(1.5).unwrap();
    for x in [0.0, 0.7, -1.5, 1.5] {
        assert_eq!(cut.eval(x), (0.0, 0.0, 0.0));
    }
    for x in [3.0, -3.0, 10.0] {
        assert_eq!(cut.eval(x), (1.0, 0.0, 0.0));
    }
    assert!((cut.chi(2.25) - 0.5).abs() < 1e-15);
    assert_eq!(cut.chi(-2.0), cut.chi(2.0));
    // derivatives against central differences, including near the joins
    let h = 1e-5;
    let mut sup: f64 = 0.0;
    for k in 0..=400 {
        let x = -3.5 + 7.0 * k as f64 / 400.0;
        let (_, d, dd) = cut.eval(x);
        let fd1 = (cut.chi(x + h) - cut.chi(x - h)) / (2.0 * h);
        let fd2 = (cut.eval(x + h).1 - cut.eval(x - h).1) / (2.0 * h);
        assert!((d - fd1).abs() < 1e-8, "x={x}");
        assert!((dd - fd2).abs() < 1e-6, "x={x}");
        sup = sup.max(d.abs());
    }
    assert!(sup <= cut.max_slope() + 1e-12);
    assert!((sup - cut.max_slope()).abs() < 1e-3);
    assert!(CutoffSpec::new(0.0).is_err());
}

#[test]
fn region_identities() {
    let f = small_field(1.0);
    let c3 = f.c3();
    for t in [20.0, 100.0] {
        // χ = 1: the profile itself
        for r in [t - 3.0, t + 3.0, 0.3 * t, 4.0 * t] {
            let u = eval_uapprox(&f, t, r).unwrap().0;
            let q = f.profile.evaluate(r / t).unwrap().0;
            assert!((u - q).abs() < 1e-10, "t={t} r={r}");
        }
        // χ = 0: the smooth part only
        for r in [t, t - 0.9, t + 0.5] {
            let u = eval_uapprox(&f, t, r).unwrap().0;
            assert!((u - c3 * 2.0 * t / r).abs() < 1e-10);
        }
        assert!((eval_uapprox(&f, t, t).unwrap().0 - 2.0 * c3).abs() < 1e-14);
    }
    assert!(eval_uapprox(&f, 1.0, 2e3).is_err());
}

#[test]
fn jet_matches_finite_differences() {
    let f = small_field(1.0);
    let (t, h) = (100.0, 0.01);
    for r in [30.0, 98.4, 98.7, 101.2, 101.6, 104.0] {
        let j = f.jet(t, r).unwrap();
        let d = fd_jet(|t, r| Ok(f.jet(t, r)?.u), t, r, h, h).unwrap();
        let scale = j.u_tt.abs().max(j.u_rr.abs()).max(1e-6);
        assert!((j.u_t - d.u_t).abs() < 1e-9, "r={r}");
        assert!((j.u_r - d.u_r).abs() < 1e-9, "r={r}");
        assert!((j.u_tt - d.u_tt).abs() < 1e-6 * scale, "r={r}");
        assert!((j.u_rr - d.u_rr).abs() < 1e-6 * scale, "r={r}");
    }
}

#[test]
fn residual_vanishes_where_profile_is_exact() {
    let f = small_field(1.0);
    let fd = ResidualField {
        method: E0Method::FiniteDifference { h_r: 0.05, h_t: 0.05 },
    };
    for (t, r) in [(50.0, 10.0), (50.0, 45.0), (50.0, 55.0), (200.0, 600.0)] {
        assert!(fd.e0(&f, t, r).unwrap().abs() < 1e-8, "t={t} r={r}");
    }
    let coarse = ResidualField {
        method: E0Method::FiniteDifference { h_r: 0.1, h_t: 0.01 },
    };
    assert!(coarse.e0(&f, 50.0, 10.0).is_err());
}

#[test]
fn residual_inside_excision_is_the_nonlinear_term() {
    // there u = 2 C3 t/r solves the linear equation, leaving sin(2u)/r²
    let f = small_field(1.0);
    let c3 = f.c3();
    for (t, r) in [(50.0, 50.0), (100.0, 99.5), (400.0, 400.7)] {
        let e = residual_e0(&f, t, r).unwrap();
        let want = (4.0 * c3 * t / r).sin() / (r * r);
        assert!((e - want).abs() < 1e-14 * want.abs().max(1e-300) + 1e-20);
    }
}

#[test]
fn chi_transport_identity() {
    let cut = CutoffSpec::new(1.0).unwrap();
    let h = 0.05;
    for x in [1.0, 1.03, 1.5, 1.98, 2.4, -1.4] {
        let t = 30.0;
        let d = fd_jet(|t, r| Ok(0.7 * cut.chi(t - r)), t, t - x, h, h).unwrap();
        assert!((d.u_tt - d.u_rr).abs() < 1e-8, "x={x}");
    }
}

#[test]
fn residual_norms_scaling() {
    let zero = glue_at_cone(0.0, ExteriorChoice::Small { q1: 0.0 }, &PicardConfig::default()).unwrap();
    let z = ApproxSolutionField::new(zero, CutoffSpec::default());
    let n = residual_norms(&z, 50.0).unwrap();
    assert_eq!((n.l2, n.strip_sup), (0.0, 0.0));

    let f = small_field(1.0);
    let ts = [50.0, 100.0, 200.0, 400.0, 800.0];
    let norms: Vec<_> = ts.iter().map(|&t| residual_norms(&f, t).unwrap()).collect();
    // e0 ~ 4 C3/t² on a strip of fixed width around r = t
    let c3 = f.c3();
    for (t, n) in ts.iter().zip(&norms) {
        let bound = 4.0 * c3.abs() / (t * t);
        assert!(n.strip_sup > 0.1 * bound && n.strip_sup < 10.0 * bound);
    }
    let l2: Vec<f64> = norms.iter().map(|n| n.l2).collect();
    let sup: Vec<f64> = norms.iter().map(|n| n.strip_sup).collect();
    let (p_l2, r2) = decay_fit(&ts, &l2).unwrap();
    let (p_sup, _) = decay_fit(&ts, &sup).unwrap();
    assert!(r2 > 0.99);
    assert!((p_l2 + 1.0).abs() < 0.1, "{p_l2}");
    assert!((p_sup + 2.0).abs() < 0.1, "{p_sup}");
    assert!(residual_norms(&f, 1.5).is_err());
}

#[test]
fn q4_within_envelope_and_drop_mode() {
    let mut f = small_field(1.0);
    let env = f.profile.cone_expansion.q4_envelope;
    for g in [1e-6, 1e-4, 3e-3] {
        for a in [1.0 - g, 1.0 + g] {
            assert!(f.q4(a).unwrap().abs() <= 1.05 * env * (g * g.ln()).powi(2));
        }
    }
    // near the cone dropping Q4 changes e0 by a lower-order amount
    let t = 800.0;
    let with = residual_e0(&f, t, t - 1.5).unwrap();
    f.q4 = Q4Mode::Drop;
    let without = residual_e0(&f, t, t - 1.5).unwrap();
    assert!((with - without).abs() < 0.05 * with.abs());
}

#[test]
fn second_differences_across_cone_scale_with_cutoff() {
    let mut scaled = Vec::new();
    for c in [1.0, 2.0] {
        let f = small_field(c);
        let (t, h) = (100.0, 0.02);
        let mut sup: f64 = 0.0;
        let n = (6.0 * c / h) as usize;
        for k in 0..=n {
            let r = t - 3.0 * c + k as f64 * h;
            let u = |r: f64| eval_uapprox(&f, t, r).unwrap().0;
            sup = sup.max(((u(r + h) - 2.0 * u(r) + u(r - h)) / (h * h)).abs());
        }
        // a kink would show up as O(1/h) = 50 times the jump in slope
        assert!(sup < 0.05, "C={c} sup={sup}");
        scaled.push(sup * c * c);
    }
    let ratio = scaled[1] / scaled[0];
    assert!(ratio > 0.25 && ratio < 4.0, "C² sup: {scaled:?}");
}

#[test]
fn hankel_transform_of_gaussian() {
    let r = graded_radii(0.005, 12.0, 12.0, 1.0);
    let u = RadialSamples::from_fn(r, |x| (-x * x).exp());
    for k in [0.01f64, 0.5, 2.0, 6.0] {
        let exact = PI.powf(1.5) * (-k * k / 4.0).exp();
        assert!((u.hankel(k) - exact).abs() < 2e-5, "k={k}");
    }
    // finite critical norm: no growth as k_min decreases
    let n1 = critical_norm_band(&u, 1e-3, 8.0, 1.5).unwrap();
    let n2 = critical_norm_band(&u, 1e-5, 8.0, 1.5).unwrap();
    assert!((n1 - n2).abs() < 1e-6 * n1);
    // against an independent quadrature of the analytic transform
    let want = wavemap::quadrature::integrate(
        |k| k.powi(3) * PI.powi(3) * (-k * k / 2.0).exp() * k * k / (2.0 * PI * PI),
        1e-3,
        8.0,
        64,
    );
    assert!((n1 * n1 - want).abs() < 1e-4 * want);
    // linearity
    let scaled = RadialSamples {
        r: u.r.clone(),
        u: u.u.iter().map(|v| -3.0 * v).collect(),
    };
    let n3 = critical_norm_band(&scaled, 1e-3, 8.0, 1.5).unwrap();
    assert!((n3 - 3.0 * n1).abs() < 1e-12 * n3);
    // grid too coarse for k_max
    assert!(matches!(
        critical_norm_band(&u, 1e-3, 1e3, 1.5),
        Err(wavemap::Error::Aliasing { .. })
    ));
}

#[test]
fn inverse_r_tail_diverges_logarithmically() {
    let big_r = 1e7;
    let r = graded_radii(0.1, 10.0, big_r, 1.02);
    let u = RadialSamples::from_fn(r, |x| decay_window(x, big_r) / x.max(1e-300));
    // the r = 0 sample carries r u = 0 instead of 1, an O((kh)²) defect
    for k in [1e-3, 1e-2, 0.1] {
        let exact = 4.0 * PI / (k * k);
        assert!((u.hankel(k) / exact - 1.0).abs() < 1e-3, "k={k}");
    }
    let scan = critical_norm_scan(&u, 1e-5, 1.0, 0.5, 4).unwrap();
    let pts: Vec<(f64, f64)> = scan
        .iter()
        .filter(|(k, _)| *k <= 1e-2)
        .map(|(k, n)| (-k.ln(), n * n))
        .collect();
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let (slope, r2) = (sxy / sxx, sxy * sxy / (sxx * syy));
    // (4π)² κ = 8
    assert!((slope / 8.0 - 1.0).abs() < 0.01, "slope {slope}");
    assert!(r2 > 0.99);
}

#[test]
fn decay_fit_fixtures() {
    let ts = [50.0f64, 100.0, 200.0, 400.0, 800.0];
    let exact: Vec<f64> = ts.iter().map(|t| t.powi(-2)).collect();
    let (p, r2) = decay_fit(&ts, &exact).unwrap();
    assert!((p + 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    let (p, _) = decay_fit(&ts, &[3.0; 5]).unwrap();
    assert!(p.abs() < 1e-12);
    let noisy: Vec<f64> = ts
        .iter()
        .enumerate()
        .map(|(i, t)| t.powi(-3) * (1.0 + 0.05 * (1.7 * i as f64 + 0.3).sin()))
        .collect();
    let (p, _) = decay_fit(&ts, &noisy).unwrap();
    assert!((p + 3.0).abs() < 0.1);
    assert!(decay_fit(&ts, &[1.0, 2.0, 0.0, 1.0, 1.0]).is_err());
    assert!(decay_fit(&ts[..3], &exact[..3]).is_err());
}

#[test]
fn critical_norm_of_glued_profile() {
    let cfg = PicardConfig {
        farfield_cutoff: 1e7,
        ..PicardConfig::default()
    };
    let p = glue_at_cone(0.01, ExteriorChoice::Small { q1: 0.02 }, &cfg).unwrap();
    let f = ApproxSolutionField::new(p, CutoffSpec::default());
    let rep = critical_norm_divergence(&f, &CriticalNormConfig::default()).unwrap();
    let decades = (rep.k_min.last().unwrap() / rep.k_min[0]).log10();
    assert!(decades >= 3.0 - 1e-9);
    assert!(rep.r2 > 0.99);
    assert!((rep.slope / rep.predicted_slope - 1.0).abs() < 0.05);
    assert!(rep.control_slope.abs() < 0.05 * rep.slope);
    assert!(rep.data_only_slope.abs() < 0.05 * rep.slope);
}
