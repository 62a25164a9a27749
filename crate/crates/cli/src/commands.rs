use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;
use wavemap::approx::{
    critical_norm_divergence, decay_fit, residual_norms_with, ApproxSolutionField, CriticalNormConfig,
    CutoffSpec, E0Method, Q4Mode, ResidualField, ResidualNorms,
};
use wavemap::basis::{phi_exterior, phi_interior};
use wavemap::evolve::{run_persistence, PersistenceConfig, PersistenceReport};
use wavemap::matching::{glue_at_cone, ExteriorChoice, GlobalProfile};
use wavemap::segment_solver::PicardConfig;

use crate::archive::{ProfileArchive, SolveInputs, SCHEMA};
use crate::config::ConfigFile;
use crate::output::{sidecar, write_json, Csv};
use crate::{BasisArgs, CritnormArgs, EvolveArgs, Failure, ProfileCsvArgs, ResidualScanArgs, SolveArgs};

fn usage(msg: String) -> Failure {
    Failure::usage(anyhow!(msg))
}

fn finite(name: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must be positive, got {v}")))
    }
}

fn load_field(cfg: &ConfigFile, input: Option<std::path::PathBuf>, width: Option<f64>) -> Result<ApproxSolutionField, Failure> {
    let path = cfg.pick(input, "in", None)?;
    let archive = ProfileArchive::read(&path)?;
    let c = positive("cutoff-width", cfg.pick(width, "cutoff-width", Some(1.0))?)?;
    Ok(ApproxSolutionField::new(archive.profile, CutoffSpec::new(c)?))
}

pub fn solve(a: SolveArgs, cfg: &ConfigFile) -> Result<u8, Failure> {
    let d0 = finite("d0", cfg.pick(a.d0, "d0", None)?)?;
    let mode = cfg.pick(a.mode, "mode", Some("small".to_string()))?;
    let d1t = cfg.pick_opt(a.d1t, "d1t")?;
    let q1 = cfg.pick_opt(a.q1, "q1")?;
    let exterior = match mode.as_str() {
        "small" => {
            if d1t.is_some() {
                return Err(usage("--d1t applies to --mode large only".into()));
            }
            ExteriorChoice::Small {
                q1: finite("q1", q1.unwrap_or(0.0))?,
            }
        }
        "large" => {
            if q1.is_some() {
                return Err(usage("--q1 applies to --mode small only".into()));
            }
            let d1t = d1t.ok_or_else(|| usage("--mode large needs --d1t".into()))?;
            if !(d1t >= 1.0 && d1t.is_finite()) {
                return Err(usage(format!("--d1t must be at least 1, got {d1t}")));
            }
            ExteriorChoice::Large { d1t }
        }
        other => return Err(usage(format!("--mode must be small or large, got {other}"))),
    };
    let mut picard = PicardConfig::default();
    if let Some(a_max) = cfg.pick_opt(a.a_max, "a-max")? {
        picard.farfield_cutoff = positive("a-max", a_max)?;
    }
    picard.validate()?;
    let out = cfg.pick(a.out, "out", None)?;

    let profile = glue_at_cone(d0, exterior, &picard)?;
    let archive = ProfileArchive::new(
        SolveInputs {
            d0,
            exterior,
            picard,
        },
        profile,
    );
    write_json(&out, &archive).map_err(Failure::io)?;
    println!(
        "continuity residual {:.3e}  max|Q| {:.6}  far-field limit {:.9}",
        archive.continuity_residual,
        archive.profile.supercone_max(),
        archive.farfield.limit
    );
    Ok(0)
}

/// `n` points in `(0, a_max]`, half on each side of the cone, log-graded in `|1 - a|`.
fn graded_samples(p: &GlobalProfile, n: usize) -> Vec<f64> {
    let near = 10.0 * p.cone_offset();
    let log_space = |lo: f64, hi: f64, m: usize| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let s = if m == 1 { 0.0 } else { i as f64 / (m - 1) as f64 };
                (lo.ln() + (hi.ln() - lo.ln()) * s).exp()
            })
            .collect()
    };
    let n_in = n / 2;
    let mut a: Vec<f64> = log_space(near, 1.0 - 1e-3, n_in).into_iter().map(|g| 1.0 - g).rev().collect();
    a.extend(log_space(near, p.a_max() - 1.0, n - n_in).into_iter().map(|g| (1.0 + g).min(p.a_max())));
    a
}

pub fn profile_csv(a: ProfileCsvArgs, cfg: &ConfigFile) -> Result<u8, Failure> {
    let path = cfg.pick(a.input, "in", None)?;
    let n: usize = cfg.pick(a.samples, "samples", Some(400))?;
    if n < 2 {
        return Err(usage(format!("--samples must be at least 2, got {n}")));
    }
    let out = cfg.pick_opt(a.out, "out")?;
    let archive = ProfileArchive::read(&path)?;
    let p = &archive.profile;
    let mut csv = Csv::new(&["a", "Q", "Qprime", "ode_residual"]);
    for x in graded_samples(p, n) {
        let (q, qp) = p.evaluate(x)?;
        csv.row(&[x, q, qp, p.residual_at(x)?]);
    }
    csv.emit(out.as_deref()).map_err(Failure::io)?;
    Ok(0)
}

#[derive(Serialize)]
struct ResidualScanSidecar {
    schema: u32,
    cutoff_width: f64,
    q4: Q4Mode,
    method: E0Method,
    t: Vec<f64>,
    l2_exponent: f64,
    l2_r2: f64,
    strip_sup_exponent: f64,
    strip_sup_r2: f64,
}

pub fn residual_scan(a: ResidualScanArgs, cfg: &ConfigFile) -> Result<u8, Failure> {
    let mut f = load_field(cfg, a.input, a.cutoff_width)?;
    let t_min = positive("t-min", cfg.pick(a.t_min, "t-min", Some(50.0))?)?;
    let t_max = positive("t-max", cfg.pick(a.t_max, "t-max", Some(800.0))?)?;
    let steps: usize = cfg.pick(a.t_steps, "t-steps", Some(9))?;
    if !(t_max > t_min) || steps < 4 {
        return Err(usage("need t-max > t-min and at least 4 t-steps".into()));
    }
    f.q4 = match cfg.pick(a.q4, "q4", Some("include".to_string()))?.as_str() {
        "include" => Q4Mode::Include,
        "drop" => Q4Mode::Drop,
        other => return Err(usage(format!("--q4 must be include or drop, got {other}"))),
    };
    let method = match cfg.pick(a.method, "method", Some("analytic".to_string()))?.as_str() {
        "analytic" => E0Method::Analytic,
        "fd" => {
            let h = positive("fd-step", cfg.pick(a.fd_step, "fd-step", Some(f.cutoff.c / 40.0))?)?;
            E0Method::FiniteDifference { h_r: h, h_t: h }
        }
        other => return Err(usage(format!("--method must be analytic or fd, got {other}"))),
    };
    let out = cfg.pick(a.out, "out", None)?;
    let ts: Vec<f64> = (0..steps)
        .map(|i| (t_min.ln() + (t_max / t_min).ln() * i as f64 / (steps - 1) as f64).exp())
        .collect();
    let field = ResidualField { method };
    let norms: Vec<ResidualNorms> = ts
        .par_iter()
        .map(|&t| residual_norms_with(&f, t, &field))
        .collect::<wavemap::Result<_>>()?;

    let mut csv = Csv::new(&["t", "l2", "strip_sup"]);
    for (t, n) in ts.iter().zip(&norms) {
        csv.row(&[*t, n.l2, n.strip_sup]);
    }
    let l2: Vec<f64> = norms.iter().map(|n| n.l2).collect();
    let sup: Vec<f64> = norms.iter().map(|n| n.strip_sup).collect();
    let (l2_exponent, l2_r2) = decay_fit(&ts, &l2)?;
    let (strip_sup_exponent, strip_sup_r2) = decay_fit(&ts, &sup)?;
    csv.emit(Some(&out)).map_err(Failure::io)?;
    write_json(
        &sidecar(&out),
        &ResidualScanSidecar {
            schema: SCHEMA,
            cutoff_width: f.cutoff.c,
            q4: f.q4,
            method,
            t: ts,
            l2_exponent,
            l2_r2,
            strip_sup_exponent,
            strip_sup_r2,
        },
    )
    .map_err(Failure::io)?;
    println!("l2 exponent {l2_exponent:.4}  strip_sup exponent {strip_sup_exponent:.4}");
    Ok(0)
}

#[derive(Serialize)]
struct EvolveSidecar<'a> {
    schema: u32,
    config: PersistenceConfig,
    cutoff_width: f64,
    report: &'a PersistenceReport,
}

pub fn evolve(a: EvolveArgs, cfg: &ConfigFile) -> Result<u8, Failure> {
    let f = load_field(cfg, a.input, a.cutoff_width)?;
    let d = PersistenceConfig::default();
    let pc = PersistenceConfig {
        t0: positive("T", cfg.pick(a.t0, "T", Some(d.t0))?)?,
        delta1: cfg.pick(a.delta1, "delta1", Some(d.delta1))?,
        horizon_factor: cfg.pick(a.horizon_factor, "horizon-factor", Some(d.horizon_factor))?,
        n: cfg.pick(a.cells, "cells", Some(d.n))?,
        r_max: cfg.pick_opt(a.r_max, "r-max")?,
        records: cfg.pick(a.records, "records", Some(d.records))?,
        ..d
    };
    if !(pc.delta1 >= 0.0 && pc.delta1.is_finite()) {
        return Err(usage(format!("--delta1 must be non-negative, got {}", pc.delta1)));
    }
    let out = cfg.pick(a.out, "out", None)?;
    let rep = run_persistence(&f, &pc)?;

    let mut csv = Csv::new(&["t", "sup_eps", "energy_eps", "energy_total"]);
    for i in 0..rep.times.len() {
        csv.row(&[rep.times[i], rep.sup_eps[i], rep.energy_eps[i], rep.energy_total[i]]);
    }
    csv.emit(Some(&out)).map_err(Failure::io)?;
    write_json(
        &sidecar(&out),
        &EvolveSidecar {
            schema: SCHEMA,
            config: pc,
            cutoff_width: f.cutoff.c,
            report: &rep,
        },
    )
    .map_err(Failure::io)?;
    println!(
        "horizon {:.6}  gamma_fit {:.4} (R2 {:.4})  persistent {}  blowup {:?}",
        rep.horizon, rep.gamma_fit, rep.gamma_r2, rep.persistent, rep.blowup
    );
    if let Some(t) = rep.blowup {
        eprintln!("error: stage evolve: blowup detected at t = {t}");
        return Ok(4);
    }
    Ok(0)
}

pub fn critnorm(a: CritnormArgs, cfg: &ConfigFile) -> Result<u8, Failure> {
    let f = load_field(cfg, a.input, a.cutoff_width)?;
    let d = CriticalNormConfig::default();
    let decades = positive("kmin-decades", cfg.pick(a.kmin_decades, "kmin-decades", Some((d.fit_hi / d.fit_lo).log10()))?)?;
    let cc = CriticalNormConfig {
        t: positive("T", cfg.pick(a.t0, "T", Some(d.t))?)?,
        fit_lo: d.fit_hi * 10f64.powf(-decades),
        h: positive("h", cfg.pick(a.h, "h", Some(d.h))?)?,
        k_max: positive("k-max", cfg.pick(a.k_max, "k-max", Some(d.k_max))?)?,
        ..d
    };
    let out = cfg.pick(a.out, "out", None)?;
    let rep = critical_norm_divergence(&f, &cc)?;
    let mut csv = Csv::new(&["k_min", "N2"]);
    for (k, n2) in rep.k_min.iter().zip(&rep.pair) {
        csv.row(&[*k, *n2]);
    }
    csv.emit(Some(&out)).map_err(Failure::io)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        schema: u32,
        config: CriticalNormConfig,
        report: &'a wavemap::approx::CriticalNormReport,
    }
    write_json(
        &sidecar(&out),
        &Sidecar {
            schema: SCHEMA,
            config: cc,
            report: &rep,
        },
    )
    .map_err(Failure::io)?;
    println!(
        "slope {:.6e}  R2 {:.6}  predicted {:.6e}  control/raw {:.3e}",
        rep.slope,
        rep.r2,
        rep.predicted_slope,
        rep.control_slope / rep.slope
    );
    Ok(0)
}

pub fn basis(a: BasisArgs, cfg: &ConfigFile) -> Result<u8, Failure> {
    let table = cfg.pick(a.table, "table", None)?;
    let phi: fn(f64) -> wavemap::Result<(f64, f64)> = match table.as_str() {
        "interior" => phi_interior,
        "exterior" => phi_exterior,
        other => return Err(usage(format!("--table must be interior or exterior, got {other}"))),
    };
    let (lo_def, hi_def) = if table == "interior" { (0.1, 0.9) } else { (1.1, 10.0) };
    let lo = cfg.pick(a.a_min, "a-min", Some(lo_def))?;
    let hi = cfg.pick(a.a_max, "a-max", Some(hi_def))?;
    let n: usize = cfg.pick(a.samples, "samples", Some(81))?;
    let valid = match table.as_str() {
        "interior" => 0.0 < lo && lo < hi && hi < 1.0,
        _ => 1.0 < lo && lo < hi && hi.is_finite(),
    };
    if !valid || n < 2 {
        return Err(usage(format!("bad range [{lo}, {hi}] with {n} samples for the {table} table")));
    }
    let out = cfg.pick_opt(a.out, "out")?;
    let mut csv = Csv::new(&["a", "phi1", "phi2", "wronskian_check"]);
    for i in 0..n {
        let x = if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
        let (p1, p2) = phi(x)?;
        // fourth-order differences, kept clear of a = 0 and a = 1
        let h = 1e-4 * x.min((1.0 - x).abs()).min(1.0);
        let d = |i: usize| -> Result<f64, Failure> {
            let v = |y: f64| phi(y).map(|p| [p.0, p.1][i]);
            Ok((v(x - 2.0 * h)? - 8.0 * v(x - h)? + 8.0 * v(x + h)? - v(x + 2.0 * h)?) / (12.0 * h))
        };
        let w = p1 * d(1)? - d(0)? * p2;
        csv.row(&[x, p1, p2, w - 4.0 / (x * x)]);
    }
    csv.emit(out.as_deref()).map_err(Failure::io)?;
    Ok(0)
}
