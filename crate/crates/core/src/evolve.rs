//! Radial evolution of `u_tt - u_rr - (2/r) u_r + sin(2u)/r² = 0` and the
//! persistence experiment around `u_approx`.
//!
//! The stepper works on `w = r u`, for which the equation reads
//! `w_tt = w_rr - sin(2w/r)/r` with `w(t, 0) = 0`, and uses Störmer–Verlet
//! (leapfrog) in time with centered second differences in space.

use serde::{Deserialize, Serialize};

use crate::approx::{decay_fit, eval_uapprox, residual_norms, ApproxSolutionField};
use crate::error::{Error, Result};

pub const CFL: f64 = 0.5;

/// Uniform grid `r_j = j h`, `j = 0..=n`, `h = r_max/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n: usize,
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::Domain {
                what: "r_max",
                value: r_max,
            });
        }
        if n < 16 {
            return Err(Error::invalid("radial_grid", "need at least 16 cells"));
        }
        Ok(Self { r_max, n })
    }

    pub fn h(&self) -> f64 {
        self.r_max / self.n as f64
    }

    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.r(j)).collect()
    }

    pub fn max_dt(&self) -> f64 {
        CFL * self.h()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub t: f64,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
    /// Time at which a non-finite value or `|u|` above the threshold appeared.
    pub blowup: Option<f64>,
}

impl WaveState {
    pub fn zeros(grid: &RadialGrid, t: f64) -> Self {
        Self {
            t,
            u: vec![0.0; grid.n + 1],
            ut: vec![0.0; grid.n + 1],
            blowup: None,
        }
    }

    /// Samples `(u, u_t)` from `f(r)`; the axis node takes `f(0)`.
    pub fn from_fn(grid: &RadialGrid, t: f64, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let (u, ut) = grid.radii().into_iter().map(f).unzip();
        Self {
            t,
            u,
            ut,
            blowup: None,
        }
    }
}

/// Explicit stepper with a Dirichlet condition `(u, u_t)(t, r_max) = boundary(t)`.
pub struct WaveSolver<B> {
    pub grid: RadialGrid,
    pub nonlinear: bool,
    pub boundary: B,
    pub blowup_threshold: f64,
}

type ZeroBoundary = fn(f64) -> (f64, f64);

impl WaveSolver<ZeroBoundary> {
    /// Homogeneous boundary: the energy of the run is conserved.
    pub fn closed(grid: RadialGrid, nonlinear: bool) -> Self {
        Self {
            grid,
            nonlinear,
            boundary: |_| (0.0, 0.0),
            blowup_threshold: 1e3,
        }
    }
}

impl<B: Fn(f64) -> (f64, f64)> WaveSolver<B> {
    pub fn new(grid: RadialGrid, nonlinear: bool, boundary: B) -> Self {
        Self {
            grid,
            nonlinear,
            boundary,
            blowup_threshold: 1e3,
        }
    }

    fn accel(&self, w: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let h = self.grid.h();
        let ih2 = 1.0 / (h * h);
        out[0] = 0.0;
        out[n] = 0.0;
        for j in 1..n {
            let mut a = (w[j + 1] - 2.0 * w[j] + w[j - 1]) * ih2;
            if self.nonlinear {
                let r = j as f64 * h;
                a -= (2.0 * w[j] / r).sin() / r;
            }
            out[j] = a;
        }
    }

    /// One leapfrog step of size `dt`. A state flagged as blown up is left as is.
    pub fn step(&self, s: &mut WaveState, dt: f64) -> Result<()> {
        let limit = self.grid.max_dt();
        if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::Cfl { dt, limit });
        }
        if s.blowup.is_some() {
            return Ok(());
        }
        let n = self.grid.n;
        let h = self.grid.h();
        let mut w: Vec<f64> = (0..=n).map(|j| j as f64 * h * s.u[j]).collect();
        let mut p: Vec<f64> = (0..=n).map(|j| j as f64 * h * s.ut[j]).collect();
        let mut acc = vec![0.0; n + 1];
        self.accel(&w, &mut acc);
        for j in 1..n {
            p[j] += 0.5 * dt * acc[j];
            w[j] += dt * p[j];
        }
        let t = s.t + dt;
        let (ub, utb) = (self.boundary)(t);
        w[n] = self.grid.r_max * ub;
        self.accel(&w, &mut acc);
        for j in 1..n {
            p[j] += 0.5 * dt * acc[j];
        }
        p[n] = self.grid.r_max * utb;
        for j in 1..=n {
            let r = j as f64 * h;
            s.u[j] = w[j] / r;
            s.ut[j] = p[j] / r;
        }
        // axis value: 0 for the wave map, the limit w_r(0) for free waves
        if self.nonlinear {
            s.u[0] = 0.0;
            s.ut[0] = 0.0;
        } else {
            s.u[0] = (4.0 * w[1] - w[2]) / (2.0 * h);
            s.ut[0] = (4.0 * p[1] - p[2]) / (2.0 * h);
        }
        s.t = t;
        if s.u.iter().any(|v| !(v.abs() <= self.blowup_threshold))
            || s.ut.iter().any(|v| !v.is_finite())
        {
            s.blowup = Some(t);
        }
        Ok(())
    }

    /// Steps of at most `max_dt` until `t_end`; the last step lands on it.
    pub fn advance(&self, s: &mut WaveState, t_end: f64) -> Result<()> {
        let span = t_end - s.t;
        if span <= 0.0 {
            return Ok(());
        }
        let steps = (span / self.grid.max_dt()).ceil() as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            self.step(s, dt)?;
            if s.blowup.is_some() {
                break;
            }
        }
        Ok(())
    }
}

/// Trapezoid weights on the grid times `r^power`.
fn weights(grid: &RadialGrid, power: i32) -> Vec<f64> {
    let h = grid.h();
    (0..=grid.n)
        .map(|j| {
            let end = if j == 0 || j == grid.n { 0.5 } else { 1.0 };
            end * h * grid.r(j).powi(power)
        })
        .collect()
}

/// Centered first differences, one-sided second order at the ends.
fn gradient(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len() - 1;
    (0..=n)
        .map(|j| match j {
            0 => (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h),
            j if j == n => (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h),
            j => (v[j + 1] - v[j - 1]) / (2.0 * h),
        })
        .collect()
}

/// `E = ∫ (u_t² + u_r² + 2 sin²u / r²) r² dr` by the trapezoid rule.
pub fn energy(s: &WaveState, grid: &RadialGrid) -> f64 {
    let w = weights(grid, 0);
    let ur = gradient(&s.u, grid.h());
    (0..=grid.n)
        .map(|j| {
            let r = grid.r(j);
            let pot = 2.0 * s.u[j].sin().powi(2);
            w[j] * ((s.ut[j].powi(2) + ur[j].powi(2)) * r * r + pot)
        })
        .sum()
}

/// Discrete energy of the stepper in the `w = r u` variables,
/// `Σ h (w_t² + 2 sin²(w/r)) + Σ (w_{j+1} - w_j)²/h`, conserved by the
/// leapfrog up to `O(dt²)` oscillation. It agrees with [`energy`] to `O(h²)`
/// while the solution is resolved near the axis.
pub fn scheme_energy(s: &WaveState, grid: &RadialGrid) -> f64 {
    let h = grid.h();
    let wts = weights(grid, 0);
    let w: Vec<f64> = (0..=grid.n).map(|j| grid.r(j) * s.u[j]).collect();
    let local: f64 = (0..=grid.n)
        .map(|j| wts[j] * ((grid.r(j) * s.ut[j]).powi(2) + 2.0 * s.u[j].sin().powi(2)))
        .sum();
    let gradient: f64 = w.windows(2).map(|p| (p[1] - p[0]).powi(2) / h).sum();
    local + gradient
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationNorms {
    pub sup: f64,
    /// `(∫ (ε_t² + ε_r²) r² dr)^{1/2}`.
    pub energy: f64,
    /// `(∫ ε² r² dr)^{1/2}`.
    pub l2: f64,
    /// `(∫ v² r⁴ dr)^{1/2}` for `v = ε/r`.
    pub l2_5d: f64,
    /// `(∫ (v_t² + v_r²) r⁴ dr)^{1/2}`.
    pub energy_5d: f64,
}

/// Norms of a perturbation `(ε, ε_t)` sampled on `grid`.
pub fn norms_of(grid: &RadialGrid, eps: &[f64], eps_t: &[f64]) -> PerturbationNorms {
    let h = grid.h();
    let w2 = weights(grid, 2);
    let w4 = weights(grid, 4);
    let er = gradient(eps, h);
    let v: Vec<f64> = (0..=grid.n)
        .map(|j| if j == 0 { er[0] } else { eps[j] / grid.r(j) })
        .collect();
    let v_t: Vec<f64> = (0..=grid.n)
        .map(|j| if j == 0 { 0.0 } else { eps_t[j] / grid.r(j) })
        .collect();
    let vr = gradient(&v, h);
    let mut out = PerturbationNorms::default();
    for j in 0..=grid.n {
        out.sup = out.sup.max(eps[j].abs());
        out.energy += w2[j] * (eps_t[j].powi(2) + er[j].powi(2));
        out.l2 += w2[j] * eps[j].powi(2);
        out.l2_5d += w4[j] * v[j].powi(2);
        out.energy_5d += w4[j] * (v_t[j].powi(2) + vr[j].powi(2));
    }
    out.energy = out.energy.sqrt();
    out.l2 = out.l2.sqrt();
    out.l2_5d = out.l2_5d.sqrt();
    out.energy_5d = out.energy_5d.sqrt();
    out
}

/// `ε = u - u_approx(t, ·)` and `ε_t`, with the axis value of `u_approx` taken as 0.
pub fn perturbation(
    s: &WaveState,
    f: &ApproxSolutionField,
    grid: &RadialGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut eps = Vec::with_capacity(grid.n + 1);
    let mut eps_t = Vec::with_capacity(grid.n + 1);
    for j in 0..=grid.n {
        let (ua, uat) = if j == 0 {
            (0.0, 0.0)
        } else {
            eval_uapprox(f, s.t, grid.r(j))?
        };
        eps.push(s.u[j] - ua);
        eps_t.push(s.ut[j] - uat);
    }
    Ok((eps, eps_t))
}

pub fn perturbation_norms(
    s: &WaveState,
    f: &ApproxSolutionField,
    grid: &RadialGrid,
) -> Result<PerturbationNorms> {
    let (eps, eps_t) = perturbation(s, f, grid)?;
    Ok(norms_of(grid, &eps, &eps_t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceConfig {
    pub t0: f64,
    pub delta1: f64,
    pub horizon_factor: f64,
    pub n: usize,
    /// Defaults to `horizon_factor t0 + 4C + 8`.
    pub r_max: Option<f64>,
    pub records: usize,
    pub gamma_max: f64,
    /// `K` in `energy_eps(t) <= K delta1 (t/T)^gamma`.
    pub envelope_k: f64,
    /// Largest admissible `strip_sup e0(T) / delta1`.
    pub residual_fraction: f64,
    pub blowup_threshold: f64,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        Self {
            t0: 50.0,
            delta1: 1e-3,
            horizon_factor: 20.0,
            n: 8192,
            r_max: None,
            records: 200,
            gamma_max: 0.1,
            envelope_k: 10.0,
            residual_fraction: 0.1,
            blowup_threshold: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub t0: f64,
    pub delta1: f64,
    pub grid: Option<RadialGrid>,
    pub dt: f64,
    pub steps: usize,
    /// Last time reached.
    pub horizon: f64,
    pub times: Vec<f64>,
    pub sup_eps: Vec<f64>,
    pub energy_eps: Vec<f64>,
    pub l2_eps: Vec<f64>,
    pub energy5_eps: Vec<f64>,
    /// [`energy`] of the full solution `u`.
    pub energy_total: Vec<f64>,
    /// Exponent of `energy_eps ~ (t/T)^gamma` on the second half of the run.
    pub gamma_fit: f64,
    pub gamma_r2: f64,
    pub blowup: Option<f64>,
    pub residual_at_t0: f64,
    pub persistent: bool,
}

/// `(1 - x²)^4` on `|x| < 1` and its derivative.
fn bump(x: f64) -> (f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let s = 1.0 - x * x;
    (s.powi(4), -8.0 * x * s.powi(3))
}

/// Evolves `u_approx[T] + ε[T]` to `horizon_factor T`, where `ε[T]` is an
/// outgoing bump on `[T - C, T + C]` with energy norm `delta1`.
pub fn run_persistence(
    f: &ApproxSolutionField,
    cfg: &PersistenceConfig,
) -> Result<PersistenceReport> {
    let t0 = cfg.t0;
    let c = f.cutoff.c;
    if !(t0 > 2.0 * c && cfg.horizon_factor > 1.0 && cfg.delta1 >= 0.0 && cfg.records >= 4) {
        return Err(Error::invalid("run_persistence", "bad configuration"));
    }
    let residual_at_t0 = residual_norms(f, t0)?.strip_sup;
    if cfg.delta1 > 0.0 && residual_at_t0 > cfg.residual_fraction * cfg.delta1 {
        return Err(Error::invalid(
            "run_persistence",
            format!(
                "residual {residual_at_t0:.3e} at T dominates delta1 = {:.3e}",
                cfg.delta1
            ),
        ));
    }
    let t_end = cfg.horizon_factor * t0;
    let r_max = cfg.r_max.unwrap_or(t_end + 4.0 * c + 8.0);
    let grid = RadialGrid::new(r_max, cfg.n)?;

    let mut state = WaveState::zeros(&grid, t0);
    for j in 1..=grid.n {
        let r = grid.r(j);
        let (u, ut) = eval_uapprox(f, t0, r)?;
        state.u[j] = u;
        state.ut[j] = ut;
    }
    if cfg.delta1 > 0.0 {
        let shape: Vec<(f64, f64)> = grid
            .radii()
            .iter()
            .map(|&r| {
                let (b, db) = bump((r - t0) / c);
                (b, -db / c)
            })
            .collect();
        let (e, et): (Vec<f64>, Vec<f64>) = shape.into_iter().unzip();
        let scale = cfg.delta1 / norms_of(&grid, &e, &et).energy;
        for j in 0..=grid.n {
            state.u[j] += scale * e[j];
            state.ut[j] += scale * et[j];
        }
    }

    let solver = WaveSolver {
        grid,
        nonlinear: true,
        boundary: |t: f64| eval_uapprox(f, t, r_max).unwrap_or((f64::NAN, f64::NAN)),
        blowup_threshold: cfg.blowup_threshold,
    };
    let steps = ((t_end - t0) / grid.max_dt()).ceil() as usize;
    let dt = (t_end - t0) / steps as f64;
    let every = (steps / cfg.records).max(1);
    let mut rep = PersistenceReport {
        t0,
        delta1: cfg.delta1,
        grid: Some(grid),
        dt,
        steps,
        residual_at_t0,
        ..Default::default()
    };
    let record = |s: &WaveState, rep: &mut PersistenceReport| -> Result<()> {
        let m = perturbation_norms(s, f, &grid)?;
        rep.times.push(s.t);
        rep.sup_eps.push(m.sup);
        rep.energy_eps.push(m.energy);
        rep.l2_eps.push(m.l2);
        rep.energy5_eps.push(m.energy_5d);
        rep.energy_total.push(energy(s, &grid));
        Ok(())
    };
    record(&state, &mut rep)?;
    for k in 1..=steps {
        solver.step(&mut state, dt)?;
        if state.blowup.is_some() {
            break;
        }
        if k % every == 0 || k == steps {
            record(&state, &mut rep)?;
        }
    }
    rep.horizon = state.t;
    rep.blowup = state.blowup;

    let half = 0.5 * (t0 + t_end);
    let (ts, es): (Vec<f64>, Vec<f64>) = rep
        .times
        .iter()
        .zip(&rep.energy_eps)
        .filter(|(t, e)| **t >= half && **e > 0.0)
        .map(|(t, e)| (t / t0, *e))
        .unzip();
    (rep.gamma_fit, rep.gamma_r2) = decay_fit(&ts, &es).unwrap_or((f64::NAN, f64::NAN));
    let within = cfg.delta1 == 0.0
        || rep.times.iter().zip(&rep.energy_eps).all(|(t, e)| {
            *e <= cfg.envelope_k * cfg.delta1 * (t / t0).powf(rep.gamma_fit.max(0.0))
        });
    rep.persistent = rep.blowup.is_none() && rep.gamma_fit <= cfg.gamma_max && within;
    Ok(rep)
}

/// Relative drift `max |E_h(t) - E_h(0)| / E_h(0)` of [`scheme_energy`] in a
/// closed nonlinear run from a bump of amplitude `amp` centered at `r_max/4`.
pub fn closed_run_drift(grid: RadialGrid, amp: f64, steps: usize) -> Result<f64> {
    let (r0, w) = (0.25 * grid.r_max, 0.05 * grid.r_max);
    let mut s = WaveState::from_fn(&grid, 0.0, |r| (amp * bump((r - r0) / w).0, 0.0));
    let solver = WaveSolver::closed(grid, true);
    let e0 = scheme_energy(&s, &grid);
    let mut drift: f64 = 0.0;
    for _ in 0..steps {
        solver.step(&mut s, grid.max_dt())?;
        drift = drift.max((scheme_energy(&s, &grid) - e0).abs() / e0);
    }
    Ok(drift)
}
