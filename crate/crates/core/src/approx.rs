//! Cutoff-regularized approximate solution `u_approx(t, r)` built from a glued
//! profile, its wave-map residual `e0`, and band-limited Sobolev norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{GlobalProfile, SideCoefficients};
use crate::quadrature::panel_rule;

/// Transition `χ(x)` of the light-cone excision: 0 for `|x| <= C`, 1 for
/// `|x| >= 2C`, order-7 smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub c: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { c: 1.0 }
    }
}

/// `s(y) = y⁴(35 - 84y + 70y² - 20y³)` and its first two derivatives.
fn smoothstep(y: f64) -> (f64, f64, f64) {
    if y <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if y >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let z = 1.0 - y;
    let s = y.powi(4) * (35.0 - 84.0 * y + 70.0 * y * y - 20.0 * y.powi(3));
    (s, 140.0 * (y * z).powi(3), 420.0 * (y * z).powi(2) * (1.0 - 2.0 * y))
}

impl CutoffSpec {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain {
                what: "cutoff width C",
                value: c,
            });
        }
        Ok(Self { c })
    }

    /// `(χ, χ', χ'')` at `x = t - r`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (s, ds, dds) = smoothstep((x.abs() - self.c) / self.c);
        (s, x.signum() * ds / self.c, dds / (self.c * self.c))
    }

    pub fn chi(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// `sup |χ'|`, attained at the middle of the transition.
    pub fn max_slope(&self) -> f64 {
        140.0 / 64.0 / self.c
    }
}

/// Which part of the profile is carried under the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Q4Mode {
    /// `χ (R + Q4) + C3 Q3`, so `u_approx = Q0(r/t)` where `χ = 1`.
    #[default]
    Include,
    /// `χ R + C3 Q3`; only meaningful close to the cone.
    Drop,
}

/// `u_approx(t, r) = χ(t - r)[R(a) + Q4(a)] + C3 Q3(a)` with `a = r/t`, `Q3 = 2/a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxSolutionField {
    pub profile: GlobalProfile,
    pub cutoff: CutoffSpec,
    pub q4: Q4Mode,
}

/// Value and first and second partial derivatives of a field at `(t, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub u: f64,
    pub u_t: f64,
    pub u_tt: f64,
    pub u_r: f64,
    pub u_rr: f64,
}

impl Jet {
    /// `u_tt - u_rr - (2/r) u_r + sin(2u)/r²`.
    pub fn wave_map_residual(&self, r: f64) -> f64 {
        self.u_tt - self.u_rr - 2.0 / r * self.u_r + (2.0 * self.u).sin() / (r * r)
    }
}

fn side_basis(a: f64) -> [[f64; 3]; 2] {
    // ψ1 = |a²-1|/a², ψ2 = ψ1 log(|a-1|/(a+1)), with derivatives in a
    let sg = if a < 1.0 { -1.0 } else { 1.0 };
    let p = [sg * (1.0 - a.powi(-2)), sg * 2.0 * a.powi(-3), -sg * 6.0 * a.powi(-4)];
    let m = a * a - 1.0;
    let l = [((a - 1.0).abs() / (a + 1.0)).ln(), 2.0 / m, -4.0 * a / (m * m)];
    [
        p,
        [
            p[0] * l[0],
            p[1] * l[0] + p[0] * l[1],
            p[2] * l[0] + 2.0 * p[1] * l[1] + p[0] * l[2],
        ],
    ]
}

impl ApproxSolutionField {
    pub fn new(profile: GlobalProfile, cutoff: CutoffSpec) -> Self {
        Self {
            profile,
            cutoff,
            q4: Q4Mode::Include,
        }
    }

    pub fn c3(&self) -> f64 {
        self.profile.cone_expansion.c3
    }

    fn side(&self, a: f64) -> SideCoefficients {
        if a < 1.0 {
            self.profile.cone_expansion.inner
        } else {
            self.profile.cone_expansion.outer
        }
    }

    /// `R(a)` and its first two derivatives.
    pub fn r_part(&self, a: f64) -> [f64; 3] {
        let s = self.side(a);
        let [p1, p2] = side_basis(a);
        [0, 1, 2].map(|k| s.c1 * p1[k] + s.c2 * p2[k])
    }

    /// `Q0(a)` with `Q0'`, and `Q0''` from the ODE.
    pub fn profile_jet(&self, a: f64) -> Result<[f64; 3]> {
        let (q, dq) = self.profile.evaluate(a)?;
        let ddq = ((2.0 * q).sin() / (a * a) - (2.0 / a - 2.0 * a) * dq) / (1.0 - a * a);
        Ok([q, dq, ddq])
    }

    /// `Q4 = Q0 - R - C3 Q3`.
    pub fn q4(&self, a: f64) -> Result<f64> {
        Ok(self.profile.evaluate(a)?.0 - self.r_part(a)[0] - self.c3() * 2.0 / a)
    }

    /// The part under the cutoff, `X = R + Q4` (or `R`), with derivatives in `a`.
    fn cut_part(&self, a: f64) -> Result<[f64; 3]> {
        match self.q4 {
            Q4Mode::Include => {
                let q = self.profile_jet(a)?;
                let c3 = self.c3();
                Ok([
                    q[0] - c3 * 2.0 / a,
                    q[1] + c3 * 2.0 / (a * a),
                    q[2] - c3 * 4.0 / (a * a * a),
                ])
            }
            Q4Mode::Drop => Ok(self.r_part(a)),
        }
    }

    fn check(&self, t: f64, r: f64) -> Result<f64> {
        if !(t > 0.0 && r > 0.0 && t.is_finite() && r.is_finite()) {
            return Err(Error::Domain {
                what: "(t, r)",
                value: if t > 0.0 { r } else { t },
            });
        }
        let a = r / t;
        if a > self.profile.a_max() {
            return Err(Error::OutOfInterval {
                a,
                lo: 0.0,
                hi: self.profile.a_max(),
            });
        }
        Ok(a)
    }

    /// All first and second derivatives of `u_approx` by the chain rule.
    pub fn jet(&self, t: f64, r: f64) -> Result<Jet> {
        let a = self.check(t, r)?;
        let c3 = self.c3();
        // C3 Q3 = 2 C3 t/r
        let mut j = Jet {
            u: 2.0 * c3 * t / r,
            u_t: 2.0 * c3 / r,
            u_tt: 0.0,
            u_r: -2.0 * c3 * t / (r * r),
            u_rr: 4.0 * c3 * t / (r * r * r),
        };
        let (chi, dchi, ddchi) = self.cutoff.eval(t - r);
        if chi == 0.0 && dchi == 0.0 && ddchi == 0.0 {
            return Ok(j);
        }
        let x = self.cut_part(a)?;
        let x_t = -a / t * x[1];
        let x_tt = (a * a * x[2] + 2.0 * a * x[1]) / (t * t);
        let x_r = x[1] / t;
        let x_rr = x[2] / (t * t);
        j.u += chi * x[0];
        j.u_t += dchi * x[0] + chi * x_t;
        j.u_tt += ddchi * x[0] + 2.0 * dchi * x_t + chi * x_tt;
        j.u_r += -dchi * x[0] + chi * x_r;
        j.u_rr += ddchi * x[0] - 2.0 * dchi * x_r + chi * x_rr;
        Ok(j)
    }
}

/// `(u_approx, ∂_t u_approx)` at `(t, r)`.
pub fn eval_uapprox(f: &ApproxSolutionField, t: f64, r: f64) -> Result<(f64, f64)> {
    let j = f.jet(t, r)?;
    Ok((j.u, j.u_t))
}

/// How `e0` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum E0Method {
    /// Chain rule with `Q0''` from the ODE.
    Analytic,
    /// Centered 6th-order differences with steps `h_r`, `h_t`.
    FiniteDifference { h_r: f64, h_t: f64 },
}

impl Default for E0Method {
    fn default() -> Self {
        Self::Analytic
    }
}

/// Evaluator of `e0 = □u_approx + sin(2u_approx)/r²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualField {
    pub method: E0Method,
}

impl ResidualField {
    pub fn e0(&self, f: &ApproxSolutionField, t: f64, r: f64) -> Result<f64> {
        match self.method {
            E0Method::Analytic => Ok(f.jet(t, r)?.wave_map_residual(r)),
            E0Method::FiniteDifference { h_r, h_t } => {
                let c = f.cutoff.c;
                if h_r > c / 20.0 || h_t > c / 20.0 {
                    return Err(Error::StepTooLarge {
                        stage: "residual_e0",
                        step: h_r.max(h_t),
                        width: c,
                    });
                }
                let j = fd_jet(|t, r| Ok(f.jet(t, r)?.u), t, r, h_t, h_r)?;
                Ok(j.wave_map_residual(r))
            }
        }
    }
}

/// `e0` at `(t, r)` by the chain rule.
pub fn residual_e0(f: &ApproxSolutionField, t: f64, r: f64) -> Result<f64> {
    ResidualField::default().e0(f, t, r)
}

const D1: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
const D2: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];

/// 6th-order centered first and second differences of `u` in `t` and `r`.
pub fn fd_jet(
    u: impl Fn(f64, f64) -> Result<f64>,
    t: f64,
    r: f64,
    h_t: f64,
    h_r: f64,
) -> Result<Jet> {
    if !(h_t > 0.0 && h_r > 0.0) || r - 3.0 * h_r <= 0.0 {
        return Err(Error::invalid("fd_jet", "steps must be positive and the stencil must stay in r > 0"));
    }
    let u0 = u(t, r)?;
    let (mut u_t, mut u_tt, mut u_r, mut u_rr) = (0.0, D2[0] * u0, 0.0, D2[0] * u0);
    for k in 1..=3 {
        let kf = k as f64;
        let (tp, tm) = (u(t + kf * h_t, r)?, u(t - kf * h_t, r)?);
        let (rp, rm) = (u(t, r + kf * h_r)?, u(t, r - kf * h_r)?);
        u_t += D1[k - 1] * (tp - tm);
        u_tt += D2[k] * (tp + tm);
        u_r += D1[k - 1] * (rp - rm);
        u_rr += D2[k] * (rp + rm);
    }
    Ok(Jet {
        u: u0,
        u_t: u_t / h_t,
        u_tt: u_tt / (h_t * h_t),
        u_r: u_r / h_r,
        u_rr: u_rr / (h_r * h_r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualNorms {
    /// `(4π ∫ e0² r² dr)^{1/2}`.
    pub l2: f64,
    /// `sup |e0|` over `C <= |t - r| <= 2C`.
    pub strip_sup: f64,
}

/// Norms of `e0` at time `t`. Off `|t - r| <= 2C` the residual is that of the
/// profile ODE and is not integrated.
pub fn residual_norms(f: &ApproxSolutionField, t: f64) -> Result<ResidualNorms> {
    residual_norms_with(f, t, &ResidualField::default())
}

pub fn residual_norms_with(
    f: &ApproxSolutionField,
    t: f64,
    field: &ResidualField,
) -> Result<ResidualNorms> {
    let c = f.cutoff.c;
    if !(t > 2.0 * c) {
        return Err(Error::Domain {
            what: "t (must exceed 2C)",
            value: t,
        });
    }
    let rule = panel_rule();
    let breaks = [t - 2.0 * c, t - c, t, t + c, t + 2.0 * c];
    let mut l2 = 0.0;
    for w in breaks.windows(2) {
        let panels = 8;
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let mid = w[0] + (p as f64 + 0.5) * h;
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                let r = mid + 0.5 * h * x;
                let e = field.e0(f, t, r)?;
                l2 += 0.5 * h * wt * e * e * r * r;
            }
        }
    }
    if !l2.is_finite() {
        return Err(Error::invalid("residual_norms", "quadrature produced a non-finite value"));
    }
    let mut strip_sup: f64 = 0.0;
    for sign in [-1.0, 1.0] {
        for k in 0..=200 {
            let x = sign * c * (1.0 + k as f64 / 200.0);
            strip_sup = strip_sup.max(field.e0(f, t, t - x)?.abs());
        }
    }
    Ok(ResidualNorms {
        l2: (4.0 * std::f64::consts::PI * l2).sqrt(),
        strip_sup,
    })
}

/// Least-squares slope of `log vals` against `log ts`, with `R²`.
pub fn decay_fit(ts: &[f64], vals: &[f64]) -> Result<(f64, f64)> {
    if ts.len() != vals.len() || ts.len() < 4 {
        return Err(Error::invalid("decay_fit", "need at least 4 paired samples"));
    }
    if let Some(v) = vals.iter().chain(ts).find(|v| !(**v > 0.0)) {
        return Err(Error::Domain {
            what: "decay_fit sample",
            value: *v,
        });
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&x, &y))
}

/// Slope and `R²` of the least-squares line through `(x, y)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Radial samples `u(r_j)` on an increasing grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RadialSamples {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
}

/// Uniform spacing `h` up to `r_dense`, then steps growing by `ratio` up to `r_max`.
pub fn graded_radii(h: f64, r_dense: f64, r_max: f64, ratio: f64) -> Vec<f64> {
    let n = (r_dense / h).ceil() as usize;
    let mut r: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
    let mut step = h;
    while *r.last().unwrap() < r_max {
        step *= ratio;
        let next = (r.last().unwrap() + step).min(r_max);
        r.push(next);
    }
    r
}

/// Smooth taper equal to 1 on `[0, r_max/2]` and 0 from `r_max` on.
pub fn decay_window(r: f64, r_max: f64) -> f64 {
    1.0 - smoothstep(2.0 * r / r_max - 1.0).0
}

impl RadialSamples {
    pub fn from_fn(r: Vec<f64>, f: impl Fn(f64) -> f64) -> Self {
        let u = r.iter().map(|&x| f(x)).collect();
        Self { r, u }
    }

    /// `û(k) = (4π/k) ∫ u(r) sin(kr) r dr`, exact for piecewise-linear `r u`.
    pub fn hankel(&self, k: f64) -> f64 {
        let (r, u) = (&self.r, &self.u);
        let n = r.len();
        let g = |j: usize| r[j] * u[j];
        let mut sum = -g(n - 1) * (k * r[n - 1]).cos() / k + g(0) * (k * r[0]).cos() / k;
        for j in 0..n - 1 {
            let dr = r[j + 1] - r[j];
            if dr <= 0.0 {
                continue;
            }
            let slope = (g(j + 1) - g(j)) / dr;
            // sin(k r1) - sin(k r0) without cancellation
            let ds = 2.0 * (0.5 * k * (r[j] + r[j + 1])).cos() * (0.5 * k * dr).sin();
            sum += slope * ds / (k * k);
        }
        4.0 * std::f64::consts::PI / k * sum
    }

    fn check(&self, k_min: f64, k_max: f64) -> Result<()> {
        if self.r.len() < 2 || self.r.len() != self.u.len() {
            return Err(Error::invalid("critical_norm_band", "need at least two samples"));
        }
        if !(k_min > 0.0 && k_min < k_max) {
            return Err(Error::invalid("critical_norm_band", "need 0 < k_min < k_max"));
        }
        let h = self.r[1] - self.r[0];
        if k_max * h > std::f64::consts::PI {
            return Err(Error::Aliasing {
                stage: "critical_norm_band",
                k_max,
                h,
            });
        }
        Ok(())
    }
}

/// `κ k^{2s} |û|² k³`, the integrand of the band norm in `log k`, with `κ = 4π/(2π)³`.
fn band_density(u: &RadialSamples, k: f64, s: f64) -> f64 {
    let uh = u.hankel(k);
    k.powf(2.0 * s) * uh * uh * k.powi(3) / (2.0 * std::f64::consts::PI.powi(2))
}

/// Band-limited homogeneous Sobolev norm `N` with
/// `N² = κ ∫_{k_min}^{k_max} k^{2s} |û(k)|² k² dk`. For the data component of
/// the critical pair use `s = 3/2`, for the velocity component `s = 1/2`.
pub fn critical_norm_band(u: &RadialSamples, k_min: f64, k_max: f64, s: f64) -> Result<f64> {
    let scan = critical_norm_scan(u, k_min, k_max, s, 8)?;
    Ok(scan[0].1)
}

/// `N(k_min)` at every panel edge of a log-spaced band `[k_lo, k_max]` with
/// `panels_per_decade` 16-point panels, ordered by increasing `k_min`.
pub fn critical_norm_scan(
    u: &RadialSamples,
    k_lo: f64,
    k_max: f64,
    s: f64,
    panels_per_decade: usize,
) -> Result<Vec<(f64, f64)>> {
    u.check(k_lo, k_max)?;
    let rule = panel_rule();
    let (l0, l1) = (k_lo.ln(), k_max.ln());
    let panels = ((l1 - l0) / std::f64::consts::LN_10 * panels_per_decade as f64)
        .ceil()
        .max(1.0) as usize;
    let w = (l1 - l0) / panels as f64;
    let mut parts = vec![0.0; panels];
    for (p, part) in parts.iter_mut().enumerate() {
        let mid = l0 + (p as f64 + 0.5) * w;
        *part = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, wt)| wt * band_density(u, (mid + 0.5 * w * x).exp(), s))
            .sum::<f64>()
            * 0.5
            * w;
    }
    let mut out = Vec::with_capacity(panels);
    let mut acc = 0.0;
    for p in (0..panels).rev() {
        acc += parts[p];
        out.push(((l0 + p as f64 * w).exp(), acc.sqrt()));
    }
    out.reverse();
    Ok(out)
}

/// Setup of the critical-norm divergence experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalNormConfig {
    pub t: f64,
    /// Fit band for `k_min`, in units of `1/t`.
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub k_max: f64,
    pub h: f64,
    pub ratio: f64,
    pub panels_per_decade: usize,
}

impl Default for CriticalNormConfig {
    fn default() -> Self {
        Self {
            t: 50.0,
            fit_lo: 5e-5,
            fit_hi: 1e-1,
            k_max: 2.0,
            h: 0.25,
            ratio: 1.02,
            panels_per_decade: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticalNormReport {
    pub k_min: Vec<f64>,
    /// `N²` of the pair `(u - c1, u_t)` in `Ḣ^{3/2} × Ḣ^{1/2}`.
    pub pair: Vec<f64>,
    /// `N²` of `u - c1` in `Ḣ^{3/2}` alone.
    pub data_only: Vec<f64>,
    /// `N²` of the pair after subtracting the `1/r` tails.
    pub tail_subtracted: Vec<f64>,
    /// Slope of `pair` against `log(1/k_min)` on the fit band, with `R²`.
    pub slope: f64,
    pub r2: f64,
    pub data_only_slope: f64,
    pub control_slope: f64,
    /// `8 c2²`, the slope predicted by the `c2/r` velocity tail.
    pub predicted_slope: f64,
    pub r_max: f64,
}

/// Low-frequency growth of the critical norm of `(u_approx(T), ∂_t u_approx(T))`
/// with the far-field limit removed.
pub fn critical_norm_divergence(
    f: &ApproxSolutionField,
    cfg: &CriticalNormConfig,
) -> Result<CriticalNormReport> {
    let t = cfg.t;
    let r_max = f.profile.a_max() * t;
    let c1 = f.profile.farfield.anchor_limit;
    let c2 = f.profile.farfield.anchor_coeff;
    let radii = graded_radii(cfg.h, 4.0 * t, r_max, cfg.ratio);
    let mut data = RadialSamples {
        r: radii.clone(),
        u: Vec::with_capacity(radii.len()),
    };
    let mut vel = data.clone();
    let (mut data_c, mut vel_c) = (data.clone(), data.clone());
    for &r in &radii {
        let win = decay_window(r, r_max);
        let (u, u_t) = if r == 0.0 {
            (f.profile.evaluate(0.0)?.0, 0.0)
        } else {
            eval_uapprox(f, t, r.min(r_max * (1.0 - 1e-12)))?
        };
        let damp = r * r / (r * r + t * t);
        data.u.push(win * (u - c1));
        vel.u.push(win * u_t);
        data_c.u.push(win * (u - c1 - c2 * t * damp / r.max(f64::MIN_POSITIVE)));
        vel_c.u.push(win * (u_t - c2 * damp / r.max(f64::MIN_POSITIVE)));
    }
    let k_lo = cfg.fit_lo / t;
    let ppd = cfg.panels_per_decade;
    let d = critical_norm_scan(&data, k_lo, cfg.k_max, 1.5, ppd)?;
    let v = critical_norm_scan(&vel, k_lo, cfg.k_max, 0.5, ppd)?;
    let dc = critical_norm_scan(&data_c, k_lo, cfg.k_max, 1.5, ppd)?;
    let vc = critical_norm_scan(&vel_c, k_lo, cfg.k_max, 0.5, ppd)?;
    let mut rep = CriticalNormReport {
        predicted_slope: 8.0 * c2 * c2,
        r_max,
        ..Default::default()
    };
    for i in 0..d.len() {
        if d[i].0 > cfg.fit_hi / t * (1.0 + 1e-9) {
            break;
        }
        rep.k_min.push(d[i].0);
        rep.data_only.push(d[i].1.powi(2));
        rep.pair.push(d[i].1.powi(2) + v[i].1.powi(2));
        rep.tail_subtracted.push(dc[i].1.powi(2) + vc[i].1.powi(2));
    }
    if rep.k_min.len() < 4 {
        return Err(Error::invalid("critical_norm", "fit band holds fewer than 4 points"));
    }
    let x: Vec<f64> = rep.k_min.iter().map(|k| -k.ln()).collect();
    (rep.slope, rep.r2) = linear_fit(&x, &rep.pair);
    rep.data_only_slope = linear_fit(&x, &rep.data_only).0;
    rep.control_slope = linear_fit(&x, &rep.tail_subtracted).0;
    Ok(rep)
}
