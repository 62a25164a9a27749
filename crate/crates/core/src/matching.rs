//! Connection problems at `a = 1/2`, `a = 2` and across the cone, and the
//! assembled global profile.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::Region;
use crate::error::{Error, Result};
use crate::segment_solver::{
    solve_extension, solve_farfield, solve_interior, solve_subcone, solve_supercone, Mode,
    PicardConfig, ResidualProfile, SegmentSolution, ShootingParams,
};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_STEPS: usize = 50;

/// Convergence record of a 2x2 Newton solve.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NewtonReport {
    pub steps: usize,
    pub residual_history: Vec<f64>,
    pub residual: f64,
    pub jacobian_det: f64,
    pub condition: f64,
}

fn sup2(v: [f64; 2]) -> f64 {
    v[0].abs().max(v[1].abs())
}

fn fd_jacobian(
    f: &impl Fn([f64; 2]) -> Result<[f64; 2]>,
    x: [f64; 2],
) -> Result<[[f64; 2]; 2]> {
    let mut j = [[0.0; 2]; 2];
    for k in 0..2 {
        let h = 1e-6 * x[k].abs().max(1.0);
        let (mut xp, mut xm) = (x, x);
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (f(xp)?, f(xm)?);
        for i in 0..2 {
            j[i][k] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

fn condition_2x2(j: &[[f64; 2]; 2]) -> f64 {
    let m = nalgebra::Matrix2::new(j[0][0], j[0][1], j[1][0], j[1][1]);
    let sv = m.singular_values();
    sv.max() / sv.min()
}

/// Damped Newton iteration with centered finite-difference Jacobians.
fn newton(
    stage: &'static str,
    f: impl Fn([f64; 2]) -> Result<[f64; 2]>,
    x0: [f64; 2],
) -> Result<([f64; 2], NewtonReport)> {
    let mut x = x0;
    let mut fx = f(x)?;
    let mut report = NewtonReport {
        residual_history: vec![sup2(fx)],
        ..Default::default()
    };
    let mut j = fd_jacobian(&f, x)?;
    loop {
        let r = sup2(fx);
        if r <= NEWTON_TOL {
            break;
        }
        if report.steps >= NEWTON_MAX_STEPS {
            return Err(Error::NonConvergence {
                stage,
                iterations: report.steps,
                residual: r,
            });
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(det.abs() > 1e-14 * scale * scale) {
            return Err(Error::SingularJacobian { stage, det });
        }
        let dx = [
            -(j[1][1] * fx[0] - j[0][1] * fx[1]) / det,
            -(-j[1][0] * fx[0] + j[0][0] * fx[1]) / det,
        ];
        let mut lambda = 1.0;
        let (xn, fxn) = loop {
            let xn = [x[0] + lambda * dx[0], x[1] + lambda * dx[1]];
            match f(xn) {
                Ok(fxn) if sup2(fxn) < r || lambda < 1e-3 => break (xn, fxn),
                Err(e) if lambda < 1e-3 => return Err(e),
                _ => lambda *= 0.5,
            }
        };
        report.steps += 1;
        let stalled = sup2(fxn) >= r;
        x = xn;
        fx = fxn;
        report.residual_history.push(sup2(fx));
        if stalled {
            // no further decrease possible at working precision
            break;
        }
        j = fd_jacobian(&f, x)?;
    }
    report.residual = sup2(fx);
    report.jacobian_det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    report.condition = condition_2x2(&j);
    if report.residual > 1e-10 {
        return Err(Error::NonConvergence {
            stage,
            iterations: report.steps,
            residual: report.residual,
        });
    }
    Ok((x, report))
}

fn trace_mismatch(a: &SegmentSolution, b: &SegmentSolution) -> [f64; 2] {
    [a.boundary.q - b.boundary.q, a.boundary.qprime - b.boundary.qprime]
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMatch {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub newton: NewtonReport,
    pub interior: SegmentSolution,
    pub subcone: SegmentSolution,
}

/// Finds `(d1, d2)` so the subcone solution continues the interior one at `a = 1/2`.
pub fn match_interior(d0: f64, cfg: &PicardConfig) -> Result<InteriorMatch> {
    let interior = solve_interior(d0, cfg)?;
    let f = |x: [f64; 2]| Ok(trace_mismatch(&solve_subcone(x[0], x[1], cfg)?, &interior));
    // linear guess: d0 φ0 = (3/4) d0 φ2
    let (x, newton) = newton("match_interior", f, [0.0, 0.75 * d0])?;
    let subcone = solve_subcone(x[0], x[1], cfg)?;
    Ok(InteriorMatch {
        d1: x[0],
        d2: x[1],
        d3: subcone.params.d3,
        newton,
        interior,
        subcone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorMatch {
    pub d1t: f64,
    pub d2t: f64,
    pub d3t: f64,
    pub newton: NewtonReport,
    pub supercone: SegmentSolution,
    pub farfield: SegmentSolution,
}

/// Finds `(d1t, d2t)` so the supercone solution meets the far-field one at `a = 2`.
pub fn match_exterior(q1: f64, q2: f64, cfg: &PicardConfig) -> Result<ExteriorMatch> {
    let farfield = solve_farfield(q1, q2, cfg)?;
    let f = |x: [f64; 2]| {
        if x[0].abs() >= 1.0 {
            // outside the small-mode branch of the supercone solver
            return Err(Error::RejectedParameter {
                stage: "match_exterior",
                name: "d1t",
                value: x[0],
                bound: cfg.smallness_bound,
            });
        }
        Ok(trace_mismatch(&solve_supercone(x[0], x[1], cfg)?, &farfield))
    };
    let (x, newton) = newton("match_exterior", f, [q1, q2])?;
    let supercone = solve_supercone(x[0], x[1], cfg)?;
    Ok(ExteriorMatch {
        d1t: x[0],
        d2t: x[1],
        d3t: supercone.params.d3t,
        newton,
        supercone,
        farfield,
    })
}

/// Secant iteration for a scalar root, started from `x0` and `x1`.
fn secant(
    stage: &'static str,
    mut f: impl FnMut(f64) -> Result<f64>,
    x0: f64,
    x1: f64,
    tol: f64,
) -> Result<(f64, usize)> {
    let (mut a, mut b) = (x0, x1);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    for it in 0..60 {
        if fb.abs() <= tol {
            return Ok((b, it));
        }
        if fb == fa {
            return Err(Error::RootBracket { stage });
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = f(b)?;
    }
    if fb.abs() <= 10.0 * tol {
        return Ok((b, 60));
    }
    Err(Error::RootBracket { stage })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeTrace {
    /// `Q(1⁻)`, equal to `2 d3`.
    pub left: f64,
    /// `Q(1⁺)`, equal to `-2 d3t`.
    pub right: f64,
}

impl ConeTrace {
    pub fn residual(&self) -> f64 {
        (self.left - self.right).abs()
    }
}

/// Coefficients of `C1 |a²-1|/a² + C2 (|a²-1|/a²) log(|a-1|/(a+1))` on one side of the cone.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SideCoefficients {
    pub c1: f64,
    pub c2: f64,
}

/// Two-sided expansion `Q = C1 ψ1 + C2 ψ2 + C3 (2/a) + Q4` about `a = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConeExpansion {
    pub inner: SideCoefficients,
    pub outer: SideCoefficients,
    pub c3: f64,
    /// `sup |Q4| / ((a-1)² log²|a-1|)` over the reporting window.
    pub q4_envelope: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FarfieldFit {
    /// `c1` in `Q = c1 + c2/a + O(1/a²)`, from the fit.
    pub limit: f64,
    /// `c2`, from the fit.
    pub coeff: f64,
    /// `sup a² |Q - c1 - c2/a|` over the fit window.
    pub remainder_envelope: f64,
    /// `Q(∞)` extrapolated on the compactified mesh.
    pub anchor_limit: f64,
    /// `dQ/d(1/a)` at `a = ∞` on the compactified mesh.
    pub anchor_coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchingResiduals {
    /// `(ΔQ, ΔQ')` at `a = 1/2`.
    pub interior: [f64; 2],
    /// `(ΔQ, ΔQ')` at the exterior join (`a = 2`, or `1 + l` in large mode).
    pub exterior: [f64; 2],
    pub exterior_join: f64,
    pub interior_jacobian_det: f64,
    pub interior_condition: f64,
    pub exterior_jacobian_det: f64,
    pub exterior_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalProfile {
    pub mode: Mode,
    pub params: ShootingParams,
    /// Interior, subcone, supercone, and far-field (or extension) segments.
    pub segments: Vec<SegmentSolution>,
    pub cone_trace: ConeTrace,
    pub matching: MatchingResiduals,
    pub cone_expansion: ConeExpansion,
    pub farfield: FarfieldFit,
}

/// Default cone fit window on `|a-1|`.
pub const CONE_FIT_WINDOW: (f64, f64) = (1e-7, 1e-2);

/// How the exterior side is selected once the interior side is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ExteriorChoice {
    /// Small exterior solution with free far-field limit `q1`.
    Small { q1: f64 },
    /// Large supercone solution with the given `d1t >= 1`, extended outward.
    Large { d1t: f64 },
}

/// Glues the interior side for `d0` to an exterior side continuous across the cone.
pub fn glue_at_cone(d0: f64, choice: ExteriorChoice, cfg: &PicardConfig) -> Result<GlobalProfile> {
    let im = match_interior(d0, cfg)?;
    let left = im.subcone.anchor_value;
    let (mut params, segments, matching) = match choice {
        ExteriorChoice::Small { q1 } => {
            let mismatch = |q2: f64| -> Result<f64> {
                Ok(match_exterior(q1, q2, cfg)?.supercone.anchor_value - left)
            };
            // continuity means d2t = -d2, and to first order d2t = q2
            let guess = -im.d2;
            let (q2, _) = secant(
                "glue_at_cone",
                mismatch,
                guess + 1e-4 * guess.abs().max(1e-3),
                guess,
                1e-14,
            )?;
            let em = match_exterior(q1, q2, cfg)?;
            let matching = MatchingResiduals {
                interior: trace_mismatch(&im.subcone, &im.interior),
                exterior: trace_mismatch(&em.supercone, &em.farfield),
                exterior_join: 2.0,
                interior_jacobian_det: im.newton.jacobian_det,
                interior_condition: im.newton.condition,
                exterior_jacobian_det: em.newton.jacobian_det,
                exterior_condition: em.newton.condition,
            };
            let params = ShootingParams {
                d1t: em.d1t,
                d2t: em.d2t,
                d3t: em.d3t,
                q1,
                q2,
                mode: Mode::Small,
                ..Default::default()
            };
            (params, vec![em.supercone, em.farfield], matching)
        }
        ExteriorChoice::Large { d1t } => {
            if !(d1t.abs() >= 1.0) {
                return Err(Error::invalid("glue_at_cone", "large mode needs |d1t| >= 1"));
            }
            let cfg = PicardConfig {
                large_mode_c: Some(match cfg.large_mode_c {
                    Some(c) => c,
                    None => crate::segment_solver::calibrate_large_mode_c(-im.d2, cfg)?,
                }),
                ..*cfg
            };
            let mismatch =
                |d2t: f64| -> Result<f64> { Ok(solve_supercone(d1t, d2t, &cfg)?.anchor_value - left) };
            let guess = -im.d2;
            let (d2t, _) = secant(
                "glue_at_cone",
                mismatch,
                guess + 1e-4 * guess.abs().max(1e-3),
                guess,
                1e-14,
            )?;
            let sup = solve_supercone(d1t, d2t, &cfg)?;
            let ext = solve_extension(sup.boundary, &cfg)?;
            let matching = MatchingResiduals {
                interior: trace_mismatch(&im.subcone, &im.interior),
                exterior: trace_mismatch(&ext, &sup),
                exterior_join: sup.interval.hi,
                interior_jacobian_det: im.newton.jacobian_det,
                interior_condition: im.newton.condition,
                exterior_jacobian_det: f64::NAN,
                exterior_condition: f64::NAN,
            };
            let params = ShootingParams {
                d1t,
                d2t,
                d3t: sup.params.d3t,
                mode: Mode::Large,
                ..Default::default()
            };
            (params, vec![sup, ext], matching)
        }
    };
    params.d0 = d0;
    params.d1 = im.d1;
    params.d2 = im.d2;
    params.d3 = im.d3;
    let cone_trace = ConeTrace {
        left,
        right: segments[0].anchor_value,
    };
    if cone_trace.residual() > 1e-8 {
        return Err(Error::invalid(
            "glue_at_cone",
            format!("continuity residual {:.3e} above 1e-8", cone_trace.residual()),
        ));
    }
    let mut all = vec![im.interior, im.subcone];
    all.extend(segments);
    let mut profile = GlobalProfile {
        mode: params.mode,
        params,
        segments: all,
        cone_trace,
        matching,
        cone_expansion: ConeExpansion::default(),
        farfield: FarfieldFit::default(),
    };
    profile.cone_expansion = extract_cone_expansion(&profile)?;
    profile.farfield = extract_farfield(&profile)?;
    Ok(profile)
}

impl GlobalProfile {
    pub fn interior(&self) -> &SegmentSolution {
        &self.segments[0]
    }

    pub fn subcone(&self) -> &SegmentSolution {
        &self.segments[1]
    }

    pub fn supercone(&self) -> &SegmentSolution {
        &self.segments[2]
    }

    /// Far-field segment in small mode, outward extension in large mode.
    pub fn outer(&self) -> &SegmentSolution {
        &self.segments[3]
    }

    /// Largest `a` covered by the profile.
    pub fn a_max(&self) -> f64 {
        self.outer().interval.hi
    }

    /// Closest distance to the cone covered on either side.
    pub fn cone_offset(&self) -> f64 {
        self.subcone().endpoint_offset
    }

    /// `(Q(a), Q'(a))`; fails inside the excluded neighbourhood of the cone.
    pub fn evaluate(&self, a: f64) -> Result<(f64, f64)> {
        for s in &self.segments {
            if a >= s.interval.lo && a <= s.interval.hi {
                return s.evaluate(a);
            }
        }
        Err(Error::OutOfInterval {
            a,
            lo: 0.0,
            hi: self.a_max(),
        })
    }

    /// Signed ODE residual at `a`; see [`SegmentSolution::residual_at`].
    pub fn residual_at(&self, a: f64) -> Result<f64> {
        for s in &self.segments {
            if a >= s.interval.lo && a <= s.interval.hi {
                return s.residual_at(a);
            }
        }
        Err(Error::OutOfInterval {
            a,
            lo: 0.0,
            hi: self.a_max(),
        })
    }

    /// Node-wise ODE residual of all segments, in increasing `a`.
    pub fn ode_residual(&self) -> ResidualProfile {
        let mut out = ResidualProfile {
            a: Vec::new(),
            residual: Vec::new(),
            scale: Vec::new(),
        };
        for s in &self.segments {
            let r = s.ode_residual();
            out.a.extend(r.a);
            out.residual.extend(r.residual);
            out.scale.extend(r.scale);
        }
        out
    }

    /// Largest `|Q|` over the exported nodes of the supercone segment.
    pub fn supercone_max(&self) -> f64 {
        self.supercone()
            .q_values()
            .iter()
            .fold(0.0, |m, q| m.max(q.abs()))
    }
}

fn log_samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp().clamp(lo, hi))
}

/// `(|a²-1|/a², (|a²-1|/a²) log(|a-1|/(a+1)))` at `a = 1 ∓ gap`.
fn cone_basis(gap: f64, region: Region) -> (f64, f64, f64) {
    let a = match region {
        Region::Interior => 1.0 - gap,
        _ => 1.0 + gap,
    };
    let psi1 = gap * (1.0 + a) / (a * a);
    (a, psi1, psi1 * (gap / (a + 1.0)).ln())
}

/// Least-squares fit of the two-sided cone expansion to `inner(gap) = Q(1-gap)`
/// and `outer(gap) = Q(1+gap)` over `window`, with the `Q4` envelope taken over
/// `report`. The coefficients `C1`, `C2` are fitted separately on each side and
/// `C3` is shared.
pub fn fit_cone_expansion(
    inner: impl Fn(f64) -> Result<f64>,
    outer: impl Fn(f64) -> Result<f64>,
    window: (f64, f64),
    report: (f64, f64),
) -> Result<ConeExpansion> {
    const N: usize = 120;
    if !(window.0 > 0.0 && window.0 < window.1 && window.1 < 0.5) {
        return Err(Error::invalid("cone_expansion", "bad fit window"));
    }
    let mut rows = Vec::with_capacity(2 * N);
    let mut rhs = Vec::with_capacity(2 * N);
    for (side, region) in [(0usize, Region::Interior), (1, Region::Exterior)] {
        for g in log_samples(window.0, window.1, N) {
            let (a, p1, p2) = cone_basis(g, region);
            // rows scaled by the size of the neglected term
            let w = 1.0 / (g * g.ln()).powi(2);
            let mut row = [0.0; 5];
            row[2 * side] = w * p1;
            row[2 * side + 1] = w * p2;
            row[4] = w * 2.0 / a;
            rows.push(row);
            rhs.push(w * if side == 0 { inner(g)? } else { outer(g)? });
        }
    }
    let m = DMatrix::from_fn(rows.len(), 5, |i, j| rows[i][j]);
    let norms: Vec<f64> = (0..5).map(|j| m.column(j).norm()).collect();
    let scaled = DMatrix::from_fn(rows.len(), 5, |i, j| rows[i][j] / norms[j]);
    let svd = scaled.clone().svd(true, true);
    let condition = svd.singular_values.max() / svd.singular_values.min();
    if !(condition < 1e10) {
        return Err(Error::IllConditioned {
            stage: "cone_expansion",
            cond: condition,
        });
    }
    let y = DVector::from_vec(rhs);
    let x = svd
        .solve(&y, 1e-14)
        .map_err(|e| Error::invalid("cone_expansion", e))?;
    let c: Vec<f64> = (0..5).map(|j| x[j] / norms[j]).collect();
    let mut envelope: f64 = 0.0;
    for region in [Region::Interior, Region::Exterior] {
        for g in log_samples(report.0, report.1, N) {
            let (a, p1, p2) = cone_basis(g, region);
            let (q, fit) = match region {
                Region::Interior => (inner(g)?, c[0] * p1 + c[1] * p2 + c[4] * 2.0 / a),
                _ => (outer(g)?, c[2] * p1 + c[3] * p2 + c[4] * 2.0 / a),
            };
            envelope = envelope.max((q - fit).abs() / (g * g.ln()).powi(2));
        }
    }
    Ok(ConeExpansion {
        inner: SideCoefficients { c1: c[0], c2: c[1] },
        outer: SideCoefficients { c1: c[2], c2: c[3] },
        c3: c[4],
        q4_envelope: envelope,
        condition,
    })
}

/// Cone expansion of a glued profile on [`CONE_FIT_WINDOW`], with the upper end
/// shrunk by `|d1t|` in large mode. The envelope starts at the cone offset.
pub fn extract_cone_expansion(p: &GlobalProfile) -> Result<ConeExpansion> {
    let off = p.cone_offset();
    // the expansion only holds well inside the large-mode layer
    let hi = CONE_FIT_WINDOW.1 / p.params.d1t.abs().max(1.0);
    fit_cone_expansion(
        |g| Ok(p.evaluate(1.0 - g)?.0),
        |g| Ok(p.evaluate(1.0 + g)?.0),
        (CONE_FIT_WINDOW.0.max(off), hi),
        (off, hi),
    )
}

/// Fit of `Q(a) = c1 + c2/a` on `[lo, hi]` with the `a²`-weighted remainder envelope.
pub fn fit_farfield(q: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<(f64, f64, f64)> {
    if !(lo > 0.0 && hi >= 2.0 * lo) {
        return Err(Error::invalid("farfield_fit", "window too short for a stable fit"));
    }
    let samples: Vec<(f64, f64)> = log_samples(lo, hi, 100)
        .map(|a| Ok((a, q(a)?)))
        .collect::<Result<_>>()?;
    let m = DMatrix::from_fn(samples.len(), 2, |i, j| {
        if j == 0 {
            1.0
        } else {
            1.0 / samples[i].0
        }
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let x = m
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::invalid("farfield_fit", e))?;
    let env = samples
        .iter()
        .map(|(a, v)| a * a * (v - x[0] - x[1] / a).abs())
        .fold(0.0, f64::max);
    Ok((x[0], x[1], env))
}

/// Far-field data of a glued profile, fitted on `[A_max/10, A_max]`.
pub fn extract_farfield(p: &GlobalProfile) -> Result<FarfieldFit> {
    let a_max = p.a_max();
    if a_max < 100.0 {
        return Err(Error::invalid("farfield_fit", "profile must reach a >= 100"));
    }
    let (limit, coeff, remainder_envelope) =
        fit_farfield(|a| Ok(p.evaluate(a)?.0), a_max / 10.0, a_max)?;
    Ok(FarfieldFit {
        limit,
        coeff,
        remainder_envelope,
        anchor_limit: p.outer().anchor_value,
        anchor_coeff: p.outer().anchor_slope,
    })
}
