//! Picard iteration for the self-similar ODE on the four intervals
//! `[0, 1/2]`, `[1/2, 1)`, `(1, a_hi]` and `[2, A_max]`.
//!
//! Each segment is discretized on Gauss–Legendre panels in a chart
//! variable `s`. Near the cone the chart is `a = 1 ∓ e^{-s}`, in which the
//! `(1-a) log(1-a)` behaviour of the solution is smooth; the far field uses
//! `s = 1/a`, which compactifies `[2, ∞]` to `[0, 1/2]`.

use serde::{Deserialize, Serialize};

use crate::basis::{
    exterior_pair_gap, forcing_numerator, interior_pair_gap, BasisPair, Region, SelfSimCoordinate,
};
use crate::error::{Error, Result};
use crate::quadrature::{legendre_series, panel_rule, PANEL_ORDER};

/// Chart `s -> a` used to place panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    /// `a = s`
    Linear,
    /// `a = 1 - e^{-s}`
    ConeInside,
    /// `a = 1 + e^{-s}`
    ConeOutside,
    /// `a = 1/s`
    Reciprocal,
}

impl Chart {
    pub fn point(self, s: f64) -> SelfSimCoordinate {
        match self {
            Chart::Linear => {
                let region = if s < 1.0 {
                    Region::Interior
                } else if s > 1.0 {
                    Region::Exterior
                } else {
                    Region::Cone
                };
                SelfSimCoordinate {
                    a: s,
                    gap: (1.0 - s).abs(),
                    region,
                }
            }
            Chart::ConeInside => SelfSimCoordinate::inside((-s).exp()),
            Chart::ConeOutside => SelfSimCoordinate::outside((-s).exp()),
            Chart::Reciprocal => SelfSimCoordinate {
                a: 1.0 / s,
                gap: (1.0 - s) / s,
                region: Region::Exterior,
            },
        }
    }

    /// `da/ds`
    pub fn jacobian(self, s: f64) -> f64 {
        match self {
            Chart::Linear => 1.0,
            Chart::ConeInside => (-s).exp(),
            Chart::ConeOutside => -(-s).exp(),
            Chart::Reciprocal => -1.0 / (s * s),
        }
    }

    /// Inverse map `a -> s`.
    pub fn coordinate(self, a: f64) -> f64 {
        match self {
            Chart::Linear => a,
            Chart::ConeInside => -(1.0 - a).ln(),
            Chart::ConeOutside => -(a - 1.0).ln(),
            Chart::Reciprocal => 1.0 / a,
        }
    }

    /// True when `a` decreases as `s` increases.
    pub fn reversed(self) -> bool {
        matches!(self, Chart::ConeOutside | Chart::Reciprocal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Approximate number of exported mesh nodes per segment.
    pub mesh_points: usize,
    /// Panel-boundary clustering toward the anchored endpoint (1 = uniform).
    pub grading_exponent: f64,
    /// Distance of the last exported node from the cone.
    pub endpoint_offset: f64,
    /// Sup-norm tolerance on the Picard update.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest exported `a` of the far-field segment.
    pub farfield_cutoff: f64,
    /// Bound on the seed parameters in small mode.
    pub smallness_bound: f64,
    /// Length constant `c` in `l = c d1t^{-1/2}`; calibrated when absent.
    pub large_mode_c: Option<f64>,
    /// Constant `C` of the bootstrap bound `|Q1| <= C d1t (a-1)^2 log^2(a-1)`.
    pub bootstrap_constant: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            mesh_points: 512,
            grading_exponent: 1.0,
            endpoint_offset: 1e-10,
            tol: 1e-12,
            max_iter: 100,
            farfield_cutoff: 1e3,
            smallness_bound: 0.2,
            large_mode_c: None,
            bootstrap_constant: 1.0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid("config", m));
        if self.mesh_points < PANEL_ORDER {
            return bad("mesh_points must be at least one panel");
        }
        if !(self.grading_exponent >= 1.0) {
            return bad("grading_exponent must be >= 1");
        }
        if !(self.endpoint_offset > 0.0 && self.endpoint_offset < 0.5) {
            return bad("endpoint_offset must lie in (0, 1/2)");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.farfield_cutoff > 2.0) {
            return bad("farfield_cutoff must exceed 2");
        }
        if !(self.smallness_bound > 0.0) {
            return bad("smallness_bound must be positive");
        }
        if let Some(c) = self.large_mode_c {
            if !(c > 0.0 && c <= 1.0) {
                return bad("large_mode_c must lie in (0, 1]");
            }
        }
        if !(self.bootstrap_constant > 0.0) {
            return bad("bootstrap_constant must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Small,
    Large,
}

/// Scalar parameters of the four segment problems.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShootingParams {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d1t: f64,
    pub d2t: f64,
    pub d3t: f64,
    pub q1: f64,
    pub q2: f64,
    pub mode: Mode,
}

/// `d3` with `sin(4 d3) = 4 d2`.
pub fn cone_constant(d2: f64) -> Result<f64> {
    if !((4.0 * d2).abs() <= 1.0) {
        return Err(Error::Domain {
            what: "arcsin(4 d2)",
            value: d2,
        });
    }
    Ok((4.0 * d2).asin() / 4.0)
}

impl ShootingParams {
    pub fn check_cone_constraints(&self) -> Result<()> {
        for (d2, d3, name) in [(self.d2, self.d3, "d3"), (self.d2t, self.d3t, "d3t")] {
            let r = ((4.0 * d3).sin() - 4.0 * d2).abs();
            if r > 1e-12 {
                return Err(Error::invalid(
                    "params",
                    format!("{name} violates sin(4 d3) = 4 d2 by {r:.3e}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Interior,
    Subcone,
    Supercone,
    Farfield,
    /// Outward integration of the ODE beyond a large-mode supercone.
    Extension,
    /// Samples of a prescribed profile.
    Fixture,
}

impl SegmentKind {
    fn stage(self) -> &'static str {
        match self {
            SegmentKind::Interior => "interior",
            SegmentKind::Subcone => "subcone",
            SegmentKind::Supercone => "supercone",
            SegmentKind::Farfield => "farfield",
            SegmentKind::Extension => "extension",
            SegmentKind::Fixture => "fixture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub final_update_supnorm: f64,
    pub contraction_ratio: f64,
    pub update_history: Vec<f64>,
    /// Largest trailing Legendre coefficient over the exported panels.
    pub interpolation_error: f64,
    /// Quadrature error estimate of the non-exported panels.
    pub tail_error_estimate: f64,
}

/// One Gauss–Legendre panel on `[s_lo, s_hi]` of the chart variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub s_lo: f64,
    pub s_hi: f64,
    pub a: Vec<f64>,
    pub gap: Vec<f64>,
    pub q: Vec<f64>,
    pub qprime: Vec<f64>,
    /// `Q` minus the linear part, computed from the integral terms directly.
    #[serde(default)]
    pub remainder: Vec<f64>,
}

/// Value and derivative `dQ/da` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub a: f64,
    pub q: f64,
    pub qprime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSolution {
    pub kind: SegmentKind,
    pub chart: Chart,
    pub interval: Interval,
    pub params: ShootingParams,
    pub panels: Vec<Panel>,
    pub convergence: ConvergenceReport,
    pub endpoint_offset: f64,
    /// Trace at the end of the segment used for matching.
    pub boundary: Trace,
    /// Limit of `Q` at the anchored end (`a -> 1` or `a -> ∞`).
    pub anchor_value: f64,
    /// `dQ/ds` at the anchored end; for the far field this is the `1/a` coefficient.
    pub anchor_slope: f64,
    /// Large-mode length constant, when applicable.
    pub large_mode_c: Option<f64>,
}

/// Chart length of the non-exported panels beyond the cone offset.
const CONE_TAIL: f64 = 24.0;
const CONE_TAIL_PANELS: usize = 3;
/// Effective amplitude for the subcone refinement: narrow panels next to
/// `a = 1/2`, where the chart is 0.69 away from the pole at `a = 0`.
const SUBCONE_REFINE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Anchor {
    Low,
    High,
}

#[derive(Debug, Clone)]
struct Layout {
    chart: Chart,
    bounds: Vec<(f64, f64)>,
    exported: Vec<bool>,
    anchor: Anchor,
}

fn graded_bounds(lo: f64, hi: f64, n: usize, gamma: f64, anchor: Anchor) -> Vec<(f64, f64)> {
    let x = |j: usize| match anchor {
        Anchor::Low => lo + (hi - lo) * (j as f64 / n as f64).powf(gamma),
        Anchor::High => hi - (hi - lo) * ((n - j) as f64 / n as f64).powf(gamma),
    };
    (0..n)
        .map(|k| {
            let (a, b) = (x(k), x(k + 1));
            (if k == 0 { lo } else { a }, if k + 1 == n { hi } else { b })
        })
        .collect()
}

fn panel_count(cfg: &PicardConfig) -> usize {
    cfg.mesh_points.div_ceil(PANEL_ORDER).max(1)
}

impl Layout {
    fn interior(cfg: &PicardConfig) -> Self {
        let bounds = graded_bounds(0.0, 0.5, panel_count(cfg), cfg.grading_exponent, Anchor::Low);
        let exported = vec![true; bounds.len()];
        Self {
            chart: Chart::Linear,
            bounds,
            exported,
            anchor: Anchor::Low,
        }
    }

    /// Cone chart from `s_far` (the matching end) to the cone, plus hidden tail panels.
    /// `amplitude > 0` adds panels next to `s_far` whose width keeps the phase
    /// of `sin(2Q)` below about 4 rad per panel when `|Q| ≈ amplitude e^{s_far - s}`.
    fn cone(chart: Chart, s_far: f64, amplitude: f64, cfg: &PicardConfig) -> Self {
        let s_off = -cfg.endpoint_offset.ln();
        let mut bounds = Vec::new();
        let mut s_mid = s_far;
        if amplitude > 0.0 {
            loop {
                let w = (2.0 / (amplitude * (s_far - s_mid).exp())).max(0.05);
                if w >= 1.0 || s_mid + w >= s_off {
                    break;
                }
                bounds.push((s_mid, s_mid + w));
                s_mid += w;
            }
        }
        bounds.extend(graded_bounds(
            s_mid,
            s_off,
            panel_count(cfg),
            cfg.grading_exponent,
            Anchor::High,
        ));
        let mut exported = vec![true; bounds.len()];
        let h = CONE_TAIL / CONE_TAIL_PANELS as f64;
        for k in 0..CONE_TAIL_PANELS {
            bounds.push((s_off + k as f64 * h, s_off + (k + 1) as f64 * h));
            exported.push(false);
        }
        Self {
            chart,
            bounds,
            exported,
            anchor: Anchor::High,
        }
    }

    fn farfield(cfg: &PicardConfig) -> Self {
        let x_cut = 1.0 / cfg.farfield_cutoff;
        let mut bounds = vec![(0.0, x_cut)];
        let mut exported = vec![false];
        for b in graded_bounds(x_cut, 0.5, panel_count(cfg), cfg.grading_exponent, Anchor::Low) {
            bounds.push(b);
            exported.push(true);
        }
        Self {
            chart: Chart::Reciprocal,
            bounds,
            exported,
            anchor: Anchor::Low,
        }
    }

    fn node_s(&self) -> Vec<f64> {
        let rule = panel_rule();
        let mut s = Vec::with_capacity(self.bounds.len() * PANEL_ORDER);
        for &(lo, hi) in &self.bounds {
            for &t in &rule.nodes {
                s.push(0.5 * (lo + hi) + 0.5 * (hi - lo) * t);
            }
        }
        s
    }
}

fn one_minus_square(p: &SelfSimCoordinate) -> f64 {
    match p.region {
        Region::Interior => p.gap * (1.0 + p.a),
        Region::Exterior => -p.gap * (1.0 + p.a),
        Region::Cone => 0.0,
    }
}

/// The integral equation of one segment:
/// `Q = lin + (σ1 φ1 I1 + σ2 φ2 I2)/4`, with `I1 = ∫ φ2 N/(1-b²)` and
/// `I2 = ∫ N/b²` taken from the anchored end, and `N = sin 2Q - 2Q + shift/b`.
#[derive(Debug, Clone, Copy)]
struct Problem {
    kind: SegmentKind,
    params: ShootingParams,
    signs: (f64, f64),
    shift: f64,
}

impl Problem {
    fn pair(&self, p: &SelfSimCoordinate) -> BasisPair {
        match self.kind {
            SegmentKind::Interior | SegmentKind::Subcone => interior_pair_gap(p.a, p.gap),
            _ => exterior_pair_gap(p.a, p.gap),
        }
    }

    fn linear(&self, p: &SelfSimCoordinate, b: &BasisPair) -> (f64, f64) {
        let k = &self.params;
        match self.kind {
            SegmentKind::Interior => (0.75 * k.d0 * b.phi2, 0.75 * k.d0 * b.dphi2),
            SegmentKind::Subcone => {
                let c = k.d3 - k.d2;
                (
                    k.d1 * b.phi1 + k.d2 * b.phi2 + 2.0 * c / p.a,
                    k.d1 * b.dphi1 + k.d2 * b.dphi2 - 2.0 * c / (p.a * p.a),
                )
            }
            SegmentKind::Supercone => {
                let c = k.d3t - k.d2t;
                (
                    k.d1t * b.phi1 + k.d2t * b.phi2 - 2.0 * c / p.a,
                    k.d1t * b.dphi1 + k.d2t * b.dphi2 + 2.0 * c / (p.a * p.a),
                )
            }
            _ => (
                k.q1 * b.phi1 + k.q2 * b.phi2,
                k.q1 * b.dphi1 + k.q2 * b.dphi2,
            ),
        }
    }

    fn new(kind: SegmentKind, params: ShootingParams) -> Self {
        let (signs, shift) = match kind {
            SegmentKind::Interior => ((-1.0, 1.0), 0.0),
            SegmentKind::Subcone => ((1.0, -1.0), 4.0 * (params.d3 - params.d2)),
            SegmentKind::Supercone => ((-1.0, -1.0), -4.0 * (params.d3t - params.d2t)),
            _ => ((1.0, 1.0), 0.0),
        };
        Self {
            kind,
            params,
            signs,
            shift,
        }
    }
}

struct Discretization {
    layout: Layout,
    s: Vec<f64>,
    pts: Vec<SelfSimCoordinate>,
    /// `|da/ds|` at the nodes.
    weight: Vec<f64>,
    pairs: Vec<BasisPair>,
    lin: Vec<f64>,
    dlin: Vec<f64>,
}

impl Discretization {
    fn new(layout: Layout, problem: &Problem) -> Self {
        let s = layout.node_s();
        let pts: Vec<_> = s.iter().map(|&v| layout.chart.point(v)).collect();
        let weight = s.iter().map(|&v| layout.chart.jacobian(v).abs()).collect();
        let pairs: Vec<_> = pts.iter().map(|p| problem.pair(p)).collect();
        let (lin, dlin) = pts
            .iter()
            .zip(&pairs)
            .map(|(p, b)| problem.linear(p, b))
            .unzip();
        Self {
            layout,
            s,
            pts,
            weight,
            pairs,
            lin,
            dlin,
        }
    }

    /// Cumulative integral (in `s`) of node values `f` from the anchored end.
    /// Returns the node values and the total over the whole layout.
    fn anchored_integral(&self, f: &[f64], out: &mut [f64]) -> f64 {
        let rule = panel_rule();
        let n = PANEL_ORDER;
        let mut running = 0.0;
        let mut local = [0.0; PANEL_ORDER];
        let np = self.layout.bounds.len();
        let order: Vec<usize> = match self.layout.anchor {
            Anchor::Low => (0..np).collect(),
            Anchor::High => (0..np).rev().collect(),
        };
        for p in order {
            let (lo, hi) = self.layout.bounds[p];
            let half = 0.5 * (hi - lo);
            let fp = &f[p * n..(p + 1) * n];
            match self.layout.anchor {
                Anchor::Low => rule.cumulative_left(fp, &mut local),
                Anchor::High => rule.cumulative_right(fp, &mut local),
            }
            for j in 0..n {
                out[p * n + j] = running + half * local[j];
            }
            running += half * rule.integrate(fp);
        }
        running
    }
}

struct PicardOutcome {
    q: Vec<f64>,
    dq: Vec<f64>,
    rem: Vec<f64>,
    totals: (f64, f64),
    report: ConvergenceReport,
    tail_error: f64,
}

fn picard(problem: &Problem, disc: &Discretization, cfg: &PicardConfig) -> Result<PicardOutcome> {
    let stage = problem.kind.stage();
    let m = disc.s.len();
    let mut q = disc.lin.clone();
    let mut dq = disc.dlin.clone();
    let mut rem = vec![0.0; m];
    let mut report = ConvergenceReport::default();
    if disc.lin.iter().all(|&v| v == 0.0) && problem.shift == 0.0 {
        return Ok(PicardOutcome {
            q,
            dq,
            rem,
            totals: (0.0, 0.0),
            report,
            tail_error: 0.0,
        });
    }
    let (s1, s2) = problem.signs;
    let mut f1 = vec![0.0; m];
    let mut f2 = vec![0.0; m];
    let mut i1 = vec![0.0; m];
    let mut i2 = vec![0.0; m];
    let mut rising = 0;
    let totals = loop {
        for i in 0..m {
            let p = &disc.pts[i];
            let n = forcing_numerator(q[i]) + problem.shift / p.a;
            f1[i] = disc.pairs[i].phi2 * n / one_minus_square(p) * disc.weight[i];
            f2[i] = n / (p.a * p.a) * disc.weight[i];
        }
        let totals = (
            disc.anchored_integral(&f1, &mut i1),
            disc.anchored_integral(&f2, &mut i2),
        );
        let mut update: f64 = 0.0;
        for i in 0..m {
            let b = &disc.pairs[i];
            rem[i] = 0.25 * (s1 * b.phi1 * i1[i] + s2 * b.phi2 * i2[i]);
            let qn = disc.lin[i] + rem[i];
            let dqn = disc.dlin[i] + 0.25 * (s1 * b.dphi1 * i1[i] + s2 * b.dphi2 * i2[i]);
            update = update.max((qn - q[i]).abs());
            q[i] = qn;
            dq[i] = dqn;
        }
        report.iterations += 1;
        report.update_history.push(update);
        report.final_update_supnorm = update;
        let h = &report.update_history;
        if h.len() >= 2 {
            let prev = h[h.len() - 2];
            report.contraction_ratio = if prev > 0.0 { update / prev } else { 0.0 };
        }
        if !update.is_finite() {
            return Err(Error::DivergedIteration {
                stage,
                ratio: f64::INFINITY,
            });
        }
        if update <= cfg.tol {
            break totals;
        }
        if h.len() >= 3 && report.contraction_ratio >= 1.0 {
            rising += 1;
            if rising >= 2 {
                return Err(Error::DivergedIteration {
                    stage,
                    ratio: report.contraction_ratio,
                });
            }
        } else {
            rising = 0;
        }
        if report.iterations >= cfg.max_iter {
            return Err(Error::NonConvergence {
                stage,
                iterations: report.iterations,
                residual: update,
            });
        }
    };

    // quadrature error on hidden panels from the trailing Legendre coefficients
    let rule = panel_rule();
    let mut tail_error: f64 = 0.0;
    for (p, &(lo, hi)) in disc.layout.bounds.iter().enumerate() {
        if disc.layout.exported[p] {
            continue;
        }
        let n = PANEL_ORDER;
        for f in [&f1, &f2] {
            let c = rule.legendre_coefficients(&f[p * n..(p + 1) * n]);
            tail_error = tail_error.max((hi - lo) * c[n - 1].abs().max(c[n - 2].abs()));
        }
    }
    Ok(PicardOutcome {
        q,
        dq,
        rem,
        totals,
        report,
        tail_error,
    })
}

impl Problem {
    /// Trace at `p` for the far (non-anchored) end where the integrals equal their totals.
    fn far_trace(&self, p: &SelfSimCoordinate, totals: (f64, f64)) -> Trace {
        let b = self.pair(p);
        let (l, dl) = self.linear(p, &b);
        let (s1, s2) = self.signs;
        Trace {
            a: p.a,
            q: l + 0.25 * (s1 * b.phi1 * totals.0 + s2 * b.phi2 * totals.1),
            qprime: dl + 0.25 * (s1 * b.dphi1 * totals.0 + s2 * b.dphi2 * totals.1),
        }
    }
}

/// Packs node values into panels and fills the derived fields.
fn assemble(
    kind: SegmentKind,
    params: ShootingParams,
    layout: &Layout,
    q: &[f64],
    dq: &[f64],
    rem: &[f64],
    interval: Interval,
    endpoint_offset: f64,
    boundary: Trace,
    mut report: ConvergenceReport,
) -> SegmentSolution {
    let rule = panel_rule();
    let n = PANEL_ORDER;
    let mut panels = Vec::new();
    let mut interp: f64 = 0.0;
    for (p, &(lo, hi)) in layout.bounds.iter().enumerate() {
        if !layout.exported[p] {
            continue;
        }
        let range = p * n..(p + 1) * n;
        let pts: Vec<_> = rule
            .nodes
            .iter()
            .map(|t| layout.chart.point(0.5 * (lo + hi) + 0.5 * (hi - lo) * t))
            .collect();
        let c = rule.legendre_coefficients(&q[range.clone()]);
        interp = interp.max(c[n - 1].abs() + c[n - 2].abs());
        panels.push(Panel {
            s_lo: lo,
            s_hi: hi,
            a: pts.iter().map(|p| p.a).collect(),
            gap: pts.iter().map(|p| p.gap).collect(),
            q: q[range.clone()].to_vec(),
            qprime: dq[range.clone()].to_vec(),
            remainder: rem[range].to_vec(),
        });
    }
    report.interpolation_error = interp;

    // extrapolate to the anchored end of the first or last panel
    let (p, t) = match layout.anchor {
        Anchor::Low => (0, -1.0),
        Anchor::High => (layout.bounds.len() - 1, 1.0),
    };
    let (lo, hi) = layout.bounds[p];
    let c = rule.legendre_coefficients(&q[p * n..(p + 1) * n]);
    let (v, d) = legendre_series(&c, t);
    SegmentSolution {
        kind,
        chart: layout.chart,
        interval,
        params,
        panels,
        convergence: report,
        endpoint_offset,
        boundary,
        anchor_value: v,
        anchor_slope: d * 2.0 / (hi - lo),
        large_mode_c: None,
    }
}

fn check_small(stage: &'static str, name: &'static str, v: f64, cfg: &PicardConfig) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::invalid(stage, format!("{name} is not finite")));
    }
    if v.abs() > cfg.smallness_bound {
        return Err(Error::RejectedParameter {
            stage,
            name,
            value: v,
            bound: cfg.smallness_bound,
        });
    }
    Ok(())
}

fn finish(
    problem: Problem,
    layout: Layout,
    interval: Interval,
    far: SelfSimCoordinate,
    cfg: &PicardConfig,
) -> Result<SegmentSolution> {
    let disc = Discretization::new(layout, &problem);
    let out = picard(&problem, &disc, cfg)?;
    let boundary = problem.far_trace(&far, out.totals);
    let mut report = out.report;
    report.tail_error_estimate = out.tail_error;
    Ok(assemble(
        problem.kind,
        problem.params,
        &disc.layout,
        &out.q,
        &out.dq,
        &out.rem,
        interval,
        cfg.endpoint_offset,
        boundary,
        report,
    ))
}

/// Solution on `[0, 1/2]` with `Q(0) = 0`, `Q'(0) = d0`.
pub fn solve_interior(d0: f64, cfg: &PicardConfig) -> Result<SegmentSolution> {
    cfg.validate()?;
    check_small("interior", "d0", d0, cfg)?;
    let params = ShootingParams {
        d0,
        ..Default::default()
    };
    finish(
        Problem::new(SegmentKind::Interior, params),
        Layout::interior(cfg),
        Interval {
            lo: 0.0,
            hi: 0.5,
            region: Region::Interior,
        },
        SelfSimCoordinate::inside(0.5),
        cfg,
    )
}

/// Solution on `[1/2, 1)` with linear part `d1 φ1 + d2 φ2 + 2(d3 - d2)/a`.
pub fn solve_subcone(d1: f64, d2: f64, cfg: &PicardConfig) -> Result<SegmentSolution> {
    cfg.validate()?;
    let d3 = cone_constant(d2)?;
    check_small("subcone", "d1", d1, cfg)?;
    check_small("subcone", "d2", d2, cfg)?;
    let params = ShootingParams {
        d1,
        d2,
        d3,
        ..Default::default()
    };
    finish(
        Problem::new(SegmentKind::Subcone, params),
        Layout::cone(Chart::ConeInside, std::f64::consts::LN_2, SUBCONE_REFINE, cfg),
        Interval {
            lo: 0.5,
            hi: 1.0 - cfg.endpoint_offset,
            region: Region::Interior,
        },
        SelfSimCoordinate::inside(0.5),
        cfg,
    )
}

/// Length `l = c |d1t|^{-1/2}` of the large-mode supercone.
pub fn large_mode_length(c: f64, d1t: f64) -> f64 {
    c / d1t.abs().sqrt()
}

/// `sup |Q - linear part| / ((a-1)^2 log^2(a-1))` over the exported nodes with `a - 1 < 1/2`.
pub fn bootstrap_ratio(seg: &SegmentSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for p in &seg.panels {
        for j in 0..p.a.len() {
            if p.gap[j] < 0.5 {
                let env = (p.gap[j] * p.gap[j].ln()).powi(2);
                worst = worst.max(p.remainder[j].abs() / env);
            }
        }
    }
    worst
}

/// Solution on `(1, a_hi]` with linear part `d1t φ̃1 + d2t φ̃2 - 2(d3t - d2t)/a`.
///
/// `|d1t| >= 1` selects the large mode with `a_hi = 1 + c |d1t|^{-1/2}`;
/// otherwise `a_hi = 2`.
pub fn solve_supercone(d1t: f64, d2t: f64, cfg: &PicardConfig) -> Result<SegmentSolution> {
    cfg.validate()?;
    let d3t = cone_constant(d2t)?;
    check_small("supercone", "d2t", d2t, cfg)?;
    if !d1t.is_finite() {
        return Err(Error::invalid("supercone", "d1t is not finite"));
    }
    let large = d1t.abs() >= 1.0;
    if !large {
        check_small("supercone", "d1t", d1t, cfg)?;
    }
    let params = ShootingParams {
        d1t,
        d2t,
        d3t,
        mode: if large { Mode::Large } else { Mode::Small },
        ..Default::default()
    };
    let (c, s_far, amplitude) = if large {
        let c = match cfg.large_mode_c {
            Some(c) => c,
            None => calibrate_large_mode_c(d2t, cfg)?,
        };
        // |Q| reaches about 2 c sqrt(d1t) at the far end
        let amplitude = 2.0 * c * d1t.abs().sqrt();
        (Some(c), -large_mode_length(c, d1t).ln(), amplitude)
    } else {
        (None, 0.0, 0.0)
    };
    let far = Chart::ConeOutside.point(s_far);
    let mut seg = finish(
        Problem::new(SegmentKind::Supercone, params),
        Layout::cone(Chart::ConeOutside, s_far, amplitude, cfg),
        Interval {
            lo: 1.0 + cfg.endpoint_offset,
            hi: far.a,
            region: Region::Exterior,
        },
        far,
        cfg,
    )?;
    seg.large_mode_c = c;
    if large {
        let observed = bootstrap_ratio(&seg) / d1t.abs();
        if observed > cfg.bootstrap_constant {
            return Err(Error::BootstrapViolation {
                observed,
                allowed: cfg.bootstrap_constant,
            });
        }
    }
    Ok(seg)
}

/// Largest `c` in `{1, 1/2, 1/4, ...}` for which the large-mode supercone
/// converges and passes the bootstrap bound for `d1t` in `{10, 100, 1000}`.
pub fn calibrate_large_mode_c(d2t: f64, cfg: &PicardConfig) -> Result<f64> {
    let mut c = 1.0;
    for _ in 0..12 {
        let trial = PicardConfig {
            large_mode_c: Some(c),
            ..*cfg
        };
        if [10.0, 100.0, 1000.0]
            .iter()
            .all(|&d| solve_supercone(d, d2t, &trial).is_ok())
        {
            return Ok(c);
        }
        c *= 0.5;
    }
    Err(Error::invalid(
        "supercone",
        "no admissible large-mode constant c down to 2^-11",
    ))
}

/// Solution on `[2, A_max]` with linear part `q1 φ̃1 + q2 φ̃2`; the integral
/// equation is solved on the whole of `[2, ∞]` in the variable `1/a`.
pub fn solve_farfield(q1: f64, q2: f64, cfg: &PicardConfig) -> Result<SegmentSolution> {
    cfg.validate()?;
    check_small("farfield", "q1", q1, cfg)?;
    check_small("farfield", "q2", q2, cfg)?;
    let params = ShootingParams {
        q1,
        q2,
        ..Default::default()
    };
    let seg = finish(
        Problem::new(SegmentKind::Farfield, params),
        Layout::farfield(cfg),
        Interval {
            lo: 2.0,
            hi: cfg.farfield_cutoff,
            region: Region::Exterior,
        },
        SelfSimCoordinate::outside(1.0),
        cfg,
    )?;
    let estimate = seg.convergence.tail_error_estimate;
    if estimate > cfg.tol {
        return Err(Error::Truncation {
            estimate,
            tol: cfg.tol,
        });
    }
    Ok(seg)
}

/// Outward integration of the ODE from the trace `start` (at `a > 1`) to
/// `a = ∞`, written in `x = 1/a` as `P'' = sin(2P)/(x² - 1)`. Each panel is
/// solved by Picard iteration on its Legendre nodes; panel widths keep the
/// phase of `sin(2P)` to about 4 rad. The anchor value and slope are `Q(∞)`
/// and the `1/a` coefficient.
pub fn solve_extension(start: Trace, cfg: &PicardConfig) -> Result<SegmentSolution> {
    cfg.validate()?;
    if !(start.a > 1.0 && start.a < cfg.farfield_cutoff) {
        return Err(Error::Domain {
            what: "extension start",
            value: start.a,
        });
    }
    let rule = panel_rule();
    let n = PANEL_ORDER;
    let x0 = 1.0 / start.a;
    let x_cut = 1.0 / cfg.farfield_cutoff;
    let regular = (x0 - x_cut) / panel_count(cfg) as f64;

    let mut bounds = Vec::new();
    let mut exported = Vec::new();
    let (mut qs, mut dqs) = (Vec::new(), Vec::new());
    let mut hi = x0;
    let (mut p_hi, mut dp_hi) = (start.q, -start.a * start.a * start.qprime);
    let mut iterations = 0;
    let mut worst_update: f64 = 0.0;
    while hi > 0.0 {
        let mut w = regular
            .min(2.0 / (dp_hi.abs() + 1.0))
            .min(0.5 * (1.0 - hi));
        let floor = if hi > x_cut * (1.0 + 1e-9) { x_cut } else { 0.0 };
        let mut lo = hi - w;
        if lo < floor + 0.25 * w {
            lo = floor;
            w = hi - floor;
        }
        let half = 0.5 * w;
        let xs: Vec<f64> = rule.nodes.iter().map(|t| lo + half * (1.0 + t)).collect();
        let mut p: Vec<f64> = xs.iter().map(|x| p_hi - dp_hi * (hi - x)).collect();
        let mut dp = vec![dp_hi; n];
        let mut f = vec![0.0; n];
        let mut acc = vec![0.0; n];
        let mut converged = false;
        for _ in 0..60 {
            iterations += 1;
            for j in 0..n {
                f[j] = (2.0 * p[j]).sin() / ((xs[j] - 1.0) * (xs[j] + 1.0));
            }
            rule.cumulative_right(&f, &mut acc);
            for j in 0..n {
                dp[j] = dp_hi - half * acc[j];
            }
            rule.cumulative_right(&dp, &mut acc);
            let mut update: f64 = 0.0;
            for j in 0..n {
                let pn = p_hi - half * acc[j];
                update = update.max((pn - p[j]).abs());
                p[j] = pn;
            }
            if !update.is_finite() {
                return Err(Error::DivergedIteration {
                    stage: "extension",
                    ratio: f64::INFINITY,
                });
            }
            if update <= 1e-15 * p_hi.abs().max(1.0) {
                worst_update = worst_update.max(update);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                stage: "extension",
                iterations,
                residual: f64::NAN,
            });
        }
        for j in 0..n {
            f[j] = (2.0 * p[j]).sin() / ((xs[j] - 1.0) * (xs[j] + 1.0));
        }
        let dp_lo = dp_hi - half * rule.integrate(&f);
        let p_lo = p_hi - half * rule.integrate(&dp);
        bounds.push((lo, hi));
        exported.push(lo >= x_cut);
        qs.push(p);
        dqs.push(xs.iter().zip(&dp).map(|(x, d)| -x * x * d).collect::<Vec<_>>());
        hi = lo;
        p_hi = p_lo;
        dp_hi = dp_lo;
        if hi <= 0.0 {
            break;
        }
    }
    // ascending chart order
    bounds.reverse();
    exported.reverse();
    qs.reverse();
    dqs.reverse();
    let q: Vec<f64> = qs.concat();
    let dq: Vec<f64> = dqs.concat();
    let layout = Layout {
        chart: Chart::Reciprocal,
        bounds,
        exported,
        anchor: Anchor::Low,
    };
    let params = ShootingParams {
        mode: Mode::Large,
        ..Default::default()
    };
    let report = ConvergenceReport {
        iterations,
        final_update_supnorm: worst_update,
        ..Default::default()
    };
    let mut seg = assemble(
        SegmentKind::Extension,
        params,
        &layout,
        &q,
        &dq,
        &vec![f64::NAN; q.len()],
        Interval {
            lo: start.a,
            hi: cfg.farfield_cutoff,
            region: Region::Exterior,
        },
        cfg.endpoint_offset,
        start,
        report,
    );
    seg.anchor_value = p_hi;
    seg.anchor_slope = dp_hi;
    Ok(seg)
}

/// Pointwise ODE residual on a segment's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProfile {
    pub a: Vec<f64>,
    pub residual: Vec<f64>,
    /// Largest of the three terms of the equation at each node.
    pub scale: Vec<f64>,
}

impl ResidualProfile {
    pub fn sup(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, &r| m.max(r))
    }

    /// Sup of residual divided by `max(1, term scale)`.
    pub fn relative_sup(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.scale)
            .fold(0.0, |m, (&r, &s)| m.max(r / s.max(1.0)))
    }

    /// Sup over nodes with `lo <= a <= hi`.
    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        self.a
            .iter()
            .zip(&self.residual)
            .filter(|(a, _)| **a >= lo && **a <= hi)
            .fold(0.0, |m, (_, &r)| m.max(r))
    }
}

impl SegmentSolution {
    /// Samples `f(a) = (Q, Q')` on `n_panels` panels of `chart` over `[lo, hi]`.
    pub fn from_fn(
        chart: Chart,
        lo: f64,
        hi: f64,
        n_panels: usize,
        f: impl Fn(f64) -> (f64, f64),
    ) -> Result<Self> {
        if !(lo < hi) || n_panels == 0 {
            return Err(Error::invalid("fixture", "empty interval"));
        }
        let (s0, s1) = {
            let (x, y) = (chart.coordinate(lo), chart.coordinate(hi));
            (x.min(y), x.max(y))
        };
        let layout = Layout {
            chart,
            bounds: graded_bounds(s0, s1, n_panels, 1.0, Anchor::Low),
            exported: vec![true; n_panels],
            anchor: Anchor::Low,
        };
        let s = layout.node_s();
        let (q, dq): (Vec<f64>, Vec<f64>) = s.iter().map(|&v| f(chart.point(v).a)).unzip();
        let (b, db) = f(lo);
        let region = if hi <= 1.0 {
            Region::Interior
        } else if lo >= 1.0 {
            Region::Exterior
        } else {
            Region::Cone
        };
        Ok(assemble(
            SegmentKind::Fixture,
            ShootingParams::default(),
            &layout,
            &q,
            &dq,
            &vec![f64::NAN; q.len()],
            Interval { lo, hi, region },
            0.0,
            Trace {
                a: lo,
                q: b,
                qprime: db,
            },
            ConvergenceReport::default(),
        ))
    }

    /// Node coordinates in increasing `a`.
    pub fn nodes(&self) -> Vec<f64> {
        self.flatten(|p| &p.a)
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.flatten(|p| &p.q)
    }

    pub fn qprime_values(&self) -> Vec<f64> {
        self.flatten(|p| &p.qprime)
    }

    /// Nonlinear remainder `Q - linear part` at the nodes (NaN for fixtures and extensions).
    pub fn remainder_values(&self) -> Vec<f64> {
        self.flatten(|p| &p.remainder)
    }

    /// Distances `|1 - a|` in increasing `a`.
    pub fn gaps(&self) -> Vec<f64> {
        self.flatten(|p| &p.gap)
    }

    fn flatten<'a>(&'a self, field: impl Fn(&'a Panel) -> &'a Vec<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = self.panels.iter().flat_map(|p| field(p).iter().copied()).collect();
        if self.chart.reversed() {
            v.reverse();
        }
        v
    }

    /// `(Q(a), Q'(a))` by Legendre interpolation on the panel containing `a`.
    pub fn evaluate(&self, a: f64) -> Result<(f64, f64)> {
        let iv = self.interval;
        let slack = 1e-12 * iv.hi.abs().max(1.0);
        if !(a >= iv.lo - slack && a <= iv.hi + slack) {
            return Err(Error::OutOfInterval {
                a,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
        let s = self.chart.coordinate(a);
        let idx = self
            .panels
            .partition_point(|p| p.s_hi < s)
            .min(self.panels.len() - 1);
        let p = &self.panels[idx];
        if let Some(j) = p.a.iter().position(|&x| x == a) {
            return Ok((p.q[j], p.qprime[j]));
        }
        let t = ((2.0 * s - p.s_lo - p.s_hi) / (p.s_hi - p.s_lo)).clamp(-1.0, 1.0);
        let rule = panel_rule();
        Ok((rule.interpolate(&p.q, t), rule.interpolate(&p.qprime, t)))
    }

    /// `|(1-a²)Q'' + (2/a - 2a)Q' - sin(2Q)/a²|` at the nodes, with `Q''`
    /// from spectral differentiation of the stored `Q'`. Nodes within
    /// `10 endpoint_offset` of the cone are skipped.
    pub fn ode_residual(&self) -> ResidualProfile {
        let rule = panel_rule();
        let mut a_out = Vec::new();
        let mut r_out = Vec::new();
        let mut s_out = Vec::new();
        for p in &self.panels {
            let c = rule.legendre_coefficients(&p.qprime);
            for j in 0..p.a.len() {
                if p.gap[j] <= 10.0 * self.endpoint_offset {
                    continue;
                }
                let t = rule.nodes[j];
                let s = 0.5 * (p.s_lo + p.s_hi) + 0.5 * (p.s_hi - p.s_lo) * t;
                let (_, dt) = legendre_series(&c, t);
                let qpp = dt * 2.0 / (p.s_hi - p.s_lo) / self.chart.jacobian(s);
                let a = p.a[j];
                let pt = SelfSimCoordinate {
                    a,
                    gap: p.gap[j],
                    region: if a < 1.0 {
                        Region::Interior
                    } else {
                        Region::Exterior
                    },
                };
                let oms = one_minus_square(&pt);
                let terms = [
                    oms * qpp,
                    2.0 * oms / a * p.qprime[j],
                    -(2.0 * p.q[j]).sin() / (a * a),
                ];
                a_out.push(a);
                r_out.push(terms.iter().sum::<f64>().abs());
                s_out.push(terms.iter().fold(0.0, |m: f64, t| m.max(t.abs())));
            }
        }
        if self.chart.reversed() {
            a_out.reverse();
            r_out.reverse();
            s_out.reverse();
        }
        ResidualProfile {
            a: a_out,
            residual: r_out,
            scale: s_out,
        }
    }

    /// Signed ODE residual at an arbitrary `a` in the segment, with `Q''` from
    /// the derivative of the Legendre interpolant of `Q'`.
    pub fn residual_at(&self, a: f64) -> Result<f64> {
        let (q, qp) = self.evaluate(a)?;
        let s = self.chart.coordinate(a);
        let idx = self
            .panels
            .partition_point(|p| p.s_hi < s)
            .min(self.panels.len() - 1);
        let p = &self.panels[idx];
        let t = ((2.0 * s - p.s_lo - p.s_hi) / (p.s_hi - p.s_lo)).clamp(-1.0, 1.0);
        let c = panel_rule().legendre_coefficients(&p.qprime);
        let (_, dt) = legendre_series(&c, t);
        let qpp = dt * 2.0 / (p.s_hi - p.s_lo) / self.chart.jacobian(s);
        let oms = one_minus_square(&SelfSimCoordinate::new(a)?);
        Ok(oms * qpp + 2.0 * oms / a * qp - (2.0 * q).sin() / (a * a))
    }

    /// Linear part of the segment's integral equation at `a` (zero for fixtures).
    pub fn linear_part(&self, a: f64) -> Result<f64> {
        let pt = SelfSimCoordinate::new(a)?;
        Ok(match self.kind {
            SegmentKind::Fixture | SegmentKind::Extension => 0.0,
            k => {
                let pr = Problem::new(k, self.params);
                pr.linear(&pt, &pr.pair(&pt)).0
            }
        })
    }
}
