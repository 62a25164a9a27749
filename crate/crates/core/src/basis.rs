//! Fundamental solutions, Wronskian and Green kernels of the linearized
//! self-similar equation
//!
//! ```text
//! Q'' + (2/a) Q' - 2 Q / (a^2 (1 - a^2)) = 0
//! ```
//!
//! together with the nonlinearity `f(u) = sin(2u)` and the Picard forcing.
//!
//! The interior pair is `phi1 = (1-a^2)/a^2`, `phi2 = 2/a + phi1 log((1-a)/(1+a))`,
//! the exterior pair is the same expression with the signs arranged to be real
//! for `a > 1`. Both pairs have Wronskian `4/a^2`.
//!
//! Every function also exists in a `*_gap` form taking the distance `|1 - a|`
//! explicitly, so that callers that know the distance to the light cone more
//! accurately than `a` itself (graded meshes near `a = 1`) keep full relative
//! precision in the logarithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `a` the interior `phi2` is summed from its Taylor series.
pub const PHI2_SERIES_BELOW: f64 = 0.1;
/// Above this `a` the exterior `phi2` is summed from its series in `1/a`.
pub const PHI2T_SERIES_ABOVE: f64 = 10.0;
/// Below this `|q|` the forcing numerator `sin(2q) - 2q` is summed from its series.
pub const FORCING_SERIES_BELOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Interior,
    Cone,
    Exterior,
}

/// A point of the similarity variable `a = r/t` together with its distance to the cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimCoordinate {
    pub a: f64,
    /// `|1 - a|`, possibly known to better relative accuracy than `a`.
    pub gap: f64,
    pub region: Region,
}

impl SelfSimCoordinate {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Domain {
                what: "coordinate",
                value: a,
            });
        }
        let region = if a < 1.0 {
            Region::Interior
        } else if a > 1.0 {
            Region::Exterior
        } else {
            Region::Cone
        };
        Ok(Self {
            a,
            gap: (1.0 - a).abs(),
            region,
        })
    }

    /// Interior point `a = 1 - gap`.
    pub fn inside(gap: f64) -> Self {
        Self {
            a: 1.0 - gap,
            gap,
            region: Region::Interior,
        }
    }

    /// Exterior point `a = 1 + gap`.
    pub fn outside(gap: f64) -> Self {
        Self {
            a: 1.0 + gap,
            gap,
            region: Region::Exterior,
        }
    }
}

/// A kernel value with a worst-case rounding estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEval {
    pub value: f64,
    pub abs_error_estimate: f64,
}

/// Values and first derivatives of a fundamental pair at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPair {
    pub phi1: f64,
    pub phi2: f64,
    pub dphi1: f64,
    pub dphi2: f64,
}

fn phi2_interior_series(a: f64) -> (f64, f64) {
    // phi2 = sum_k 4 a^(2k+1) / ((2k+1)(2k+3)),  phi2' = sum_k 4 a^(2k) / (2k+3)
    let a2 = a * a;
    let mut pow = 1.0;
    let (mut val, mut der) = (0.0, 0.0);
    for k in 0..60 {
        let m = 2 * k + 1;
        let d = 4.0 * pow / (m + 2) as f64;
        let v = d * a / m as f64;
        val += v;
        der += d;
        if d.abs() < 1e-18 * der.abs() {
            break;
        }
        pow *= a2;
    }
    (val, der)
}

fn phi2_exterior_series(a: f64) -> (f64, f64) {
    // in x = 1/a: phi2t = -4x + sum_{k>=1} 4 x^(2k+1) / ((2k-1)(2k+1))
    let x = 1.0 / a;
    let x2 = x * x;
    let mut val = -4.0 * x;
    let mut dval_dx = -4.0;
    let mut pow = x2;
    for k in 1..60 {
        let m = (2 * k - 1) as f64;
        let dv = 4.0 * pow / m;
        let v = dv * x / (m + 2.0);
        val += v;
        dval_dx += dv;
        if dv.abs() < 1e-18 * dval_dx.abs() {
            break;
        }
        pow *= x2;
    }
    (val, -x2 * dval_dx)
}

/// Interior pair at `a` in `(0, 1)` with `gap = 1 - a` supplied by the caller.
pub fn interior_pair_gap(a: f64, gap: f64) -> BasisPair {
    let a2 = a * a;
    let phi1 = gap * (1.0 + a) / a2;
    let dphi1 = -2.0 / (a2 * a);
    let (phi2, dphi2) = if a < PHI2_SERIES_BELOW {
        phi2_interior_series(a)
    } else {
        let log_ratio = gap.ln() - a.ln_1p();
        (
            2.0 / a + phi1 * log_ratio,
            -4.0 / a2 - 2.0 * log_ratio / (a2 * a),
        )
    };
    BasisPair {
        phi1,
        phi2,
        dphi1,
        dphi2,
    }
}

/// Exterior pair at `a > 1` with `gap = a - 1` supplied by the caller.
pub fn exterior_pair_gap(a: f64, gap: f64) -> BasisPair {
    let a2 = a * a;
    let phi1 = gap * (a + 1.0) / a2;
    let dphi1 = 2.0 / (a2 * a);
    let (phi2, dphi2) = if a > PHI2T_SERIES_ABOVE {
        phi2_exterior_series(a)
    } else {
        let log_ratio = gap.ln() - (a + 1.0).ln();
        (
            -2.0 / a + phi1 * log_ratio,
            4.0 / a2 + 2.0 * log_ratio / (a2 * a),
        )
    };
    BasisPair {
        phi1,
        phi2,
        dphi1,
        dphi2,
    }
}

/// Fundamental pair appropriate for the side of the cone `p` lies on.
pub fn pair_at(p: SelfSimCoordinate) -> BasisPair {
    match p.region {
        Region::Interior => interior_pair_gap(p.a, p.gap),
        Region::Exterior => exterior_pair_gap(p.a, p.gap),
        Region::Cone => BasisPair {
            phi1: 0.0,
            phi2: 2.0,
            dphi1: f64::NAN,
            dphi2: f64::NAN,
        },
    }
}

/// `(phi1(a), phi2(a))` for `0 < a < 1`.
pub fn phi_interior(a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain {
            what: "phi_interior",
            value: a,
        });
    }
    let p = interior_pair_gap(a, 1.0 - a);
    Ok((p.phi1, p.phi2))
}

/// `(phi1t(a), phi2t(a))` for `a > 1`.
pub fn phi_exterior(a: f64) -> Result<(f64, f64)> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(Error::Domain {
            what: "phi_exterior",
            value: a,
        });
    }
    let p = exterior_pair_gap(a, a - 1.0);
    Ok((p.phi1, p.phi2))
}

/// Regular interior solution `phi0 = (3/4) phi2`, normalized so that `phi0'(0) = 1`.
/// Returns `(phi0, phi0')`.
pub fn phi0(a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain {
            what: "phi0",
            value: a,
        });
    }
    let p = interior_pair_gap(a, 1.0 - a);
    Ok((0.75 * p.phi2, 0.75 * p.dphi2))
}

/// Closed-form Wronskian `phi1 phi2' - phi1' phi2 = 4/b^2` of either pair.
pub fn wronskian(b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain {
            what: "wronskian",
            value: b,
        });
    }
    Ok(4.0 / (b * b))
}

fn kernel(t1: f64, t2: f64) -> KernelEval {
    KernelEval {
        value: t1 - t2,
        abs_error_estimate: 8.0 * f64::EPSILON * (t1.abs() + t2.abs()),
    }
}

/// Interior Green kernel `G(a,b) = [phi1(a) phi2(b) - phi1(b) phi2(a)] / W(b)` on `(0,1)^2`.
pub fn green_interior(a: f64, b: f64) -> Result<KernelEval> {
    for v in [a, b] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain {
                what: "green_interior",
                value: v,
            });
        }
    }
    if a == b {
        return Ok(KernelEval {
            value: 0.0,
            abs_error_estimate: 0.0,
        });
    }
    let pa = interior_pair_gap(a, 1.0 - a);
    let pb = interior_pair_gap(b, 1.0 - b);
    // b^2 phi1(b) = 1 - b^2 exactly, which keeps the b -> 0 end regular.
    let b2_phi2b = b * b * pb.phi2;
    let one_minus_b2 = (1.0 - b) * (1.0 + b);
    Ok(kernel(0.25 * pa.phi1 * b2_phi2b, 0.25 * one_minus_b2 * pa.phi2))
}

/// One-sided limit `G(1-, b) = -(1 - b^2)/2`.
pub fn green_interior_cone_limit(b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain {
            what: "green_interior_cone_limit",
            value: b,
        });
    }
    Ok(-0.5 * (1.0 - b) * (1.0 + b))
}

/// Exterior Green kernel built from the exterior pair, for `a, b > 1`.
pub fn green_exterior(a: f64, b: f64) -> Result<KernelEval> {
    for v in [a, b] {
        if !(v > 1.0) || !v.is_finite() {
            return Err(Error::Domain {
                what: "green_exterior",
                value: v,
            });
        }
    }
    if a == b {
        return Ok(KernelEval {
            value: 0.0,
            abs_error_estimate: 0.0,
        });
    }
    let pa = exterior_pair_gap(a, a - 1.0);
    let pb = exterior_pair_gap(b, b - 1.0);
    let b2_phi2b = b * b * pb.phi2;
    let b2_minus_1 = (b - 1.0) * (b + 1.0);
    Ok(kernel(0.25 * pa.phi1 * b2_phi2b, 0.25 * b2_minus_1 * pa.phi2))
}

/// One-sided limit `G~(1+, b) = (b^2 - 1)/2`.
pub fn green_exterior_cone_limit(b: f64) -> Result<f64> {
    if !(b > 1.0) {
        return Err(Error::Domain {
            what: "green_exterior_cone_limit",
            value: b,
        });
    }
    Ok(0.5 * (b - 1.0) * (b + 1.0))
}

/// Target nonlinearity `f(u) = 2 sin u cos u = sin(2u)`.
pub fn nonlinearity_f(u: f64) -> f64 {
    (2.0 * u).sin()
}

fn forcing_numerator_series(q: f64) -> f64 {
    // sin(x) - x with x = 2q: sum_{k>=1} (-1)^k x^(2k+1) / (2k+1)!
    let x = 2.0 * q;
    let x2 = x * x;
    let mut term = x;
    let mut sum = 0.0;
    for k in 1..40 {
        term *= -x2 / ((2 * k) as f64 * (2 * k + 1) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `sin(2q) - 2q`, free of cancellation for small `q`.
pub fn forcing_numerator(q: f64) -> f64 {
    if q.abs() < FORCING_SERIES_BELOW {
        forcing_numerator_series(q)
    } else {
        (2.0 * q).sin() - 2.0 * q
    }
}

/// Direct `sin(2q) - 2q` without the series branch; exposed for dual-path checks.
pub fn forcing_numerator_direct(q: f64) -> f64 {
    (2.0 * q).sin() - 2.0 * q
}

/// Series branch of the forcing numerator regardless of `q`.
pub fn forcing_numerator_by_series(q: f64) -> f64 {
    forcing_numerator_series(q)
}

/// Series branch of the interior `phi2` regardless of `a`, for dual-path checks.
pub fn phi2_interior_by_series(a: f64) -> f64 {
    phi2_interior_series(a).0
}

/// Series branch of the exterior `phi2` regardless of `a`, for dual-path checks.
pub fn phi2_exterior_by_series(a: f64) -> f64 {
    phi2_exterior_series(a).0
}

/// Picard forcing `H(q, a) = (sin 2q - 2q) / (a^2 (1 - a^2))`.
pub fn picard_forcing(q: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) || a == 1.0 || !a.is_finite() {
        return Err(Error::Domain {
            what: "picard_forcing",
            value: a,
        });
    }
    Ok(forcing_numerator(q) / (a * a * (1.0 - a) * (1.0 + a)))
}
