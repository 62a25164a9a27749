//! Gauss–Legendre panels: nodes, weights, spectral cumulative integration
//! and barycentric interpolation on `[-1, 1]`.

use std::sync::OnceLock;

/// Number of Gauss–Legendre nodes per panel used by the segment solvers.
pub const PANEL_ORDER: usize = 16;

/// Legendre polynomials `P_0..=P_n` at `x`.
pub fn legendre_values(x: f64, n: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        p.push(next);
    }
    p
}

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    bary: Vec<f64>,
    /// `left[i][j] = ∫_{-1}^{x_i} l_j(x) dx`
    left: Vec<Vec<f64>>,
    /// `right[i][j] = ∫_{x_i}^{1} l_j(x) dx`
    right: Vec<Vec<f64>>,
    /// `to_legendre[k][j] = (2k+1)/2 w_j P_k(x_j)`
    to_legendre: Vec<Vec<f64>>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev initial guess, ascending order
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let p = legendre_values(x, n);
                let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
                let dx = p[n] / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let p = legendre_values(x, n);
            let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        let bary = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * ((1.0 - nodes[j] * nodes[j]) * weights[j]).sqrt()
            })
            .collect();

        let to_legendre: Vec<Vec<f64>> = {
            let pv: Vec<Vec<f64>> = nodes.iter().map(|&x| legendre_values(x, n)).collect();
            (0..n)
                .map(|k| {
                    (0..n)
                        .map(|j| (2.0 * k as f64 + 1.0) / 2.0 * weights[j] * pv[j][k])
                        .collect()
                })
                .collect()
        };

        let mut left = vec![vec![0.0; n]; n];
        let mut right = vec![vec![0.0; n]; n];
        for i in 0..n {
            let il = integrated_legendre_left(nodes[i], n);
            let ir = integrated_legendre_right(nodes[i], n);
            for j in 0..n {
                let (mut sl, mut sr) = (0.0, 0.0);
                for k in 0..n {
                    sl += to_legendre[k][j] * il[k];
                    sr += to_legendre[k][j] * ir[k];
                }
                left[i][j] = sl;
                right[i][j] = sr;
            }
        }
        Self {
            nodes,
            weights,
            bary,
            left,
            right,
            to_legendre,
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `∫_{-1}^{1} f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `∫_{-1}^{x_i} f` at every node.
    pub fn cumulative_left(&self, f: &[f64], out: &mut [f64]) {
        for (i, row) in self.left.iter().enumerate() {
            out[i] = row.iter().zip(f).map(|(w, v)| w * v).sum();
        }
    }

    /// `∫_{x_i}^{1} f` at every node.
    pub fn cumulative_right(&self, f: &[f64], out: &mut [f64]) {
        for (i, row) in self.right.iter().enumerate() {
            out[i] = row.iter().zip(f).map(|(w, v)| w * v).sum();
        }
    }

    /// Legendre coefficients of the interpolant through `f` at the nodes.
    pub fn legendre_coefficients(&self, f: &[f64]) -> Vec<f64> {
        self.to_legendre
            .iter()
            .map(|row| row.iter().zip(f).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Barycentric interpolation of the node values `f` at `x`.
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..self.nodes.len() {
            let d = x - self.nodes[j];
            if d == 0.0 {
                return f[j];
            }
            let w = self.bary[j] / d;
            num += w * f[j];
            den += w;
        }
        num / den
    }
}

/// Value and derivative of a Legendre series at `x`.
pub fn legendre_series(coeffs: &[f64], x: f64) -> (f64, f64) {
    let n = coeffs.len();
    let p = legendre_values(x, n);
    let mut dp = vec![0.0; n + 1];
    if n >= 1 {
        dp[1] = 1.0;
    }
    for k in 1..n {
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k
        dp[k + 1] = dp[k - 1] + (2 * k + 1) as f64 * p[k];
    }
    let mut v = 0.0;
    let mut d = 0.0;
    for k in 0..n {
        v += coeffs[k] * p[k];
        d += coeffs[k] * dp[k];
    }
    (v, d)
}

fn integrated_legendre_left(x: f64, n: usize) -> Vec<f64> {
    let p = legendre_values(x, n + 1);
    (0..n)
        .map(|k| {
            if k == 0 {
                x + 1.0
            } else {
                (p[k + 1] - p[k - 1]) / (2 * k + 1) as f64
            }
        })
        .collect()
}

fn integrated_legendre_right(x: f64, n: usize) -> Vec<f64> {
    let p = legendre_values(x, n + 1);
    (0..n)
        .map(|k| {
            if k == 0 {
                1.0 - x
            } else {
                -(p[k + 1] - p[k - 1]) / (2 * k + 1) as f64
            }
        })
        .collect()
}

/// Shared rule of order [`PANEL_ORDER`].
pub fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(PANEL_ORDER))
}

/// Composite Gauss–Legendre integral of `f` over `[lo, hi]` split into `panels` pieces.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let rule = panel_rule();
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let mid = a + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}
