//! Legendre polynomials and Gauss-Legendre rules on the reference interval
//! [-1, 1]. Ordinate sets, element quadrature, and the half-range integrals of
//! the boundary corrector are all built from these primitives.

use crate::{Error, Result};

/// Evaluate P_n(x) by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_with_deriv(n, x).0
}

/// Evaluate (P_n(x), P_n'(x)).
///
/// Recurrence: m P_m = (2m-1) x P_{m-1} - (m-1) P_{m-2}; the derivative uses
/// (x^2-1) P_n' = n (x P_n - P_{n-1}), with the endpoint limit filled in at
/// |x| = 1.
pub fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for m in 2..=n {
        let mf = m as f64;
        let p_next = ((2.0 * mf - 1.0) * x * p - (mf - 1.0) * p_prev) / mf;
        p_prev = p;
        p = p_next;
    }
    let denom = x * x - 1.0;
    let dp = if denom.abs() < 1e-300 {
        // P_n'(+-1) = (+-1)^{n-1} n(n+1)/2
        let sign = if x > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        sign * (n as f64) * (n as f64 + 1.0) / 2.0
    } else {
        (n as f64) * (x * p - p_prev) / denom
    };
    (p, dp)
}

/// Fill `out[m] = P_m(x)` for m = 0..out.len().
pub fn legendre_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for m in 2..out.len() {
        let mf = m as f64;
        out[m] = ((2.0 * mf - 1.0) * x * out[m - 1] - (mf - 1.0) * out[m - 2]) / mf;
    }
}

/// D[m][n] = integral over [-1,1] of P_n(t) P_m'(t) dt.
///
/// Equals 2 when m > n with m - n odd, else 0 (orthogonality plus the parity
/// of P_m').
pub fn deriv_overlap(m: usize, n: usize) -> f64 {
    if m > n && (m - n) % 2 == 1 {
        2.0
    } else {
        0.0
    }
}

/// Gauss-Legendre rule on [-1, 1]; `nodes` ascending, `weights` sum to 2.
///
/// Nodes are found by Newton iteration on P_n from Chebyshev-type initial
/// guesses and stored exactly mirror-symmetric about 0.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "Gauss-Legendre rule needs at least one node".into(),
            ));
        }
        let half = n / 2;
        let mut pos_nodes = Vec::with_capacity(half);
        let mut pos_weights = Vec::with_capacity(half);
        for i in 0..half {
            // i-th root from the right
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut converged = false;
            for _ in 0..100 {
                let (p, dp) = legendre_with_deriv(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-15 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Breakdown(format!(
                    "Newton iteration for Gauss-Legendre node {i} of {n} stalled"
                )));
            }
            let (_, dp) = legendre_with_deriv(n, x);
            pos_nodes.push(x);
            pos_weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }

        // pos_nodes runs largest-first; emit -largest .. -smallest, then the
        // mirrored positives, so the final node list is ascending
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..half {
            nodes.push(-pos_nodes[i]);
            weights.push(pos_weights[i]);
        }
        if n % 2 == 1 {
            let (_, dp) = legendre_with_deriv(n, 0.0);
            nodes.push(0.0);
            weights.push(2.0 / (dp * dp));
        }
        for i in (0..half).rev() {
            nodes.push(pos_nodes[i]);
            weights.push(pos_weights[i]);
        }
        Ok(Self { nodes, weights })
    }

    /// Smallest rule exact for polynomials of the given degree.
    pub fn for_degree(degree: usize) -> Result<Self> {
        Self::new(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over [lo, hi] by mapping the reference rule affinely.
    pub fn integrate(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
}
