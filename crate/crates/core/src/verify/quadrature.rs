use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-cell tensor-product rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    /// `refine` equal sub-intervals per cell and axis, one midpoint each.
    Midpoint { refine: usize },
    /// Gauss–Legendre with `points` nodes on every piece of a cell after
    /// splitting it at the breakpoints of the test function.
    Gauss { points: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Gauss { points: 6 }
    }
}

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Quadrature::Midpoint { refine: 0 } => {
                Err(Error::GridMismatch("midpoint refinement must be at least 1".into()))
            }
            Quadrature::Gauss { points } if !(1..=16).contains(&points) => {
                Err(Error::GridMismatch(format!("Gauss rule needs 1 to 16 points, got {points}")))
            }
            _ => Ok(()),
        }
    }

    /// Appends the nodes and weights of `[a, b]` to `out`; `breaks` are the
    /// points where the integrand may lose smoothness.
    pub fn nodes(&self, a: f64, b: f64, breaks: &[f64], out: &mut Vec<(f64, f64)>) {
        if !(b > a) {
            return;
        }
        match *self {
            Quadrature::Midpoint { refine } => {
                let h = (b - a) / refine as f64;
                out.extend((0..refine).map(|i| (a + (i as f64 + 0.5) * h, h)));
            }
            Quadrature::Gauss { points } => {
                let rule = gauss_legendre(points);
                let mut cuts: Vec<f64> = breaks.iter().copied().filter(|s| *s > a && *s < b).collect();
                cuts.sort_by(f64::total_cmp);
                let mut lo = a;
                for hi in cuts.into_iter().chain(std::iter::once(b)) {
                    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    out.extend(rule.iter().map(|(x, w)| (mid + half * x, half * w)));
                    lo = hi;
                }
            }
        }
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre(n, x).1;
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}
