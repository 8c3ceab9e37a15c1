use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Rect;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    Scalar,
    Vector,
}

/// `(1 − ξ²)⁴` on `|ξ| < 1` and its derivative.
pub fn poly_bump(xi: f64) -> (f64, f64) {
    if xi.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let s = 1.0 - xi * xi;
    let s3 = s * s * s;
    (s3 * s, -8.0 * xi * s3)
}

/// Tensor-product polynomial bump on a space-time box.
///
/// The scalar form is `B(t, x, y)`. The vector form is
/// `(a₀ B (x − x₀)(x₁ − x), a₁ B (y − y₀)(y₁ − y))`, whose normal component
/// vanishes on the boundary of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestKind,
    pub center: [f64; 3],
    pub half_width: [f64; 3],
    pub coeff: [f64; 2],
    pub domain: Rect,
}

impl TestFunction {
    pub fn new(kind: TestKind, center: [f64; 3], half_width: [f64; 3], coeff: [f64; 2], domain: Rect) -> Result<Self> {
        if half_width.iter().any(|w| !(*w > 0.0)) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidData("test function needs finite centre and positive widths".into()));
        }
        Ok(Self { kind, center, half_width, coeff, domain })
    }

    /// Same geometry viewed as the other kind.
    pub fn as_kind(&self, kind: TestKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn lower(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.center[a] - self.half_width[a])
    }

    pub fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.center[a] + self.half_width[a])
    }

    /// Support is compact in `[0, T)` (it may start before `t = 0`).
    pub fn supported_before(&self, t_final: f64) -> bool {
        self.upper()[0] < t_final
    }

    pub fn meets_initial_time(&self) -> bool {
        self.lower()[0] < 0.0
    }

    pub fn meets_boundary(&self) -> bool {
        let (lo, hi, d) = (self.lower(), self.upper(), &self.domain);
        lo[1] < d.x0 || hi[1] > d.x1 || lo[2] < d.y0 || hi[2] > d.y1
    }

    fn factors(&self, p: [f64; 3]) -> [(f64, f64); 3] {
        [0, 1, 2].map(|a| {
            let w = self.half_width[a];
            let (v, d) = poly_bump((p[a] - self.center[a]) / w);
            (v, d / w)
        })
    }

    /// `B` and `(∂t B, ∂x B, ∂y B)`.
    pub fn scalar(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let [(bt, dt), (bx, dx), (by, dy)] = self.factors(p);
        (bt * bx * by, [dt * bx * by, bt * dx * by, bt * bx * dy])
    }

    /// Vector value and Jacobian rows `[∂t φᵢ, ∂x φᵢ, ∂y φᵢ]`.
    pub fn vector(&self, p: [f64; 3]) -> ([f64; 2], [[f64; 3]; 2]) {
        let (b, g) = self.scalar(p);
        let d = &self.domain;
        let (fx, dfx) = ((p[1] - d.x0) * (d.x1 - p[1]), d.x0 + d.x1 - 2.0 * p[1]);
        let (fy, dfy) = ((p[2] - d.y0) * (d.y1 - p[2]), d.y0 + d.y1 - 2.0 * p[2]);
        let [a0, a1] = self.coeff;
        let value = [a0 * b * fx, a1 * b * fy];
        let jac = [
            [a0 * g[0] * fx, a0 * (g[1] * fx + b * dfx), a0 * g[2] * fx],
            [a1 * g[0] * fy, a1 * g[1] * fy, a1 * (g[2] * fy + b * dfy)],
        ];
        (value, jac)
    }
}

/// Seeded suite with supports stratified over four classes, cycling
/// (meets `t = 0` and `∂Ω`), (interior), (meets `t = 0`), (meets `∂Ω`).
pub fn make_test_suite(domain: Rect, t_final: f64, seed: u64, count: usize) -> Result<Vec<TestFunction>> {
    if count == 0 {
        return Err(Error::InvalidData("test suite needs at least one member".into()));
    }
    if !(t_final > 0.0) {
        return Err(Error::InvalidData("final time must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lx, ly) = (domain.width(), domain.height());
    (0..count)
        .map(|i| {
            let (at_start, at_wall) = match i % 4 {
                0 => (true, true),
                1 => (false, false),
                2 => (true, false),
                _ => (false, true),
            };
            let wt = t_final * rng.gen_range(0.15..0.35);
            let ct = if at_start {
                rng.gen_range(0.1 * wt..0.8 * wt)
            } else {
                rng.gen_range(1.05 * wt..t_final - 1.05 * wt)
            };
            let wx = lx * rng.gen_range(0.12..0.3);
            let wy = ly * rng.gen_range(0.12..0.3);
            let (cx, cy) = if at_wall {
                // centre within one half-width of a randomly chosen wall
                match rng.gen_range(0..4) {
                    0 => (domain.x0 + rng.gen_range(0.1..0.9) * wx, domain.y0 + rng.gen_range(0.0..1.0) * ly),
                    1 => (domain.x1 - rng.gen_range(0.1..0.9) * wx, domain.y0 + rng.gen_range(0.0..1.0) * ly),
                    2 => (domain.x0 + rng.gen_range(0.0..1.0) * lx, domain.y0 + rng.gen_range(0.1..0.9) * wy),
                    _ => (domain.x0 + rng.gen_range(0.0..1.0) * lx, domain.y1 - rng.gen_range(0.1..0.9) * wy),
                }
            } else {
                (
                    domain.x0 + rng.gen_range(1.05 * wx..lx - 1.05 * wx),
                    domain.y0 + rng.gen_range(1.05 * wy..ly - 1.05 * wy),
                )
            };
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let kind = if i % 2 == 0 { TestKind::Scalar } else { TestKind::Vector };
            TestFunction::new(kind, [ct, cx, cy], [wt, wx, wy], [angle.cos(), angle.sin()], domain)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivative_matches_difference_quotient() {
        for xi in [-0.9, -0.4, 0.0, 0.3, 0.77] {
            let h = 1e-6;
            let fd = (poly_bump(xi + h).0 - poly_bump(xi - h).0) / (2.0 * h);
            assert!((fd - poly_bump(xi).1).abs() < 1e-8);
        }
        assert_eq!(poly_bump(1.0), (0.0, 0.0));
        assert_eq!(poly_bump(-1.5), (0.0, 0.0));
    }

    #[test]
    fn single_member_suite_is_deterministic_and_supported() {
        let a = make_test_suite(Rect::unit(), 1.0, 3, 1).unwrap();
        let b = make_test_suite(Rect::unit(), 1.0, 3, 1).unwrap();
        assert_eq!(a, b);
        assert!(a[0].supported_before(1.0));
    }

    #[test]
    fn stratification_quotas_hold() {
        let suite = make_test_suite(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 0.5, 11, 20).unwrap();
        let start = suite.iter().filter(|f| f.meets_initial_time()).count();
        let wall = suite.iter().filter(|f| f.meets_boundary()).count();
        assert!(start >= 5 && wall >= 5, "start {start}, wall {wall}");
        assert!(suite.iter().all(|f| f.supported_before(0.5)));
    }

    #[test]
    fn vector_members_have_zero_normal_trace() {
        let d = Rect::new(-0.5, 1.5, 0.0, 1.0).unwrap();
        for f in make_test_suite(d, 1.0, 5, 20).unwrap() {
            for k in 0..16 {
                let s = k as f64 / 15.0;
                let t = f.center[0];
                let (left, _) = f.vector([t, d.x0, d.y0 + s * d.height()]);
                let (right, _) = f.vector([t, d.x1, d.y0 + s * d.height()]);
                let (bottom, _) = f.vector([t, d.x0 + s * d.width(), d.y0]);
                let (top, _) = f.vector([t, d.x0 + s * d.width(), d.y1]);
                assert_eq!(left[0], 0.0);
                assert_eq!(right[0], 0.0);
                assert_eq!(bottom[1], 0.0);
                assert_eq!(top[1], 0.0);
            }
        }
    }

    #[test]
    fn vector_jacobian_matches_difference_quotients() {
        let f = TestFunction::new(TestKind::Vector, [0.3, 0.4, 0.6], [0.25, 0.3, 0.35], [0.6, -0.8], Rect::unit()).unwrap();
        let p = [0.21, 0.33, 0.71];
        let (_, jac) = f.vector(p);
        let h = 1e-6;
        for a in 0..3 {
            let (mut lo, mut hi) = (p, p);
            lo[a] -= h;
            hi[a] += h;
            let (vl, _) = f.vector(lo);
            let (vh, _) = f.vector(hi);
            for i in 0..2 {
                assert!(((vh[i] - vl[i]) / (2.0 * h) - jac[i][a]).abs() < 1e-8);
            }
        }
    }
}
