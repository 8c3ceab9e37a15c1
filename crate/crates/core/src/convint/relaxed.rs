//! Geometry of the relaxed constraint set `{(m, U) : λ_max(m⊗m/ρ − U) ≤ C}`
//! and of the wave cone of `∂t m + div U = 0, div m = 0`.

use serde::{Deserialize, Serialize};

/// A state `(m, U)` with `U = [[u0, u1], [u1, −u0]]`, so `tr U = 0` exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionState {
    pub m: [f64; 2],
    pub u: [f64; 2],
}

impl SubsolutionState {
    pub const ZERO: Self = Self { m: [0.0; 2], u: [0.0; 2] };

    pub fn new(m: [f64; 2], u: [f64; 2]) -> Self {
        Self { m, u }
    }

    /// Builds the state from a symmetric trace-free matrix; the trace part of
    /// `u` is discarded.
    pub fn from_matrix(m: [f64; 2], u: [[f64; 2]; 2]) -> Self {
        Self { m, u: [0.5 * (u[0][0] - u[1][1]), 0.5 * (u[0][1] + u[1][0])] }
    }

    pub fn u_matrix(&self) -> [[f64; 2]; 2] {
        [[self.u[0], self.u[1]], [self.u[1], -self.u[0]]]
    }

    pub fn add_scaled(&self, d: &SubsolutionState, s: f64) -> Self {
        Self {
            m: [self.m[0] + s * d.m[0], self.m[1] + s * d.m[1]],
            u: [self.u[0] + s * d.u[0], self.u[1] + s * d.u[1]],
        }
    }

    pub fn kinetic_energy(&self, rho: f64) -> f64 {
        0.5 * (self.m[0] * self.m[0] + self.m[1] * self.m[1]) / rho
    }

    /// `m⊗m/ρ − U`.
    pub fn relaxed_matrix(&self, rho: f64) -> [[f64; 2]; 2] {
        let [mx, my] = self.m;
        let off = mx * my / rho - self.u[1];
        [[mx * mx / rho - self.u[0], off], [off, my * my / rho + self.u[0]]]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.u).all(|v| v.is_finite())
    }
}

/// `e(m, U) = λ_max(m⊗m/ρ − U)` in closed form.
pub fn relaxed_gap(z: &SubsolutionState, rho: f64) -> f64 {
    let [[a, b], [_, d]] = z.relaxed_matrix(rho);
    let half_trace = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    half_trace + (half_diff * half_diff + b * b).sqrt()
}

/// A wave-cone direction parametrised by the spatial angle `α` and the
/// time-to-space ratio `σ` of the space-time frequency `ξ = (σ, cos α, sin α)`.
///
/// The plane wave `ž h(ξ·(t, x, y))` with `ž = (m̌, Ǔ)`,
/// `m̌ = (sin α, −cos α)` and `Ǔ = σ [[−sin 2α, cos 2α], [cos 2α, sin 2α]]`
/// solves the linear system for every profile `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeDirection {
    pub alpha: f64,
    pub sigma: f64,
}

impl ConeDirection {
    pub fn new(alpha: f64, sigma: f64) -> Self {
        Self { alpha, sigma }
    }

    pub fn increment(&self) -> SubsolutionState {
        let (s, c) = self.alpha.sin_cos();
        let (s2, c2) = (2.0 * self.alpha).sin_cos();
        SubsolutionState { m: [s, -c], u: [-self.sigma * s2, self.sigma * c2] }
    }

    /// Space-time frequency `(ξ_t, ξ_x, ξ_y)`.
    pub fn frequency(&self) -> [f64; 3] {
        let (s, c) = self.alpha.sin_cos();
        [self.sigma, c, s]
    }

    /// Direction whose increment moves `m` perpendicular to itself and whose
    /// `Ǔ` cancels the cross term, so that along it
    /// `m⊗m/ρ − U` only gains `t² m̌⊗m̌/ρ`.
    pub fn transverse(z: &SubsolutionState, rho: f64) -> Self {
        let [mx, my] = z.m;
        let norm = mx.hypot(my);
        if norm == 0.0 {
            return Self::new(0.0, 0.0);
        }
        let alpha = (-my).atan2(-mx);
        let dir = Self::new(alpha, 0.0);
        let mc = dir.increment().m;
        let u0 = 2.0 * mx * mc[0] / rho;
        let u1 = (mx * mc[1] + my * mc[0]) / rho;
        let (s2, c2) = (2.0 * alpha).sin_cos();
        Self::new(alpha, -u0 * s2 + u1 * c2)
    }

    /// Direction along which `m⊗m/ρ − U` keeps its top eigenpair `(λ₁, v)` and
    /// only the other eigenvalue moves, as `λ₂ + s L + s²/ρ`. Starting from any
    /// `z`, both ends of the segment where `λ₂` reaches `λ₁` satisfy
    /// `½|m|²/ρ = e(z)`.
    pub fn face(z: &SubsolutionState, rho: f64) -> Self {
        let [[a, b], [_, d]] = z.relaxed_matrix(rho);
        let phi = 0.5 * (2.0 * b).atan2(a - d);
        let (sp, cp) = phi.sin_cos();
        let v = [cp, sp];
        let alpha = phi + std::f64::consts::PI;
        let probe = Self::new(alpha, 1.0).increment();
        let w = probe.m;
        let r = probe.u_matrix();
        let v_r_w = v[0] * (r[0][0] * w[0] + r[0][1] * w[1]) + v[1] * (r[1][0] * w[0] + r[1][1] * w[1]);
        let v_m = v[0] * z.m[0] + v[1] * z.m[1];
        Self::new(alpha, v_m / (rho * v_r_w))
    }
}

/// Residual of the linear system for the plane wave along `dir`; zero up to
/// rounding for every cone direction.
pub fn cone_defect(dir: &ConeDirection) -> f64 {
    let d = dir.increment();
    let [xt, xx, xy] = dir.frequency();
    let u = d.u_matrix();
    let div_m = d.m[0] * xx + d.m[1] * xy;
    let mom = [
        xt * d.m[0] + u[0][0] * xx + u[0][1] * xy,
        xt * d.m[1] + u[1][0] * xx + u[1][1] * xy,
    ];
    div_m.abs().max(mom[0].abs()).max(mom[1].abs())
}

/// Largest `t ≥ 0` with `e(z + t d) ≤ C`, assuming `e(z) ≤ C`.
pub fn exit_time(z: &SubsolutionState, d: &SubsolutionState, rho: f64, c: f64) -> f64 {
    let dm = d.m[0].hypot(d.m[1]);
    let mut hi = if dm > 0.0 {
        (z.m[0].hypot(z.m[1]) + (2.0 * rho * c).sqrt()) / dm + 1e-12
    } else {
        1.0
    };
    // pure-U directions: grow until the gap is exceeded
    while relaxed_gap(&z.add_scaled(d, hi), rho) <= c {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if relaxed_gap(&z.add_scaled(d, mid), rho) <= c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    lo
}

/// Half-length of the longest symmetric segment through `z` along `dir`.
pub fn symmetric_half_length(z: &SubsolutionState, dir: &ConeDirection, rho: f64, c: f64) -> f64 {
    let d = dir.increment();
    let neg = SubsolutionState { m: [-d.m[0], -d.m[1]], u: [-d.u[0], -d.u[1]] };
    exit_time(z, &d, rho, c).min(exit_time(z, &neg, rho, c))
}

/// Constant `κ` of the guaranteed segment length
/// `half_length ≥ κ (C − e(z)) √(ρ / C)`.
pub const SEGMENT_KAPPA: f64 = 1.0;

pub fn segment_length_bound(gap_deficit: f64, rho: f64, c: f64) -> f64 {
    SEGMENT_KAPPA * gap_deficit * (rho / c).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub minus: SubsolutionState,
    pub plus: SubsolutionState,
    pub direction: ConeDirection,
    pub half_length: f64,
}

/// Candidate directions: the transverse construction plus an `n_alpha × n_sigma`
/// sweep of the cone with `|σ| ≤ 2√(2C/ρ)`.
pub fn candidate_directions(z: &SubsolutionState, rho: f64, c: f64, n_alpha: usize, n_sigma: usize) -> Vec<ConeDirection> {
    let mut out = Vec::with_capacity(1 + n_alpha * n_sigma);
    out.push(ConeDirection::transverse(z, rho));
    let s_max = 2.0 * (2.0 * c / rho).sqrt();
    for i in 0..n_alpha {
        let alpha = std::f64::consts::TAU * i as f64 / n_alpha as f64;
        for j in 0..n_sigma {
            let sigma = if n_sigma == 1 {
                0.0
            } else {
                -s_max + 2.0 * s_max * j as f64 / (n_sigma - 1) as f64
            };
            out.push(ConeDirection::new(alpha, sigma));
        }
    }
    out
}

/// Longest symmetric admissible segment through `z` among the candidate
/// directions; `None` when `z` already sits on `e = C`.
pub fn admissible_segment(z: &SubsolutionState, rho: f64, c: f64) -> Option<Segment> {
    admissible_segment_with(z, rho, c, 72, 9)
}

pub fn admissible_segment_with(
    z: &SubsolutionState,
    rho: f64,
    c: f64,
    n_alpha: usize,
    n_sigma: usize,
) -> Option<Segment> {
    if relaxed_gap(z, rho) >= c {
        return None;
    }
    let (direction, half_length) = candidate_directions(z, rho, c, n_alpha, n_sigma)
        .into_iter()
        .map(|dir| (dir, symmetric_half_length(z, &dir, rho, c)))
        .fold(None::<(ConeDirection, f64)>, |best, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })?;
    let d = direction.increment();
    Some(Segment {
        minus: z.add_scaled(&d, -half_length),
        plus: z.add_scaled(&d, half_length),
        direction,
        half_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, scale: f64) -> SubsolutionState {
        SubsolutionState::new(
            [rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)],
            [rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)],
        )
    }

    /// Largest root of the characteristic polynomial `λ² − tr λ + det`,
    /// found by bisection from the Gershgorin bound.
    fn eigen_oracle(a: [[f64; 2]; 2]) -> f64 {
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let p = |l: f64| l * l - tr * l + det;
        let r0 = a[0][0].abs() + a[0][1].abs();
        let r1 = a[1][1].abs() + a[1][0].abs();
        let mut hi = r0.max(r1) + 1.0;
        let mut lo = 0.5 * tr;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn face_direction_keeps_the_top_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let rho = rng.gen_range(0.2..3.0);
            let z = random_state(&mut rng, 2.0);
            let e0 = relaxed_gap(&z, rho);
            let dir = ConeDirection::face(&z, rho);
            assert!(cone_defect(&dir) < 1e-12);
            let d = dir.increment();
            for s in [-0.3, -0.05, 0.02, 0.2] {
                let e = relaxed_gap(&z.add_scaled(&d, s), rho);
                assert!(e >= e0 - 1e-12 * (1.0 + e0));
            }
            // at the forward end the second eigenvalue has caught up
            let t = exit_time(&z, &d, rho, e0 * (1.0 + 1e-12) + 1e-12);
            let end = z.add_scaled(&d, t);
            assert!((end.kinetic_energy(rho) - e0).abs() < 1e-5 * (1.0 + e0), "{} vs {e0}", end.kinetic_energy(rho));
        }
    }

    #[test]
    fn face_segment_from_a_shear_state_reaches_the_kinetic_constraint() {
        let z = SubsolutionState::new([0.0, 1.0], [0.0, 0.0]);
        let d = ConeDirection::face(&z, 1.0).increment();
        for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            assert!(relaxed_gap(&z.add_scaled(&d, s), 1.0) <= 1.0 + 1e-14);
        }
        for s in [-1.0, 1.0] {
            assert!((z.add_scaled(&d, s).kinetic_energy(1.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_examples() {
        assert_eq!(relaxed_gap(&SubsolutionState::ZERO, 1.0), 0.0);
        let z = SubsolutionState::new([1.0, 0.0], [0.5, 0.0]);
        assert_eq!(relaxed_gap(&z, 1.0), 0.5);
        assert_eq!(z.kinetic_energy(1.0), 0.5);
    }

    #[test]
    fn gap_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let z = random_state(&mut rng, 3.0);
            let rho = rng.gen_range(0.1..5.0);
            let a = z.relaxed_matrix(rho);
            let closed = relaxed_gap(&z, rho);
            let oracle = eigen_oracle(a);
            assert!((closed - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()), "{closed} vs {oracle}");
            assert!(closed >= z.kinetic_energy(rho) - 1e-12);
        }
    }

    #[test]
    fn cone_directions_solve_the_linear_system() {
        for i in 0..360 {
            for sigma in [-3.0, -0.5, 0.0, 0.7, 2.0] {
                let dir = ConeDirection::new(i as f64 * std::f64::consts::TAU / 360.0, sigma);
                assert!(cone_defect(&dir) < 1e-14);
            }
        }
    }

    #[test]
    fn transverse_direction_only_adds_rank_one_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let z = random_state(&mut rng, 1.0);
            let rho = rng.gen_range(0.5..2.0);
            let dir = ConeDirection::transverse(&z, rho);
            let d = dir.increment();
            let t = 0.37;
            let a = z.add_scaled(&d, t).relaxed_matrix(rho);
            let a0 = z.relaxed_matrix(rho);
            for i in 0..2 {
                for j in 0..2 {
                    let expected = a0[i][j] + t * t * d.m[i] * d.m[j] / rho;
                    assert!((a[i][j] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn segment_from_rest() {
        let seg = admissible_segment(&SubsolutionState::ZERO, 1.0, 1.0).unwrap();
        let bound = (2.0_f64).sqrt();
        for end in [seg.minus, seg.plus] {
            assert!(relaxed_gap(&end, 1.0) <= 1.0 + 1e-12);
            assert!(end.m[0].hypot(end.m[1]) <= bound + 1e-12);
        }
        let mid = seg.minus.add_scaled(&seg.plus, 1.0);
        assert!(mid.m.iter().chain(&mid.u).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn converged_state_is_a_no_op() {
        let z = SubsolutionState::new([1.0, 0.0], [0.5, 0.0]);
        assert!(admissible_segment(&z, 1.0, 0.5).is_none());
    }

    #[test]
    fn segment_length_bound_holds_against_direction_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let rho = rng.gen_range(0.2..4.0);
            let c = rng.gen_range(0.2..4.0);
            // rescale a random state into the interior of the relaxed set
            let mut z = random_state(&mut rng, 1.0);
            let e = relaxed_gap(&z, rho).max(1e-9);
            let target = c * rng.gen_range(0.0..0.999);
            let scale = if e > 0.0 { (target / e).sqrt().min(1.0) } else { 1.0 };
            z = SubsolutionState::new([z.m[0] * scale, z.m[1] * scale], [z.u[0] * scale * scale, z.u[1] * scale * scale]);
            let e = relaxed_gap(&z, rho);
            if e >= c {
                continue;
            }
            let bound = segment_length_bound(c - e, rho, c);
            // exhaustive sweep over 360 directions, each with its best σ
            let oracle = (0..360)
                .map(|i| {
                    let alpha = i as f64 * std::f64::consts::TAU / 360.0;
                    (0..81)
                        .map(|j| {
                            let sigma = -4.0 + 0.1 * j as f64;
                            symmetric_half_length(&z, &ConeDirection::new(alpha, sigma), rho, c)
                        })
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            assert!(oracle >= bound, "oracle {oracle} < bound {bound}");
            let seg = admissible_segment(&z, rho, c).unwrap();
            assert!(seg.half_length >= bound * (1.0 - 1e-9), "{} < {bound}", seg.half_length);
            assert!(relaxed_gap(&seg.plus, rho) <= c * (1.0 + 1e-12));
            assert!(relaxed_gap(&seg.minus, rho) <= c * (1.0 + 1e-12));
        }
    }
}
