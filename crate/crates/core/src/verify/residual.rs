use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::Quadrature;
use super::testfn::{TestFunction, TestKind};
use super::{FieldSource, PointState};
use crate::eos::{power_law_pressure, EquationOfState};
use crate::error::{Error, Result};

/// The integral identities, each transcribed with its initial-data term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Identity {
    /// Mass.
    Weak1,
    /// Momentum with total pressure `p + ½b²`.
    Weak2,
    /// Energy.
    Weak3,
    /// Induction.
    Weak4,
    /// Entropy transport `ρs`.
    Conserving,
    /// `∫∫ m·∇φ = 0`.
    Ci1,
    /// Momentum of the kinetic constraint with `m⊗m/ρ − ½|m|²/ρ I`.
    Ci2,
    /// Linear relaxation `∫∫ m·∂tφ + U : ∇φ + ∫ m₀·φ(0) = 0` of a subsolution.
    Ci2Relaxed,
    IsenWeak1,
    IsenWeak2,
    IsenWeak3,
    IsenConserving,
}

impl Identity {
    pub const ALL: [Identity; 12] = [
        Identity::Weak1,
        Identity::Weak2,
        Identity::Weak3,
        Identity::Weak4,
        Identity::Conserving,
        Identity::Ci1,
        Identity::Ci2,
        Identity::Ci2Relaxed,
        Identity::IsenWeak1,
        Identity::IsenWeak2,
        Identity::IsenWeak3,
        Identity::IsenConserving,
    ];

    /// The identities a weak, entropy-conserving solution must satisfy.
    pub const FULL_SYSTEM: [Identity; 5] =
        [Identity::Weak1, Identity::Weak2, Identity::Weak3, Identity::Weak4, Identity::Conserving];

    /// The identities of an energy-conserving isentropic solution.
    pub const ISENTROPIC: [Identity; 4] =
        [Identity::IsenWeak1, Identity::IsenWeak2, Identity::IsenWeak3, Identity::IsenConserving];

    pub fn tag(&self) -> &'static str {
        match self {
            Identity::Weak1 => "weak1",
            Identity::Weak2 => "weak2",
            Identity::Weak3 => "weak3",
            Identity::Weak4 => "weak4",
            Identity::Conserving => "conserving",
            Identity::Ci1 => "ci1",
            Identity::Ci2 => "ci2",
            Identity::Ci2Relaxed => "ci2.relaxed",
            Identity::IsenWeak1 => "isen.weak1",
            Identity::IsenWeak2 => "isen.weak2",
            Identity::IsenWeak3 => "isen.weak3",
            Identity::IsenConserving => "isen.conserving",
        }
    }

    pub fn test_kind(&self) -> TestKind {
        match self {
            Identity::Weak2 | Identity::Ci2 | Identity::Ci2Relaxed | Identity::IsenWeak2 => TestKind::Vector,
            _ => TestKind::Scalar,
        }
    }

    /// Whether the identity is quadratic or cubic in `u` and therefore needs
    /// the kinetic constraint to hold.
    pub fn is_nonlinear(&self) -> bool {
        matches!(
            self,
            Identity::Weak2 | Identity::Weak3 | Identity::Ci2 | Identity::IsenWeak2 | Identity::IsenConserving
        )
    }

    fn has_initial_term(&self) -> bool {
        !matches!(self, Identity::Ci1)
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL
            .into_iter()
            .find(|id| id.tag() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

/// Closure relations used by the integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    pub eos: EquationOfState,
    /// Exponent of the barotropic law `p(ρ) = ρ^a` of the isentropic system.
    pub law_exponent: f64,
}

impl Closure {
    pub fn new(eos: EquationOfState, law_exponent: f64) -> Self {
        Self { eos, law_exponent }
    }

    fn potential(&self, rho: f64) -> f64 {
        self.eos.pressure_potential(rho, self.law_exponent).unwrap_or(f64::NAN)
    }
}

/// Value and absolute mass of the space-time integrand.
fn integrand(id: Identity, s: &PointState, phi: &TestFunction, x: [f64; 3], cl: &Closure) -> (f64, f64) {
    let m = [s.rho * s.u[0], s.rho * s.u[1]];
    let half_u2 = 0.5 * (s.u[0] * s.u[0] + s.u[1] * s.u[1]);
    let half_b2 = 0.5 * s.b * s.b;
    match id.test_kind() {
        TestKind::Scalar => {
            let (_, g) = phi.scalar(x);
            let transport = |q: f64, flux: f64| {
                let a = q * g[0];
                let c = flux * (s.u[0] * g[1] + s.u[1] * g[2]);
                (a + c, a.abs() + c.abs())
            };
            match id {
                Identity::Weak1 | Identity::IsenWeak1 => transport(s.rho, s.rho),
                Identity::Weak4 | Identity::IsenWeak3 => transport(s.b, s.b),
                Identity::Conserving => {
                    let rs = s.rho * cl.eos.specific_entropy(s.rho, s.p).unwrap_or(f64::NAN);
                    transport(rs, rs)
                }
                Identity::Weak3 => {
                    let rho_e = s.rho * cl.eos.internal_energy(s.rho, s.p).unwrap_or(f64::NAN);
                    let energy = s.rho * half_u2 + rho_e + half_b2;
                    transport(energy, energy + s.p + half_b2)
                }
                Identity::IsenConserving => {
                    let energy = s.rho * half_u2 + cl.potential(s.rho) + half_b2;
                    transport(energy, energy + power_law_pressure(s.rho, cl.law_exponent) + half_b2)
                }
                Identity::Ci1 => {
                    let c = m[0] * g[1] + m[1] * g[2];
                    (c, c.abs())
                }
                _ => unreachable!("vector identity"),
            }
        }
        TestKind::Vector => {
            let (_, j) = phi.vector(x);
            let time = m[0] * j[0][0] + m[1] * j[1][0];
            // flux tensor A with A : ∇φ = Σ A_ik ∂_k φ_i
            let contract = |a: [[f64; 2]; 2]| a[0][0] * j[0][1] + a[0][1] * j[0][2] + a[1][0] * j[1][1] + a[1][1] * j[1][2];
            let div = j[0][1] + j[1][2];
            let convective = [[m[0] * s.u[0], m[0] * s.u[1]], [m[1] * s.u[0], m[1] * s.u[1]]];
            let (flux, pressure) = match id {
                Identity::Weak2 => (contract(convective), (s.p + half_b2) * div),
                Identity::IsenWeak2 => (contract(convective), (power_law_pressure(s.rho, cl.law_exponent) + half_b2) * div),
                Identity::Ci2 => (contract(convective), -s.rho * half_u2 * div),
                Identity::Ci2Relaxed => {
                    let [u11, u12] = s.relaxed;
                    (contract([[u11, u12], [u12, -u11]]), 0.0)
                }
                _ => unreachable!("scalar identity"),
            };
            (time + flux + pressure, time.abs() + flux.abs() + pressure.abs())
        }
    }
}

/// Value and absolute mass of the initial-data integrand at `t = 0`.
fn initial_integrand(id: Identity, s: &PointState, phi: &TestFunction, x: [f64; 3], cl: &Closure) -> (f64, f64) {
    let v = match id.test_kind() {
        TestKind::Scalar => {
            let (f, _) = phi.scalar(x);
            let half_u2 = 0.5 * (s.u[0] * s.u[0] + s.u[1] * s.u[1]);
            let q = match id {
                Identity::Weak1 | Identity::IsenWeak1 => s.rho,
                Identity::Weak4 | Identity::IsenWeak3 => s.b,
                Identity::Conserving => s.rho * cl.eos.specific_entropy(s.rho, s.p).unwrap_or(f64::NAN),
                Identity::Weak3 => {
                    s.rho * half_u2 + s.rho * cl.eos.internal_energy(s.rho, s.p).unwrap_or(f64::NAN) + 0.5 * s.b * s.b
                }
                Identity::IsenConserving => s.rho * half_u2 + cl.potential(s.rho) + 0.5 * s.b * s.b,
                _ => 0.0,
            };
            q * f
        }
        TestKind::Vector => {
            let (f, _) = phi.vector(x);
            s.rho * (s.u[0] * f[0] + s.u[1] * f[1])
        }
    };
    (v, v.abs())
}

/// Nodes `(cell, position, weight)` of `[lo, hi] ∩ [origin, origin + n h]`.
fn axis_nodes(quad: &Quadrature, lo: f64, hi: f64, origin: f64, h: f64, n: usize, breaks: &[f64]) -> Vec<(f64, f64)> {
    let (a, b) = (lo.max(origin), hi.min(origin + n as f64 * h));
    if !(b > a) {
        return Vec::new();
    }
    let first = (((a - origin) / h).floor().max(0.0) as usize).min(n - 1);
    let last = (((b - origin) / h).ceil() as usize).clamp(first + 1, n);
    let mut out = Vec::new();
    for i in first..last {
        let (c0, c1) = (origin + i as f64 * h, origin + (i + 1) as f64 * h);
        quad.nodes(c0.max(a), c1.min(b), breaks, &mut out);
    }
    out
}

/// `(Σ integrand, Σ |terms|)` for each identity against one test function.
fn integrate(source: &dyn FieldSource, ids: &[Identity], phi: &TestFunction, quad: &Quadrature, cl: &Closure) -> Vec<(f64, f64)> {
    let g = source.grid();
    let o = g.origin();
    let h = g.spacing();
    let (lo, hi) = (phi.lower(), phi.upper());
    let dims = [g.nt, g.nx, g.ny];
    let nodes: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|a| axis_nodes(quad, lo[a], hi[a], o[a], h[a], dims[a], &[lo[a], phi.center[a], hi[a]]))
        .collect();
    let zero = vec![(0.0, 0.0); ids.len()];
    let add = |mut acc: Vec<(f64, f64)>, other: Vec<(f64, f64)>| {
        for (a, b) in acc.iter_mut().zip(other) {
            a.0 += b.0;
            a.1 += b.1;
        }
        acc
    };
    let bulk = nodes[0]
        .par_iter()
        .map(|&(t, wt)| {
            let mut acc = vec![(0.0, 0.0); ids.len()];
            for &(x, wx) in &nodes[1] {
                for &(y, wy) in &nodes[2] {
                    let p = [t, x, y];
                    let s = source.sample(p);
                    let w = wt * wx * wy;
                    for (k, id) in ids.iter().enumerate() {
                        let (v, m) = integrand(*id, &s, phi, p, cl);
                        acc[k].0 += w * v;
                        acc[k].1 += w * m;
                    }
                }
            }
            acc
        })
        .reduce(|| zero.clone(), add);
    if !phi.meets_initial_time() {
        return bulk;
    }
    let mut init = zero.clone();
    for &(x, wx) in &nodes[1] {
        for &(y, wy) in &nodes[2] {
            let s = source.initial(x, y);
            let p = [0.0, x, y];
            for (k, id) in ids.iter().enumerate() {
                if id.has_initial_term() {
                    let (v, m) = initial_integrand(*id, &s, phi, p, cl);
                    init[k].0 += wx * wy * v;
                    init[k].1 += wx * wy * m;
                }
            }
        }
    }
    add(bulk, init)
}

fn normalized((value, mass): (f64, f64)) -> f64 {
    if mass > 0.0 {
        value.abs() / mass
    } else {
        value.abs()
    }
}

/// Normalized residual `|∫∫ integrand + initial term| / ∫∫ |terms|` of one
/// identity against one test function.
pub fn residual(id: Identity, source: &dyn FieldSource, phi: &TestFunction, quad: &Quadrature, closure: &Closure) -> Result<f64> {
    Ok(residuals(&[id], source, std::slice::from_ref(phi), quad, closure)?[0][0])
}

/// Normalized residuals indexed `[identity][test function]`. Each test
/// function is used in the form its identity requires.
pub fn residuals(
    ids: &[Identity],
    source: &dyn FieldSource,
    suite: &[TestFunction],
    quad: &Quadrature,
    closure: &Closure,
) -> Result<Vec<Vec<f64>>> {
    quad.validate()?;
    let t_final = source.grid().t_final;
    if let Some(phi) = suite.iter().find(|f| !f.supported_before(t_final)) {
        return Err(Error::InvalidData(format!(
            "test function centred at t = {} reaches the final time",
            phi.center[0]
        )));
    }
    let mut out = vec![Vec::with_capacity(suite.len()); ids.len()];
    for phi in suite {
        for (k, r) in integrate(source, ids, phi, quad, closure).into_iter().enumerate() {
            out[k].push(normalized(r));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Rect, SpaceTimeGrid};
    use crate::fields::SolutionFields;
    use crate::verify::make_test_suite;

    fn closure() -> Closure {
        Closure::new(EquationOfState::ideal(2.0).unwrap(), 2.0)
    }

    #[test]
    fn tags_round_trip() {
        for id in Identity::ALL {
            assert_eq!(id.tag().parse::<Identity>().unwrap(), id);
        }
        assert!(matches!("weak5".parse::<Identity>(), Err(Error::UnknownIdentity(_))));
    }

    #[test]
    fn constant_fields_at_rest_have_vanishing_transport_residuals() {
        let grid = SpaceTimeGrid::new(8, 8, 8, Rect::unit(), 1.0).unwrap();
        let f = SolutionFields::from_fn(grid, |_, _, _| (1.3, 0.7, [0.0, 0.0], -0.4)).unwrap();
        let suite = make_test_suite(Rect::unit(), 1.0, 1, 8).unwrap();
        let ids = [Identity::Weak1, Identity::Weak4, Identity::Conserving, Identity::Weak3, Identity::Weak2];
        let r = residuals(&ids, &f, &suite, &Quadrature::Gauss { points: 5 }, &closure()).unwrap();
        for (id, row) in ids.iter().zip(&r) {
            for v in row {
                assert!(*v < 1e-13, "{id}: {v}");
            }
        }
    }

    #[test]
    fn uniform_flow_violates_mass_conservation_at_the_wall() {
        // a uniform flow through the walls is not a weak solution with
        // impermeable boundaries
        let grid = SpaceTimeGrid::new(8, 8, 8, Rect::unit(), 1.0).unwrap();
        let f = SolutionFields::from_fn(grid, |_, _, _| (1.0, 1.0, [1.0, 0.0], 0.0)).unwrap();
        let suite = make_test_suite(Rect::unit(), 1.0, 2, 4).unwrap();
        let wall: Vec<_> = suite.into_iter().filter(|f| f.meets_boundary()).collect();
        let r = residuals(&[Identity::Weak1], &f, &wall, &Quadrature::Gauss { points: 5 }, &closure()).unwrap();
        assert!(r[0].iter().any(|v| *v > 1e-3));
    }

    #[test]
    fn test_functions_reaching_the_final_time_are_rejected() {
        let grid = SpaceTimeGrid::new(4, 4, 4, Rect::unit(), 1.0).unwrap();
        let f = SolutionFields::from_fn(grid, |_, _, _| (1.0, 1.0, [0.0, 0.0], 0.0)).unwrap();
        let phi = TestFunction::new(TestKind::Scalar, [0.9, 0.5, 0.5], [0.2, 0.2, 0.2], [1.0, 0.0], Rect::unit()).unwrap();
        assert!(residual(Identity::Weak1, &f, &phi, &Quadrature::default(), &closure()).is_err());
    }
}
