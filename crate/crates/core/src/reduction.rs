//! The planar ansatz `u = (u, v, 0)`, `B = (0, 0, b)` and a strong-form check
//! that it turns the three-dimensional system into the reduced one.

use serde::{Deserialize, Serialize};

use crate::data::SpaceTimeGrid;
use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::fields::SolutionFields;

/// Number of `z` layers kept by a lift; enough for a periodic centred stencil.
pub const LIFT_LAYERS: usize = 3;

/// Three-dimensional fields on `grid × {z₀, …, z_{nz−1}}`, periodic in `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lifted3DFields {
    pub grid: SpaceTimeGrid,
    pub nz: usize,
    pub dz: f64,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<[f64; 3]>,
    pub b: Vec<[f64; 3]>,
}

impl Lifted3DFields {
    pub fn index(&self, it: usize, ix: usize, iy: usize, iz: usize) -> usize {
        self.grid.index(it, ix, iy) * self.nz + iz
    }

    /// Restriction to the first layer, dropping the out-of-plane components.
    pub fn project(&self) -> Result<SolutionFields> {
        let n = self.grid.len();
        let pick = |k: usize| k * self.nz;
        SolutionFields::new(
            self.grid,
            (0..n).map(|k| self.rho[pick(k)]).collect(),
            (0..n).map(|k| self.p[pick(k)]).collect(),
            (0..n).map(|k| [self.u[pick(k)][0], self.u[pick(k)][1]]).collect(),
            (0..n).map(|k| self.b[pick(k)][2]).collect(),
        )
    }

    /// Largest violation of `u₃ = 0`, `B₁ = B₂ = 0` and `z`-independence.
    pub fn ansatz_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.grid.len() {
            let base = k * self.nz;
            for iz in 0..self.nz {
                let i = base + iz;
                worst = worst.max(self.u[i][2].abs()).max(self.b[i][0].abs()).max(self.b[i][1].abs());
                worst = worst
                    .max((self.rho[i] - self.rho[base]).abs())
                    .max((self.p[i] - self.p[base]).abs())
                    .max((self.u[i][0] - self.u[base][0]).abs())
                    .max((self.u[i][1] - self.u[base][1]).abs())
                    .max((self.b[i][2] - self.b[base][2]).abs());
            }
        }
        worst
    }
}

pub fn lift_2d_to_3d(fields: &SolutionFields) -> Lifted3DFields {
    let nz = LIFT_LAYERS;
    let rep = |k: usize| std::iter::repeat_n(k, nz);
    let n = fields.grid.len();
    Lifted3DFields {
        grid: fields.grid,
        nz,
        dz: fields.grid.dx().min(fields.grid.dy()),
        rho: (0..n).flat_map(rep).map(|k| fields.rho[k]).collect(),
        p: (0..n).flat_map(rep).map(|k| fields.p[k]).collect(),
        u: (0..n).flat_map(rep).map(|k| [fields.u[k][0], fields.u[k][1], 0.0]).collect(),
        b: (0..n).flat_map(rep).map(|k| [0.0, 0.0, fields.b[k]]).collect(),
    }
}

/// Outcome of comparing the two residual sets at the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// `max |r₃ − r₂|` over mass, both in-plane momenta, energy and the
    /// `z` induction line, divided by the largest term magnitude.
    pub relative_discrepancy: f64,
    pub absolute_discrepancy: f64,
    /// Largest reduced residual, per line: mass, momentum x, y, energy, induction.
    pub reduced_residual: [f64; 5],
    pub div_b: f64,
    pub b_dot_u: f64,
    /// `z` momentum residual, including the `z` component of `(Curl B) × B`.
    pub z_momentum: f64,
    /// In-plane induction components of `Curl(B × u)`.
    pub in_plane_induction: f64,
    /// `max |−(Curl B) × B − Grad(½|B|²)|` with the stencils applied literally.
    pub magnetic_pressure_defect: f64,
    pub ansatz_defect: f64,
}

impl EquivalenceReport {
    pub fn pass(&self, rel_tol: f64) -> bool {
        self.relative_discrepancy <= rel_tol
            && self.div_b == 0.0
            && self.b_dot_u == 0.0
            && self.z_momentum == 0.0
            && self.in_plane_induction == 0.0
            && self.ansatz_defect == 0.0
    }
}

/// Centred differences on the interior nodes of a lifted field.
struct Stencil<'a> {
    f: &'a Lifted3DFields,
    h: [f64; 4],
}

type Node = [usize; 4];

impl Stencil<'_> {
    fn shift(&self, n: Node, axis: usize, forward: bool) -> Node {
        let mut m = n;
        if axis == 3 {
            let nz = self.f.nz;
            m[3] = if forward { (n[3] + 1) % nz } else { (n[3] + nz - 1) % nz };
        } else {
            m[axis] = if forward { n[axis] + 1 } else { n[axis] - 1 };
        }
        m
    }

    fn d(&self, axis: usize, n: Node, g: &dyn Fn(Node) -> f64) -> f64 {
        (g(self.shift(n, axis, true)) - g(self.shift(n, axis, false))) / (2.0 * self.h[axis])
    }

    fn at(&self, n: Node) -> usize {
        self.f.index(n[0], n[1], n[2], n[3])
    }
}

/// Refuses sampled fields with jumps or features below about a dozen cells
/// per wavelength, where centred stencils are meaningless.
pub fn check_smooth(fields: &SolutionFields) -> Result<()> {
    let g = &fields.grid;
    let comps: [(&str, Box<dyn Fn(usize) -> f64 + '_>); 5] = [
        ("ρ", Box::new(|i| fields.rho[i])),
        ("p", Box::new(|i| fields.p[i])),
        ("u", Box::new(|i| fields.u[i][0])),
        ("v", Box::new(|i| fields.u[i][1])),
        ("b", Box::new(|i| fields.b[i])),
    ];
    let dims = [g.nt, g.nx, g.ny];
    for (name, get) in &comps {
        for axis in 0..3 {
            if dims[axis] < 3 {
                continue;
            }
            let (mut d1, mut d2) = (0.0f64, 0.0f64);
            for it in 0..g.nt {
                for ix in 0..g.nx {
                    for iy in 0..g.ny {
                        let mut n = [it, ix, iy];
                        if n[axis] + 2 >= dims[axis] {
                            continue;
                        }
                        let a = get(g.index(n[0], n[1], n[2]));
                        n[axis] += 1;
                        let b = get(g.index(n[0], n[1], n[2]));
                        n[axis] += 1;
                        let c = get(g.index(n[0], n[1], n[2]));
                        d1 = d1.max((b - a).abs()).max((c - b).abs());
                        d2 = d2.max((c - 2.0 * b + a).abs());
                    }
                }
            }
            if d1 > 0.0 && d2 > 0.5 * d1 {
                return Err(Error::NonSmooth(format!(
                    "{name} changes by {d2:.3e} in second differences against {d1:.3e} in first differences along axis {axis}; \
                     the strong-form check needs smooth manufactured fields"
                )));
            }
        }
    }
    Ok(())
}

/// Lifts smooth fields and compares the strong residuals of both systems.
pub fn residual_equivalence_check(fields: &SolutionFields, eos: &EquationOfState) -> Result<EquivalenceReport> {
    if !fields.is_finite() {
        return Err(Error::InvalidData("fields must be finite".into()));
    }
    check_smooth(fields)?;
    check_lifted(&lift_2d_to_3d(fields), eos)
}

/// Number of closed-form smooth families behind [`manufactured`].
pub const MANUFACTURED_FAMILIES: usize = 10;

/// Smooth closed-form field `family` (`0..MANUFACTURED_FAMILIES`) sampled on
/// `grid`, with `ρ, p > 0` everywhere. Grids of about 16 cells per unit
/// length or more pass [`check_smooth`].
pub fn manufactured(family: usize, grid: SpaceTimeGrid) -> Result<SolutionFields> {
    use std::f64::consts::{PI, TAU};
    type Sample = fn(f64, f64, f64) -> (f64, f64, [f64; 2], f64);
    let f: Sample = match family {
        0 => |_, _, _| (1.3, 0.8, [0.3, -0.2], 0.5),
        1 => |_, x, y| (1.0, 1.0, [y.sin(), 0.0], x.cos()),
        2 => |_, x, y| {
            let (sx, sy) = ((TAU * x).sin(), (TAU * y).sin());
            (1.0 + 0.2 * sx, 1.0 + 0.1 * (TAU * y).cos(), [(TAU * y).cos(), sx], 0.5 * (TAU * (x + y)).sin() + 0.1 * sy)
        },
        3 => |t, x, _| (1.5 + 0.3 * (TAU * (x - t)).sin(), 1.0, [1.0, 0.5], 0.2 * (TAU * t).cos()),
        4 => |t, x, y| {
            let decay = (-t).exp();
            let u = [-(PI * x).sin() * (PI * y).cos() * decay, (PI * x).cos() * (PI * y).sin() * decay];
            (1.0, 2.0 + 0.25 * ((TAU * x).cos() + (TAU * y).cos()) * decay * decay, u, 0.3 * (PI * x).sin())
        },
        5 => |t, x, y| ((-(x - 0.5) * (x - 0.5)).exp(), 1.0 + x * y, [x * y, -0.5 * y * y], 0.4 + 0.1 * t),
        6 => |t, x, y| (1.0 + x * x + y * y, 2.0 + t * x, [t, x - y], 1.0 + x * y),
        7 => |t, x, y| {
            let u = [-(TAU * y).sin(), (TAU * x).sin()];
            (25.0 / 9.0, 5.0 / 3.0, u, 0.6 * (TAU * x).cos() + 0.4 * (TAU * y).cos() * (1.0 + 0.2 * t))
        },
        8 => |t, x, y| (2.0, 0.5 + 0.1 * (TAU * y).sin(), [0.1 * t, 0.0], 3.0 + (TAU * t).sin() * (TAU * x).cos()),
        9 => |t, x, y| {
            let r2 = (x - 0.5 - 0.2 * t).powi(2) + (y - 0.5).powi(2);
            let bump = (-8.0 * r2).exp();
            (1.0 + 0.5 * bump, 1.0 + 0.3 * bump, [0.2 + 0.1 * bump, -0.1 * bump], 0.8 * bump)
        },
        _ => return Err(Error::InvalidData(format!("no manufactured family {family}"))),
    };
    SolutionFields::from_fn(grid, f)
}

/// Strong residuals of the three-dimensional system in conservation form
/// against those of the reduced system, node by node.
pub fn check_lifted(f: &Lifted3DFields, eos: &EquationOfState) -> Result<EquivalenceReport> {
    let g = &f.grid;
    if g.nt < 3 || g.nx < 3 || g.ny < 3 {
        return Err(Error::GridMismatch("the check needs at least 3 nodes per axis".into()));
    }
    let s = Stencil { f, h: [g.dt(), g.dx(), g.dy(), f.dz] };
    let rho = |n: Node| f.rho[s.at(n)];
    let p = |n: Node| f.p[s.at(n)];
    let u = |n: Node| f.u[s.at(n)];
    let bv = |n: Node| f.b[s.at(n)];
    let e = |n: Node| eos.internal_energy(rho(n), p(n)).unwrap_or(f64::NAN);
    let b2 = |n: Node| {
        let b = bv(n);
        b[0] * b[0] + b[1] * b[1] + b[2] * b[2]
    };
    let u2 = |n: Node| {
        let v = u(n);
        v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    };
    let bu = |n: Node| {
        let (b, v) = (bv(n), u(n));
        b[0] * v[0] + b[1] * v[1] + b[2] * v[2]
    };
    let energy = |n: Node| 0.5 * rho(n) * u2(n) + rho(n) * e(n) + 0.5 * b2(n);

    let mut report = EquivalenceReport {
        relative_discrepancy: 0.0,
        absolute_discrepancy: 0.0,
        reduced_residual: [0.0; 5],
        div_b: 0.0,
        b_dot_u: 0.0,
        z_momentum: 0.0,
        in_plane_induction: 0.0,
        magnetic_pressure_defect: 0.0,
        ansatz_defect: f.ansatz_defect(),
    };
    let mut scale = 0.0f64;
    for it in 1..g.nt - 1 {
        for ix in 1..g.nx - 1 {
            for iy in 1..g.ny - 1 {
                for iz in 0..f.nz {
                    let n = [it, ix, iy, iz];
                    let div3 = |flux: &dyn Fn(Node, usize) -> f64| (1..4).map(|a| s.d(a, n, &|m| flux(m, a - 1))).sum::<f64>();

                    // three-dimensional system
                    let mass3 = s.d(0, n, &rho) + div3(&|m, j| rho(m) * u(m)[j]);
                    let mom3: [f64; 3] = [0, 1, 2].map(|i| {
                        s.d(0, n, &|m| rho(m) * u(m)[i])
                            + div3(&|m, j| {
                                let delta = if i == j { p(m) + 0.5 * b2(m) } else { 0.0 };
                                rho(m) * u(m)[i] * u(m)[j] + delta - bv(m)[i] * bv(m)[j]
                            })
                    });
                    let energy3 = s.d(0, n, &energy)
                        + div3(&|m, j| (0.5 * rho(m) * u2(m) + rho(m) * e(m) + p(m) + b2(m)) * u(m)[j])
                        - div3(&|m, j| bu(m) * bv(m)[j]);
                    // B × u, then its curl
                    let cross = |m: Node| {
                        let (b, v) = (bv(m), u(m));
                        [b[1] * v[2] - b[2] * v[1], b[2] * v[0] - b[0] * v[2], b[0] * v[1] - b[1] * v[0]]
                    };
                    let curl = |w: &dyn Fn(Node) -> [f64; 3]| {
                        [
                            s.d(2, n, &|m| w(m)[2]) - s.d(3, n, &|m| w(m)[1]),
                            s.d(3, n, &|m| w(m)[0]) - s.d(1, n, &|m| w(m)[2]),
                            s.d(1, n, &|m| w(m)[1]) - s.d(2, n, &|m| w(m)[0]),
                        ]
                    };
                    let curl_bu = curl(&cross);
                    let induction3: [f64; 3] = [0, 1, 2].map(|i| s.d(0, n, &|m| bv(m)[i]) + curl_bu[i]);
                    let div_b = div3(&|m, j| bv(m)[j]);

                    // literal Lorentz force against the magnetic pressure gradient
                    let curl_b = curl(&bv);
                    let b0 = bv(n);
                    let lorentz = [
                        curl_b[1] * b0[2] - curl_b[2] * b0[1],
                        curl_b[2] * b0[0] - curl_b[0] * b0[2],
                        curl_b[0] * b0[1] - curl_b[1] * b0[0],
                    ];
                    for (i, a) in [(0, 1), (1, 2)] {
                        let grad = s.d(a, n, &|m| 0.5 * b2(m));
                        report.magnetic_pressure_defect = report.magnetic_pressure_defect.max((-lorentz[i] - grad).abs());
                    }

                    // reduced system on the same stencils, with two-dimensional operators
                    let div2 = |flux: &dyn Fn(Node, usize) -> f64| s.d(1, n, &|m| flux(m, 0)) + s.d(2, n, &|m| flux(m, 1));
                    let b = |m: Node| bv(m)[2];
                    let mass2 = s.d(0, n, &rho) + div2(&|m, j| rho(m) * u(m)[j]);
                    let mom2: [f64; 2] = [0, 1].map(|i| {
                        s.d(0, n, &|m| rho(m) * u(m)[i])
                            + div2(&|m, j| rho(m) * u(m)[i] * u(m)[j])
                            + s.d(i + 1, n, &|m| p(m) + 0.5 * b(m) * b(m))
                    });
                    let half_u2 = |m: Node| 0.5 * rho(m) * (u(m)[0] * u(m)[0] + u(m)[1] * u(m)[1]);
                    let energy2 = s.d(0, n, &|m| half_u2(m) + rho(m) * e(m) + 0.5 * b(m) * b(m))
                        + div2(&|m, j| (half_u2(m) + rho(m) * e(m) + p(m) + b(m) * b(m)) * u(m)[j]);
                    let induction2 = s.d(0, n, &b) + div2(&|m, j| b(m) * u(m)[j]);

                    let pairs = [
                        (mass3, mass2),
                        (mom3[0], mom2[0]),
                        (mom3[1], mom2[1]),
                        (energy3, energy2),
                        (induction3[2], induction2),
                    ];
                    for (k, (r3, r2)) in pairs.iter().enumerate() {
                        report.absolute_discrepancy = report.absolute_discrepancy.max((r3 - r2).abs());
                        report.reduced_residual[k] = report.reduced_residual[k].max(r2.abs());
                    }
                    let term_scale = [
                        s.d(0, n, &rho).abs(),
                        s.d(0, n, &|m| rho(m) * u(m)[0]).abs(),
                        s.d(0, n, &|m| rho(m) * u(m)[1]).abs(),
                        s.d(0, n, &energy).abs(),
                        s.d(0, n, &b).abs(),
                        mass2.abs(),
                        mom2[0].abs(),
                        mom2[1].abs(),
                        energy2.abs(),
                        induction2.abs(),
                        s.d(1, n, &|m| p(m) + 0.5 * b(m) * b(m)).abs(),
                        s.d(2, n, &|m| p(m) + 0.5 * b(m) * b(m)).abs(),
                        div2(&|m, j| rho(m) * u(m)[j]).abs(),
                        div2(&|m, j| b(m) * u(m)[j]).abs(),
                    ];
                    scale = term_scale.iter().fold(scale, |a, v| a.max(*v));
                    report.div_b = report.div_b.max(div_b.abs());
                    report.b_dot_u = report.b_dot_u.max(bu(n).abs());
                    report.z_momentum = report.z_momentum.max(mom3[2].abs()).max(lorentz[2].abs());
                    report.in_plane_induction = report.in_plane_induction.max(induction3[0].abs()).max(induction3[1].abs());
                }
            }
        }
    }
    report.relative_discrepancy = if scale > 0.0 { report.absolute_discrepancy / scale } else { report.absolute_discrepancy };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rect;

    fn grid(n: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(n, n, n, Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 1.0).unwrap()
    }

    fn eos() -> EquationOfState {
        EquationOfState::ideal(2.0).unwrap()
    }

    #[test]
    fn lift_embeds_and_projects_back_exactly() {
        let f = SolutionFields::from_fn(grid(4), |t, x, y| (1.0 + x, 2.0 + y, [1.0, 2.0 + t], 3.0)).unwrap();
        let l = lift_2d_to_3d(&f);
        assert_eq!(l.u[0], [1.0, 2.0 + f.grid.center(0, 0, 0)[0], 0.0]);
        assert_eq!(l.b[5], [0.0, 0.0, 3.0]);
        assert_eq!(l.project().unwrap(), f);
        assert_eq!(l.ansatz_defect(), 0.0);
    }

    #[test]
    fn constant_fields_have_zero_residuals() {
        let f = SolutionFields::from_fn(grid(6), |_, _, _| (1.0, 1.0, [0.3, -0.2], 0.7)).unwrap();
        let r = residual_equivalence_check(&f, &eos()).unwrap();
        assert!(r.reduced_residual.iter().all(|v| v.abs() < 1e-13), "{r:?}");
        assert!(r.pass(1e-12));
    }

    #[test]
    fn shear_with_transverse_field_reduces_exactly() {
        let tau = std::f64::consts::TAU;
        let f = SolutionFields::from_fn(grid(20), |_, x, y| (1.0, 1.0, [(tau * y).sin(), 0.0], (tau * x).cos())).unwrap();
        let r = residual_equivalence_check(&f, &eos()).unwrap();
        assert!(r.relative_discrepancy < 1e-12, "{r:?}");
        assert!(r.pass(1e-12));
    }

    #[test]
    fn magnetic_pressure_defect_is_second_order() {
        let defect = |n: usize| {
            let f = SolutionFields::from_fn(grid(n), |_, x, y| (1.0, 1.0, [0.0, 0.0], (3.0 * x).cos() + (2.0 * y).sin())).unwrap();
            residual_equivalence_check(&f, &eos()).unwrap().magnetic_pressure_defect
        };
        let ratio = defect(16) / defect(32);
        assert!((3.3..4.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn injected_z_dependence_is_detected() {
        let f = SolutionFields::from_fn(grid(8), |_, x, _| (1.0, 1.0, [0.0, 0.1 * x], 1.0 + 0.1 * x)).unwrap();
        let mut l = lift_2d_to_3d(&f);
        for k in 0..l.grid.len() {
            l.b[k * l.nz + 1][2] += 0.01;
        }
        let r = check_lifted(&l, &eos()).unwrap();
        assert!(r.ansatz_defect > 0.0);
        assert!(!r.pass(1e-12));
        assert!(r.div_b > 0.0);
    }

    #[test]
    fn every_manufactured_family_reduces_exactly() {
        let g = SpaceTimeGrid::new(16, 20, 20, Rect::unit(), 1.0).unwrap();
        for k in 0..MANUFACTURED_FAMILIES {
            let f = manufactured(k, g).unwrap();
            assert!(f.rho.iter().chain(&f.p).all(|v| *v > 0.0));
            let rep = residual_equivalence_check(&f, &eos()).unwrap();
            assert!(rep.pass(1e-12), "family {k}: {rep:?}");
        }
        assert!(manufactured(MANUFACTURED_FAMILIES, g).is_err());
    }

    #[test]
    fn jumps_are_refused() {
        let f = SolutionFields::from_fn(grid(8), |_, x, _| (if x < 0.5 { 1.0 } else { 2.0 }, 1.0, [0.0, 0.0], 0.0)).unwrap();
        assert!(matches!(residual_equivalence_check(&f, &eos()), Err(Error::NonSmooth(_))));
    }
}
