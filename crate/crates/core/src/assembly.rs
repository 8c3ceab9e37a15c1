//! Gluing per-piece convex-integration momenta into solutions with constant
//! density, pressure and magnetic field.

use serde::{Deserialize, Serialize};

use crate::convint::{iterate, Diagnostics, EngineConfig, SubsolutionField};
use crate::data::{compute_c_constants, PiecewiseConstantData, SpaceTimeGrid};
use crate::eos::{power_law_pressure, EquationOfState};
use crate::error::{Error, Result};
use crate::fields::SolutionFields;
use crate::state::kinetic_energy;
use crate::verify::{locate, Closure, FieldSource, PointState};

/// Default gap between `Λ` and the largest total pressure.
pub const DEFAULT_MARGIN: f64 = 1.0;

/// `Λ = maxᵢ (pᵢ + ½bᵢ²) + margin`.
pub fn choose_lambda(data: &PiecewiseConstantData, margin: f64) -> Result<f64> {
    if !(margin > 0.0) || !margin.is_finite() {
        let (piece, required) = data
            .pieces()
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.total_pressure()))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        return Err(Error::InadmissibleLambda { piece, required, lambda: required + margin });
    }
    Ok(data.max_total_pressure() + margin)
}

/// Seed of piece `index`, split from `master` by a SplitMix64 step.
pub fn piece_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Grid resolution and engine settings of a build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// `(Nt, Nx, Ny)` of the global grid.
    pub dims: [usize; 3],
    pub engine: EngineConfig,
}

/// Per-piece record of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceProvenance {
    pub index: usize,
    pub c: f64,
    pub seed: u64,
    /// Cell range `[ix0, ix1) × [iy0, iy1)` of the piece in the global grid.
    pub cells: [usize; 4],
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct AssembledSolution {
    pub data: PiecewiseConstantData,
    pub lambda: f64,
    pub c: Vec<f64>,
    pub master_seed: u64,
    pub pieces: Vec<PieceProvenance>,
    /// Cell-centre samples of `(ρ, p, u, b)`.
    pub fields: SolutionFields,
    /// `u₀` at the spatial cell centres.
    pub initial_velocity: Vec<[f64; 2]>,
    /// No waves were added, so only the linear identities can hold.
    pub subsolution_only: bool,
    subsolutions: Vec<SubsolutionField>,
    /// Piece index of every spatial cell.
    piece_map: Vec<usize>,
}

impl AssembledSolution {
    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.fields.grid
    }

    pub fn subsolutions(&self) -> &[SubsolutionField] {
        &self.subsolutions
    }

    pub fn piece_of_cell(&self, ix: usize, iy: usize) -> usize {
        self.piece_map[ix * self.fields.grid.ny + iy]
    }

    /// `|E − (Λ + ρᵢe(ρᵢ, pᵢ) − pᵢ)|` at every cell centre.
    pub fn energy_deviation(&self, eos: &EquationOfState) -> Result<Vec<f64>> {
        let f = &self.fields;
        (0..f.grid.len())
            .map(|i| {
                let e = eos.internal_energy(f.rho[i], f.p[i])?;
                let energy = crate::state::total_energy(eos, f.rho[i], f.p[i], f.u[i], f.b[i])?;
                Ok((energy - (self.lambda + f.rho[i] * e - f.p[i])).abs())
            })
            .collect()
    }

    /// `|Cᵢ − ½ρ|u|²|` at every cell centre.
    pub fn kinetic_deficit_density(&self) -> Vec<f64> {
        let f = &self.fields;
        let g = &f.grid;
        (0..g.len())
            .map(|i| {
                let (_, ix, iy) = g.unravel(i);
                (self.c[self.piece_of_cell(ix, iy)] - kinetic_energy(f.rho[i], f.u[i])).abs()
            })
            .collect()
    }
}

impl FieldSource for AssembledSolution {
    fn grid(&self) -> &SpaceTimeGrid {
        &self.fields.grid
    }

    fn sample(&self, p: [f64; 3]) -> PointState {
        let (_, ix, iy) = locate(&self.fields.grid, p);
        let k = self.piece_of_cell(ix, iy);
        let piece = &self.data.pieces()[k];
        let z = self.subsolutions[k].evaluate(p);
        PointState { rho: piece.rho, p: piece.p, u: [z.m[0] / piece.rho, z.m[1] / piece.rho], b: piece.b, relaxed: z.u }
    }

    fn initial(&self, x: f64, y: f64) -> PointState {
        self.sample([0.0, x, y])
    }

    fn subsolution_only(&self) -> bool {
        self.subsolution_only
    }
}

/// Runs convex integration on every piece with `Cᵢ = Λ − pᵢ − ½bᵢ²` and glues
/// `u = m/ρ₀` over the partition.
pub fn build_solution(data: &PiecewiseConstantData, lambda: f64, seed: u64, budget: &Budget) -> Result<AssembledSolution> {
    let c = compute_c_constants(data, lambda)?;
    let [nt, nx, ny] = budget.dims;
    let grid = SpaceTimeGrid::new(nt, nx, ny, *data.domain(), data.t_final())?;
    let mut parts = Vec::with_capacity(c.len());
    for (k, (piece, &ck)) in data.pieces().iter().zip(&c).enumerate() {
        let cells = grid.aligned_cells(&piece.rect)?;
        let sub = SpaceTimeGrid::new(nt, cells[1] - cells[0], cells[3] - cells[2], piece.rect, data.t_final())?;
        let s = piece_seed(seed, k);
        let out = iterate(sub, piece.rho, ck, s, &budget.engine)?;
        parts.push((PieceProvenance { index: k, c: ck, seed: s, cells, diagnostics: out.diagnostics }, out.field));
    }
    assemble(data, lambda, seed, budget.dims, parts)
}

/// Glues per-piece subsolutions, given in piece order, into a solution.
pub fn assemble(
    data: &PiecewiseConstantData,
    lambda: f64,
    seed: u64,
    dims: [usize; 3],
    parts: Vec<(PieceProvenance, SubsolutionField)>,
) -> Result<AssembledSolution> {
    let c = compute_c_constants(data, lambda)?;
    let [nt, nx, ny] = dims;
    let grid = SpaceTimeGrid::new(nt, nx, ny, *data.domain(), data.t_final())?;
    if parts.len() != c.len() {
        return Err(Error::InvalidData(format!("{} subsolutions for {} pieces", parts.len(), c.len())));
    }
    let mut piece_map = vec![usize::MAX; nx * ny];
    let (provenance, subsolutions): (Vec<PieceProvenance>, Vec<SubsolutionField>) = parts.into_iter().unzip();
    for (k, (piece, sub)) in data.pieces().iter().zip(&subsolutions).enumerate() {
        let cells = grid.aligned_cells(&piece.rect)?;
        let sg = sub.grid();
        if provenance[k].cells != cells || [sg.nt, sg.nx, sg.ny] != [nt, cells[1] - cells[0], cells[3] - cells[2]] {
            return Err(Error::GridMismatch(format!("subsolution {} does not match its piece", k + 1)));
        }
        if sub.rho() != piece.rho || sub.target() != c[k] {
            return Err(Error::InvalidData(format!("subsolution {} was built for other constants", k + 1)));
        }
        for ix in cells[0]..cells[1] {
            for iy in cells[2]..cells[3] {
                piece_map[ix * ny + iy] = k;
            }
        }
    }
    if piece_map.contains(&usize::MAX) {
        return Err(Error::InvalidData("pieces do not cover every grid cell".into()));
    }

    let n = grid.len();
    let (mut rho, mut p, mut u, mut b) = (vec![0.0; n], vec![0.0; n], vec![[0.0; 2]; n], vec![0.0; n]);
    let mut initial_velocity = vec![[0.0; 2]; nx * ny];
    for (k, (piece, sub)) in data.pieces().iter().zip(&subsolutions).enumerate() {
        let [x0, x1, y0, y1] = provenance[k].cells;
        let sg = sub.grid();
        for it in 0..nt {
            for ix in x0..x1 {
                for iy in y0..y1 {
                    let i = grid.index(it, ix, iy);
                    let m = sub.states()[sg.index(it, ix - x0, iy - y0)].m;
                    rho[i] = piece.rho;
                    p[i] = piece.p;
                    b[i] = piece.b;
                    u[i] = [m[0] / piece.rho, m[1] / piece.rho];
                }
            }
        }
        for ix in x0..x1 {
            for iy in y0..y1 {
                let m = sub.trace()[(ix - x0) * sg.ny + (iy - y0)].m;
                initial_velocity[ix * ny + iy] = [m[0] / piece.rho, m[1] / piece.rho];
            }
        }
    }
    let subsolution_only = subsolutions.iter().all(|s| s.waves().is_empty());
    Ok(AssembledSolution {
        data: data.clone(),
        lambda,
        c,
        master_seed: seed,
        pieces: provenance,
        fields: SolutionFields::new(grid, rho, p, u, b)?,
        initial_velocity,
        subsolution_only,
        subsolutions,
        piece_map,
    })
}

/// The assembled fields read as an isentropic solution with `p(ρ) = ρ^a`.
#[derive(Debug, Clone, Copy)]
pub struct IsentropicView<'a> {
    pub solution: &'a AssembledSolution,
    pub law_exponent: f64,
    /// Equation of state with `ρe(ρ, p) = P(ρ)`.
    pub eos: EquationOfState,
}

impl IsentropicView<'_> {
    pub fn closure(&self) -> Closure {
        Closure::new(self.eos, self.law_exponent)
    }
}

impl FieldSource for IsentropicView<'_> {
    fn grid(&self) -> &SpaceTimeGrid {
        self.solution.grid()
    }

    fn sample(&self, p: [f64; 3]) -> PointState {
        self.solution.sample(p)
    }

    fn initial(&self, x: f64, y: f64) -> PointState {
        self.solution.initial(x, y)
    }

    fn subsolution_only(&self) -> bool {
        self.solution.subsolution_only
    }
}

/// Checks `pᵢ = ρᵢ^a` on every piece and pins the internal energy so that the
/// energy identity of the full system becomes the isentropic one.
pub fn isentropic_view(sol: &AssembledSolution, gamma: f64, law_exponent: f64) -> Result<IsentropicView<'_>> {
    let offending: Vec<usize> = sol
        .data
        .pieces()
        .iter()
        .enumerate()
        .filter(|(_, piece)| {
            let law = power_law_pressure(piece.rho, law_exponent);
            (piece.p - law).abs() > 1e-12 * law.abs().max(1.0)
        })
        .map(|(i, _)| i + 1)
        .collect();
    if !offending.is_empty() {
        return Err(Error::PressureLawMismatch { exponent: law_exponent, pieces: offending });
    }
    Ok(IsentropicView { solution: sol, law_exponent, eos: EquationOfState::isentropic_override(gamma, law_exponent)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Piece, Rect};

    fn two_pieces() -> PiecewiseConstantData {
        PiecewiseConstantData::new(
            Rect::unit(),
            vec![
                Piece { rect: Rect::new(0.0, 0.5, 0.0, 1.0).unwrap(), rho: 1.0, p: 1.0, b: 2.0 },
                Piece { rect: Rect::new(0.5, 1.0, 0.0, 1.0).unwrap(), rho: 1.0, p: 2.0, b: 1.0 },
            ],
            1.0,
        )
        .unwrap()
    }

    fn budget(max_iter: usize) -> Budget {
        Budget { dims: [8, 16, 16], engine: EngineConfig { max_iter, trace_iter: 0, ..Default::default() } }
    }

    #[test]
    fn lambda_examples() {
        let single = PiecewiseConstantData::uniform(Rect::unit(), 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(choose_lambda(&single, 1.0).unwrap(), 2.0);
        assert_eq!(choose_lambda(&two_pieces(), 0.5).unwrap(), 3.5);
        assert!(matches!(choose_lambda(&single, 0.0), Err(Error::InadmissibleLambda { .. })));
    }

    #[test]
    fn piece_seeds_are_distinct_and_reproducible() {
        assert_eq!(piece_seed(7, 0), piece_seed(7, 0));
        assert_ne!(piece_seed(7, 0), piece_seed(7, 1));
        assert_ne!(piece_seed(7, 0), piece_seed(8, 0));
    }

    #[test]
    fn zero_budget_gives_the_fluid_at_rest() {
        let data = PiecewiseConstantData::uniform(Rect::unit(), 1.0, 1.0, 0.0, 1.0).unwrap();
        let sol = build_solution(&data, 2.0, 7, &budget(0)).unwrap();
        assert!(sol.subsolution_only);
        assert!(sol.fields.u.iter().all(|u| *u == [0.0, 0.0]));
        assert_eq!(sol.c, vec![1.0]);
    }

    #[test]
    fn scalar_fields_are_the_data_and_independent_of_the_seed() {
        let data = two_pieces();
        let a = build_solution(&data, 3.5, 7, &budget(3)).unwrap();
        let b = build_solution(&data, 3.5, 8, &budget(3)).unwrap();
        assert_eq!(a.fields.rho, b.fields.rho);
        assert_eq!(a.fields.p, b.fields.p);
        assert_eq!(a.fields.b, b.fields.b);
        assert_eq!(a.c, vec![0.5, 1.0]);
        let g = a.grid();
        for it in 0..g.nt {
            for ix in 0..g.nx {
                let i = g.index(it, ix, 3);
                let want = if ix < 8 { (1.0, 2.0) } else { (2.0, 1.0) };
                assert_eq!((a.fields.p[i], a.fields.b[i]), want);
            }
        }
        assert_ne!(a.fields.u, b.fields.u);
    }

    #[test]
    fn misaligned_pieces_are_rejected() {
        let data = PiecewiseConstantData::new(
            Rect::unit(),
            vec![
                Piece { rect: Rect::new(0.0, 0.3, 0.0, 1.0).unwrap(), rho: 1.0, p: 1.0, b: 0.0 },
                Piece { rect: Rect::new(0.3, 1.0, 0.0, 1.0).unwrap(), rho: 1.0, p: 1.0, b: 0.0 },
            ],
            1.0,
        )
        .unwrap();
        assert!(build_solution(&data, 2.0, 7, &budget(0)).is_err());
    }

    #[test]
    fn isentropic_view_checks_the_pressure_law() {
        let data = PiecewiseConstantData::uniform(Rect::unit(), 2.0, 4.0, 0.0, 1.0).unwrap();
        let sol = build_solution(&data, 5.0, 7, &budget(0)).unwrap();
        let view = isentropic_view(&sol, 2.0, 2.0).unwrap();
        assert!((view.eos.internal_energy(2.0, 4.0).unwrap() - 1.0).abs() < 1e-14);
        match isentropic_view(&sol, 2.0, 3.0) {
            Err(Error::PressureLawMismatch { pieces, .. }) => assert_eq!(pieces, vec![1]),
            other => panic!("{other:?}"),
        }
    }
}
