//! Worst-cell-first convex integration on a uniform space-time grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::relaxed::{relaxed_gap, symmetric_half_length, ConeDirection, SubsolutionState};
use super::wave::{CellBox, Envelope, Profile, WavePerturbation};
use crate::data::{Rect, SpaceTimeGrid};
use crate::error::{Error, Result};

const BIN: usize = 4;

/// Tuning of the iteration; defaults reproduce the reference runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub max_iter: usize,
    /// Stop once the space-time deficit `∫∫ (C − e) dx dt` drops to this value.
    pub target_deficit: f64,
    /// Extra iterations concentrated at `t = 0` for the initial trace.
    pub trace_iter: usize,
    /// Base number of wavelengths across the shorter side of `Q`.
    pub k0: f64,
    /// Iterations between frequency doublings.
    pub n0: usize,
    /// Shortest admissible wavelength in cells, in space and in time.
    pub min_wavelength_cells: f64,
    /// Directions tried per iteration (best of a seeded random draw).
    pub candidates: usize,
    /// Size of the seeded random draw the candidates are taken from.
    pub direction_draws: usize,
    /// Envelope taper length in wavelengths; the envelope-derivative terms of
    /// an increment shrink like `1 / (k · taper)`.
    pub taper_wavelengths: f64,
    /// Edge of one amplitude tile of the envelope, in taper lengths.
    pub tile_tapers: f64,
    /// Largest wave support half-width, in wavelengths.
    pub block_wavelengths: f64,
    /// Fewest cells per period of the top harmonic of a wave profile.
    pub cells_per_harmonic: f64,
    /// Fraction of the room `C − e` of each cell a single wave may use.
    pub room_fraction: f64,
    /// Cells with `C − e` below this fraction of `C` are not targeted.
    pub gap_tolerance: f64,
    /// Rounds of tile-weight correction against the exact increments.
    pub fit_passes: usize,
    /// Fraction of the deficit under its support a wave must remove to be
    /// accepted.
    pub min_efficiency: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            target_deficit: 0.0,
            trace_iter: 1000,
            k0: 4.0,
            n0: 500,
            min_wavelength_cells: 4.0,
            candidates: 4,
            direction_draws: 24,
            taper_wavelengths: 0.75,
            tile_tapers: 1.5,
            block_wavelengths: 2.0,
            cells_per_harmonic: 2.0,
            room_fraction: 0.7,
            gap_tolerance: 1e-3,
            fit_passes: 4,
            min_efficiency: 0.005,
        }
    }
}

/// Convergence record of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Deficit before the first iteration and after every iteration.
    pub deficit_history: Vec<f64>,
    /// Kinetic deficit `∫∫ (C − ½|m|²/ρ)` alongside `deficit_history`.
    pub kinetic_deficit_history: Vec<f64>,
    /// Kinetic deficit of the `t = 0` trace after every trace iteration.
    pub trace_deficit_history: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub trace_accepted: usize,
    pub iterations: usize,
}

impl Diagnostics {
    pub fn initial_deficit(&self) -> f64 {
        self.deficit_history.first().copied().unwrap_or(0.0)
    }

    pub fn final_deficit(&self) -> f64 {
        self.deficit_history.last().copied().unwrap_or(0.0)
    }

    pub fn is_monotone(&self) -> bool {
        self.deficit_history.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Per-cell subsolution states on `[0, T] × Q` together with the waves that
/// generate them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsolutionField {
    grid: SpaceTimeGrid,
    rho: f64,
    c: f64,
    seed: u64,
    waves: Vec<WavePerturbation>,
    states: Vec<SubsolutionState>,
    trace: Vec<SubsolutionState>,
    #[serde(skip)]
    bins: Vec<Vec<u32>>,
}

impl SubsolutionField {
    /// The zero subsolution on `grid` (whose domain is the piece `Q`).
    pub fn new(grid: SpaceTimeGrid, rho: f64, c: f64, seed: u64) -> Result<Self> {
        if !(rho > 0.0) || !(c > 0.0) || !(2.0 * rho * c >= 1e-12) {
            return Err(Error::Domain(format!(
                "convex integration needs ρ > 0 and C > 0 with 2ρC ≥ 1e-12 (ρ = {rho}, C = {c})"
            )));
        }
        let nbins = Self::bin_dims(&grid);
        Ok(Self {
            grid,
            rho,
            c,
            seed,
            waves: Vec::new(),
            states: vec![SubsolutionState::ZERO; grid.len()],
            trace: vec![SubsolutionState::ZERO; grid.nx * grid.ny],
            bins: vec![Vec::new(); nbins.iter().product()],
        })
    }

    /// Rebuilds a field from a stored wave list.
    pub fn from_waves(grid: SpaceTimeGrid, rho: f64, c: f64, seed: u64, waves: Vec<WavePerturbation>) -> Result<Self> {
        let mut field = Self::new(grid, rho, c, seed)?;
        let full = field.full_box();
        for w in waves {
            field.add_localized_wave(&full, w)?;
        }
        Ok(field)
    }

    fn bin_dims(grid: &SpaceTimeGrid) -> [usize; 3] {
        [grid.nt.div_ceil(BIN), grid.nx.div_ceil(BIN), grid.ny.div_ceil(BIN)]
    }

    /// Box of all cells, with unlimited extent in time.
    pub fn full_box(&self) -> CellBox {
        CellBox {
            t: [i64::MIN / 4, i64::MAX / 4],
            x: [0, self.grid.nx as i64],
            y: [0, self.grid.ny as i64],
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn target(&self) -> f64 {
        self.c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn waves(&self) -> &[WavePerturbation] {
        &self.waves
    }

    pub fn states(&self) -> &[SubsolutionState] {
        &self.states
    }

    /// States at `t = 0` on the spatial cell centres.
    pub fn trace(&self) -> &[SubsolutionState] {
        &self.trace
    }

    pub fn gap(&self, idx: usize) -> f64 {
        relaxed_gap(&self.states[idx], self.rho)
    }

    /// `∫∫ (C − e(z)) dx dt` by cell-centre quadrature.
    pub fn deficit(&self) -> f64 {
        let vol = self.grid.cell_volume();
        self.states.iter().map(|z| (self.c - relaxed_gap(z, self.rho)) * vol).sum()
    }

    /// `∫∫ (C − ½|m|²/ρ) dx dt`.
    pub fn kinetic_deficit(&self) -> f64 {
        let vol = self.grid.cell_volume();
        self.states.iter().map(|z| (self.c - z.kinetic_energy(self.rho)) * vol).sum()
    }

    /// `∫ (C − e(z(0, ·))) dx`.
    pub fn trace_deficit(&self) -> f64 {
        let area = self.grid.dx() * self.grid.dy();
        self.trace.iter().map(|z| (self.c - relaxed_gap(z, self.rho)) * area).sum()
    }

    /// `∫ (C − ½|m(0, ·)|²/ρ) dx`.
    pub fn trace_kinetic_deficit(&self) -> f64 {
        let area = self.grid.dx() * self.grid.dy();
        self.trace.iter().map(|z| (self.c - z.kinetic_energy(self.rho)) * area).sum()
    }

    /// Fraction of cells with `|½|m|²/ρ − C| < tol·C`.
    pub fn kinetic_fraction(&self, tol: f64) -> f64 {
        fraction_within(&self.states, self.rho, self.c, tol)
    }

    pub fn trace_kinetic_fraction(&self, tol: f64) -> f64 {
        fraction_within(&self.trace, self.rho, self.c, tol)
    }

    /// Exact `(m, U)` at a point of `[0, T] × Q`.
    pub fn evaluate(&self, p: [f64; 3]) -> SubsolutionState {
        let g = &self.grid;
        let h = g.spacing();
        let o = g.origin();
        let dims = [g.nt, g.nx, g.ny];
        let mut b = [0usize; 3];
        for a in 0..3 {
            let i = ((p[a] - o[a]) / h[a]).floor().clamp(0.0, (dims[a] - 1) as f64) as usize;
            b[a] = i / BIN;
        }
        let nb = Self::bin_dims(g);
        let bin = (b[0] * nb[1] + b[1]) * nb[2] + b[2];
        let mut acc = SubsolutionState::ZERO;
        for &w in &self.bins[bin] {
            let wave = &self.waves[w as usize];
            if wave.contains(p) {
                acc = acc.add_scaled(&wave.evaluate(p), 1.0);
            }
        }
        acc
    }

    /// Cell ranges of `support ∩ grid`.
    fn clipped(&self, support: &CellBox) -> Option<[std::ops::Range<usize>; 3]> {
        let clip = |r: [i64; 2], n: usize| {
            let lo = r[0].max(0) as usize;
            let hi = r[1].min(n as i64).max(0) as usize;
            (lo < hi).then_some(lo..hi)
        };
        Some([
            clip(support.t, self.grid.nt)?,
            clip(support.x, self.grid.nx)?,
            clip(support.y, self.grid.ny)?,
        ])
    }

    fn touches_initial_time(support: &CellBox) -> bool {
        support.t[0] < 0 && support.t[1] > 0
    }

    /// Increments of the wave at the affected cell centres and trace points.
    fn increments(&self, wave: &WavePerturbation) -> (Vec<(usize, SubsolutionState)>, Vec<(usize, SubsolutionState)>) {
        let g = &self.grid;
        let cells = match self.clipped(&wave.support) {
            Some([rt, rx, ry]) => {
                let ny = ry.len();
                let nx = rx.len();
                (0..rt.len() * nx * ny)
                    .into_par_iter()
                    .map(|k| {
                        let it = rt.start + k / (nx * ny);
                        let ix = rx.start + (k / ny) % nx;
                        let iy = ry.start + k % ny;
                        (g.index(it, ix, iy), wave.evaluate(g.center(it, ix, iy)))
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        let trace = if Self::touches_initial_time(&wave.support) {
            let xs = wave.support.x[0].max(0) as usize..wave.support.x[1].min(g.nx as i64) as usize;
            let ys = wave.support.y[0].max(0) as usize..wave.support.y[1].min(g.ny as i64) as usize;
            let ny = ys.len();
            (0..xs.len() * ny)
                .into_par_iter()
                .map(|k| {
                    let ix = xs.start + k / ny;
                    let iy = ys.start + k % ny;
                    let c = g.center(0, ix, iy);
                    (ix * g.ny + iy, wave.evaluate([0.0, c[1], c[2]]))
                })
                .collect()
        } else {
            Vec::new()
        };
        (cells, trace)
    }

    /// Per-tile parts of `wave` at the affected cell centres and trace points.
    fn split(&self, wave: &WavePerturbation) -> (Parts, Parts) {
        let g = &self.grid;
        let cells = match self.clipped(&wave.support) {
            Some([rt, rx, ry]) => Parts::gather(rt.len(), rx.len() * ry.len(), |a, b| {
                let (it, ix, iy) = (rt.start + a, rx.start + b / ry.len(), ry.start + b % ry.len());
                (g.index(it, ix, iy), g.center(it, ix, iy))
            }, wave),
            None => Parts::default(),
        };
        let trace = if Self::touches_initial_time(&wave.support) {
            let xs = wave.support.x[0].max(0) as usize..wave.support.x[1].min(g.nx as i64) as usize;
            let ys = wave.support.y[0].max(0) as usize..wave.support.y[1].min(g.ny as i64) as usize;
            Parts::gather(xs.len(), ys.len(), |a, b| {
                let (ix, iy) = (xs.start + a, ys.start + b);
                let c = g.center(0, ix, iy);
                (ix * g.ny + iy, [0.0, c[1], c[2]])
            }, wave)
        } else {
            Parts::default()
        };
        (cells, trace)
    }

    /// Adds `wave`, whose support must lie in `block` and, in space, in `Q`.
    pub fn add_localized_wave(&mut self, block: &CellBox, wave: WavePerturbation) -> Result<()> {
        if !block.contains(&wave.support) {
            return Err(Error::WaveRejected(format!(
                "support {:?} exceeds the block {:?}",
                wave.support, block
            )));
        }
        if !self.full_box().contains(&wave.support) {
            return Err(Error::WaveRejected(format!("support {:?} leaves the piece", wave.support)));
        }
        let h = self.grid.spacing();
        let o = self.grid.origin();
        for (a, r) in [wave.support.t, wave.support.x, wave.support.y].iter().enumerate() {
            let (lo, hi) = (wave.envelope.lower(a), wave.envelope.upper(a));
            if lo < o[a] + r[0] as f64 * h[a] - 1e-9 * h[a] || hi > o[a] + r[1] as f64 * h[a] + 1e-9 * h[a] {
                return Err(Error::WaveRejected(format!("envelope on axis {a} exceeds the support box")));
            }
        }
        if wave.envelope.weights.len() != wave.envelope.counts().iter().product::<usize>()
            || wave.envelope.weights.iter().any(|w| !w.is_finite())
        {
            return Err(Error::WaveRejected("envelope weights do not match its tiles".into()));
        }
        if !(wave.wavenumber > 0.0) || !wave.amplitude.is_finite() {
            return Err(Error::WaveRejected("wavenumber must be positive, amplitude finite".into()));
        }
        if wave.amplitude == 0.0 {
            return Ok(());
        }
        let (cells, trace) = self.increments(&wave);
        self.commit(wave, &cells, &trace);
        Ok(())
    }

    fn commit(&mut self, wave: WavePerturbation, cells: &[(usize, SubsolutionState)], trace: &[(usize, SubsolutionState)]) {
        for (i, d) in cells {
            self.states[*i] = self.states[*i].add_scaled(d, 1.0);
        }
        for (i, d) in trace {
            self.trace[*i] = self.trace[*i].add_scaled(d, 1.0);
        }
        let id = self.waves.len() as u32;
        if let Some([rt, rx, ry]) = self.clipped(&wave.support) {
            let nb = Self::bin_dims(&self.grid);
            for bt in rt.start / BIN..=(rt.end - 1) / BIN {
                for bx in rx.start / BIN..=(rx.end - 1) / BIN {
                    for by in ry.start / BIN..=(ry.end - 1) / BIN {
                        self.bins[(bt * nb[1] + bx) * nb[2] + by].push(id);
                    }
                }
            }
        }
        self.waves.push(wave);
    }

    /// Restores the bin index after deserialization.
    pub fn reindex(&mut self) {
        let waves = std::mem::take(&mut self.waves);
        self.bins = vec![Vec::new(); Self::bin_dims(&self.grid).iter().product()];
        let (cells, trace): (Vec<_>, Vec<_>) = (Vec::new(), Vec::new());
        for w in waves {
            self.commit(w, &cells, &trace);
        }
    }
}

fn fraction_within(states: &[SubsolutionState], rho: f64, c: f64, tol: f64) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let n = states.iter().filter(|z| (z.kinetic_energy(rho) - c).abs() < tol * c).count();
    n as f64 / states.len() as f64
}

/// Result of [`iterate`].
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub field: SubsolutionField,
    pub diagnostics: Diagnostics,
}

impl IterationOutput {
    /// `m₀`: momentum at `t = 0` on the spatial cell centres.
    pub fn initial_momentum(&self) -> Vec<[f64; 2]> {
        self.field.trace().iter().map(|z| z.m).collect()
    }

    /// `m` at every space-time cell centre.
    pub fn momentum(&self) -> Vec<[f64; 2]> {
        self.field.states().iter().map(|z| z.m).collect()
    }
}

/// A wave decomposed by envelope tile at a set of points: the increment at
/// point `j` is `A Σ w_tile · exact` over `parts[start[j]..start[j + 1]]`.
#[derive(Default)]
struct Parts {
    index: Vec<usize>,
    start: Vec<usize>,
    parts: Vec<(u32, f64, SubsolutionState)>,
}

impl Parts {
    /// Points `(index, p) = at(a, b)` for `a < outer`, `b < inner`, split in
    /// parallel over `a`.
    fn gather(outer: usize, inner: usize, at: impl Fn(usize, usize) -> (usize, [f64; 3]) + Sync, wave: &WavePerturbation) -> Self {
        let chunks: Vec<Parts> = (0..outer)
            .into_par_iter()
            .map(|a| {
                let mut out = Parts::default();
                for b in 0..inner {
                    let (i, p) = at(a, b);
                    out.start.push(out.parts.len());
                    out.index.push(i);
                    wave.tile_parts(p, &mut out.parts);
                }
                out
            })
            .collect();
        let mut all = Parts::default();
        for c in chunks {
            let base = all.parts.len();
            all.start.extend(c.start.iter().map(|s| s + base));
            all.index.extend(c.index);
            all.parts.extend(c.parts);
        }
        all.start.push(all.parts.len());
        all
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn of(&self, j: usize) -> &[(u32, f64, SubsolutionState)] {
        &self.parts[self.start[j]..self.start[j + 1]]
    }

    fn exact(&self, j: usize, weights: &[f64], amplitude: f64) -> SubsolutionState {
        self.of(j)
            .iter()
            .fold(SubsolutionState::ZERO, |acc, (t, _, d)| acc.add_scaled(d, amplitude * weights[*t as usize]))
    }

    fn leading(&self, j: usize, weights: &[f64]) -> f64 {
        self.of(j).iter().map(|(t, l, _)| weights[*t as usize] * l).sum()
    }

    fn increments(&self, weights: &[f64], amplitude: f64) -> Vec<(usize, SubsolutionState)> {
        (0..self.len()).into_par_iter().map(|j| (self.index[j], self.exact(j, weights, amplitude))).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Bulk,
    Trace,
}

struct Proposal {
    wave: WavePerturbation,
    cells: Vec<(usize, SubsolutionState)>,
    trace: Vec<(usize, SubsolutionState)>,
    /// Decrease of `∫∫ (C − e)`.
    bulk_gain: f64,
    /// Decrease of `∫∫ (C − ½|m|²/ρ)`.
    kinetic_gain: f64,
    trace_gain: f64,
    trace_kinetic_gain: f64,
    /// Deficit of the affected cells (or trace points) before the wave.
    available: f64,
}

impl Proposal {
    fn admissible(&self, phase: Phase, min_efficiency: f64) -> bool {
        let floor = (min_efficiency * self.available).max(0.0);
        match phase {
            Phase::Bulk => self.bulk_gain > floor,
            Phase::Trace => self.bulk_gain >= 0.0 && self.trace_gain > floor,
        }
    }

    fn score(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Bulk => self.bulk_gain + self.kinetic_gain,
            Phase::Trace => self.trace_gain + self.trace_kinetic_gain,
        }
    }
}

struct Engine<'a> {
    field: SubsolutionField,
    cfg: &'a EngineConfig,
    rng: ChaCha8Rng,
    /// Iteration index the wavelength schedule is evaluated at, at least.
    stage_start: usize,
}

/// Largest `s ∈ [0, cap]` with `e(z + s d) ≤ C`, to about six digits.
fn exit_scale(z: &SubsolutionState, d: &SubsolutionState, rho: f64, c: f64, cap: f64) -> f64 {
    if relaxed_gap(&z.add_scaled(d, cap), rho) <= c {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..22 {
        let mid = 0.5 * (lo + hi);
        if relaxed_gap(&z.add_scaled(d, mid), rho) <= c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

impl Engine<'_> {
    fn stage(&self, n: usize) -> usize {
        n.max(self.stage_start).div_ceil(self.cfg.n0.max(1))
    }

    fn min_wavelength(&self) -> f64 {
        let h = self.field.grid.spacing();
        self.cfg.min_wavelength_cells * h[1].min(h[2])
    }

    fn wavelength_schedule(&self, n: usize) -> f64 {
        let side = self.field.grid.domain.width().min(self.field.grid.domain.height());
        let level = n.div_ceil(self.cfg.n0.max(1)).min(30) as i32;
        side / (self.cfg.k0 * 2f64.powi(level))
    }

    /// Face and transverse directions at `z`, the two axis shears, and the
    /// best of a seeded random draw, ranked by symmetric half-length at `z`.
    fn directions(&mut self, z: &SubsolutionState) -> Vec<ConeDirection> {
        let (rho, c) = (self.field.rho, self.field.c);
        let s_max = 2.0 * (2.0 * c / rho).sqrt();
        let mut fixed = vec![
            ConeDirection::face(z, rho),
            ConeDirection::transverse(z, rho),
            ConeDirection::new(0.0, 0.0),
            ConeDirection::new(std::f64::consts::FRAC_PI_2, 0.0),
        ];
        let mut drawn: Vec<(ConeDirection, f64)> = (0..self.cfg.direction_draws)
            .map(|_| {
                let alpha = self.rng.gen_range(0.0..std::f64::consts::TAU);
                let sigma = self.rng.gen_range(-s_max..s_max);
                let d = ConeDirection::new(alpha, sigma);
                (d, symmetric_half_length(z, &d, rho, c))
            })
            .collect();
        // stable: ties keep draw order
        drawn.sort_by(|a, b| b.1.total_cmp(&a.1));
        fixed.extend(drawn.into_iter().filter(|d| d.1 > 0.0).map(|d| d.0));
        let mut scored: Vec<(ConeDirection, f64)> =
            fixed.into_iter().map(|d| (d, symmetric_half_length(z, &d, rho, c))).collect();
        let face = scored[0];
        scored[1..].sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut out = vec![face.0];
        for (d, len) in &scored[1..] {
            // (α + π, −σ) spans the same line as (α, σ)
            let same = |o: &ConeDirection| {
                let da = (o.alpha - d.alpha).rem_euclid(std::f64::consts::TAU);
                let near = |x: f64, y: f64| (x - y).abs() < 1e-9;
                ((near(da, 0.0) || near(da, std::f64::consts::TAU)) && near(o.sigma, d.sigma))
                    || (near(da, std::f64::consts::PI) && near(o.sigma, -d.sigma))
            };
            if *len > 0.0 && !out.iter().any(same) {
                out.push(*d);
            }
        }
        out.truncate(self.cfg.candidates.max(1));
        out
    }

    /// Builds a unit-weight wave centred on `cell` with half-width `radius`
    /// cells (scaled per axis to equal physical length).
    fn build_wave(&self, cell: [usize; 3], radius: usize, dir: ConeDirection, wavelength: f64, sign: f64, at_trace: bool) -> Option<WavePerturbation> {
        let g = &self.field.grid;
        let h = g.spacing();
        let hmin = h[1].min(h[2]);
        let dims = [g.nt as i64, g.nx as i64, g.ny as i64];
        let mut range = [[0i64; 2]; 3];
        let mut taper = [0i64; 3];
        for a in 0..3 {
            let r = ((radius as f64 * hmin / h[a]).round() as i64).max(1);
            let c = cell[a] as i64;
            let mut lo = c - r;
            let mut hi = c + r + 1;
            let tp = ((self.cfg.taper_wavelengths * wavelength / h[a]).round() as i64).max(1);
            if a == 0 {
                // time supports may leave [0, T]; near t = 0 the taper sits
                // below it so the trace lies on the plateau
                let shift = (-lo).max(0) - (hi - dims[0]).max(0);
                lo += shift;
                hi += shift;
                if lo <= 0 {
                    lo = -tp;
                }
                if hi >= dims[0] {
                    hi = dims[0] + tp;
                }
            } else {
                // slide the window inside the piece before clipping
                let shift = (-lo).max(0) - (hi - dims[a]).max(0);
                lo = (lo + shift).max(0);
                hi = (hi + shift).min(dims[a]);
            }
            if hi - lo < 2 * tp {
                return None;
            }
            range[a] = [lo, hi];
            taper[a] = tp;
        }
        let o = g.origin();
        // every ramp knot lands on a cell face, so the fields are polynomial
        // times trigonometric inside each cell
        let edges = [0, 1, 2].map(|a| {
            let tile = (self.cfg.tile_tapers * taper[a] as f64).ceil().max(1.0) as i64;
            let cells = range[a][1] - range[a][0];
            let n = (cells / tile).max(1);
            let offset = if taper[a] % 2 == 0 { 0.0 } else { 0.5 };
            (0..=n)
                .map(|j| {
                    let e = if j == 0 || j == n {
                        (range[a][0] + j * cells / n) as f64
                    } else {
                        range[a][0] as f64 + ((j * cells) as f64 / n as f64 - offset).round() + offset
                    };
                    o[a] + e * h[a]
                })
                .collect::<Vec<_>>()
        });
        let envelope = Envelope::from_edges(&edges, [0, 1, 2].map(|a| taper[a] as f64 * h[a]));
        let k = std::f64::consts::TAU / wavelength;
        let mut centre = g.center(cell[0], cell[1], cell[2]);
        if at_trace {
            centre[0] = 0.0;
        }
        let xi = dir.frequency();
        let target = sign * std::f64::consts::FRAC_PI_2;
        let phase = target - k * (xi[0] * centre[0] + xi[1] * centre[1] + xi[2] * centre[2]);
        let period_cells = (wavelength / hmin).min(if dir.sigma != 0.0 { wavelength / (dir.sigma.abs() * h[0]) } else { f64::INFINITY });
        Some(WavePerturbation {
            direction: dir,
            wavenumber: k,
            phase: phase.rem_euclid(std::f64::consts::TAU),
            profile: Profile::flattest(period_cells, self.cfg.cells_per_harmonic),
            amplitude: 1.0,
            support: CellBox { t: range[0], x: range[1], y: range[2] },
            envelope,
        })
    }

    /// Highest relaxed energy a single wave may bring `z` to.
    fn ceiling(&self, z: &SubsolutionState) -> f64 {
        let c = self.field.c;
        let e = relaxed_gap(z, self.field.rho).min(c);
        if c - e <= self.cfg.gap_tolerance * c {
            c
        } else {
            e + self.cfg.room_fraction * (c - e)
        }
    }

    /// Lowers each tile weight to the smallest exit amplitude over the cells
    /// and trace points its tile bump touches. The first pass uses the
    /// leading term at unit weights; later passes rescale by the exact
    /// increment at the current weights.
    fn fit_weights(&self, wave: &mut WavePerturbation, cells: &Parts, trace: &Parts, exact: bool) {
        let (rho, c) = (self.field.rho, self.field.c);
        let cap = 4.0 * (2.0 * rho * c).sqrt();
        let lead = wave.direction.increment();
        let w = &wave.envelope.weights;
        let limit = |parts: &Parts, states: &[SubsolutionState], j: usize| -> f64 {
            let d = if exact {
                parts.exact(j, w, 1.0)
            } else {
                SubsolutionState::ZERO.add_scaled(&lead, parts.leading(j, w))
            };
            if d.m[0] == 0.0 && d.m[1] == 0.0 && d.u[0] == 0.0 && d.u[1] == 0.0 {
                return if exact { f64::INFINITY } else { cap };
            }
            let z = &states[parts.index[j]];
            exit_scale(z, &d, rho, self.ceiling(z), if exact { 1.0 } else { cap })
        };
        let mut weights = vec![f64::INFINITY; w.len()];
        for (parts, states) in [(cells, &self.field.states), (trace, &self.field.trace)] {
            let limits: Vec<f64> = (0..parts.len()).into_par_iter().map(|j| limit(parts, states, j)).collect();
            for (j, lim) in limits.iter().enumerate() {
                for (t, _, _) in parts.of(j) {
                    let slot = &mut weights[*t as usize];
                    *slot = slot.min(*lim);
                }
            }
        }
        for (w, f) in wave.envelope.weights.iter_mut().zip(&weights) {
            *w = if exact { *w * f.min(1.0) } else { f.min(cap) };
        }
    }

    /// Fits the tile weights to the local room below `C`, then scales the
    /// whole wave down until every affected cell and trace point is admissible.
    fn evaluate_proposal(&self, mut wave: WavePerturbation, at_trace: bool) -> Option<Proposal> {
        let (rho, c) = (self.field.rho, self.field.c);
        wave.envelope.weights.iter_mut().for_each(|w| *w = 1.0);
        wave.amplitude = 1.0;
        let (cell_parts, trace_parts) = self.field.split(&wave);
        if cell_parts.len() == 0 {
            return None;
        }
        self.fit_weights(&mut wave, &cell_parts, &trace_parts, false);
        if wave.envelope.weights.iter().all(|w| *w <= 0.0) {
            return None;
        }
        for _ in 0..self.cfg.fit_passes {
            let before = wave.envelope.weights.clone();
            self.fit_weights(&mut wave, &cell_parts, &trace_parts, true);
            if wave.envelope.weights.iter().zip(&before).all(|(a, b)| *a >= 0.999 * b) {
                break;
            }
        }
        let cells = cell_parts.increments(&wave.envelope.weights, 1.0);
        let trace = trace_parts.increments(&wave.envelope.weights, 1.0);
        let states = &self.field.states;
        let traces = &self.field.trace;
        let fits = |z: &SubsolutionState, d: &SubsolutionState, a: f64| {
            relaxed_gap(&z.add_scaled(d, a), rho) <= self.ceiling(z)
        };
        let feasible = |a: f64| {
            cells.par_iter().all(|(i, d)| fits(&states[*i], d, a))
                && trace.iter().all(|(i, d)| fits(&traces[*i], d, a))
        };
        let amp = if feasible(1.0) {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..20 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if !(amp > 0.0) {
            return None;
        }
        let scaled = |v: Vec<(usize, SubsolutionState)>| -> Vec<(usize, SubsolutionState)> {
            v.into_iter().map(|(i, d)| (i, SubsolutionState::ZERO.add_scaled(&d, amp))).collect()
        };
        let (cells, trace) = (scaled(cells), scaled(trace));
        let change = |old: &[SubsolutionState], v: &[(usize, SubsolutionState)]| -> (f64, f64) {
            let per: Vec<(f64, f64)> = v
                .par_iter()
                .map(|(i, d)| {
                    let z0 = &old[*i];
                    let z1 = z0.add_scaled(d, 1.0);
                    (relaxed_gap(&z1, rho) - relaxed_gap(z0, rho), z1.kinetic_energy(rho) - z0.kinetic_energy(rho))
                })
                .collect();
            per.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
        };
        let vol = self.field.grid.cell_volume();
        let area = self.field.grid.dx() * self.field.grid.dy();
        let (de, dk) = change(states, &cells);
        let (te, tk) = change(traces, &trace);
        let available = if at_trace {
            trace.iter().map(|(i, _)| c - relaxed_gap(&traces[*i], rho)).sum::<f64>() * area
        } else {
            cells.iter().map(|(i, _)| c - relaxed_gap(&states[*i], rho)).sum::<f64>() * vol
        };
        wave.amplitude = amp;
        Some(Proposal {
            wave,
            cells,
            trace,
            bulk_gain: de * vol,
            kinetic_gain: dk * vol,
            trace_gain: te * area,
            trace_kinetic_gain: tk * area,
            available,
        })
    }

    fn attempt(&mut self, cell: [usize; 3], n: usize, phase: Phase, global: bool) -> Option<Proposal> {
        let g = self.field.grid;
        let z = match phase {
            Phase::Bulk => self.field.states[g.index(cell[0], cell[1], cell[2])],
            Phase::Trace => self.field.trace[cell[1] * g.ny + cell[2]],
        };
        let h = g.spacing();
        let hmin = h[1].min(h[2]);
        let lambda_min = self.cfg.min_wavelength_cells;
        let sign = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut best: Option<Proposal> = None;
        for dir in self.directions(&z) {
            let wavelength = self
                .wavelength_schedule(n.max(self.stage_start))
                .max(lambda_min * hmin)
                .max(lambda_min * h[0] * dir.sigma.abs());
            let lambda_cells = (wavelength / hmin).round().max(1.0) as usize;
            let min_radius = (self.cfg.taper_wavelengths * lambda_cells as f64).round().max(1.0) as usize;
            let mut radius = if global {
                g.nt.max(g.nx).max(g.ny)
            } else {
                (self.cfg.block_wavelengths * lambda_cells as f64).round().max(min_radius as f64) as usize
            };
            loop {
                if let Some(wave) = self.build_wave(cell, radius, dir, wavelength, sign, phase == Phase::Trace) {
                    if let Some(p) = self.evaluate_proposal(wave, phase == Phase::Trace) {
                        let better = best.as_ref().is_none_or(|b| p.score(phase) > b.score(phase));
                        if p.admissible(phase, self.cfg.min_efficiency) && better {
                            best = Some(p);
                        }
                    }
                }
                if global || radius <= min_radius {
                    break;
                }
                radius = (radius / 2).max(min_radius);
            }
        }
        best
    }
}

/// Runs convex integration on `Q` from the zero subsolution.
///
/// Each iteration picks the unfrozen cell with the largest gap `C − e`
/// (lowest linear index on ties), tries seeded cone directions and a shrinking
/// family of wave supports around it, and keeps the admissible wave with the
/// largest combined decrease of the deficit `∫∫ (C − e)` and the kinetic
/// deficit `∫∫ (C − ½|m|²/ρ)`. Cells where no wave is admissible are
/// frozen until a later wave touches them. Each wavelength stage starts with
/// waves spanning the whole grid; when none is admissible the stage advances
/// to the next wavelength early, and when every cell is frozen at the shortest
/// resolvable wavelength the run stops. A final phase works on the `t = 0`
/// trace.
pub fn iterate(grid: SpaceTimeGrid, rho: f64, c: f64, seed: u64, cfg: &EngineConfig) -> Result<IterationOutput> {
    let field = SubsolutionField::new(grid, rho, c, seed)?;
    let mut engine = Engine { field, cfg, rng: ChaCha8Rng::seed_from_u64(seed), stage_start: 0 };
    let mut diag = Diagnostics::default();
    let mut deficit = engine.field.deficit();
    let mut kinetic = engine.field.kinetic_deficit();
    diag.deficit_history.push(deficit);
    diag.kinetic_deficit_history.push(kinetic);
    let converged = cfg.gap_tolerance * c;
    let mut frozen = vec![false; grid.len()];
    let mut gaps: Vec<f64> = engine.field.states.iter().map(|z| c - relaxed_gap(z, rho)).collect();
    let mut global = true;
    let mut last_stage = 0;

    for n in 0..cfg.max_iter {
        if deficit <= cfg.target_deficit {
            break;
        }
        let worst = gaps
            .par_iter()
            .enumerate()
            .filter(|(i, g)| !frozen[*i] && **g > converged)
            .map(|(i, g)| (i, *g))
            .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        let Some((idx, _)) = worst else {
            if !gaps.iter().any(|g| *g > converged) {
                break;
            }
            if diag.accepted == 0 {
                return Err(Error::Stagnation { iterations: n, deficit, stalled: diag.rejected });
            }
            // every open cell is stuck at this wavelength: move to the next
            // stage, or stop at the grid resolution floor
            let current = engine.stage(n);
            let next = current * cfg.n0.max(1) + 1;
            if engine.wavelength_schedule(next) < engine.min_wavelength() || next > cfg.max_iter {
                break;
            }
            engine.stage_start = next;
            frozen.iter_mut().for_each(|f| *f = false);
            global = true;
            continue;
        };
        let (it, ix, iy) = grid.unravel(idx);
        diag.iterations += 1;
        let stage = engine.stage(n);
        if stage != last_stage {
            last_stage = stage;
            global = true;
        }
        let mut proposal = None;
        if global {
            proposal = engine.attempt([it, ix, iy], n, Phase::Bulk, true);
            global = proposal.is_some();
            if !global {
                // no global wave left at this wavelength: halve it before
                // falling back to local waves
                let next = engine.stage(n) * cfg.n0.max(1) + 1;
                if engine.wavelength_schedule(next) >= engine.min_wavelength() && next <= cfg.max_iter {
                    engine.stage_start = next;
                    last_stage = engine.stage(n);
                    global = true;
                    diag.deficit_history.push(deficit);
                    diag.kinetic_deficit_history.push(kinetic);
                    continue;
                }
            }
        }
        if proposal.is_none() {
            proposal = engine.attempt([it, ix, iy], n, Phase::Bulk, false);
        }
        match proposal {
            Some(p) => {
                for (i, _) in &p.cells {
                    frozen[*i] = false;
                }
                deficit -= p.bulk_gain;
                kinetic -= p.kinetic_gain;
                let touched: Vec<usize> = p.cells.iter().map(|(i, _)| *i).collect();
                engine.field.commit(p.wave, &p.cells, &p.trace);
                for i in touched {
                    gaps[i] = c - relaxed_gap(&engine.field.states[i], rho);
                }
                diag.accepted += 1;
            }
            None => {
                frozen[idx] = true;
                diag.rejected += 1;
            }
        }
        diag.deficit_history.push(deficit);
        diag.kinetic_deficit_history.push(kinetic);
    }

    let mut trace_frozen = vec![false; grid.nx * grid.ny];
    diag.trace_deficit_history.push(engine.field.trace_kinetic_deficit());
    for n in 0..cfg.trace_iter {
        let worst = engine
            .field
            .trace
            .iter()
            .enumerate()
            .filter(|(i, _)| !trace_frozen[*i])
            .map(|(i, z)| (i, c - relaxed_gap(z, rho)))
            .filter(|(_, g)| *g > converged)
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((idx, _)) = worst else { break };
        let cell = [0, idx / grid.ny, idx % grid.ny];
        match engine.attempt(cell, cfg.max_iter + n, Phase::Trace, false) {
            Some(p) => {
                for (i, _) in &p.trace {
                    trace_frozen[*i] = false;
                }
                deficit -= p.bulk_gain;
                kinetic -= p.kinetic_gain;
                engine.field.commit(p.wave, &p.cells, &p.trace);
                diag.trace_accepted += 1;
                diag.deficit_history.push(deficit);
                diag.kinetic_deficit_history.push(kinetic);
            }
            None => trace_frozen[idx] = true,
        }
        diag.trace_deficit_history.push(engine.field.trace_kinetic_deficit());
    }

    Ok(IterationOutput { field: engine.field, diagnostics: diag })
}

/// Convenience wrapper on a rectangle with an `nt × nx × ny` grid.
pub fn iterate_on(q: Rect, t_final: f64, dims: [usize; 3], rho: f64, c: f64, seed: u64, cfg: &EngineConfig) -> Result<IterationOutput> {
    let grid = SpaceTimeGrid::new(dims[0], dims[1], dims[2], q, t_final)?;
    iterate(grid, rho, c, seed, cfg)
}
