//! On-disk artifacts of a build: CSV snapshots, deficit history, provenance
//! and the wave lists that reproduce the solution exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wildmhd::assembly::{assemble, Budget, PieceProvenance};
use wildmhd::convint::{SubsolutionField, WavePerturbation};
use wildmhd::verify::ResidualReport;
use wildmhd::{AssembledSolution, PiecewiseConstantData, SpaceTimeGrid};

pub const FIELDS: &str = "fields.csv";
pub const INITIAL: &str = "initial.csv";
pub const DEFICIT: &str = "deficit.csv";
pub const PROVENANCE: &str = "provenance.json";
pub const SOLUTION: &str = "solution.json";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct StoredPiece {
    pub provenance: PieceProvenance,
    pub waves: Vec<WavePerturbation>,
}

/// Everything needed to rebuild an [`AssembledSolution`] bit for bit.
#[derive(Debug, Serialize, Deserialize)]
pub struct StoredSolution {
    pub lambda: f64,
    pub master_seed: u64,
    pub budget: Budget,
    pub pieces: Vec<StoredPiece>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PieceSummary {
    pub index: usize,
    pub c: f64,
    pub seed: u64,
    pub cells: [usize; 4],
    pub waves: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub trace_accepted: usize,
    pub initial_deficit: f64,
    pub final_deficit: f64,
    pub kinetic_fraction_10: f64,
    pub trace_kinetic_fraction_10: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub lambda: f64,
    pub c: Vec<f64>,
    pub gamma: f64,
    pub dims: [usize; 3],
    pub pieces: Vec<PieceSummary>,
}

fn grid_header(g: &SpaceTimeGrid) -> String {
    format!(
        "# grid nt={} nx={} ny={} x0={} x1={} y0={} y1={} t_final={}\n",
        g.nt, g.nx, g.ny, g.domain.x0, g.domain.x1, g.domain.y0, g.domain.y1, g.t_final
    )
}

fn csv_file(path: &Path, meta: &str) -> Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(meta.as_bytes())?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_fields(dir: &Path, sol: &AssembledSolution) -> Result<()> {
    let f = &sol.fields;
    let g = &f.grid;
    let mut w = csv_file(&dir.join(FIELDS), &grid_header(g))?;
    w.write_record(["t", "x", "y", "rho", "p", "u", "v", "b"])?;
    for i in 0..g.len() {
        let (it, ix, iy) = g.unravel(i);
        let [t, x, y] = g.center(it, ix, iy);
        let row = [t, x, y, f.rho[i], f.p[i], f.u[i][0], f.u[i][1], f.b[i]];
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;

    let mut w = csv_file(&dir.join(INITIAL), &grid_header(g))?;
    w.write_record(["x", "y", "u0", "v0"])?;
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let [_, x, y] = g.center(0, ix, iy);
            let u = sol.initial_velocity[ix * g.ny + iy];
            w.write_record([x, y, u[0], u[1]].iter().map(f64::to_string))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_deficit(dir: &Path, sol: &AssembledSolution) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(DEFICIT))?;
    w.write_record(["piece", "iteration", "deficit", "kinetic_deficit"])?;
    for p in &sol.pieces {
        let d = &p.diagnostics;
        for (n, (a, b)) in d.deficit_history.iter().zip(&d.kinetic_deficit_history).enumerate() {
            w.write_record([(p.index + 1).to_string(), n.to_string(), a.to_string(), b.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn provenance(sol: &AssembledSolution, gamma: f64) -> Provenance {
    let g = sol.grid();
    Provenance {
        seed: sol.master_seed,
        lambda: sol.lambda,
        c: sol.c.clone(),
        gamma,
        dims: [g.nt, g.nx, g.ny],
        pieces: sol
            .pieces
            .iter()
            .zip(sol.subsolutions())
            .map(|(p, s)| PieceSummary {
                index: p.index + 1,
                c: p.c,
                seed: p.seed,
                cells: p.cells,
                waves: s.waves().len(),
                accepted: p.diagnostics.accepted,
                rejected: p.diagnostics.rejected,
                trace_accepted: p.diagnostics.trace_accepted,
                initial_deficit: p.diagnostics.initial_deficit(),
                final_deficit: p.diagnostics.final_deficit(),
                kinetic_fraction_10: s.kinetic_fraction(0.1),
                trace_kinetic_fraction_10: s.trace_kinetic_fraction(0.1),
            })
            .collect(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("missing artifact {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("corrupt artifact {}", path.display()))
}

/// Writes every build artifact into `dir`.
pub fn write_build(dir: &Path, sol: &AssembledSolution, budget: &Budget, gamma: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_fields(dir, sol)?;
    write_deficit(dir, sol)?;
    write_json(&dir.join(PROVENANCE), &provenance(sol, gamma))?;
    let stored = StoredSolution {
        lambda: sol.lambda,
        master_seed: sol.master_seed,
        budget: budget.clone(),
        pieces: sol
            .pieces
            .iter()
            .zip(sol.subsolutions())
            .map(|(p, s)| StoredPiece { provenance: p.clone(), waves: s.waves().to_vec() })
            .collect(),
    };
    write_json(&dir.join(SOLUTION), &stored)?;
    Ok([FIELDS, INITIAL, DEFICIT, PROVENANCE, SOLUTION].iter().map(|f| dir.join(f)).collect())
}

/// Rebuilds the solution stored in `dir`, or `None` when there is none or it
/// was built from another seed, `Λ` or budget.
pub fn load_matching(
    dir: &Path,
    data: &PiecewiseConstantData,
    lambda: f64,
    seed: u64,
    budget: &Budget,
) -> Result<Option<AssembledSolution>> {
    let path = dir.join(SOLUTION);
    if !path.exists() {
        return Ok(None);
    }
    let stored: StoredSolution = read_json(&path)?;
    if stored.lambda != lambda || stored.master_seed != seed || &stored.budget != budget {
        return Ok(None);
    }
    if stored.pieces.len() != data.pieces().len() {
        bail!("{} holds {} pieces, the config has {}", path.display(), stored.pieces.len(), data.pieces().len());
    }
    let nt = budget.dims[0];
    let mut parts = Vec::with_capacity(stored.pieces.len());
    for (piece, sp) in data.pieces().iter().zip(stored.pieces) {
        let cells = sp.provenance.cells;
        let sub = SpaceTimeGrid::new(nt, cells[1] - cells[0], cells[3] - cells[2], piece.rect, data.t_final())?;
        let field = SubsolutionField::from_waves(sub, piece.rho, sp.provenance.c, sp.provenance.seed, sp.waves)
            .with_context(|| format!("corrupt wave list for piece {}", sp.provenance.index + 1))?;
        parts.push((sp.provenance, field));
    }
    Ok(Some(assemble(data, lambda, seed, budget.dims, parts)?))
}

pub fn write_report(dir: &Path, report: &ResidualReport, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let txt = if stem.is_empty() { REPORT_TXT.to_string() } else { format!("{stem}.txt") };
    let json = if stem.is_empty() { REPORT_JSON.to_string() } else { format!("{stem}.json") };
    fs::write(dir.join(txt), report.to_records())?;
    write_json(&dir.join(json), report)
}
