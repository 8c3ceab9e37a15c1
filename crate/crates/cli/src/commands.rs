use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use wildmhd::reduction::{manufactured, EquivalenceReport, MANUFACTURED_FAMILIES};
use wildmhd::verify::{distinctness, Closure, Quadrature, Tolerances};
use wildmhd::{
    build_solution, choose_lambda, isentropic_view, make_test_suite, residual_equivalence_check, verify, AssembledSolution,
    EquationOfState, Identity, ResidualReport, TestFunction,
};

use crate::artifacts;
use crate::config::{ConfigError, RunConfig};
use crate::CliError;

/// Identities checked by `verify`: the full system plus both forms of the
/// relaxed constraints.
pub const VERIFY_IDS: [Identity; 8] = [
    Identity::Weak1,
    Identity::Weak2,
    Identity::Weak3,
    Identity::Weak4,
    Identity::Conserving,
    Identity::Ci1,
    Identity::Ci2,
    Identity::Ci2Relaxed,
];

/// Largest allowed `|isen.conserving − weak3|` per test function.
pub const ISENTROPIC_MATCH_TOL: f64 = 1e-12;

/// Relative tolerance of the reduction check.
pub const REDUCTION_TOL: f64 = 1e-12;

fn lambda_of(cfg: &RunConfig) -> Result<f64> {
    choose_lambda(&cfg.data, cfg.margin).map_err(|e| {
        ConfigError { line: cfg.margin_line, message: e.to_string() }.into()
    })
}

fn say(quiet: bool, text: impl AsRef<str>) {
    if !quiet {
        println!("{}", text.as_ref());
    }
}

pub fn suite(cfg: &RunConfig) -> Result<Vec<TestFunction>> {
    Ok(make_test_suite(*cfg.data.domain(), cfg.data.t_final(), cfg.suite_seed, cfg.suite_size)?)
}

pub fn closure(cfg: &RunConfig) -> Result<Closure> {
    Ok(Closure::new(EquationOfState::ideal(cfg.gamma)?, cfg.law_exponent))
}

/// Builds the solution for `seed` without touching the disk.
pub fn construct(cfg: &RunConfig, seed: u64) -> Result<AssembledSolution> {
    let lambda = lambda_of(cfg)?;
    Ok(build_solution(&cfg.data, lambda, seed, &cfg.budget())?)
}

/// Reuses the artifacts in `dir` when they match `cfg` and `seed`, otherwise
/// builds and writes them.
pub fn obtain(cfg: &RunConfig, seed: u64, dir: &Path, quiet: bool) -> Result<AssembledSolution> {
    let lambda = lambda_of(cfg)?;
    if let Some(sol) = artifacts::load_matching(dir, &cfg.data, lambda, seed, &cfg.budget())? {
        say(quiet, format!("reusing artifacts in {}", dir.display()));
        return Ok(sol);
    }
    build(cfg, seed, dir, quiet)
}

pub fn build(cfg: &RunConfig, seed: u64, dir: &Path, quiet: bool) -> Result<AssembledSolution> {
    let sol = construct(cfg, seed)?;
    artifacts::write_build(dir, &sol, &cfg.budget(), cfg.gamma)?;
    if !quiet {
        println!("Λ = {}  seed = {}  grid = {:?}", sol.lambda, seed, cfg.dims);
        for (p, s) in sol.pieces.iter().zip(sol.subsolutions()) {
            let d = &p.diagnostics;
            println!(
                "piece {}: C = {}  waves = {}  deficit {:.6e} -> {:.6e}  kinetic cells within 10%: {:.1}%",
                p.index + 1,
                p.c,
                s.waves().len(),
                d.initial_deficit(),
                d.final_deficit(),
                100.0 * s.kinetic_fraction(0.1)
            );
        }
        println!("artifacts written to {}", dir.display());
    }
    Ok(sol)
}

pub fn verify_solution(cfg: &RunConfig, sol: &AssembledSolution, tolerances: &Tolerances) -> Result<ResidualReport> {
    Ok(verify(sol, &suite(cfg)?, &VERIFY_IDS, tolerances, &cfg.quadrature, &closure(cfg)?)?)
}

pub fn run_verify(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<ResidualReport> {
    let sol = obtain(cfg, cfg.seed, dir, quiet)?;
    let report = verify_solution(cfg, &sol, &cfg.tolerances)?;
    artifacts::write_report(dir, &report, "")?;
    say(quiet, format!("identity max mean tol pass\n{}", report.to_records().trim_end()));
    if !report.pass() {
        return Err(CliError::verification(format!("verification failed, see {}", dir.join(artifacts::REPORT_TXT).display())).into());
    }
    Ok(report)
}

pub fn reduction_reports(cfg: &RunConfig) -> Result<Vec<EquivalenceReport>> {
    let eos = EquationOfState::ideal(cfg.gamma)?;
    (0..MANUFACTURED_FAMILIES)
        .map(|k| {
            let fields = manufactured(k, cfg.grid())?;
            Ok(residual_equivalence_check(&fields, &eos)?)
        })
        .collect()
}

pub fn run_reduce_check(cfg: &RunConfig, dir: &Path, tol: f64, quiet: bool) -> Result<Vec<EquivalenceReport>> {
    let reports = reduction_reports(cfg)?;
    let mut text = String::from("family relative absolute div_b b_dot_u pass\n");
    for (k, r) in reports.iter().enumerate() {
        writeln!(text, "{k} {:.3e} {:.3e} {:e} {:e} {}", r.relative_discrepancy, r.absolute_discrepancy, r.div_b, r.b_dot_u, r.pass(tol))?;
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("reduction.txt"), &text)?;
    artifacts::write_json(&dir.join("reduction.json"), &reports)?;
    say(quiet, text.trim_end());
    if !reports.iter().all(|r| r.pass(tol)) {
        return Err(CliError::verification("the 2D and lifted 3D residuals disagree").into());
    }
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct IsentropicOutcome {
    pub report: ResidualReport,
    /// `max |isen.conserving − weak3|` over the suite.
    pub energy_mismatch: f64,
}

impl IsentropicOutcome {
    pub fn pass(&self) -> bool {
        self.report.pass() && self.energy_mismatch <= ISENTROPIC_MATCH_TOL
    }
}

pub fn isentropic_check(cfg: &RunConfig, sol: &AssembledSolution, tolerances: &Tolerances) -> Result<IsentropicOutcome> {
    let view = isentropic_view(sol, cfg.gamma, cfg.law_exponent)?;
    let mut ids = Identity::ISENTROPIC.to_vec();
    ids.push(Identity::Weak3);
    let report = verify(&view, &suite(cfg)?, &ids, tolerances, &cfg.quadrature, &view.closure())?;
    let a = &report.get(Identity::IsenConserving).expect("requested").per_test;
    let b = &report.get(Identity::Weak3).expect("requested").per_test;
    let energy_mismatch = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(IsentropicOutcome { report, energy_mismatch })
}

pub fn run_isentropic(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<IsentropicOutcome> {
    let sol = obtain(cfg, cfg.seed, dir, quiet)?;
    let out = isentropic_check(cfg, &sol, &cfg.tolerances)?;
    artifacts::write_report(dir, &out.report, "isentropic")?;
    say(quiet, format!("identity max mean tol pass\n{}", out.report.to_records().trim_end()));
    say(quiet, format!("max |isen.conserving - weak3| = {:.3e} (tol {:.0e})", out.energy_mismatch, ISENTROPIC_MATCH_TOL));
    if !out.pass() {
        return Err(CliError::verification("isentropic verification failed").into());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub passes: Vec<bool>,
    pub distances: Vec<Vec<f64>>,
}

impl Comparison {
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.seeds.len();
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| self.distances[i][j]).fold(f64::INFINITY, f64::min)
    }

    pub fn pass(&self) -> bool {
        self.passes.iter().all(|&p| p) && self.min_off_diagonal() > 0.0
    }
}

/// Checks the seed list: at least two seeds, all distinct.
pub fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.len() < 2 {
        return Err(CliError::usage(format!("compare needs at least two seeds, got {}", seeds.len())).into());
    }
    let distinct: BTreeSet<_> = seeds.iter().collect();
    if distinct.len() != seeds.len() {
        return Err(CliError::verification(format!("duplicate seeds in {seeds:?} give identical solutions")).into());
    }
    Ok(())
}

/// Quadrature of the L² distances; the norm needs no exactness.
pub const DISTANCE_QUADRATURE: Quadrature = Quadrature::Gauss { points: 2 };

/// Symmetric matrix of pairwise `‖uᵢ − uⱼ‖` in `L²((0, T) × Ω)`.
pub fn distances(sols: &[AssembledSolution]) -> Result<Vec<Vec<f64>>> {
    let n = sols.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            d[i][j] = distinctness(&sols[i], &sols[j], &DISTANCE_QUADRATURE)?;
            d[j][i] = d[i][j];
        }
    }
    Ok(d)
}

pub fn compare(cfg: &RunConfig, sols: &[AssembledSolution], seeds: &[u64]) -> Result<Comparison> {
    let mut passes = Vec::new();
    for sol in sols {
        passes.push(verify_solution(cfg, sol, &cfg.tolerances)?.pass());
    }
    Ok(Comparison { seeds: seeds.to_vec(), passes, distances: distances(sols)? })
}

pub fn run_compare(cfg: &RunConfig, seeds: &[u64], dir: &Path, quiet: bool) -> Result<Comparison> {
    check_seeds(seeds)?;
    let mut sols = Vec::new();
    for &s in seeds {
        sols.push(obtain(cfg, s, &dir.join(format!("seed-{s}")), true)?);
    }
    let cmp = compare(cfg, &sols, seeds)?;
    let mut w = csv::Writer::from_path(dir.join("compare.csv")).context("cannot write compare.csv")?;
    let mut header = vec!["seed".to_string(), "verified".to_string()];
    header.extend(seeds.iter().map(u64::to_string));
    w.write_record(&header)?;
    for (i, s) in seeds.iter().enumerate() {
        let mut row = vec![s.to_string(), cmp.passes[i].to_string()];
        row.extend(cmp.distances[i].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    if !quiet {
        println!("L2 distance of u between seeds");
        for (i, s) in seeds.iter().enumerate() {
            let row: Vec<String> = cmp.distances[i].iter().map(|d| format!("{d:.6e}")).collect();
            println!("{s:>6} [{}] {}", if cmp.passes[i] { "verified" } else { "failed" }, row.join(" "));
        }
    }
    if !cmp.pass() {
        return Err(CliError::verification("not every seed verified with distinct velocities").into());
    }
    Ok(cmp)
}
