//! TOML run configuration with line-numbered validation errors.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;
use wildmhd::assembly::Budget;
use wildmhd::convint::EngineConfig;
use wildmhd::verify::{Quadrature, Tolerances};
use wildmhd::{Identity, Piece, PiecewiseConstantData, Rect, SpaceTimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    x: [f64; 2],
    y: [f64; 2],
    t_final: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nt: usize,
    nx: usize,
    ny: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    rect: [f64; 4],
    rho: f64,
    p: f64,
    b: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    gamma: Option<Spanned<f64>>,
    margin: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    max_iter: Option<usize>,
    trace_iter: Option<usize>,
    target_deficit: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    tolerance: Option<Spanned<f64>>,
    suite_size: Option<Spanned<usize>>,
    suite_seed: Option<u64>,
    gauss_points: Option<Spanned<usize>>,
    #[serde(default)]
    overrides: BTreeMap<String, Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIsentropic {
    law_exponent: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: Spanned<RawDomain>,
    grid: Spanned<RawGrid>,
    pieces: Spanned<Vec<Spanned<RawPiece>>>,
    #[serde(default)]
    physics: RawPhysics,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    compare: RawCompare,
    #[serde(default)]
    isentropic: RawIsentropic,
    #[serde(default)]
    output: RawOutput,
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PiecewiseConstantData,
    pub dims: [usize; 3],
    pub gamma: f64,
    pub margin: f64,
    pub seed: u64,
    pub engine: EngineConfig,
    pub tolerances: Tolerances,
    pub suite_size: usize,
    pub suite_seed: u64,
    pub quadrature: Quadrature,
    pub compare_seeds: Vec<u64>,
    pub law_exponent: f64,
    pub out_dir: PathBuf,
    /// Line of the `margin` key, for admissibility errors raised later.
    pub margin_line: Option<usize>,
}

impl RunConfig {
    pub fn budget(&self) -> Budget {
        Budget { dims: self.dims, engine: self.engine }
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        SpaceTimeGrid::new(self.dims[0], self.dims[1], self.dims[2], *self.data.domain(), self.data.t_final())
            .expect("validated grid")
    }
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(text, s)),
        message: e.message().to_string(),
    })?;
    let at = |span: Range<usize>, message: String| ConfigError { line: Some(line_of(text, span)), message };

    let d = raw.domain.get_ref();
    let domain = Rect::new(d.x[0], d.x[1], d.y[0], d.y[1]).map_err(|e| at(raw.domain.span(), e.to_string()))?;
    if !(d.t_final > 0.0) || !d.t_final.is_finite() {
        return Err(at(raw.domain.span(), format!("t_final must be positive, got {}", d.t_final)));
    }

    let g = raw.grid.get_ref();
    let dims = [g.nt, g.nx, g.ny];
    let grid = SpaceTimeGrid::new(g.nt, g.nx, g.ny, domain, d.t_final).map_err(|e| at(raw.grid.span(), e.to_string()))?;

    if raw.pieces.get_ref().is_empty() {
        return Err(at(raw.pieces.span(), "at least one piece is required".into()));
    }
    let mut pieces = Vec::new();
    for sp in raw.pieces.get_ref() {
        let p = sp.get_ref();
        let rect = Rect::new(p.rect[0], p.rect[1], p.rect[2], p.rect[3]).map_err(|e| at(sp.span(), e.to_string()))?;
        if !(p.rho > 0.0) || !(p.p > 0.0) || !p.b.is_finite() {
            return Err(at(sp.span(), format!("piece needs ρ > 0, p > 0 and finite b (got ρ = {}, p = {}, b = {})", p.rho, p.p, p.b)));
        }
        grid.aligned_cells(&rect).map_err(|e| at(sp.span(), e.to_string()))?;
        pieces.push(Piece { rect, rho: p.rho, p: p.p, b: p.b });
    }
    let data = PiecewiseConstantData::new(domain, pieces, d.t_final).map_err(|e| at(raw.pieces.span(), e.to_string()))?;

    let (gamma, gamma_line) = spanned_or(&raw.physics.gamma, 2.0, text);
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(ConfigError { line: gamma_line, message: format!("gamma must exceed 1, got {gamma}") });
    }
    let (margin, margin_line) = spanned_or(&raw.physics.margin, wildmhd::assembly::DEFAULT_MARGIN, text);
    if !margin.is_finite() {
        return Err(ConfigError { line: margin_line, message: format!("margin must be finite, got {margin}") });
    }

    let defaults = EngineConfig::default();
    let (target, target_line) = spanned_or(&raw.run.target_deficit, 0.0, text);
    if !(target >= 0.0) {
        return Err(ConfigError { line: target_line, message: format!("target_deficit must be non-negative, got {target}") });
    }
    let engine = EngineConfig {
        max_iter: raw.run.max_iter.unwrap_or(defaults.max_iter),
        trace_iter: raw.run.trace_iter.unwrap_or(defaults.trace_iter),
        target_deficit: target,
        ..defaults
    };

    let (tol, tol_line) = spanned_or(&raw.verify.tolerance, wildmhd::verify::DEFAULT_TOLERANCE, text);
    if !(tol >= 0.0) {
        return Err(ConfigError { line: tol_line, message: format!("tolerance must be non-negative, got {tol}") });
    }
    let mut tolerances = Tolerances::uniform(tol);
    for (key, value) in &raw.verify.overrides {
        let id: Identity = key.parse().map_err(|e: wildmhd::Error| at(value.span(), e.to_string()))?;
        if !(*value.get_ref() >= 0.0) {
            return Err(at(value.span(), format!("tolerance for {key} must be non-negative")));
        }
        tolerances.overrides.insert(id, *value.get_ref());
    }
    let (suite_size, suite_line) = spanned_or(&raw.verify.suite_size, 20, text);
    if suite_size == 0 {
        return Err(ConfigError { line: suite_line, message: "suite_size must be at least 1".into() });
    }
    let (points, points_line) = spanned_or(&raw.verify.gauss_points, 6, text);
    let quadrature = Quadrature::Gauss { points };
    quadrature.validate().map_err(|e| ConfigError { line: points_line, message: e.to_string() })?;

    let (law_exponent, law_line) = spanned_or(&raw.isentropic.law_exponent, gamma, text);
    if !(law_exponent > 1.0) {
        return Err(ConfigError { line: law_line, message: format!("law_exponent must exceed 1, got {law_exponent}") });
    }

    Ok(RunConfig {
        data,
        dims,
        gamma,
        margin,
        seed: raw.run.seed.unwrap_or(7),
        engine,
        tolerances,
        suite_size,
        suite_seed: raw.verify.suite_seed.unwrap_or(2024),
        quadrature,
        compare_seeds: raw.compare.seeds.unwrap_or_else(|| vec![7, 8, 9]),
        law_exponent,
        out_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        margin_line,
    })
}

fn spanned_or<T: Copy>(v: &Option<Spanned<T>>, default: T, text: &str) -> (T, Option<usize>) {
    match v {
        Some(s) => (*s.get_ref(), Some(line_of(text, s.span()))),
        None => (default, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[domain]
x = [0.0, 1.0]
y = [0.0, 1.0]
t_final = 1.0

[grid]
nt = 8
nx = 8
ny = 8

[[pieces]]
rect = [0.0, 0.5, 0.0, 1.0]
rho = 1.0
p = 1.0
b = 2.0

[[pieces]]
rect = [0.5, 1.0, 0.0, 1.0]
rho = 1.0
p = 2.0
b = 1.0
"#;

    #[test]
    fn parses_with_defaults() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.dims, [8, 8, 8]);
        assert_eq!(c.data.pieces().len(), 2);
        assert_eq!(c.margin, 1.0);
        assert_eq!(c.compare_seeds, vec![7, 8, 9]);
        assert_eq!(c.law_exponent, 2.0);
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let bad = BASE.replace("nx = 8", "nx = eight");
        let e = parse(&bad).unwrap_err();
        assert_eq!(e.line, Some(9), "{e}");
    }

    #[test]
    fn misaligned_piece_points_at_the_piece() {
        let bad = BASE.replace("[0.0, 0.5, 0.0, 1.0]", "[0.0, 0.3, 0.0, 1.0]").replace("[0.5, 1.0, 0.0, 1.0]", "[0.3, 1.0, 0.0, 1.0]");
        let e = parse(&bad).unwrap_err();
        assert!(e.line.is_some_and(|l| (12..=16).contains(&l)), "{e}");
    }

    #[test]
    fn unknown_identity_override_is_rejected() {
        let text = format!("{BASE}\n[verify]\noverrides = {{ weak9 = 1e-3 }}\n");
        let e = parse(&text).unwrap_err();
        assert!(e.message.contains("weak9"), "{e}");
        assert!(e.line.is_some());
    }

    #[test]
    fn margin_line_is_recorded() {
        let text = format!("{BASE}\n[physics]\nmargin = 0.0\n");
        let c = parse(&text).unwrap();
        assert_eq!(c.margin_line, Some(25));
    }
}
