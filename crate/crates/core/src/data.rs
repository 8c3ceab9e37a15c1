//! Piecewise-constant data on rectangular partitions and the space-time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned open rectangle `(x0, x1) × (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0) || !(y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "degenerate rectangle ({x0}, {x1}) × ({y0}, {y1})"
            )));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn unit() -> Self {
        Self { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area of the intersection of the two open rectangles.
    pub fn overlap(&self, other: &Rect) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other.x0 >= self.x0 - tol
            && other.x1 <= self.x1 + tol
            && other.y0 >= self.y0 - tol
            && other.y1 <= self.y1 + tol
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }
}

/// One constant piece `(Qᵢ, ρᵢ, pᵢ, bᵢ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub rect: Rect,
    pub rho: f64,
    pub p: f64,
    pub b: f64,
}

impl Piece {
    /// `pᵢ + ½bᵢ²`, the total pressure of the piece.
    pub fn total_pressure(&self) -> f64 {
        self.p + 0.5 * self.b * self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantData {
    domain: Rect,
    pieces: Vec<Piece>,
    t_final: f64,
}

impl PiecewiseConstantData {
    /// Validates positivity, pairwise disjointness and that the closures of
    /// the pieces tile the closure of the domain.
    pub fn new(domain: Rect, pieces: Vec<Piece>, t_final: f64) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidData(format!("final time must be positive, got {t_final}")));
        }
        if pieces.is_empty() {
            return Err(Error::InvalidData("at least one piece is required".into()));
        }
        let tol = 1e-12 * domain.area().max(1.0);
        for (i, piece) in pieces.iter().enumerate() {
            if !(piece.rho > 0.0) || !(piece.p > 0.0) || !piece.rho.is_finite() || !piece.p.is_finite() {
                return Err(Error::InvalidData(format!(
                    "piece {}: density and pressure must be positive (vacuum excluded), got ρ = {}, p = {}",
                    i + 1,
                    piece.rho,
                    piece.p
                )));
            }
            if !piece.b.is_finite() {
                return Err(Error::InvalidData(format!("piece {}: magnetic field is not finite", i + 1)));
            }
            if !domain.contains_rect(&piece.rect, 1e-12) {
                return Err(Error::InvalidData(format!("piece {} leaves the domain", i + 1)));
            }
            for (j, other) in pieces.iter().enumerate().skip(i + 1) {
                if piece.rect.overlap(&other.rect) > tol {
                    return Err(Error::InvalidData(format!(
                        "pieces {} and {} overlap",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let covered: f64 = pieces.iter().map(|p| p.rect.area()).sum();
        if (covered - domain.area()).abs() > tol {
            return Err(Error::InvalidData(format!(
                "pieces cover area {covered}, domain has area {}",
                domain.area()
            )));
        }
        Ok(Self { domain, pieces, t_final })
    }

    /// Single constant state on the whole domain.
    pub fn uniform(domain: Rect, rho: f64, p: f64, b: f64, t_final: f64) -> Result<Self> {
        Self::new(domain, vec![Piece { rect: domain, rho, p, b }], t_final)
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Index of the piece whose closure contains `(x, y)`; ties on interfaces
    /// go to the lowest index.
    pub fn piece_at(&self, x: f64, y: f64) -> Option<usize> {
        self.pieces.iter().position(|p| {
            x >= p.rect.x0 && x <= p.rect.x1 && y >= p.rect.y0 && y <= p.rect.y1
        })
    }

    /// `max_i (pᵢ + ½bᵢ²)`.
    pub fn max_total_pressure(&self) -> f64 {
        self.pieces
            .iter()
            .map(Piece::total_pressure)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Cᵢ = Λ − pᵢ − ½bᵢ²`; every `Cᵢ` must be strictly positive.
pub fn compute_c_constants(data: &PiecewiseConstantData, lambda: f64) -> Result<Vec<f64>> {
    data.pieces()
        .iter()
        .enumerate()
        .map(|(i, piece)| {
            let required = piece.total_pressure();
            let c = lambda - required;
            if c > 0.0 && lambda.is_finite() {
                Ok(c)
            } else {
                Err(Error::InadmissibleLambda { piece: i, required, lambda })
            }
        })
        .collect()
}

/// Uniform cell-centred grid over `[0, T] × domain`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
    pub t_final: f64,
}

impl SpaceTimeGrid {
    pub fn new(nt: usize, nx: usize, ny: usize, domain: Rect, t_final: f64) -> Result<Self> {
        if nt == 0 || nx == 0 || ny == 0 {
            return Err(Error::InvalidData(format!("grid {nt}×{nx}×{ny} has an empty axis")));
        }
        if !(t_final > 0.0) {
            return Err(Error::InvalidData(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { nt, nx, ny, domain, t_final })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn dx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.dt(), self.dx(), self.dy()]
    }

    pub fn origin(&self) -> [f64; 3] {
        [0.0, self.domain.x0, self.domain.y0]
    }

    pub fn len(&self) -> usize {
        self.nt * self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.dx() * self.dy()
    }

    /// Linear index with `y` fastest.
    pub fn index(&self, it: usize, ix: usize, iy: usize) -> usize {
        (it * self.nx + ix) * self.ny + iy
    }

    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let iy = idx % self.ny;
        let rest = idx / self.ny;
        (rest / self.nx, rest % self.nx, iy)
    }

    pub fn center(&self, it: usize, ix: usize, iy: usize) -> [f64; 3] {
        [
            (it as f64 + 0.5) * self.dt(),
            self.domain.x0 + (ix as f64 + 0.5) * self.dx(),
            self.domain.y0 + (iy as f64 + 0.5) * self.dy(),
        ]
    }

    /// Integer offset of `value` on a grid line, if it lies on one.
    fn grid_line(origin: f64, step: f64, value: f64) -> Option<usize> {
        let k = ((value - origin) / step).round();
        let tol = 1e-9 * step;
        if k >= 0.0 && (origin + k * step - value).abs() <= tol {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Cell index range `[ix0, ix1) × [iy0, iy1)` covered by `rect`, which must
    /// lie on grid lines.
    pub fn aligned_cells(&self, rect: &Rect) -> Result<[usize; 4]> {
        let (dx, dy) = (self.dx(), self.dy());
        let lines = [
            Self::grid_line(self.domain.x0, dx, rect.x0),
            Self::grid_line(self.domain.x0, dx, rect.x1),
            Self::grid_line(self.domain.y0, dy, rect.y0),
            Self::grid_line(self.domain.y0, dy, rect.y1),
        ];
        match lines {
            [Some(a), Some(b), Some(c), Some(d)] if a < b && c < d && b <= self.nx && d <= self.ny => {
                Ok([a, b, c, d])
            }
            _ => Err(Error::InvalidData(format!(
                "rectangle ({}, {}) × ({}, {}) does not lie on grid lines of the {}×{} spatial grid",
                rect.x0, rect.x1, rect.y0, rect.y1, self.nx, self.ny
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn piece(x0: f64, x1: f64, p: f64, b: f64) -> Piece {
        Piece { rect: Rect::new(x0, x1, 0.0, 1.0).unwrap(), rho: 1.0, p, b }
    }

    #[test]
    fn c_constants_examples() {
        let d = PiecewiseConstantData::uniform(Rect::unit(), 1.0, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(compute_c_constants(&d, 4.0).unwrap(), vec![1.0]);
        let d = PiecewiseConstantData::uniform(Rect::unit(), 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(compute_c_constants(&d, 2.0).unwrap(), vec![1.0]);
        let d = PiecewiseConstantData::new(
            Rect::unit(),
            vec![piece(0.0, 0.5, 1.0, 0.0), piece(0.5, 1.0, 2.0, 1.0)],
            1.0,
        )
        .unwrap();
        let err = compute_c_constants(&d, 2.5).unwrap_err();
        assert!(matches!(err, Error::InadmissibleLambda { piece: 1, .. }));
        assert!(err.to_string().contains("piece 2 requires Λ > 2.5"), "{err}");
    }

    #[test]
    fn partition_validation() {
        let overlap = PiecewiseConstantData::new(
            Rect::unit(),
            vec![piece(0.0, 0.6, 1.0, 0.0), piece(0.5, 1.0, 1.0, 0.0)],
            1.0,
        );
        assert!(overlap.is_err());
        let gap = PiecewiseConstantData::new(
            Rect::unit(),
            vec![piece(0.0, 0.4, 1.0, 0.0), piece(0.5, 1.0, 1.0, 0.0)],
            1.0,
        );
        assert!(gap.is_err());
        let vacuum = PiecewiseConstantData::uniform(Rect::unit(), 0.0, 1.0, 0.0, 1.0);
        assert!(vacuum.is_err());
        assert!(PiecewiseConstantData::uniform(Rect::unit(), 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid_alignment() {
        let g = SpaceTimeGrid::new(4, 8, 8, Rect::unit(), 1.0).unwrap();
        assert_eq!(g.aligned_cells(&Rect::new(0.0, 0.5, 0.25, 1.0).unwrap()).unwrap(), [0, 4, 2, 8]);
        assert!(g.aligned_cells(&Rect::new(0.0, 0.3, 0.0, 1.0).unwrap()).is_err());
        let idx = g.index(3, 5, 7);
        assert_eq!(g.unravel(idx), (3, 5, 7));
    }

    proptest! {
        #[test]
        fn c_positive_iff_lambda_exceeds_total_pressure(p in 0.01f64..10.0, b in -5.0f64..5.0, lambda in -5.0f64..30.0) {
            let d = PiecewiseConstantData::uniform(Rect::unit(), 1.0, p, b, 1.0).unwrap();
            let admissible = lambda > p + 0.5 * b * b;
            match compute_c_constants(&d, lambda) {
                Ok(c) => { prop_assert!(admissible); prop_assert!(c[0] > 0.0); }
                Err(_) => prop_assert!(!admissible),
            }
        }
    }
}
