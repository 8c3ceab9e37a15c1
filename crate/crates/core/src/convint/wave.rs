//! Localized plane waves generated by a compactly supported potential.
//!
//! For a scalar potential `χ(t, x, y)` the fields
//!
//! ```text
//! m   = (∂y Δχ, −∂x Δχ)
//! Uxx = −2 ∂t∂x∂y χ
//! Uxy = ∂t (∂xx − ∂yy) χ
//! ```
//!
//! satisfy `div m = 0` and `∂t m + div U = 0` identically. Choosing
//! `χ = A β(t, x, y) G(θ) / k³` with `θ = k ξ·(t, x, y) + θ₀` and `G''' = h`
//! gives the leading term `A β h(θ) ž` along the cone direction of `ξ`.

use serde::{Deserialize, Serialize};

use super::relaxed::{ConeDirection, SubsolutionState};

/// Plateau bump: 1 on `[lo + taper, hi − taper]`, a C³ septic ramp on each
/// side, 0 outside `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump1D {
    pub lo: f64,
    pub hi: f64,
    pub taper: f64,
}

fn ramp(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u3 * u;
    [
        u4 * (35.0 - 84.0 * u + 70.0 * u2 - 20.0 * u3),
        140.0 * u3 - 420.0 * u4 + 420.0 * u4 * u - 140.0 * u3 * u3,
        420.0 * u2 - 1680.0 * u3 + 2100.0 * u4 - 840.0 * u4 * u,
        840.0 * u - 5040.0 * u2 + 8400.0 * u3 - 4200.0 * u4,
    ]
}

impl Bump1D {
    pub fn new(lo: f64, hi: f64, taper: f64) -> Self {
        debug_assert!(hi - lo >= 2.0 * taper * (1.0 - 1e-12) && taper > 0.0);
        Self { lo, hi, taper }
    }

    /// Value and first three derivatives at `s`.
    pub fn jet(&self, s: f64) -> [f64; 4] {
        if s <= self.lo || s >= self.hi {
            return [0.0; 4];
        }
        let left = (s - self.lo) / self.taper;
        let right = (self.hi - s) / self.taper;
        if left < 1.0 {
            let r = ramp(left);
            let inv = 1.0 / self.taper;
            [r[0], r[1] * inv, r[2] * inv * inv, r[3] * inv * inv * inv]
        } else if right < 1.0 {
            let r = ramp(right);
            let inv = -1.0 / self.taper;
            [r[0], r[1] * inv, r[2] * inv * inv, r[3] * inv * inv * inv]
        } else {
            [1.0, 0.0, 0.0, 0.0]
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        s > self.lo && s < self.hi
    }
}

/// Oscillation profile `h` (zero mean, `max |h| = 1`) and its third
/// antiderivative `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Sine,
    /// `h' ∝ cos^(2n+1) θ`, flat at the extrema: more of each period sits near
    /// the segment endpoints as `n` grows. Harmonics up to `2n + 1`.
    Flat(u8),
}

impl Profile {
    fn order(&self) -> usize {
        match self {
            Profile::Sine => 0,
            Profile::Flat(n) => *n as usize,
        }
    }

    /// `(q, b_q)` with `h = Σ b_q sin qθ`, highest harmonic first.
    fn harmonics(&self) -> impl Iterator<Item = (f64, f64)> {
        let n = self.order();
        let top = 2 * n + 1;
        let mut coeffs = [(0.0, 0.0); 32];
        let mut binom = 1.0;
        let mut peak = 0.0;
        for (j, slot) in coeffs.iter_mut().enumerate().take(n + 1) {
            let q = top - 2 * j;
            let b = binom / q as f64;
            // sin(qπ/2)
            peak += if (q / 2).is_multiple_of(2) { b } else { -b };
            *slot = (q as f64, b);
            binom = binom * (top - j) as f64 / (j + 1) as f64;
        }
        coeffs.into_iter().take(n + 1).map(move |(q, b)| (q, b / peak))
    }

    pub fn value(&self, theta: f64) -> f64 {
        self.harmonics().map(|(q, b)| b * (q * theta).sin()).sum()
    }

    /// `[G, G', G'', G''']` at `θ`.
    pub fn potential_jet(&self, theta: f64) -> [f64; 4] {
        let mut g = [0.0; 4];
        for (q, b) in self.harmonics() {
            let (s, c) = (q * theta).sin_cos();
            g[0] += b * c / (q * q * q);
            g[1] -= b * s / (q * q);
            g[2] -= b * c / q;
            g[3] += b * s;
        }
        g
    }

    /// Highest harmonic present.
    pub fn harmonic(&self) -> f64 {
        (2 * self.order() + 1) as f64
    }

    /// Flattest profile whose top harmonic keeps at least `cells_per_period`
    /// cells per period on a wave `wavelength_cells` long.
    pub fn flattest(wavelength_cells: f64, cells_per_period: f64) -> Self {
        let n = ((wavelength_cells / cells_per_period - 1.0) / 2.0).floor();
        if n < 1.0 {
            Profile::Sine
        } else {
            Profile::Flat(n.min(31.0) as u8)
        }
    }
}

/// Cell-index box `[t0, t1) × [x0, x1) × [y0, y1)` of a wave support; the time
/// range may extend past `[0, Nt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub t: [i64; 2],
    pub x: [i64; 2],
    pub y: [i64; 2],
}

impl CellBox {
    pub fn contains(&self, other: &CellBox) -> bool {
        other.t[0] >= self.t[0]
            && other.t[1] <= self.t[1]
            && other.x[0] >= self.x[0]
            && other.x[1] <= self.x[1]
            && other.y[0] >= self.y[0]
            && other.y[1] <= self.y[1]
    }

    pub fn disjoint(&self, other: &CellBox) -> bool {
        let sep = |a: [i64; 2], b: [i64; 2]| a[1] <= b[0] || b[1] <= a[0];
        sep(self.t, other.t) || sep(self.x, other.x) || sep(self.y, other.y)
    }
}

/// Space-time envelope `β = Σ w_ijl φ_i(t) ψ_j(x) χ_l(y)` built from tapered
/// tile bumps. Adjacent tiles overlap on their tapers and sum to one there, so
/// a single weight reproduces a plain plateau bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub axes: [Vec<Bump1D>; 3],
    pub weights: Vec<f64>,
}

impl Envelope {
    pub fn single(bumps: [Bump1D; 3]) -> Self {
        Self { axes: bumps.map(|b| vec![b]), weights: vec![1.0] }
    }

    /// `n[a]` tiles per axis on `[lo[a], hi[a]]` with taper `taper[a]`, all
    /// weights one.
    pub fn tiled(lo: [f64; 3], hi: [f64; 3], taper: [f64; 3], n: [usize; 3]) -> Self {
        let edges = [0, 1, 2].map(|a| {
            let w = (hi[a] - lo[a]) / n[a] as f64;
            (0..=n[a]).map(|j| if j == n[a] { hi[a] } else { lo[a] + j as f64 * w }).collect::<Vec<_>>()
        });
        Self::from_edges(&edges, taper)
    }

    /// Tiles between consecutive `edges[a]`; neighbouring tiles overlap on a
    /// ramp of length `taper[a]` centred on their common edge.
    pub fn from_edges(edges: &[Vec<f64>; 3], taper: [f64; 3]) -> Self {
        let axes = [0, 1, 2].map(|a| {
            let e = &edges[a];
            let n = e.len() - 1;
            let tau = taper[a];
            (0..n)
                .map(|j| {
                    let l = if j == 0 { e[0] } else { e[j] - 0.5 * tau };
                    let h = if j + 1 == n { e[n] } else { e[j + 1] + 0.5 * tau };
                    Bump1D::new(l, h, tau)
                })
                .collect::<Vec<_>>()
        });
        let count = edges.iter().map(|e| e.len() - 1).product();
        Self { axes, weights: vec![1.0; count] }
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn weight_index(&self, i: usize, j: usize, l: usize) -> usize {
        let n = self.counts();
        (i * n[1] + j) * n[2] + l
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.axes[axis].first().map_or(0.0, |b| b.lo)
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.axes[axis].last().map_or(0.0, |b| b.hi)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] > self.lower(a) && p[a] < self.upper(a))
    }

    fn active(&self, axis: usize, s: f64) -> ([(usize, [f64; 4]); 2], usize) {
        let mut out = [(0, [0.0; 4]); 2];
        let mut n = 0;
        for (j, b) in self.axes[axis].iter().enumerate() {
            if b.contains(s) {
                if n == 2 {
                    break;
                }
                out[n] = (j, b.jet(s));
                n += 1;
            } else if b.lo >= s {
                break;
            }
        }
        (out, n)
    }

    /// Mixed partials `d[a][b][c] = ∂t^a ∂x^b ∂y^c β` for `a + b + c ≤ 3`.
    pub fn derivatives(&self, p: [f64; 3]) -> [[[f64; 4]; 4]; 4] {
        let mut d = [[[0.0; 4]; 4]; 4];
        let (ts, nt) = self.active(0, p[0]);
        let (xs, nx) = self.active(1, p[1]);
        let (ys, ny) = self.active(2, p[2]);
        for (i, jt) in &ts[..nt] {
            for (j, jx) in &xs[..nx] {
                for (l, jy) in &ys[..ny] {
                    let w = self.weights[self.weight_index(*i, *j, *l)];
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..4 {
                        for b in 0..4 - a {
                            for c in 0..4 - a - b {
                                d[a][b][c] += w * jt[a] * jx[b] * jy[c];
                            }
                        }
                    }
                }
            }
        }
        d
    }

    pub fn value(&self, p: [f64; 3]) -> f64 {
        self.derivatives(p)[0][0][0]
    }
}

/// One potential-generated localized wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePerturbation {
    pub direction: ConeDirection,
    /// Angular wavenumber `k` (radians per unit length along `ξ`).
    pub wavenumber: f64,
    pub phase: f64,
    pub profile: Profile,
    pub amplitude: f64,
    pub support: CellBox,
    pub envelope: Envelope,
}

impl WavePerturbation {
    pub fn theta(&self, p: [f64; 3]) -> f64 {
        let xi = self.direction.frequency();
        self.wavenumber * (xi[0] * p[0] + xi[1] * p[1] + xi[2] * p[2]) + self.phase
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.envelope.contains(p)
    }

    /// Leading-order increment `A β h(θ) ž`, without the envelope-derivative
    /// corrections.
    pub fn leading(&self, p: [f64; 3]) -> SubsolutionState {
        if !self.contains(p) {
            return SubsolutionState::ZERO;
        }
        let s = self.amplitude * self.envelope.value(p) * self.profile.value(self.theta(p));
        SubsolutionState::ZERO.add_scaled(&self.direction.increment(), s)
    }

    /// Exact increment of `(m, U)` at `p`.
    pub fn evaluate(&self, p: [f64; 3]) -> SubsolutionState {
        if self.amplitude == 0.0 || !self.contains(p) {
            return SubsolutionState::ZERO;
        }
        let d = self.jets(p).increment(&self.envelope.derivatives(p));
        SubsolutionState::ZERO.add_scaled(&d, self.amplitude)
    }

    /// Per-tile parts at `p` with unit weight and amplitude: the weight
    /// index, the leading scalar `β_tile h(θ)` and the exact increment.
    /// `evaluate` is `A Σ w · exact` over these.
    pub fn tile_parts(&self, p: [f64; 3], out: &mut Vec<(u32, f64, SubsolutionState)>) {
        if !self.contains(p) {
            return;
        }
        let env = &self.envelope;
        let (ts, nt) = env.active(0, p[0]);
        let (xs, nx) = env.active(1, p[1]);
        let (ys, ny) = env.active(2, p[2]);
        let jets = self.jets(p);
        for (i, jt) in &ts[..nt] {
            for (j, jx) in &xs[..nx] {
                for (l, jy) in &ys[..ny] {
                    let idx = env.weight_index(*i, *j, *l) as u32;
                    let flat = |v: &[f64; 4]| v[1] == 0.0 && v[2] == 0.0 && v[3] == 0.0;
                    if flat(jt) && flat(jx) && flat(jy) {
                        let v = jt[0] * jx[0] * jy[0];
                        out.push((idx, v * jets.g[3], jets.plateau(v)));
                        continue;
                    }
                    let mut d = [[[0.0; 4]; 4]; 4];
                    for a in 0..4 {
                        for b in 0..4 - a {
                            for c in 0..4 - a - b {
                                d[a][b][c] = jt[a] * jx[b] * jy[c];
                            }
                        }
                    }
                    out.push((idx, d[0][0][0] * jets.g[3], jets.increment(&d)));
                }
            }
        }
    }

    fn jets(&self, p: [f64; 3]) -> PhaseJets {
        let xi = self.direction.frequency();
        let theta = self.wavenumber * (xi[0] * p[0] + xi[1] * p[1] + xi[2] * p[2]) + self.phase;
        let g = self.profile.potential_jet(theta);
        let inv_k = 1.0 / self.wavenumber;
        let powers = |v: f64| [1.0, v, v * v, v * v * v];
        PhaseJets {
            g,
            // k^(j-3) G^(j)
            scaled: [g[0] * inv_k * inv_k * inv_k, g[1] * inv_k * inv_k, g[2] * inv_k, g[3]],
            xi: [powers(xi[0]), powers(xi[1]), powers(xi[2])],
        }
    }
}

/// Phase-dependent factors of a wave at one point.
struct PhaseJets {
    g: [f64; 4],
    scaled: [f64; 4],
    xi: [[f64; 4]; 3],
}

const BINOM: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];

impl PhaseJets {
    /// Increment where the envelope is the constant `v`.
    fn plateau(&self, v: f64) -> SubsolutionState {
        let [pt, px, py] = &self.xi;
        let g = v * self.scaled[3];
        SubsolutionState {
            m: [g * (px[2] * py[1] + py[3]), -g * (px[3] + px[1] * py[2])],
            u: [-2.0 * g * pt[1] * px[1] * py[1], g * pt[1] * (px[2] - py[2])],
        }
    }

    /// Unit-amplitude increment for envelope partials `db`.
    fn increment(&self, db: &[[[f64; 4]; 4]; 4]) -> SubsolutionState {
        let [pt, px, py] = &self.xi;
        // ∂t^a ∂x^b ∂y^c of β·G(θ)/k³
        let partial = |a: usize, b: usize, c: usize| -> f64 {
            let mut sum = 0.0;
            for i in 0..=a {
                for j in 0..=b {
                    for l in 0..=c {
                        let d = db[i][j][l];
                        if d == 0.0 {
                            continue;
                        }
                        let (ra, rb, rc) = (a - i, b - j, c - l);
                        sum += BINOM[a][i] * BINOM[b][j] * BINOM[c][l] * d * pt[ra] * px[rb] * py[rc] * self.scaled[ra + rb + rc];
                    }
                }
            }
            sum
        };
        let mx = partial(0, 2, 1) + partial(0, 0, 3);
        let my = -(partial(0, 3, 0) + partial(0, 1, 2));
        let uxx = -2.0 * partial(1, 1, 1);
        let uxy = partial(1, 2, 0) - partial(1, 0, 2);
        SubsolutionState { m: [mx, my], u: [uxx, uxy] }
    }
}
