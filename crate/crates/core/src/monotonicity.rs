//! The ACF functional `J_r(u_i, x0) = r⁻² ∫_{B_r(x0)} |∇u_i|²` in two dimensions,
//! and the monotonicity check of the product `J_r(u⁺)·J_r(u⁻)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Point};
use crate::solver::lipschitz_seminorm;

/// The lab is two-dimensional; the kernel `|x − x0|^{n−2}` is identically 1.
pub const DIMENSION: usize = 2;

/// Default relative slack for the monotonicity verdict.
pub const DEFAULT_ETA: f64 = 0.02;

/// The two-dimensional two-plane constant: `J_r = (π²/4)·α²β²` for `α⟨x,ν⟩⁺ − β⟨x,ν⟩⁻`.
pub const TWO_PLANE_CONSTANT: f64 = std::f64::consts::PI * std::f64::consts::PI / 4.0;

const SUBCELL: usize = 8;

pub fn check_dimension(n: usize) -> Result<()> {
    if n != DIMENSION {
        return Err(Error::Config(format!("only n = {DIMENSION} is supported, got n = {n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// `u⁺`
    Positive,
    /// `u⁻ = max(−u, 0)`
    Negative,
}

impl Phase {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Phase::Positive => 1.0,
            Phase::Negative => -1.0,
        }
    }
}

/// Per-cell integrands of one phase: `|∇u_i|²` times the phase area fraction, and the mean of `u_i²`.
#[derive(Debug, Clone)]
pub struct PhaseCells {
    spec: GridSpec,
    energy: Vec<f64>,
    mass: Vec<f64>,
}

impl PhaseCells {
    pub fn new(u: &GridField, phase: Phase) -> Result<Self> {
        if u.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("J_r of a non-finite field".into()));
        }
        let spec = *u.spec();
        let nc = spec.nx() - 1;
        let s = phase.sign();
        let mut energy = vec![0.0; nc * nc];
        let mut mass = vec![0.0; nc * nc];
        energy
            .par_chunks_mut(nc)
            .zip(mass.par_chunks_mut(nc))
            .enumerate()
            .for_each(|(j, (er, mr))| {
                for i in 0..nc {
                    let v = [
                        s * u.get(i, j),
                        s * u.get(i + 1, j),
                        s * u.get(i + 1, j + 1),
                        s * u.get(i, j + 1),
                    ];
                    let (frac, g) = cell_phase(v);
                    let h = spec.h();
                    er[i] = frac * (g.0 * g.0 + g.1 * g.1) / (h * h);
                    mr[i] = v.iter().map(|x| x.max(0.0).powi(2)).sum::<f64>() / 4.0;
                }
            });
        Ok(Self { spec, energy, mass })
    }

    /// `∫_{B_r(x0)} |∇u_i|²` and `∫_{B_r(x0)} u_i²`.
    fn integrals(&self, x0: Point, r: f64) -> (f64, f64) {
        let nc = self.spec.nx() - 1;
        let h = self.spec.h();
        let (gx, gy) = self.spec.to_grid(x0);
        let reach = r / h + 1.0;
        let lo = |g: f64| ((g - reach).floor().max(0.0)) as usize;
        let hi = |g: f64| ((g + reach).ceil().max(0.0) as usize).min(nc);
        let half_diag = 0.5 * std::f64::consts::SQRT_2 * h;
        let (mut e, mut m) = (0.0, 0.0);
        for j in lo(gy)..hi(gy) {
            for i in lo(gx)..hi(gx) {
                let c = self.spec.node(i, j) + Point::new(0.5 * h, 0.5 * h);
                let d = c.dist(x0);
                let w = if d + half_diag <= r {
                    1.0
                } else if d - half_diag >= r {
                    continue;
                } else {
                    disk_fraction(c, h, x0, r)
                };
                let k = j * nc + i;
                e += w * self.energy[k];
                m += w * self.mass[k];
            }
        }
        (e * h * h, m * h * h)
    }

    pub fn j_r(&self, x0: Point, r: f64) -> Result<f64> {
        check_ball(&self.spec, x0, r)?;
        Ok(self.integrals(x0, r).0 / (r * r))
    }
}

fn check_ball(spec: &GridSpec, x0: Point, r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Config(format!("radius must be positive, got {r}")));
    }
    if !x0.is_finite() || !spec.contains_ball(x0, r) {
        return Err(Error::Domain(format!("ball of radius {r} around ({}, {}) leaves the grid", x0.x, x0.y)));
    }
    Ok(())
}

/// Fraction of the cell with lower-left corner `c − h/2` inside `B_r(x0)`, by sub-cell midpoints.
fn disk_fraction(c: Point, h: f64, x0: Point, r: f64) -> f64 {
    let step = h / SUBCELL as f64;
    let base = c - Point::new(0.5 * h, 0.5 * h);
    let mut inside = 0;
    for b in 0..SUBCELL {
        for a in 0..SUBCELL {
            let p = base + Point::new((a as f64 + 0.5) * step, (b as f64 + 0.5) * step);
            if p.dist(x0) <= r {
                inside += 1;
            }
        }
    }
    inside as f64 / (SUBCELL * SUBCELL) as f64
}

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// Area fraction of `{v > 0}` in the unit cell and the gradient of the phase there (per unit cell length).
///
/// Corners run counter-clockwise from the lower left. Cut cells use the plane through the
/// positive corners and the zero crossings.
fn cell_phase(v: [f64; 4]) -> (f64, (f64, f64)) {
    let pos = v.map(|x| x > 0.0);
    let npos = pos.iter().filter(|&&p| p).count();
    if npos == 0 {
        return (0.0, (0.0, 0.0));
    }
    let bilinear = (
        0.5 * (v[1] - v[0] + v[2] - v[3]),
        0.5 * (v[3] - v[0] + v[2] - v[1]),
    );
    if npos == 4 {
        return (1.0, bilinear);
    }
    let crossing = |k: usize| {
        let l = (k + 1) % 4;
        let t = v[k] / (v[k] - v[l]);
        let (a, b) = (CORNERS[k], CORNERS[l]);
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    };
    let mut walk: Vec<(f64, f64, f64)> = Vec::with_capacity(6);
    for k in 0..4 {
        if pos[k] {
            walk.push((CORNERS[k].0, CORNERS[k].1, v[k]));
        }
        if pos[k] != pos[(k + 1) % 4] {
            let (x, y) = crossing(k);
            walk.push((x, y, 0.0));
        }
    }
    let saddle = npos == 2 && pos[0] == pos[2];
    let centre = 0.25 * v.iter().sum::<f64>();
    let area = if saddle && centre <= 0.0 {
        // the two positive corners are separated; each owns a corner triangle
        let first = if pos[0] { 0 } else { 1 };
        [first, first + 2]
            .iter()
            .map(|&k| {
                let prev = (k + 3) % 4;
                let (a, b) = (crossing(k), crossing(prev));
                let c = CORNERS[k];
                0.5 * ((a.0 - c.0) * (b.1 - c.1) - (a.1 - c.1) * (b.0 - c.0)).abs()
            })
            .sum()
    } else {
        shoelace(&walk)
    };
    (area.clamp(0.0, 1.0), plane_fit(&walk).unwrap_or(bilinear))
}

fn shoelace(poly: &[(f64, f64, f64)]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            a.0 * b.1 - a.1 * b.0
        })
        .sum();
    0.5 * twice.abs()
}

/// Least-squares gradient of `a + bx + cy` through `(x, y, value)` samples.
fn plane_fit(pts: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my, mv) = pts.iter().fold((0.0, 0.0, 0.0), |s, p| (s.0 + p.0 / n, s.1 + p.1 / n, s.2 + p.2 / n));
    let (mut sxx, mut sxy, mut syy, mut sxv, mut syv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy, dv) = (p.0 - mx, p.1 - my, p.2 - mv);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxv += dx * dv;
        syv += dy * dv;
    }
    let det = sxx * syy - sxy * sxy;
    if det <= 1e-12 * (sxx + syy).powi(2) {
        return None;
    }
    Some(((syy * sxv - sxy * syv) / det, (sxx * syv - sxy * sxv) / det))
}

/// `J_r(u_i, x0)` for `u_i = u⁺` (pass `u`) or `u_i = u⁻` (pass `−u` or use [`PhaseCells`]).
///
/// Cells cut by the zero level count with their positive-area fraction; cells cut by the
/// circle count with their covered fraction.
pub fn j_r(u_i: &GridField, x0: Point, r: f64) -> Result<f64> {
    check_ball(u_i.spec(), x0, r)?;
    PhaseCells::new(u_i, Phase::Positive)?.j_r(x0, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JrSeries {
    pub x0: Point,
    pub radii: Vec<f64>,
    pub j1: Vec<f64>,
    pub j2: Vec<f64>,
    pub j: Vec<f64>,
    pub eta: f64,
    /// `None` when the input is degenerate.
    pub verdict: Option<bool>,
    /// Every product vanished: one phase is absent near `x0`.
    pub degenerate: bool,
    /// `max_k |j(r_k) − j(r_1)| / j(r_1)`.
    pub constancy_defect: f64,
    /// Linear extrapolation of `j` to `r = 0`, clamped at 0.
    pub j0_extrapolated: f64,
    /// Scale-free ratio `j(R)·R⁸ / (‖u₁‖²‖u₂‖²)` with norms over `B_R(x0)`, `R` the largest radius.
    pub l2_ratio: f64,
}

impl JrSeries {
    pub fn passed(&self) -> bool {
        self.verdict == Some(true)
    }

    pub fn min_values(&self) -> (f64, f64, f64) {
        let m = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        (m(&self.j1), m(&self.j2), m(&self.j))
    }

    /// Rows `r, j1, j2, j`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.radii.len())
            .map(|k| vec![self.radii[k], self.j1[k], self.j2[k], self.j[k]])
            .collect()
    }
}

/// Evaluates the series at `radii` and checks `j(r_{k+1}) ≥ (1 − η) j(r_k)`.
pub fn j_series_check(u: &GridField, x0: Point, radii: &[f64], eta: f64) -> Result<JrSeries> {
    if radii.is_empty() {
        return Err(Error::Config("empty radius schedule".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("radii must be strictly increasing".into()));
    }
    if !(eta.is_finite() && (0.0..1.0).contains(&eta)) {
        return Err(Error::Config(format!("slack must lie in [0, 1), got {eta}")));
    }
    for &r in radii {
        check_ball(u.spec(), x0, r)?;
    }
    let tol = 2.0 * u.spec().h() * lipschitz_seminorm(u) + 1e-12;
    let base = u.sample_clamped(x0);
    if base.abs() > tol {
        return Err(Error::Input(format!(
            "base point ({}, {}) is not on the free boundary: u = {base:e}",
            x0.x, x0.y
        )));
    }
    let (p1, p2) = rayon::join(|| PhaseCells::new(u, Phase::Positive), || PhaseCells::new(u, Phase::Negative));
    let (p1, p2) = (p1?, p2?);
    let vals: Vec<((f64, f64), (f64, f64))> = radii
        .par_iter()
        .map(|&r| (p1.integrals(x0, r), p2.integrals(x0, r)))
        .collect();
    let j1: Vec<f64> = vals.iter().zip(radii).map(|(v, r)| v.0 .0 / (r * r)).collect();
    let j2: Vec<f64> = vals.iter().zip(radii).map(|(v, r)| v.1 .0 / (r * r)).collect();
    let j: Vec<f64> = j1.iter().zip(&j2).map(|(a, b)| a * b).collect();

    let degenerate = j.iter().all(|&v| v == 0.0);
    let verdict = (!degenerate).then(|| j.windows(2).all(|w| w[1] >= w[0] - eta * w[0]));
    let constancy_defect = if j[0] > 0.0 {
        j.iter().map(|v| (v - j[0]).abs() / j[0]).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let j0_extrapolated = extrapolate_to_zero(radii, &j).max(0.0);
    let big = *radii.last().expect("non-empty");
    let last = vals.last().expect("non-empty");
    let norms = last.0 .1 * last.1 .1;
    let l2_ratio = if norms > 0.0 { j[j.len() - 1] * big.powi(8) / norms } else { f64::NAN };
    Ok(JrSeries {
        x0,
        radii: radii.to_vec(),
        j1,
        j2,
        j,
        eta,
        verdict,
        degenerate,
        constancy_defect,
        j0_extrapolated,
        l2_ratio,
    })
}

/// Intercept of the least-squares line through `(r_k, j_k)`; the single value when only one radius.
fn extrapolate_to_zero(r: &[f64], j: &[f64]) -> f64 {
    let n = r.len() as f64;
    if r.len() == 1 {
        return j[0];
    }
    let (mr, mj) = (r.iter().sum::<f64>() / n, j.iter().sum::<f64>() / n);
    let srr: f64 = r.iter().map(|x| (x - mr).powi(2)).sum();
    let srj: f64 = r.iter().zip(j).map(|(x, y)| (x - mr) * (y - mj)).sum();
    mj - srj / srr * mr
}
