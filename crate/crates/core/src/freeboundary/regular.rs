//! Sups over balls, non-degeneracy at free-boundary points and the tangent-ball test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, Point};
use crate::solver::lipschitz_seminorm;

use super::contour::FreeBoundaryCurve;

/// Regularity floor in cells: `M` must exceed `FLOOR_CELLS·h·Lip/min r`.
pub const FLOOR_CELLS: f64 = 2.0;

const START_DIRECTIONS: usize = 16;
const MAX_DIRECTIONS: usize = 4096;

/// Sup of the bilinear interpolant of `u` over the closed ball `B_r(c)`.
///
/// The interpolant is bilinear per cell, so its sup is attained at a node inside the ball or on
/// the circle. The circle is sampled on 4 concentric radii with doubling angular resolution until
/// the sup moves by less than `10⁻³·lip·r`, then refined by golden-section search.
pub fn ball_sup(u: &GridField, c: Point, r: f64, lip: f64) -> Result<f64> {
    let spec = u.spec();
    if !(r.is_finite() && r >= 0.0) || !c.is_finite() {
        return Err(Error::Config(format!("bad ball radius {r}")));
    }
    if !spec.contains_ball(c, r) {
        return Err(Error::Domain(format!("ball of radius {r} around ({}, {}) leaves the grid", c.x, c.y)));
    }
    let mut best = u.sample_clamped(c);
    let h = spec.h();
    let (gx, gy) = spec.to_grid(c);
    let reach = r / h;
    let last = spec.nx() - 1;
    let lo = |g: f64| ((g - reach).ceil().max(0.0)) as usize;
    let hi = |g: f64| ((g + reach).floor().max(0.0) as usize).min(last);
    for j in lo(gy)..=hi(gy) {
        for i in lo(gx)..=hi(gx) {
            if spec.node(i, j).dist(c) <= r {
                best = best.max(u.get(i, j));
            }
        }
    }
    if r == 0.0 {
        return Ok(best);
    }
    let at = |t: f64, rho: f64| u.sample_clamped(c + Point::unit(t) * rho);
    let scan = |n: usize| {
        let mut m = (f64::NEG_INFINITY, 0.0);
        for a in 0..n {
            let t = std::f64::consts::TAU * a as f64 / n as f64;
            for q in 1..=4 {
                let v = at(t, r * q as f64 / 4.0);
                if v > m.0 {
                    m = (v, t);
                }
            }
        }
        m
    };
    let mut n = START_DIRECTIONS;
    let mut cur = scan(n);
    while n < MAX_DIRECTIONS {
        n *= 2;
        let next = scan(n);
        let moved = (next.0 - cur.0).abs();
        cur = next;
        if moved < 1e-3 * lip * r {
            break;
        }
    }
    // golden-section refinement on the circle around the best direction
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let span = std::f64::consts::TAU / n as f64;
    let (mut a, mut b) = (cur.1 - span, cur.1 + span);
    for _ in 0..40 {
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        if at(x1, r) >= at(x2, r) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let refined = at(0.5 * (a + b), r);
    Ok(best.max(cur.0).max(refined))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityRecord {
    pub x0: Point,
    /// `min_r sup_{B_r}|u| / r`.
    pub m: f64,
    /// Largest radius up to which every schedule radius clears the floor; 0 when none does.
    pub r_tilde: f64,
    pub is_regular: bool,
    /// `min` and `max` over radii and phases of `sup_{B_r} u_i / r`.
    pub c_lower: f64,
    pub c_upper: f64,
    /// Area fraction of `{u⁺ = 0}` in `B_{r/2}(x0)` at the smallest radius.
    pub zero_density: f64,
    pub m_min: f64,
}

/// Default regularity floor `FLOOR_CELLS·h·Lip/min r`.
pub fn default_floor(u: &GridField, radii: &[f64]) -> f64 {
    let rmin = radii.iter().copied().fold(f64::INFINITY, f64::min);
    FLOOR_CELLS * u.spec().h() * lipschitz_seminorm(u) / rmin
}

/// Growth constants of `u⁺`, `u⁻` and `|u|` at `x0` over the radius schedule.
pub fn classify_regular(u: &GridField, x0: Point, radii: &[f64], m_min: Option<f64>) -> Result<RegularityRecord> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Config("radius schedule must be non-empty and positive".into()));
    }
    let lip = lipschitz_seminorm(u);
    let rmin = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let m_min = m_min.unwrap_or(FLOOR_CELLS * u.spec().h() * lip / rmin);
    let neg = u.map(|v| -v);
    let sups = radii
        .par_iter()
        .map(|&r| Ok((r, ball_sup(u, x0, r, lip)?.max(0.0) / r, ball_sup(&neg, x0, r, lip)?.max(0.0) / r)))
        .collect::<Result<Vec<_>>>()?;
    let mut sorted = sups.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut r_tilde = 0.0;
    for &(r, p, n) in &sorted {
        if p.max(n) >= m_min {
            r_tilde = r;
        } else {
            break;
        }
    }
    let m = sups.iter().map(|s| s.1.max(s.2)).fold(f64::INFINITY, f64::min);
    let c_lower = sups.iter().map(|s| s.1.min(s.2)).fold(f64::INFINITY, f64::min);
    let c_upper = sups.iter().map(|s| s.1.max(s.2)).fold(0.0, f64::max);
    let zero_density = zero_fraction(u, x0, 0.5 * rmin);
    Ok(RegularityRecord {
        x0,
        m,
        r_tilde,
        is_regular: m >= m_min,
        c_lower,
        c_upper,
        zero_density,
        m_min,
    })
}

/// Fraction of `B_ρ(x0)` where the bilinear interpolant is `≤ 0`, on a lattice of spacing `≤ h/4`.
fn zero_fraction(u: &GridField, x0: Point, rho: f64) -> f64 {
    let step = (0.25 * u.spec().h()).min(rho / 16.0);
    let n = (rho / step).ceil() as i64;
    let (mut inside, mut zero) = (0usize, 0usize);
    for b in -n..=n {
        for a in -n..=n {
            let d = Point::new(a as f64 * step, b as f64 * step);
            if d.norm() <= rho {
                inside += 1;
                if u.sample_clamped(x0 + d) <= 0.0 {
                    zero += 1;
                }
            }
        }
    }
    zero as f64 / inside as f64
}

/// Whether a disk of radius `rho` tangent to the curve at `x0` fits inside `{u > 0}` or `{u < 0}`.
pub fn tangent_ball(u: &GridField, x0: Point, normal: Point, rho: f64) -> bool {
    let spec = u.spec();
    let inside = |sign: f64| {
        let c = x0 + normal * (sign * rho);
        if !spec.contains_ball(c, rho) {
            return false;
        }
        let ok = |p: Point| sign * u.sample_clamped(p) > 0.0;
        ok(c) && (1..=4).all(|q| {
            let s = rho * q as f64 / 4.0 * 0.95;
            (0..16).all(|a| ok(c + Point::unit(std::f64::consts::TAU * a as f64 / 16.0) * s))
        })
    };
    inside(1.0) || inside(-1.0)
}

/// Curve vertices that admit a tangent ball of radius `4h`, keep all schedule balls inside the
/// grid, and clear the regularity floor. At most `max_points`, spread evenly along the curve.
pub fn detect_regular_points(
    u: &GridField,
    curve: &FreeBoundaryCurve,
    radii: &[f64],
    max_points: usize,
) -> Result<Vec<RegularityRecord>> {
    let spec = u.spec();
    let h = spec.h();
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let floor = default_floor(u, radii);
    let candidates: Vec<usize> = (0..curve.vertices.len())
        .filter(|&k| {
            let p = curve.vertices[k];
            spec.contains_ball(p, rmax) && tangent_ball(u, p, curve.normals[k], 4.0 * h)
        })
        .collect();
    if candidates.is_empty() || max_points == 0 {
        return Ok(Vec::new());
    }
    // order along the interface so the spread is geometric, not by extraction order
    let rank: Vec<usize> = curve.polylines.iter().flatten().copied().collect();
    let mut ordered: Vec<usize> = rank.into_iter().filter(|k| candidates.contains(k)).collect();
    ordered.dedup();
    let take = max_points.min(ordered.len());
    let picks: Vec<usize> = (0..take)
        .map(|q| ordered[((2 * q + 1) * ordered.len()) / (2 * take)])
        .collect();
    let records = picks
        .par_iter()
        .map(|&k| classify_regular(u, curve.vertices[k], radii, Some(floor)))
        .collect::<Result<Vec<_>>>()?;
    Ok(records.into_iter().filter(|r| r.is_regular).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::{two_plane_field, TwoPlaneSpec};
    use crate::freeboundary::extract_zero_set;
    use crate::grid::GridSpec;

    #[test]
    fn ball_sup_of_plane() {
        let u = GridField::from_fn(GridSpec::unit(33).unwrap(), |p| (p - Point::new(0.5, 0.5)).dot(Point::unit(0.77)));
        let s = ball_sup(&u, Point::new(0.5, 0.5), 0.2, 1.0).unwrap();
        assert!((s - 0.2).abs() < 1e-9, "{s}");
        assert!(ball_sup(&u, Point::new(0.1, 0.5), 0.2, 1.0).is_err());
    }

    #[test]
    fn symmetric_two_plane() {
        let x0 = Point::new(0.5, 0.5);
        let tp = TwoPlaneSpec::with_angle(1.0, 1.0, 0.4, x0).unwrap();
        let u = two_plane_field(&tp, GridSpec::unit(65).unwrap());
        let rec = classify_regular(&u, x0, &[0.1, 0.2], None).unwrap();
        assert!((rec.m - 1.0).abs() < 1e-6);
        assert!((rec.c_lower - 1.0).abs() < 1e-6 && (rec.c_upper - 1.0).abs() < 1e-6);
        assert!((rec.zero_density - 0.5).abs() < 0.02, "{}", rec.zero_density);
        assert!(rec.is_regular);
        assert_eq!(rec.r_tilde, 0.2);
    }

    #[test]
    fn asymmetric_two_plane() {
        let x0 = Point::new(0.5, 0.5);
        let tp = TwoPlaneSpec::with_angle(2.0, 3.0, 1.2, x0).unwrap();
        let u = two_plane_field(&tp, GridSpec::unit(65).unwrap());
        let rec = classify_regular(&u, x0, &[0.1, 0.2], None).unwrap();
        assert!((rec.m - 3.0).abs() < 1e-6);
        assert!((rec.c_lower - 2.0).abs() < 1e-6);
        assert!(rec.c_lower <= rec.c_upper);
    }

    #[test]
    fn quadratic_minimum_is_singular() {
        let x0 = Point::new(0.5, 0.5);
        let u = GridField::from_fn(GridSpec::unit(65).unwrap(), |p| p.dist(x0).powi(2));
        let rec = classify_regular(&u, x0, &[0.05, 0.1, 0.2], None).unwrap();
        let h = u.spec().h();
        assert!((rec.m - 0.05).abs() < h * h / 0.05, "{}", rec.m);
        assert!(!rec.is_regular);
        assert_eq!(rec.r_tilde, 0.0);
    }

    #[test]
    fn regular_points_on_a_line() {
        let x0 = Point::new(0.5, 0.5);
        let tp = TwoPlaneSpec::with_angle(1.0, 2.0, 0.0, x0).unwrap();
        let u = two_plane_field(&tp, GridSpec::unit(65).unwrap());
        let curve = extract_zero_set(&u);
        let pts = detect_regular_points(&u, &curve, &[0.05, 0.1, 0.2], 5).unwrap();
        assert_eq!(pts.len(), 5);
        for r in &pts {
            assert!((r.x0.x - 0.5).abs() < 1e-12);
            assert!(r.x0.y >= 0.2 && r.x0.y <= 0.8);
        }
    }

    #[test]
    fn tangent_ball_fails_at_cusp() {
        let x0 = Point::new(0.5, 0.5);
        // {u > 0} is a thin double wedge around the x-axis
        let u = GridField::from_fn(GridSpec::unit(129).unwrap(), |p| {
            let d = p - x0;
            d.x * d.x - 16.0 * d.y * d.y
        });
        let h = u.spec().h();
        assert!(!tangent_ball(&u, x0, Point::new(1.0, 0.0), 4.0 * h));
        let line = GridField::from_fn(*u.spec(), |p| p.x - 0.5);
        assert!(tangent_ball(&line, x0, Point::new(1.0, 0.0), 4.0 * h));
    }
}
