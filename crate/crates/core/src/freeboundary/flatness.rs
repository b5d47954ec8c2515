//! Flatness of level sets and ε-monotonicity along a cone of directions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, Point};
use crate::solver::lipschitz_seminorm;

use super::contour::extract_level_set;
use super::regular::ball_sup;

/// Width of the thinnest band, normal to the total-least-squares line, containing `pts`.
pub fn band_width(pts: &[Point]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} level-set vertices in the window, need 3", pts.len())));
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point::new(0.0, 0.0), |s, &p| s + p * (1.0 / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in pts {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // principal direction of the scatter; the normal is its perpendicular
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let normal = Point::unit(phi).perp();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
        let s = (p - c).dot(normal);
        (lo.min(s), hi.max(s))
    });
    Ok(hi - lo)
}

/// Band width of `{u = level}` inside the disk `B_radius(center)`.
pub fn flatness_measure(u: &GridField, center: Point, radius: f64, level: f64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Config(format!("window radius must be positive, got {radius}")));
    }
    let curve = extract_level_set(u, level);
    let pts: Vec<Point> = curve.vertices.into_iter().filter(|p| p.dist(center) <= radius).collect();
    band_width(&pts)
}

/// Flatness of the zero sets of the blow-ups `u(x0 + rξ)/r` in the unit disk, one value per scale.
pub fn blowup_flatness(u: &GridField, x0: Point, scales: &[f64]) -> Result<Vec<f64>> {
    let curve = extract_level_set(u, 0.0);
    scales
        .iter()
        .map(|&r| {
            if !u.spec().contains_ball(x0, r) {
                return Err(Error::Domain(format!("blow-up window of radius {r} leaves the grid")));
            }
            let pts: Vec<Point> = curve.vertices.iter().filter(|p| p.dist(x0) <= r).map(|&p| (p - x0) * (1.0 / r)).collect();
            band_width(&pts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub axis: Point,
    /// Semi-opening in `(0, π/2)`.
    pub theta: f64,
}

impl ConeSpec {
    pub fn new(axis: Point, theta: f64) -> Result<Self> {
        if !((axis.norm() - 1.0).abs() <= 1e-12) {
            return Err(Error::Config(format!("cone axis must be a unit vector, |e| = {}", axis.norm())));
        }
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("cone semi-opening must lie in (0, pi/2), got {theta}")));
        }
        Ok(Self { axis, theta })
    }
}

/// Axis-aligned rectangle of base points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Point,
    pub hi: Point,
}

impl Window {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if !(lo.x <= hi.x && lo.y <= hi.y && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("window corners must be ordered".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn around(c: Point, half: f64) -> Result<Self> {
        Self::new(c - Point::new(half, half), c + Point::new(half, half))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMonotonicity {
    /// Smallest ladder step from which every larger step passes; `+∞` when the largest fails.
    pub eps: f64,
    /// `(ε, passed)` for each rung, increasing in `ε`.
    pub ladder: Vec<(f64, bool)>,
}

/// Checks `sup_{B_{ε sinθ}(x)} u(· − εe) ≤ u(x)` at every node of the window on the dyadic
/// ladder `ε = 2h·2^k` up to the largest step whose translated balls stay in the grid.
pub fn epsilon_monotonicity(u: &GridField, cone: &ConeSpec, window: &Window) -> Result<EpsilonMonotonicity> {
    let spec = u.spec();
    let h = spec.h();
    let (o, l) = (spec.origin(), spec.extent());
    let margin = (window.lo.x - o.x)
        .min(window.lo.y - o.y)
        .min(o.x + l - window.hi.x)
        .min(o.y + l - window.hi.y);
    let s = cone.theta.sin();
    let eps_max = margin / (1.0 + s);
    if !(eps_max >= 2.0 * h) {
        return Err(Error::Input(format!(
            "window leaves no room for a translate of length 2h = {} (margin {margin})",
            2.0 * h
        )));
    }
    let nodes: Vec<(Point, f64)> = (0..spec.len())
        .filter_map(|k| {
            let (i, j) = spec.coords(k);
            let p = spec.node(i, j);
            (p.x >= window.lo.x && p.x <= window.hi.x && p.y >= window.lo.y && p.y <= window.hi.y)
                .then(|| (p, u.values()[k]))
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::Input("window contains no grid nodes".into()));
    }
    let lip = lipschitz_seminorm(u);
    let tol = 1e-9 * (1.0 + u.sup_norm());
    let mut ladder = Vec::new();
    let mut eps = 2.0 * h;
    while eps <= eps_max * (1.0 + 1e-12) {
        let passed = nodes
            .par_iter()
            .map(|&(p, v)| ball_sup(u, p - cone.axis * eps, eps * s, lip).map(|m| m <= v + tol))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|b| b);
        ladder.push((eps, passed));
        eps *= 2.0;
    }
    let first_tail = ladder.iter().rposition(|&(_, ok)| !ok).map_or(0, |k| k + 1);
    let eps = ladder.get(first_tail).map_or(f64::INFINITY, |r| r.0);
    Ok(EpsilonMonotonicity { eps, ladder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::{two_plane_field, TwoPlaneSpec};
    use crate::grid::GridSpec;

    #[test]
    fn straight_level_set_is_flat() {
        let u = GridField::from_fn(GridSpec::unit(65).unwrap(), |p| (p - Point::new(0.5, 0.5)).dot(Point::unit(0.4)));
        let w = flatness_measure(&u, Point::new(0.5, 0.5), 0.3, 0.0).unwrap();
        assert!(w < 1e-12, "{w}");
    }

    #[test]
    fn circle_sagitta() {
        let (c, big_r, w) = (Point::new(0.5, 0.5), 0.35, 0.08);
        let u = GridField::from_fn(GridSpec::unit(257).unwrap(), |p| p.dist(c) - big_r);
        let on = c + Point::unit(0.3) * big_r;
        let band = flatness_measure(&u, on, w, 0.0).unwrap();
        let sagitta = w * w / (2.0 * big_r);
        assert!((band - sagitta).abs() < 0.1 * sagitta, "{band} vs {sagitta}");
    }

    #[test]
    fn band_is_rigid_motion_invariant() {
        let pts: Vec<Point> = (0..20).map(|k| Point::new(k as f64 * 0.01, 0.003 * ((k * 7) % 5) as f64)).collect();
        let a = band_width(&pts).unwrap();
        let (rot, shift) = (1.1f64, Point::new(0.3, -0.2));
        let moved: Vec<Point> = pts
            .iter()
            .map(|p| Point::new(rot.cos() * p.x - rot.sin() * p.y, rot.sin() * p.x + rot.cos() * p.y) + shift)
            .collect();
        assert!((band_width(&moved).unwrap() - a).abs() < 1e-12);
        assert!(matches!(band_width(&pts[..2]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn cone_checks() {
        assert!(ConeSpec::new(Point::new(1.0, 1.0), 0.5).is_err());
        assert!(ConeSpec::new(Point::new(1.0, 0.0), std::f64::consts::FRAC_PI_2).is_err());
    }

    fn plane_eps(theta_deg: f64, tilt_deg: f64) -> (f64, f64) {
        let spec = GridSpec::unit(65).unwrap();
        let x0 = Point::new(0.5, 0.5);
        let tp = TwoPlaneSpec::with_angle(1.0, 2.0, tilt_deg.to_radians(), x0).unwrap();
        let u = two_plane_field(&tp, spec);
        let cone = ConeSpec::new(Point::new(1.0, 0.0), theta_deg.to_radians()).unwrap();
        let r = epsilon_monotonicity(&u, &cone, &Window::around(x0, 0.1).unwrap()).unwrap();
        (r.eps, spec.h())
    }

    #[test]
    fn linear_increasing_is_fully_monotone() {
        let spec = GridSpec::unit(33).unwrap();
        let u = GridField::from_fn(spec, |p| p.x);
        let cone = ConeSpec::new(Point::new(1.0, 0.0), 0.5).unwrap();
        let r = epsilon_monotonicity(&u, &cone, &Window::around(Point::new(0.5, 0.5), 0.1).unwrap()).unwrap();
        assert_eq!(r.eps, 2.0 * spec.h());
        assert!(r.ladder.iter().all(|x| x.1));
        let down = u.map(|v| -v);
        assert_eq!(epsilon_monotonicity(&down, &cone, &Window::around(Point::new(0.5, 0.5), 0.1).unwrap()).unwrap().eps, f64::INFINITY);
    }

    #[test]
    fn tilted_planes() {
        // a plane is monotone along the cone iff its normal is within 90° − θ of the axis
        for tilt in [0.0, 10.0, 20.0, 30.0] {
            let (eps, h) = plane_eps(60.0, tilt);
            assert_eq!(eps, 2.0 * h, "tilt {tilt}");
        }
        assert_eq!(plane_eps(60.0, 45.0).0, f64::INFINITY);
        assert_eq!(plane_eps(30.0, 45.0).0, 2.0 * GridSpec::unit(65).unwrap().h());
    }

    #[test]
    fn window_too_close_to_the_edge() {
        let u = GridField::from_fn(GridSpec::unit(33).unwrap(), |p| p.x);
        let cone = ConeSpec::new(Point::new(1.0, 0.0), 0.5).unwrap();
        let w = Window::new(Point::new(0.0, 0.2), Point::new(0.3, 0.4)).unwrap();
        assert!(matches!(epsilon_monotonicity(&u, &cone, &w), Err(Error::Input(_))));
    }
}
