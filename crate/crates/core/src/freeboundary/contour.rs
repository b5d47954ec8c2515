//! Marching-squares extraction of `∂{u > 0}` and the coincidence of the two phase boundaries.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, Point};
use crate::solver::lipschitz_seminorm;

/// Piecewise-linear interface: crossing points on cell edges joined into polylines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaryCurve {
    pub vertices: Vec<Point>,
    /// Unit normals pointing into `{u > 0}`.
    pub normals: Vec<Point>,
    /// Vertex index pairs, one per cell crossing.
    pub segments: Vec<[usize; 2]>,
    /// Chains of vertex indices; closed chains repeat their first vertex.
    pub polylines: Vec<Vec<usize>>,
}

impl FreeBoundaryCurve {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn segment(&self, k: usize) -> (Point, Point) {
        let [a, b] = self.segments[k];
        (self.vertices[a], self.vertices[b])
    }

    /// Distance from `p` to the nearest segment (or vertex when there are no segments).
    pub fn distance_to(&self, p: Point) -> f64 {
        let seg = (0..self.segments.len())
            .map(|k| {
                let (a, b) = self.segment(k);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min);
        let vert = self.vertices.iter().map(|v| v.dist(p)).fold(f64::INFINITY, f64::min);
        seg.min(vert)
    }

    /// Rows `seg_id, x, y, nx, ny`, one per polyline vertex.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (id, line) in self.polylines.iter().enumerate() {
            for &v in line {
                let (p, n) = (self.vertices[v], self.normals[v]);
                out.push(vec![id as f64, p.x, p.y, n.x, n.y]);
            }
        }
        out
    }
}

pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    /// `(i, j)`–`(i+1, j)`
    H(usize, usize),
    /// `(i, j)`–`(i, j+1)`
    V(usize, usize),
}

/// Zero contour of `u` separating `{u > 0}` from `{u ≤ 0}`.
///
/// Saddle cells are resolved by the sign of the cell-centre average.
pub fn extract_zero_set(u: &GridField) -> FreeBoundaryCurve {
    let spec = *u.spec();
    let nx = spec.nx();
    let mut curve = FreeBoundaryCurve::default();
    if u.values().iter().any(|v| !v.is_finite()) {
        return curve;
    }
    let mut ids: HashMap<EdgeKey, usize> = HashMap::new();
    let mut vertex = |key: EdgeKey, curve: &mut FreeBoundaryCurve| -> usize {
        *ids.entry(key).or_insert_with(|| {
            let ((i0, j0), (i1, j1)) = match key {
                EdgeKey::H(i, j) => ((i, j), (i + 1, j)),
                EdgeKey::V(i, j) => ((i, j), (i, j + 1)),
            };
            let (a, b) = (u.get(i0, j0), u.get(i1, j1));
            let t = a / (a - b);
            let (pa, pb) = (spec.node(i0, j0), spec.node(i1, j1));
            let p = pa + (pb - pa) * t;
            let towards_pos = if a > 0.0 { pa - pb } else { pb - pa };
            let n = u
                .sample_gradient(p)
                .normalized()
                .filter(|g| g.dot(towards_pos) > 0.0)
                .unwrap_or_else(|| towards_pos.normalized().expect("distinct nodes"));
            curve.vertices.push(p);
            curve.normals.push(n);
            curve.vertices.len() - 1
        })
    };
    for j in 0..nx - 1 {
        for i in 0..nx - 1 {
            let v = [u.get(i, j), u.get(i + 1, j), u.get(i + 1, j + 1), u.get(i, j + 1)];
            let pos = v.map(|x| x > 0.0);
            let edges = [EdgeKey::H(i, j), EdgeKey::V(i + 1, j), EdgeKey::H(i, j + 1), EdgeKey::V(i, j)];
            let cut: Vec<usize> = (0..4).filter(|&k| pos[k] != pos[(k + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = match cut.len() {
                2 => vec![(cut[0], cut[1])],
                4 => {
                    let centre_pos = v.iter().sum::<f64>() > 0.0;
                    // isolate the corners of the minority sign; corner k sits between edges k-1 and k
                    let lonely: Vec<usize> = (0..4).filter(|&k| pos[k] != centre_pos).collect();
                    lonely.iter().map(|&k| ((k + 3) % 4, k)).collect()
                }
                _ => Vec::new(),
            };
            for (a, b) in pairs {
                let va = vertex(edges[a], &mut curve);
                let vb = vertex(edges[b], &mut curve);
                if va != vb {
                    curve.segments.push([va, vb]);
                }
            }
        }
    }
    curve.polylines = chain(curve.vertices.len(), &curve.segments);
    curve
}

/// Level set `{u = level}` with normals towards `{u > level}`.
pub fn extract_level_set(u: &GridField, level: f64) -> FreeBoundaryCurve {
    extract_zero_set(&u.map(|v| v - level))
}

fn chain(nv: usize, segments: &[[usize; 2]]) -> Vec<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (k, s) in segments.iter().enumerate() {
        adj[s[0]].push(k);
        adj[s[1]].push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| {
        let mut line = vec![start];
        let mut at = start;
        while let Some(&k) = adj[at].iter().find(|&&k| !used[k]) {
            used[k] = true;
            at = if segments[k][0] == at { segments[k][1] } else { segments[k][0] };
            line.push(at);
        }
        line
    };
    // open chains start at their endpoints
    for v in 0..nv {
        if adj[v].len() == 1 && adj[v].iter().any(|&k| !used[k]) {
            lines.push(walk(v, &mut used));
        }
    }
    for k in 0..segments.len() {
        if !used[k] {
            lines.push(walk(segments[k][0], &mut used));
        }
    }
    lines
}

/// Symmetric Hausdorff distance between two curves, vertices against segments.
pub fn hausdorff(a: &FreeBoundaryCurve, b: &FreeBoundaryCurve) -> f64 {
    let one = |x: &FreeBoundaryCurve, y: &FreeBoundaryCurve| {
        x.vertices.iter().map(|&p| y.distance_to(p)).fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConsistency {
    pub distance: f64,
    pub offset: f64,
    /// `distance ≤ 2h`.
    pub coincident: bool,
    /// One of the two boundaries is empty.
    pub degenerate: bool,
}

/// Relative size of the level offset used to separate the two phase boundaries.
pub const CONSISTENCY_OFFSET: f64 = 1e-3;

/// Hausdorff distance between `∂{u⁺ > δ}` and `∂{u⁻ > δ}`, `δ = 10⁻³·h·Lip(u)`.
pub fn boundary_consistency(u: &GridField) -> Result<BoundaryConsistency> {
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("boundary consistency of a non-finite field".into()));
    }
    let h = u.spec().h();
    let offset = CONSISTENCY_OFFSET * h * lipschitz_seminorm(u);
    let plus = extract_level_set(u, offset);
    let minus = extract_level_set(&u.map(|v| -v), offset);
    if plus.is_empty() || minus.is_empty() {
        return Ok(BoundaryConsistency { distance: f64::INFINITY, offset, coincident: false, degenerate: true });
    }
    let distance = hausdorff(&plus, &minus);
    Ok(BoundaryConsistency { distance, offset, coincident: distance <= 2.0 * h, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn vertical_line() {
        let u = GridField::from_fn(GridSpec::unit(33).unwrap(), |p| p.x - 0.5);
        let c = extract_zero_set(&u);
        assert!(!c.is_empty());
        assert_eq!(c.polylines.len(), 1);
        for (p, n) in c.vertices.iter().zip(&c.normals) {
            assert!((p.x - 0.5).abs() < 1e-14);
            assert!((n.x - 1.0).abs() < 1e-12 && n.y.abs() < 1e-12);
        }
        assert_eq!(c.polylines[0].len(), 33);
    }

    #[test]
    fn positive_field_has_no_curve() {
        let u = GridField::from_fn(GridSpec::unit(17).unwrap(), |p| 1.0 + p.x);
        assert!(extract_zero_set(&u).is_empty());
    }

    #[test]
    fn circle_interpolation_error() {
        let (c, r) = (Point::new(0.5, 0.5), 0.3);
        for nx in [33, 65] {
            let spec = GridSpec::unit(nx).unwrap();
            let h = spec.h();
            let u = GridField::from_fn(spec, |p| p.dist(c).powi(2) - r * r);
            let curve = extract_zero_set(&u);
            assert_eq!(curve.polylines.len(), 1);
            let line = &curve.polylines[0];
            assert_eq!(line.first(), line.last());
            let worst = curve.vertices.iter().map(|p| (p.dist(c) - r).abs()).fold(0.0, f64::max);
            assert!(worst <= 1.5 * h * h / (2.0 * r), "nx {nx}: {worst}");
            for (p, n) in curve.vertices.iter().zip(&curve.normals) {
                assert!(((*p - c).normalized().unwrap().dot(*n)) > 0.99);
            }
        }
    }

    #[test]
    fn saddle_uses_centre_sign() {
        let spec = GridSpec::unit(5).unwrap();
        let mut u = GridField::zeros(spec).map(|_| -1.0);
        // one saddle cell at (1,1)-(2,2) with positive diagonal
        u.set(1, 1, 1.0);
        u.set(2, 2, 1.0);
        let c = extract_zero_set(&u);
        assert_eq!(c.polylines.len(), 2);
        u.set(1, 1, 3.0);
        u.set(2, 2, 3.0);
        let c = extract_zero_set(&u);
        assert_eq!(c.polylines.len(), 1);
    }

    #[test]
    fn two_plane_consistency() {
        let u = GridField::from_fn(GridSpec::unit(65).unwrap(), |p| {
            let t = (p - Point::new(0.5, 0.5)).dot(Point::unit(0.3));
            if t > 0.0 { t } else { 2.0 * t }
        });
        let bc = boundary_consistency(&u).unwrap();
        assert!(!bc.degenerate);
        assert!(bc.distance <= u.spec().h(), "{}", bc.distance);
        assert!(bc.coincident);
    }

    #[test]
    fn dead_core_is_flagged() {
        let w = 0.1;
        let u = GridField::from_fn(GridSpec::unit(65).unwrap(), |p| {
            let t = p.x - 0.5;
            t.signum() * (t.abs() - w).max(0.0)
        });
        let bc = boundary_consistency(&u).unwrap();
        assert!((bc.distance - 2.0 * w).abs() < 2.0 * u.spec().h(), "{}", bc.distance);
        assert!(!bc.coincident);
    }

    #[test]
    fn one_phase_is_degenerate() {
        let u = GridField::from_fn(GridSpec::unit(17).unwrap(), |p| p.x);
        assert!(boundary_consistency(&u).unwrap().degenerate);
    }
}
