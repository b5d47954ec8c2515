//! Uniform node-centred 2-D grids.
//!
//! A [`GridSpec`] describes an `nx × nx` lattice of nodes covering the square
//! `[origin, origin + extent]²`. A [`GridField`] stores one value per node plus a
//! Dirichlet mask: the outer ring of nodes is always fixed, and callers may pin
//! additional interior nodes (used to excise the singular centre of a barrier).
//!
//! Node `(i, j)` sits at `origin + (i h, j h)` and is stored at `j * nx + i`, so
//! rows run along `x`.

use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding whether a point lies inside a grid's extent.
const CONTAINS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Unit vector at angle `theta` from the positive x axis.
    pub fn unit(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, t: f64) -> Point {
        Point::new(self.x * t, self.y * t)
    }
}

/// Geometry of a square node lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    nx: usize,
    extent: f64,
    origin: Point,
}

impl GridSpec {
    pub const MIN_NODES: usize = 5;

    pub fn new(nx: usize, extent: f64, origin: Point) -> Result<Self> {
        if nx < Self::MIN_NODES {
            return Err(Error::Config(format!(
                "grid needs at least {} nodes per axis, got {nx}",
                Self::MIN_NODES
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Config(format!("grid extent must be positive, got {extent}")));
        }
        if !origin.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(Self { nx, extent, origin })
    }

    /// The unit square `[0, 1]²`.
    pub fn unit(nx: usize) -> Result<Self> {
        Self::new(nx, 1.0, Point::default())
    }

    /// The square `[-half, half]²` centred at the origin, used for blow-up windows.
    pub fn centered(nx: usize, half: f64) -> Result<Self> {
        Self::new(nx, 2.0 * half, Point::new(-half, -half))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Node spacing.
    pub fn h(&self) -> f64 {
        self.extent / (self.nx - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.nx
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.nx);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        let h = self.h();
        Point::new(self.origin.x + i as f64 * h, self.origin.y + j as f64 * h)
    }

    /// True for nodes on the outer ring.
    #[inline]
    pub fn is_ring(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.nx - 1
    }

    pub fn contains(&self, p: Point) -> bool {
        let slack = CONTAINS_SLACK * self.extent;
        let hi = self.origin + Point::new(self.extent, self.extent);
        p.x >= self.origin.x - slack && p.x <= hi.x + slack && p.y >= self.origin.y - slack && p.y <= hi.y + slack
    }

    /// Distance from `p` to the outer boundary of the square (negative outside).
    pub fn dist_to_boundary(&self, p: Point) -> f64 {
        let hi = self.origin + Point::new(self.extent, self.extent);
        (p.x - self.origin.x).min(hi.x - p.x).min(p.y - self.origin.y).min(hi.y - p.y)
    }

    /// True when the closed ball `B_r(c)` lies inside the square.
    pub fn contains_ball(&self, c: Point, r: f64) -> bool {
        self.dist_to_boundary(c) >= r - CONTAINS_SLACK * self.extent
    }

    /// Continuous grid coordinates of `p` (node units).
    #[inline]
    pub fn to_grid(&self, p: Point) -> (f64, f64) {
        let h = self.h();
        (snap((p.x - self.origin.x) / h), snap((p.y - self.origin.y) / h))
    }

    /// The grid with half the resolution on the same square, if `nx - 1` is even.
    pub fn coarsened(&self) -> Option<GridSpec> {
        if !(self.nx - 1).is_multiple_of(2) {
            return None;
        }
        GridSpec::new((self.nx - 1) / 2 + 1, self.extent, self.origin).ok()
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.extent == other.extent && self.origin == other.origin
    }
}

/// Rounds grid coordinates lying within floating-point noise of a node.
#[inline]
fn snap(g: f64) -> f64 {
    let r = g.round();
    if (g - r).abs() < 1e-9 {
        r
    } else {
        g
    }
}

/// Scalar field on a [`GridSpec`] with a Dirichlet mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
    fixed: Vec<bool>,
}

impl GridField {
    /// Samples `f` at every node. Only the outer ring is marked as Dirichlet.
    pub fn from_fn(spec: GridSpec, f: impl Fn(Point) -> f64 + Sync) -> Self {
        let nx = spec.nx;
        let mut values = vec![0.0; spec.len()];
        values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(spec.node(i, j));
            }
        });
        Self::with_ring_mask(spec, values)
    }

    /// Wraps raw row-major node values; the outer ring becomes the Dirichlet mask.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Input(format!(
                "expected {} node values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = spec.coords(k);
            return Err(Error::Input(format!("non-finite value at node ({i}, {j})")));
        }
        Ok(Self::with_ring_mask(spec, values))
    }

    fn with_ring_mask(spec: GridSpec, values: Vec<f64>) -> Self {
        let fixed = (0..spec.len())
            .map(|k| {
                let (i, j) = spec.coords(k);
                spec.is_ring(i, j)
            })
            .collect();
        Self { spec, values, fixed }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::with_ring_mask(spec, vec![0.0; spec.len()])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Dirichlet mask: outer ring plus any pinned interior nodes.
    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.spec.index(i, j);
        self.values[k] = v;
    }

    #[inline]
    pub fn is_fixed(&self, i: usize, j: usize) -> bool {
        self.fixed[self.spec.index(i, j)]
    }

    /// Pins every interior node where `pred` holds, assigning it `value(p)`.
    /// Returns the number of nodes pinned.
    pub fn pin_where(&mut self, pred: impl Fn(Point) -> bool, value: impl Fn(Point) -> f64) -> usize {
        let mut count = 0;
        for j in 0..self.spec.nx {
            for i in 0..self.spec.nx {
                let p = self.spec.node(i, j);
                let k = self.spec.index(i, j);
                if !self.fixed[k] && pred(p) {
                    self.fixed[k] = true;
                    self.values[k] = value(p);
                    count += 1;
                }
            }
        }
        count
    }

    /// Number of pinned nodes that are not on the outer ring.
    pub fn pinned_interior(&self) -> usize {
        (0..self.spec.len())
            .filter(|&k| {
                let (i, j) = self.spec.coords(k);
                self.fixed[k] && !self.spec.is_ring(i, j)
            })
            .count()
    }

    /// Same grid and mask, values transformed node by node.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
            fixed: self.fixed.clone(),
        }
    }

    /// Same grid and mask with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<GridField> {
        if values.len() != self.values.len() {
            return Err(Error::Input("value count does not match grid".into()));
        }
        Ok(GridField {
            spec: self.spec,
            values,
            fixed: self.fixed.clone(),
        })
    }

    /// `u⁺ = max(u, 0)`.
    pub fn positive_part(&self) -> GridField {
        self.map(|v| v.max(0.0))
    }

    /// `u⁻ = max(-u, 0)`.
    pub fn negative_part(&self) -> GridField {
        self.map(|v| (-v).max(0.0))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.spec.same_as(&other.spec)
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "grid mismatch: {:?} vs {:?}",
                self.spec, other.spec
            )))
        }
    }

    /// `max_k |self_k - other_k|`.
    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Node-wise `self - other`, keeping this field's mask.
    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.with_values(values)
    }

    /// Replaces interior (non-fixed) values by those of `init`; Dirichlet values stay.
    pub fn with_interior_from(&self, init: &GridField) -> Result<GridField> {
        self.check_same_grid(init)?;
        let values = self
            .values
            .iter()
            .zip(&init.values)
            .zip(&self.fixed)
            .map(|((&b, &v), &fixed)| if fixed { b } else { v })
            .collect();
        self.with_values(values)
    }

    /// Injection onto the grid with half the resolution.
    pub fn coarsened(&self) -> Option<GridField> {
        let cs = self.spec.coarsened()?;
        let mut values = Vec::with_capacity(cs.len());
        let mut fixed = Vec::with_capacity(cs.len());
        for j in 0..cs.nx {
            for i in 0..cs.nx {
                let k = self.spec.index(2 * i, 2 * j);
                values.push(self.values[k]);
                fixed.push(self.fixed[k] || cs.is_ring(i, j));
            }
        }
        Some(GridField { spec: cs, values, fixed })
    }

    /// Interpolates `coarse` bilinearly into this field's free nodes.
    pub fn prolongated_from(&self, coarse: &GridField) -> GridField {
        let mut out = self.clone();
        let spec = self.spec;
        for k in 0..spec.len() {
            if !self.fixed[k] {
                let (i, j) = spec.coords(k);
                out.values[k] = coarse.sample_clamped(spec.node(i, j));
            }
        }
        out
    }

    /// Bilinear interpolation, clamping `p` onto the grid square.
    pub fn sample_clamped(&self, p: Point) -> f64 {
        let (gx, gy) = self.spec.to_grid(p);
        let last = (self.spec.nx - 1) as f64;
        self.sample_grid_coords(gx.clamp(0.0, last), gy.clamp(0.0, last))
    }

    /// Bilinear interpolation at continuous grid coordinates inside `[0, nx-1]²`.
    #[inline]
    pub(crate) fn sample_grid_coords(&self, gx: f64, gy: f64) -> f64 {
        let nx = self.spec.nx;
        let i = (gx.floor() as usize).min(nx - 2);
        let j = (gy.floor() as usize).min(nx - 2);
        let s = gx - i as f64;
        let t = gy - j as f64;
        let k = j * nx + i;
        let v00 = self.values[k];
        let v10 = self.values[k + 1];
        let v01 = self.values[k + nx];
        let v11 = self.values[k + nx + 1];
        (1.0 - t) * ((1.0 - s) * v00 + s * v10) + t * ((1.0 - s) * v01 + s * v11)
    }

    /// Gradient of the bilinear interpolant at `p` (clamped onto the grid).
    pub fn sample_gradient(&self, p: Point) -> Point {
        let nx = self.spec.nx;
        let h = self.spec.h();
        let last = (nx - 1) as f64;
        let (gx, gy) = self.spec.to_grid(p);
        let (gx, gy) = (gx.clamp(0.0, last), gy.clamp(0.0, last));
        let i = (gx.floor() as usize).min(nx - 2);
        let j = (gy.floor() as usize).min(nx - 2);
        let s = gx - i as f64;
        let t = gy - j as f64;
        let k = j * nx + i;
        let (v00, v10, v01, v11) = (self.values[k], self.values[k + 1], self.values[k + nx], self.values[k + nx + 1]);
        let dx = (1.0 - t) * (v10 - v00) + t * (v11 - v01);
        let dy = (1.0 - s) * (v01 - v00) + s * (v11 - v10);
        Point::new(dx / h, dy / h)
    }
}

/// Builds the Dirichlet problem datum: `f` on the outer ring, zero inside.
pub fn make_grid(spec: GridSpec, f: impl Fn(Point) -> f64) -> Result<GridField> {
    let nx = spec.nx;
    let mut values = vec![0.0; spec.len()];
    for j in 0..nx {
        for i in 0..nx {
            if spec.is_ring(i, j) {
                let v = f(spec.node(i, j));
                if !v.is_finite() {
                    return Err(Error::Input(format!(
                        "boundary datum is not finite at node ({i}, {j})"
                    )));
                }
                values[spec.index(i, j)] = v;
            }
        }
    }
    Ok(GridField::with_ring_mask(spec, values))
}

/// Per-node gradient pair. Ring nodes carry one-sided differences.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    spec: GridSpec,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl VectorField {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn get(&self, i: usize, j: usize) -> Point {
        let k = self.spec.index(i, j);
        Point::new(self.gx[k], self.gy[k])
    }

    /// Ring entries come from one-sided differences.
    pub fn is_one_sided(&self, i: usize, j: usize) -> bool {
        self.spec.is_ring(i, j)
    }
}

/// Second-order one-sided or central difference along one axis.
#[inline]
fn axis_derivative(at: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
    } else {
        (at(k + 1) - at(k - 1)) / (2.0 * h)
    }
}

/// Central differences inside, second-order one-sided differences on the ring.
pub fn gradient_field(u: &GridField) -> Result<VectorField> {
    if u.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("gradient of a non-finite field".into()));
    }
    let spec = u.spec;
    let nx = spec.nx;
    let h = spec.h();
    let mut gx = vec![0.0; spec.len()];
    let mut gy = vec![0.0; spec.len()];
    gx.par_chunks_mut(nx)
        .zip(gy.par_chunks_mut(nx))
        .enumerate()
        .for_each(|(j, (rx, ry))| {
            for i in 0..nx {
                rx[i] = axis_derivative(|a| u.get(a, j), i, nx, h);
                ry[i] = axis_derivative(|b| u.get(i, b), j, nx, h);
            }
        });
    Ok(VectorField { spec, gx, gy })
}

/// Bilinear interpolation of `u` at `p`; exact on bilinear functions.
pub fn bilinear_sample(u: &GridField, p: Point) -> Result<f64> {
    if !p.is_finite() || !u.spec.contains(p) {
        return Err(Error::Domain(format!(
            "sample point ({}, {}) outside the grid",
            p.x, p.y
        )));
    }
    Ok(u.sample_clamped(p))
}

/// Blow-up rescaling `u_r(ξ) = u(x0 + r ξ) / r` sampled onto `out_spec`.
pub fn rescale_blowup(u: &GridField, x0: Point, r: f64, out_spec: GridSpec) -> Result<GridField> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Config(format!("blow-up scale must be positive, got {r}")));
    }
    if !u.spec.contains_ball(x0, 2.0 * r) {
        return Err(Error::Domain(format!(
            "ball of radius {} around ({}, {}) leaves the grid",
            2.0 * r,
            x0.x,
            x0.y
        )));
    }
    let nx = out_spec.nx;
    let mut values = vec![0.0; out_spec.len()];
    let outside = std::sync::atomic::AtomicBool::new(false);
    values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            let p = x0 + out_spec.node(i, j) * r;
            if !u.spec.contains(p) {
                outside.store(true, std::sync::atomic::Ordering::Relaxed);
            }
            *v = u.sample_clamped(p) / r;
        }
    });
    if outside.into_inner() {
        return Err(Error::Domain(
            "blow-up window maps outside the source grid".into(),
        ));
    }
    GridField::from_values(out_spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn make_grid_zero_datum_flags_ring() {
        let spec = GridSpec::unit(5).unwrap();
        let g = make_grid(spec, |_| 0.0).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert_eq!(g.fixed_mask().iter().filter(|&&f| f).count(), 16);
    }

    #[test]
    fn make_grid_corners_carry_datum() {
        let spec = GridSpec::unit(5).unwrap();
        let g = make_grid(spec, |p| p.x - 0.5).unwrap();
        assert_eq!(g.get(0, 0), -0.5);
        assert_eq!(g.get(4, 4), 0.5);
        assert_eq!(g.get(2, 2), 0.0);
    }

    #[test]
    fn make_grid_rejects_small_and_nonfinite() {
        assert!(matches!(GridSpec::unit(4), Err(Error::Config(_))));
        let spec = GridSpec::unit(5).unwrap();
        assert!(matches!(make_grid(spec, |_| f64::NAN), Err(Error::Input(_))));
    }

    #[test]
    fn sine_datum_adjacent_differences_follow_lipschitz_bound() {
        // f = sin(2π s) with s the arclength along the boundary (perimeter 4).
        let spec = GridSpec::unit(101).unwrap();
        let h = spec.h();
        let arclength = |p: Point| {
            if p.y <= 1e-12 {
                p.x
            } else if p.x >= 1.0 - 1e-12 {
                1.0 + p.y
            } else if p.y >= 1.0 - 1e-12 {
                3.0 - p.x
            } else {
                4.0 - p.y
            }
        };
        let g = make_grid(spec, |p| (2.0 * PI * arclength(p)).sin()).unwrap();
        let n = spec.nx();
        let mut ring = Vec::new();
        (0..n).for_each(|i| ring.push((i, 0)));
        (1..n).for_each(|j| ring.push((n - 1, j)));
        (0..n - 1).rev().for_each(|i| ring.push((i, n - 1)));
        (1..n - 1).rev().for_each(|j| ring.push((0, j)));
        let max_diff = ring
            .windows(2)
            .map(|w| (g.get(w[0].0, w[0].1) - g.get(w[1].0, w[1].1)).abs())
            .fold(0.0, f64::max);
        assert!(max_diff <= 2.0 * PI * h * 1.1, "{max_diff}");
    }

    #[test]
    fn gradient_exact_on_affine_and_quadratic() {
        let spec = GridSpec::unit(11).unwrap();
        let u = GridField::from_fn(spec, |p| p.x);
        let g = gradient_field(&u).unwrap();
        for j in 0..11 {
            for i in 0..11 {
                assert!((g.get(i, j).x - 1.0).abs() < 1e-12);
                assert!(g.get(i, j).y.abs() < 1e-12);
            }
        }
        let c = GridField::from_fn(spec, |_| 3.25);
        let gc = gradient_field(&c).unwrap();
        assert!(gc.gx.iter().chain(&gc.gy).all(|v| v.abs() < 1e-12));

        let q = GridField::from_fn(spec, |p| p.x * p.x);
        let gq = gradient_field(&q).unwrap();
        for j in 1..10 {
            assert!((gq.get(5, j).x - 1.0).abs() < 1e-12);
        }
        assert!(gq.is_one_sided(0, 3) && !gq.is_one_sided(3, 3));
    }

    #[test]
    fn bilinear_exactness_and_domain() {
        let spec = GridSpec::unit(11).unwrap();
        let u = GridField::from_fn(spec, |p| 2.5 * p.x - 0.75);
        let v = bilinear_sample(&u, Point::new(0.37, 0.6)).unwrap();
        assert!((v - (0.37 * 2.5 - 0.75)).abs() < 1e-14);
        assert_eq!(bilinear_sample(&u, spec.node(3, 7)).unwrap(), u.get(3, 7));
        assert!(matches!(
            bilinear_sample(&u, Point::new(1.2, 0.5)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bilinear_xy_mid_cell() {
        // (0.5, 0.5) is the centre of a cell when nx - 1 is odd.
        let spec = GridSpec::unit(10).unwrap();
        let u = GridField::from_fn(spec, |p| p.x * p.y);
        let v = bilinear_sample(&u, Point::new(0.5, 0.5)).unwrap();
        // Closed-form bilinear value on the containing cell [4h, 5h]².
        let h = spec.h();
        let (x0, x1) = (4.0 * h, 5.0 * h);
        let oracle = 0.25 * (x0 * x0 + x0 * x1 + x1 * x0 + x1 * x1);
        assert!((v - oracle).abs() < 1e-14);
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn blowup_of_plane_is_scale_invariant() {
        let spec = GridSpec::unit(65).unwrap();
        let x0 = Point::new(0.5, 0.5);
        let nu = Point::unit(0.3);
        let u = GridField::from_fn(spec, |p| (p - x0).dot(nu));
        let out = GridSpec::centered(33, 1.0).unwrap();
        for r in [0.2, 0.1, 0.05] {
            let b = rescale_blowup(&u, x0, r, out).unwrap();
            for j in 0..33 {
                for i in 0..33 {
                    let xi = out.node(i, j);
                    assert!((b.get(i, j) - xi.dot(nu)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn blowup_of_paraboloid() {
        let spec = GridSpec::unit(129).unwrap();
        let x0 = Point::new(0.5, 0.5);
        let u = GridField::from_fn(spec, |p| (p - x0).dot(p - x0));
        let out = GridSpec::centered(17, 0.5).unwrap();
        let b = rescale_blowup(&u, x0, 0.5, out).unwrap_err();
        assert!(matches!(b, Error::Domain(_)));
        let b = rescale_blowup(&u, x0, 0.2, out).unwrap();
        let h = spec.h();
        for j in 0..17 {
            for i in 0..17 {
                let xi = out.node(i, j);
                // bilinear interpolation error of |x|² is at most h²/2 before dividing by r
                assert!((b.get(i, j) - 0.2 * xi.dot(xi)).abs() <= h * h / 0.2);
            }
        }
    }

    #[test]
    fn coarsen_prolongate_roundtrip_on_bilinear() {
        let spec = GridSpec::unit(17).unwrap();
        let u = GridField::from_fn(spec, |p| 1.0 + p.x - 2.0 * p.y + 0.5 * p.x * p.y);
        let c = u.coarsened().unwrap();
        assert_eq!(c.spec().nx(), 9);
        let back = u.prolongated_from(&c);
        assert!(back.max_abs_diff(&u).unwrap() < 1e-14);
    }
}
