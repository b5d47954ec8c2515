//! Shared problem data for tests, the acceptance suite and the command line.

use std::f64::consts::PI;

use crate::barriers::{barrier_psi, BarrierSpec, TwoPlaneSpec};
use crate::error::Result;
use crate::grid::{make_grid, GridField, GridSpec, Point};
use crate::operators::{Ellipticity, MatrixFamily, SymMat2};

/// `(x − 1/2) + sin(πy)/4`: changes sign along a curved interface crossing the unit square.
pub fn standard_datum(p: Point) -> f64 {
    (p.x - 0.5) + 0.25 * (PI * p.y).sin()
}

pub fn harmonic_quadratic(p: Point) -> f64 {
    p.x * p.x - p.y * p.y
}

/// Dirichlet data on the unit square, zero initial guess inside.
pub fn boundary_data(nx: usize, f: impl Fn(Point) -> f64) -> Result<GridField> {
    make_grid(GridSpec::unit(nx)?, f)
}

/// Disjoint-support species data `(f⁺, f⁻)` of the standard datum.
pub fn segregation_data(nx: usize) -> Result<(GridField, GridField)> {
    Ok((
        boundary_data(nx, |p| standard_datum(p).max(0.0))?,
        boundary_data(nx, |p| (-standard_datum(p)).max(0.0))?,
    ))
}

/// `ψ = c(r/|x − c| − 1)` with `λ = 1, Λ = 2, γ = 1, r = 0.4` centred in the unit square.
pub fn standard_barrier() -> BarrierSpec {
    BarrierSpec::new(1.0, 0.4, 1.0, Point::new(0.5, 0.5)).expect("valid barrier")
}

/// `ψ` sampled on the unit grid, with the centre node (if any) set to 0.
pub fn barrier_field(spec: &BarrierSpec, nx: usize) -> Result<GridField> {
    let grid = GridSpec::unit(nx)?;
    Ok(GridField::from_fn(grid, |p| barrier_psi(spec, p).unwrap_or(0.0)))
}

/// Dirichlet problem whose solution is `ψ`: ψ on the ring and pinned on `|x − c| < r/8`.
pub fn barrier_dirichlet(spec: &BarrierSpec, nx: usize) -> Result<GridField> {
    let mut u = boundary_data(nx, |p| barrier_psi(spec, p).unwrap_or(0.0))?;
    let (c, mask) = (spec.center, spec.r / 8.0);
    u.pin_where(|p| p.dist(c) < mask, |p| barrier_psi(spec, p).unwrap_or(0.0));
    Ok(u)
}

/// Ellipticity wide enough for every shipped family.
pub fn catalog_ellipticity() -> Ellipticity {
    Ellipticity::new(0.5, 2.0).expect("valid bounds")
}

/// One family of each kind.
pub fn shipped_families(ell: Ellipticity) -> Vec<MatrixFamily> {
    let mut out = vec![MatrixFamily::full_pucci(ell), MatrixFamily::identity_only(ell)];
    let r0 = (1.0 - ell.lambda()).min(ell.cap_lambda() - 1.0).min(0.5);
    if r0 > 0.0 {
        out.push(MatrixFamily::frobenius_ball(r0, ell).expect("radius fits the bounds"));
    }
    let (lo, hi) = (ell.lambda(), ell.cap_lambda());
    let members = vec![
        SymMat2::identity(),
        SymMat2::diag(lo, hi),
        SymMat2::diag(hi, lo),
        SymMat2::diag(0.5 * (1.0 + lo), 0.5 * (1.0 + hi)).rotated(0.7),
    ];
    out.push(MatrixFamily::finite_set(members, ell).expect("members lie in the ellipticity window"));
    out
}

/// Two-plane blow-up profiles through the centre of the unit square, at the given tilts from the x-axis.
pub fn two_plane_fixtures(alpha: f64, beta: f64, tilts_deg: &[f64]) -> Vec<TwoPlaneSpec> {
    tilts_deg
        .iter()
        .map(|t| TwoPlaneSpec::with_angle(alpha, beta, t.to_radians(), Point::new(0.5, 0.5)).expect("valid two-plane"))
        .collect()
}
