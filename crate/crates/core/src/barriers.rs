//! Reference solutions: the radial power barrier `ψ`, radial profiles of
//! `F⁻(φ) = 0` on an annulus, and two-plane fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Point};
use crate::operators::{family_extremal, Ellipticity, Extremum, FamilyKind, MatrixFamily, SymMat2};

/// Default number of RK4 steps across the annulus.
pub const RADIAL_STEPS: usize = 10_000;

/// `ψ(x) = c((r/|x − center|)^γ − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub c: f64,
    pub r: f64,
    pub gamma: f64,
    pub center: Point,
}

impl BarrierSpec {
    pub fn new(c: f64, r: f64, gamma: f64, center: Point) -> Result<Self> {
        for (name, v) in [("c", c), ("r", r), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("barrier {name} must be positive, got {v}")));
            }
        }
        if !center.is_finite() {
            return Err(Error::Config("barrier center must be finite".into()));
        }
        Ok(Self { c, r, gamma, center })
    }

    /// Slope bound `cγ/r` of the lower estimate `ψ(x) ≥ (cγ/r)(r − |x|)`.
    pub fn boundary_slope(&self) -> f64 {
        self.c * self.gamma / self.r
    }
}

/// Exponent `(Λ(n−1) − λ)/λ` at which `M⁻(ψ) = 0` away from the centre.
pub fn gamma_exponent(ell: &Ellipticity, n: usize) -> Result<f64> {
    gamma_from_bounds(ell.lambda(), ell.cap_lambda(), n)
}

/// [`gamma_exponent`] on raw bounds `0 < λ ≤ Λ`, admitting the Laplacian limit `λ = Λ = 1`.
pub fn gamma_from_bounds(lambda: f64, cap_lambda: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Config(format!("dimension must be at least 2, got {n}")));
    }
    if !(lambda > 0.0 && cap_lambda >= lambda && cap_lambda.is_finite()) {
        return Err(Error::Config(format!("need 0 < lambda <= Lambda, got {lambda}, {cap_lambda}")));
    }
    Ok((cap_lambda * (n as f64 - 1.0) - lambda) / lambda)
}

pub fn barrier_psi(spec: &BarrierSpec, x: Point) -> Result<f64> {
    let d = x.dist(spec.center);
    if d == 0.0 {
        return Err(Error::Singularity(format!(
            "barrier evaluated at its centre ({}, {})",
            spec.center.x, spec.center.y
        )));
    }
    Ok(spec.c * ((spec.r / d).powf(spec.gamma) - 1.0))
}

/// `α⟨x − x0, ν⟩⁺ − β⟨x − x0, ν⟩⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPlaneSpec {
    pub alpha: f64,
    pub beta: f64,
    pub nu: Point,
    pub x0: Point,
}

impl TwoPlaneSpec {
    pub fn new(alpha: f64, beta: f64, nu: Point, x0: Point) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::Config(format!("two-plane slopes must be positive, got {alpha}, {beta}")));
        }
        if !((nu.norm() - 1.0).abs() <= 1e-12) {
            return Err(Error::Config(format!("two-plane direction must be a unit vector, |nu| = {}", nu.norm())));
        }
        if !x0.is_finite() {
            return Err(Error::Config("two-plane vertex must be finite".into()));
        }
        Ok(Self { alpha, beta, nu, x0 })
    }

    /// Direction at angle `theta` from the x-axis.
    pub fn with_angle(alpha: f64, beta: f64, theta: f64, x0: Point) -> Result<Self> {
        Self::new(alpha, beta, Point::unit(theta), x0)
    }

    #[inline]
    pub fn value(&self, x: Point) -> f64 {
        let t = (x - self.x0).dot(self.nu);
        if t >= 0.0 {
            self.alpha * t
        } else {
            self.beta * t
        }
    }
}

pub fn two_plane_field(spec: &TwoPlaneSpec, grid: GridSpec) -> GridField {
    GridField::from_fn(grid, |p| spec.value(p))
}

/// Solution of `F⁻(φ) = 0` on `r/2 < |x| < r` with `φ = 1` inside, `φ = 0` outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: f64,
    pub rho_samples: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// `σ = −r φ'(r)`, the boundary slope in units of `1/r`.
    pub sigma: f64,
    /// Shooting slope `φ'(r/2)`.
    pub initial_slope: f64,
}

impl RadialProfile {
    /// Linear interpolation of the sampled profile.
    pub fn eval(&self, rho: f64) -> Option<f64> {
        let n = self.rho_samples.len();
        if !(rho >= self.rho_samples[0] && rho <= self.rho_samples[n - 1]) {
            return None;
        }
        let k = self.rho_samples.partition_point(|&s| s <= rho).clamp(1, n - 1);
        let (a, b) = (self.rho_samples[k - 1], self.rho_samples[k]);
        let t = (rho - a) / (b - a);
        Some((1.0 - t) * self.phi_values[k - 1] + t * self.phi_values[k])
    }
}

/// Radial coefficient `κ` with `F⁻(diag(κ, s)) = 0`, so `φ'' = κ|φ'/ρ|` along the sign `s` of `φ'`.
fn radial_kappa(fam: &MatrixFamily, s: f64) -> Result<f64> {
    let g = |k: f64| family_extremal(fam, &SymMat2::diag(k, s), Extremum::Inf);
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut grow = 0;
    while g(lo) > 0.0 || g(hi) < 0.0 {
        lo *= 2.0;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Bracket(format!(
                "radial coefficient for tangential sign {s}: g({lo}) = {}, g({hi}) = {}",
                g(lo),
                g(hi)
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// RK4 from `ρ = r/2` with `(φ, φ') = (1, slope)`; returns the fine-grid `φ` values.
fn integrate(r: f64, slope: f64, steps: usize, k_neg: f64, k_pos: f64) -> Vec<f64> {
    let d = 0.5 * r / steps as f64;
    let rhs = |rho: f64, p: f64| {
        let b = p / rho;
        if b < 0.0 {
            -k_neg * b
        } else {
            k_pos * b
        }
    };
    let mut out = Vec::with_capacity(steps + 1);
    let (mut phi, mut p) = (1.0, slope);
    out.push(phi);
    for m in 0..steps {
        let rho = 0.5 * r + m as f64 * d;
        let k1 = (p, rhs(rho, p));
        let k2 = (p + 0.5 * d * k1.1, rhs(rho + 0.5 * d, p + 0.5 * d * k1.1));
        let k3 = (p + 0.5 * d * k2.1, rhs(rho + 0.5 * d, p + 0.5 * d * k2.1));
        let k4 = (p + d * k3.1, rhs(rho + d, p + d * k3.1));
        phi += d / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        p += d / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        out.push(phi);
    }
    out
}

/// Shoots on `φ'(r/2)` until `φ(r) = 0`.
pub fn radial_profile(fam: &MatrixFamily, r: f64, samples: usize) -> Result<RadialProfile> {
    radial_profile_with_steps(fam, r, samples, RADIAL_STEPS)
}

pub fn radial_profile_with_steps(fam: &MatrixFamily, r: f64, samples: usize, min_steps: usize) -> Result<RadialProfile> {
    if let FamilyKind::FiniteSet(_) = fam.kind() {
        return Err(Error::Config("radial profiles need a rotation-closed family".into()));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Config(format!("outer radius must be positive, got {r}")));
    }
    if samples < 3 {
        return Err(Error::Config(format!("need at least 3 samples, got {samples}")));
    }
    let k_neg = radial_kappa(fam, -1.0)?;
    let k_pos = radial_kappa(fam, 1.0)?;
    let stride = min_steps.div_ceil(samples - 1).max(2);
    let steps = stride * (samples - 1);
    let end = |s: f64| *integrate(r, s, steps, k_neg, k_pos).last().expect("steps > 0");

    // φ(r) is increasing in the initial slope; bracket the root on the negative axis.
    let (mut a, mut b) = (-1.0 / r, -0.25 / r);
    let (mut fa, mut fb) = (end(a), end(b));
    let mut grow = 0;
    while fa > 0.0 || fb < 0.0 {
        if fa > 0.0 {
            a *= 2.0;
            fa = end(a);
        }
        if fb < 0.0 {
            b *= 0.5;
            fb = end(b);
        }
        grow += 1;
        if grow > 60 {
            return Err(Error::Bracket(format!(
                "shooting slope: phi(r) = {fa} at {a}, {fb} at {b}"
            )));
        }
    }
    // Illinois false position
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = end(c);
        if fc == 0.0 || (b - a).abs() <= 1e-15 * c.abs() {
            a = c;
            b = c;
            break;
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if fa.abs() < 1e-15 || fb.abs() < 1e-15 {
            break;
        }
    }
    let slope = if fa.abs() <= fb.abs() { a } else { b };
    let mut fine = integrate(r, slope, steps, k_neg, k_pos);
    *fine.last_mut().expect("steps > 0") = 0.0;
    let d = 0.5 * r / steps as f64;
    let dphi = (3.0 * fine[steps] - 4.0 * fine[steps - 1] + fine[steps - 2]) / (2.0 * d);
    let rho_samples = (0..samples).map(|m| 0.5 * r + m as f64 * stride as f64 * d).collect::<Vec<_>>();
    let phi_values = (0..samples).map(|m| fine[m * stride]).collect();
    let mut rho_samples = rho_samples;
    *rho_samples.last_mut().expect("samples > 0") = r;
    Ok(RadialProfile {
        r,
        rho_samples,
        phi_values,
        sigma: -r * dphi,
        initial_slope: slope,
    })
}

/// Lower and upper references `ψ₁ = ((r/ρ)^γ − 1)/(2^γ − 1)` and `ψ₂ = log(r/ρ)/log 2`.
pub fn annulus_references(rho: f64, r: f64, gamma: f64) -> (f64, f64) {
    let lower = ((r / rho).powf(gamma) - 1.0) / (2f64.powf(gamma) - 1.0);
    let upper = (r / rho).ln() / std::f64::consts::LN_2;
    (lower, upper)
}

/// Largest violation of `ψ₁ ≤ φ ≤ ψ₂` over the samples (non-positive when sandwiched).
pub fn profile_sandwich_violation(profile: &RadialProfile, gamma: f64) -> f64 {
    profile
        .rho_samples
        .iter()
        .zip(&profile.phi_values)
        .map(|(&rho, &phi)| {
            let (lo, hi) = annulus_references(rho, profile.r, gamma);
            (lo - phi).max(phi - hi)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Admissible range `[γ/(2^γ − 1), 1/log 2]` for `σ` in two dimensions.
pub fn sigma_bounds(gamma: f64) -> (f64, f64) {
    (gamma / (2f64.powf(gamma) - 1.0), 1.0 / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    BelowLower,
    AboveUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub kind: ViolationKind,
    /// Distance beyond the slack.
    pub excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub violations: Vec<Violation>,
    /// `max(lower − u, u − upper)` over all nodes.
    pub worst_gap: f64,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Nodes with `u < lower − slack` or `u > upper + slack`.
pub fn sandwich_check(u: &GridField, lower: &GridField, upper: &GridField, slack: f64) -> Result<SandwichReport> {
    if !u.same_grid(lower) || !u.same_grid(upper) {
        return Err(Error::Input("sandwich fields live on different grids".into()));
    }
    let spec = u.spec();
    let mut report = SandwichReport { violations: Vec::new(), worst_gap: f64::NEG_INFINITY };
    for k in 0..spec.len() {
        let (v, lo, hi) = (u.values()[k], lower.values()[k], upper.values()[k]);
        report.worst_gap = report.worst_gap.max(lo - v).max(v - hi);
        let (i, j) = spec.coords(k);
        if v < lo - slack {
            report.violations.push(Violation { i, j, kind: ViolationKind::BelowLower, excess: lo - slack - v });
        } else if v > hi + slack {
            report.violations.push(Violation { i, j, kind: ViolationKind::AboveUpper, excess: v - hi - slack });
        }
    }
    Ok(report)
}
