//! The self-check battery behind `verify`: each suite recomputes a closed-form or analytic
//! oracle and reports its measured defect against a fixed bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::{radial_profile, two_plane_field, BarrierSpec, TwoPlaneSpec};
use crate::error::Result;
use crate::fixtures;
use crate::freeboundary::{check_alpha_beta, fit_two_plane};
use crate::grid::{GridField, GridSpec, Point};
use crate::monotonicity::{j_series_check, DEFAULT_ETA, TWO_PLANE_CONSTANT};
use crate::operators::{
    discrete_residual, family_extremal, pucci_eval, Ellipticity, Extremum, MatrixFamily, OperatorPair,
    OperatorSelector, SchemeSpec, Sign, SymMat2,
};
use crate::solver::{solve_dirichlet, IterationMethod, SolveConfig};

/// Absolute tolerance of the operator identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!("<= {bound:e}"), passed: value <= bound }
    }

    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, bound: format!("in [{lo}, {hi}]"), passed: (lo..=hi).contains(&value) }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, bound: "== 1".into(), passed: ok }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Worst violation of each operator identity; every entry is `≤ 0` up to rounding when the identity holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgebraDefects {
    /// `M⁻ ≤ F⁻ ≤ tr ≤ F⁺ ≤ M⁺`
    pub chain: f64,
    /// `|F(tM) − tF(M)|`, `t ≥ 0`
    pub homogeneity: f64,
    /// `F⁻(M) + F⁻(N) − F⁻(M+N)` and `F⁺(M+N) − F⁺(M) − F⁺(N)`
    pub additivity: f64,
    /// distance of `F(M+N) − F(M)` outside `[M⁻(N), M⁺(N)]`
    pub ellipticity: f64,
    /// `|M⁻(M) + M⁺(−M)|`
    pub duality: f64,
    /// `|F(OᵗMO) − F(M)|` over rotation-closed families
    pub rotation: f64,
}

impl AlgebraDefects {
    pub fn worst(&self) -> f64 {
        [self.chain, self.homogeneity, self.additivity, self.ellipticity, self.duality, self.rotation]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn random_mat(rng: &mut ChaCha8Rng) -> SymMat2 {
    SymMat2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))
}

/// Operator identities over `samples` random matrices, every family in `fams`, and `rotations`
/// random rotations per family.
pub fn operator_algebra(fams: &[MatrixFamily], samples: usize, rotations: usize, seed: u64) -> AlgebraDefects {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = AlgebraDefects {
        chain: f64::NEG_INFINITY,
        additivity: f64::NEG_INFINITY,
        ellipticity: f64::NEG_INFINITY,
        ..Default::default()
    };
    for _ in 0..samples {
        let (m, n) = (random_mat(&mut rng), random_mat(&mut rng));
        let t = rng.gen_range(0.0..10.0);
        for fam in fams {
            let ell = fam.ell();
            let (mm, mp) = (pucci_eval(&m, ell, Sign::Minus), pucci_eval(&m, ell, Sign::Plus));
            let (fm, fp) = (family_extremal(fam, &m, Extremum::Inf), family_extremal(fam, &m, Extremum::Sup));
            let tr = m.trace();
            d.chain = d.chain.max(mm - fm).max(fm - tr).max(tr - fp).max(fp - mp);
            d.duality = d.duality.max((mm + pucci_eval(&m.scale(-1.0), ell, Sign::Plus)).abs());
            let (nm, np) = (pucci_eval(&n, ell, Sign::Minus), pucci_eval(&n, ell, Sign::Plus));
            let s = m.plus(&n);
            for mode in [Extremum::Inf, Extremum::Sup] {
                let f = |x: &SymMat2| family_extremal(fam, x, mode);
                d.homogeneity = d.homogeneity.max((f(&m.scale(t)) - t * f(&m)).abs());
                let add = match mode {
                    Extremum::Inf => f(&m) + f(&n) - f(&s),
                    Extremum::Sup => f(&s) - f(&m) - f(&n),
                };
                d.additivity = d.additivity.max(add);
                let inc = f(&s) - f(&m);
                d.ellipticity = d.ellipticity.max(nm - inc).max(inc - np);
            }
        }
    }
    for fam in fams.iter().filter(|f| f.is_rotation_closed()) {
        for _ in 0..rotations {
            let m = random_mat(&mut rng);
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            for mode in [Extremum::Inf, Extremum::Sup] {
                let gap = (family_extremal(fam, &m.rotated(th), mode) - family_extremal(fam, &m, mode)).abs();
                d.rotation = d.rotation.max(gap);
            }
        }
    }
    d
}

pub fn operator_suite() -> SuiteReport {
    let fams = fixtures::shipped_families(fixtures::catalog_ellipticity());
    let d = operator_algebra(&fams, 10_000, 100, 2024);
    let checks = vec![
        Check::at_most("ordering chain", d.chain, ALGEBRA_TOL),
        Check::at_most("homogeneity", d.homogeneity, ALGEBRA_TOL),
        Check::at_most("super/subadditivity", d.additivity, ALGEBRA_TOL),
        Check::at_most("uniform ellipticity", d.ellipticity, ALGEBRA_TOL),
        Check::at_most("pucci duality", d.duality, ALGEBRA_TOL),
        Check::at_most("rotation invariance", d.rotation, ALGEBRA_TOL),
    ];
    SuiteReport { name: "operator-property".into(), checks }
}

/// Sup of the central-Hessian `M⁻(ψ)` over interior nodes with `|x − c| ≥ r/4`.
pub fn barrier_residual_sup(spec: &BarrierSpec, ell: Ellipticity, nx: usize) -> Result<f64> {
    let u = fixtures::barrier_field(spec, nx)?;
    let pair = OperatorPair::pucci(ell);
    let res = discrete_residual(&u, SchemeSpec::CentralHessian, OperatorSelector::PucciMinus, &pair)?;
    let g = *u.spec();
    let mut sup: f64 = 0.0;
    for k in 0..g.len() {
        let (i, j) = g.coords(k);
        if !g.is_ring(i, j) && g.node(i, j).dist(spec.center) >= 0.25 * spec.r {
            sup = sup.max(res.field.values()[k].abs());
        }
    }
    Ok(sup)
}

pub fn barrier_suite() -> Result<SuiteReport> {
    let b = fixtures::standard_barrier();
    let ell = Ellipticity::new(1.0, 2.0)?;
    let coarse = barrier_residual_sup(&b, ell, 65)?;
    let fine = barrier_residual_sup(&b, ell, 129)?;
    Ok(SuiteReport {
        name: "barrier-residual".into(),
        checks: vec![Check::within("residual ratio h=1/64 : h=1/128", coarse / fine, 3.5, 4.5)],
    })
}

/// Worst sample deviation from `exact(ρ/r)` and `σ` at radii `r` and `r/2`.
fn radial_defects(fam: &MatrixFamily, r: f64, exact: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let p = radial_profile(fam, r, 101)?;
    let q = radial_profile(fam, 0.5 * r, 101)?;
    let dev = p
        .rho_samples
        .iter()
        .zip(&p.phi_values)
        .map(|(&rho, &phi)| (phi - exact(r / rho)).abs())
        .fold(0.0, f64::max);
    Ok((dev, (p.sigma - q.sigma).abs()))
}

pub fn radial_suite() -> Result<SuiteReport> {
    let ell = Ellipticity::new(1.0, 2.0)?;
    let (dp, sp) = radial_defects(&MatrixFamily::full_pucci(ell), 0.4, |t| t - 1.0)?;
    let (di, si) = radial_defects(&MatrixFamily::identity_only(ell), 0.4, |t| t.ln() / std::f64::consts::LN_2)?;
    Ok(SuiteReport {
        name: "radial-profile".into(),
        checks: vec![
            Check::at_most("pucci profile vs r/rho - 1", dp, 1e-6),
            Check::at_most("identity profile vs log2(r/rho)", di, 1e-6),
            Check::at_most("pucci sigma across radii", sp, 1e-4),
            Check::at_most("identity sigma across radii", si, 1e-4),
        ],
    })
}

pub fn jr_suite() -> Result<SuiteReport> {
    let x0 = Point::new(0.5, 0.5);
    let tp = TwoPlaneSpec::with_angle(1.0, 2.0, 0.3, x0)?;
    let u = two_plane_field(&tp, GridSpec::unit(129)?);
    let s = j_series_check(&u, x0, &[0.1, 0.2, 0.3, 0.4], DEFAULT_ETA)?;
    let target = TWO_PLANE_CONSTANT * 4.0;
    let worst = s.j.iter().map(|v| (v - target).abs() / target).fold(0.0, f64::max);
    Ok(SuiteReport {
        name: "J_r".into(),
        checks: vec![
            Check::at_most("two-plane value vs pi^2/4 a^2 b^2 (relative)", worst, 0.02),
            Check::at_most("constancy defect", s.constancy_defect, 0.02),
            Check::flag("monotone verdict", s.passed()),
        ],
    })
}

pub fn slope_suite() -> Result<SuiteReport> {
    let x0 = Point::new(0.5, 0.5);
    let spec = GridSpec::unit(129)?;
    let nu = Point::unit(0.6);
    let tp = TwoPlaneSpec::new(2.0, 3.0, nu, x0)?;
    let fit = fit_two_plane(&two_plane_field(&tp, spec), x0, &[0.3, 0.2, 0.1], Point::unit(0.9))?;
    let lin = GridField::from_fn(spec, |p| (p - x0).dot(nu));
    let lfit = fit_two_plane(&lin, x0, &[0.2, 0.1], nu)?;
    Ok(SuiteReport {
        name: "slope-fit".into(),
        checks: vec![
            Check::at_most("two-plane alpha error", (fit.alpha - 2.0).abs(), 1e-3),
            Check::at_most("two-plane beta error", (fit.beta - 3.0).abs(), 1e-3),
            Check::at_most("two-plane direction error", 1.0 - fit.nu.dot(nu), 1e-6),
            Check::flag("unequal slopes rejected", !check_alpha_beta(&fit, 0.05)?),
            Check::flag("linear slopes accepted", check_alpha_beta(&lfit, 0.05)?),
        ],
    })
}

/// IdentityOnly solve of the harmonic quadratic; the scheme is exact on quadratics.
pub fn manufactured_defect(nx: usize, tol: f64) -> Result<(f64, bool)> {
    let ell = Ellipticity::new(1.0, 2.0)?;
    let pair = OperatorPair::new(MatrixFamily::identity_only(ell), MatrixFamily::identity_only(ell))?;
    let b = fixtures::boundary_data(nx, fixtures::harmonic_quadratic)?;
    let cfg = SolveConfig { tol, method: IterationMethod::Explicit, ..Default::default() };
    let r = solve_dirichlet(&b, OperatorSelector::FMinus, &pair, &cfg)?;
    let exact = GridField::from_fn(*b.spec(), fixtures::harmonic_quadratic);
    Ok((r.field.max_abs_diff(&exact)?, r.converged()))
}

pub fn manufactured_suite() -> Result<SuiteReport> {
    let tol = 1e-10;
    let (err, ok) = manufactured_defect(33, tol)?;
    Ok(SuiteReport {
        name: "manufactured-solution".into(),
        checks: vec![Check::flag("solver converged", ok), Check::at_most("max |u - (x^2 - y^2)|", err, tol)],
    })
}

/// Every suite, in order. A suite that errors is reported as a failed check.
pub fn run_all() -> Vec<SuiteReport> {
    let wrap = |name: &str, r: Result<SuiteReport>| {
        r.unwrap_or_else(|e| SuiteReport {
            name: name.into(),
            checks: vec![Check { name: format!("error: {e}"), value: f64::NAN, bound: "no error".into(), passed: false }],
        })
    };
    vec![
        operator_suite(),
        wrap("barrier-residual", barrier_suite()),
        wrap("radial-profile", radial_suite()),
        wrap("J_r", jr_suite()),
        wrap("slope-fit", slope_suite()),
        wrap("manufactured-solution", manufactured_suite()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for s in run_all() {
            assert!(s.passed(), "{}: {:?}", s.name, s.checks);
        }
    }

    #[test]
    fn finite_sets_skip_rotation() {
        let ell = Ellipticity::new(0.5, 2.0).unwrap();
        let fam = MatrixFamily::finite_set(vec![SymMat2::identity(), SymMat2::diag(0.5, 2.0)], ell).unwrap();
        let d = operator_algebra(&[fam], 200, 50, 1);
        assert_eq!(d.rotation, 0.0);
        assert!(d.worst() <= ALGEBRA_TOL);
    }

    #[test]
    fn check_bounds() {
        assert!(!Check::at_most("x", 1.0, 0.5).passed);
        assert!(Check::within("x", 4.0, 3.5, 4.5).passed);
    }
}
