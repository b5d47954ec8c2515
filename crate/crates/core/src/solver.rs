//! Dirichlet solvers for `Op(u) = 0` and the segregation system, ε-continuation
//! sweeps and the discrete Lipschitz seminorm.
//!
//! The default iteration is explicit pseudo-time stepping `u ← u + τ R(u)` with
//! `τ = cfl·h²/(4Λ)`. For large grids, where the explicit step count grows like
//! `h⁻²`, a semismooth Newton iteration is available: each step freezes the
//! active matrices (the policy) and solves the linearised correction directly.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::operators::{DiscreteOperator, Linearization, Ellipticity, OperatorPair, OperatorSelector, SchemeSpec};

/// Coarsest grid the nested warm start recurses to.
const NESTED_MIN_NODES: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IterationMethod {
    /// Jacobi pseudo-time stepping.
    Explicit,
    /// Semismooth Newton (policy iteration) with a sparse direct solve per step.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub scheme: SchemeSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub cfl: f64,
    /// Coupling width `ε` of the segregation system.
    pub eps: f64,
    /// Warm start from the solution on successively coarsened grids.
    pub nested: bool,
    pub method: IterationMethod,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeSpec::CentralHessian,
            tol: 1e-8,
            max_iter: 200_000,
            cfl: 0.9,
            eps: 0.05,
            nested: false,
            method: IterationMethod::Explicit,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted; the result carries the last iterate.
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: GridField,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub lipschitz_seminorm: f64,
    pub fallback_nodes: usize,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone)]
pub struct SegregationResult {
    pub u1: GridField,
    pub u2: GridField,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub lipschitz_seminorm: [f64; 2],
}

impl SegregationResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// `‖u₁u₂‖_∞`.
    pub fn overlap(&self) -> f64 {
        self.u1
            .values()
            .iter()
            .zip(self.u2.values())
            .fold(0.0, |m, (a, b)| m.max(a * b))
    }

    /// `u₁ − u₂`.
    pub fn combined(&self) -> GridField {
        self.u1.sub(&self.u2).expect("species share a grid")
    }
}

/// Solves `Op(u) = 0` with Dirichlet data taken from the fixed nodes of `boundary`.
/// Free nodes of `boundary` serve as the initial guess.
pub fn solve_dirichlet(boundary: &GridField, op: OperatorSelector, pair: &OperatorPair, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let init = if cfg.nested { nested_guess(boundary, |coarse| solve_dirichlet(coarse, op, pair, cfg).map(|r| r.field))? } else { None };
    let start = match init {
        Some(g) => g,
        None => boundary.clone(),
    };
    let d = DiscreteOperator::new(*boundary.spec(), cfg.scheme, op, pair.clone())?;
    match cfg.method {
        IterationMethod::Explicit => explicit_scalar(start, &d, cfg),
        IterationMethod::Newton => newton_scalar(start, &d, cfg),
    }
}

/// Solves on the coarsened grid and prolongates into the free nodes of `fine`.
fn nested_guess(fine: &GridField, solve: impl Fn(&GridField) -> Result<GridField>) -> Result<Option<GridField>> {
    match fine.coarsened() {
        Some(coarse) if coarse.spec().nx() >= NESTED_MIN_NODES => {
            let c = solve(&coarse)?;
            Ok(Some(fine.prolongated_from(&c)))
        }
        _ => Ok(None),
    }
}

fn first_non_finite(u: &GridField, iteration: usize) -> Error {
    let k = u.values().iter().position(|v| !v.is_finite()).unwrap_or(0);
    let (i, j) = u.spec().coords(k);
    Error::NumericalBlowup { i, j, iteration }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| if m.is_nan() || x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn explicit_scalar(mut u: GridField, d: &DiscreteOperator, cfg: &SolveConfig) -> Result<SolveResult> {
    let h = u.spec().h();
    let tau = cfg.cfl * h * h / (4.0 * d.pair().ell().cap_lambda());
    let fixed = u.fixed_mask().to_vec();
    let mut r = vec![0.0; u.spec().len()];
    let mut history = Vec::new();
    let mut status = SolveStatus::BudgetExhausted;
    let mut iterations = 0;
    loop {
        d.apply(u.values(), &fixed, &mut r);
        let rn = sup(&r);
        if !rn.is_finite() {
            return Err(first_non_finite(&u.with_values(r.clone())?, iterations));
        }
        history.push(rn);
        if rn <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations == cfg.max_iter {
            break;
        }
        u.values_mut().par_iter_mut().zip(&r).for_each(|(v, dr)| *v += tau * dr);
        iterations += 1;
    }
    finish_scalar(u, d, status, iterations, history)
}

fn finish_scalar(u: GridField, d: &DiscreteOperator, status: SolveStatus, iterations: usize, history: Vec<f64>) -> Result<SolveResult> {
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(first_non_finite(&u, iterations));
    }
    let final_residual = *history.last().unwrap_or(&f64::INFINITY);
    Ok(SolveResult {
        lipschitz_seminorm: lipschitz_seminorm(&u),
        fallback_nodes: d.fallback_nodes(u.fixed_mask()),
        field: u,
        status,
        iterations,
        final_residual,
        residual_history: history,
    })
}

/// Step halvings tried before a Newton step is accepted regardless.
const MAX_HALVINGS: usize = 6;

/// Solves the sparse system given by `triplets` with a direct LU factorisation.
fn sparse_solve(dim: usize, triplets: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, triplets)
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let b = Mat::<f64>::from_fn(dim, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    Ok((0..dim).map(|i| x[(i, 0)]).collect())
}

/// Newton correction `L δ = −r` on the free nodes.
fn newton_correction(lin: &Linearization, r: &[f64], free: &[Option<usize>], dim: usize, delta: &mut [f64]) -> Result<()> {
    let mut trip = Vec::with_capacity(10 * dim);
    let mut rhs = vec![0.0; dim];
    for (k, slot) in free.iter().enumerate() {
        let Some(row) = *slot else { continue };
        trip.push(Triplet::new(row, row, lin.center[k]));
        for m in lin.start[k]..lin.start[k + 1] {
            if let Some(col) = free[lin.idx[m]] {
                trip.push(Triplet::new(row, col, lin.coef[m]));
            }
        }
        rhs[row] = -r[k];
    }
    let x = sparse_solve(dim, &trip, &rhs)?;
    for (k, slot) in free.iter().enumerate() {
        delta[k] = slot.map_or(0.0, |row| x[row]);
    }
    Ok(())
}

/// Row numbers of the free nodes.
fn free_rows(fixed: &[bool], lin_center: &[f64]) -> (Vec<Option<usize>>, usize) {
    let mut next = 0;
    let rows = fixed
        .iter()
        .zip(lin_center)
        .map(|(&f, &c)| {
            if f || c == 0.0 {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect();
    (rows, next)
}

fn newton_scalar(mut u: GridField, d: &DiscreteOperator, cfg: &SolveConfig) -> Result<SolveResult> {
    let n = u.spec().len();
    let fixed = u.fixed_mask().to_vec();
    let mut r = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut history = Vec::new();
    let mut status = SolveStatus::BudgetExhausted;
    let mut iterations = 0;
    d.apply(u.values(), &fixed, &mut r);
    let mut rn = sup(&r);
    loop {
        if !rn.is_finite() {
            return Err(first_non_finite(&u.with_values(r.clone())?, iterations));
        }
        history.push(rn);
        if rn <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations == cfg.max_iter {
            break;
        }
        let lin = d.linearize(u.values(), &fixed);
        let (free, dim) = free_rows(&fixed, &lin.center);
        newton_correction(&lin, &r, &free, dim, &mut delta)?;
        let mut step = 1.0;
        for attempt in 0..=MAX_HALVINGS {
            for k in 0..n {
                trial[k] = u.values()[k] + step * delta[k];
            }
            d.apply(&trial, &fixed, &mut r_trial);
            let rt = sup(&r_trial);
            if rt < rn || attempt == MAX_HALVINGS {
                break;
            }
            step *= 0.5;
        }
        u.values_mut().copy_from_slice(&trial);
        std::mem::swap(&mut r, &mut r_trial);
        rn = sup(&r);
        iterations += 1;
    }
    finish_scalar(u, d, status, iterations, history)
}

/// Validates segregation data: non-negative, not both zero, disjoint supports.
fn check_segregation_data(f1: &GridField, f2: &GridField) -> Result<()> {
    if !f1.same_grid(f2) {
        return Err(Error::Input("species data live on different grids".into()));
    }
    let spec = f1.spec();
    let mut any = false;
    for k in 0..spec.len() {
        if !f1.fixed_mask()[k] {
            continue;
        }
        let (a, b) = (f1.values()[k], f2.values()[k]);
        let (i, j) = spec.coords(k);
        if a < 0.0 || b < 0.0 {
            return Err(Error::Input(format!("negative species datum at node ({i}, {j})")));
        }
        if a > 0.0 && b > 0.0 {
            return Err(Error::Input(format!("species data overlap at boundary node ({i}, {j})")));
        }
        any |= a > 0.0 || b > 0.0;
    }
    if !any {
        return Err(Error::Input("both species data vanish identically".into()));
    }
    Ok(())
}

/// Solves `M⁻(uᵢ) = u₁u₂/ε` with `uᵢ = fᵢ` on the fixed nodes, `uᵢ ≥ 0`.
pub fn solve_segregation(f1: &GridField, f2: &GridField, ell: &Ellipticity, cfg: &SolveConfig) -> Result<SegregationResult> {
    cfg.validate()?;
    check_segregation_data(f1, f2)?;
    let (mut u1, mut u2) = (f1.map(|v| v.max(0.0)), f2.map(|v| v.max(0.0)));
    if cfg.nested {
        if let (Some(c1), Some(c2)) = (f1.coarsened(), f2.coarsened()) {
            if c1.spec().nx() >= NESTED_MIN_NODES {
                let r = solve_segregation(&c1, &c2, ell, cfg)?;
                u1 = f1.prolongated_from(&r.u1);
                u2 = f2.prolongated_from(&r.u2);
            }
        }
    }
    segregation_from(u1, u2, ell, cfg)
}

/// Segregation solve from an explicit initial pair (fixed nodes carry the data).
pub fn solve_segregation_from(u1: GridField, u2: GridField, ell: &Ellipticity, cfg: &SolveConfig) -> Result<SegregationResult> {
    cfg.validate()?;
    check_segregation_data(&u1, &u2)?;
    segregation_from(u1.map(|v| v.max(0.0)), u2.map(|v| v.max(0.0)), ell, cfg)
}

fn segregation_from(u1: GridField, u2: GridField, ell: &Ellipticity, cfg: &SolveConfig) -> Result<SegregationResult> {
    let pair = OperatorPair::pucci(*ell);
    let d = DiscreteOperator::new(*u1.spec(), cfg.scheme, OperatorSelector::PucciMinus, pair)?;
    match cfg.method {
        IterationMethod::Explicit => explicit_segregation(u1, u2, &d, cfg),
        IterationMethod::Newton => newton_segregation(u1, u2, &d, cfg),
    }
}

/// Residuals of both species, projected to zero where the constraint `uᵢ ≥ 0` is active.
fn segregation_residual(d: &DiscreteOperator, u1: &[f64], u2: &[f64], fixed: &[bool], inv_eps: f64, r1: &mut [f64], r2: &mut [f64]) -> f64 {
    d.apply(u1, fixed, r1);
    d.apply(u2, fixed, r2);
    let mut m: f64 = 0.0;
    for k in 0..u1.len() {
        if fixed[k] {
            continue;
        }
        let c = u1[k] * u2[k] * inv_eps;
        r1[k] -= c;
        r2[k] -= c;
        if u1[k] <= 0.0 && r1[k] < 0.0 {
            r1[k] = 0.0;
        }
        if u2[k] <= 0.0 && r2[k] < 0.0 {
            r2[k] = 0.0;
        }
        if r1[k].is_nan() || r2[k].is_nan() {
            return f64::NAN;
        }
        m = m.max(r1[k].abs()).max(r2[k].abs());
    }
    m
}

fn explicit_segregation(mut u1: GridField, mut u2: GridField, d: &DiscreteOperator, cfg: &SolveConfig) -> Result<SegregationResult> {
    let h = u1.spec().h();
    let inv_eps = 1.0 / cfg.eps;
    let bound = u1.sup_norm().max(u2.sup_norm());
    let tau = cfg.cfl / (4.0 * d.pair().ell().cap_lambda() / (h * h) + bound * inv_eps);
    let fixed = u1.fixed_mask().to_vec();
    let n = u1.spec().len();
    let (mut r1, mut r2) = (vec![0.0; n], vec![0.0; n]);
    let mut history = Vec::new();
    let mut status = SolveStatus::BudgetExhausted;
    let mut iterations = 0;
    loop {
        let rn = segregation_residual(d, u1.values(), u2.values(), &fixed, inv_eps, &mut r1, &mut r2);
        if !rn.is_finite() {
            let bad = if u1.values().iter().any(|v| !v.is_finite()) { &u1 } else { &u2 };
            return Err(first_non_finite(bad, iterations));
        }
        history.push(rn);
        if rn <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations == cfg.max_iter {
            break;
        }
        for (u, r) in [(&mut u1, &r1), (&mut u2, &r2)] {
            u.values_mut().par_iter_mut().zip(r).for_each(|(v, dr)| *v = (*v + tau * dr).max(0.0));
        }
        iterations += 1;
    }
    finish_segregation(u1, u2, status, iterations, history)
}

/// Newton correction for the segregation pair. Rows of species `i` at nodes where
/// `uᵢ = 0` and the residual pushes downward are frozen (`δᵢ = 0`).
#[allow(clippy::too_many_arguments)]
fn segregation_correction(lins: [&Linearization; 2], r: [&[f64]; 2], u: [&[f64]; 2], free: &[Option<usize>], dim: usize, inv_eps: f64, delta: [&mut [f64]; 2]) -> Result<()> {
    let mut trip = Vec::with_capacity(22 * dim);
    let mut rhs = vec![0.0; 2 * dim];
    for (k, slot) in free.iter().enumerate() {
        let Some(node) = *slot else { continue };
        for s in 0..2 {
            let row = 2 * node + s;
            let (own, other) = (u[s][k], u[1 - s][k]);
            if own <= 0.0 && r[s][k] <= 0.0 {
                trip.push(Triplet::new(row, row, 1.0));
                continue;
            }
            trip.push(Triplet::new(row, row, lins[s].center[k] - other * inv_eps));
            trip.push(Triplet::new(row, 2 * node + 1 - s, -own * inv_eps));
            for m in lins[s].start[k]..lins[s].start[k + 1] {
                if let Some(col) = free[lins[s].idx[m]] {
                    trip.push(Triplet::new(row, 2 * col + s, lins[s].coef[m]));
                }
            }
            rhs[row] = -r[s][k];
        }
    }
    let x = sparse_solve(2 * dim, &trip, &rhs)?;
    let [d1, d2] = delta;
    for (k, slot) in free.iter().enumerate() {
        d1[k] = slot.map_or(0.0, |node| x[2 * node]);
        d2[k] = slot.map_or(0.0, |node| x[2 * node + 1]);
    }
    Ok(())
}

fn newton_segregation(mut u1: GridField, mut u2: GridField, d: &DiscreteOperator, cfg: &SolveConfig) -> Result<SegregationResult> {
    let n = u1.spec().len();
    let inv_eps = 1.0 / cfg.eps;
    let fixed = u1.fixed_mask().to_vec();
    let (mut r1, mut r2) = (vec![0.0; n], vec![0.0; n]);
    let (mut t1, mut t2) = (vec![0.0; n], vec![0.0; n]);
    let (mut q1, mut q2) = (vec![0.0; n], vec![0.0; n]);
    let (mut d1, mut d2) = (vec![0.0; n], vec![0.0; n]);
    let mut history = Vec::new();
    let mut status = SolveStatus::BudgetExhausted;
    let mut iterations = 0;
    let mut rn = segregation_residual(d, u1.values(), u2.values(), &fixed, inv_eps, &mut r1, &mut r2);
    loop {
        if !rn.is_finite() {
            let bad = if u1.values().iter().any(|v| !v.is_finite()) { &u1 } else { &u2 };
            return Err(first_non_finite(bad, iterations));
        }
        history.push(rn);
        if rn <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations == cfg.max_iter {
            break;
        }
        let l1 = d.linearize(u1.values(), &fixed);
        let l2 = d.linearize(u2.values(), &fixed);
        let (free, dim) = free_rows(&fixed, &l1.center);
        segregation_correction([&l1, &l2], [&r1, &r2], [u1.values(), u2.values()], &free, dim, inv_eps, [&mut d1, &mut d2])?;
        let mut step = 1.0;
        let mut rt;
        let mut attempt = 0;
        loop {
            for k in 0..n {
                t1[k] = (u1.values()[k] + step * d1[k]).max(0.0);
                t2[k] = (u2.values()[k] + step * d2[k]).max(0.0);
            }
            rt = segregation_residual(d, &t1, &t2, &fixed, inv_eps, &mut q1, &mut q2);
            if rt < rn || attempt == MAX_HALVINGS {
                break;
            }
            step *= 0.5;
            attempt += 1;
        }
        u1.values_mut().copy_from_slice(&t1);
        u2.values_mut().copy_from_slice(&t2);
        std::mem::swap(&mut r1, &mut q1);
        std::mem::swap(&mut r2, &mut q2);
        rn = rt;
        iterations += 1;
    }
    finish_segregation(u1, u2, status, iterations, history)
}

fn finish_segregation(u1: GridField, u2: GridField, status: SolveStatus, iterations: usize, history: Vec<f64>) -> Result<SegregationResult> {
    for u in [&u1, &u2] {
        if u.values().iter().any(|v| !v.is_finite()) {
            return Err(first_non_finite(u, iterations));
        }
    }
    Ok(SegregationResult {
        lipschitz_seminorm: [lipschitz_seminorm(&u1), lipschitz_seminorm(&u2)],
        final_residual: *history.last().unwrap_or(&f64::INFINITY),
        u1,
        u2,
        status,
        iterations,
        residual_history: history,
    })
}

fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::Config("eps_list is empty".into()));
    }
    if eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Config("eps_list entries must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps_list must be strictly decreasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_residual: f64,
    pub lipschitz_seminorm: f64,
    /// `‖u₁u₂‖_∞` for segregation sweeps.
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// `‖u^{ε_k} − u^{ε_{k+1}}‖_∞`.
    pub gaps: Vec<f64>,
    /// Field at the last successful ε (the limit candidate).
    pub final_field: Option<GridField>,
    /// Second species for segregation sweeps.
    pub final_pair: Option<(GridField, GridField)>,
    /// A member solve failed; entries stop before it.
    pub partial: bool,
    pub failure: Option<String>,
}

/// Warm-started `G_ε` solves over a decreasing ε ladder.
pub fn epsilon_sweep(boundary: &GridField, pair: &OperatorPair, eps_list: &[f64], cfg: &SolveConfig) -> Result<SweepReport> {
    check_eps_list(eps_list)?;
    cfg.validate()?;
    let mut report = SweepReport { entries: Vec::new(), gaps: Vec::new(), final_field: None, final_pair: None, partial: false, failure: None };
    let mut prev: Option<GridField> = None;
    for (k, &eps) in eps_list.iter().enumerate() {
        let start = prev.clone().unwrap_or_else(|| boundary.clone());
        let mut c = *cfg;
        c.nested = cfg.nested && k == 0;
        let res = solve_dirichlet(&start, OperatorSelector::GEps { eps }, pair, &c);
        match res {
            Ok(r) => {
                if let Some(p) = &prev {
                    report.gaps.push(r.field.max_abs_diff(p)?);
                }
                report.partial |= !r.converged();
                report.entries.push(SweepEntry {
                    eps,
                    status: r.status,
                    iterations: r.iterations,
                    final_residual: r.final_residual,
                    lipschitz_seminorm: r.lipschitz_seminorm,
                    overlap: None,
                });
                prev = Some(r.field);
            }
            Err(e) => {
                report.partial = true;
                report.failure = Some(format!("eps = {eps}: {e}"));
                break;
            }
        }
    }
    report.final_field = prev;
    Ok(report)
}

/// Warm-started segregation solves over a decreasing ε ladder.
pub fn segregation_sweep(f1: &GridField, f2: &GridField, ell: &Ellipticity, eps_list: &[f64], cfg: &SolveConfig) -> Result<SweepReport> {
    check_eps_list(eps_list)?;
    cfg.validate()?;
    check_segregation_data(f1, f2)?;
    let mut report = SweepReport { entries: Vec::new(), gaps: Vec::new(), final_field: None, final_pair: None, partial: false, failure: None };
    let mut prev: Option<(GridField, GridField)> = None;
    for (k, &eps) in eps_list.iter().enumerate() {
        let mut c = *cfg;
        c.eps = eps;
        let res = match &prev {
            None => {
                c.nested = cfg.nested && k == 0;
                solve_segregation(f1, f2, ell, &c)
            }
            Some((a, b)) => solve_segregation_from(a.clone(), b.clone(), ell, &c),
        };
        match res {
            Ok(r) => {
                let u = r.combined();
                if let Some((a, b)) = &prev {
                    report.gaps.push(u.max_abs_diff(&a.sub(b)?)?);
                }
                report.partial |= !r.converged();
                report.entries.push(SweepEntry {
                    eps,
                    status: r.status,
                    iterations: r.iterations,
                    final_residual: r.final_residual,
                    lipschitz_seminorm: lipschitz_seminorm(&u),
                    overlap: Some(r.overlap()),
                });
                prev = Some((r.u1, r.u2));
            }
            Err(e) => {
                report.partial = true;
                report.failure = Some(format!("eps = {eps}: {e}"));
                break;
            }
        }
    }
    if let Some((a, b)) = prev {
        report.final_field = Some(a.sub(&b)?);
        report.final_pair = Some((a, b));
    }
    Ok(report)
}

/// Largest difference quotient over node pairs at Chebyshev distance 1.
pub fn lipschitz_seminorm(u: &GridField) -> f64 {
    let spec = u.spec();
    let nx = spec.nx();
    let h = spec.h();
    let hd = h * std::f64::consts::SQRT_2;
    let v = u.values();
    (0..nx)
        .into_par_iter()
        .map(|j| {
            let mut m: f64 = 0.0;
            for i in 0..nx {
                let k = j * nx + i;
                if i + 1 < nx {
                    m = m.max((v[k + 1] - v[k]).abs() / h);
                }
                if j + 1 < nx {
                    m = m.max((v[k + nx] - v[k]).abs() / h);
                    if i + 1 < nx {
                        m = m.max((v[k + nx + 1] - v[k]).abs() / hd);
                    }
                    if i > 0 {
                        m = m.max((v[k + nx - 1] - v[k]).abs() / hd);
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec, Point};

    fn ell12() -> Ellipticity {
        Ellipticity::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn lipschitz_examples() {
        let spec = GridSpec::unit(5).unwrap();
        assert!((lipschitz_seminorm(&GridField::from_fn(spec, |p| p.x)) - 1.0).abs() < 1e-12);
        assert_eq!(lipschitz_seminorm(&GridField::from_fn(spec, |_| 3.0)), 0.0);
        let l = lipschitz_seminorm(&GridField::from_fn(spec, |p| 2.0 * p.x + p.y));
        assert!((l - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(l >= 2.0 && l <= 5f64.sqrt());
    }

    #[test]
    fn config_validation() {
        let mut c = SolveConfig::default();
        assert!(c.validate().is_ok());
        c.cfl = 1.5;
        assert!(c.validate().is_err());
        c = SolveConfig { tol: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        c = SolveConfig { max_iter: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn harmonic_quadratic_is_a_fixed_point() {
        let spec = GridSpec::unit(17).unwrap();
        let b = make_grid(spec, |p| p.x * p.x - p.y * p.y).unwrap();
        let cfg = SolveConfig { tol: 1e-10, ..Default::default() };
        let r = solve_dirichlet(&b, OperatorSelector::Laplacian, &OperatorPair::pucci(ell12()), &cfg).unwrap();
        assert!(r.converged());
        let exact = GridField::from_fn(spec, |p| p.x * p.x - p.y * p.y);
        assert!(r.field.max_abs_diff(&exact).unwrap() < 1e-10);
    }

    #[test]
    fn newton_matches_explicit() {
        let spec = GridSpec::unit(33).unwrap();
        let b = make_grid(spec, |p| (3.0 * p.x).sin() * p.y - 0.3).unwrap();
        let pair = OperatorPair::pucci(ell12());
        let ex = SolveConfig { tol: 1e-9, ..Default::default() };
        let so = SolveConfig { method: IterationMethod::Newton, ..ex };
        for op in [OperatorSelector::PucciMinus, OperatorSelector::GEps { eps: 0.05 }] {
            let a = solve_dirichlet(&b, op, &pair, &ex).unwrap();
            let c = solve_dirichlet(&b, op, &pair, &so).unwrap();
            assert!(a.converged() && c.converged());
            assert!(c.iterations < a.iterations);
            assert!(a.field.max_abs_diff(&c.field).unwrap() < 1e-9);
        }
    }

    #[test]
    fn budget_exhaustion_returns_data() {
        let spec = GridSpec::unit(17).unwrap();
        let b = make_grid(spec, |p| p.x).unwrap();
        let cfg = SolveConfig { max_iter: 3, tol: 1e-14, ..Default::default() };
        let r = solve_dirichlet(&b, OperatorSelector::PucciMinus, &OperatorPair::pucci(ell12()), &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::BudgetExhausted);
        assert_eq!(r.iterations, 3);
        assert_eq!(r.residual_history.len(), 4);
    }

    #[test]
    fn segregation_data_checks() {
        let spec = GridSpec::unit(9).unwrap();
        let f1 = make_grid(spec, |p| p.x).unwrap();
        let f2 = make_grid(spec, |p| 1.0 - p.x).unwrap();
        let cfg = SolveConfig::default();
        assert!(matches!(solve_segregation(&f1, &f2, &ell12(), &cfg), Err(Error::Input(_))));
        let z = make_grid(spec, |_| 0.0).unwrap();
        assert!(matches!(solve_segregation(&z, &z, &ell12(), &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn zero_species_decouples() {
        let spec = GridSpec::unit(17).unwrap();
        let f1 = make_grid(spec, |p| (p.x - 0.5).max(0.0) + 0.1 * p.y).unwrap();
        let z = make_grid(spec, |_| 0.0).unwrap();
        let cfg = SolveConfig { tol: 1e-9, ..Default::default() };
        let s = solve_segregation(&f1, &z, &ell12(), &cfg).unwrap();
        assert!(s.converged());
        assert_eq!(s.u2.sup_norm(), 0.0);
        let m = solve_dirichlet(&f1, OperatorSelector::PucciMinus, &OperatorPair::pucci(ell12()), &cfg).unwrap();
        assert!(s.u1.max_abs_diff(&m.field).unwrap() < 1e-8);
    }

    #[test]
    fn sweep_on_linear_datum_has_zero_gaps() {
        let spec = GridSpec::unit(17).unwrap();
        let nu = Point::new(0.6, 0.8);
        let b = make_grid(spec, |p| (p - Point::new(0.5, 0.5)).dot(nu)).unwrap();
        let cfg = SolveConfig { tol: 1e-11, ..Default::default() };
        let rep = epsilon_sweep(&b, &OperatorPair::pucci(ell12()), &[0.2, 0.1, 0.05], &cfg).unwrap();
        assert!(!rep.partial);
        assert!(rep.gaps.iter().all(|g| *g < 1e-10));
        let slope = 0.8 / 0.6f64.hypot(0.8) * 1.0;
        for e in &rep.entries {
            assert!(e.lipschitz_seminorm >= slope - 1e-9);
        }
        assert!(epsilon_sweep(&b, &OperatorPair::pucci(ell12()), &[0.1, 0.2], &cfg).is_err());
        let single = epsilon_sweep(&b, &OperatorPair::pucci(ell12()), &[0.1], &cfg).unwrap();
        assert_eq!(single.entries.len(), 1);
        assert!(single.gaps.is_empty());
    }
}
