//! Extremal operators over families of symmetric 2×2 matrices.
//!
//! `F⁻(M) = inf_{A ∈ A¹} tr(AM)` and `F⁺(M) = sup_{A ∈ A²} tr(AM)` where the
//! families are subsets of the matrices with spectrum in `[λ, Λ]` containing the
//! identity. The full class gives the Pucci operators `M⁻`, `M⁺`.

mod discrete;

pub use discrete::{discrete_residual, DiscreteOperator, Linearization, Residual};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for membership checks on explicit matrix families.
const FAMILY_TOL: f64 = 1e-12;

/// Symmetric matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SymMat2 {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub const fn diag(a: f64, c: f64) -> Self {
        Self { a, b: 0.0, c }
    }

    pub const fn identity() -> Self {
        Self::diag(1.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + 2.0 * self.b * self.b + self.c * self.c).sqrt()
    }

    /// `tr(self · other)` for symmetric arguments.
    pub fn frobenius_dot(&self, other: &SymMat2) -> f64 {
        self.a * other.a + 2.0 * self.b * other.b + self.c * other.c
    }

    pub fn scale(&self, t: f64) -> Self {
        Self::new(t * self.a, t * self.b, t * self.c)
    }

    pub fn plus(&self, o: &SymMat2) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    /// `Oᵗ M O` for the rotation `O` by angle `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        // columns of O: (c, s) and (-s, c)
        let a = c * c * self.a + 2.0 * c * s * self.b + s * s * self.c;
        let cc = s * s * self.a - 2.0 * c * s * self.b + c * c * self.c;
        let b = -c * s * self.a + (c * c - s * s) * self.b + c * s * self.c;
        Self::new(a, b, cc)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

/// Eigenvalues `e1 ≤ e2` from the closed form `(a+c)/2 ∓ √(((a−c)/2)² + b²)`.
#[inline]
pub fn eig2(m: &SymMat2) -> (f64, f64) {
    let mean = 0.5 * (m.a + m.c);
    let rad = (0.5 * (m.a - m.c)).hypot(m.b);
    (mean - rad, mean + rad)
}

/// Ellipticity window `0 < λ ≤ 1 < Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    lambda: f64,
    cap_lambda: f64,
}

impl Ellipticity {
    pub fn new(lambda: f64, cap_lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && cap_lambda.is_finite()) {
            return Err(Error::Config("ellipticity constants must be finite".into()));
        }
        if !(lambda > 0.0 && lambda <= 1.0 && cap_lambda > 1.0) {
            return Err(Error::Config(format!(
                "ellipticity requires 0 < lambda <= 1 < Lambda, got lambda = {lambda}, Lambda = {cap_lambda}"
            )));
        }
        Ok(Self { lambda, cap_lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cap_lambda(&self) -> f64 {
        self.cap_lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremum {
    Inf,
    Sup,
}

#[inline]
fn pucci_from_eigs(e1: f64, e2: f64, lambda: f64, cap_lambda: f64, sign: Sign) -> f64 {
    let (pos_w, neg_w) = match sign {
        Sign::Minus => (lambda, cap_lambda),
        Sign::Plus => (cap_lambda, lambda),
    };
    let w = |e: f64| if e > 0.0 { pos_w * e } else { neg_w * e };
    w(e1) + w(e2)
}

/// Pucci extremal operator `M⁻` or `M⁺`.
#[inline]
pub fn pucci_eval(m: &SymMat2, ell: &Ellipticity, sign: Sign) -> f64 {
    let (e1, e2) = eig2(m);
    pucci_from_eigs(e1, e2, ell.lambda, ell.cap_lambda, sign)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// Every matrix with spectrum in `[λ, Λ]`.
    FullPucci,
    /// `{I}`; both extremal operators reduce to the trace.
    IdentityOnly,
    /// `{A : ‖A − I‖_F ≤ r0}` with `r0 < 1`.
    FrobeniusBall { r0: f64 },
    /// Explicit list; not closed under rotations.
    FiniteSet(Vec<SymMat2>),
}

/// A matrix family together with the ellipticity window it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFamily {
    kind: FamilyKind,
    ell: Ellipticity,
}

impl MatrixFamily {
    pub fn full_pucci(ell: Ellipticity) -> Self {
        Self { kind: FamilyKind::FullPucci, ell }
    }

    pub fn identity_only(ell: Ellipticity) -> Self {
        Self { kind: FamilyKind::IdentityOnly, ell }
    }

    /// The spectrum of `I + E` with `‖E‖_F ≤ r0` fills `[1 − r0, 1 + r0]`, which must
    /// sit inside `[λ, Λ]`.
    pub fn frobenius_ball(r0: f64, ell: Ellipticity) -> Result<Self> {
        if !(r0.is_finite() && (0.0..1.0).contains(&r0)) {
            return Err(Error::Config(format!("Frobenius ball radius must lie in [0, 1), got {r0}")));
        }
        if ell.lambda > 1.0 - r0 + FAMILY_TOL || ell.cap_lambda < 1.0 + r0 - FAMILY_TOL {
            return Err(Error::Config(format!(
                "Frobenius ball of radius {r0} needs lambda <= {} and Lambda >= {}",
                1.0 - r0,
                1.0 + r0
            )));
        }
        Ok(Self { kind: FamilyKind::FrobeniusBall { r0 }, ell })
    }

    pub fn finite_set(members: Vec<SymMat2>, ell: Ellipticity) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("finite matrix family is empty".into()));
        }
        let id = SymMat2::identity();
        if !members.iter().any(|m| {
            (m.a - id.a).abs() <= FAMILY_TOL && m.b.abs() <= FAMILY_TOL && (m.c - id.c).abs() <= FAMILY_TOL
        }) {
            return Err(Error::Config("finite matrix family must contain the identity".into()));
        }
        for (k, m) in members.iter().enumerate() {
            let (e1, e2) = eig2(m);
            if !m.is_finite() || e1 < ell.lambda - FAMILY_TOL || e2 > ell.cap_lambda + FAMILY_TOL {
                return Err(Error::Config(format!(
                    "family member {k} has spectrum [{e1}, {e2}] outside [{}, {}]",
                    ell.lambda, ell.cap_lambda
                )));
            }
        }
        Ok(Self { kind: FamilyKind::FiniteSet(members), ell })
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn ell(&self) -> &Ellipticity {
        &self.ell
    }

    /// Whether the family is invariant under conjugation by rotations.
    pub fn is_rotation_closed(&self) -> bool {
        !matches!(self.kind, FamilyKind::FiniteSet(_))
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FamilyKind::FullPucci => "pucci".into(),
            FamilyKind::IdentityOnly => "identity".into(),
            FamilyKind::FrobeniusBall { r0 } => format!("frobenius({r0})"),
            FamilyKind::FiniteSet(m) => format!("finite({})", m.len()),
        }
    }
}

/// `inf` or `sup` of `tr(AM)` over the family.
#[inline]
pub fn family_extremal(fam: &MatrixFamily, m: &SymMat2, mode: Extremum) -> f64 {
    match &fam.kind {
        FamilyKind::FullPucci => {
            let sign = match mode {
                Extremum::Inf => Sign::Minus,
                Extremum::Sup => Sign::Plus,
            };
            pucci_eval(m, &fam.ell, sign)
        }
        FamilyKind::IdentityOnly => m.trace(),
        FamilyKind::FrobeniusBall { r0 } => match mode {
            Extremum::Inf => m.trace() - r0 * m.frobenius(),
            Extremum::Sup => m.trace() + r0 * m.frobenius(),
        },
        FamilyKind::FiniteSet(members) => {
            let vals = members.iter().map(|a| a.frobenius_dot(m));
            match mode {
                Extremum::Inf => vals.fold(f64::INFINITY, f64::min),
                Extremum::Sup => vals.fold(f64::NEG_INFINITY, f64::max),
            }
        }
    }
}

/// A maximiser/minimiser `A` of `tr(AM)` in the family, so that
/// `family_extremal(fam, M, mode) = tr(AM)`. It is the gradient of the extremal
/// operator wherever that is differentiable.
pub fn family_gradient(fam: &MatrixFamily, m: &SymMat2, mode: Extremum) -> SymMat2 {
    match &fam.kind {
        FamilyKind::FullPucci => {
            let (e1, e2) = eig2(m);
            let (pos_w, neg_w) = match mode {
                Extremum::Inf => (fam.ell.lambda, fam.ell.cap_lambda),
                Extremum::Sup => (fam.ell.cap_lambda, fam.ell.lambda),
            };
            let w = |e: f64| if e > 0.0 { pos_w } else { neg_w };
            let (w1, w2) = (w(e1), w(e2));
            let gap = e2 - e1;
            if gap <= 0.0 || w1 == w2 {
                return SymMat2::diag(w1, w1);
            }
            // A = w1 I + (w2 − w1) P₂ with P₂ = (M − e1 I)/(e2 − e1)
            let t = (w2 - w1) / gap;
            SymMat2::new(w1 + t * (m.a - e1), t * m.b, w1 + t * (m.c - e1))
        }
        FamilyKind::IdentityOnly => SymMat2::identity(),
        FamilyKind::FrobeniusBall { r0 } => {
            let n = m.frobenius();
            if n == 0.0 {
                return SymMat2::identity();
            }
            let s = match mode {
                Extremum::Inf => -r0 / n,
                Extremum::Sup => r0 / n,
            };
            SymMat2::identity().plus(&m.scale(s))
        }
        FamilyKind::FiniteSet(members) => {
            let mut best = members[0];
            let mut val = best.frobenius_dot(m);
            for a in &members[1..] {
                let v = a.frobenius_dot(m);
                let better = match mode {
                    Extremum::Inf => v < val,
                    Extremum::Sup => v > val,
                };
                if better {
                    best = *a;
                    val = v;
                }
            }
            best
        }
    }
}

/// The pair `(F⁻, F⁺)` sharing one ellipticity window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPair {
    minus: MatrixFamily,
    plus: MatrixFamily,
}

impl OperatorPair {
    pub fn new(minus: MatrixFamily, plus: MatrixFamily) -> Result<Self> {
        if minus.ell != plus.ell {
            return Err(Error::Config(
                "both families of an operator pair must share the ellipticity window".into(),
            ));
        }
        Ok(Self { minus, plus })
    }

    /// `(M⁻, M⁺)`.
    pub fn pucci(ell: Ellipticity) -> Self {
        Self {
            minus: MatrixFamily::full_pucci(ell),
            plus: MatrixFamily::full_pucci(ell),
        }
    }

    /// `(Δ, M⁺)`.
    pub fn laplacian_pucci(ell: Ellipticity) -> Self {
        Self {
            minus: MatrixFamily::identity_only(ell),
            plus: MatrixFamily::full_pucci(ell),
        }
    }

    pub fn minus(&self) -> &MatrixFamily {
        &self.minus
    }

    pub fn plus(&self) -> &MatrixFamily {
        &self.plus
    }

    pub fn ell(&self) -> &Ellipticity {
        &self.minus.ell
    }

    pub fn f_minus(&self, m: &SymMat2) -> f64 {
        family_extremal(&self.minus, m, Extremum::Inf)
    }

    pub fn f_plus(&self, m: &SymMat2) -> f64 {
        family_extremal(&self.plus, m, Extremum::Sup)
    }
}

/// Cubic smoothstep approximation of the Heaviside function, `0` below `-eps`, `1` above `eps`.
pub fn heaviside_smooth(t: f64, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Config(format!("smoothing width must be positive, got {eps}")));
    }
    Ok(smoothstep(t, eps))
}

#[inline]
pub(crate) fn smoothstep(t: f64, eps: f64) -> f64 {
    if t <= -eps {
        0.0
    } else if t >= eps {
        1.0
    } else {
        let s = (t + eps) / (2.0 * eps);
        s * s * (3.0 - 2.0 * s)
    }
}

/// Derivative of [`smoothstep`] in `t`.
#[inline]
pub(crate) fn smoothstep_slope(t: f64, eps: f64) -> f64 {
    if t <= -eps || t >= eps {
        0.0
    } else {
        let s = (t + eps) / (2.0 * eps);
        6.0 * s * (1.0 - s) / (2.0 * eps)
    }
}

/// `G_ε = H_ε(u) F⁻(M) + (1 − H_ε(u)) F⁺(M)`.
pub fn g_epsilon_eval(u_val: f64, m: &SymMat2, eps: f64, pair: &OperatorPair) -> Result<f64> {
    let w = heaviside_smooth(u_val, eps)?;
    Ok(blend(w, pair.f_minus(m), pair.f_plus(m)))
}

#[inline]
pub(crate) fn blend(w: f64, f_minus: f64, f_plus: f64) -> f64 {
    if w >= 1.0 {
        f_minus
    } else if w <= 0.0 {
        f_plus
    } else {
        w * f_minus + (1.0 - w) * f_plus
    }
}

/// Which pointwise operator a discrete residual applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorSelector {
    FMinus,
    FPlus,
    GEps { eps: f64 },
    PucciMinus,
    PucciPlus,
    Laplacian,
}

impl OperatorSelector {
    pub fn g_eps(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Config(format!("G_eps width must be positive, got {eps}")));
        }
        Ok(Self::GEps { eps })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GEps { eps } => Self::g_eps(eps).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Pointwise value on a Hessian `m` at a node carrying `u_val`.
    #[inline]
    pub fn eval(&self, pair: &OperatorPair, u_val: f64, m: &SymMat2) -> f64 {
        match *self {
            Self::FMinus => pair.f_minus(m),
            Self::FPlus => pair.f_plus(m),
            Self::GEps { eps } => blend(smoothstep(u_val, eps), pair.f_minus(m), pair.f_plus(m)),
            Self::PucciMinus => pucci_eval(m, pair.ell(), Sign::Minus),
            Self::PucciPlus => pucci_eval(m, pair.ell(), Sign::Plus),
            Self::Laplacian => m.trace(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::FMinus => "f_minus".into(),
            Self::FPlus => "f_plus".into(),
            Self::GEps { eps } => format!("g_eps({eps})"),
            Self::PucciMinus => "m_minus".into(),
            Self::PucciPlus => "m_plus".into(),
            Self::Laplacian => "laplacian".into(),
        }
    }
}

/// Spatial discretisation of the Hessian-based operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeSpec {
    /// 9-point Hessian: central `u_xx`, `u_yy`, four-corner `u_xy`.
    CentralHessian,
    /// Monotone wide stencil over `k` orthogonal direction frames.
    WideStencil { k: usize },
}

impl SchemeSpec {
    pub fn wide(k: usize) -> Result<Self> {
        let s = Self::WideStencil { k };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::CentralHessian => Ok(()),
            Self::WideStencil { k } if k >= 4 && k % 2 == 0 => Ok(()),
            Self::WideStencil { k } => Err(Error::Config(format!(
                "wide stencil needs an even direction-pair count >= 4, got {k}"
            ))),
        }
    }
}
