//! Line-oriented `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is typed and validated
//! before any computation starts; unknown or repeated keys are errors that
//! name the offending line.

use std::collections::BTreeMap;
use std::fmt;

use pucci_core::operators::{Ellipticity, MatrixFamily, OperatorPair, OperatorSelector, SchemeSpec, SymMat2};
use pucci_core::solver::{IterationMethod, SolveConfig};
use pucci_core::GridSpec;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` given twice (first on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: key `{key}`: {msg}")]
    Invalid { line: usize, key: String, msg: String },
    #[error("key `{key}` (default value): {msg}")]
    InvalidDefault { key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Segregate,
    Sweep,
    Diagnose,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Segregate => "segregate",
            Self::Sweep => "sweep",
            Self::Diagnose => "diagnose",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datum {
    /// `(x − 1/2) + sin(πy)/4`
    Standard,
    /// `x² − y²`
    Harmonic,
    /// `x − 1/2`
    Plane,
}

impl Datum {
    pub fn eval(self, p: pucci_core::Point) -> f64 {
        match self {
            Self::Standard => pucci_core::fixtures::standard_datum(p),
            Self::Harmonic => pucci_core::fixtures::harmonic_quadratic(p),
            Self::Plane => p.x - 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    GEps,
    Segregation,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub grid: GridSpec,
    pub pair: OperatorPair,
    pub operator: OperatorSelector,
    pub solve: SolveConfig,
    pub eps_list: Vec<f64>,
    pub datum: Datum,
    pub sweep_kind: SweepKind,
    pub field: Option<String>,
    pub radii: Vec<f64>,
    /// Explicit fit radii; `None` picks the default ladder members at least `8h`.
    pub fit_radii: Option<Vec<f64>>,
    pub flatness_scales: Vec<f64>,
    /// Cone semi-opening in radians.
    pub cone_theta: f64,
    /// Largest ε-monotonicity step that still counts as a pass.
    pub max_eps: f64,
    pub window_half: f64,
    pub eta: f64,
    pub rel_tol: f64,
    pub max_points: usize,
    pub out: String,
    /// Every key with its effective value, defaults included.
    pub echo: BTreeMap<String, String>,
}

impl RunConfig {
    /// SHA-256 of the echoed configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.echo.iter().filter(|(k, _)| k.as_str() != "out") {
            h.update(format!("{k} = {v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }
}

const DEFAULTS: &[(&str, &str)] = &[
    ("command", ""),
    ("dim", "2"),
    ("grid.nx", "65"),
    ("family.minus", "pucci"),
    ("family.plus", "pucci"),
    ("family.r0", "0.5"),
    ("family.members", ""),
    ("ell.lambda", "1"),
    ("ell.Lambda", "2"),
    ("operator", "g_eps"),
    ("scheme", "central"),
    ("scheme.K", "8"),
    ("tol", "1e-8"),
    ("max_iter", "200000"),
    ("cfl", "0.9"),
    ("eps", "0.05"),
    ("eps_list", "0.2,0.1,0.05,0.025"),
    ("method", "explicit"),
    ("nested", "false"),
    ("datum", "standard"),
    ("sweep.kind", "g_eps"),
    ("field", ""),
    ("radii", "0.05,0.1,0.15,0.2"),
    ("fit.radii", "auto"),
    ("flatness.scales", "0.2,0.1,0.05"),
    ("cone.theta", "60"),
    ("cone.max_eps", "0.1"),
    ("window.half", "0.05"),
    ("eta", "0.02"),
    ("rel_tol", "0.05"),
    ("max_points", "5"),
    ("out", "run"),
];

const DEFAULT_FIT_RADII: [f64; 3] = [0.2, 0.1, 0.05];

/// Raw `key → (value, line)` map; line 0 marks a default.
struct Table(BTreeMap<String, (String, usize)>);

impl Table {
    fn raw(&self, key: &str) -> (&str, usize) {
        let (v, l) = &self.0[key];
        (v.as_str(), *l)
    }

    fn err(&self, key: &str, msg: impl fmt::Display) -> ConfigError {
        match self.raw(key).1 {
            0 => ConfigError::InvalidDefault { key: key.into(), msg: msg.to_string() },
            line => ConfigError::Invalid { line, key: key.into(), msg: msg.to_string() },
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (v, _) = self.raw(key);
        v.parse::<T>().map_err(|e| self.err(key, format!("cannot parse `{v}`: {e}")))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let (v, _) = self.raw(key);
        let out = v
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| self.err(key, format!("cannot parse `{}`: {e}", s.trim()))))
            .collect::<Result<Vec<_>, _>>()?;
        if out.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(self.err(key, "entries must be positive and finite"));
        }
        Ok(out)
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
        let (v, _) = self.raw(key);
        options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            self.err(key, format!("`{v}` is not one of {}", names.join(", ")))
        })
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let x: f64 = self.parse(key)?;
        if !(x.is_finite() && x > 0.0) {
            return Err(self.err(key, format!("must be positive, got {x}")));
        }
        Ok(x)
    }
}

fn strictly(key: &str, t: &Table, v: &[f64], decreasing: bool) -> Result<(), ConfigError> {
    let ok = v.windows(2).all(|w| if decreasing { w[1] < w[0] } else { w[1] > w[0] });
    if !ok {
        return Err(t.err(key, format!("must be strictly {}", if decreasing { "decreasing" } else { "increasing" })));
    }
    Ok(())
}

fn family(t: &Table, key: &str, ell: Ellipticity) -> Result<MatrixFamily, ConfigError> {
    let kind = t.choice(key, &[("pucci", 0), ("identity", 1), ("frobenius", 2), ("finite", 3)])?;
    match kind {
        0 => Ok(MatrixFamily::full_pucci(ell)),
        1 => Ok(MatrixFamily::identity_only(ell)),
        2 => {
            let r0 = t.positive("family.r0")?;
            MatrixFamily::frobenius_ball(r0, ell).map_err(|e| t.err("family.r0", e))
        }
        _ => {
            let (text, _) = t.raw("family.members");
            if text.is_empty() {
                return Err(t.err(key, "a finite family needs `family.members`"));
            }
            let members = text
                .split(';')
                .map(|m| {
                    let xs: Vec<f64> = m.split_whitespace().map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(
                        |e| t.err("family.members", format!("cannot parse `{}`: {e}", m.trim())),
                    )?;
                    match xs[..] {
                        [a, b, c] => Ok(SymMat2::new(a, b, c)),
                        _ => Err(t.err("family.members", format!("member `{}` needs three entries `a b c`", m.trim()))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            MatrixFamily::finite_set(members, ell).map_err(|e| t.err("family.members", e))
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut table: BTreeMap<String, (String, usize)> =
        DEFAULTS.iter().map(|(k, v)| (k.to_string(), (v.to_string(), 0))).collect();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax { line, text: body.into() })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line, text: body.into() });
        }
        if !table.contains_key(k) {
            return Err(ConfigError::UnknownKey { line, key: k.into() });
        }
        if let Some(&first) = seen.get(k) {
            return Err(ConfigError::Duplicate { line, key: k.into(), first });
        }
        seen.insert(k.into(), line);
        table.insert(k.into(), (v.into(), line));
    }
    let t = Table(table);

    if t.raw("command").0.is_empty() {
        return Err(ConfigError::Missing("command".into()));
    }
    let command = t.choice(
        "command",
        &[
            ("solve", Command::Solve),
            ("segregate", Command::Segregate),
            ("sweep", Command::Sweep),
            ("diagnose", Command::Diagnose),
            ("verify", Command::Verify),
        ],
    )?;
    let dim: usize = t.parse("dim")?;
    pucci_core::monotonicity::check_dimension(dim).map_err(|e| t.err("dim", e))?;

    let nx: usize = t.parse("grid.nx")?;
    let grid = GridSpec::unit(nx).map_err(|e| t.err("grid.nx", e))?;

    let lambda: f64 = t.parse("ell.lambda")?;
    let cap: f64 = t.parse("ell.Lambda")?;
    let ell = Ellipticity::new(lambda, cap).map_err(|e| {
        let key = if lambda > 0.0 && lambda <= 1.0 { "ell.Lambda" } else { "ell.lambda" };
        t.err(key, e)
    })?;
    let minus = family(&t, "family.minus", ell)?;
    let plus = family(&t, "family.plus", ell)?;
    let pair = OperatorPair::new(minus, plus).map_err(|e| t.err("family.plus", e))?;

    let scheme = match t.choice("scheme", &[("central", false), ("wide", true)])? {
        false => SchemeSpec::CentralHessian,
        true => SchemeSpec::wide(t.parse("scheme.K")?).map_err(|e| t.err("scheme.K", e))?,
    };
    let eps = t.positive("eps")?;
    let operator = match t.choice(
        "operator",
        &[("g_eps", 0), ("f_minus", 1), ("f_plus", 2), ("m_minus", 3), ("m_plus", 4), ("laplacian", 5)],
    )? {
        0 => OperatorSelector::GEps { eps },
        1 => OperatorSelector::FMinus,
        2 => OperatorSelector::FPlus,
        3 => OperatorSelector::PucciMinus,
        4 => OperatorSelector::PucciPlus,
        _ => OperatorSelector::Laplacian,
    };
    let method = t.choice("method", &[("explicit", IterationMethod::Explicit), ("newton", IterationMethod::Newton)])?;
    let nested = t.choice("nested", &[("true", true), ("false", false)])?;
    let cfl = t.positive("cfl")?;
    if cfl > 1.0 {
        return Err(t.err("cfl", format!("must lie in (0, 1], got {cfl}")));
    }
    let max_iter: usize = t.parse("max_iter")?;
    if max_iter == 0 {
        return Err(t.err("max_iter", "must be at least 1"));
    }
    let solve = SolveConfig { scheme, tol: t.positive("tol")?, max_iter, cfl, eps, nested, method };

    let eps_list = t.list("eps_list")?;
    strictly("eps_list", &t, &eps_list, true)?;
    let radii = t.list("radii")?;
    strictly("radii", &t, &radii, false)?;
    let fit_radii = if t.raw("fit.radii").0 == "auto" {
        None
    } else {
        let v = t.list("fit.radii")?;
        strictly("fit.radii", &t, &v, true)?;
        Some(v)
    };
    let flatness_scales = t.list("flatness.scales")?;
    strictly("flatness.scales", &t, &flatness_scales, true)?;
    let theta_deg = t.positive("cone.theta")?;
    if theta_deg >= 90.0 {
        return Err(t.err("cone.theta", format!("semi-opening must lie in (0, 90) degrees, got {theta_deg}")));
    }
    let eta: f64 = t.parse("eta")?;
    if !(0.0..1.0).contains(&eta) {
        return Err(t.err("eta", format!("must lie in [0, 1), got {eta}")));
    }
    let rel_tol: f64 = t.parse("rel_tol")?;
    if !(rel_tol.is_finite() && rel_tol >= 0.0) {
        return Err(t.err("rel_tol", format!("must be non-negative, got {rel_tol}")));
    }
    let max_points: usize = t.parse("max_points")?;
    if max_points == 0 {
        return Err(t.err("max_points", "must be at least 1"));
    }
    let field = Some(t.raw("field").0.to_string()).filter(|s| !s.is_empty());

    Ok(RunConfig {
        command,
        grid,
        pair,
        operator,
        solve,
        eps_list,
        datum: t.choice("datum", &[("standard", Datum::Standard), ("harmonic", Datum::Harmonic), ("plane", Datum::Plane)])?,
        sweep_kind: t.choice("sweep.kind", &[("g_eps", SweepKind::GEps), ("segregation", SweepKind::Segregation)])?,
        field,
        radii,
        fit_radii,
        flatness_scales,
        cone_theta: theta_deg.to_radians(),
        max_eps: t.positive("cone.max_eps")?,
        window_half: t.positive("window.half")?,
        eta,
        rel_tol,
        max_points,
        out: t.raw("out").0.to_string(),
        echo: t.0.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect(),
    })
}

impl RunConfig {
    /// Fit radii for a field with spacing `h`.
    pub fn fit_radii_for(&self, h: f64) -> Vec<f64> {
        match &self.fit_radii {
            Some(v) => v.clone(),
            None => DEFAULT_FIT_RADII.iter().copied().filter(|&r| r >= 8.0 * h).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_config("command = solve\ngrid.nx = 65\nell.lambda = 1\nell.Lambda = 2\n").unwrap();
        assert_eq!(c.command, Command::Solve);
        assert_eq!(c.grid.nx(), 65);
        assert_eq!(c.echo["tol"], "1e-8");
        assert_eq!(c.eps_list, vec![0.2, 0.1, 0.05, 0.025]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("# header\n\ncommand = sweep   # trailing\n eps_list = 0.2, 0.1 ,0.05\n").unwrap();
        assert_eq!(c.command, Command::Sweep);
        assert_eq!(c.eps_list, vec![0.2, 0.1, 0.05]);
    }

    #[test]
    fn lambda_above_one_names_key_and_line() {
        let e = parse_config("command = solve\nell.lambda = 1.5\n").unwrap_err();
        assert!(matches!(&e, ConfigError::Invalid { line: 2, key, .. } if key == "ell.lambda"), "{e}");
    }

    #[test]
    fn eps_list_order() {
        assert!(parse_config("command = sweep\neps_list = 0.2,0.1,0.05").is_ok());
        let e = parse_config("command = sweep\neps_list = 0.1,0.2").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 2, .. }));
    }

    #[test]
    fn unknown_duplicate_and_type_errors() {
        assert_eq!(
            parse_config("command = solve\n\ngrid.ny = 3").unwrap_err(),
            ConfigError::UnknownKey { line: 3, key: "grid.ny".into() }
        );
        assert!(matches!(
            parse_config("command = solve\ntol = 1\ntol = 2").unwrap_err(),
            ConfigError::Duplicate { line: 3, first: 2, .. }
        ));
        assert!(matches!(parse_config("command = solve\ngrid.nx = many").unwrap_err(), ConfigError::Invalid { line: 2, .. }));
        assert!(matches!(parse_config("command = solve\njust text").unwrap_err(), ConfigError::Syntax { line: 2, .. }));
        assert_eq!(parse_config("tol = 1").unwrap_err(), ConfigError::Missing("command".into()));
        assert!(parse_config("command = solve\ndim = 3").is_err());
        assert!(parse_config("command = solve\ncone.theta = 90").is_err());
    }

    #[test]
    fn families() {
        let c = parse_config("command = solve\nfamily.minus = frobenius\nell.lambda = 0.5\nfamily.r0 = 0.3").unwrap();
        assert_eq!(c.pair.minus().name(), MatrixFamily::frobenius_ball(0.3, *c.pair.ell()).unwrap().name());
        assert!(parse_config("command = solve\nfamily.plus = finite").is_err());
        let f = parse_config("command = solve\nfamily.plus = finite\nfamily.members = 1 0 1; 1 0 2").unwrap();
        assert_eq!(f.pair.plus().name(), "finite(2)");
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = parse_config("command = verify\nout = a").unwrap();
        let b = parse_config("command = verify\nout = b").unwrap();
        let c = parse_config("command = verify\ntol = 1e-9").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn fit_radii_default_respects_grid() {
        let c = parse_config("command = diagnose").unwrap();
        assert_eq!(c.fit_radii_for(1.0 / 64.0), vec![0.2]);
        assert_eq!(c.fit_radii_for(1.0 / 256.0), vec![0.2, 0.1, 0.05]);
    }
}
