//! Command dispatch, output files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pucci_core::fixtures::boundary_data;
use pucci_core::freeboundary::{
    blowup_flatness, boundary_consistency, check_alpha_beta, detect_regular_points, epsilon_monotonicity,
    extract_zero_set, fit_two_plane, ConeSpec, FreeBoundaryCurve, Window,
};
use pucci_core::io::{read_field_csv, write_field_csv, write_residuals_csv, write_table_csv};
use pucci_core::monotonicity::j_series_check;
use pucci_core::solver::{epsilon_sweep, segregation_sweep, solve_dirichlet, solve_segregation, SweepReport};
use pucci_core::{verify, GridField, Point};
use serde_json::{json, Map, Value};

use crate::config::{Command, RunConfig, SweepKind};

pub const MANIFEST: &str = "manifest.json";
pub const ARTIFACT: &str = "pucci-lab";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The input does not support the diagnostic (no interface, no regular point).
    Degenerate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Degenerate => "DEGENERATE",
        }
    }

    fn of(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

/// Result of [`run`]: the process exit code and where the manifest went.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub manifest: PathBuf,
    pub verdicts: BTreeMap<String, Verdict>,
    pub error: Option<String>,
}

struct Recorder {
    dir: PathBuf,
    outputs: Vec<String>,
    timings: Map<String, Value>,
    telemetry: Map<String, Value>,
    verdicts: BTreeMap<String, Verdict>,
}

/// JSON number, or a string for values JSON cannot carry.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

impl Recorder {
    fn path(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.dir.join(name)
    }

    fn field(&mut self, name: &str, u: &GridField) -> pucci_core::Result<()> {
        let p = self.path(name);
        write_field_csv(&p, u)?;
        let meta = pucci_core::io::meta_path(&p);
        let meta_name = meta.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        self.path(&meta_name);
        Ok(())
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.insert(stage.into(), json!(t.elapsed().as_secs_f64()));
        out
    }

    fn tel(&mut self, key: &str, v: Value) {
        self.telemetry.insert(key.into(), v);
    }

    fn verdict(&mut self, name: &str, v: Verdict) {
        self.verdicts.insert(name.into(), v);
    }
}

/// Executes `cfg`, writing outputs and the manifest into `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Outcome {
    let manifest = out.join(MANIFEST);
    if let Err(e) = fs::create_dir_all(out) {
        return Outcome {
            exit_code: 2,
            manifest,
            verdicts: BTreeMap::new(),
            error: Some(format!("cannot create output directory {}: {e}", out.display())),
        };
    }
    let mut rec = Recorder {
        dir: out.to_path_buf(),
        outputs: Vec::new(),
        timings: Map::new(),
        telemetry: Map::new(),
        verdicts: BTreeMap::new(),
    };
    let result = match cfg.command {
        Command::Solve => solve(cfg, &mut rec),
        Command::Segregate => segregate(cfg, &mut rec),
        Command::Sweep => sweep(cfg, &mut rec).map(|_| ()),
        Command::Diagnose => diagnose(cfg, &mut rec),
        Command::Verify => verify_all(&mut rec),
    };
    let error = result.err().map(|e| e.to_string());
    let exit_code = if error.is_some() {
        2
    } else if rec.verdicts.values().all(|v| *v == Verdict::Pass) {
        0
    } else {
        1
    };
    let status = match exit_code {
        0 => "pass",
        1 => "fail",
        _ => "error",
    };
    let doc = json!({
        "artifact": ARTIFACT,
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "config": cfg.echo,
        "config_hash": cfg.hash(),
        "timings": rec.timings,
        "telemetry": rec.telemetry,
        "verdicts": rec.verdicts.iter().map(|(k, v)| (k.clone(), json!(v.as_str()))).collect::<Map<_, _>>(),
        "outputs": rec.outputs,
        "status": status,
        "exit_code": exit_code,
        "error": error,
    });
    let error = match write_atomic(&manifest, &doc) {
        Ok(()) => error,
        Err(e) => Some(format!("cannot write manifest: {e}")),
    };
    Outcome { exit_code: if error.is_some() { 2 } else { exit_code }, manifest, verdicts: rec.verdicts, error }
}

fn write_atomic(path: &Path, doc: &Value) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(serde_json::to_string_pretty(doc).expect("manifest serialises").as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn datum_field(cfg: &RunConfig) -> pucci_core::Result<GridField> {
    let d = cfg.datum;
    boundary_data(cfg.grid.nx(), move |p| d.eval(p))
}

fn species_data(cfg: &RunConfig) -> pucci_core::Result<(GridField, GridField)> {
    let d = cfg.datum;
    Ok((
        boundary_data(cfg.grid.nx(), move |p| d.eval(p).max(0.0))?,
        boundary_data(cfg.grid.nx(), move |p| (-d.eval(p)).max(0.0))?,
    ))
}

fn solve(cfg: &RunConfig, rec: &mut Recorder) -> pucci_core::Result<()> {
    let b = datum_field(cfg)?;
    let r = rec.time("solve", || solve_dirichlet(&b, cfg.operator, &cfg.pair, &cfg.solve))?;
    rec.field("field.csv", &r.field)?;
    write_residuals_csv(&rec.path("residuals.csv"), &r.residual_history)?;
    rec.tel("operator", json!(cfg.operator.name()));
    rec.tel("iterations", json!(r.iterations));
    rec.tel("final_residual", num(r.final_residual));
    rec.tel("lipschitz_seminorm", num(r.lipschitz_seminorm));
    rec.tel("fallback_nodes", json!(r.fallback_nodes));
    rec.verdict("converged", Verdict::of(r.converged()));
    Ok(())
}

fn segregate(cfg: &RunConfig, rec: &mut Recorder) -> pucci_core::Result<()> {
    let (f1, f2) = species_data(cfg)?;
    let r = rec.time("segregate", || solve_segregation(&f1, &f2, cfg.pair.ell(), &cfg.solve))?;
    rec.field("field.csv", &r.combined())?;
    rec.field("species1.csv", &r.u1)?;
    rec.field("species2.csv", &r.u2)?;
    write_residuals_csv(&rec.path("residuals.csv"), &r.residual_history)?;
    rec.tel("iterations", json!(r.iterations));
    rec.tel("final_residual", num(r.final_residual));
    rec.tel("overlap", num(r.overlap()));
    rec.tel("lipschitz_seminorm", nums(&r.lipschitz_seminorm));
    rec.verdict("converged", Verdict::of(r.converged()));
    Ok(())
}

/// Runs the configured sweep and returns its final field.
fn sweep(cfg: &RunConfig, rec: &mut Recorder) -> pucci_core::Result<Option<GridField>> {
    let sw: SweepReport = match cfg.sweep_kind {
        SweepKind::GEps => {
            let b = datum_field(cfg)?;
            rec.time("sweep", || epsilon_sweep(&b, &cfg.pair, &cfg.eps_list, &cfg.solve))?
        }
        SweepKind::Segregation => {
            let (f1, f2) = species_data(cfg)?;
            rec.time("sweep", || segregation_sweep(&f1, &f2, cfg.pair.ell(), &cfg.eps_list, &cfg.solve))?
        }
    };
    let rows: Vec<[f64; 7]> = sw
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            [
                e.eps,
                if e.status == pucci_core::solver::SolveStatus::Converged { 1.0 } else { 0.0 },
                e.iterations as f64,
                e.final_residual,
                e.lipschitz_seminorm,
                e.overlap.unwrap_or(f64::NAN),
                if k == 0 { f64::NAN } else { sw.gaps[k - 1] },
            ]
        })
        .collect();
    write_table_csv(
        &rec.path("sweep.csv"),
        &["eps", "converged", "iterations", "final_residual", "lipschitz_seminorm", "overlap", "gap"],
        rows,
    )?;
    let lips: Vec<f64> = sw.entries.iter().map(|e| e.lipschitz_seminorm).collect();
    let hi = lips.iter().copied().fold(0.0, f64::max);
    let lo = lips.iter().copied().fold(f64::INFINITY, f64::min);
    rec.tel("sweep_kind", json!(match cfg.sweep_kind { SweepKind::GEps => "g_eps", SweepKind::Segregation => "segregation" }));
    rec.tel("eps_completed", nums(&sw.entries.iter().map(|e| e.eps).collect::<Vec<_>>()));
    rec.tel("lipschitz_seminorms", nums(&lips));
    rec.tel("lipschitz_spread", num(if hi > 0.0 { (hi - lo) / hi } else { 0.0 }));
    rec.tel("gaps", nums(&sw.gaps));
    rec.tel("gaps_decreasing", json!(sw.gaps.windows(2).all(|w| w[1] < w[0])));
    if sw.entries.iter().any(|e| e.overlap.is_some()) {
        rec.tel("overlaps", nums(&sw.entries.iter().filter_map(|e| e.overlap).collect::<Vec<_>>()));
    }
    if let Some(f) = &sw.failure {
        rec.tel("failure", json!(f));
    }
    rec.verdict("sweep_complete", Verdict::of(!sw.partial));
    if let Some(u) = &sw.final_field {
        rec.field("field.csv", u)?;
    }
    Ok(sw.final_field)
}

const POINT_VERDICTS: [&str; 4] = ["jr_monotone", "alpha_beta", "flatness_decay", "eps_monotone"];

fn diagnose(cfg: &RunConfig, rec: &mut Recorder) -> pucci_core::Result<()> {
    let u = match &cfg.field {
        Some(path) => {
            rec.tel("field_source", json!(path));
            rec.time("load", || read_field_csv(Path::new(path)))
                .map_err(|e| pucci_core::Error::Input(format!("cannot load field {path}: {e}")))?
        }
        None => {
            rec.tel("field_source", json!("sweep"));
            match sweep(cfg, rec)? {
                Some(u) => u,
                None => return Err(pucci_core::Error::Input("sweep produced no field to diagnose".into())),
            }
        }
    };
    let t = Instant::now();
    let curve = extract_zero_set(&u);
    write_table_csv(&rec.path("curve.csv"), &["seg_id", "x", "y", "nx", "ny"], curve.rows())?;
    let jr_path = rec.path("jr_series.csv");
    let diag_path = rec.path("diagnostics.csv");
    rec.tel("curve_vertices", json!(curve.vertices.len()));
    if !(u.min_value() < 0.0 && u.max_value() > 0.0) {
        write_table_csv(&jr_path, &["point", "r", "j1", "j2", "j"], Vec::<Vec<f64>>::new())?;
        write_table_csv(&diag_path, &["point"], Vec::<Vec<f64>>::new())?;
        rec.verdict("sign_change", Verdict::Fail);
        for name in ["boundary_consistency", "regular_points"].into_iter().chain(POINT_VERDICTS) {
            rec.verdict(name, Verdict::Degenerate);
        }
        return Ok(());
    }
    rec.verdict("sign_change", Verdict::Pass);

    let bc = boundary_consistency(&u)?;
    rec.tel("boundary_distance", num(bc.distance));
    rec.verdict(
        "boundary_consistency",
        if bc.degenerate { Verdict::Degenerate } else { Verdict::of(bc.coincident) },
    );

    let points = detect_regular_points(&u, &curve, &cfg.radii, cfg.max_points)?;
    rec.tel("regular_points", json!(points.len()));
    rec.verdict("regular_points", Verdict::of(!points.is_empty()));
    let fit_radii = cfg.fit_radii_for(u.spec().h());
    rec.tel("fit_radii", nums(&fit_radii));

    let mut jr_rows = Vec::new();
    let mut diag_rows = Vec::new();
    let mut ok = [true; 4];
    let mut notes = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let d = point_diagnostics(cfg, &u, &curve, p.x0, &fit_radii);
        for r in &d.jr_rows {
            jr_rows.push([k as f64, r[0], r[1], r[2], r[3]]);
        }
        for (slot, pass) in ok.iter_mut().zip(d.passes) {
            *slot &= pass;
        }
        notes.extend(d.notes.into_iter().map(|n| format!("point {k}: {n}")));
        let mut row = vec![k as f64, p.x0.x, p.x0.y, p.m, p.r_tilde, p.c_lower, p.c_upper, p.zero_density];
        row.extend(d.values);
        row.extend(d.passes.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        diag_rows.push(row);
    }
    write_table_csv(&jr_path, &["point", "r", "j1", "j2", "j"], jr_rows)?;
    let mut header: Vec<String> =
        ["point", "x", "y", "m", "r_tilde", "c_lower", "c_upper", "zero_density", "alpha", "beta", "fit_residual", "eps"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    header.extend(cfg.flatness_scales.iter().map(|s| format!("flatness_{s}")));
    header.extend(POINT_VERDICTS.iter().map(|s| format!("{s}_pass")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table_csv(&diag_path, &header_refs, diag_rows)?;
    for (name, pass) in POINT_VERDICTS.iter().zip(ok) {
        rec.verdict(name, if points.is_empty() { Verdict::Degenerate } else { Verdict::of(pass) });
    }
    if !notes.is_empty() {
        rec.tel("notes", json!(notes));
    }
    rec.timings.insert("diagnostics".into(), json!(t.elapsed().as_secs_f64()));
    Ok(())
}

struct PointDiagnostics {
    jr_rows: Vec<Vec<f64>>,
    /// `alpha, beta, fit_residual, eps, flatness per scale`
    values: Vec<f64>,
    passes: [bool; 4],
    notes: Vec<String>,
}

/// Per-point checks. A check that cannot be evaluated fails and leaves a note.
fn point_diagnostics(cfg: &RunConfig, u: &GridField, curve: &FreeBoundaryCurve, x0: Point, fit_radii: &[f64]) -> PointDiagnostics {
    let mut notes = Vec::new();
    let mut passes = [false; 4];
    let (mut jr_rows, mut values) = (Vec::new(), vec![f64::NAN; 4]);

    match j_series_check(u, x0, &cfg.radii, cfg.eta) {
        Ok(s) => {
            passes[0] = s.passed();
            jr_rows = s.rows();
        }
        Err(e) => notes.push(format!("J_r: {e}")),
    }

    let normal = curve.vertices.iter().position(|v| *v == x0).map_or(Point::new(1.0, 0.0), |k| curve.normals[k]);
    let mut axis = normal;
    match fit_two_plane(u, x0, fit_radii, normal) {
        Ok(fit) => {
            values[0] = fit.alpha;
            values[1] = fit.beta;
            values[2] = fit.residual;
            axis = fit.nu;
            match check_alpha_beta(&fit, cfg.rel_tol) {
                Ok(b) => passes[1] = b,
                Err(e) => notes.push(format!("slopes: {e}")),
            }
        }
        Err(e) => notes.push(format!("fit: {e}")),
    }

    match ConeSpec::new(axis, cfg.cone_theta)
        .and_then(|cone| Ok((cone, Window::around(x0, cfg.window_half)?)))
        .and_then(|(cone, w)| epsilon_monotonicity(u, &cone, &w))
    {
        Ok(m) => {
            values[3] = m.eps;
            passes[3] = m.eps <= cfg.max_eps;
        }
        Err(e) => notes.push(format!("eps-monotonicity: {e}")),
    }

    match blowup_flatness(u, x0, &cfg.flatness_scales) {
        Ok(f) => {
            passes[2] = f.windows(2).all(|w| w[1] <= w[0]);
            values.extend(f);
        }
        Err(e) => {
            notes.push(format!("flatness: {e}"));
            values.extend(std::iter::repeat_n(f64::NAN, cfg.flatness_scales.len()));
        }
    }
    PointDiagnostics { jr_rows, values, passes, notes }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn verify_all(rec: &mut Recorder) -> pucci_core::Result<()> {
    let suites = rec.time("verify", verify::run_all);
    let mut text = String::from("suite,check,value,bound,passed\n");
    for s in &suites {
        for c in &s.checks {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_cell(&s.name),
                csv_cell(&c.name),
                pucci_core::io::fmt_f64(c.value),
                csv_cell(&c.bound),
                c.passed as u8
            ));
        }
        rec.verdict(&s.name, Verdict::of(s.passed()));
    }
    fs::write(rec.path("diagnostics.csv"), text)?;
    rec.tel("suites", json!(suites.len()));
    Ok(())
}
