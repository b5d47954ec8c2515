//! CSV and sidecar metadata persistence for fields and series.
//!
//! Fields are written as `x,y,value` rows in node order (row-major, `x` fastest)
//! with 17 significant digits, so a write/read cycle reproduces every value
//! bit for bit. The grid geometry travels in a JSON sidecar `<stem>.meta.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Point};

/// Geometry record stored next to a field CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub nx: usize,
    pub extent: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl FieldMeta {
    pub fn of(spec: &GridSpec) -> Self {
        Self {
            nx: spec.nx(),
            extent: spec.extent(),
            origin_x: spec.origin().x,
            origin_y: spec.origin().y,
        }
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.nx, self.extent, Point::new(self.origin_x, self.origin_y))
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Path of the metadata sidecar for a field CSV.
pub fn meta_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    csv.with_file_name(format!("{stem}.meta.json"))
}

/// Writes `field` as CSV plus its geometry sidecar.
pub fn write_field_csv(path: &Path, field: &GridField) -> Result<()> {
    let spec = field.spec();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x,y,value")?;
    for j in 0..spec.nx() {
        for i in 0..spec.nx() {
            let p = spec.node(i, j);
            writeln!(w, "{},{},{}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(field.get(i, j)))?;
        }
    }
    w.flush()?;
    let meta = serde_json::to_string_pretty(&FieldMeta::of(spec))
        .map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(meta_path(path), meta + "\n")?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`]. Geometry comes from the sidecar
/// when present, otherwise it is inferred from the coordinate columns.
pub fn read_field_csv(path: &Path) -> Result<GridField> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))??;
    if header.trim() != "x,y,value" {
        return Err(Error::Parse(format!(
            "{}: expected header `x,y,value`, found `{}`",
            path.display(),
            header.trim()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!(
                "{}:{}: expected 3 columns",
                path.display(),
                lineno + 2
            )));
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| {
                Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 2))
            })
        };
        xs.push(parse(cols[0])?);
        ys.push(parse(cols[1])?);
        values.push(parse(cols[2])?);
    }
    let meta = meta_path(path);
    let spec = if meta.exists() {
        let text = fs::read_to_string(&meta)?;
        let m: FieldMeta = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        m.spec()?
    } else {
        let nx = (values.len() as f64).sqrt().round() as usize;
        if nx * nx != values.len() || nx < GridSpec::MIN_NODES {
            return Err(Error::Parse(format!(
                "{}: {} rows do not form a square grid",
                path.display(),
                values.len()
            )));
        }
        GridSpec::new(nx, xs[nx - 1] - xs[0], Point::new(xs[0], ys[0]))?
    };
    GridField::from_values(spec, values)
}

/// Writes a numeric table with the given header.
pub fn write_table_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.as_ref().iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `iter,residual` rows.
pub fn write_residuals_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iter,residual")?;
    for (k, r) in history.iter().enumerate() {
        writeln!(w, "{k},{}", fmt_f64(*r))?;
    }
    w.flush()?;
    Ok(())
}
