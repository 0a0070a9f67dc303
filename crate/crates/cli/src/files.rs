//! CSV files with a one-line `#` metadata header, and their readers.
//!
//! Floats are written in shortest round-trip form, so reruns with the same
//! inputs produce byte-identical files.

use std::path::Path;

use microscale_core::homogenizer::Tangents;
use microscale_core::inverse::Alpha;
use microscale_core::measurement::MeasurementSet;
use microscale_core::optimize::IterationRecord;
use microscale_core::rve::CircleSet;

use crate::CliError;

pub const TOOL: &str = "microscale-id";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes `# <tool> <version>; <meta>`, the column names, then the rows.
pub fn write_csv(path: &Path, meta: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut buf = format!("# {TOOL} {VERSION}; {meta}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let fail = |e: csv::Error| CliError::Input { path: path.display().to_string(), reason: e.to_string() };
        w.write_record(columns).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        w.flush().map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    std::fs::write(path, buf).map_err(CliError::io(format!("writing {}", path.display())))
}

/// Column-name keyed rows of a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<std::collections::BTreeMap<String, String>>, CliError> {
    let fail = |reason: String| CliError::Input { path: path.display().to_string(), reason };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let header = r.headers().map_err(|e| fail(e.to_string()))?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            Ok(header.iter().map(String::from).zip(rec.iter().map(String::from)).collect())
        })
        .collect()
}

fn field(row: &std::collections::BTreeMap<String, String>, key: &str, path: &Path) -> Result<f64, CliError> {
    let raw = row.get(key).ok_or_else(|| CliError::Input {
        path: path.display().to_string(),
        reason: format!("missing column {key}"),
    })?;
    raw.trim().parse().map_err(|_| CliError::Input {
        path: path.display().to_string(),
        reason: format!("column {key}: not a number: {raw:?}"),
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_measurements(path: &Path, noisy: &MeasurementSet, clean: &MeasurementSet) -> Result<(), CliError> {
    let seed = noisy.noise_seed.map_or("none".to_string(), |s| s.to_string());
    let meta = format!("x,y,v,clean_v in mm; noise_level {}; noise_seed {seed}", noisy.noise_level);
    let rows: Vec<Vec<String>> = (0..noisy.len())
        .map(|i| {
            let p = noisy.points[i];
            vec![num(p[0]), num(p[1]), num(noisy.values[i]), num(clean.values[i])]
        })
        .collect();
    write_csv(path, &meta, &["x", "y", "v", "clean_v"], &rows)
}

/// The noisy column `v` as a measurement set.
pub fn read_measurements(path: &Path) -> Result<MeasurementSet, CliError> {
    let rows = read_csv(path)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for row in &rows {
        points.push([field(row, "x", path)?, field(row, "y", path)?]);
        values.push(field(row, "v", path)?);
    }
    Ok(MeasurementSet::new(points, values)?)
}

pub fn write_alpha(path: &Path, alpha: &Alpha, objective: f64, iterations: usize, termination: &str) -> Result<(), CliError> {
    write_csv(
        path,
        "lambda, mu in GPa; l in mm",
        &["lambda", "mu", "l", "objective", "iterations", "termination"],
        &[vec![
            num(alpha.lambda),
            num(alpha.mu),
            num(alpha.l),
            num(objective),
            iterations.to_string(),
            termination.to_string(),
        ]],
    )
}

pub fn read_alpha(path: &Path) -> Result<Alpha, CliError> {
    let rows = read_csv(path)?;
    let row = rows.first().ok_or_else(|| CliError::Input {
        path: path.display().to_string(),
        reason: "no data row".into(),
    })?;
    Ok(Alpha::new(field(row, "lambda", path)?, field(row, "mu", path)?, field(row, "l", path)?)?)
}

pub fn write_beta(
    path: &Path,
    phi: f64,
    vf: f64,
    circles: usize,
    objective: f64,
    iterations: usize,
    termination: &str,
) -> Result<(), CliError> {
    write_csv(
        path,
        "phi in mm; vf dimensionless",
        &["phi", "vf", "circles", "objective", "iterations", "termination"],
        &[vec![
            num(phi),
            num(vf),
            circles.to_string(),
            num(objective),
            iterations.to_string(),
            termination.to_string(),
        ]],
    )
}

/// Long format: one `(block, row, col, value)` per entry of C, D and the
/// strain/gradient coupling.
pub fn write_tangents(path: &Path, t: &Tangents, meta: &str) -> Result<(), CliError> {
    let mut rows = Vec::new();
    // column-major storage
    let mut push = |block: &str, nrows: usize, m: &[f64]| {
        for i in 0..nrows {
            for j in 0..m.len() / nrows {
                rows.push(vec![block.to_string(), i.to_string(), j.to_string(), num(m[j * nrows + i])]);
            }
        }
    };
    push("C", 3, t.c.0.as_slice());
    push("D", 6, t.d.0.as_slice());
    push("coupling", 3, t.coupling.as_slice());
    let meta = format!(
        "C in GPa, D in GPa*mm^2, coupling in GPa*mm; edge {} mm; circles {}; pore_fraction {}; {meta}",
        t.edge_length, t.circle_count, t.pore_fraction
    );
    write_csv(path, &meta, &["block", "row", "col", "value"], &rows)
}

pub fn write_circles(path: &Path, circles: &CircleSet, edge_length: f64, meta: &str) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = circles
        .centers
        .iter()
        .map(|c| vec![num(c[0] * edge_length), num(c[1] * edge_length), num(circles.radius * edge_length)])
        .collect();
    write_csv(path, &format!("mm; edge {edge_length}; {meta}"), &["x", "y", "radius"], &rows)
}

/// `iteration, <parameters>, objective, grad_norm, step`.
pub fn write_convergence(path: &Path, parameters: &[&str], history: &[IterationRecord], meta: &str) -> Result<(), CliError> {
    let mut columns = vec!["iteration"];
    columns.extend_from_slice(parameters);
    columns.extend_from_slice(&["objective", "grad_norm", "step"]);
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.x.iter().map(|&v| num(v)));
            row.extend([num(r.f), num(r.grad_norm), num(r.step)]);
            row
        })
        .collect();
    write_csv(path, meta, &columns, &rows)
}
