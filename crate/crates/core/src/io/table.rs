//! Plain-text tables: CSV output and whitespace-separated matrix input.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dynamics::energy;
use crate::geometry::kinetic_energy;
use crate::hybrid::Trajectory;
use crate::models::MechanicalSystem;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
}

/// 17 significant digits, exponent notation, `.` as decimal point.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_row(out: &mut dyn Write, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    let line: Vec<String> = values.into_iter().map(format_f64).collect();
    writeln!(out, "{}", line.join(","))
}

pub fn trajectory_header(sys: &dyn MechanicalSystem) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(sys.output_columns())
        .chain(std::iter::once("energy".to_string()))
        .collect()
}

pub fn events_header(sys: &dyn MechanicalSystem) -> Vec<String> {
    let labels = sys.velocity_labels();
    std::iter::once("tau".to_string())
        .chain(labels.iter().map(|l| format!("{l}_minus")))
        .chain(labels.iter().map(|l| format!("{l}_plus")))
        .chain(["T_minus", "T_plus", "guard_rate", "mu"].map(String::from))
        .collect()
}

pub fn write_trajectory(
    out: &mut dyn Write,
    sys: &dyn MechanicalSystem,
    traj: &Trajectory,
) -> std::io::Result<()> {
    writeln!(out, "{}", trajectory_header(sys).join(","))?;
    for s in &traj.samples {
        let e = energy(sys, s).unwrap_or(f64::NAN);
        write_row(
            out,
            std::iter::once(s.t)
                .chain(sys.output_row(&s.x, &s.v))
                .chain(std::iter::once(e)),
        )?;
    }
    Ok(())
}

pub fn write_events(
    out: &mut dyn Write,
    sys: &dyn MechanicalSystem,
    traj: &Trajectory,
) -> std::io::Result<()> {
    writeln!(out, "{}", events_header(sys).join(","))?;
    for e in &traj.events {
        write_row(
            out,
            std::iter::once(e.tau)
                .chain(e.v_minus.iter().copied())
                .chain(e.v_plus.iter().copied())
                .chain([e.t_minus, e.t_plus, e.guard_rate, e.mu]),
        )?;
    }
    Ok(())
}

pub fn write_matrix(out: &mut dyn Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format_f64(*x)).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Parses whitespace-separated rows, one per line. Blank lines and lines
/// starting with `#` are skipped. An empty table has `cols` columns if given.
pub fn parse_matrix(
    text: &str,
    path: &str,
    cols: Option<usize>,
) -> Result<DMatrix<f64>, TableError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = cols;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| TableError::Parse {
            path: path.to_string(),
            line: i + 1,
            reason,
        };
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match width {
            Some(w) if w != row.len() => {
                return Err(parse_err(format!(
                    "expected {w} columns, got {}",
                    row.len()
                )));
            }
            _ => width = Some(row.len()),
        }
        rows.push(row);
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(
        rows.len(),
        width.unwrap_or(0),
        &flat,
    ))
}

pub fn read_matrix(
    path: impl AsRef<Path>,
    cols: Option<usize>,
) -> Result<DMatrix<f64>, TableError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_matrix(&text, &shown, cols)
}

/// `T⁻` and `T⁺` of every event, for audit summaries.
pub fn event_energies(sys: &dyn MechanicalSystem, traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.events
        .iter()
        .filter_map(|e| {
            let g = sys.metric_at(&e.x_tau).ok()?;
            Some((
                kinetic_energy(&g, &e.v_minus),
                kinetic_energy(&g, &e.v_plus),
            ))
        })
        .collect()
}
