//! Trajectory CSV, field snapshots and report files.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::funnel::FunnelRadius;
use crate::integrate::{Sample, TrajectoryLog};
use crate::verify::VerificationReport;

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(format!("{}: {e}", path.display()))
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Column names for a log with `m` output channels.
pub fn trajectory_header(m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=m).map(|i| format!("y{i}")));
    h.extend((1..=m).map(|i| format!("yref{i}")));
    h.push("e_norm".into());
    h.push("funnel_radius".into());
    h.extend((1..=m).map(|i| format!("ise{i}")));
    h.extend(["v_l2", "u_l2", "margin"].map(String::from));
    h
}

pub fn render_trajectory(log: &TrajectoryLog) -> String {
    let mut out = trajectory_header(log.channels).join(",");
    out.push('\n');
    for s in &log.samples {
        let mut cells: Vec<String> = Vec::with_capacity(3 * log.channels + 6);
        cells.push(s.t.to_string());
        cells.extend(s.y.iter().map(f64::to_string));
        cells.extend(s.y_ref.iter().map(f64::to_string));
        cells.push(s.e_norm.to_string());
        cells.push(s.funnel_radius.to_string());
        cells.extend(s.i_se.iter().map(f64::to_string));
        cells.push(s.v_l2.to_string());
        cells.push(s.u_l2.to_string());
        cells.push(s.margin.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Format {
        line,
        message: format!("column {column}: {cell:?} is not a number"),
    })
}

pub fn parse_trajectory(text: &str) -> Result<TrajectoryLog> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let (_, header) = lines.next().ok_or(Error::Format {
        line: 1,
        message: "missing header".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let width = names.len();
    if width < 9 || (width - 6) % 3 != 0 {
        return Err(Error::Format {
            line: 1,
            message: format!("malformed header with {width} columns"),
        });
    }
    let m = (width - 6) / 3;
    let expected = trajectory_header(m);
    if names != expected {
        return Err(Error::Format {
            line: 1,
            message: format!("malformed header, expected {}", expected.join(",")),
        });
    }

    let mut log = TrajectoryLog::new(m);
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != width {
            return Err(Error::Format {
                line,
                message: format!("expected {width} cells, found {}", cells.len()),
            });
        }
        let num = |k: usize| parse_cell(cells[k], line, &expected[k]);
        let vec_at = |start: usize| (start..start + m).map(num).collect::<Result<Vec<f64>>>();
        let radius_cell = cells[2 * m + 2].trim();
        let funnel_radius = if radius_cell == "inf" {
            FunnelRadius::Unbounded
        } else {
            FunnelRadius::Bounded(num(2 * m + 2)?)
        };
        let sample = Sample {
            t: num(0)?,
            y: vec_at(1)?,
            y_ref: vec_at(1 + m)?,
            e_norm: num(1 + 2 * m)?,
            funnel_radius,
            i_se: vec_at(3 + 2 * m)?,
            v_l2: num(3 + 3 * m)?,
            u_l2: num(4 + 3 * m)?,
            margin: num(5 + 3 * m)?,
        };
        if let Some(prev) = log.samples.last() {
            if !(sample.t > prev.t) {
                return Err(Error::Format {
                    line,
                    message: format!("time {} does not increase past {}", sample.t, prev.t),
                });
            }
        }
        log.samples.push(sample);
    }
    Ok(log)
}

pub fn write_trajectory(log: &TrajectoryLog, path: &Path) -> Result<()> {
    write_atomic(path, render_trajectory(log).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryLog> {
    parse_trajectory(&read_text(path)?)
}

/// Nodal `v` and `u` on an `nx x ny` structured mesh at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl Snapshot {
    pub fn new(nx: usize, ny: usize, t: f64, v: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let nodes = (nx + 1) * (ny + 1);
        crate::error::check_len("snapshot v", nodes, v.len())?;
        crate::error::check_len("snapshot u", nodes, u.len())?;
        Ok(Self { nx, ny, t, v, u })
    }

    /// Splits a stacked `[v; u]` state.
    pub fn from_state(nx: usize, ny: usize, t: f64, state: &[f64]) -> Result<Self> {
        let nodes = (nx + 1) * (ny + 1);
        crate::error::check_len("snapshot state", 2 * nodes, state.len())?;
        Self::new(nx, ny, t, state[..nodes].to_vec(), state[nodes..].to_vec())
    }

    pub fn state(&self) -> Vec<f64> {
        let mut x = self.v.clone();
        x.extend(&self.u);
        x
    }

    pub fn render(&self) -> String {
        let mut out = format!("{} {} {}\n", self.nx, self.ny, self.t);
        for (v, u) in self.v.iter().zip(&self.u) {
            out.push_str(&format!("{v} {u}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Format {
            line: 1,
            message: "missing snapshot header".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::Format {
            line: 1,
            message: format!("snapshot header must read `nx ny t`, found {header:?}"),
        };
        if head.len() != 3 {
            return Err(bad_header());
        }
        let nx: usize = head[0].parse().map_err(|_| bad_header())?;
        let ny: usize = head[1].parse().map_err(|_| bad_header())?;
        let t: f64 = head[2].parse().map_err(|_| bad_header())?;
        let expected = (nx + 1) * (ny + 1);
        let (mut v, mut u) = (Vec::with_capacity(expected), Vec::with_capacity(expected));
        for (line, row) in lines {
            let cells: Vec<&str> = row.split_whitespace().collect();
            if cells.len() != 2 {
                return Err(Error::Format {
                    line,
                    message: format!("expected `v u`, found {row:?}"),
                });
            }
            v.push(parse_cell(cells[0], line, "v")?);
            u.push(parse_cell(cells[1], line, "u")?);
        }
        if v.len() != expected {
            return Err(Error::Dimension {
                context: "snapshot nodes",
                expected,
                found: v.len(),
            });
        }
        Ok(Self { nx, ny, t, v, u })
    }
}

pub fn write_snapshot(snapshot: &Snapshot, path: &Path) -> Result<()> {
    write_atomic(path, snapshot.render().as_bytes())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    Snapshot::parse(&read_text(path)?)
}

/// One line per report.
pub fn render_reports_text(reports: &[VerificationReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

pub fn render_reports_json(reports: &[VerificationReport]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::Io(e.to_string()))
}

/// Writes `<stem>.txt` and `<stem>.json` next to each other.
pub fn write_reports(reports: &[VerificationReport], stem: &Path) -> Result<()> {
    write_atomic(&stem.with_extension("txt"), render_reports_text(reports).as_bytes())?;
    write_atomic(&stem.with_extension("json"), render_reports_json(reports)?.as_bytes())
}
