//! File formats: trajectory CSV, JSON event log, two-column sample files.
//!
//! Floats are written with `Display`, the shortest representation that
//! parses back to the same value.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{CollisionEvent, Snapshot, SnapshotKind, Trajectory};
use crate::error::{Error, Result};
use crate::field::{PiecewiseConstantFn, PiecewiseLinearFn};
use crate::init::ParticleState;

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "i", "x_left", "x_right", "v"];

/// Everything in a [`Trajectory`] except the snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub fingerprint: String,
    pub final_time: f64,
    pub eps_coll: f64,
    pub steps: usize,
    pub max_dt: f64,
    pub events: Vec<CollisionEvent>,
}

impl EventLog {
    pub fn of(trajectory: &Trajectory) -> Self {
        EventLog {
            fingerprint: trajectory.fingerprint.clone(),
            final_time: trajectory.final_time,
            eps_coll: trajectory.eps_coll,
            steps: trajectory.steps,
            max_dt: trajectory.max_dt,
            events: trajectory.events.clone(),
        }
    }
}

/// One row per snapshot per cell; `i` is the cell's original index.
pub fn write_trajectory_csv<W: Write>(trajectory: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for snap in &trajectory.snapshots {
        let s = &snap.state;
        let t = s.time().to_string();
        for (i, (x, v)) in s.positions().windows(2).zip(s.densities()).enumerate() {
            w.write_record([
                t.as_str(),
                &s.ids()[i].to_string(),
                &x[0].to_string(),
                &x[1].to_string(),
                &v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Row {
    t: f64,
    i: usize,
    x_left: f64,
    x_right: f64,
    v: f64,
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, line: usize) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::invalid(format!("line {line}: cannot parse column {}", TRAJECTORY_HEADER[k])))
}

/// Rebuilds snapshots from a trajectory CSV.
///
/// A snapshot ends where `t` changes or the cell index stops increasing;
/// two consecutive snapshots at the same time are a pre/post collision
/// pair. Masses are recovered as `v * (x_right - x_left)`.
pub fn read_snapshots<R: Read>(input: R) -> Result<Vec<Snapshot>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(TRAJECTORY_HEADER) {
        return Err(Error::invalid(format!(
            "trajectory header must be {}",
            TRAJECTORY_HEADER.join(",")
        )));
    }
    let mut groups: Vec<Vec<Row>> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let row = Row {
            t: parse_field(&rec, 0, line)?,
            i: parse_field(&rec, 1, line)?,
            x_left: parse_field(&rec, 2, line)?,
            x_right: parse_field(&rec, 3, line)?,
            v: parse_field(&rec, 4, line)?,
        };
        let fresh = match groups.last().and_then(|g| g.last()) {
            Some(prev) => prev.t != row.t || row.i <= prev.i,
            None => true,
        };
        if fresh {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("group exists").push(row);
    }
    if groups.is_empty() {
        return Err(Error::invalid("trajectory file has no rows"));
    }
    // The rightmost particle is never deleted, so it keeps its initial id.
    let last_id = groups[0].len();
    let mut snapshots = Vec::with_capacity(groups.len());
    for (g, rows) in groups.iter().enumerate() {
        for w in rows.windows(2) {
            if w[0].x_right != w[1].x_left {
                return Err(Error::invalid(format!(
                    "snapshot at t = {}: cells {} and {} do not share a particle",
                    w[0].t, w[0].i, w[1].i
                )));
            }
        }
        let mut positions: Vec<f64> = rows.iter().map(|r| r.x_left).collect();
        positions.push(rows[rows.len() - 1].x_right);
        let mut ids: Vec<usize> = rows.iter().map(|r| r.i).collect();
        ids.push(last_id);
        let densities: Vec<f64> = rows.iter().map(|r| r.v).collect();
        let masses = rows.iter().map(|r| r.v * (r.x_right - r.x_left)).collect();
        let state = ParticleState::from_parts(rows[0].t, positions, densities, masses, Some(ids))?;
        let same_prev = g > 0 && groups[g - 1][0].t == rows[0].t;
        let same_next = g + 1 < groups.len() && groups[g + 1][0].t == rows[0].t;
        let kind = if same_prev {
            SnapshotKind::PostCollision
        } else if same_next {
            SnapshotKind::PreCollision
        } else {
            SnapshotKind::Scheduled
        };
        snapshots.push(Snapshot { kind, state });
    }
    Ok(snapshots)
}

pub fn write_event_log<W: Write>(trajectory: &Trajectory, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &EventLog::of(trajectory))?;
    Ok(())
}

pub fn read_event_log<R: Read>(input: R) -> Result<EventLog> {
    Ok(serde_json::from_reader(input)?)
}

/// Joins snapshots and an event log back into a trajectory.
pub fn assemble_trajectory(snapshots: Vec<Snapshot>, log: EventLog) -> Result<Trajectory> {
    if snapshots.is_empty() {
        return Err(Error::invalid("a trajectory needs at least one snapshot"));
    }
    Ok(Trajectory {
        snapshots,
        events: log.events,
        fingerprint: log.fingerprint,
        final_time: log.final_time,
        eps_coll: log.eps_coll,
        steps: log.steps,
        max_dt: log.max_dt,
    })
}

pub fn save_trajectory(trajectory: &Trajectory, csv_path: &Path, events_path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(csv_path)?);
    write_trajectory_csv(trajectory, &mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(File::create(events_path)?);
    write_event_log(trajectory, &mut f)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn load_trajectory(csv_path: &Path, events_path: &Path) -> Result<Trajectory> {
    let snapshots = read_snapshots(File::open(csv_path)?)?;
    let log = read_event_log(File::open(events_path)?)?;
    assemble_trajectory(snapshots, log)
}

/// Writes `(x, value)` pairs under the given header.
pub fn write_columns<W: Write>(header: [&str; 2], rows: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (x, y) in rows {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column numeric CSV with a header row.
pub fn read_columns<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("line {}: column {} is not a number", k + 2, c + 1)))
        };
        if rec.len() != 2 {
            return Err(Error::invalid(format!("line {}: expected two columns", k + 2)));
        }
        xs.push(get(0)?);
        ys.push(get(1)?);
    }
    Ok((xs, ys))
}

pub fn read_columns_file(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    read_columns(File::open(path)?)
}

/// `n` equispaced points on `[lo, hi]`, endpoints included.
pub fn sample_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo < hi) {
        return Err(Error::invalid(format!("need n >= 2 and lo < hi, got n = {n} on [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|k| if k + 1 == n { hi } else { lo + k as f64 * h }).collect())
}

pub fn sample_constant(v: &PiecewiseConstantFn, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    Ok(sample_grid(lo, hi, n)?.into_iter().map(|x| (x, v.eval(x))).collect())
}

pub fn sample_linear(a: &PiecewiseLinearFn, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    Ok(sample_grid(lo, hi, n)?.into_iter().map(|x| (x, a.eval(x))).collect())
}
