//! File formats written and read by the commands.
//!
//! - Field CSV: header `x0,..,x{d-1},value`, one row per node in node-major
//!   order, numerics with 17 significant digits.
//! - Policy CSV: header `t,x0,..,x{d-1},u0,..`, slices in ascending time,
//!   nodes in node-major order within a slice.
//! - Trajectory CSV: `path,step,t,x0,..[,u0,..]`.
//! - Portable graymap (P5, 8-bit): fields rendered with value 0 -> black,
//!   1 -> white. For 2D grids, columns run along dimension 0 (low to high)
//!   and rows along dimension 1 with the highest coordinate at the top row.
//! - Run manifest: JSON echoing the resolved configuration plus grid, CFL
//!   and seed metadata; reruns from the echoed config are byte-identical.
//!
//! All writes go through a temp-file-plus-rename so partial artifacts never
//! appear under the final name.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::models::Equilibrium;
use crate::motion::ExitTimeRecord;
use crate::policy::{FeedbackPolicy, Lookup, PhaseTable};
use crate::sde::TrajectorySample;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp_write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Field CSV: coordinates then value, node-major.
pub fn write_field_csv(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    let dim = grid.dim();
    let mut out = String::new();
    for j in 0..dim {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("value\n");
    let mut x = vec![0.0; dim];
    for (i, v) in values.iter().enumerate() {
        grid.coords_into(i, &mut x);
        for xi in &x {
            out.push_str(&fmt_f64(*xi));
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a field CSV back; returns the values in file (node-major) order.
pub fn read_field_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let last = line
            .rsplit(',')
            .next()
            .ok_or_else(|| Error::Config(format!("malformed field CSV line {lineno}")))?;
        let v: f64 = last
            .parse()
            .map_err(|_| Error::Config(format!("bad value in field CSV line {lineno}")))?;
        values.push(v);
    }
    Ok(values)
}

/// 8-bit portable graymap of a 1D or 2D field; values are clamped to
/// `[0, 1]` and scaled to 0..=255.
pub fn write_field_pgm(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    let (width, height) = match grid.dim() {
        1 => (grid.nodes[0], 1),
        2 => (grid.nodes[0], grid.nodes[1]),
        d => {
            return Err(Error::Config(format!(
                "graymap export supports 1D and 2D fields, got {d}D"
            )))
        }
    };
    let mut bytes = Vec::with_capacity(64 + width * height);
    bytes.extend_from_slice(
        format!("P5\n# seqreach field, 0=black maps to value 0, 255=white to 1\n{width} {height}\n255\n")
            .as_bytes(),
    );
    for row in 0..height {
        for col in 0..width {
            let node = if grid.dim() == 1 {
                col
            } else {
                // top row = highest second coordinate
                grid.flat_index(&[col, height - 1 - row])
            };
            let v = values[node].clamp(0.0, 1.0);
            bytes.push((v * 255.0).round() as u8);
        }
    }
    write_atomic(path, &bytes)
}

/// Superlevel mask CSV: coordinates then 0/1 membership.
pub fn write_mask_csv(path: &Path, grid: &Grid, mask: &[bool]) -> Result<()> {
    let dim = grid.dim();
    let mut out = String::new();
    for j in 0..dim {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("inside\n");
    let mut x = vec![0.0; dim];
    for (i, m) in mask.iter().enumerate() {
        grid.coords_into(i, &mut x);
        for xi in &x {
            out.push_str(&fmt_f64(*xi));
            out.push(',');
        }
        out.push_str(if *m { "1\n" } else { "0\n" });
    }
    write_atomic(path, out.as_bytes())
}

/// Policy CSV for one phase: `t,coords...,controls...` with slices ascending
/// in time and nodes in node-major order.
pub fn write_policy_csv(path: &Path, grid: &Grid, table: &PhaseTable, du: usize) -> Result<()> {
    let dim = grid.dim();
    let mut out = String::new();
    out.push('t');
    for j in 0..dim {
        out.push_str(&format!(",x{j}"));
    }
    for j in 0..du {
        out.push_str(&format!(",u{j}"));
    }
    out.push('\n');
    let mut x = vec![0.0; dim];
    for (t, controls) in table.times.iter().zip(&table.controls) {
        for node in 0..grid.node_count() {
            grid.coords_into(node, &mut x);
            out.push_str(&fmt_f64(*t));
            for xi in &x {
                out.push(',');
                out.push_str(&fmt_f64(*xi));
            }
            for j in 0..du {
                out.push(',');
                out.push_str(&fmt_f64(controls[node * du + j]));
            }
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Reads one phase's policy CSV back into times and node-major control
/// tables.
pub fn read_policy_csv(
    path: &Path,
    node_count: usize,
    dim: usize,
    du: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    let mut times = Vec::new();
    let mut slices: Vec<Vec<f64>> = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_t = f64::NAN;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + dim + du {
            return Err(Error::Config(format!(
                "policy CSV line {lineno}: expected {} fields, got {}",
                1 + dim + du,
                fields.len()
            )));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad time in policy CSV line {lineno}")))?;
        if current.is_empty() || t != current_t {
            if !current.is_empty() {
                if current.len() != node_count * du {
                    return Err(Error::Config("policy CSV slice has wrong node count".into()));
                }
                times.push(current_t);
                slices.push(std::mem::take(&mut current));
            }
            current_t = t;
        }
        for f in &fields[1 + dim..] {
            let u: f64 = f
                .parse()
                .map_err(|_| Error::Config(format!("bad control in policy CSV line {lineno}")))?;
            current.push(u);
        }
    }
    if !current.is_empty() {
        if current.len() != node_count * du {
            return Err(Error::Config("policy CSV slice has wrong node count".into()));
        }
        times.push(current_t);
        slices.push(current);
    }
    Ok((times, slices))
}

/// Trajectory CSV for a batch of paths.
pub fn write_trajectories_csv(path: &Path, trajs: &[TrajectorySample]) -> Result<()> {
    let mut out = String::new();
    if let Some(first) = trajs.first() {
        out.push_str("path,step,t");
        for j in 0..first.state_dim {
            out.push_str(&format!(",x{j}"));
        }
        for j in 0..first.control_dim {
            out.push_str(&format!(",u{j}"));
        }
        out.push('\n');
    }
    for (p, traj) in trajs.iter().enumerate() {
        for step in 0..=traj.n_steps() {
            out.push_str(&format!("{p},{step},"));
            out.push_str(&fmt_f64(traj.time_at(step)));
            for xi in traj.state_at(step) {
                out.push(',');
                out.push_str(&fmt_f64(*xi));
            }
            if step < traj.n_steps() {
                for j in 0..traj.control_dim {
                    out.push(',');
                    out.push_str(&fmt_f64(traj.controls[step * traj.control_dim + j]));
                }
            } else {
                for _ in 0..traj.control_dim {
                    out.push_str(",");
                }
            }
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Verdict CSV: one row per path with the score, the 0/1 verdict and the
/// exit-time record.
pub fn write_verdicts_csv(
    path: &Path,
    rows: &[(usize, f64, &ExitTimeRecord)],
) -> Result<()> {
    let mut out = String::new();
    if let Some((_, _, rec)) = rows.first() {
        out.push_str("path,score,verdict");
        for i in 0..rec.theta.len() {
            out.push_str(&format!(",theta{}", i + 1));
        }
        for i in 0..rec.tau.len() {
            out.push_str(&format!(",tau{}", i + 1));
        }
        out.push('\n');
    }
    for (p, score, rec) in rows {
        out.push_str(&format!("{p},"));
        out.push_str(&fmt_f64(*score));
        out.push_str(if *score == 1.0 { ",1" } else { ",0" });
        for th in &rec.theta {
            out.push(',');
            if th.is_infinite() {
                out.push_str("inf");
            } else {
                out.push_str(&fmt_f64(*th));
            }
        }
        for ta in &rec.tau {
            out.push(',');
            out.push_str(&fmt_f64(*ta));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Run manifest: resolved config plus derived run facts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub grid_nodes: Vec<usize>,
    pub eps: f64,
    pub dt_pde: f64,
    pub cfl_bound: f64,
    pub seed: u64,
    pub phases: usize,
    /// Set geometry provenance; the bundled case-study sets are
    /// reconstructions, not published coordinates.
    pub geometry_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<Vec<Equilibrium>>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a stored policy from a solve output directory.
pub fn load_policy(
    dir: &Path,
    problem: &crate::hjb::ChainProblem,
) -> Result<FeedbackPolicy> {
    let grid = &problem.grid;
    let du = problem.model.control_dim;
    let mut phases = Vec::new();
    for k in 0..problem.phases.len() {
        let path = phase_dir(dir, k).join("policy.csv");
        let (times, controls) = read_policy_csv(&path, grid.node_count(), grid.dim(), du)?;
        phases.push(PhaseTable {
            times,
            controls,
            seg_start: problem.phases[k].seg_start,
            seg_end: problem.phases[k].seg_end,
            relative_time: matches!(
                problem.spec.phases[k].deadline,
                crate::motion::Deadline::DwellFor { .. }
            ),
        });
    }
    Ok(FeedbackPolicy::from_tables(
        problem.model.clone(),
        problem.grid.clone(),
        phases,
        Lookup::NearestNode,
        problem.control_lattice,
    ))
}

pub fn phase_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("phase_{}", k + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_csv_round_trips_values() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![3, 4]);
        let values: Vec<f64> = (0..12).map(|i| (i as f64) / 7.0 + 1e-13).collect();
        let path = dir.path().join("field.csv");
        write_field_csv(&path, &grid, &values).unwrap();
        let back = read_field_csv(&path).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn pgm_has_correct_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![5, 3]);
        let values = vec![0.5; 15];
        let path = dir.path().join("f.pgm");
        write_field_pgm(&path, &grid, &values).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header_end = bytes
            .windows(4)
            .position(|w| w == b"255\n")
            .unwrap()
            + 4;
        assert!(bytes.starts_with(b"P5\n"));
        assert_eq!(bytes.len() - header_end, 15);
        assert_eq!(bytes[header_end], 128);
    }

    #[test]
    fn policy_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(vec![0.0], vec![1.0], vec![3]);
        let table = PhaseTable {
            times: vec![0.0, 0.5],
            controls: vec![vec![1.0, -1.0, 1.0], vec![-1.0, -1.0, 1.0]],
            seg_start: 0.0,
            seg_end: 0.5,
            relative_time: false,
        };
        let path = dir.path().join("policy.csv");
        write_policy_csv(&path, &grid, &table, 1).unwrap();
        let (times, controls) = read_policy_csv(&path, 3, 1, 1).unwrap();
        assert_eq!(times, table.times);
        assert_eq!(controls, table.controls);
    }
}
