//! Command drivers behind the `seqreach` binary.
//!
//! Four subcommands: `solve` runs the backward chain and writes field,
//! policy and mask artifacts; `verify` replays a solve's artifacts against
//! closed-loop Monte Carlo; `simulate` dumps trajectories with exit-time
//! records and verdicts; `report` re-renders graymaps from existing CSVs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical refusal (CFL),
//! 4 verification failure.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{PolicyConfig, Resolved, RunConfig};
use crate::error::{Error, Result};
use crate::exports::{self, Manifest};
use crate::hjb::{audit_boundary_exactness, solve_chain, superlevel_set, ChainProblem};
use crate::motion::{exit_record, score_trajectory, CompiledSpec, Scoring};
use crate::policy::{extract_policy, ClosedLoopReport, Lookup};
use crate::sde::{simulate_path, ConstantPolicy, Policy, SimOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CFL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "SEQREACH_OUT";

/// Command-line surface, parsed by the thin binary.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(args: &CommonArgs, cfg: &RunConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(out) = &cfg.out_dir {
        return out.clone();
    }
    let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "out".into());
    let stem = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Path::new(&root).join(stem)
}

fn build_problem(resolved: &Resolved) -> Result<ChainProblem> {
    ChainProblem::from_spec(
        resolved.model.clone(),
        &resolved.spec,
        resolved.grid.clone(),
        &resolved.hjb_options,
    )
}

fn make_manifest(cfg: &RunConfig, resolved: &Resolved, problem: &ChainProblem) -> Manifest {
    Manifest {
        tool: "seqreach".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        grid_nodes: problem.grid.nodes.clone(),
        eps: resolved.spec.eps,
        dt_pde: problem.dt,
        cfl_bound: problem.cfl_bound,
        seed: cfg.mc.seed,
        phases: problem.phases.len(),
        geometry_note: resolved.geometry_note.clone(),
        equilibria: resolved.equilibria.clone(),
    }
}

/// Evenly spaced export subset of the stored slices (endpoints included).
fn export_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap.max(2) {
        return (0..n).collect();
    }
    let cap = cap.max(2);
    let mut out: Vec<usize> = (0..cap)
        .map(|i| i * (n - 1) / (cap - 1))
        .collect();
    out.dedup();
    out
}

/// Solves the chain and writes fields, heatmaps, masks, policy and manifest.
pub fn cmd_solve(args: &CommonArgs) -> Result<PathBuf> {
    let cfg = load_config(args)?;
    let resolved = cfg.resolve()?;
    let out = out_dir(args, &cfg);
    let problem = build_problem(&resolved)?;
    if !args.quiet {
        eprintln!(
            "solve: {} phases on {:?} grid, dt_pde = {:.3e} (cfl bound {:.3e})",
            problem.phases.len(),
            problem.grid.nodes,
            problem.dt,
            problem.cfl_bound
        );
    }
    let solution = solve_chain(&problem)?;
    debug_assert!(audit_boundary_exactness(&problem, &solution).is_ok());
    let policy = extract_policy(&problem, &solution, Lookup::NearestNode)?;

    exports::write_manifest(&out.join("manifest.json"), &make_manifest(&cfg, &resolved, &problem))?;

    for (k, phase_sol) in solution.phases.iter().enumerate() {
        let dir = exports::phase_dir(&out, k);
        let picks = export_indices(phase_sol.times.len(), cfg.pde.export_max_slices);
        let mut index = String::from("slice,time\n");
        for (file_no, &si) in picks.iter().enumerate() {
            index.push_str(&format!(
                "{file_no},{}\n",
                exports::fmt_f64(phase_sol.times[si])
            ));
            exports::write_field_csv(
                &dir.join(format!("slice_{file_no:05}.csv")),
                &problem.grid,
                &phase_sol.slices[si],
            )?;
        }
        exports::write_atomic(&dir.join("slices.csv"), index.as_bytes())?;
        exports::write_field_csv(&dir.join("final.csv"), &problem.grid, &phase_sol.slices[0])?;
        if problem.grid.dim() <= 2 {
            exports::write_field_pgm(&dir.join("final.pgm"), &problem.grid, &phase_sol.slices[0])?;
        }
        exports::write_policy_csv(
            &dir.join("policy.csv"),
            &problem.grid,
            &policy.phases[k],
            problem.model.control_dim,
        )?;
        let initial = crate::grid::ValueField {
            grid: problem.grid.clone(),
            t: phase_sol.times[0],
            values: phase_sol.slices[0].clone(),
        };
        for p in &cfg.pde.superlevels {
            let (mask, _) = superlevel_set(&initial, *p);
            exports::write_mask_csv(
                &dir.join(format!("superlevel_p{p:.3}.csv")),
                &problem.grid,
                &mask,
            )?;
        }
    }
    if !args.quiet {
        eprintln!("solve: artifacts in {}", out.display());
    }
    Ok(out)
}

/// Verification report written by `verify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub tolerance: f64,
    pub min_gap: f64,
    pub max_abs_gap: f64,
    pub worst_node: usize,
    pub worst_node_coords: Vec<f64>,
    pub n_paths: usize,
    pub report: ClosedLoopReport,
}

/// Replays a solve's artifacts: loads the stored policy, runs closed-loop
/// Monte Carlo at sampled nodes and compares with the stored field.
pub fn cmd_verify(args: &CommonArgs) -> Result<(PathBuf, VerifyReport)> {
    let cfg = load_config(args)?;
    let out = out_dir(args, &cfg);
    let manifest = exports::read_manifest(&out.join("manifest.json"))?;
    let resolved = manifest.config.resolve()?;
    let problem = build_problem(&resolved)?;
    let v0_values = exports::read_field_csv(&exports::phase_dir(&out, 0).join("final.csv"))?;
    if v0_values.len() != problem.grid.node_count() {
        return Err(Error::Config(
            "stored field does not match the configured grid".into(),
        ));
    }
    let policy = exports::load_policy(&out, &problem)?;
    let solution = {
        // verification only needs the initial field; wrap the stored values
        let mut sol = solve_shell(&problem);
        sol.phases[0].times = vec![problem.phases[0].seg_start];
        sol.phases[0].slices = vec![v0_values.clone()];
        sol
    };

    let nodes = sample_nodes(
        &problem,
        &v0_values,
        cfg.verify.n_nodes,
        cfg.verify.value_band,
    );
    if nodes.is_empty() {
        return Err(Error::Config(
            "no nodes inside the verification value band".into(),
        ));
    }
    let report = crate::policy::closed_loop_verify(
        &problem,
        &solution,
        &policy,
        &nodes,
        cfg.mc.n_paths,
        cfg.mc.dt.min(resolved.dt_mc),
        cfg.mc.seed,
    )?;
    let pass = report.min_gap >= -cfg.verify.tolerance;
    let worst = report
        .nodes
        .iter()
        .find(|n| n.node == report.worst_node)
        .expect("worst node is in the report");
    let full = VerifyReport {
        pass,
        tolerance: cfg.verify.tolerance,
        min_gap: report.min_gap,
        max_abs_gap: report.max_abs_gap,
        worst_node: report.worst_node,
        worst_node_coords: worst.coords.clone(),
        n_paths: cfg.mc.n_paths,
        report,
    };
    let mut bytes = serde_json::to_vec_pretty(&full)?;
    bytes.push(b'\n');
    exports::write_atomic(&out.join("verify_report.json"), &bytes)?;
    if !args.quiet {
        eprintln!(
            "verify: min gap {:+.4}, tolerance {:.4} -> {}",
            full.min_gap,
            full.tolerance,
            if pass { "pass" } else { "FAIL" }
        );
    }
    Ok((out, full))
}

fn solve_shell(problem: &ChainProblem) -> crate::hjb::ChainSolution {
    crate::hjb::ChainSolution {
        phases: problem
            .phases
            .iter()
            .map(|_| crate::hjb::PhaseSolution {
                times: vec![],
                slices: vec![],
            })
            .collect(),
    }
}

/// Deterministic node sample: interior nodes of the first phase whose value
/// lies inside the band, evenly spaced in node order.
fn sample_nodes(
    problem: &ChainProblem,
    values: &[f64],
    count: usize,
    band: (f64, f64),
) -> Vec<usize> {
    let mask = &problem.masks[0];
    let eligible: Vec<usize> = (0..values.len())
        .filter(|&i| mask[i] && values[i] >= band.0 && values[i] <= band.1)
        .collect();
    if eligible.len() <= count {
        return eligible;
    }
    (0..count)
        .map(|i| eligible[i * (eligible.len() - 1) / (count - 1).max(1)])
        .collect()
}

/// Simulates trajectories under the configured policy and writes per-path
/// exit records and verdicts.
pub fn cmd_simulate(args: &CommonArgs) -> Result<PathBuf> {
    let cfg = load_config(args)?;
    let resolved = cfg.resolve()?;
    let out = out_dir(args, &cfg);
    let compiled = CompiledSpec::new(&resolved.spec, Scoring::Sharp)?;

    let loaded_problem;
    let policy: Box<dyn Policy> = match &cfg.simulate.policy {
        PolicyConfig::BoxMidpoint => Box::new(ConstantPolicy(
            resolved
                .model
                .control_box
                .iter()
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        )),
        PolicyConfig::Constant { u } => {
            if u.len() != resolved.model.control_dim {
                return Err(Error::Config("constant policy has wrong dimension".into()));
            }
            Box::new(ConstantPolicy(u.clone()))
        }
        PolicyConfig::FromArtifacts { dir } => {
            let manifest = exports::read_manifest(&dir.join("manifest.json"))?;
            let res = manifest.config.resolve()?;
            loaded_problem = build_problem(&res)?;
            Box::new(exports::load_policy(dir, &loaded_problem)?)
        }
    };

    let x0 = cfg.simulate.x0.clone().unwrap_or_else(|| {
        resolved
            .grid
            .lo
            .iter()
            .zip(&resolved.grid.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    });
    let opts = SimOptions {
        bounding_box: Some((resolved.grid.lo.clone(), resolved.grid.hi.clone())),
        exit_sets: compiled.exit_sets.clone(),
        deadlines: compiled.deadlines.clone(),
    };
    let horizon = resolved.spec.time_span();
    let mut trajs = Vec::with_capacity(cfg.simulate.n_paths);
    for path in 0..cfg.simulate.n_paths {
        trajs.push(simulate_path(
            &resolved.model,
            policy.as_ref(),
            0.0,
            &x0,
            horizon,
            cfg.mc.dt.min(resolved.dt_mc),
            cfg.mc.seed,
            path as u64,
            &opts,
        )?);
    }

    let records: Vec<_> = trajs.iter().map(|t| exit_record(t, &compiled)).collect();
    let rows: Vec<(usize, f64, &crate::motion::ExitTimeRecord)> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| (i, score_trajectory(t, &compiled), &records[i]))
        .collect();
    exports::write_trajectories_csv(&out.join("trajectories.csv"), &trajs)?;
    exports::write_verdicts_csv(&out.join("verdicts.csv"), &rows)?;
    exports::write_manifest(
        &out.join("manifest.json"),
        &make_manifest(&cfg, &resolved, &build_problem(&resolved)?),
    )?;
    if !args.quiet {
        eprintln!(
            "simulate: {} paths to {}",
            cfg.simulate.n_paths,
            out.display()
        );
    }
    Ok(out)
}

/// Renders graymaps from the field CSVs of an existing run.
pub fn cmd_report(args: &CommonArgs) -> Result<PathBuf> {
    let cfg = load_config(args)?;
    let out = out_dir(args, &cfg);
    let manifest = exports::read_manifest(&out.join("manifest.json"))?;
    let resolved = manifest.config.resolve()?;
    let grid = resolved.grid;
    if grid.dim() > 2 {
        return Err(Error::Config("report renders 1D and 2D fields only".into()));
    }
    let mut rendered = 0usize;
    for k in 0.. {
        let dir = exports::phase_dir(&out, k);
        if !dir.is_dir() {
            break;
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            if name.starts_with("slice_") && name.ends_with(".csv") || name == "final.csv" {
                let values = exports::read_field_csv(&path)?;
                if values.len() == grid.node_count() {
                    exports::write_field_pgm(&path.with_extension("pgm"), &grid, &values)?;
                    rendered += 1;
                }
            }
        }
    }
    if rendered == 0 {
        return Err(Error::MissingArtifact(format!(
            "no field CSVs under {}",
            out.display()
        )));
    }
    if !args.quiet {
        eprintln!("report: rendered {rendered} graymaps in {}", out.display());
    }
    Ok(out)
}

/// Maps an error to the documented exit code and prints machine-readable
/// JSON on stderr.
pub fn error_exit_code(err: &Error) -> i32 {
    let (kind, code) = match err {
        Error::CflViolation { .. } => ("cfl", EXIT_CFL),
        Error::Config(_) | Error::Json(_) | Error::Spec(_) => ("config", EXIT_CONFIG),
        Error::MissingArtifact(_) => ("missing_artifact", EXIT_CONFIG),
        _ => ("runtime", EXIT_CONFIG),
    };
    eprintln!(
        "{}",
        serde_json::json!({ "error": err.to_string(), "kind": kind })
    );
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_indices_include_endpoints() {
        let idx = export_indices(1000, 10);
        assert_eq!(idx.first(), Some(&0));
        assert_eq!(idx.last(), Some(&999));
        assert!(idx.len() <= 10);
        assert_eq!(export_indices(5, 40), vec![0, 1, 2, 3, 4]);
    }
}
