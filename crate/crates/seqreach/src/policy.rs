//! Feedback-policy extraction from solved value fields and closed-loop
//! verification.
//!
//! The extracted policy stores the argmax control of the maximized generator
//! at every node of every stored slice. For control-affine models that is a
//! bang-bang table: each control coordinate sits at a box endpoint according
//! to the sign of its switching function, and the table is invariant under
//! positive scaling of the value field.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid;
use crate::hjb::{hamiltonian_max_outflow, ChainProblem, ChainSolution, Scratch};
use crate::mc;
use crate::motion::{Deadline, Scoring};
use crate::sde::{Policy, PolicyCtx, SdeModel};

/// Between-node lookup rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookup {
    /// Use the control stored at the nearest node (default).
    NearestNode,
    /// Interpolate the value field multilinearly around the query point and
    /// redo the argmax on the interpolated stencil.
    ReArgmax,
}

/// Control table of one phase: slices ascending in time, node-major controls.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    pub times: Vec<f64>,
    /// `times.len()` entries of `node_count * control_dim` controls.
    pub controls: Vec<Vec<f64>>,
    pub seg_start: f64,
    pub seg_end: f64,
    /// Dwell phases index their table by elapsed time since phase entry.
    pub relative_time: bool,
}

impl PhaseTable {
    fn slice_index_at(&self, t: f64) -> usize {
        match self.times.iter().position(|&s| s >= t - 1e-9) {
            Some(i) => i,
            None => self.times.len() - 1,
        }
    }
}

/// Grid-indexed feedback policy extracted from a chain solution.
pub struct FeedbackPolicy {
    pub model: Arc<SdeModel>,
    pub grid: Arc<Grid>,
    pub phases: Vec<PhaseTable>,
    pub lookup: Lookup,
    /// Value slices kept for the re-argmax lookup.
    value_slices: Option<Vec<crate::hjb::PhaseSolution>>,
    lattice: usize,
}

impl FeedbackPolicy {
    /// Rebuilds a policy from stored tables (nearest-node lookup only; the
    /// re-argmax rule needs the value slices, which artifacts do not keep).
    pub fn from_tables(
        model: Arc<SdeModel>,
        grid: Arc<Grid>,
        phases: Vec<PhaseTable>,
        lookup: Lookup,
        lattice: usize,
    ) -> Self {
        FeedbackPolicy {
            model,
            grid,
            phases,
            lookup,
            value_slices: None,
            lattice,
        }
    }

    fn table_time(&self, table: &PhaseTable, ctx: &PolicyCtx) -> f64 {
        if table.relative_time {
            table.seg_start + (ctx.t - ctx.phase_entry_t)
        } else {
            ctx.t
        }
    }
}

impl Policy for FeedbackPolicy {
    fn control_into(&self, ctx: &PolicyCtx, x: &[f64], out: &mut [f64]) {
        let phase = ctx.phase.min(self.phases.len() - 1);
        let table = &self.phases[phase];
        let t = self.table_time(table, ctx).clamp(table.seg_start, table.seg_end);
        let si = table.slice_index_at(t);
        match self.lookup {
            Lookup::NearestNode => {
                let node = self.grid.nearest_node(x);
                let du = self.model.control_dim;
                out.copy_from_slice(&table.controls[si][node * du..(node + 1) * du]);
            }
            Lookup::ReArgmax => {
                let slices = self
                    .value_slices
                    .as_ref()
                    .expect("re-argmax lookup keeps the value slices");
                let values = &slices[phase].slices[si];
                let mut scr = Scratch::new(&self.model);
                match virtual_argmax(&self.model, &self.grid, values, x, self.lattice, &mut scr)
                {
                    Ok(u) => out.copy_from_slice(&u),
                    Err(_) => {
                        let node = self.grid.nearest_node(x);
                        let du = self.model.control_dim;
                        out.copy_from_slice(&table.controls[si][node * du..(node + 1) * du]);
                    }
                }
            }
        }
    }
}

/// Argmax of the generator evaluated on a virtual stencil of multilinearly
/// interpolated values around `x`.
fn virtual_argmax(
    model: &SdeModel,
    grid: &Grid,
    values: &[f64],
    x: &[f64],
    lattice: usize,
    scr: &mut Scratch,
) -> Result<Vec<f64>> {
    let vg = virtual_grid(grid, x);
    let vals = virtual_stencil_values(grid, values, x);
    // center node of the 3^d virtual grid
    let center = vg.node_count() / 2;
    let (_, u) = hamiltonian_max_outflow(model, &vg, &vals, center, lattice, scr)?;
    Ok(u)
}

fn virtual_grid(grid: &Grid, x: &[f64]) -> Grid {
    let h = grid.spacing();
    let lo: Vec<f64> = x.iter().zip(h).map(|(xi, hi)| xi - hi).collect();
    let hi_v: Vec<f64> = x.iter().zip(h).map(|(xi, hi)| xi + hi).collect();
    Grid::new(lo, hi_v, vec![3; grid.dim()])
}

fn virtual_stencil_values(grid: &Grid, values: &[f64], x: &[f64]) -> Vec<f64> {
    let field = crate::grid::ValueField {
        grid: Arc::new(grid.clone()),
        t: 0.0,
        values: values.to_vec(),
    };
    let vg = virtual_grid(grid, x);
    let mut out = vec![0.0; vg.node_count()];
    let mut p = vec![0.0; vg.dim()];
    for (i, v) in out.iter_mut().enumerate() {
        vg.coords_into(i, &mut p);
        *v = field.interpolate(&p);
    }
    out
}

/// Extracts the argmax control table from every stored slice of a solved
/// chain.
pub fn extract_policy(
    problem: &ChainProblem,
    solution: &ChainSolution,
    lookup: Lookup,
) -> Result<FeedbackPolicy> {
    let model = &problem.model;
    let grid = &problem.grid;
    let du = model.control_dim;
    let mut phases = Vec::with_capacity(problem.phases.len());

    for (k, phase_sol) in solution.phases.iter().enumerate() {
        let mut controls = Vec::with_capacity(phase_sol.times.len());
        for slice in &phase_sol.slices {
            let per_node: Vec<Vec<f64>> = (0..grid.node_count())
                .into_par_iter()
                .map_init(
                    || Scratch::new(model),
                    |scr, node| -> Result<Vec<f64>> {
                        let (_, u) = hamiltonian_max_outflow(
                            model,
                            grid,
                            slice,
                            node,
                            problem.control_lattice,
                            scr,
                        )?;
                        Ok(u)
                    },
                )
                .collect::<Result<_>>()?;
            let table: Vec<f64> = per_node.into_iter().flatten().collect();
            debug_assert_eq!(table.len(), grid.node_count() * du);
            controls.push(table);
        }
        phases.push(PhaseTable {
            times: phase_sol.times.clone(),
            controls,
            seg_start: problem.phases[k].seg_start,
            seg_end: problem.phases[k].seg_end,
            relative_time: matches!(
                problem.spec.phases[k].deadline,
                Deadline::DwellFor { .. }
            ),
        });
    }

    Ok(FeedbackPolicy {
        model: problem.model.clone(),
        grid: problem.grid.clone(),
        phases,
        lookup,
        value_slices: if lookup == Lookup::ReArgmax {
            Some(solution.phases.clone())
        } else {
            None
        },
        lattice: problem.control_lattice,
    })
}

/// Per-node comparison of closed-loop Monte Carlo success against the PDE
/// field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeComparison {
    pub node: usize,
    pub coords: Vec<f64>,
    pub v_pde: f64,
    pub p_mc: f64,
    pub ci_halfwidth: f64,
    /// `p_mc - v_pde`; negative values measure policy suboptimality plus
    /// discretization error.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub nodes: Vec<NodeComparison>,
    pub min_gap: f64,
    pub max_abs_gap: f64,
    pub worst_node: usize,
}

/// Runs the extracted policy in closed loop from a sample of grid nodes and
/// reports Monte Carlo success against the PDE prediction.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_verify(
    problem: &ChainProblem,
    solution: &ChainSolution,
    policy: &FeedbackPolicy,
    nodes: &[usize],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<ClosedLoopReport> {
    let v0 = solution.initial_field(problem);
    let t0 = problem.phases[0].seg_start;
    let estimates = mc::estimate_at_nodes(
        &problem.model,
        policy,
        &problem.spec,
        Scoring::Sharp,
        t0,
        &problem.grid,
        nodes,
        n_paths,
        dt,
        seed,
    )?;
    let mut comparisons = Vec::with_capacity(nodes.len());
    let mut min_gap = f64::INFINITY;
    let mut max_abs_gap: f64 = 0.0;
    let mut worst = nodes[0];
    for (&node, est) in nodes.iter().zip(&estimates) {
        let v_pde = v0.values[node];
        let gap = est.p_hat - v_pde;
        if gap < min_gap {
            min_gap = gap;
        }
        if gap.abs() > max_abs_gap {
            max_abs_gap = gap.abs();
            worst = node;
        }
        comparisons.push(NodeComparison {
            node,
            coords: problem.grid.coords(node),
            v_pde,
            p_mc: est.p_hat,
            ci_halfwidth: est.ci_halfwidth,
            gap,
        });
    }
    Ok(ClosedLoopReport {
        nodes: comparisons,
        min_gap,
        max_abs_gap,
        worst_node: worst,
    })
}

/// True when every stored control sits at a control-box endpoint.
pub fn is_bang_bang(policy: &FeedbackPolicy) -> bool {
    let bx = &policy.model.control_box;
    let du = policy.model.control_dim;
    policy.phases.iter().all(|ph| {
        ph.controls.iter().all(|slice| {
            slice
                .chunks(du)
                .all(|u| u.iter().zip(bx).all(|(ui, (lo, hi))| ui == lo || ui == hi))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RegionSet;
    use crate::hjb::{solve_chain, ChainProblem, HjbOptions};
    use crate::motion::{MotionSpec, Phase};

    fn controlled_problem(u_box: (f64, f64)) -> ChainProblem {
        let model = Arc::new(
            SdeModel::new(
                "push",
                1,
                1,
                vec![u_box],
                |_x, u, out| out[0] = u[0],
                |_x, _u, out| out[0] = 0.5,
            )
            .with_control_affine(true),
        );
        let grid = Arc::new(Grid::new(vec![0.0], vec![2.0], vec![41]));
        let spec = MotionSpec {
            phases: vec![Phase {
                way: RegionSet::open_box(vec![0.0], vec![2.0]),
                goal: RegionSet::half_space(vec![-1.0], -2.0), // x >= 2
                deadline: crate::motion::Deadline::PathUntil { t: 2.0 },
            }],
            horizon: 2.0,
            eps: 0.0,
        };
        ChainProblem::from_spec(model, &spec, grid, &HjbOptions::default()).unwrap()
    }

    #[test]
    fn singleton_box_gives_constant_policy() {
        let problem = controlled_problem((0.5, 0.5));
        let solution = solve_chain(&problem).unwrap();
        let policy = extract_policy(&problem, &solution, Lookup::NearestNode).unwrap();
        for table in &policy.phases {
            for slice in &table.controls {
                assert!(slice.iter().all(|&u| u == 0.5));
            }
        }
    }

    #[test]
    fn extracted_controls_are_box_feasible_and_bang_bang() {
        let problem = controlled_problem((-1.0, 1.0));
        let solution = solve_chain(&problem).unwrap();
        let policy = extract_policy(&problem, &solution, Lookup::NearestNode).unwrap();
        assert!(is_bang_bang(&policy));
    }

    #[test]
    fn argmax_invariant_under_positive_scaling() {
        let problem = controlled_problem((-1.0, 1.0));
        let solution = solve_chain(&problem).unwrap();
        let policy = extract_policy(&problem, &solution, Lookup::NearestNode).unwrap();

        // scale every stored slice by 2 and re-extract
        let mut scaled = solve_chain(&problem).unwrap();
        for ph in &mut scaled.phases {
            for slice in &mut ph.slices {
                for v in slice.iter_mut() {
                    *v *= 2.0;
                }
            }
        }
        let policy2 = extract_policy(&problem, &scaled, Lookup::NearestNode).unwrap();
        for (a, b) in policy.phases.iter().zip(&policy2.phases) {
            assert_eq!(a.controls, b.controls);
        }
    }

    #[test]
    fn closed_loop_trivial_goal_scores_one() {
        // goal everywhere: PDE and MC both certain
        let model = Arc::new(
            SdeModel::new(
                "pushy",
                1,
                1,
                vec![(0.0, 1.0)],
                |_x, u, out| out[0] = u[0],
                |_x, _u, out| out[0] = 0.3,
            )
            .with_control_affine(true),
        );
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![11]));
        let spec = MotionSpec::single_path(RegionSet::All, RegionSet::All, 0.5);
        let problem =
            ChainProblem::from_spec(model, &spec, grid, &HjbOptions::default()).unwrap();
        let solution = solve_chain(&problem).unwrap();
        let policy = extract_policy(&problem, &solution, Lookup::NearestNode).unwrap();
        let report =
            closed_loop_verify(&problem, &solution, &policy, &[3, 5, 7], 200, 0.01, 7).unwrap();
        for n in &report.nodes {
            assert_eq!(n.p_mc, 1.0);
            assert_eq!(n.v_pde, 1.0);
        }
    }

    #[test]
    fn re_argmax_lookup_runs_between_nodes() {
        let problem = controlled_problem((-1.0, 1.0));
        let solution = solve_chain(&problem).unwrap();
        let policy = extract_policy(&problem, &solution, Lookup::ReArgmax).unwrap();
        let mut out = vec![0.0];
        let ctx = PolicyCtx {
            phase: 0,
            t: 0.0,
            phase_entry_t: 0.0,
        };
        policy.control_into(&ctx, &[1.333], &mut out);
        assert!(out[0] == -1.0 || out[0] == 1.0);
    }
}
