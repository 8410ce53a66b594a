//! Backward HJB sweeps chained through successor-supplied boundary data.
//!
//! Each phase `k` of a motion specification owns one PDE: on the time
//! segment ending at its deadline, interior nodes of the phase's exit set
//! `A_k` evolve by backward-time explicit Euler with the maximized Dynkin
//! generator, while every node outside `A_k` is pinned to the Dirichlet data
//! `V_{k+1} * l_k`. The last phase uses `V_{n+1} = 1`. Sweeping phases from
//! last to first yields the full stack and the initial-time field of the
//! first phase.
//!
//! Scheme: drift-upwinded first differences, central second differences,
//! 4-point central cross stencils (the bundled models have diagonal noise,
//! so cross terms are untested in anger and flagged experimental). The
//! update is monotone under the CFL bound
//! `dt <= C / sum_j (max|f_j|/h_j + max a_jj/h_j^2)` with `C = 0.9`;
//! violating steps are refused, not damped. On the truncation boundary of
//! the grid box the stencil degrades to one-sided differences via
//! zero-gradient ghost values (outflow).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionSet;
use crate::grid::{Grid, ValueField};
use crate::motion::{CompiledSpec, Deadline, MotionSpec, PhasePayoff, Scoring, SpecKind};
use crate::sde::SdeModel;

/// Solver knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HjbOptions {
    /// Requested PDE time step; `None` picks the largest stable step.
    pub dt: Option<f64>,
    /// Store every n-th slice (endpoints are always stored).
    pub store_every: usize,
    /// Lattice points per control axis for non-affine models.
    pub control_lattice: usize,
    /// CFL safety factor.
    pub cfl_safety: f64,
}

impl Default for HjbOptions {
    fn default() -> Self {
        HjbOptions {
            dt: None,
            store_every: 1,
            control_lattice: 9,
            cfl_safety: 0.9,
        }
    }
}

/// One phase of the chain, lowered to solver form.
#[derive(Debug, Clone)]
pub struct ChainPhase {
    /// The open set the PDE lives on.
    pub exit_set: RegionSet,
    pub payoff: PhasePayoff,
    pub seg_start: f64,
    pub seg_end: f64,
}

/// A fully prepared chain of PDE problems.
pub struct ChainProblem {
    pub model: Arc<SdeModel>,
    pub grid: Arc<Grid>,
    pub spec: MotionSpec,
    pub phases: Vec<ChainPhase>,
    /// Node-inside-`A_k` masks, one per phase.
    pub masks: Vec<Vec<bool>>,
    /// Payoff `l_k` tabulated at the grid nodes, one per phase.
    pub payoff_values: Vec<Vec<f64>>,
    /// Stable step actually used.
    pub dt: f64,
    /// The CFL bound the step was checked against.
    pub cfl_bound: f64,
    pub store_every: usize,
    pub control_lattice: usize,
}

impl ChainProblem {
    /// Lowers a motion specification onto a grid. `spec.eps > 0` routes the
    /// goals through erosion + ramp payoffs; `eps == 0` keeps the sharp
    /// indicator data.
    pub fn from_spec(
        model: Arc<SdeModel>,
        spec: &MotionSpec,
        grid: Arc<Grid>,
        opts: &HjbOptions,
    ) -> Result<Self> {
        let kind = spec.kind()?;
        let scoring = if spec.eps > 0.0 {
            Scoring::Mollified(spec.eps)
        } else {
            Scoring::Sharp
        };
        let compiled = CompiledSpec::new(spec, scoring)?;

        let mut phases = Vec::new();
        for (i, phase) in spec.phases.iter().enumerate() {
            let (seg_start, seg_end) = match (&kind, &phase.deadline) {
                (_, Deadline::PathUntil { t }) => (0.0, *t),
                (_, Deadline::ReachAt { t }) => (0.0, *t),
                (SpecKind::PathThenDwell, Deadline::DwellFor { duration }) => {
                    let t1 = compiled.deadlines[0];
                    (t1, t1 + duration)
                }
                _ => return Err(Error::Spec("dwell phase outside a mixed chain".into())),
            };
            phases.push(ChainPhase {
                exit_set: compiled.exit_sets[i].clone(),
                payoff: compiled.payoffs[i].clone(),
                seg_start,
                seg_end,
            });
        }

        let n_nodes = grid.node_count();
        let mut masks = Vec::with_capacity(phases.len());
        let mut payoff_values = Vec::with_capacity(phases.len());
        let mut x = vec![0.0; grid.dim()];
        for phase in &phases {
            let mut mask = vec![false; n_nodes];
            let mut pv = vec![0.0; n_nodes];
            for i in 0..n_nodes {
                grid.coords_into(i, &mut x);
                mask[i] = phase.exit_set.contains(&x);
                pv[i] = phase.payoff.eval(&x);
            }
            masks.push(mask);
            payoff_values.push(pv);
        }

        let cfl_bound = cfl_time_step(&model, &grid, opts.control_lattice, opts.cfl_safety)?;
        let dt = match opts.dt {
            Some(requested) => {
                if requested > cfl_bound {
                    return Err(Error::CflViolation {
                        dt: requested,
                        bound: cfl_bound,
                        phase: 0,
                    });
                }
                requested
            }
            None => cfl_bound,
        };

        Ok(ChainProblem {
            model,
            grid,
            spec: spec.clone(),
            phases,
            masks,
            payoff_values,
            dt,
            cfl_bound,
            store_every: opts.store_every.max(1),
            control_lattice: opts.control_lattice.max(2),
        })
    }
}

/// Largest time step keeping the explicit update monotone:
/// `C / sum_j (max|f_j|/h_j + max a_jj/h_j^2)`, extrema taken over grid
/// nodes and the control box (corners when affine, a lattice otherwise).
pub fn cfl_time_step(
    model: &SdeModel,
    grid: &Grid,
    control_lattice: usize,
    safety: f64,
) -> Result<f64> {
    let d = model.state_dim;
    let controls = control_probe_points(model, if model.control_affine {
        2
    } else {
        control_lattice
    });
    let h = grid.spacing();

    let denom_max = (0..grid.node_count())
        .into_par_iter()
        .map_init(
            || Scratch::new(model),
            |scr, i| -> Result<f64> {
                grid.coords_into(i, &mut scr.x);
                let mut worst: f64 = 0.0;
                for u in &controls {
                    model.drift_into(&scr.x, u, &mut scr.drift)?;
                    model.diffusion_into(&scr.x, u, &mut scr.diff)?;
                    let mut denom = 0.0;
                    for j in 0..d {
                        let mut ajj = 0.0;
                        for k in 0..model.noise_dim {
                            let s = scr.diff[j * model.noise_dim + k];
                            ajj += s * s;
                        }
                        denom += scr.drift[j].abs() / h[j] + ajj / (h[j] * h[j]);
                    }
                    worst = worst.max(denom);
                }
                Ok(worst)
            },
        )
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;

    if denom_max <= 0.0 {
        // zero dynamics: any step is stable; pick something finite
        return Ok(1.0);
    }
    Ok(safety / denom_max)
}

fn control_probe_points(model: &SdeModel, per_axis: usize) -> Vec<Vec<f64>> {
    let du = model.control_dim;
    if du == 0 {
        return vec![vec![]];
    }
    // singleton axes contribute one point, not a degenerate lattice
    let counts: Vec<usize> = model
        .control_box
        .iter()
        .map(|(lo, hi)| if lo == hi { 1 } else { per_axis.max(2) })
        .collect();
    let mut out = Vec::new();
    let mut counter = vec![0usize; du];
    loop {
        let u: Vec<f64> = counter
            .iter()
            .zip(&model.control_box)
            .zip(&counts)
            .map(|((&c, (lo, hi)), &m)| {
                if m == 1 {
                    *lo
                } else {
                    lo + (hi - lo) * c as f64 / (m - 1) as f64
                }
            })
            .collect();
        out.push(u);
        let mut j = 0;
        loop {
            counter[j] += 1;
            if counter[j] < counts[j] {
                break;
            }
            counter[j] = 0;
            j += 1;
            if j == du {
                return out;
            }
        }
    }
}

pub(crate) struct Scratch {
    x: Vec<f64>,
    drift: Vec<f64>,
    diff: Vec<f64>,
    sigma_sq: Vec<f64>,
    u_best: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(model: &SdeModel) -> Self {
        Scratch {
            x: vec![0.0; model.state_dim],
            drift: vec![0.0; model.state_dim],
            diff: vec![0.0; model.state_dim * model.noise_dim],
            sigma_sq: vec![0.0; model.state_dim * model.state_dim],
            u_best: vec![0.0; model.control_dim],
        }
    }
}

/// Spatial part of the Dynkin generator at a node for a fixed control:
/// `f . D_x V + 0.5 Tr[sigma sigma^T D_x^2 V]` with upwinded first
/// differences and central second differences. `outflow` substitutes the
/// center value for missing neighbors at the grid edge.
fn generator_at(
    grid: &Grid,
    values: &[f64],
    node: usize,
    drift: &[f64],
    sigma_sq: &[f64],
    outflow: bool,
) -> Result<f64> {
    let d = grid.dim();
    let h = grid.spacing();
    let c = values[node];
    let read = |idx: Option<usize>| -> Result<f64> {
        match idx {
            Some(i) => Ok(values[i]),
            None => {
                if outflow {
                    Ok(c)
                } else {
                    Err(Error::StencilBoundary { node })
                }
            }
        }
    };

    let mut acc = 0.0;
    for j in 0..d {
        let vp = read(grid.neighbor(node, j, 1))?;
        let vm = read(grid.neighbor(node, j, -1))?;
        let f_j = drift[j];
        let first = if f_j >= 0.0 {
            (vp - c) / h[j]
        } else {
            (c - vm) / h[j]
        };
        let second = (vp - 2.0 * c + vm) / (h[j] * h[j]);
        acc += f_j * first + 0.5 * sigma_sq[j * d + j] * second;
    }
    // cross-diffusion: 4-point central stencils (experimental; the bundled
    // models have diagonal sigma sigma^T)
    for j in 0..d {
        for k in (j + 1)..d {
            let a_jk = sigma_sq[j * d + k];
            if a_jk == 0.0 {
                continue;
            }
            let read_diag = |dj: isize, dk: isize| -> Result<f64> {
                let step1 = grid.neighbor(node, j, dj);
                let idx = step1.and_then(|n1| grid.neighbor(n1, k, dk));
                read(idx)
            };
            let cross = (read_diag(1, 1)? - read_diag(1, -1)? - read_diag(-1, 1)?
                + read_diag(-1, -1)?)
                / (4.0 * h[j] * h[k]);
            acc += a_jk * cross;
        }
    }
    Ok(acc)
}

fn sigma_sq_into(model: &SdeModel, diff: &[f64], out: &mut [f64]) {
    let d = model.state_dim;
    let dz = model.noise_dim;
    for j in 0..d {
        for k in j..d {
            let mut s = 0.0;
            for m in 0..dz {
                s += diff[j * dz + m] * diff[k * dz + m];
            }
            out[j * d + k] = s;
            out[k * d + j] = s;
        }
    }
}

/// Spatial Dynkin generator at an interior node for an explicit control.
pub fn dynkin_apply(
    model: &SdeModel,
    field: &ValueField,
    node: usize,
    u: &[f64],
) -> Result<f64> {
    if field.grid.on_edge(node) {
        return Err(Error::StencilBoundary { node });
    }
    let mut scr = Scratch::new(model);
    field.grid.coords_into(node, &mut scr.x);
    model.drift_into(&scr.x, u, &mut scr.drift)?;
    model.diffusion_into(&scr.x, u, &mut scr.diff)?;
    sigma_sq_into(model, &scr.diff, &mut scr.sigma_sq);
    generator_at(&field.grid, &field.values, node, &scr.drift, &scr.sigma_sq, false)
}

fn hamiltonian_at(
    model: &SdeModel,
    grid: &Grid,
    values: &[f64],
    node: usize,
    lattice: usize,
    outflow: bool,
    scr: &mut Scratch,
) -> Result<(f64, Vec<f64>)> {
    grid.coords_into(node, &mut scr.x);
    let eval = |u: &[f64], scr: &mut Scratch| -> Result<f64> {
        model.drift_into(&scr.x, u, &mut scr.drift)?;
        model.diffusion_into(&scr.x, u, &mut scr.diff)?;
        sigma_sq_into(model, &scr.diff, &mut scr.sigma_sq);
        generator_at(grid, values, node, &scr.drift, &scr.sigma_sq, outflow)
    };

    if model.control_dim == 0 {
        let v = eval(&[], scr)?;
        return Ok((v, vec![]));
    }

    if model.control_affine {
        // one generator evaluation per control coordinate recovers the
        // switching function exactly for control-affine dynamics
        let mut probe: Vec<f64> = model.control_box.iter().map(|(lo, _)| *lo).collect();
        let base = eval(&probe, scr)?;
        for j in 0..model.control_dim {
            let (lo, hi) = model.control_box[j];
            if hi == lo {
                scr.u_best[j] = hi;
                continue;
            }
            probe[j] = hi;
            let with_hi = eval(&probe, scr)?;
            probe[j] = lo;
            // ties take the upper endpoint
            scr.u_best[j] = if with_hi - base >= 0.0 { hi } else { lo };
        }
        let best = scr.u_best.clone();
        let v = eval(&best, scr)?;
        Ok((v, best))
    } else {
        let points = control_probe_points(model, lattice);
        let mut best_v = f64::NEG_INFINITY;
        let mut best_u = points[0].clone();
        // scan from the top of the box so ties keep the upper corner
        for u in points.iter().rev() {
            let v = eval(u, scr)?;
            if v > best_v {
                best_v = v;
                best_u = u.clone();
            }
        }
        Ok((best_v, best_u))
    }
}

/// Maximized generator and its argmax control at an interior node.
pub fn hamiltonian_max(
    model: &SdeModel,
    field: &ValueField,
    node: usize,
    lattice: usize,
) -> Result<(f64, Vec<f64>)> {
    if field.grid.on_edge(node) {
        return Err(Error::StencilBoundary { node });
    }
    let mut scr = Scratch::new(model);
    hamiltonian_at(model, &field.grid, &field.values, node, lattice, false, &mut scr)
}

/// Maximized generator with outflow treatment at the grid edge; used by the
/// stepper and by policy extraction.
pub(crate) fn hamiltonian_max_outflow(
    model: &SdeModel,
    grid: &Grid,
    values: &[f64],
    node: usize,
    lattice: usize,
    scr: &mut Scratch,
) -> Result<(f64, Vec<f64>)> {
    hamiltonian_at(model, grid, values, node, lattice, true, scr)
}

/// One explicit backward step of phase `k`: interior nodes of `A_k` move by
/// `V + dt sup_u L^u V`, every other node is pinned to the supplied Dirichlet
/// data, and the result is clipped to `[0, 1]`.
pub fn step_backward(
    problem: &ChainProblem,
    k: usize,
    field: &ValueField,
    dt: f64,
    data_at_new_t: &[f64],
) -> Result<ValueField> {
    if dt > problem.cfl_bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation {
            dt,
            bound: problem.cfl_bound,
            phase: k,
        });
    }
    let grid = &problem.grid;
    let mask = &problem.masks[k];
    let values = &field.values;
    let model = &problem.model;
    let lattice = problem.control_lattice;

    let update = |scr: &mut Scratch, i: usize| -> Result<f64> {
        if !mask[i] {
            return Ok(data_at_new_t[i]);
        }
        let (h, _) = hamiltonian_max_outflow(model, grid, values, i, lattice, scr)?;
        Ok((values[i] + dt * h).clamp(0.0, 1.0))
    };

    // parallel dispatch costs more than it buys on small grids
    let new_values: Vec<f64> = if grid.node_count() < 4096 {
        let mut scr = Scratch::new(model);
        (0..grid.node_count())
            .map(|i| update(&mut scr, i))
            .collect::<Result<Vec<f64>>>()?
    } else {
        (0..grid.node_count())
            .into_par_iter()
            .map_init(|| Scratch::new(model), |scr, i| update(scr, i))
            .collect::<Result<Vec<f64>>>()?
    };

    Ok(ValueField {
        grid: grid.clone(),
        t: field.t - dt,
        values: new_values,
    })
}

/// Stored slices of one phase, ascending in time.
#[derive(Debug, Clone)]
pub struct PhaseSolution {
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
}

impl PhaseSolution {
    /// Index of the stored slice the solver associates with time `t`: the
    /// earliest stored time at or above `t` (clamped to the segment).
    pub fn slice_index_at(&self, t: f64) -> usize {
        match self
            .times
            .iter()
            .position(|&s| s >= t - 1e-9)
        {
            Some(i) => i,
            None => self.times.len() - 1,
        }
    }

    pub fn slice_at(&self, t: f64) -> &[f64] {
        &self.slices[self.slice_index_at(t)]
    }
}

/// Value-function stack for the whole chain.
pub struct ChainSolution {
    pub phases: Vec<PhaseSolution>,
}

impl ChainSolution {
    /// The first phase's field at its segment start (the motion-planning
    /// answer `V_1(0, .)` for chains starting at time zero).
    pub fn initial_field(&self, problem: &ChainProblem) -> ValueField {
        let ph = &self.phases[0];
        ValueField {
            grid: problem.grid.clone(),
            t: ph.times[0],
            values: ph.slices[0].clone(),
        }
    }

    /// Dirichlet data of phase `k` at time `t`: successor value times the
    /// phase payoff, with `V_{n+1} = 1`. The successor slice is looked up
    /// exactly the way the solver looked it up while stepping.
    pub fn dirichlet_data(&self, problem: &ChainProblem, k: usize, t: f64) -> Vec<f64> {
        let payoff = &problem.payoff_values[k];
        match self.phases.get(k + 1) {
            None => payoff.clone(),
            Some(succ) => {
                let ph = &problem.phases[k + 1];
                let clamped = t.clamp(ph.seg_start, ph.seg_end);
                let slice = succ.slice_at(clamped);
                slice.iter().zip(payoff).map(|(v, l)| v * l).collect()
            }
        }
    }
}

/// Solves the phases last-to-first, each sweep consuming its successor's
/// stored stack for terminal and spatial Dirichlet data.
pub fn solve_chain(problem: &ChainProblem) -> Result<ChainSolution> {
    let n = problem.phases.len();
    let mut solution = ChainSolution { phases: Vec::new() };
    // placeholder slots so dirichlet_data can index successor phases
    for _ in 0..n {
        solution.phases.push(PhaseSolution {
            times: vec![],
            slices: vec![],
        });
    }

    for k in (0..n).rev() {
        let seg_start = problem.phases[k].seg_start;
        let seg_end = problem.phases[k].seg_end;
        let seg_len = seg_end - seg_start;
        let n_steps = if seg_len <= 0.0 {
            0
        } else {
            (seg_len / problem.dt - 1e-12).ceil().max(1.0) as usize
        };
        let dt = if n_steps == 0 { 0.0 } else { seg_len / n_steps as f64 };

        let mut times_desc = Vec::new();
        let mut slices_desc = Vec::new();

        let terminal_values = solution.dirichlet_data(problem, k, seg_end);
        let mut field = ValueField {
            grid: problem.grid.clone(),
            t: seg_end,
            values: terminal_values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        };
        times_desc.push(field.t);
        slices_desc.push(field.values.clone());

        for step in 1..=n_steps {
            let new_t = seg_end - step as f64 * dt;
            let data = solution.dirichlet_data(problem, k, new_t);
            field = step_backward(problem, k, &field, dt, &data)?;
            field.t = new_t;
            if step % problem.store_every == 0 || step == n_steps {
                times_desc.push(new_t);
                slices_desc.push(field.values.clone());
            }
        }

        times_desc.reverse();
        slices_desc.reverse();
        solution.phases[k] = PhaseSolution {
            times: times_desc,
            slices: slices_desc,
        };
    }

    Ok(solution)
}

/// Failure report of the boundary-exactness audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryAuditFailure {
    pub phase: usize,
    pub time: f64,
    pub node: usize,
    pub stored: f64,
    pub expected: f64,
}

/// Recomputes `V_{k+1} * l_k` on every stored slice and demands bitwise
/// equality on all `A_k^c` nodes (the Dirichlet condition is enforced, not
/// approximated).
pub fn audit_boundary_exactness(
    problem: &ChainProblem,
    solution: &ChainSolution,
) -> std::result::Result<(), BoundaryAuditFailure> {
    for k in 0..problem.phases.len() {
        let mask = &problem.masks[k];
        let ph = &solution.phases[k];
        for (t, slice) in ph.times.iter().zip(&ph.slices) {
            let expected = solution.dirichlet_data(problem, k, *t);
            for i in 0..mask.len() {
                if !mask[i] {
                    let want = expected[i].clamp(0.0, 1.0);
                    if slice[i].to_bits() != want.to_bits() {
                        return Err(BoundaryAuditFailure {
                            phase: k,
                            time: *t,
                            node: i,
                            stored: slice[i],
                            expected: want,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Strict superlevel set `{V > p}` as a node mask plus a nearest-node region.
pub fn superlevel_set(field: &ValueField, p: f64) -> (Vec<bool>, RegionSet) {
    assert!((0.0..=1.0).contains(&p));
    let mask: Vec<bool> = field.values.iter().map(|&v| v > p).collect();
    let region = RegionSet::GridMask {
        lo: field.grid.lo.clone(),
        hi: field.grid.hi.clone(),
        nodes: field.grid.nodes.clone(),
        mask: mask.clone(),
    };
    (mask, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Phase;
    use crate::sde::SdeModel;

    fn uncontrolled_1d(sigma: f64) -> Arc<SdeModel> {
        Arc::new(SdeModel::new(
            "diffusion-1d",
            1,
            1,
            vec![(0.0, 0.0)],
            |_x, _u, out| out[0] = 0.0,
            move |_x, _u, out| out[0] = sigma,
        ))
    }

    fn constant_drift_2d(f: [f64; 2]) -> Arc<SdeModel> {
        Arc::new(SdeModel::new(
            "drift-2d",
            2,
            1,
            vec![(0.0, 0.0)],
            move |_x, _u, out| {
                out[0] = f[0];
                out[1] = f[1];
            },
            |_x, _u, out| out.iter_mut().for_each(|v| *v = 0.0),
        ))
    }

    fn grid_2d(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![n, n]))
    }

    #[test]
    fn dynkin_vanishes_on_constant_fields() {
        let model = constant_drift_2d([0.7, -0.3]);
        let grid = grid_2d(7);
        let field = ValueField::constant(grid, 0.0, 0.42);
        let node = field.grid.flat_index(&[3, 3]);
        let v = dynkin_apply(&model, &field, node, &[0.0]).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn dynkin_is_exact_on_linear_fields() {
        let model = constant_drift_2d([0.7, -0.3]);
        let grid = grid_2d(9);
        let field = ValueField::from_fn(grid, 0.0, |x| 0.2 * x[0] + 0.5 * x[1]);
        let node = field.grid.flat_index(&[4, 4]);
        let v = dynkin_apply(&model, &field, node, &[0.0]).unwrap();
        let exact = 0.7 * 0.2 + (-0.3) * 0.5;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn dynkin_quadratic_matches_trace() {
        // f = 0, sigma = I: L |x|^2 = Tr(I) = d, and the central second
        // difference is exact on quadratics.
        let model = Arc::new(SdeModel::new(
            "unit-noise",
            2,
            2,
            vec![(0.0, 0.0)],
            |_x, _u, out| out.iter_mut().for_each(|v| *v = 0.0),
            |_x, _u, out| {
                out.fill(0.0);
                out[0] = 1.0;
                out[3] = 1.0;
            },
        ));
        let grid = grid_2d(9);
        let field = ValueField::from_fn(grid, 0.0, |x| x[0] * x[0] + x[1] * x[1]);
        let node = field.grid.flat_index(&[4, 4]);
        let v = dynkin_apply(&model, &field, node, &[0.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn dynkin_refuses_edge_nodes() {
        let model = constant_drift_2d([0.0, 0.0]);
        let grid = grid_2d(5);
        let field = ValueField::constant(grid, 0.0, 0.0);
        let corner = field.grid.flat_index(&[0, 0]);
        assert!(matches!(
            dynkin_apply(&model, &field, corner, &[0.0]),
            Err(Error::StencilBoundary { .. })
        ));
    }

    #[test]
    fn hamiltonian_singleton_box_reduces_to_dynkin() {
        let model = Arc::new(
            SdeModel::new(
                "singleton",
                1,
                1,
                vec![(0.75, 0.75)],
                |_x, u, out| out[0] = u[0],
                |_x, _u, out| out[0] = 0.3,
            )
            .with_control_affine(true),
        );
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![11]));
        let field = ValueField::from_fn(grid, 0.0, |x| (x[0] - 0.3) * (x[0] - 0.3));
        let node = field.grid.flat_index(&[5]);
        let (h, u) = hamiltonian_max(&model, &field, node, 9).unwrap();
        let direct = dynkin_apply(&model, &field, node, &[0.75]).unwrap();
        assert_eq!(u, vec![0.75]);
        assert!((h - direct).abs() < 1e-14);
    }

    #[test]
    fn affine_optimizer_matches_dense_lattice() {
        // squared diffusion affine in u (Langevin-style), drift affine too:
        // the analytic bang-bang optimizer must agree with a 65-point scan
        let model = Arc::new(
            SdeModel::new(
                "affine-drift",
                1,
                1,
                vec![(-1.0, 2.0)],
                |x, u, out| out[0] = 0.4 * u[0] - 0.3 * x[0],
                |x, u, out| out[0] = (0.2 + 0.15 * (u[0] + 1.0) + 0.05 * x[0].abs()).sqrt(),
            )
            .with_control_affine(true),
        );
        let grid = Arc::new(Grid::new(vec![-2.0], vec![2.0], vec![101]));
        let field = ValueField::from_fn(grid.clone(), 0.0, |x| (1.0 + (3.0 * x[0]).sin()) / 2.0);
        let mut scr = Scratch::new(&model);
        let lattice_model = Arc::new(
            SdeModel::new(
                "affine-drift-scan",
                1,
                1,
                vec![(-1.0, 2.0)],
                |x, u, out| out[0] = 0.4 * u[0] - 0.3 * x[0],
                |x, u, out| out[0] = (0.2 + 0.15 * (u[0] + 1.0) + 0.05 * x[0].abs()).sqrt(),
            )
            .with_control_affine(false),
        );
        for node in (1..100).step_by(7) {
            let (va, ua) =
                hamiltonian_at(&model, &grid, &field.values, node, 9, false, &mut scr).unwrap();
            let (vl, ul) =
                hamiltonian_at(&lattice_model, &grid, &field.values, node, 65, false, &mut scr)
                    .unwrap();
            assert!((va - vl).abs() < 1e-10, "value mismatch at node {node}");
            assert!((ua[0] - ul[0]).abs() < 3.0 / 64.0 + 1e-12);
        }
    }

    fn single_phase_problem(
        model: Arc<SdeModel>,
        grid: Arc<Grid>,
        way: RegionSet,
        goal: RegionSet,
        horizon: f64,
    ) -> ChainProblem {
        let spec = MotionSpec {
            phases: vec![Phase {
                way,
                goal,
                deadline: Deadline::PathUntil { t: horizon },
            }],
            horizon,
            eps: 0.0,
        };
        ChainProblem::from_spec(model, &spec, grid, &HjbOptions::default()).unwrap()
    }

    #[test]
    fn constant_fields_are_stationary() {
        let model = uncontrolled_1d(0.8);
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![21]));
        let problem = single_phase_problem(
            model,
            grid.clone(),
            RegionSet::open_box(vec![0.0], vec![1.0]),
            RegionSet::All,
            1.0,
        );
        // payoff 1 everywhere -> data 1; start from the constant 1 field
        let field = ValueField::constant(grid.clone(), 1.0, 1.0);
        let data = vec![1.0; grid.node_count()];
        let stepped = step_backward(&problem, 0, &field, problem.dt, &data).unwrap();
        for v in &stepped.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn one_step_matches_hand_heat_stencil() {
        // f = 0, sigma = sqrt(2): the update is the explicit heat stencil
        // with conductivity 1
        let model = uncontrolled_1d(2.0f64.sqrt());
        let n = 41;
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![n]));
        let problem = single_phase_problem(
            model,
            grid.clone(),
            RegionSet::open_box(vec![0.0], vec![1.0]),
            RegionSet::ball(vec![2.0], 0.1), // irrelevant goal; data is 0 outside
            1.0,
        );
        let h = grid.spacing()[0];
        let bump = |x: &[f64]| (-(x[0] - 0.5) * (x[0] - 0.5) / 0.02).exp() * 0.9;
        let field = ValueField::from_fn(grid.clone(), 1.0, bump);
        let dt = problem.dt;
        let data = vec![0.0; grid.node_count()];
        let stepped = step_backward(&problem, 0, &field, dt, &data).unwrap();
        for i in 1..n - 1 {
            let lap = (field.values[i + 1] - 2.0 * field.values[i] + field.values[i - 1])
                / (h * h);
            let expected = (field.values[i] + dt * lap).clamp(0.0, 1.0);
            assert!(
                (stepped.values[i] - expected).abs() < 1e-15,
                "node {i} deviates from the hand stencil"
            );
        }
        assert_eq!(stepped.values[0], 0.0);
        assert_eq!(stepped.values[n - 1], 0.0);
    }

    #[test]
    fn stepping_preserves_pointwise_order() {
        // comparison-principle surrogate on random field pairs
        let model = uncontrolled_1d(1.0);
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![31]));
        let problem = single_phase_problem(
            model,
            grid.clone(),
            RegionSet::open_box(vec![0.0], vec![1.0]),
            RegionSet::half_space(vec![-1.0], -1.0),
            1.0,
        );
        let mut s = 1234567u64;
        let mut rnd = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let lo_vals: Vec<f64> = (0..31).map(|_| rnd() * 0.5).collect();
            let hi_vals: Vec<f64> = lo_vals.iter().map(|v| v + rnd() * 0.4).collect();
            let data: Vec<f64> = (0..31).map(|_| rnd()).collect();
            let f_lo = ValueField {
                grid: grid.clone(),
                t: 1.0,
                values: lo_vals,
            };
            let f_hi = ValueField {
                grid: grid.clone(),
                t: 1.0,
                values: hi_vals,
            };
            let s_lo = step_backward(&problem, 0, &f_lo, problem.dt, &data).unwrap();
            let s_hi = step_backward(&problem, 0, &f_hi, problem.dt, &data).unwrap();
            for (a, b) in s_lo.values.iter().zip(&s_hi.values) {
                assert!(a <= &(b + 1e-12));
            }
        }
    }

    #[test]
    fn cfl_violation_is_refused_with_bound() {
        let model = uncontrolled_1d(1.0);
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![11]));
        let opts = HjbOptions {
            dt: Some(10.0),
            ..Default::default()
        };
        let spec = MotionSpec::single_path(
            RegionSet::open_box(vec![0.0], vec![1.0]),
            RegionSet::half_space(vec![-1.0], -1.0),
            1.0,
        );
        match ChainProblem::from_spec(model, &spec, grid, &opts) {
            Err(Error::CflViolation { bound, .. }) => assert!(bound < 10.0),
            Err(other) => panic!("expected CFL refusal, got {other:?}"),
            Ok(_) => panic!("expected CFL refusal, got a problem"),
        }
    }

    #[test]
    fn certain_success_solves_to_one() {
        // payoff 1 on the whole exit set and no way to leave the box
        // interior within a box-shaped A: V stays 1
        let model = uncontrolled_1d(0.5);
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![21]));
        let spec = MotionSpec::single_path(RegionSet::All, RegionSet::All, 0.5);
        let problem =
            ChainProblem::from_spec(model, &spec, grid, &HjbOptions::default()).unwrap();
        // A = All \ All = empty, every node is boundary with data = 1.
        let solution = solve_chain(&problem).unwrap();
        let v0 = solution.initial_field(&problem);
        for v in &v0.values {
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn superlevel_sets_nest() {
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![11]));
        let field = ValueField::from_fn(grid, 0.0, |x| x[0]);
        let (m1, _) = superlevel_set(&field, 0.3);
        let (m2, _) = superlevel_set(&field, 0.6);
        for (a, b) in m1.iter().zip(&m2) {
            assert!(!b || *a, "higher level must be a subset");
        }
        let (all, _) = superlevel_set(&field, 0.0);
        assert_eq!(all.iter().filter(|&&x| x).count(), 10); // node at 0 excluded (strict)
        let (none, _) = superlevel_set(&field, 1.0);
        assert!(none.iter().all(|&x| !x));
    }

    #[test]
    fn boundary_audit_passes_on_solved_chain() {
        let model = uncontrolled_1d(1.0);
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![21]));
        let spec = MotionSpec::single_path(
            RegionSet::open_box(vec![0.0], vec![1.0]),
            RegionSet::half_space(vec![-1.0], -1.0),
            0.05,
        );
        let problem =
            ChainProblem::from_spec(model, &spec, grid, &HjbOptions::default()).unwrap();
        let solution = solve_chain(&problem).unwrap();
        audit_boundary_exactness(&problem, &solution).unwrap();
    }
}
