//! Monte Carlo estimation of motion-planning success probabilities.
//!
//! Each path gets its own ChaCha stream derived from `(seed, path index)`,
//! so estimates are reproducible and independent of the number of worker
//! threads; scores are collected per path and reduced in index order.
//!
//! The estimator advances phases while it simulates and stops as soon as a
//! path's score is decided, which matters for exit problems whose paths
//! resolve long before the horizon. Equivalence with the offline scorer
//! (full trajectory, then [`motion::score_trajectory`]) is pinned by tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Grid, ValueField};
use crate::motion::{CompiledSpec, MotionSpec, Scoring, SpecKind};
use crate::sde::{Policy, SdeModel};

/// A success-probability estimate with a 95% normal-approximation interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub p_hat: f64,
    pub n_paths: usize,
    pub ci_halfwidth: f64,
    pub seed: u64,
    pub dt: f64,
}

impl ProbEstimate {
    fn from_scores(scores: &[f64], seed: u64, dt: f64) -> Self {
        let n = scores.len();
        let p_hat = scores.iter().sum::<f64>() / n as f64;
        ProbEstimate {
            p_hat,
            n_paths: n,
            ci_halfwidth: 1.96 * (p_hat * (1.0 - p_hat) / n as f64).max(0.0).sqrt(),
            seed,
            dt,
        }
    }
}

/// Where a streamed path ended up.
pub(crate) struct PathOutcome {
    /// Final score, or the partial product up to the stop when stopped.
    pub score: f64,
    /// Stop capture: `(time, state, phase bracket, partial product)`.
    pub stopped: Option<(f64, Vec<f64>, usize, f64)>,
}

/// Stopping rule for the DPP residual check.
#[derive(Debug, Clone, Copy)]
pub enum ThetaRule {
    /// Stop at a fixed absolute time (clipped to the horizon).
    FixedTime(f64),
    /// Stop when the state first leaves the ball of this radius around the
    /// start state.
    FirstExitBall { radius: f64 },
}

/// Simulates one path and scores it on the fly.
///
/// `start_phase`/`start_score` allow continuations from a stopping time, as
/// the nested DPP estimator needs. Deadlines resolve at the first step time
/// within half a step of the deadline, matching the offline rounding.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_scored_path(
    model: &SdeModel,
    policy: &dyn Policy,
    compiled: &CompiledSpec,
    start_phase: usize,
    start_score: f64,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
    stop_rule: Option<(&ThetaRule, &[f64])>,
) -> Result<PathOutcome> {
    let n_phases = compiled.exit_sets.len();
    let n_steps = ((t_end - t0) / dt).round().max(0.0) as usize;
    let d = model.state_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut x = x0.to_vec();
    let mut u = vec![0.0; model.control_dim];
    let mut drift = vec![0.0; d];
    let mut diff = vec![0.0; d * model.noise_dim];
    let mut dw = vec![0.0; model.noise_dim];
    let mut score = start_score;

    // `a` chains raw exits, `b` resolves payoffs; both index phases from
    // `start_phase`.
    let mut a = start_phase;
    let mut b = start_phase;
    let mut phase_entry_t = t0;
    let mut dwell_deadline = f64::INFINITY;

    let half = 0.5 * dt;
    for step in 0..=n_steps {
        let t = t0 + step as f64 * dt;

        while a < n_phases && !compiled.exit_sets[a].contains(&x) {
            a += 1;
        }
        while b < n_phases {
            let deadline = match compiled.kind {
                SpecKind::PathThenDwell if b == 1 => dwell_deadline,
                _ => compiled.deadlines[b],
            };
            let exited = a > b; // theta_b resolved at or before this step
            let deadline_hit = t >= deadline - half || step == n_steps;
            if !(exited || deadline_hit) {
                break;
            }
            score *= compiled.payoffs[b].eval(&x);
            if compiled.kind == SpecKind::PathThenDwell && b == 0 && score > 0.0 {
                dwell_deadline = t + compiled.deadlines[1];
            }
            b += 1;
            phase_entry_t = t;
            if score == 0.0 {
                return Ok(PathOutcome {
                    score: 0.0,
                    stopped: None,
                });
            }
        }

        if let Some((rule, center)) = stop_rule {
            let fired = match rule {
                ThetaRule::FixedTime(tf) => t >= tf - half || step == n_steps,
                ThetaRule::FirstExitBall { radius } => {
                    let dist: f64 = x
                        .iter()
                        .zip(center)
                        .map(|(xi, ci)| (xi - ci) * (xi - ci))
                        .sum::<f64>()
                        .sqrt();
                    dist > *radius || step == n_steps
                }
            };
            if fired {
                return Ok(PathOutcome {
                    score,
                    stopped: Some((t, x.clone(), b, score)),
                });
            }
        }

        if b == n_phases {
            return Ok(PathOutcome {
                score,
                stopped: None,
            });
        }
        if step == n_steps {
            break;
        }

        let ctx = crate::sde::PolicyCtx {
            phase: b,
            t,
            phase_entry_t,
        };
        policy.control_into(&ctx, &x, &mut u);
        model.clamp_control(&mut u);
        model.drift_into(&x, &u, &mut drift)?;
        model.diffusion_into(&x, &u, &mut diff)?;
        let sqrt_dt = dt.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sqrt_dt;
        }
        for i in 0..d {
            let mut noise = 0.0;
            for k in 0..model.noise_dim {
                noise += diff[i * model.noise_dim + k] * dw[k];
            }
            x[i] += drift[i] * dt + noise;
        }
        if let Some(floor) = &model.state_floor {
            for (xi, f) in x.iter_mut().zip(floor) {
                if *xi < *f {
                    *xi = *f;
                }
            }
        }
    }

    Ok(PathOutcome {
        score,
        stopped: None,
    })
}

/// Estimates the success probability of `spec` from `(t0, x0)` under a fixed
/// policy: the sample mean of the per-path score.
#[allow(clippy::too_many_arguments)]
pub fn estimate_success(
    model: &SdeModel,
    policy: &dyn Policy,
    spec: &MotionSpec,
    scoring: Scoring,
    t0: f64,
    x0: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<ProbEstimate> {
    assert!(n_paths >= 1);
    let compiled = CompiledSpec::new(spec, scoring)?;
    let t_end = t0.max(spec.time_span());
    let scores = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            run_scored_path(
                model, policy, &compiled, 0, 1.0, t0, x0, t_end, dt, seed, path as u64, None,
            )
            .map(|o| o.score)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProbEstimate::from_scores(&scores, seed, dt))
}

/// Per-node estimates on a list of grid nodes, with per-node substreams.
#[allow(clippy::too_many_arguments)]
pub fn estimate_at_nodes(
    model: &SdeModel,
    policy: &dyn Policy,
    spec: &MotionSpec,
    scoring: Scoring,
    t: f64,
    grid: &Grid,
    node_indices: &[usize],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<ProbEstimate>> {
    let compiled = CompiledSpec::new(spec, scoring)?;
    let t_end = t.max(spec.time_span());
    node_indices
        .par_iter()
        .map(|&node| {
            let x0 = grid.coords(node);
            let mut scores = Vec::with_capacity(n_paths);
            for path in 0..n_paths {
                let stream = ((node as u64) << 40) | path as u64;
                let outcome = run_scored_path(
                    model, policy, &compiled, 0, 1.0, t, &x0, t_end, dt, seed, stream, None,
                )?;
                scores.push(outcome.score);
            }
            Ok(ProbEstimate::from_scores(&scores, seed, dt))
        })
        .collect()
}

/// Full-grid Monte Carlo value field at one time slice.
#[allow(clippy::too_many_arguments)]
pub fn estimate_field(
    model: &SdeModel,
    policy: &dyn Policy,
    spec: &MotionSpec,
    scoring: Scoring,
    t: f64,
    grid: std::sync::Arc<Grid>,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<(ValueField, Vec<ProbEstimate>)> {
    let all: Vec<usize> = (0..grid.node_count()).collect();
    let estimates = estimate_at_nodes(model, policy, spec, scoring, t, &grid, &all, n_paths, dt, seed)?;
    let values = estimates.iter().map(|e| e.p_hat).collect();
    Ok((
        ValueField {
            grid,
            t,
            values,
        },
        estimates,
    ))
}

/// Budget split for the nested DPP estimator.
#[derive(Debug, Clone, Copy)]
pub struct DppBudget {
    pub outer: usize,
    pub inner: usize,
}

impl Default for DppBudget {
    fn default() -> Self {
        DppBudget {
            outer: 1000,
            inner: 100,
        }
    }
}

/// Outcome of the fixed-policy tower-property check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DppResidual {
    /// Nested estimate minus direct estimate; compatible with zero for
    /// Markov policies.
    pub residual: f64,
    /// Standard error of the residual.
    pub sigma: f64,
    pub nested: f64,
    pub direct: f64,
    pub outer: usize,
    pub inner: usize,
}

/// Fixed-policy DPP consistency residual by nested Monte Carlo.
///
/// Outer paths run to the stopping time; from the stopped state the suffix
/// value is re-estimated with fresh inner paths, weighted by the payoffs
/// already collected. With a fixed Markov policy the tower property makes
/// this an unbiased re-estimate of the direct value, so the residual is
/// statistically indistinguishable from zero. A stopping rule that fires
/// immediately reuses the direct streams and returns exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn dpp_residual(
    model: &SdeModel,
    policy: &dyn Policy,
    spec: &MotionSpec,
    scoring: Scoring,
    theta_rule: ThetaRule,
    t0: f64,
    x0: &[f64],
    budget: DppBudget,
    dt: f64,
    seed: u64,
) -> Result<DppResidual> {
    let compiled = CompiledSpec::new(spec, scoring)?;
    let t_end = t0.max(spec.time_span());
    let n_direct = budget.outer * budget.inner;

    let direct_scores = (0..n_direct)
        .into_par_iter()
        .map(|i| {
            run_scored_path(
                model, policy, &compiled, 0, 1.0, t0, x0, t_end, dt, seed, i as u64, None,
            )
            .map(|o| o.score)
        })
        .collect::<Result<Vec<f64>>>()?;

    const PREFIX_STREAM_BASE: u64 = 1 << 62;
    let nested_contribs = (0..budget.outer)
        .into_par_iter()
        .map(|o| {
            let prefix = run_scored_path(
                model,
                policy,
                &compiled,
                0,
                1.0,
                t0,
                x0,
                t_end,
                dt,
                seed,
                PREFIX_STREAM_BASE + o as u64,
                Some((&theta_rule, x0)),
            )?;
            let (theta_t, x_theta, bracket, partial) = match prefix.stopped {
                Some(s) => s,
                // score resolved to zero before the stop fired
                None => return Ok(0.0),
            };
            if bracket >= compiled.exit_sets.len() {
                // all payoffs collected before theta; successor value is 1
                return Ok(partial);
            }
            let mut inner_sum = 0.0;
            for i in 0..budget.inner {
                let stream = (o * budget.inner + i) as u64;
                let cont = run_scored_path(
                    model,
                    policy,
                    &compiled,
                    bracket,
                    1.0,
                    theta_t,
                    &x_theta,
                    t_end,
                    dt,
                    seed,
                    stream,
                    None,
                )?;
                inner_sum += cont.score;
            }
            Ok(partial * inner_sum / budget.inner as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len().max(2) - 1) as f64
    };
    let direct = mean(&direct_scores);
    let nested = mean(&nested_contribs);
    let sigma = (var(&nested_contribs, nested) / budget.outer as f64
        + var(&direct_scores, direct) / n_direct as f64)
        .sqrt();
    Ok(DppResidual {
        residual: nested - direct,
        sigma,
        nested,
        direct,
        outer: budget.outer,
        inner: budget.inner,
    })
}
