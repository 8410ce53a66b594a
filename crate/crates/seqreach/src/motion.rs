//! Motion-planning specifications, sequential exit-times and event scoring.
//!
//! A specification is an ordered list of phases, each a `(way, goal)` pair
//! with a timing rule. Success of a discrete trajectory is decided through
//! the sequential exit-time tracker: the first step at or after the previous
//! phase's exit at which the state leaves the phase's exit set. Scoring uses
//! the product form `prod_i l_i(X at tau_i)` with `tau_i` the clipped exit
//! times, which is equivalent to the literal visit-in-order definition; the
//! acceptance suite checks that equivalence path-by-path against naive
//! witness-scan oracles.
//!
//! Exit detection happens at discrete steps only: the first step whose state
//! is outside the set. The bias this introduces is bounded empirically by
//! halving `dt` in the acceptance tests, not corrected here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MollifiedPayoff, RegionSet};
use crate::sde::TrajectorySample;

/// Timing rule of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deadline {
    /// Visit the goal some time before `t` (absolute), confined to
    /// `way \ goal` on the way.
    PathUntil { t: f64 },
    /// Be in the goal exactly at `t` (absolute), confined to `way` before.
    ReachAt { t: f64 },
    /// Stay in `way` (= goal) for `duration` time units measured from the
    /// moment the previous phase succeeded.
    DwellFor { duration: f64 },
}

/// One excursion phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub way: RegionSet,
    pub goal: RegionSet,
    pub deadline: Deadline,
}

/// Ordered motion-planning specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub phases: Vec<Phase>,
    /// Global horizon; all absolute deadlines must stay within it.
    pub horizon: f64,
    /// Mollification width used by the PDE chain; 0 selects the sharp
    /// indicator payoffs.
    #[serde(default)]
    pub eps: f64,
}

/// Shape of a specification, decided at validation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    AllPath,
    AllReach,
    PathThenDwell,
}

impl MotionSpec {
    /// Single-phase path spec: hit `goal` before `horizon` while staying in
    /// `way`.
    pub fn single_path(way: RegionSet, goal: RegionSet, horizon: f64) -> Self {
        MotionSpec {
            phases: vec![Phase {
                way,
                goal,
                deadline: Deadline::PathUntil { t: horizon },
            }],
            horizon,
            eps: 0.0,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Validates phase patterns, dimensions and deadline ordering.
    pub fn kind(&self) -> Result<SpecKind> {
        if self.phases.is_empty() {
            return Err(Error::Spec("specification needs at least one phase".into()));
        }
        let all_path = self
            .phases
            .iter()
            .all(|p| matches!(p.deadline, Deadline::PathUntil { .. }));
        let all_reach = self
            .phases
            .iter()
            .all(|p| matches!(p.deadline, Deadline::ReachAt { .. }));
        if all_path {
            return Ok(SpecKind::AllPath);
        }
        if all_reach {
            let mut prev = 0.0;
            for p in &self.phases {
                if let Deadline::ReachAt { t } = p.deadline {
                    if t < prev || t > self.horizon {
                        return Err(Error::Spec(format!(
                            "reach deadlines must be nondecreasing within the horizon, got {t}"
                        )));
                    }
                    prev = t;
                }
            }
            return Ok(SpecKind::AllReach);
        }
        if self.phases.len() == 2
            && matches!(self.phases[0].deadline, Deadline::PathUntil { .. })
            && matches!(self.phases[1].deadline, Deadline::DwellFor { .. })
        {
            return Ok(SpecKind::PathThenDwell);
        }
        Err(Error::Spec(
            "supported phase patterns: all path, all reach, or one path phase followed by one dwell phase"
                .into(),
        ))
    }

    /// Latest absolute time any trajectory must cover to be scorable.
    pub fn time_span(&self) -> f64 {
        match self.kind() {
            Ok(SpecKind::PathThenDwell) => {
                let t1 = match self.phases[0].deadline {
                    Deadline::PathUntil { t } => t,
                    _ => unreachable!(),
                };
                let d = match self.phases[1].deadline {
                    Deadline::DwellFor { duration } => duration,
                    _ => unreachable!(),
                };
                t1 + d
            }
            _ => self.horizon,
        }
    }
}

/// How trajectories are scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scoring {
    /// Indicator payoffs of the literal goal sets; scores are 0 or 1.
    Sharp,
    /// Eroded goals with a Lipschitz ramp of the given width; scores lie in
    /// `[0, 1]` and never exceed the sharp score of the same goal.
    Mollified(f64),
}

/// Payoff evaluated at a clipped exit time.
#[derive(Debug, Clone)]
pub enum PhasePayoff {
    Indicator(RegionSet),
    Ramp(MollifiedPayoff),
}

impl PhasePayoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PhasePayoff::Indicator(set) => {
                if set.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            PhasePayoff::Ramp(ramp) => ramp.eval(x),
        }
    }
}

/// Specification lowered to exit sets and payoff evaluators, ready for the
/// tracker. Built once, shared across paths.
#[derive(Debug, Clone)]
pub struct CompiledSpec {
    pub kind: SpecKind,
    pub exit_sets: Vec<RegionSet>,
    pub payoffs: Vec<PhasePayoff>,
    /// Absolute deadline per phase; the dwell phase stores the duration and
    /// resolves its window at score time.
    pub deadlines: Vec<f64>,
    pub horizon: f64,
}

impl CompiledSpec {
    pub fn new(spec: &MotionSpec, scoring: Scoring) -> Result<Self> {
        let kind = spec.kind()?;
        let mut exit_sets = Vec::new();
        let mut payoffs = Vec::new();
        let mut deadlines = Vec::new();
        for phase in &spec.phases {
            match phase.deadline {
                Deadline::PathUntil { t } => {
                    let (goal_for_exit, payoff) = match scoring {
                        Scoring::Sharp => (
                            phase.goal.clone(),
                            PhasePayoff::Indicator(phase.goal.clone()),
                        ),
                        Scoring::Mollified(eps) => {
                            let ramp = MollifiedPayoff::new(&phase.goal, eps);
                            (ramp.eroded.clone(), PhasePayoff::Ramp(ramp))
                        }
                    };
                    exit_sets.push(RegionSet::difference(phase.way.clone(), goal_for_exit));
                    payoffs.push(payoff);
                    deadlines.push(t);
                }
                Deadline::ReachAt { t } => {
                    let target = RegionSet::intersection(vec![
                        phase.goal.clone(),
                        phase.way.clone(),
                    ]);
                    let payoff = match scoring {
                        Scoring::Sharp => PhasePayoff::Indicator(target),
                        Scoring::Mollified(eps) => {
                            PhasePayoff::Ramp(MollifiedPayoff::new(&target, eps))
                        }
                    };
                    exit_sets.push(phase.way.clone());
                    payoffs.push(payoff);
                    deadlines.push(t);
                }
                Deadline::DwellFor { duration } => {
                    let payoff = match scoring {
                        Scoring::Sharp => PhasePayoff::Indicator(phase.way.clone()),
                        Scoring::Mollified(eps) => {
                            PhasePayoff::Ramp(MollifiedPayoff::new(&phase.way, eps))
                        }
                    };
                    exit_sets.push(phase.way.clone());
                    payoffs.push(payoff);
                    deadlines.push(duration);
                }
            }
        }
        Ok(CompiledSpec {
            kind,
            exit_sets,
            payoffs,
            deadlines,
            horizon: spec.horizon,
        })
    }
}

/// Sequential exit times of a discrete trajectory.
#[derive(Debug, Clone)]
pub struct ExitTimeRecord {
    pub t0: f64,
    /// First step index at or after the previous entry whose state is
    /// outside the corresponding set; `None` when it never happens.
    pub theta_step: Vec<Option<usize>>,
    /// Exit times; infinity when the exit never happens.
    pub theta: Vec<f64>,
    /// Clipped times `tau_i = theta_i min deadline_i` as step indices.
    pub tau_step: Vec<usize>,
    pub tau: Vec<f64>,
}

impl ExitTimeRecord {
    /// Active phase index at a step: the number of clipped exits already
    /// passed.
    pub fn phase_index_at(&self, step: usize) -> usize {
        self.tau_step.iter().take_while(|&&s| s <= step).count()
    }
}

/// Raw sequential exit scan: `theta_i` is the first step index at or after
/// `theta_{i-1}` (starting from `start_step`) with the state outside
/// `sets[i]`.
pub fn sequential_exit_steps(
    traj: &TrajectorySample,
    sets: &[RegionSet],
    start_step: usize,
) -> Vec<Option<usize>> {
    let n_steps = traj.n_steps();
    let mut out = Vec::with_capacity(sets.len());
    let mut cursor = Some(start_step);
    for set in sets {
        let found = cursor.and_then(|from| {
            (from..=n_steps).find(|&s| !set.contains(traj.state_at(s)))
        });
        out.push(found);
        cursor = found;
    }
    out
}

/// Sequential exit times with deadline clipping (`tau_i = theta_i min T_i`).
/// Deadlines are absolute times; pass the horizon for path phases.
pub fn sequential_exit_times(
    traj: &TrajectorySample,
    sets: &[RegionSet],
    deadlines: &[f64],
) -> ExitTimeRecord {
    assert_eq!(sets.len(), deadlines.len());
    let theta_step = sequential_exit_steps(traj, sets, 0);
    let theta: Vec<f64> = theta_step
        .iter()
        .map(|s| s.map_or(f64::INFINITY, |i| traj.time_at(i)))
        .collect();
    let mut tau_step = Vec::with_capacity(sets.len());
    let mut tau = Vec::with_capacity(sets.len());
    for (i, step) in theta_step.iter().enumerate() {
        let deadline_step = traj.step_of_time(deadlines[i]);
        let clipped = step.map_or(deadline_step, |s| s.min(deadline_step));
        tau_step.push(clipped);
        tau.push(traj.time_at(clipped).min(deadlines[i]));
    }
    ExitTimeRecord {
        t0: traj.t0,
        theta_step,
        theta,
        tau_step,
        tau,
    }
}

/// Exit-time record of a trajectory under a compiled specification: raw
/// chained exits plus deadline-clipped times. The dwell phase's window is
/// relative to the preceding phase's clipped exit.
pub fn exit_record(traj: &TrajectorySample, compiled: &CompiledSpec) -> ExitTimeRecord {
    let theta_step = sequential_exit_steps(traj, &compiled.exit_sets, 0);
    let n = theta_step.len();
    let mut tau_step: Vec<usize> = Vec::with_capacity(n);
    for (i, theta) in theta_step.iter().enumerate() {
        let deadline_step = match compiled.kind {
            SpecKind::PathThenDwell if i == 1 => {
                let window_steps = (compiled.deadlines[1] / traj.dt).round() as usize;
                (tau_step[0] + window_steps).min(traj.n_steps())
            }
            _ => traj.step_of_time(compiled.deadlines[i]),
        };
        tau_step.push(theta.map_or(deadline_step, |s| s.min(deadline_step)));
    }
    ExitTimeRecord {
        t0: traj.t0,
        theta: theta_step
            .iter()
            .map(|s| s.map_or(f64::INFINITY, |i| traj.time_at(i)))
            .collect(),
        theta_step,
        tau: tau_step.iter().map(|&s| traj.time_at(s)).collect(),
        tau_step,
    }
}

/// Scores a trajectory against a compiled specification; `prod_i l_i(X at
/// tau_i)` with the clipped sequential exit times of the matching variant.
pub fn score_trajectory(traj: &TrajectorySample, compiled: &CompiledSpec) -> f64 {
    let rec = exit_record(traj, compiled);
    let mut score = 1.0;
    for (i, &tau) in rec.tau_step.iter().enumerate() {
        score *= compiled.payoffs[i].eval(traj.state_at(tau));
        if score == 0.0 {
            return 0.0;
        }
    }
    score
}

/// Event indicator for a pure path specification (0 or 1).
pub fn event_indicator_path(traj: &TrajectorySample, spec: &MotionSpec) -> Result<bool> {
    if spec.kind()? != SpecKind::AllPath {
        return Err(Error::Spec("event_indicator_path needs path phases only".into()));
    }
    let compiled = CompiledSpec::new(spec, Scoring::Sharp)?;
    Ok(score_trajectory(traj, &compiled) == 1.0)
}

/// Event indicator for a pure reach specification (0 or 1).
pub fn event_indicator_reach(traj: &TrajectorySample, spec: &MotionSpec) -> Result<bool> {
    if spec.kind()? != SpecKind::AllReach {
        return Err(Error::Spec("event_indicator_reach needs reach phases only".into()));
    }
    let compiled = CompiledSpec::new(spec, Scoring::Sharp)?;
    Ok(score_trajectory(traj, &compiled) == 1.0)
}

/// Event indicator for a path phase followed by a relative dwell (0 or 1).
pub fn event_indicator_mixed(traj: &TrajectorySample, spec: &MotionSpec) -> Result<bool> {
    if spec.kind()? != SpecKind::PathThenDwell {
        return Err(Error::Spec(
            "event_indicator_mixed needs one path phase followed by one dwell phase".into(),
        ));
    }
    let compiled = CompiledSpec::new(spec, Scoring::Sharp)?;
    Ok(score_trajectory(traj, &compiled) == 1.0)
}
