//! Bundled model and specification instances.
//!
//! The centerpiece is the bistable two-gene network driven by external
//! production-rate inputs: a chemical Langevin model whose drift couples the
//! two repressor concentrations through Hill functions
//! `f(y, u) = theta^n k u / (y^n + theta^n)`, with the matching square-root
//! diffusion terms. The motion task steers the populations into a target box
//! around the unstable equilibrium while avoiding the attractor regions,
//! then holds them inside a maintenance margin.
//!
//! The exact geometry of the avoid/target/margin sets is not published
//! numerically anywhere we could copy it from; the defaults below are
//! reconstructions (balls around numerically located equilibria plus
//! low-copy-number strips) and are recorded as such in every run manifest.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::RegionSet;
use crate::grid::Grid;
use crate::motion::{Deadline, MotionSpec, Phase};
use crate::sde::SdeModel;

/// Parameters of the two-gene switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BioSwitchParams {
    pub theta1: f64,
    pub theta2: f64,
    pub n1: f64,
    pub n2: f64,
    pub k1: f64,
    pub k2: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub u_x_box: (f64, f64),
    pub u_y_box: (f64, f64),
}

impl Default for BioSwitchParams {
    fn default() -> Self {
        BioSwitchParams {
            theta1: 40.0,
            theta2: 40.0,
            n1: 4.0,
            n2: 6.0,
            k1: 4.0,
            k2: 4.0,
            mu_x: 0.04,
            mu_y: 0.04,
            u_x_box: (0.0, 2.0),
            u_y_box: (0.0, 2.0),
        }
    }
}

impl BioSwitchParams {
    /// Fully controllable production rates.
    pub fn scenario1() -> Self {
        Self::default()
    }

    /// Only the production rate of protein x is controllable; u_y is pinned
    /// to 1.
    pub fn scenario2() -> Self {
        BioSwitchParams {
            u_y_box: (1.0, 1.0),
            ..Self::default()
        }
    }
}

fn hill(v: f64, theta: f64, n: f64, k: f64) -> f64 {
    let vn = pow_checked(v.max(0.0), n);
    let tn = pow_checked(theta, n);
    tn * k / (vn + tn)
}

fn pow_checked(base: f64, n: f64) -> f64 {
    if n.fract() == 0.0 && (0.0..=16.0).contains(&n) {
        base.powi(n as i32)
    } else {
        base.powf(n)
    }
}

/// The chemical Langevin model of the switch: two states, four independent
/// noise channels (one per production and degradation reaction), two
/// controls. Diffusion arguments are clamped at zero before the square root
/// and the states are floored at zero, since the Langevin approximation can
/// otherwise assign negative copy numbers.
pub fn bio_switch_model(params: &BioSwitchParams) -> Arc<SdeModel> {
    let p = params.clone();
    let pd = params.clone();
    Arc::new(
        SdeModel::new(
            "bio_switch",
            2,
            4,
            vec![params.u_x_box, params.u_y_box],
            move |x, u, out| {
                out[0] = hill(x[1], p.theta1, p.n1, p.k1) * u[0] - p.mu_x * x[0];
                out[1] = hill(x[0], p.theta2, p.n2, p.k2) * u[1] - p.mu_y * x[1];
            },
            move |x, u, out| {
                let fx = (hill(x[1], pd.theta1, pd.n1, pd.k1) * u[0]).max(0.0);
                let gy = (hill(x[0], pd.theta2, pd.n2, pd.k2) * u[1]).max(0.0);
                out.fill(0.0);
                out[0] = fx.sqrt();
                out[1] = (pd.mu_x * x[0]).max(0.0).sqrt();
                out[6] = gy.sqrt();
                out[7] = (pd.mu_y * x[1]).max(0.0).sqrt();
            },
        )
        .with_control_affine(true)
        .with_state_floor(vec![0.0, 0.0]),
    )
}

/// A located drift equilibrium with its linearized stability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    pub stable: bool,
}

/// Finds the drift equilibria at the reference input `u = (1, 1)` by a
/// nullcline scan for brackets followed by damped Newton polishing.
pub fn bio_switch_equilibria(params: &BioSwitchParams) -> Vec<Equilibrium> {
    let f = |y: f64| hill(y, params.theta1, params.n1, params.k1);
    let g = |x: f64| hill(x, params.theta2, params.n2, params.k2);
    let y_null = |x: f64| g(x) / params.mu_y;
    let residual = |x: f64| f(y_null(x)) / params.mu_x - x;

    // bracket roots of the reduced scalar problem
    let x_max = 1.5 * params.k1 / params.mu_x;
    let n_scan = 4000;
    let mut brackets = Vec::new();
    let mut prev_x = 1e-9;
    let mut prev_r = residual(prev_x);
    for i in 1..=n_scan {
        let x = x_max * i as f64 / n_scan as f64;
        let r = residual(x);
        if prev_r == 0.0 || (prev_r < 0.0) != (r < 0.0) {
            brackets.push((prev_x, x));
        }
        prev_x = x;
        prev_r = r;
    }

    let mut out = Vec::new();
    for (mut a, mut b) in brackets {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (residual(a) < 0.0) == (residual(m) < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        let x0 = 0.5 * (a + b);
        let start = [x0, y_null(x0)];
        if let Some(point) = damped_newton(params, start) {
            if out.iter().all(|e: &Equilibrium| {
                let dx: f64 = e.point[0] - point[0];
                let dy: f64 = e.point[1] - point[1];
                (dx * dx + dy * dy).sqrt() > 1e-3
            }) {
                let stable = is_stable(params, &point);
                out.push(Equilibrium {
                    point: point.to_vec(),
                    stable,
                });
            }
        }
    }
    out.sort_by(|a, b| a.point[0].partial_cmp(&b.point[0]).unwrap());
    out
}

fn drift_at(params: &BioSwitchParams, z: &[f64; 2]) -> [f64; 2] {
    [
        hill(z[1], params.theta1, params.n1, params.k1) - params.mu_x * z[0],
        hill(z[0], params.theta2, params.n2, params.k2) - params.mu_y * z[1],
    ]
}

fn damped_newton(params: &BioSwitchParams, mut z: [f64; 2]) -> Option<[f64; 2]> {
    let eps = 1e-6;
    for _ in 0..100 {
        let r = drift_at(params, &z);
        let norm = (r[0] * r[0] + r[1] * r[1]).sqrt();
        if norm < 1e-12 {
            return Some(z);
        }
        // numeric Jacobian
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut zp = z;
            zp[j] += eps;
            let rp = drift_at(params, &zp);
            jac[0][j] = (rp[0] - r[0]) / eps;
            jac[1][j] = (rp[1] - r[1]) / eps;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let step = [
            (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut lambda = 1.0;
        loop {
            let cand = [z[0] - lambda * step[0], z[1] - lambda * step[1]];
            let rc = drift_at(params, &cand);
            if (rc[0] * rc[0] + rc[1] * rc[1]).sqrt() < norm || lambda < 1e-6 {
                z = cand;
                break;
            }
            lambda *= 0.5;
        }
    }
    let r = drift_at(params, &z);
    if (r[0] * r[0] + r[1] * r[1]).sqrt() < 1e-8 {
        Some(z)
    } else {
        None
    }
}

fn is_stable(params: &BioSwitchParams, z: &[f64; 2]) -> bool {
    let eps = 1e-6;
    let r = drift_at(params, &[z[0], z[1]]);
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        let mut zp = [z[0], z[1]];
        zp[j] += eps;
        let rp = drift_at(params, &zp);
        jac[0][j] = (rp[0] - r[0]) / eps;
        jac[1][j] = (rp[1] - r[1]) / eps;
    }
    let trace = jac[0][0] + jac[1][1];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    det > 0.0 && trace < 0.0
}

/// Default geometry of the bio-switch task, reconstructed around the
/// computed equilibria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BioSwitchGeometry {
    /// Radius of the target ball B around the unstable equilibrium.
    pub target_radius: f64,
    /// Radius of the maintenance margin C (concentric with B).
    pub margin_radius: f64,
    /// Radius of the avoid balls around the stable equilibria.
    pub avoid_radius: f64,
    /// Width of the low-copy-number strips along both axes.
    pub strip_width: f64,
}

impl Default for BioSwitchGeometry {
    fn default() -> Self {
        BioSwitchGeometry {
            target_radius: 8.0,
            margin_radius: 16.0,
            avoid_radius: 15.0,
            strip_width: 5.0,
        }
    }
}

/// A ready-to-solve bio-switch scenario.
pub struct BioSwitchScenario {
    pub name: String,
    pub params: BioSwitchParams,
    pub geometry: BioSwitchGeometry,
    pub model: Arc<SdeModel>,
    pub spec: MotionSpec,
    pub grid: Grid,
    pub avoid: RegionSet,
    pub target: RegionSet,
    pub margin: RegionSet,
    pub equilibria: Vec<Equilibrium>,
    pub t1: f64,
    pub t2: f64,
}

/// Builds one scenario: reach the target ball within `T_1 = 60` while
/// avoiding the attractor regions, then dwell in the margin for
/// `T_2 = 120`, on a 121 x 121 grid over `[0, 120]^2`.
pub fn bio_switch_scenario(params: BioSwitchParams, geometry: BioSwitchGeometry) -> BioSwitchScenario {
    let t1 = 60.0;
    let t2 = 120.0;
    let equilibria = bio_switch_equilibria(&params);
    let unstable = equilibria
        .iter()
        .find(|e| !e.stable)
        .expect("the bistable switch has an unstable equilibrium")
        .clone();
    let stables: Vec<&Equilibrium> = equilibria.iter().filter(|e| e.stable).collect();

    let mut avoid_parts: Vec<RegionSet> = stables
        .iter()
        .map(|e| RegionSet::ball(e.point.clone(), geometry.avoid_radius))
        .collect();
    // low copy numbers for each protein
    avoid_parts.push(RegionSet::half_space(vec![1.0, 0.0], geometry.strip_width)); // x <= w
    avoid_parts.push(RegionSet::half_space(vec![0.0, 1.0], geometry.strip_width)); // y <= w
    let avoid = RegionSet::union(avoid_parts);
    let target = RegionSet::ball(unstable.point.clone(), geometry.target_radius);
    let margin = RegionSet::open_ball(unstable.point.clone(), geometry.margin_radius);

    let spec = MotionSpec {
        phases: vec![
            Phase {
                way: RegionSet::complement(avoid.clone()),
                goal: target.clone(),
                deadline: Deadline::PathUntil { t: t1 },
            },
            Phase {
                way: margin.clone(),
                goal: margin.clone(),
                deadline: Deadline::DwellFor { duration: t2 },
            },
        ],
        horizon: t1 + t2,
        eps: 0.0,
    };

    let grid = Grid::new(vec![0.0, 0.0], vec![120.0, 120.0], vec![121, 121]);
    let model = bio_switch_model(&params);
    BioSwitchScenario {
        name: if params.u_y_box.0 == params.u_y_box.1 {
            "bio_switch_scenario2".into()
        } else {
            "bio_switch_scenario1".into()
        },
        params,
        geometry,
        model,
        spec,
        grid,
        avoid,
        target,
        margin,
        equilibria,
        t1,
        t2,
    }
}

/// The two scenarios investigated in the case study: full control over both
/// production rates, and control over x only.
pub fn bio_switch_scenarios() -> (BioSwitchScenario, BioSwitchScenario) {
    (
        bio_switch_scenario(BioSwitchParams::scenario1(), BioSwitchGeometry::default()),
        bio_switch_scenario(BioSwitchParams::scenario2(), BioSwitchGeometry::default()),
    )
}

/// A small calibration problem bundled with its oracle.
pub struct Calibration {
    pub name: String,
    pub model: Arc<SdeModel>,
    pub spec: MotionSpec,
    pub grid: Grid,
    /// Closed-form limit of `V(0, .)`, when one exists.
    pub analytic_v0: Option<fn(&[f64]) -> f64>,
    /// Suggested Monte Carlo step.
    pub dt_mc: f64,
}

/// Driftless diffusion `dX = sqrt(2) dW` on `(0, 1)` with the goal
/// `{x >= 1}`: hit the right end before the left end. As the horizon grows
/// the success probability converges to the harmonic (linear) exit
/// probability `x`.
pub fn driftless_exit_problem(horizon: f64) -> Calibration {
    let model = Arc::new(SdeModel::new(
        "driftless_exit",
        1,
        1,
        vec![(0.0, 0.0)],
        |_x, _u, out| out[0] = 0.0,
        |_x, _u, out| out[0] = std::f64::consts::SQRT_2,
    ));
    let spec = MotionSpec::single_path(
        RegionSet::open_box(vec![0.0], vec![1.0]),
        RegionSet::half_space(vec![-1.0], -1.0), // x >= 1
        horizon,
    );
    Calibration {
        name: "driftless_exit".into(),
        model,
        spec,
        grid: Grid::new(vec![0.0], vec![1.0], vec![201]),
        analytic_v0: Some(|x| x[0].clamp(0.0, 1.0)),
        dt_mc: 2.5e-4,
    }
}

/// Controlled crossing `dX = u dt + 0.5 dW`, `u in [0, u_max]`: push right
/// to `{x >= 2}` before leaving `(0, 2)`.
pub fn controlled_1d_problem(u_max: f64, horizon: f64) -> Calibration {
    let model = Arc::new(
        SdeModel::new(
            "controlled_1d",
            1,
            1,
            vec![(0.0, u_max)],
            |_x, u, out| out[0] = u[0],
            |_x, _u, out| out[0] = 0.5,
        )
        .with_control_affine(true),
    );
    let spec = MotionSpec::single_path(
        RegionSet::open_box(vec![0.0], vec![2.0]),
        RegionSet::half_space(vec![-1.0], -2.0), // x >= 2
        horizon,
    );
    Calibration {
        name: "controlled_1d".into(),
        model,
        spec,
        grid: Grid::new(vec![0.0], vec![2.0], vec![101]),
        analytic_v0: None,
        dt_mc: 1e-3,
    }
}

/// Two path phases in one dimension, exercising the chained sweep end to
/// end: visit `[1.4, 1.6]`, then `[2.4, 2.6]`, confined to `(0, 3)`.
pub fn two_phase_1d_problem(horizon: f64) -> Calibration {
    let model = Arc::new(
        SdeModel::new(
            "two_phase_1d",
            1,
            1,
            vec![(-1.0, 1.0)],
            |_x, u, out| out[0] = u[0],
            |_x, _u, out| out[0] = 0.6,
        )
        .with_control_affine(true),
    );
    let way = RegionSet::open_box(vec![0.0], vec![3.0]);
    let spec = MotionSpec {
        phases: vec![
            Phase {
                way: way.clone(),
                goal: RegionSet::closed_box(vec![1.4], vec![1.6]),
                deadline: Deadline::PathUntil { t: horizon },
            },
            Phase {
                way,
                goal: RegionSet::closed_box(vec![2.4], vec![2.6]),
                deadline: Deadline::PathUntil { t: horizon },
            },
        ],
        horizon,
        eps: 0.0,
    };
    Calibration {
        name: "two_phase_1d".into(),
        model,
        spec,
        grid: Grid::new(vec![0.0], vec![3.0], vec![151]),
        analytic_v0: None,
        dt_mc: 1e-3,
    }
}

/// All bundled calibration fixtures.
pub fn calibration_models() -> Vec<Calibration> {
    vec![
        driftless_exit_problem(1.0),
        controlled_1d_problem(1.0, 4.0),
        two_phase_1d_problem(6.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{solve_chain, ChainProblem, HjbOptions};
    use crate::motion::SpecKind;
    use crate::sde::em_step;
    use std::sync::Arc as StdArc;

    #[test]
    fn hill_half_max_at_threshold() {
        let p = BioSwitchParams::default();
        assert!((hill(p.theta1, p.theta1, p.n1, p.k1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hill_decays_to_zero() {
        let p = BioSwitchParams::default();
        assert!(hill(1e6, p.theta1, p.n1, p.k1) < 1e-12);
    }

    #[test]
    fn drift_at_40_40_matches_hand_evaluation() {
        // f(40, 1) - 0.04 * 40 = 2 - 1.6 = 0.4 in both coordinates
        let model = bio_switch_model(&BioSwitchParams::default());
        let out = em_step(&model, &[40.0, 40.0], &[1.0, 1.0], 1.0, &[0.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert!((out[0] - 40.4).abs() < 1e-12);
        assert!((out[1] - 40.4).abs() < 1e-12);
    }

    #[test]
    fn equilibria_are_two_stable_one_unstable() {
        let eq = bio_switch_equilibria(&BioSwitchParams::default());
        assert_eq!(eq.len(), 3);
        let stable: Vec<_> = eq.iter().filter(|e| e.stable).collect();
        let unstable: Vec<_> = eq.iter().filter(|e| !e.stable).collect();
        assert_eq!(stable.len(), 2);
        assert_eq!(unstable.len(), 1);
        // drift is small near the saddle by construction
        let z = &unstable[0].point;
        let p = BioSwitchParams::default();
        let r = drift_at(&p, &[z[0], z[1]]);
        assert!((r[0] * r[0] + r[1] * r[1]).sqrt() < 1e-6);
        // the saddle lies between the attractors, in the interior
        assert!(z[0] > 10.0 && z[0] < 110.0);
        assert!(z[1] > 10.0 && z[1] < 110.0);
    }

    #[test]
    fn scenario_sets_nest_on_grid_nodes() {
        let (s1, _) = bio_switch_scenarios();
        let mut x = vec![0.0; 2];
        for i in 0..s1.grid.node_count() {
            s1.grid.coords_into(i, &mut x);
            if s1.target.contains(&x) {
                assert!(s1.margin.contains(&x), "B must sit inside C at {x:?}");
            }
            if s1.margin.contains(&x) {
                assert!(!s1.avoid.contains(&x), "C must avoid A at {x:?}");
            }
        }
    }

    #[test]
    fn scenario2_pins_u_y() {
        let (_, s2) = bio_switch_scenarios();
        assert_eq!(s2.model.control_box[1], (1.0, 1.0));
        let (s1, _) = bio_switch_scenarios();
        assert_eq!(s1.model.control_box[1], (0.0, 2.0));
    }

    #[test]
    fn scenario_spec_shape() {
        let (s1, _) = bio_switch_scenarios();
        assert_eq!(s1.spec.phases.len(), 2);
        assert_eq!(s1.spec.kind().unwrap(), SpecKind::PathThenDwell);
        assert!(matches!(
            s1.spec.phases[0].deadline,
            Deadline::PathUntil { t } if t == 60.0
        ));
        assert!(matches!(
            s1.spec.phases[1].deadline,
            Deadline::DwellFor { duration } if duration == 120.0
        ));
        assert_eq!(s1.grid.nodes, vec![121, 121]);
    }

    #[test]
    fn calibration_fixtures_carry_their_oracles() {
        let fixtures = calibration_models();
        assert_eq!(fixtures.len(), 3);
        assert!(fixtures[0].analytic_v0.is_some());
        let f = fixtures[0].analytic_v0.unwrap();
        assert!((f(&[0.25]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_phase_chain_with_whole_box_goals_is_certain() {
        let cal = two_phase_1d_problem(2.0);
        let mut spec = cal.spec.clone();
        for phase in &mut spec.phases {
            phase.goal = RegionSet::All;
            phase.way = RegionSet::All;
        }
        let grid = StdArc::new(Grid::new(vec![0.0], vec![3.0], vec![31]));
        let problem =
            ChainProblem::from_spec(cal.model.clone(), &spec, grid, &HjbOptions::default())
                .unwrap();
        let solution = solve_chain(&problem).unwrap();
        let v0 = solution.initial_field(&problem);
        assert!(v0.values.iter().all(|&v| v == 1.0));
    }
}
