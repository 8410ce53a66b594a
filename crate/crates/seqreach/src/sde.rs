//! Controlled SDE models and strong-solution sample paths.
//!
//! Models are drift/diffusion pairs `dX = f(X,u) dt + sigma(X,u) dW` with a
//! compact box control set. Paths are produced by fixed-step Euler-Maruyama
//! with Gaussian increments `dW ~ N(0, dt I)`; the scheme has weak order one,
//! which is all the exit-time estimators downstream rely on.
//!
//! Reproducibility: every path is driven by a counter-based ChaCha stream
//! keyed by `(seed, stream)`, so paths are independent, reproducible and
//! parallelizable in any order.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

type FieldFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// A controlled diffusion with box control set.
#[derive(Clone)]
pub struct SdeModel {
    pub name: String,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub control_dim: usize,
    /// `[lo, hi]` per control coordinate; must be bounded.
    pub control_box: Vec<(f64, f64)>,
    /// Declares that drift and squared diffusion are affine in each control
    /// coordinate, enabling the analytic bang-bang optimizer.
    pub control_affine: bool,
    /// Coordinatewise lower bounds applied after every step (used by the
    /// Langevin models, whose diffusion approximation can go negative).
    pub state_floor: Option<Vec<f64>>,
    pub lipschitz_hint: Option<f64>,
    drift_fn: Arc<FieldFn>,
    diffusion_fn: Arc<FieldFn>,
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("control_dim", &self.control_dim)
            .field("control_box", &self.control_box)
            .field("control_affine", &self.control_affine)
            .finish()
    }
}

impl SdeModel {
    /// Builds a model from drift and diffusion closures. The diffusion
    /// closure fills a row-major `state_dim x noise_dim` matrix.
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        noise_dim: usize,
        control_box: Vec<(f64, f64)>,
        drift: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        assert!(
            control_box
                .iter()
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi),
            "control box must be nonempty and bounded"
        );
        SdeModel {
            name: name.into(),
            state_dim,
            noise_dim,
            control_dim: control_box.len(),
            control_box,
            control_affine: false,
            state_floor: None,
            lipschitz_hint: None,
            drift_fn: Arc::new(drift),
            diffusion_fn: Arc::new(diffusion),
        }
    }

    pub fn with_control_affine(mut self, affine: bool) -> Self {
        self.control_affine = affine;
        self
    }

    pub fn with_state_floor(mut self, floor: Vec<f64>) -> Self {
        assert_eq!(floor.len(), self.state_dim);
        self.state_floor = Some(floor);
        self
    }

    /// Evaluates the drift into `out`, rejecting non-finite output.
    pub fn drift_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        (self.drift_fn)(x, u, out);
        for (i, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::ModelEval {
                    what: "drift",
                    coord: i,
                    state: x.to_vec(),
                    control: u.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Evaluates the diffusion matrix (row-major `d x d_z`) into `out`.
    pub fn diffusion_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        (self.diffusion_fn)(x, u, out);
        for (i, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::ModelEval {
                    what: "diffusion",
                    coord: i,
                    state: x.to_vec(),
                    control: u.to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn drift(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim];
        self.drift_into(x, u, &mut out)?;
        Ok(out)
    }

    pub fn diffusion(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim * self.noise_dim];
        self.diffusion_into(x, u, &mut out)?;
        Ok(out)
    }

    /// Clamps a control into the box, coordinatewise.
    pub fn clamp_control(&self, u: &mut [f64]) {
        for (ui, (lo, hi)) in u.iter_mut().zip(&self.control_box) {
            *ui = ui.clamp(*lo, *hi);
        }
    }
}

/// Where a policy query happens: active phase, current time, and the time
/// the phase became active (needed by dwell phases, whose tables are indexed
/// by elapsed dwell time).
#[derive(Debug, Clone, Copy)]
pub struct PolicyCtx {
    pub phase: usize,
    pub t: f64,
    pub phase_entry_t: f64,
}

/// Feedback law queried once per simulation step.
pub trait Policy: Send + Sync {
    fn control_into(&self, ctx: &PolicyCtx, x: &[f64], out: &mut [f64]);
}

/// Policy that applies the same control everywhere.
#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub Vec<f64>);

impl Policy for ConstantPolicy {
    fn control_into(&self, _ctx: &PolicyCtx, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// One discrete sample path.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub state_dim: usize,
    pub control_dim: usize,
    /// `(n_steps + 1) * state_dim` states, flat row-major.
    pub states: Vec<f64>,
    /// `n_steps * control_dim` controls; entry `j` acts on `[t_j, t_{j+1})`.
    pub controls: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    /// Set when the state left the configured simulation bounding box.
    pub truncated: bool,
}

impl TrajectorySample {
    pub fn n_steps(&self) -> usize {
        self.states.len() / self.state_dim - 1
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn state_at(&self, step: usize) -> &[f64] {
        &self.states[step * self.state_dim..(step + 1) * self.state_dim]
    }

    /// Nearest step index for an absolute time (the horizon grid convention).
    pub fn step_of_time(&self, t: f64) -> usize {
        if t <= self.t0 {
            return 0;
        }
        let idx = ((t - self.t0) / self.dt).round();
        (idx as usize).min(self.n_steps())
    }

    /// State at an absolute time; queries at `s <= t0` return `x0` by the
    /// pre-start convention.
    pub fn state_at_time(&self, s: f64) -> &[f64] {
        if s <= self.t0 {
            return &self.x0;
        }
        self.state_at(self.step_of_time(s))
    }
}

/// Options for path simulation.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// States leaving this box set the truncation flag (they are not
    /// clamped; the flag is diagnostic).
    pub bounding_box: Option<(Vec<f64>, Vec<f64>)>,
    /// Phase exit sets: the active phase advances when the current state
    /// falls outside `exit_sets[phase]`, chained like the exit-time tracker.
    pub exit_sets: Vec<crate::geometry::RegionSet>,
    /// Absolute deadline per phase; the phase also advances once `t` reaches
    /// it. Use infinity for path phases bounded only by the horizon.
    pub deadlines: Vec<f64>,
}

/// One Euler-Maruyama step: `x + f(x,u) dt + sigma(x,u) dW`.
pub fn em_step(model: &SdeModel, x: &[f64], u: &[f64], dt: f64, dw: &[f64]) -> Result<Vec<f64>> {
    assert!(dt > 0.0);
    let mut drift = vec![0.0; model.state_dim];
    let mut diff = vec![0.0; model.state_dim * model.noise_dim];
    model.drift_into(x, u, &mut drift)?;
    model.diffusion_into(x, u, &mut diff)?;
    let mut out = x.to_vec();
    for i in 0..model.state_dim {
        let mut noise = 0.0;
        for k in 0..model.noise_dim {
            noise += diff[i * model.noise_dim + k] * dw[k];
        }
        out[i] += drift[i] * dt + noise;
    }
    Ok(out)
}

/// Simulates one path on `[t0, horizon]` under a feedback policy.
///
/// The Gaussian increments come from the ChaCha stream `(seed, stream)`;
/// identical arguments give bitwise-identical trajectories. Out-of-box
/// controls are clamped, not rejected.
pub fn simulate_path(
    model: &SdeModel,
    policy: &dyn Policy,
    t0: f64,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    stream: u64,
    opts: &SimOptions,
) -> Result<TrajectorySample> {
    assert!(horizon >= t0, "horizon must not precede the start time");
    assert!(dt > 0.0);
    let n_steps = ((horizon - t0) / dt).round() as usize;
    let d = model.state_dim;
    let du = model.control_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut states = Vec::with_capacity((n_steps + 1) * d);
    let mut controls = Vec::with_capacity(n_steps * du);
    states.extend_from_slice(x0);

    let mut x = x0.to_vec();
    let mut u = vec![0.0; du];
    let mut drift = vec![0.0; d];
    let mut diff = vec![0.0; d * model.noise_dim];
    let mut dw = vec![0.0; model.noise_dim];
    let mut truncated = false;
    let mut phase = 0usize;
    let mut phase_entry_t = t0;
    let sqrt_dt = dt.sqrt();

    for step in 0..n_steps {
        let t = t0 + step as f64 * dt;
        while phase < opts.exit_sets.len()
            && (!opts.exit_sets[phase].contains(&x)
                || opts.deadlines.get(phase).map_or(false, |d| t >= *d))
        {
            phase += 1;
            phase_entry_t = t;
        }
        let ctx = PolicyCtx {
            phase,
            t,
            phase_entry_t,
        };
        policy.control_into(&ctx, &x, &mut u);
        model.clamp_control(&mut u);
        controls.extend_from_slice(&u);

        model.drift_into(&x, &u, &mut drift)?;
        model.diffusion_into(&x, &u, &mut diff)?;
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
        if let Some((lo, hi)) = &opts.bounding_box {
            if x.iter()
                .zip(lo.iter().zip(hi))
                .any(|(xi, (l, h))| xi < l || xi > h)
            {
                truncated = true;
            }
        }
        states.extend_from_slice(&x);
    }

    Ok(TrajectorySample {
        t0,
        x0: x0.to_vec(),
        dt,
        state_dim: d,
        control_dim: du,
        states,
        controls,
        seed,
        stream,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model() -> SdeModel {
        SdeModel::new(
            "zero",
            2,
            2,
            vec![(0.0, 0.0)],
            |_x, _u, out| out.fill(0.0),
            |_x, _u, out| out.fill(0.0),
        )
    }

    #[test]
    fn em_step_zero_dynamics_is_identity() {
        let m = zero_model();
        let x = [1.5, -0.25];
        let out = em_step(&m, &x, &[0.0], 0.01, &[0.3, -0.7]).unwrap();
        assert_eq!(out, vec![1.5, -0.25]);
    }

    #[test]
    fn em_step_pure_drift_is_exact() {
        let m = SdeModel::new(
            "pure-drift",
            1,
            1,
            vec![(-1.0, 1.0)],
            |_x, u, out| out[0] = u[0],
            |_x, _u, out| out[0] = 0.0,
        );
        let out = em_step(&m, &[0.0], &[1.0], 0.5, &[0.0]).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn em_step_reports_nonfinite_coordinate() {
        let m = SdeModel::new(
            "bad",
            2,
            1,
            vec![(0.0, 0.0)],
            |_x, _u, out| {
                out[0] = 0.0;
                out[1] = f64::NAN;
            },
            |_x, _u, out| out.fill(0.0),
        );
        match em_step(&m, &[0.0, 0.0], &[0.0], 0.1, &[0.0]) {
            Err(Error::ModelEval { what, coord, .. }) => {
                assert_eq!(what, "drift");
                assert_eq!(coord, 1);
            }
            other => panic!("expected model-eval error, got {other:?}"),
        }
    }

    #[test]
    fn paths_are_bitwise_reproducible() {
        let m = SdeModel::new(
            "ou",
            1,
            1,
            vec![(0.0, 0.0)],
            |x, _u, out| out[0] = -x[0],
            |_x, _u, out| out[0] = 0.5,
        );
        let p = ConstantPolicy(vec![0.0]);
        let a = simulate_path(&m, &p, 0.0, &[1.0], 1.0, 0.01, 42, 7, &SimOptions::default())
            .unwrap();
        let b = simulate_path(&m, &p, 0.0, &[1.0], 1.0, 0.01, 42, 7, &SimOptions::default())
            .unwrap();
        assert_eq!(a.states, b.states);
        let c = simulate_path(&m, &p, 0.0, &[1.0], 1.0, 0.01, 42, 8, &SimOptions::default())
            .unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn pre_start_queries_return_x0() {
        let m = zero_model();
        let p = ConstantPolicy(vec![0.0]);
        let traj =
            simulate_path(&m, &p, 2.0, &[3.0, 4.0], 3.0, 0.1, 1, 0, &SimOptions::default())
                .unwrap();
        assert_eq!(traj.state_at_time(1.0), &[3.0, 4.0]);
        assert_eq!(traj.state_at_time(2.0), &[3.0, 4.0]);
        assert_eq!(traj.state_at_time(-5.0), &[3.0, 4.0]);
    }

    #[test]
    fn truncation_flag_records_box_exit() {
        let m = SdeModel::new(
            "drift-right",
            1,
            1,
            vec![(1.0, 1.0)],
            |_x, u, out| out[0] = u[0],
            |_x, _u, out| out[0] = 0.0,
        );
        let p = ConstantPolicy(vec![1.0]);
        let opts = SimOptions {
            bounding_box: Some((vec![-1.0], vec![0.5])),
            ..Default::default()
        };
        let traj = simulate_path(&m, &p, 0.0, &[0.0], 1.0, 0.1, 0, 0, &opts).unwrap();
        assert!(traj.truncated);
    }

    #[test]
    fn driftless_unit_diffusion_matches_brownian_moments() {
        // law-of-large-numbers oracle: X_T ~ N(0, T) per coordinate.
        let m = SdeModel::new(
            "bm2",
            2,
            2,
            vec![(0.0, 0.0)],
            |_x, _u, out| out.fill(0.0),
            |_x, _u, out| {
                out.fill(0.0);
                out[0] = 1.0;
                out[3] = 1.0;
            },
        );
        let p = ConstantPolicy(vec![0.0]);
        let t_end = 1.0;
        let n_paths = 100_000usize;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for path in 0..n_paths {
            let traj = simulate_path(
                &m,
                &p,
                0.0,
                &[0.0, 0.0],
                t_end,
                0.01,
                2024,
                path as u64,
                &SimOptions::default(),
            )
            .unwrap();
            let last = traj.state_at(traj.n_steps());
            for i in 0..2 {
                sums[i] += last[i];
                sq[i] += last[i] * last[i];
            }
        }
        for i in 0..2 {
            let mean = sums[i] / n_paths as f64;
            let var = sq[i] / n_paths as f64 - mean * mean;
            assert!(
                mean.abs() <= 3.0 * (t_end / n_paths as f64).sqrt(),
                "mean {mean} out of Monte Carlo band"
            );
            assert!((var - t_end).abs() / t_end < 0.05, "variance {var} off by >5%");
        }
    }
}
