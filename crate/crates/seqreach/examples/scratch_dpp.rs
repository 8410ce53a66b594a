use std::sync::Arc;
use std::time::Instant;
use seqreach::hjb::{solve_chain, ChainProblem, HjbOptions};
use seqreach::mc::{dpp_residual, estimate_success, DppBudget, ThetaRule};
use seqreach::models::{controlled_1d_problem, driftless_exit_problem};
use seqreach::motion::{MotionSpec, Scoring};
use seqreach::geometry::RegionSet;
use seqreach::sde::ConstantPolicy;

fn main() {
    let driftless = driftless_exit_problem(1.0);
    let controlled = controlled_1d_problem(1.0, 4.0);
    let rules = [ThetaRule::FixedTime(0.0), ThetaRule::FixedTime(0.1), ThetaRule::FirstExitBall { radius: 0.1 }];
    let t0 = Instant::now();
    for (cal, x0, u) in [(&driftless, 0.4, vec![0.0]), (&controlled, 0.6, vec![0.7])] {
        for (ri, rule) in rules.iter().enumerate() {
            for seed in [1u64, 2, 3] {
                let r = dpp_residual(&cal.model, &ConstantPolicy(u.clone()), &cal.spec, Scoring::Sharp,
                                     *rule, 0.0, &[x0], DppBudget::default(), cal.dt_mc.max(1e-3), seed).unwrap();
                let z = if r.sigma > 0.0 { r.residual / r.sigma } else { 0.0 };
                println!("{} rule{} seed{}: residual={:+.5} sigma={:.5} z={:+.2}", cal.name, ri, seed, r.residual, r.sigma, z);
                if ri == 0 { assert_eq!(r.residual, 0.0, "theta=t0 must be exactly zero"); }
            }
        }
    }
    println!("dpp total: {:?}", t0.elapsed());

    // eps-monotonicity: goal interval inside the way set
    let way = RegionSet::open_box(vec![0.0], vec![1.0]);
    let goal = RegionSet::closed_box(vec![0.6], vec![0.8]);
    let spec_e = |eps: f64| MotionSpec::single_path(way.clone(), goal.clone(), 0.5).with_eps(eps);
    let grid = Arc::new(seqreach::grid::Grid::new(vec![0.0], vec![1.0], vec![101]));
    let model = driftless.model.clone();
    let mut fields = vec![];
    for eps in [0.02, 0.04] {
        let p = ChainProblem::from_spec(model.clone(), &spec_e(eps), grid.clone(), &HjbOptions { store_every: 100, ..Default::default() }).unwrap();
        let s = solve_chain(&p).unwrap();
        fields.push(s.initial_field(&p).values);
    }
    let max_violation = fields[1].iter().zip(&fields[0]).map(|(v2e, ve)| v2e - ve).fold(f64::NEG_INFINITY, f64::max);
    println!("pde eps-monotonicity: max(V^2eps - V^eps) = {:+.2e} (must be <= 1e-3)", max_violation);

    // shared-seed MC version, exact
    let pol = ConstantPolicy(vec![0.0]);
    let p_eps = estimate_success(&model, &pol, &spec_e(0.02), Scoring::Mollified(0.02), 0.0, &[0.4], 20_000, 1e-3, 5).unwrap();
    let p_2eps = estimate_success(&model, &pol, &spec_e(0.04), Scoring::Mollified(0.04), 0.0, &[0.4], 20_000, 1e-3, 5).unwrap();
    println!("mc shared-seed: p(eps)={:.4} p(2eps)={:.4} exact order: {}", p_eps.p_hat, p_2eps.p_hat, p_2eps.p_hat <= p_eps.p_hat);
}
