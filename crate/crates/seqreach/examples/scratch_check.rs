use std::sync::Arc;
use std::time::Instant;
use seqreach::hjb::{solve_chain, ChainProblem, HjbOptions};
use seqreach::mc;
use seqreach::models::driftless_exit_problem;
use seqreach::motion::Scoring;
use seqreach::sde::ConstantPolicy;

fn main() {
    let cal = driftless_exit_problem(1.0);
    let grid = Arc::new(cal.grid.clone());
    let t0 = Instant::now();
    let problem = ChainProblem::from_spec(cal.model.clone(), &cal.spec, grid.clone(), &HjbOptions { store_every: 500, ..Default::default() }).unwrap();
    println!("dt_pde = {:.3e}, cfl = {:.3e}", problem.dt, problem.cfl_bound);
    let solution = solve_chain(&problem).unwrap();
    println!("pde solve: {:?} ({} slices)", t0.elapsed(), solution.phases[0].times.len());
    let v0 = solution.initial_field(&problem);
    let f = cal.analytic_v0.unwrap();
    let mut max_gap_analytic: f64 = 0.0;
    for i in 0..grid.node_count() {
        let x = grid.coords(i);
        max_gap_analytic = max_gap_analytic.max((v0.values[i] - f(&x)).abs());
    }
    println!("max |pde - analytic| = {:.4}", max_gap_analytic);

    // truncation check by horizon doubling
    let cal2 = driftless_exit_problem(2.0);
    let problem2 = ChainProblem::from_spec(cal2.model.clone(), &cal2.spec, grid.clone(), &HjbOptions { store_every: 1000, ..Default::default() }).unwrap();
    let sol2 = solve_chain(&problem2).unwrap();
    let v02 = sol2.initial_field(&problem2);
    let trunc: f64 = v0.values.iter().zip(&v02.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("truncation effect (T doubling) = {:.2e}", trunc);

    // MC at a few nodes
    let policy = ConstantPolicy(vec![0.0]);
    let t1 = Instant::now();
    let nodes: Vec<usize> = (1..=5).map(|i| i * 33).collect();
    let ests = mc::estimate_at_nodes(&cal.model, &policy, &cal.spec, Scoring::Sharp, 0.0, &grid, &nodes, 20_000, cal.dt_mc, 7).unwrap();
    println!("mc ({} nodes x 20k paths, dt={:.1e}): {:?}", nodes.len(), cal.dt_mc, t1.elapsed());
    for (n, e) in nodes.iter().zip(&ests) {
        let x = grid.coords(*n);
        println!("  x={:.3}: pde={:.4} mc={:.4}+-{:.4} analytic={:.4}", x[0], v0.values[*n], e.p_hat, e.ci_halfwidth, f(&x));
    }
}
