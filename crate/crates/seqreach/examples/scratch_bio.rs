use std::sync::Arc;
use std::time::Instant;
use seqreach::hjb::{audit_boundary_exactness, solve_chain, ChainProblem, HjbOptions};
use seqreach::models::bio_switch_scenarios;
use seqreach::policy::{closed_loop_verify, extract_policy, is_bang_bang, Lookup};

fn main() {
    let (s1, s2) = bio_switch_scenarios();
    for s in [&s1, &s2] {
        let t0 = Instant::now();
        let grid = Arc::new(s.grid.clone());
        let problem = ChainProblem::from_spec(s.model.clone(), &s.spec, grid.clone(), &HjbOptions { store_every: 20, ..Default::default() }).unwrap();
        println!("{}: dt={:.4} cfl={:.4}", s.name, problem.dt, problem.cfl_bound);
        let solution = solve_chain(&problem).unwrap();
        println!("  solve: {:?}, slices per phase: {} / {}", t0.elapsed(), solution.phases[0].times.len(), solution.phases[1].times.len());
        audit_boundary_exactness(&problem, &solution).unwrap();
        println!("  boundary audit ok");

        // V2 at T1 mean over C, V1(0) checks
        let v2 = &solution.phases[1];
        let v2_t1 = &v2.slices[0];
        let mask_c = &problem.masks[1];
        let mean_c: f64 = v2_t1.iter().zip(mask_c.iter()).filter(|(_, m)| **m).map(|(v, _)| *v).sum::<f64>()
            / mask_c.iter().filter(|m| **m).count() as f64;
        let zero_outside = v2_t1.iter().zip(mask_c.iter()).filter(|(_, m)| !**m).all(|(v, _)| *v == 0.0);
        println!("  V2(T1) mean over C = {:.4}; zero outside C: {}", mean_c, zero_outside);

        let v1_0 = &solution.phases[0].slices[0];
        let mut x = vec![0.0; 2];
        let mut zero_on_a = true;
        let mut max_v1: f64 = 0.0;
        for i in 0..grid.node_count() {
            grid.coords_into(i, &mut x);
            if s.avoid.contains(&x) && v1_0[i] != 0.0 { zero_on_a = false; }
            max_v1 = max_v1.max(v1_0[i]);
        }
        println!("  V1(0) zero on A: {zero_on_a}; max V1 = {max_v1:.4}");

        let t1 = Instant::now();
        let policy = extract_policy(&problem, &solution, Lookup::NearestNode).unwrap();
        println!("  policy extraction: {:?}; bang-bang: {}", t1.elapsed(), is_bang_bang(&policy));

        // closed loop at a few nodes
        let v0field = solution.initial_field(&problem);
        let nodes: Vec<usize> = (0..grid.node_count()).filter(|&i| problem.masks[0][i] && v0field.values[i] > 0.30 && v0field.values[i] < 0.95).collect();
        let picks: Vec<usize> = (0..10).map(|i| nodes[i * (nodes.len()-1) / 9]).collect();
        let t2 = Instant::now();
        let report = closed_loop_verify(&problem, &solution, &policy, &picks, 2000, 0.02, 99).unwrap();
        println!("  closed loop (10 nodes x 2000 paths): {:?}", t2.elapsed());
        for n in &report.nodes {
            println!("    x={:?} v_pde={:.3} mc={:.3}+-{:.3} gap={:+.3}", n.coords, n.v_pde, n.p_mc, n.ci_halfwidth, n.gap);
        }
        println!("  min gap = {:+.4}", report.min_gap);
    }
}
