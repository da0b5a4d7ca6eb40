//! Builds the interface surrogate for the three-strip experiment and compares
//! its online cost and accuracy against direct interface solves and
//! monolithic solves.

use std::time::Instant;

use sddvs::coeffspace::{draw_samples, MemoCache};
use sddvs::driver::{build_offline, ExampleId, ExperimentConfig};
use sddvs::fem::solve_global;
use sddvs::linalg::{factorization_count, two_norm};
use sddvs::schur::{evaluate_interface_rom, solve_interface_direct};

fn main() {
    let cfg = ExperimentConfig::default_for(ExampleId::Ex2, false);
    let build = build_offline(&cfg).expect("offline build");
    println!(
        "surrogate: M={} terms over {} interface dofs (m_S={}, m_F={})",
        build.rom.m(),
        build.partition.n_gamma(),
        build.interface_system.m_s(),
        build.interface_system.m_f()
    );

    let test = draw_samples(&build.problem.space, 500, cfg.seed + 1);

    let before = factorization_count();
    let t = Instant::now();
    let rom_sols: Vec<Vec<f64>> = test
        .samples
        .iter()
        .map(|s| evaluate_interface_rom(&build.rom, s, &mut MemoCache::new()).unwrap())
        .collect();
    let rom_time = t.elapsed().as_secs_f64();
    assert_eq!(factorization_count(), before, "surrogate evaluation factorized a matrix");

    let t = Instant::now();
    let direct_sols: Vec<Vec<f64>> = test
        .samples
        .iter()
        .map(|s| solve_interface_direct(&build.interface_system, s).unwrap())
        .collect();
    let direct_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    for s in test.samples.iter().take(50) {
        solve_global(&build.problem.system.op, &build.problem.system.rhs, s).unwrap();
    }
    let mono_time = t.elapsed().as_secs_f64() / 50.0;

    let mut mean_err = 0.0;
    for (u, d) in rom_sols.iter().zip(&direct_sols) {
        let diff: Vec<f64> = u.iter().zip(d).map(|(a, b)| a - b).collect();
        mean_err += two_norm(&diff) / two_norm(d) / rom_sols.len() as f64;
    }

    let n = test.samples.len() as f64;
    println!("mean surrogate-vs-direct relative error: {mean_err:.3e}");
    println!("per-sample cost: surrogate {:.3e} s, direct interface {:.3e} s, monolithic {:.3e} s",
        rom_time / n, direct_time / n, mono_time);
    println!("surrogate speedup over monolithic: {:.0}x", mono_time / (rom_time / n));
}
