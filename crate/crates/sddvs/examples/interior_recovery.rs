//! Recovers full-field solutions from the interface surrogate without any
//! online factorization and compares them against monolithic solves.

use sddvs::coeffspace::{draw_samples, MemoCache};
use sddvs::driver::{build_offline, ExampleId, ExperimentConfig};
use sddvs::fem::solve_global;
use sddvs::linalg::{factorization_count, two_norm};
use sddvs::recovery::{build_separated_recovery, evaluate_recovery};

fn main() {
    let mut cfg = ExperimentConfig::default_for(ExampleId::Ex2, false);
    cfg.resolution = sddvs::driver::Resolution::TwoD { nx: 20, ny: 20 };
    let build = build_offline(&cfg).expect("offline build");

    // every subdomain of this problem has a single structural operator term,
    // so the interior response separates exactly
    let recs: Vec<_> = build
        .blocks
        .iter()
        .map(|b| build_separated_recovery(b, &build.rom).expect("separated recovery"))
        .collect();

    let test = draw_samples(&build.problem.space, 100, 5);
    let dof_map = &build.problem.system.dof_map;
    let before = factorization_count();
    let fields: Vec<Vec<f64>> = test
        .samples
        .iter()
        .map(|s| {
            evaluate_recovery(&recs, &build.rom, &build.partition, dof_map, s, &mut MemoCache::new())
                .unwrap()
                .nodal
        })
        .collect();
    assert_eq!(factorization_count(), before, "recovery factorized a matrix");

    let mut worst: f64 = 0.0;
    for (s, fast) in test.samples.iter().zip(&fields) {
        let mut cache = MemoCache::new();
        let free = solve_global(&build.problem.system.op, &build.problem.system.rhs, s).unwrap();
        let reference = dof_map.full_field(&free, s, &mut cache).unwrap();
        let diff: Vec<f64> = fast.iter().zip(&reference).map(|(a, b)| a - b).collect();
        worst = worst.max(two_norm(&diff) / two_norm(&reference));
    }
    println!(
        "full-field recovery over {} samples, zero online factorizations",
        test.samples.len()
    );
    println!("worst relative full-field error: {worst:.3e}");
}
