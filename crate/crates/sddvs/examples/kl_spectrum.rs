//! Prints the truncated Karhunen-Loeve spectrum of the two random source
//! fields of the third experiment and their captured covariance energy.

use sddvs::experiments::example3;

fn main() {
    let problem = example3(20, 20, 16).expect("build problem");
    for kl in &problem.kl {
        println!(
            "region {}: {} modes over {} mesh nodes, captured energy {:.4}%",
            kl.region,
            kl.n_modes(),
            kl.n_mesh_nodes,
            100.0 * kl.captured_fraction()
        );
        for (i, g) in kl.eigenvalues.iter().enumerate() {
            println!("  gamma_{:2} = {:.6e}", i + 1, g);
        }
    }
    println!(
        "smoother field (region 0) concentrates energy in fewer modes than the rougher one: {:.4} vs {:.4}",
        problem.kl[0].captured_fraction(),
        problem.kl[1].captured_fraction()
    );
}
