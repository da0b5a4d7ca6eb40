//! Builds a separated representation of a small affine stochastic system and
//! prints the greedy residual history and a fresh-sample accuracy check.

use sddvs::coeffspace::{draw_samples, CoeffExpr, Distribution, MemoCache, ParameterSpace};
use sddvs::fem::{AffineOperator, AffineVector, OpTerm, VecTerm};
use sddvs::linalg::{two_norm, TripletBuffer};
use sddvs::vscore::{evaluate_solution, solve_vs, VsConfig};

fn main() {
    // A(xi) = A0 + xi1 A1 + xi2 A2 on a 1D Laplacian-like stencil
    let n = 50;
    let space = ParameterSpace::iid(Distribution::Uniform { lo: 0.5, hi: 2.0 }, 2, "xi")
        .expect("valid space");

    let lap = |scale: f64, lo: usize, hi: usize| {
        let mut t = TripletBuffer::new(n, n);
        for i in lo..hi {
            t.push(i, i, 2.0 * scale);
            if i > 0 {
                t.push(i, i - 1, -scale);
            }
            if i + 1 < n {
                t.push(i, i + 1, -scale);
            }
        }
        t.finalize()
    };

    let terms = vec![
        OpTerm { coeff: CoeffExpr::constant(1.0), matrix: lap(1.0, 0, n), region: None },
        OpTerm {
            coeff: CoeffExpr::coordinate(&space, 0).unwrap(),
            matrix: lap(3.0, 0, n / 2),
            region: None,
        },
        OpTerm {
            coeff: CoeffExpr::coordinate(&space, 1).unwrap(),
            matrix: lap(3.0, n / 2, n),
            region: None,
        },
    ];
    let op = AffineOperator::new(n, n, terms);
    let rhs = AffineVector {
        n,
        terms: vec![VecTerm {
            coeff: CoeffExpr::constant(1.0),
            vector: vec![1.0; n],
            region: None,
        }],
    };

    let cfg = VsConfig {
        tolerance: 1e-8,
        max_terms: 15,
        training: draw_samples(&space, 50, 7),
    };
    let sol = solve_vs(&op, &rhs, &cfg).expect("greedy build");

    println!("greedy build: {} terms", sol.n_terms());
    for (k, r) in sol.residual_history.iter().enumerate() {
        println!("  step {:2}: snapshot residual {:.3e}", k + 1, r);
    }

    // accuracy on samples the build never saw
    let fresh = draw_samples(&space, 200, 99);
    let mut worst: f64 = 0.0;
    let mut mean = 0.0;
    for s in &fresh.samples {
        let mut cache = MemoCache::new();
        let u = evaluate_solution(&sol, s, &mut cache).unwrap();
        let a = op.assemble_at(s, &mut cache).unwrap();
        let f = rhs.assemble_at(s, &mut cache).unwrap();
        let exact = sddvs::linalg::solve(&a, &f).unwrap();
        let diff: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let rel = two_norm(&diff) / two_norm(&exact);
        worst = worst.max(rel);
        mean += rel / fresh.samples.len() as f64;
    }
    println!("fresh-sample relative error: mean {mean:.3e}, worst {worst:.3e}");
}
