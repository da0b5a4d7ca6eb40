//! Runs the complete offline/online pipeline for the 1D two-material
//! experiment and prints the report summary. Output files land in
//! `out/full_pipeline/`.

use std::path::Path;

use sddvs::driver::{run_experiment, ExampleId, ExperimentConfig};

fn main() {
    let cfg = ExperimentConfig::default_for(ExampleId::Ex1, false);
    let out = Path::new("out/full_pipeline");
    let report = run_experiment(&cfg, out).expect("pipeline run");

    println!("interface dofs: {}", report.n_gamma);
    for s in &report.subdomains {
        println!(
            "subdomain {}: m_a={}, m_b={}, N_S={}, N_F={}",
            s.region, s.m_a, s.m_b, s.n_s, s.n_f
        );
    }
    println!(
        "merged terms: m_S={} (bound {}), m_F={} (bound {}), surrogate M={}",
        report.m_s, report.m_s_bound, report.m_f, report.m_f_bound, report.m
    );
    if let Some(e) = &report.interface_error {
        println!(
            "relative mean error over {} test samples: {:.3e}",
            e.n_samples, e.mean_relative
        );
    }
    println!("epsilon vs M:");
    for (m, eps) in &report.eps_vs_m {
        println!("  M={m}: {eps:.3e}");
    }
    println!("emitted files:");
    for f in &report.files {
        println!("  {} ({})", f.name, &f.sha256[..12]);
    }
}
