//! Interior reconstruction from an interface solution.
//!
//! The general path assembles and factorizes each interior block per sample.
//! When a subdomain operator has a single structural term (all coefficients
//! share one base expression up to constant factors), the interior response
//! separates exactly: factor once offline, precompute one vector per source
//! term and per interface surrogate term, and the online evaluation is a
//! weighted vector sum with no factorization at all.

use thiserror::Error;

use crate::coeffspace::{evaluate, quotient, CoeffError, CoeffExpr, MemoCache};
use crate::fem::DofMap;
use crate::linalg::{axpy, factorize, LinalgError};
use crate::partition::{Partition, SubdomainBlocks};
use crate::schur::InterfaceROM;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("subdomain {region} operator does not reduce to a single structural term")]
    NotSingleTerm { region: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

// assembly can only fail through these two variants
fn fem_err(e: crate::fem::FemError) -> RecoveryError {
    match e {
        crate::fem::FemError::Linalg(l) => RecoveryError::Linalg(l),
        crate::fem::FemError::Coeff(c) => RecoveryError::Coeff(c),
        other => unreachable!("unexpected assembly error: {other}"),
    }
}

/// Direct interior solve A_II(xi) u_I = f_I(xi) - A_IG(xi) u_G for one
/// subdomain, given the interface values restricted to its trace.
pub fn recover_interior(
    blocks: &SubdomainBlocks,
    u_trace: &[f64],
    xi: &[f64],
    cache: &mut MemoCache,
) -> Result<Vec<f64>, RecoveryError> {
    let mut rhs = vec![0.0; blocks.n_interior()];
    for (j, coeff) in blocks.rhs_coeffs.iter().enumerate() {
        axpy(evaluate(coeff, xi, cache)?, &blocks.f_i[j], &mut rhs);
    }
    for (j, coeff) in blocks.op_coeffs.iter().enumerate() {
        let w = evaluate(coeff, xi, cache)?;
        let mut v = vec![0.0; blocks.n_interior()];
        blocks.a_ig[j].spmv_into(u_trace, &mut v, 1.0);
        axpy(-w, &v, &mut rhs);
    }
    let a = blocks.a_ii.assemble_at(xi, cache).map_err(fem_err)?;
    Ok(factorize(&a)?.solve(&rhs)?)
}

/// Factorization-free interior evaluation data for one subdomain:
/// u_I(xi) = sum_j (q_j / p)(xi) fhat_j - sum_i zeta_i(xi) chat_i.
pub struct SubdomainRecovery {
    pub region: usize,
    /// global free-dof ids of the interior, in local order
    pub interior: Vec<usize>,
    /// (q_j / p, fhat_j) with fhat_j = Ahat^{-1} f_I_j
    pub source_terms: Vec<(CoeffExpr, Vec<f64>)>,
    /// one precomputed column per interface surrogate term, weighted online
    /// by the surrogate's own zeta_i and subtracted
    pub rom_cols: Vec<Vec<f64>>,
}

/// The base expression and per-term scales if every operator coefficient is a
/// constant multiple of the same expression.
fn single_base(coeffs: &[CoeffExpr]) -> Option<(CoeffExpr, Vec<f64>)> {
    let (s0, base) = coeffs[0].split_constant();
    let hash = base.structural_hash();
    let mut scales = vec![s0];
    for c in &coeffs[1..] {
        let (s, b) = c.split_constant();
        if b.structural_hash() != hash {
            return None;
        }
        scales.push(s);
    }
    Some((base, scales))
}

/// Precomputes the separated interior recovery for one subdomain. Fails if
/// the operator block is not a single structural term up to scalars.
pub fn build_separated_recovery(
    blocks: &SubdomainBlocks,
    rom: &InterfaceROM,
) -> Result<SubdomainRecovery, RecoveryError> {
    let (base, scales) = single_base(&blocks.op_coeffs)
        .ok_or(RecoveryError::NotSingleTerm { region: blocks.region })?;
    let ni = blocks.n_interior();

    // Ahat = sum_j scale_j A_II_j, and likewise for the coupling block
    let mut combined = crate::linalg::TripletBuffer::new(ni, ni);
    for (j, term) in blocks.a_ii.terms.iter().enumerate() {
        for r in 0..ni {
            for (c, v) in term.matrix.row(r) {
                combined.push(r, c, scales[j] * v);
            }
        }
    }
    let fact = factorize(&combined.finalize())?;

    let mut source_terms = Vec::new();
    for (j, coeff) in blocks.rhs_coeffs.iter().enumerate() {
        if blocks.f_i[j].iter().all(|v| *v == 0.0) {
            continue;
        }
        let fhat = fact.solve(&blocks.f_i[j])?;
        source_terms.push((quotient(coeff, &base)?, fhat));
    }

    let mut rom_cols = Vec::with_capacity(rom.sol.n_terms());
    for (_, c) in &rom.sol.terms {
        let trace = blocks.restrict_interface(c);
        let mut rhs = vec![0.0; ni];
        for (j, m) in blocks.a_ig.iter().enumerate() {
            m.spmv_into(&trace, &mut rhs, scales[j]);
        }
        rom_cols.push(fact.solve(&rhs)?);
    }

    Ok(SubdomainRecovery {
        region: blocks.region,
        interior: blocks.interior.clone(),
        source_terms,
        rom_cols,
    })
}

/// Full-field solution on mesh nodes, Dirichlet values included.
pub struct FullFieldSolution {
    pub nodal: Vec<f64>,
}

/// Evaluates interface surrogate plus separated interiors and scatters the
/// result to mesh nodes through the dof map. No factorization happens here.
pub fn evaluate_recovery(
    recoveries: &[SubdomainRecovery],
    rom: &InterfaceROM,
    part: &Partition,
    dof_map: &DofMap,
    xi: &[f64],
    cache: &mut MemoCache,
) -> Result<FullFieldSolution, RecoveryError> {
    let zeta: Vec<f64> = rom
        .sol
        .terms
        .iter()
        .map(|(z, _)| evaluate(z, xi, cache))
        .collect::<Result<_, _>>()?;

    let mut free = vec![0.0; part.n_free];
    for (g, &f) in part.interface.iter().enumerate() {
        let mut v = 0.0;
        for (i, (_, c)) in rom.sol.terms.iter().enumerate() {
            v += zeta[i] * c[g];
        }
        free[f] = v;
    }
    for rec in recoveries {
        let mut u = vec![0.0; rec.interior.len()];
        for (coeff, fhat) in &rec.source_terms {
            axpy(evaluate(coeff, xi, cache)?, fhat, &mut u);
        }
        for (i, col) in rec.rom_cols.iter().enumerate() {
            axpy(-zeta[i], col, &mut u);
        }
        for (k, &f) in rec.interior.iter().enumerate() {
            free[f] = u[k];
        }
    }
    let nodal = dof_map.full_field(&free, xi, cache).map_err(fem_err)?;
    Ok(FullFieldSolution { nodal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffspace::draw_samples;
    use crate::experiments::{example1, example2, Problem};
    use crate::linalg::{factorization_count, two_norm};
    use crate::partition::{extract_blocks, partition_mesh};
    use crate::schur::{assemble_global, build_contribution, build_interface_rom, InterfaceROM};
    use crate::vscore::VsConfig;

    fn offline(
        p: &Problem,
        seed: u64,
        m: usize,
    ) -> (Partition, Vec<SubdomainBlocks>, InterfaceROM) {
        let part = partition_mesh(&p.system).unwrap();
        let cfg = |s| VsConfig {
            tolerance: 1e-10,
            max_terms: 12,
            training: draw_samples(&p.space, 20, s),
        };
        let blocks: Vec<SubdomainBlocks> = (0..part.n_regions)
            .map(|i| extract_blocks(&p.system.op, &p.system.rhs, &part, i).unwrap())
            .collect();
        let contribs: Vec<_> = blocks
            .iter()
            .map(|b| build_contribution(b, &cfg(seed), &cfg(seed + 1)).unwrap())
            .collect();
        let sys = assemble_global(&contribs, &part).unwrap();
        let rom = build_interface_rom(
            &sys,
            &VsConfig { tolerance: 1e-12, max_terms: m, training: draw_samples(&p.space, 30, seed + 2) },
        )
        .unwrap();
        (part, blocks, rom)
    }

    #[test]
    fn separated_recovery_matches_direct_interior_solve() {
        let p = example2(10, 10).unwrap();
        let (part, blocks, rom) = offline(&p, 5, 10);
        let recs: Vec<_> =
            blocks.iter().map(|b| build_separated_recovery(b, &rom).unwrap()).collect();
        let probes = draw_samples(&p.space, 10, 9);
        for s in &probes.samples {
            let mut cache = MemoCache::new();
            let full =
                evaluate_recovery(&recs, &rom, &part, &p.system.dof_map, s, &mut cache).unwrap();
            let u_gamma =
                crate::schur::evaluate_interface_rom(&rom, s, &mut cache).unwrap();
            for b in &blocks {
                let trace = b.restrict_interface(&u_gamma);
                let direct = recover_interior(b, &trace, s, &mut cache).unwrap();
                let got: Vec<f64> = b
                    .interior
                    .iter()
                    .map(|&f| {
                        let node = p.system.dof_map.free[f];
                        full.nodal[node]
                    })
                    .collect();
                let diff: Vec<f64> =
                    got.iter().zip(&direct).map(|(a, b)| a - b).collect();
                assert!(
                    two_norm(&diff) <= 1e-10 * two_norm(&direct).max(1e-300),
                    "region {}",
                    b.region
                );
            }
        }
    }

    #[test]
    fn online_evaluation_performs_no_factorization() {
        let p = example2(10, 10).unwrap();
        let (part, blocks, rom) = offline(&p, 15, 10);
        let recs: Vec<_> =
            blocks.iter().map(|b| build_separated_recovery(b, &rom).unwrap()).collect();
        let probes = draw_samples(&p.space, 5, 19);
        let before = factorization_count();
        for s in &probes.samples {
            let mut cache = MemoCache::new();
            evaluate_recovery(&recs, &rom, &part, &p.system.dof_map, s, &mut cache).unwrap();
        }
        assert_eq!(factorization_count(), before);
    }

    #[test]
    fn recovery_with_exact_interface_matches_monolithic() {
        // feed the interface values of the monolithic solve through the
        // direct interior recovery: the stitched field must match everywhere
        let p = example2(10, 10).unwrap();
        let part = partition_mesh(&p.system).unwrap();
        let blocks: Vec<SubdomainBlocks> = (0..part.n_regions)
            .map(|i| extract_blocks(&p.system.op, &p.system.rhs, &part, i).unwrap())
            .collect();
        let probes = draw_samples(&p.space, 5, 29);
        for s in &probes.samples {
            let mut cache = MemoCache::new();
            let full = crate::fem::solve_global(&p.system.op, &p.system.rhs, s).unwrap();
            let u_gamma: Vec<f64> = part.interface.iter().map(|&f| full[f]).collect();
            for b in &blocks {
                let trace = b.restrict_interface(&u_gamma);
                let interior = recover_interior(b, &trace, s, &mut cache).unwrap();
                for (k, &f) in b.interior.iter().enumerate() {
                    assert!(
                        (interior[k] - full[f]).abs() <= 1e-9 * two_norm(&full),
                        "region {} dof {}",
                        b.region,
                        f
                    );
                }
            }
        }
    }

    #[test]
    fn multi_term_operator_rejected_by_fast_path() {
        let p = example1(24).unwrap();
        let (_, blocks, rom) = offline(&p, 35, 5);
        // subdomain 0 carries the random coefficient alongside a constant term
        assert!(matches!(
            build_separated_recovery(&blocks[0], &rom),
            Err(RecoveryError::NotSingleTerm { region: 0 })
        ));
    }
}
