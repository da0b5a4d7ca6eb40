//! Non-overlapping partition of the free dofs into per-subdomain interiors and
//! a shared interface, plus extraction of the per-subdomain affine blocks that
//! feed the Schur complement construction.
//!
//! A free dof lies on the interface when its supporting elements span at least
//! two regions; everything else is interior to its unique region. Operator and
//! load terms carry the region they were assembled on, so each block family is
//! attributed to exactly one subdomain and the lifted sum over subdomains
//! reproduces the global operator without double counting interface entries.

use thiserror::Error;

use crate::coeffspace::CoeffExpr;
use crate::fem::{AffineOperator, AffineVector, AssembledSystem, OpTerm};
use crate::linalg::{SparseMatrix, TripletBuffer};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("subdomain index {index} out of range for {count} regions")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("operator or load term carries no region tag; cannot attribute it to a subdomain")]
    UntaggedTerm,
    #[error("free dof {dof} is supported by no element")]
    OrphanDof { dof: usize },
}

/// Interior/interface split of the free dofs. All index lists are ascending
/// in the free-dof numbering, which itself follows global node order.
#[derive(Debug)]
pub struct Partition {
    pub n_regions: usize,
    pub n_free: usize,
    /// free-dof ids interior to each region
    pub interiors: Vec<Vec<usize>>,
    /// free-dof ids on the interface, shared between >= 2 regions
    pub interface: Vec<usize>,
    /// per region: positions into `interface` of the dofs this region touches
    pub traces: Vec<Vec<usize>>,
}

impl Partition {
    pub fn n_gamma(&self) -> usize {
        self.interface.len()
    }

    /// The 0/1 restriction matrix R_i, shape |Gamma_i| x |Gamma|.
    pub fn restriction(&self, i: usize) -> Result<SparseMatrix, PartitionError> {
        let trace = self
            .traces
            .get(i)
            .ok_or(PartitionError::IndexOutOfRange { index: i, count: self.n_regions })?;
        let mut t = TripletBuffer::new(trace.len(), self.interface.len());
        for (local, &global) in trace.iter().enumerate() {
            t.push(local, global, 1.0);
        }
        Ok(t.finalize())
    }
}

/// Classifies the free dofs of an assembled system into per-region interiors
/// and the shared interface.
pub fn partition_mesh(sys: &AssembledSystem) -> Result<Partition, PartitionError> {
    let n_regions = sys.elem_regions.iter().copied().max().map_or(1, |m| m + 1);
    let n_free = sys.dof_map.n_free();

    // regions touching each free dof, as a small bitmask (strip layouts have
    // few regions; the experiments use at most 3)
    let mut touch = vec![0u64; n_free];
    for e in 0..sys.mesh.n_elems() {
        let r = sys.elem_regions[e];
        for &node in sys.mesh.elem_nodes(e) {
            if let Some(f) = sys.dof_map.node_to_free[node] {
                touch[f] |= 1 << r;
            }
        }
    }

    let mut interiors = vec![Vec::new(); n_regions];
    let mut interface = Vec::new();
    for f in 0..n_free {
        match touch[f].count_ones() {
            0 => return Err(PartitionError::OrphanDof { dof: f }),
            1 => interiors[touch[f].trailing_zeros() as usize].push(f),
            _ => interface.push(f),
        }
    }
    let traces = (0..n_regions)
        .map(|r| {
            interface
                .iter()
                .enumerate()
                .filter(|&(_, &f)| touch[f] & (1 << r) != 0)
                .map(|(g, _)| g)
                .collect()
        })
        .collect();

    Ok(Partition { n_regions, n_free, interiors, interface, traces })
}

/// The affine block families of one subdomain. All four operator families
/// share one coefficient list; `a_ii` is wrapped as an operator so repeated
/// per-sample assembly reuses a cached union pattern.
pub struct SubdomainBlocks {
    pub region: usize,
    /// free-dof ids of the interior
    pub interior: Vec<usize>,
    /// local trace index -> position in the global interface list
    pub trace_to_global: Vec<usize>,
    pub op_coeffs: Vec<CoeffExpr>,
    pub a_ii: AffineOperator,
    pub a_ig: Vec<SparseMatrix>,
    pub a_gi: Vec<SparseMatrix>,
    pub a_gg: Vec<SparseMatrix>,
    pub rhs_coeffs: Vec<CoeffExpr>,
    pub f_i: Vec<Vec<f64>>,
    pub f_g: Vec<Vec<f64>>,
}

impl SubdomainBlocks {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_trace(&self) -> usize {
        self.trace_to_global.len()
    }

    pub fn m_a(&self) -> usize {
        self.op_coeffs.len()
    }

    pub fn m_b(&self) -> usize {
        self.rhs_coeffs.len()
    }

    /// R_i u_gamma: the local trace slice of a global interface vector.
    pub fn restrict_interface(&self, u_gamma: &[f64]) -> Vec<f64> {
        self.trace_to_global.iter().map(|&g| u_gamma[g]).collect()
    }
}

/// Extracts the subdomain-i blocks of the region-tagged affine system.
/// Terms tagged with other regions do not contribute; terms whose four blocks
/// are all zero are dropped.
pub fn extract_blocks(
    op: &AffineOperator,
    rhs: &AffineVector,
    part: &Partition,
    i: usize,
) -> Result<SubdomainBlocks, PartitionError> {
    if i >= part.n_regions {
        return Err(PartitionError::IndexOutOfRange { index: i, count: part.n_regions });
    }
    let interior = part.interiors[i].clone();
    let trace_to_global = part.traces[i].clone();
    let ni = interior.len();
    let ng = trace_to_global.len();

    let mut interior_pos = vec![None; part.n_free];
    for (k, &f) in interior.iter().enumerate() {
        interior_pos[f] = Some(k);
    }
    let mut trace_pos = vec![None; part.n_free];
    for (k, &g) in trace_to_global.iter().enumerate() {
        trace_pos[part.interface[g]] = Some(k);
    }

    let mut op_coeffs = Vec::new();
    let mut ii_terms = Vec::new();
    let mut a_ig = Vec::new();
    let mut a_gi = Vec::new();
    let mut a_gg = Vec::new();
    for term in &op.terms {
        let region = term.region.ok_or(PartitionError::UntaggedTerm)?;
        if region != i {
            continue;
        }
        let b_ii = term.matrix.restrict(&interior_pos, ni, &interior_pos, ni);
        let b_ig = term.matrix.restrict(&interior_pos, ni, &trace_pos, ng);
        let b_gi = term.matrix.restrict(&trace_pos, ng, &interior_pos, ni);
        let b_gg = term.matrix.restrict(&trace_pos, ng, &trace_pos, ng);
        if b_ii.is_zero() && b_ig.is_zero() && b_gi.is_zero() && b_gg.is_zero() {
            continue;
        }
        op_coeffs.push(term.coeff.clone());
        ii_terms.push(OpTerm { coeff: term.coeff.clone(), matrix: b_ii, region: Some(i) });
        a_ig.push(b_ig);
        a_gi.push(b_gi);
        a_gg.push(b_gg);
    }

    let mut rhs_coeffs = Vec::new();
    let mut f_i = Vec::new();
    let mut f_g = Vec::new();
    for term in &rhs.terms {
        let region = term.region.ok_or(PartitionError::UntaggedTerm)?;
        if region != i {
            continue;
        }
        let vi: Vec<f64> = interior.iter().map(|&f| term.vector[f]).collect();
        let vg: Vec<f64> =
            trace_to_global.iter().map(|&g| term.vector[part.interface[g]]).collect();
        if vi.iter().all(|x| *x == 0.0) && vg.iter().all(|x| *x == 0.0) {
            continue;
        }
        rhs_coeffs.push(term.coeff.clone());
        f_i.push(vi);
        f_g.push(vg);
    }

    Ok(SubdomainBlocks {
        region: i,
        interior,
        trace_to_global,
        op_coeffs,
        a_ii: AffineOperator::new(ni, ni, ii_terms),
        a_ig,
        a_gi,
        a_gg,
        rhs_coeffs,
        f_i,
        f_g,
    })
}
