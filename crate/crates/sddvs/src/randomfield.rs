//! Truncated Karhunen-Loeve expansions of Gaussian-covariance random fields,
//! discretized on the mesh nodes of one region with lumped-mass weighting.
//!
//! The nodal covariance matrix C is symmetrized by the lumped mass weights W
//! (B = W^{1/2} C W^{1/2}), its spectrum is computed densely, and the modes
//! are mapped back via b_i = W^{-1/2} z_i, which makes them orthonormal in the
//! W-weighted inner product. A truncated expansion then serves as an affine
//! source term family: one constant mean term plus one term per mode driven by
//! a dedicated parameter coordinate.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::coeffspace::{CoeffExpr, CoeffError, SpaceRef};
use crate::fem::{CoeffPiece, Mesh, Spatial};

#[derive(Debug, Error)]
pub enum RandomFieldError {
    #[error("covariance spec invalid: {0}")]
    BadCovariance(String),
    #[error("requested {requested} modes but only {available} have positive variance")]
    TooManyModes { requested: usize, available: usize },
    #[error("region {region} has no elements")]
    EmptyRegion { region: usize },
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// Squared-exponential covariance kernel with per-direction correlation
/// lengths; 1D meshes use only `lx`.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceSpec {
    pub sigma: f64,
    pub lx: f64,
    pub ly: f64,
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<(), RandomFieldError> {
        if !(self.sigma > 0.0) || !(self.lx > 0.0) || !(self.ly > 0.0) {
            return Err(RandomFieldError::BadCovariance(format!(
                "sigma, lx, ly must be positive, got ({}, {}, {})",
                self.sigma, self.lx, self.ly
            )));
        }
        Ok(())
    }

    pub fn kernel(&self, p: &[f64], q: &[f64]) -> f64 {
        let dx = p[0] - q[0];
        let mut e = dx * dx / (2.0 * self.lx * self.lx);
        if p.len() > 1 {
            let dy = p[1] - q[1];
            e += dy * dy / (2.0 * self.ly * self.ly);
        }
        self.sigma * self.sigma * (-e).exp()
    }
}

/// Truncated KL expansion on the nodes of one region:
/// f(x, xi) = mean(x) + sum_i sqrt(gamma_i) b_i(x) xi_i.
#[derive(Debug, Clone)]
pub struct KLExpansion {
    pub region: usize,
    /// mesh node ids carrying the field, in ascending order
    pub nodes: Vec<usize>,
    pub mean: Vec<f64>,
    /// retained eigenvalues of the weighted covariance, nonincreasing
    pub eigenvalues: Vec<f64>,
    /// W-orthonormal modes, one nodal vector (over `nodes`) per eigenvalue
    pub modes: Vec<Vec<f64>>,
    /// full weighted trace sum_p W_p C_pp
    pub trace_total: f64,
    /// sum of the retained eigenvalues
    pub trace_captured: f64,
    pub n_mesh_nodes: usize,
}

/// Builds the KL expansion of a constant-mean field on one region of the mesh.
/// `elem_regions` is the element-region assignment from the fem layer.
pub fn build_kl(
    mesh: &Mesh,
    elem_regions: &[usize],
    region: usize,
    cov: &CovarianceSpec,
    mean: f64,
    n_modes: usize,
) -> Result<KLExpansion, RandomFieldError> {
    cov.validate()?;
    // lumped mass weights over region elements only
    let mut weight = vec![0.0; mesh.n_nodes()];
    let mut any = false;
    for e in 0..mesh.n_elems() {
        if elem_regions[e] != region {
            continue;
        }
        any = true;
        let nodes = mesh.elem_nodes(e);
        let measure = if mesh.dim == 1 {
            (mesh.node(nodes[1])[0] - mesh.node(nodes[0])[0]).abs()
        } else {
            let (_, area, _) = crate::fem::tri_geometry(mesh, e);
            area
        };
        for &n in nodes {
            weight[n] += measure / nodes.len() as f64;
        }
    }
    if !any {
        return Err(RandomFieldError::EmptyRegion { region });
    }
    let nodes: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| weight[n] > 0.0).collect();
    let m = nodes.len();
    let w: Vec<f64> = nodes.iter().map(|&n| weight[n]).collect();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();

    let b = DMatrix::from_fn(m, m, |p, q| {
        sqrt_w[p] * cov.kernel(mesh.node(nodes[p]), mesh.node(nodes[q])) * sqrt_w[q]
    });
    let trace_total = b.diagonal().sum();
    let eig = b.symmetric_eigen();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let available = order.iter().filter(|&&k| eig.eigenvalues[k] > 0.0).count();
    if n_modes > available {
        return Err(RandomFieldError::TooManyModes { requested: n_modes, available });
    }

    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut modes = Vec::with_capacity(n_modes);
    for &k in order.iter().take(n_modes) {
        eigenvalues.push(eig.eigenvalues[k]);
        let z = eig.eigenvectors.column(k);
        // fix the sign so the mode is deterministic: largest-|entry| positive
        let mut lead = 0;
        for i in 0..m {
            if z[i].abs() > z[lead].abs() {
                lead = i;
            }
        }
        let s = if z[lead] < 0.0 { -1.0 } else { 1.0 };
        modes.push((0..m).map(|i| s * z[i] / sqrt_w[i]).collect());
    }
    let trace_captured = eigenvalues.iter().sum();

    Ok(KLExpansion {
        region,
        nodes,
        mean: vec![mean; m],
        eigenvalues,
        modes,
        trace_total,
        trace_captured,
        n_mesh_nodes: mesh.n_nodes(),
    })
}

impl KLExpansion {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Fraction of the weighted covariance trace captured by the retained
    /// modes, in [0, 1].
    pub fn captured_fraction(&self) -> f64 {
        self.trace_captured / self.trace_total
    }

    /// Field realization on the region nodes for mode coordinates `z`
    /// (length `n_modes`).
    pub fn evaluate_field(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n_modes());
        let mut out = self.mean.clone();
        for (i, mode) in self.modes.iter().enumerate() {
            let s = self.eigenvalues[i].sqrt() * z[i];
            for (o, b) in out.iter_mut().zip(mode) {
                *o += s * b;
            }
        }
        out
    }

    fn scatter(&self, local: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_mesh_nodes];
        for (k, &n) in self.nodes.iter().enumerate() {
            full[n] = local[k];
        }
        full
    }

    /// The expansion as a product-form source piece: a mean term with unit
    /// coefficient plus one term per mode tied to the parameter coordinate
    /// `coord_offset + i`.
    pub fn as_affine_source(
        &self,
        space: &SpaceRef,
        coord_offset: usize,
    ) -> Result<CoeffPiece, RandomFieldError> {
        let mut terms = Vec::with_capacity(self.n_modes() + 1);
        terms.push((Spatial::Nodal(self.scatter(&self.mean)), CoeffExpr::constant(1.0)));
        for i in 0..self.n_modes() {
            let s = self.eigenvalues[i].sqrt();
            let scaled: Vec<f64> = self.modes[i].iter().map(|b| s * b).collect();
            terms.push((
                Spatial::Nodal(self.scatter(&scaled)),
                CoeffExpr::coordinate(space, coord_offset + i)?,
            ));
        }
        Ok(CoeffPiece { region: self.region, terms })
    }
}
