//! Meshes and linear finite-element assembly producing affine-parametric
//! operators, plus the monolithic reference solver over the whole domain.
//!
//! Coefficients are declared in product form: each piece lives on one declared
//! region and is a finite sum of (spatial factor) x (stochastic coefficient)
//! products. One operator or load term is emitted per product, tagged with its
//! region so the domain partition can attribute it to a subdomain later.

use std::sync::Arc;

use thiserror::Error;

use crate::coeffspace::{evaluate, product, CoeffError, CoeffExpr, MemoCache};
use crate::linalg::{LinalgError, PatternCell, SparseMatrix, TripletBuffer, UnionPattern};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("bad mesh spec: {0}")]
    BadMeshSpec(String),
    #[error("element {elem} matched by more than one region")]
    RegionOverlap { elem: usize },
    #[error("element {elem} matched by no region")]
    RegionGap { elem: usize },
    #[error("coefficient piece is not in product form: {0}")]
    NonProductCoefficient(String),
    #[error("node {node} constrained by more than one Dirichlet entry")]
    ConflictingDirichlet { node: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

#[derive(Debug, Clone)]
pub enum MeshSpec {
    Interval1D { a: f64, b: f64, n_elems: usize },
    StructuredTri2D { x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize },
}

/// A 1D interval mesh or a structured triangulation (each cell split into two
/// triangles along the same diagonal), with boundary tags.
#[derive(Debug)]
pub struct Mesh {
    pub dim: usize,
    coords: Vec<[f64; 2]>,
    /// 1D elements as node pairs
    pub lines: Vec<[usize; 2]>,
    /// 2D elements as node triples (counterclockwise)
    pub tris: Vec<[usize; 3]>,
    pub is_boundary: Vec<bool>,
    /// boundary edges with the owning element index (2D only)
    pub boundary_edges: Vec<([usize; 2], usize)>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        if self.dim == 1 {
            self.lines.len()
        } else {
            self.tris.len()
        }
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i][..self.dim]
    }

    pub fn elem_nodes(&self, e: usize) -> &[usize] {
        if self.dim == 1 {
            &self.lines[e]
        } else {
            &self.tris[e]
        }
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let nodes = self.elem_nodes(e);
        let mut c = [0.0, 0.0];
        for &n in nodes {
            c[0] += self.coords[n][0];
            c[1] += self.coords[n][1];
        }
        let k = nodes.len() as f64;
        [c[0] / k, c[1] / k]
    }
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh, FemError> {
    match *spec {
        MeshSpec::Interval1D { a, b, n_elems } => {
            if n_elems < 2 || !(a < b) {
                return Err(FemError::BadMeshSpec(format!(
                    "interval [{a}, {b}] with {n_elems} elements"
                )));
            }
            let h = (b - a) / n_elems as f64;
            let coords: Vec<[f64; 2]> =
                (0..=n_elems).map(|i| [a + h * i as f64, 0.0]).collect();
            let lines = (0..n_elems).map(|i| [i, i + 1]).collect();
            let mut is_boundary = vec![false; n_elems + 1];
            is_boundary[0] = true;
            is_boundary[n_elems] = true;
            Ok(Mesh { dim: 1, coords, lines, tris: Vec::new(), is_boundary, boundary_edges: Vec::new() })
        }
        MeshSpec::StructuredTri2D { x_range: (x0, x1), y_range: (y0, y1), nx, ny } => {
            if nx < 2 || ny < 2 || !(x0 < x1) || !(y0 < y1) {
                return Err(FemError::BadMeshSpec(format!(
                    "grid [{x0},{x1}]x[{y0},{y1}] with {nx}x{ny} cells"
                )));
            }
            let hx = (x1 - x0) / nx as f64;
            let hy = (y1 - y0) / ny as f64;
            let idx = |i: usize, j: usize| j * (nx + 1) + i;
            let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
            for j in 0..=ny {
                for i in 0..=nx {
                    coords.push([x0 + hx * i as f64, y0 + hy * j as f64]);
                }
            }
            let mut tris = Vec::with_capacity(2 * nx * ny);
            let mut boundary_edges = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                    let t0 = tris.len();
                    tris.push([a, b, c]);
                    tris.push([a, c, d]);
                    if j == 0 {
                        boundary_edges.push(([a, b], t0));
                    }
                    if j == ny - 1 {
                        boundary_edges.push(([c, d], t0 + 1));
                    }
                    if i == 0 {
                        boundary_edges.push(([d, a], t0 + 1));
                    }
                    if i == nx - 1 {
                        boundary_edges.push(([b, c], t0));
                    }
                }
            }
            let mut is_boundary = vec![false; coords.len()];
            for j in 0..=ny {
                for i in 0..=nx {
                    if i == 0 || i == nx || j == 0 || j == ny {
                        is_boundary[idx(i, j)] = true;
                    }
                }
            }
            Ok(Mesh { dim: 2, coords, lines: Vec::new(), tris, is_boundary, boundary_edges })
        }
    }
}

pub type RegionPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type NodePredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type SpatialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VelocityFn = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;

/// The declared subdomains, shared between assembly and partitioning.
/// Elements are assigned by centroid; each centroid must match exactly one
/// predicate.
#[derive(Clone)]
pub struct Regions(pub Vec<RegionPredicate>);

impl Regions {
    pub fn whole_domain() -> Regions {
        Regions(vec![Arc::new(|_: &[f64]| true)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Assigns each element to the unique region containing its centroid.
pub fn assign_elements(mesh: &Mesh, regions: &Regions) -> Result<Vec<usize>, FemError> {
    let mut out = Vec::with_capacity(mesh.n_elems());
    for e in 0..mesh.n_elems() {
        let c = mesh.centroid(e);
        let c = &c[..mesh.dim];
        let mut hit = None;
        for (r, pred) in regions.0.iter().enumerate() {
            if pred(c) {
                if hit.is_some() {
                    return Err(FemError::RegionOverlap { elem: e });
                }
                hit = Some(r);
            }
        }
        out.push(hit.ok_or(FemError::RegionGap { elem: e })?);
    }
    Ok(out)
}

/// Spatial factor of a product-form coefficient: a closure over coordinates
/// or values interpolated at the mesh nodes.
#[derive(Clone)]
pub enum Spatial {
    Analytic(SpatialFn),
    Nodal(Vec<f64>),
}

impl Spatial {
    pub fn constant(c: f64) -> Spatial {
        Spatial::Analytic(Arc::new(move |_| c))
    }

    fn at_node(&self, mesh: &Mesh, node: usize) -> f64 {
        match self {
            Spatial::Analytic(f) => f(mesh.node(node)),
            Spatial::Nodal(v) => v[node],
        }
    }

    /// Value at an element centroid; nodal data uses its linear interpolant.
    fn at_centroid(&self, mesh: &Mesh, e: usize) -> f64 {
        match self {
            Spatial::Analytic(f) => {
                let c = mesh.centroid(e);
                f(&c[..mesh.dim])
            }
            Spatial::Nodal(v) => {
                let nodes = mesh.elem_nodes(e);
                nodes.iter().map(|&n| v[n]).sum::<f64>() / nodes.len() as f64
            }
        }
    }
}

pub struct CoeffPiece {
    pub region: usize,
    pub terms: Vec<(Spatial, CoeffExpr)>,
}

/// Scalar coefficient field in separated product form, one piece per region.
pub struct CoefficientField {
    pub pieces: Vec<CoeffPiece>,
}

pub struct VelocityPiece {
    pub region: usize,
    pub terms: Vec<(VelocityFn, CoeffExpr)>,
}

pub struct VelocityField {
    pub pieces: Vec<VelocityPiece>,
}

pub struct NeumannFlux {
    /// matched against the edge midpoint
    pub selector: NodePredicate,
    pub spatial: SpatialFn,
    pub coeff: CoeffExpr,
}

pub struct BoundarySpec {
    pub dirichlet: Vec<(NodePredicate, CoeffExpr)>,
    pub neumann: Vec<NeumannFlux>,
}

impl BoundarySpec {
    pub fn natural() -> BoundarySpec {
        BoundarySpec { dirichlet: Vec::new(), neumann: Vec::new() }
    }

    pub fn homogeneous_dirichlet() -> BoundarySpec {
        BoundarySpec {
            dirichlet: vec![(Arc::new(|_: &[f64]| true), CoeffExpr::constant(0.0))],
            neumann: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpTerm {
    pub coeff: CoeffExpr,
    pub matrix: SparseMatrix,
    pub region: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct VecTerm {
    pub coeff: CoeffExpr,
    pub vector: Vec<f64>,
    pub region: Option<usize>,
}

/// Affine-parametric operator: sum over terms of coeff(xi) * matrix.
#[derive(Debug)]
pub struct AffineOperator {
    pub n_rows: usize,
    pub n_cols: usize,
    pub terms: Vec<OpTerm>,
    pattern: PatternCell,
}

impl AffineOperator {
    pub fn new(n_rows: usize, n_cols: usize, terms: Vec<OpTerm>) -> AffineOperator {
        AffineOperator { n_rows, n_cols, terms, pattern: PatternCell::new() }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    fn pattern(&self) -> &UnionPattern {
        self.pattern.get_or_init(|| {
            let mats: Vec<&SparseMatrix> = self.terms.iter().map(|t| &t.matrix).collect();
            UnionPattern::build(&mats)
        })
    }

    /// Sum of coeff_k(xi) * A_k as one sparse matrix.
    pub fn assemble_at(&self, xi: &[f64], cache: &mut MemoCache) -> Result<SparseMatrix, FemError> {
        let mats: Vec<&SparseMatrix> = self.terms.iter().map(|t| &t.matrix).collect();
        let mut weights = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            weights.push(evaluate(&t.coeff, xi, cache)?);
        }
        Ok(self.pattern().assemble(&mats, &weights))
    }
}

/// Affine-parametric right-hand side: sum over terms of coeff(xi) * vector.
#[derive(Debug)]
pub struct AffineVector {
    pub n: usize,
    pub terms: Vec<VecTerm>,
}

impl AffineVector {
    pub fn assemble_at(&self, xi: &[f64], cache: &mut MemoCache) -> Result<Vec<f64>, FemError> {
        let mut out = vec![0.0; self.n];
        for t in &self.terms {
            let w = evaluate(&t.coeff, xi, cache)?;
            crate::linalg::axpy(w, &t.vector, &mut out);
        }
        Ok(out)
    }
}

/// Node-to-free-dof bookkeeping after Dirichlet elimination.
#[derive(Debug)]
pub struct DofMap {
    pub n_nodes: usize,
    pub free: Vec<usize>,
    pub node_to_free: Vec<Option<usize>>,
    pub dirichlet: Vec<(usize, CoeffExpr)>,
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Scatters a free-dof vector back to all mesh nodes, inserting the
    /// Dirichlet boundary values exactly.
    pub fn full_field(
        &self,
        free_values: &[f64],
        xi: &[f64],
        cache: &mut MemoCache,
    ) -> Result<Vec<f64>, FemError> {
        let mut out = vec![0.0; self.n_nodes];
        for (k, &node) in self.free.iter().enumerate() {
            out[node] = free_values[k];
        }
        for (node, expr) in &self.dirichlet {
            out[*node] = evaluate(expr, xi, cache)?;
        }
        Ok(out)
    }
}

/// The assembled affine system over free dofs, with the mesh, the dof map and
/// the element-region assignment needed downstream.
pub struct AssembledSystem {
    pub mesh: Arc<Mesh>,
    pub op: AffineOperator,
    pub rhs: AffineVector,
    pub dof_map: DofMap,
    pub elem_regions: Vec<usize>,
}

fn element_stiffness_1d(mesh: &Mesh, e: usize, g: &Spatial) -> ([usize; 2], [[f64; 2]; 2]) {
    let [i0, i1] = mesh.lines[e];
    let h = mesh.coords[i1][0] - mesh.coords[i0][0];
    let gm = g.at_centroid(mesh, e);
    let k = gm / h;
    ([i0, i1], [[k, -k], [-k, k]])
}

pub(crate) fn tri_geometry(mesh: &Mesh, e: usize) -> ([usize; 3], f64, [[f64; 2]; 3]) {
    let nodes = mesh.tris[e];
    let p: Vec<[f64; 2]> = nodes.iter().map(|&n| mesh.coords[n]).collect();
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = det / 2.0;
    // gradients of the barycentric basis functions
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        grads[i][0] = (p[j][1] - p[k][1]) / det;
        grads[i][1] = (p[k][0] - p[j][0]) / det;
    }
    (nodes, area, grads)
}

/// Assembles the affine operator and right-hand side for a diffusion (or
/// convection-diffusion) problem with product-form coefficients. Dirichlet
/// rows and columns are eliminated with the lifting folded into vector terms.
pub fn assemble_affine(
    mesh: &Arc<Mesh>,
    regions: &Regions,
    diffusion: &CoefficientField,
    velocity: Option<&VelocityField>,
    source: &CoefficientField,
    bc: &BoundarySpec,
) -> Result<AssembledSystem, FemError> {
    let elem_regions = assign_elements(mesh, regions)?;
    let n_nodes = mesh.n_nodes();

    // Dirichlet classification
    let mut dirichlet_value: Vec<Option<usize>> = vec![None; n_nodes]; // index into bc.dirichlet
    for (entry, (selector, _)) in bc.dirichlet.iter().enumerate() {
        for node in 0..n_nodes {
            if mesh.is_boundary[node] && selector(mesh.node(node)) {
                if let Some(prev) = dirichlet_value[node] {
                    if prev != entry {
                        return Err(FemError::ConflictingDirichlet { node });
                    }
                }
                dirichlet_value[node] = Some(entry);
            }
        }
    }
    let mut free = Vec::new();
    let mut node_to_free = vec![None; n_nodes];
    for node in 0..n_nodes {
        if dirichlet_value[node].is_none() {
            node_to_free[node] = Some(free.len());
            free.push(node);
        }
    }
    let dirichlet: Vec<(usize, CoeffExpr)> = (0..n_nodes)
        .filter_map(|node| dirichlet_value[node].map(|e| (node, bc.dirichlet[e].1.clone())))
        .collect();
    let n_free = free.len();

    // full-node operator terms, merged by (region, coefficient hash)
    let mut full_terms: Vec<(usize, CoeffExpr, TripletBuffer)> = Vec::new();
    let mut term_index: std::collections::HashMap<(usize, u64), usize> = std::collections::HashMap::new();
    let mut term_buf =
        |region: usize, coeff: &CoeffExpr, terms: &mut Vec<(usize, CoeffExpr, TripletBuffer)>| -> usize {
            *term_index.entry((region, coeff.structural_hash())).or_insert_with(|| {
                terms.push((region, coeff.clone(), TripletBuffer::new(n_nodes, n_nodes)));
                terms.len() - 1
            })
        };

    for piece in &diffusion.pieces {
        if piece.terms.is_empty() {
            return Err(FemError::NonProductCoefficient(format!(
                "diffusion piece on region {} has no product terms",
                piece.region
            )));
        }
        for (spatial, coeff) in &piece.terms {
            let ti = term_buf(piece.region, coeff, &mut full_terms);
            for e in 0..mesh.n_elems() {
                if elem_regions[e] != piece.region {
                    continue;
                }
                if mesh.dim == 1 {
                    let (nodes, k) = element_stiffness_1d(mesh, e, spatial);
                    for a in 0..2 {
                        for b in 0..2 {
                            full_terms[ti].2.push(nodes[a], nodes[b], k[a][b]);
                        }
                    }
                } else {
                    let (nodes, area, grads) = tri_geometry(mesh, e);
                    let gm = spatial.at_centroid(mesh, e);
                    for a in 0..3 {
                        for b in 0..3 {
                            let k = gm * area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                            full_terms[ti].2.push(nodes[a], nodes[b], k);
                        }
                    }
                }
            }
        }
    }

    if let Some(vel) = velocity {
        if mesh.dim != 2 {
            return Err(FemError::BadMeshSpec("convection terms require a 2D mesh".into()));
        }
        for piece in &vel.pieces {
            for (vfn, coeff) in &piece.terms {
                let ti = term_buf(piece.region, coeff, &mut full_terms);
                for e in 0..mesh.n_elems() {
                    if elem_regions[e] != piece.region {
                        continue;
                    }
                    let (nodes, area, grads) = tri_geometry(mesh, e);
                    let c = mesh.centroid(e);
                    let d = vfn(&c[..2]);
                    for b in 0..3 {
                        let conv = (d[0] * grads[b][0] + d[1] * grads[b][1]) * area / 3.0;
                        for a in 0..3 {
                            full_terms[ti].2.push(nodes[a], nodes[b], conv);
                        }
                    }
                }
            }
        }
    }

    // source and Neumann load terms over all nodes
    let mut full_vec_terms: Vec<(usize, CoeffExpr, Vec<f64>)> = Vec::new();
    for piece in &source.pieces {
        for (spatial, coeff) in &piece.terms {
            let mut v = vec![0.0; n_nodes];
            for e in 0..mesh.n_elems() {
                if elem_regions[e] != piece.region {
                    continue;
                }
                if mesh.dim == 1 {
                    let [i0, i1] = mesh.lines[e];
                    let h = mesh.coords[i1][0] - mesh.coords[i0][0];
                    let g0 = spatial.at_node(mesh, i0);
                    let g1 = spatial.at_node(mesh, i1);
                    v[i0] += h / 6.0 * (2.0 * g0 + g1);
                    v[i1] += h / 6.0 * (g0 + 2.0 * g1);
                } else {
                    let (nodes, area, _) = tri_geometry(mesh, e);
                    let g: Vec<f64> = nodes.iter().map(|&n| spatial.at_node(mesh, n)).collect();
                    for a in 0..3 {
                        let mut acc = 0.0;
                        for b in 0..3 {
                            acc += if a == b { 2.0 } else { 1.0 } * g[b];
                        }
                        v[nodes[a]] += area / 12.0 * acc;
                    }
                }
            }
            full_vec_terms.push((piece.region, coeff.clone(), v));
        }
    }
    for flux in &bc.neumann {
        let mut v = vec![0.0; n_nodes];
        if mesh.dim == 1 {
            for (node, elem) in [(0usize, 0usize), (n_nodes - 1, mesh.lines.len() - 1)] {
                if selector_hits(&flux.selector, mesh.node(node)) {
                    v[node] += (flux.spatial)(mesh.node(node));
                    full_vec_terms.push((elem_regions[elem], flux.coeff.clone(), std::mem::take(&mut v)));
                    v = vec![0.0; n_nodes];
                }
            }
        } else {
            // group edges by owning region so the terms stay region-aligned
            for region in 0..regions.len() {
                let mut v = vec![0.0; n_nodes];
                let mut any = false;
                for &([a, b], elem) in &mesh.boundary_edges {
                    if elem_regions[elem] != region {
                        continue;
                    }
                    let mid = [
                        (mesh.coords[a][0] + mesh.coords[b][0]) / 2.0,
                        (mesh.coords[a][1] + mesh.coords[b][1]) / 2.0,
                    ];
                    if !selector_hits(&flux.selector, &mid[..2]) {
                        continue;
                    }
                    let dx = mesh.coords[b][0] - mesh.coords[a][0];
                    let dy = mesh.coords[b][1] - mesh.coords[a][1];
                    let len = (dx * dx + dy * dy).sqrt();
                    let g = (flux.spatial)(&mid[..2]);
                    v[a] += g * len / 2.0;
                    v[b] += g * len / 2.0;
                    any = true;
                }
                if any {
                    full_vec_terms.push((region, flux.coeff.clone(), v));
                }
            }
        }
        let _ = v;
    }

    // restrict to free dofs; Dirichlet lifting becomes extra vector terms
    let mut op_terms = Vec::new();
    let mut vec_terms: Vec<VecTerm> = Vec::new();
    let free_map = &node_to_free;
    let all_free: Vec<Option<usize>> = free_map.clone();
    for (region, coeff, buf) in full_terms {
        let full = buf.finalize();
        let restricted = full.restrict(&all_free, n_free, &all_free, n_free);
        // lifting: -A[free, d] * g_d for each Dirichlet entry with value expr e
        let mut lift: std::collections::HashMap<u64, (CoeffExpr, Vec<f64>)> =
            std::collections::HashMap::new();
        for (node, expr) in &dirichlet {
            if expr.as_constant() == Some(0.0) {
                continue;
            }
            let mut col = vec![0.0; n_free];
            let mut nonzero = false;
            for r in 0..n_nodes {
                if let Some(fr) = free_map[r] {
                    for (c, val) in full.row(r) {
                        if c == *node && val != 0.0 {
                            col[fr] -= val;
                            nonzero = true;
                        }
                    }
                }
            }
            if nonzero {
                let entry = lift
                    .entry(expr.structural_hash())
                    .or_insert_with(|| (expr.clone(), vec![0.0; n_free]));
                crate::linalg::axpy(1.0, &col, &mut entry.1);
            }
        }
        for (_, (expr, v)) in lift {
            if v.iter().any(|x| *x != 0.0) {
                vec_terms.push(VecTerm {
                    coeff: product(&coeff, &expr)?,
                    vector: v,
                    region: Some(region),
                });
            }
        }
        if !restricted.is_zero() {
            op_terms.push(OpTerm { coeff, matrix: restricted, region: Some(region) });
        }
    }
    for (region, coeff, v) in full_vec_terms {
        let restricted: Vec<f64> = free.iter().map(|&n| v[n]).collect();
        if restricted.iter().any(|x| *x != 0.0) {
            vec_terms.push(VecTerm { coeff, vector: restricted, region: Some(region) });
        }
    }

    Ok(AssembledSystem {
        mesh: Arc::clone(mesh),
        op: AffineOperator::new(n_free, n_free, op_terms),
        rhs: AffineVector { n: n_free, terms: vec_terms },
        dof_map: DofMap { n_nodes, free, node_to_free, dirichlet },
        elem_regions,
    })
}

fn selector_hits(selector: &NodePredicate, x: &[f64]) -> bool {
    selector(x)
}

/// Direct solve of the monolithic system at one parameter value. This is the
/// reference oracle all surrogate results are measured against.
pub fn solve_global(
    op: &AffineOperator,
    rhs: &AffineVector,
    xi: &[f64],
) -> Result<Vec<f64>, FemError> {
    let mut cache = MemoCache::new();
    let a = op.assemble_at(xi, &mut cache)?;
    let b = rhs.assemble_at(xi, &mut cache)?;
    Ok(crate::linalg::factorize(&a)?.solve(&b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffspace::{draw_samples, Distribution, ParameterSpace};

    #[test]
    fn interval_mesh_nodes() {
        let m = build_mesh(&MeshSpec::Interval1D { a: 0.0, b: 1.0, n_elems: 4 }).unwrap();
        assert_eq!(m.n_nodes(), 5);
        for (i, x) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
            assert!((m.node(i)[0] - x).abs() < 1e-15);
        }
        assert!(m.is_boundary[0] && m.is_boundary[4] && !m.is_boundary[2]);
    }

    #[test]
    fn structured_grid_counts() {
        let m = build_mesh(&MeshSpec::StructuredTri2D {
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            nx: 2,
            ny: 2,
        })
        .unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.tris.len(), 8);
    }

    #[test]
    fn paper_scale_grid_node_count() {
        let m = build_mesh(&MeshSpec::StructuredTri2D {
            x_range: (0.0, 100.0),
            y_range: (0.0, 100.0),
            nx: 100,
            ny: 100,
        })
        .unwrap();
        assert_eq!(m.n_nodes(), 10201);
    }

    #[test]
    fn bad_mesh_spec_rejected() {
        assert!(build_mesh(&MeshSpec::Interval1D { a: 0.0, b: 1.0, n_elems: 1 }).is_err());
    }

    #[test]
    fn constant_coefficient_two_element_interval() {
        // c = 1, f = 1 on (0,1) with 2 elements and zero Dirichlet:
        // single interior dof, stiffness 4, load 0.5, solution 0.125
        let mesh = Arc::new(build_mesh(&MeshSpec::Interval1D { a: 0.0, b: 1.0, n_elems: 2 }).unwrap());
        let regions = Regions::whole_domain();
        let diffusion = CoefficientField {
            pieces: vec![CoeffPiece {
                region: 0,
                terms: vec![(Spatial::constant(1.0), CoeffExpr::constant(1.0))],
            }],
        };
        let source = CoefficientField {
            pieces: vec![CoeffPiece {
                region: 0,
                terms: vec![(Spatial::constant(1.0), CoeffExpr::constant(1.0))],
            }],
        };
        let sys = assemble_affine(
            &mesh,
            &regions,
            &diffusion,
            None,
            &source,
            &BoundarySpec::homogeneous_dirichlet(),
        )
        .unwrap();
        assert_eq!(sys.dof_map.n_free(), 1);
        assert_eq!(sys.op.terms.len(), 1);
        let a = sys.op.assemble_at(&[], &mut MemoCache::new()).unwrap();
        assert!((a.to_dense().get(0, 0) - 4.0).abs() < 1e-14);
        let b = sys.rhs.assemble_at(&[], &mut MemoCache::new()).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-14);
        let u = solve_global(&sys.op, &sys.rhs, &[]).unwrap();
        assert!((u[0] - 0.125).abs() < 1e-14);
    }

    fn two_region_1d() -> Regions {
        Regions(vec![
            Arc::new(|x: &[f64]| x[0] <= 0.5),
            Arc::new(|x: &[f64]| x[0] > 0.5),
        ])
    }

    /// 1D test problem: c = xi*x + 4 on [0, 0.5], c = x + 1 on (0.5, 1],
    /// f = cos(2 pi x) and xi^2 x, zero Dirichlet.
    fn assemble_example1(n_elems: usize) -> (AssembledSystem, crate::coeffspace::SpaceRef) {
        let space = ParameterSpace::iid(
            Distribution::TruncatedNormal { mean: 0.0, stddev: 1.0, lo: -3.0, hi: 3.0 },
            1,
            "xi",
        )
        .unwrap();
        let mesh = Arc::new(build_mesh(&MeshSpec::Interval1D { a: 0.0, b: 1.0, n_elems }).unwrap());
        let regions = two_region_1d();
        let xi = CoeffExpr::coordinate(&space, 0).unwrap();
        let xi_sq = product(&xi, &xi).unwrap();
        let diffusion = CoefficientField {
            pieces: vec![
                CoeffPiece {
                    region: 0,
                    terms: vec![
                        (Spatial::Analytic(Arc::new(|x: &[f64]| x[0])), xi.clone()),
                        (Spatial::constant(4.0), CoeffExpr::constant(1.0)),
                    ],
                },
                CoeffPiece {
                    region: 1,
                    terms: vec![(
                        Spatial::Analytic(Arc::new(|x: &[f64]| x[0] + 1.0)),
                        CoeffExpr::constant(1.0),
                    )],
                },
            ],
        };
        let source = CoefficientField {
            pieces: vec![
                CoeffPiece {
                    region: 0,
                    terms: vec![(
                        Spatial::Analytic(Arc::new(|x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).cos())),
                        CoeffExpr::constant(1.0),
                    )],
                },
                CoeffPiece {
                    region: 1,
                    terms: vec![(Spatial::Analytic(Arc::new(|x: &[f64]| x[0])), xi_sq)],
                },
            ],
        };
        let sys = assemble_affine(
            &mesh,
            &regions,
            &diffusion,
            None,
            &source,
            &BoundarySpec::homogeneous_dirichlet(),
        )
        .unwrap();
        (sys, space)
    }

    #[test]
    fn example1_term_counts() {
        let (sys, _) = assemble_example1(40);
        let m_a1 = sys.op.terms.iter().filter(|t| t.region == Some(0)).count();
        let m_a2 = sys.op.terms.iter().filter(|t| t.region == Some(1)).count();
        assert_eq!(m_a1, 2);
        assert_eq!(m_a2, 1);
        let m_b1 = sys.rhs.terms.iter().filter(|t| t.region == Some(0)).count();
        let m_b2 = sys.rhs.terms.iter().filter(|t| t.region == Some(1)).count();
        assert_eq!(m_b1, 1);
        assert_eq!(m_b2, 1);
    }

    #[test]
    fn affine_consistency_at_random_samples() {
        let (sys, space) = assemble_example1(40);
        let samples = draw_samples(&space, 20, 3);
        for s in &samples.samples {
            let a = sys.op.assemble_at(s, &mut MemoCache::new()).unwrap();
            // direct assembly with the coefficient numerically evaluated at xi
            let xi = s[0];
            let mesh = Arc::clone(&sys.mesh);
            let regions = two_region_1d();
            let diffusion = CoefficientField {
                pieces: vec![
                    CoeffPiece {
                        region: 0,
                        terms: vec![(
                            Spatial::Analytic(Arc::new(move |x: &[f64]| xi * x[0] + 4.0)),
                            CoeffExpr::constant(1.0),
                        )],
                    },
                    CoeffPiece {
                        region: 1,
                        terms: vec![(
                            Spatial::Analytic(Arc::new(|x: &[f64]| x[0] + 1.0)),
                            CoeffExpr::constant(1.0),
                        )],
                    },
                ],
            };
            let source = CoefficientField { pieces: vec![] };
            let direct = assemble_affine(
                &mesh,
                &regions,
                &diffusion,
                None,
                &source,
                &BoundarySpec::homogeneous_dirichlet(),
            )
            .unwrap();
            let ad = direct.op.assemble_at(s, &mut MemoCache::new()).unwrap();
            let mut diff = a.to_dense();
            diff.axpy(-1.0, &ad.to_dense());
            assert!(diff.frobenius() <= 1e-12 * ad.to_dense().frobenius());
        }
    }

    #[test]
    fn symmetry_and_positive_diagonal() {
        let (sys, space) = assemble_example1(60);
        let s = draw_samples(&space, 1, 5);
        let a = sys.op.assemble_at(&s.samples[0], &mut MemoCache::new()).unwrap().to_dense();
        let mut max_asym: f64 = 0.0;
        for r in 0..a.nrows {
            for c in 0..a.ncols {
                max_asym = max_asym.max((a.get(r, c) - a.get(c, r)).abs());
            }
        }
        assert!(max_asym <= 1e-13 * a.max_abs());
    }

    #[test]
    fn global_solve_matches_fine_mesh() {
        // xi = 0: deterministic coefficients; coarse 200-element solution vs
        // 10000-element refinement at shared nodes
        let (coarse, _) = assemble_example1(200);
        let (fine, _) = assemble_example1(10_000);
        let uc = solve_global(&coarse.op, &coarse.rhs, &[0.0]).unwrap();
        let uf = solve_global(&fine.op, &fine.rhs, &[0.0]).unwrap();
        let uc_full = coarse.dof_map.full_field(&uc, &[0.0], &mut MemoCache::new()).unwrap();
        let uf_full = fine.dof_map.full_field(&uf, &[0.0], &mut MemoCache::new()).unwrap();
        let ratio = 10_000 / 200;
        let mut max_diff: f64 = 0.0;
        for i in 0..=200 {
            max_diff = max_diff.max((uc_full[i] - uf_full[i * ratio]).abs());
        }
        assert!(max_diff < 1e-4, "max node difference {max_diff}");
    }

    #[test]
    fn dirichlet_values_exact_in_full_field() {
        let (sys, _) = assemble_example1(20);
        let u = solve_global(&sys.op, &sys.rhs, &[1.0]).unwrap();
        let full = sys.dof_map.full_field(&u, &[1.0], &mut MemoCache::new()).unwrap();
        assert_eq!(full[0], 0.0);
        assert_eq!(full[20], 0.0);
    }
}
