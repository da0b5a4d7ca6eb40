//! Parameter spaces, samplers, and the closed algebra of stochastic scalar
//! coefficient functions.
//!
//! The central type is [`CoeffExpr`], a shared-subgraph expression DAG over a
//! parameter vector. The greedy variable-separation construction builds deep
//! rational expressions (each stochastic function references all earlier
//! ones), so evaluation is memoized per sample via [`MemoCache`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative guard threshold for quotient denominators.
pub const QUOTIENT_GUARD: f64 = 1e-14;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Error)]
pub enum CoeffError {
    #[error("operands belong to different parameter spaces")]
    SpaceMismatch,
    #[error("parameter vector has length {got}, space has {expected} dims")]
    DimMismatch { expected: usize, got: usize },
    #[error("coordinate index {index} out of range for space with {dims} dims")]
    CoordinateOutOfRange { index: usize, dims: usize },
    #[error("degenerate quotient denominator at expression node {node}: |{den:e}| < {guard:e} * max(1, |{num:e}|)")]
    DegenerateDenominator { node: u64, num: f64, den: f64, guard: f64 },
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("weights and expressions have different lengths ({weights} vs {exprs})")]
    WeightLengthMismatch { weights: usize, exprs: usize },
}

/// Bounded one-dimensional marginal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { mean: f64, stddev: f64, lo: f64, hi: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), CoeffError> {
        match *self {
            Distribution::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(CoeffError::BadDistribution(format!(
                        "uniform requires lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            Distribution::TruncatedNormal { stddev, lo, hi, .. } => {
                if !(lo < hi) {
                    return Err(CoeffError::BadDistribution(format!(
                        "truncated normal requires lo < hi, got [{lo}, {hi}]"
                    )));
                }
                if !(stddev > 0.0) {
                    return Err(CoeffError::BadDistribution(format!(
                        "truncated normal requires stddev > 0, got {stddev}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Uniform { lo, hi } => (lo, hi),
            Distribution::TruncatedNormal { lo, hi, .. } => (lo, hi),
        }
    }

    /// Draws one value. Truncated normals sample by rejection from the
    /// untruncated normal; for the usual [-3, 3] range at unit stddev the
    /// acceptance rate is about 0.997.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => rng.random_range(lo..hi),
            Distribution::TruncatedNormal { mean, stddev, lo, hi } => {
                let normal = rand_distr::Normal::new(mean, stddev).expect("validated");
                loop {
                    let x = rng.sample(normal);
                    if (lo..=hi).contains(&x) {
                        return x;
                    }
                }
            }
        }
    }
}

/// The parameter space of the random vector: dimension plus independent
/// bounded marginals, one per coordinate.
#[derive(Debug)]
pub struct ParameterSpace {
    id: u64,
    pub dims: usize,
    pub marginals: Vec<Distribution>,
    pub description: String,
}

pub type SpaceRef = Arc<ParameterSpace>;

impl ParameterSpace {
    pub fn new(marginals: Vec<Distribution>, description: &str) -> Result<SpaceRef, CoeffError> {
        for m in &marginals {
            m.validate()?;
        }
        Ok(Arc::new(ParameterSpace {
            id: fresh_id(),
            dims: marginals.len(),
            marginals,
            description: description.to_string(),
        }))
    }

    /// All coordinates share a single marginal.
    pub fn iid(dist: Distribution, dims: usize, description: &str) -> Result<SpaceRef, CoeffError> {
        ParameterSpace::new(vec![dist; dims], description)
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}

/// A reproducible i.i.d. draw from a parameter space.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
    pub space: SpaceRef,
}

/// Draws `count` i.i.d. parameter vectors; the same (space, count, seed)
/// triple always reproduces the identical list.
pub fn draw_samples(space: &SpaceRef, count: usize, seed: u64) -> SampleSet {
    assert!(count >= 1, "sample count must be positive");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|_| space.marginals.iter().map(|m| m.sample(&mut rng)).collect())
        .collect();
    SampleSet { samples, seed, space: Arc::clone(space) }
}

type NamedFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

enum NodeKind {
    Constant(f64),
    Coordinate(usize),
    AffineInCoord { index: usize, slope: f64, intercept: f64 },
    Sum(Vec<CoeffExpr>),
    Product(Vec<CoeffExpr>),
    Quotient(CoeffExpr, CoeffExpr),
    LinearCombination(Vec<f64>, Vec<CoeffExpr>),
    Named { label: String, f: NamedFn },
}

struct Node {
    id: u64,
    shash: u64,
    space: Option<SpaceRef>,
    kind: NodeKind,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match &self.kind {
            NodeKind::Constant(c) => format!("Constant({c})"),
            NodeKind::Coordinate(i) => format!("Coordinate({i})"),
            NodeKind::AffineInCoord { index, slope, intercept } => {
                format!("AffineInCoord({index}, {slope}, {intercept})")
            }
            NodeKind::Sum(c) => format!("Sum[{}]", c.len()),
            NodeKind::Product(c) => format!("Product[{}]", c.len()),
            NodeKind::Quotient(..) => "Quotient".to_string(),
            NodeKind::LinearCombination(w, _) => format!("LinearCombination[{}]", w.len()),
            NodeKind::Named { label, .. } => format!("Named({label})"),
        };
        write!(f, "Node#{}<{}>", self.id, tag)
    }
}

fn mix(h: u64, v: u64) -> u64 {
    // FNV-ish mixing, stable across runs.
    (h ^ v).wrapping_mul(0x100000001b3).rotate_left(17)
}

fn hash_f64(h: u64, v: f64) -> u64 {
    mix(h, v.to_bits())
}

/// Evaluable scalar function of the parameter vector, closed under sum,
/// product, quotient, and linear combination. Cheap to clone: nodes are
/// reference-counted and subgraphs are shared, never copied.
#[derive(Clone, Debug)]
pub struct CoeffExpr(Arc<Node>);

fn merge_spaces(a: Option<SpaceRef>, b: &Option<SpaceRef>) -> Result<Option<SpaceRef>, CoeffError> {
    match (a, b) {
        (None, b) => Ok(b.clone()),
        (Some(a), None) => Ok(Some(a)),
        (Some(a), Some(b)) => {
            if a.id() == b.id() {
                Ok(Some(a))
            } else {
                Err(CoeffError::SpaceMismatch)
            }
        }
    }
}

fn joint_space(exprs: &[CoeffExpr]) -> Result<Option<SpaceRef>, CoeffError> {
    let mut space = None;
    for e in exprs {
        space = merge_spaces(space, &e.0.space)?;
    }
    Ok(space)
}

impl CoeffExpr {
    fn new(kind: NodeKind, space: Option<SpaceRef>, shash: u64) -> CoeffExpr {
        CoeffExpr(Arc::new(Node { id: fresh_id(), shash, space, kind }))
    }

    pub fn constant(c: f64) -> CoeffExpr {
        CoeffExpr::new(NodeKind::Constant(c), None, hash_f64(0x1, c))
    }

    pub fn coordinate(space: &SpaceRef, index: usize) -> Result<CoeffExpr, CoeffError> {
        if index >= space.dims {
            return Err(CoeffError::CoordinateOutOfRange { index, dims: space.dims });
        }
        Ok(CoeffExpr::new(
            NodeKind::Coordinate(index),
            Some(Arc::clone(space)),
            mix(0x2, index as u64),
        ))
    }

    /// slope * xi[index] + intercept
    pub fn affine_in_coord(
        space: &SpaceRef,
        index: usize,
        slope: f64,
        intercept: f64,
    ) -> Result<CoeffExpr, CoeffError> {
        if index >= space.dims {
            return Err(CoeffError::CoordinateOutOfRange { index, dims: space.dims });
        }
        let h = hash_f64(hash_f64(mix(0x3, index as u64), slope), intercept);
        Ok(CoeffExpr::new(
            NodeKind::AffineInCoord { index, slope, intercept },
            Some(Arc::clone(space)),
            h,
        ))
    }

    /// Arbitrary callback; `label` doubles as the structural identity, so two
    /// Named nodes with the same label are considered equal when merging terms.
    pub fn named(
        space: &SpaceRef,
        label: &str,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> CoeffExpr {
        let mut h = 0x4;
        for b in label.bytes() {
            h = mix(h, b as u64);
        }
        CoeffExpr::new(
            NodeKind::Named { label: label.to_string(), f: Arc::new(f) },
            Some(Arc::clone(space)),
            h,
        )
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.0.kind {
            NodeKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn node_id(&self) -> u64 {
        self.0.id
    }

    /// Structural hash of the DAG, with commutative operands sorted, so that
    /// algebraically identical term coefficients can be merged.
    pub fn structural_hash(&self) -> u64 {
        self.0.shash
    }

    /// Splits a leading constant factor off the expression: `Constant(c)`
    /// becomes `(c, 1)` and a product with constant factors has them folded
    /// out. Used when merging affine terms that differ only by a scalar.
    pub fn split_constant(&self) -> (f64, CoeffExpr) {
        match &self.0.kind {
            NodeKind::Constant(c) => (*c, CoeffExpr::constant(1.0)),
            NodeKind::Product(children) => {
                let mut scale = 1.0;
                let mut rest: Vec<CoeffExpr> = Vec::new();
                for ch in children {
                    match ch.as_constant() {
                        Some(c) => scale *= c,
                        None => rest.push(ch.clone()),
                    }
                }
                if rest.is_empty() {
                    (scale, CoeffExpr::constant(1.0))
                } else if rest.len() == 1 {
                    (scale, rest.pop().unwrap())
                } else if scale == 1.0 {
                    (1.0, self.clone())
                } else {
                    let space = joint_space(&rest).expect("subset of a valid product");
                    let h = children_hash(0x6, rest.iter().map(|e| e.structural_hash()));
                    (scale, CoeffExpr::new(NodeKind::Product(rest), space, h))
                }
            }
            _ => (1.0, self.clone()),
        }
    }
}

fn children_hash(tag: u64, hashes: impl Iterator<Item = u64>) -> u64 {
    let mut hs: Vec<u64> = hashes.collect();
    hs.sort_unstable();
    hs.into_iter().fold(tag, mix)
}

pub fn sum(terms: &[CoeffExpr]) -> Result<CoeffExpr, CoeffError> {
    if terms.iter().all(|e| e.as_constant().is_some()) {
        return Ok(CoeffExpr::constant(terms.iter().map(|e| e.as_constant().unwrap()).sum()));
    }
    let space = joint_space(terms)?;
    let h = children_hash(0x5, terms.iter().map(|e| e.structural_hash()));
    Ok(CoeffExpr::new(NodeKind::Sum(terms.to_vec()), space, h))
}

pub fn product(a: &CoeffExpr, b: &CoeffExpr) -> Result<CoeffExpr, CoeffError> {
    if let (Some(x), Some(y)) = (a.as_constant(), b.as_constant()) {
        return Ok(CoeffExpr::constant(x * y));
    }
    if a.as_constant() == Some(1.0) {
        return Ok(b.clone());
    }
    if b.as_constant() == Some(1.0) {
        return Ok(a.clone());
    }
    let space = merge_spaces(a.0.space.clone(), &b.0.space)?;
    let h = children_hash(0x6, [a.structural_hash(), b.structural_hash()].into_iter());
    Ok(CoeffExpr::new(NodeKind::Product(vec![a.clone(), b.clone()]), space, h))
}

pub fn quotient(a: &CoeffExpr, b: &CoeffExpr) -> Result<CoeffExpr, CoeffError> {
    if b.as_constant() == Some(1.0) {
        return Ok(a.clone());
    }
    if let (Some(x), Some(y)) = (a.as_constant(), b.as_constant()) {
        if y.abs() >= QUOTIENT_GUARD * x.abs().max(1.0) {
            return Ok(CoeffExpr::constant(x / y));
        }
    }
    let space = merge_spaces(a.0.space.clone(), &b.0.space)?;
    // Quotient is ordered; do not sort operand hashes.
    let h = mix(mix(0x7, a.structural_hash()), b.structural_hash());
    Ok(CoeffExpr::new(NodeKind::Quotient(a.clone(), b.clone()), space, h))
}

pub fn linear_combination(weights: &[f64], exprs: &[CoeffExpr]) -> Result<CoeffExpr, CoeffError> {
    if weights.len() != exprs.len() {
        return Err(CoeffError::WeightLengthMismatch {
            weights: weights.len(),
            exprs: exprs.len(),
        });
    }
    let mut w = Vec::new();
    let mut es = Vec::new();
    for (wi, ei) in weights.iter().zip(exprs) {
        if *wi != 0.0 {
            w.push(*wi);
            es.push(ei.clone());
        }
    }
    if es.is_empty() {
        return Ok(CoeffExpr::constant(0.0));
    }
    if es.len() == 1 && w[0] == 1.0 {
        return Ok(es.pop().unwrap());
    }
    if es.iter().all(|e| e.as_constant().is_some()) {
        let v = w.iter().zip(&es).map(|(wi, ei)| wi * ei.as_constant().unwrap()).sum();
        return Ok(CoeffExpr::constant(v));
    }
    let space = joint_space(&es)?;
    let h = children_hash(
        0x8,
        w.iter().zip(&es).map(|(wi, ei)| hash_f64(ei.structural_hash(), *wi)),
    );
    Ok(CoeffExpr::new(NodeKind::LinearCombination(w, es), space, h))
}

/// Per-sample memo of already-evaluated DAG nodes, keyed by node id.
///
/// A cache must never be reused across different parameter vectors; callers
/// create one per sample (or [`MemoCache::clear`] between samples). Each
/// thread of execution needs its own cache.
#[derive(Default)]
pub struct MemoCache {
    map: HashMap<u64, f64>,
}

impl MemoCache {
    pub fn new() -> MemoCache {
        MemoCache::default()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }
}

/// Evaluates the expression at a parameter vector with memoization of shared
/// subexpressions. Results are bit-identical with or without a warm cache.
pub fn evaluate(expr: &CoeffExpr, xi: &[f64], cache: &mut MemoCache) -> Result<f64, CoeffError> {
    if let Some(space) = &expr.0.space {
        if xi.len() != space.dims {
            return Err(CoeffError::DimMismatch { expected: space.dims, got: xi.len() });
        }
    }
    eval_node(expr, xi, cache)
}

fn eval_node(expr: &CoeffExpr, xi: &[f64], cache: &mut MemoCache) -> Result<f64, CoeffError> {
    if let Some(v) = cache.map.get(&expr.0.id) {
        return Ok(*v);
    }
    let v = match &expr.0.kind {
        NodeKind::Constant(c) => *c,
        NodeKind::Coordinate(i) => xi[*i],
        NodeKind::AffineInCoord { index, slope, intercept } => slope * xi[*index] + intercept,
        NodeKind::Sum(children) => {
            let mut acc = 0.0;
            for ch in children {
                acc += eval_node(ch, xi, cache)?;
            }
            acc
        }
        NodeKind::Product(children) => {
            let mut acc = 1.0;
            for ch in children {
                acc *= eval_node(ch, xi, cache)?;
            }
            acc
        }
        NodeKind::Quotient(num, den) => {
            let n = eval_node(num, xi, cache)?;
            let d = eval_node(den, xi, cache)?;
            if d.abs() < QUOTIENT_GUARD * n.abs().max(1.0) {
                return Err(CoeffError::DegenerateDenominator {
                    node: expr.0.id,
                    num: n,
                    den: d,
                    guard: QUOTIENT_GUARD,
                });
            }
            n / d
        }
        NodeKind::LinearCombination(weights, children) => {
            let mut acc = 0.0;
            for (w, ch) in weights.iter().zip(children) {
                acc += w * eval_node(ch, xi, cache)?;
            }
            acc
        }
        NodeKind::Named { f, .. } => f(xi),
    };
    cache.map.insert(expr.0.id, v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(e: &CoeffExpr, xi: &[f64]) -> f64 {
        evaluate(e, xi, &mut MemoCache::new()).unwrap()
    }

    #[test]
    fn constant_is_identity() {
        let one = CoeffExpr::constant(1.0);
        assert_eq!(eval(&one, &[42.0]), 1.0);
    }

    #[test]
    fn algebraic_cancellation() {
        // xi * (1 / (2 xi)) = 0.5
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 10.0 }, 1, "t").unwrap();
        let x = CoeffExpr::coordinate(&space, 0).unwrap();
        let two_x = product(&CoeffExpr::constant(2.0), &x).unwrap();
        let inv = quotient(&CoeffExpr::constant(1.0), &two_x).unwrap();
        let e = product(&x, &inv).unwrap();
        assert!((eval(&e, &[7.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn affine_in_coord_evaluates() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: -5.0, hi: 5.0 }, 1, "t").unwrap();
        let e = CoeffExpr::affine_in_coord(&space, 0, 1.0, 4.0).unwrap();
        assert_eq!(eval(&e, &[2.0]), 6.0);
    }

    #[test]
    fn product_and_quotient_simplify() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 2.0 }, 1, "t").unwrap();
        let p = product(&CoeffExpr::constant(2.0), &CoeffExpr::constant(3.0)).unwrap();
        assert_eq!(p.as_constant(), Some(6.0));
        let x = CoeffExpr::coordinate(&space, 0).unwrap();
        let q = quotient(&x, &x).unwrap();
        assert!((eval(&q, &[5.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eta_product_example() {
        // p(xi) = xi, beta(xi) = 1/(2 xi): eta = p * beta evaluates to 0.5.
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 10.0 }, 1, "t").unwrap();
        let p = CoeffExpr::coordinate(&space, 0).unwrap();
        let beta = quotient(
            &CoeffExpr::constant(1.0),
            &product(&CoeffExpr::constant(2.0), &p).unwrap(),
        )
        .unwrap();
        let eta = product(&p, &beta).unwrap();
        assert!((eval(&eta, &[3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominator_reported() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: -1.0, hi: 1.0 }, 1, "t").unwrap();
        let x = CoeffExpr::coordinate(&space, 0).unwrap();
        let q = quotient(&CoeffExpr::constant(1.0), &x).unwrap();
        let err = evaluate(&q, &[0.0], &mut MemoCache::new()).unwrap_err();
        assert!(matches!(err, CoeffError::DegenerateDenominator { .. }));
    }

    #[test]
    fn space_mismatch_rejected() {
        let s1 = ParameterSpace::iid(Distribution::Uniform { lo: 0.0, hi: 1.0 }, 1, "a").unwrap();
        let s2 = ParameterSpace::iid(Distribution::Uniform { lo: 0.0, hi: 1.0 }, 1, "b").unwrap();
        let a = CoeffExpr::coordinate(&s1, 0).unwrap();
        let b = CoeffExpr::coordinate(&s2, 0).unwrap();
        assert!(matches!(product(&a, &b), Err(CoeffError::SpaceMismatch)));
    }

    #[test]
    fn uniform_samples_in_support_with_expected_mean() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 4.0 }, 1, "t").unwrap();
        let set = draw_samples(&space, 10_000, 7);
        let mut mean = 0.0;
        for s in &set.samples {
            assert!(s[0] >= 1.0 && s[0] <= 4.0);
            mean += s[0];
        }
        mean /= set.samples.len() as f64;
        assert!((mean - 2.5).abs() < 0.05);
    }

    #[test]
    fn truncated_normal_stays_in_range() {
        let d = Distribution::TruncatedNormal { mean: 0.0, stddev: 1.0, lo: -3.0, hi: 3.0 };
        let space = ParameterSpace::iid(d, 1, "t").unwrap();
        let set = draw_samples(&space, 10_000, 11);
        assert!(set.samples.iter().all(|s| s[0] >= -3.0 && s[0] <= 3.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 0.0, hi: 1.0 }, 3, "t").unwrap();
        let a = draw_samples(&space, 1, 99);
        let b = draw_samples(&space, 99, 99);
        assert_eq!(a.samples[0], b.samples[0]);
        let c = draw_samples(&space, 99, 99);
        assert_eq!(b.samples, c.samples);
    }

    #[test]
    fn memoization_is_transparent() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 2.0 }, 2, "t").unwrap();
        let x = CoeffExpr::coordinate(&space, 0).unwrap();
        let y = CoeffExpr::coordinate(&space, 1).unwrap();
        let shared = product(&x, &y).unwrap();
        // shared appears twice: memoized path hits the cache on the second visit
        let e = sum(&[shared.clone(), quotient(&shared, &x).unwrap()]).unwrap();
        let xi = [1.3, 1.7];
        let with_cache = eval(&e, &xi);
        // fresh caches per subexpression defeat sharing entirely
        let no_share = eval(&shared, &xi) + eval(&quotient(&shared, &x).unwrap(), &xi);
        assert_eq!(with_cache.to_bits(), no_share.to_bits());
    }

    #[test]
    fn split_constant_factors() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 2.0 }, 1, "t").unwrap();
        let x = CoeffExpr::coordinate(&space, 0).unwrap();
        let e = product(&CoeffExpr::constant(20.0), &x).unwrap();
        let (c, rest) = e.split_constant();
        assert_eq!(c, 20.0);
        assert_eq!(rest.structural_hash(), x.structural_hash());
        let (c, _unit) = CoeffExpr::constant(15.0).split_constant();
        assert_eq!(c, 15.0);
    }

    #[test]
    fn commutative_hash_merges_reordered_products() {
        let space = ParameterSpace::iid(Distribution::Uniform { lo: 1.0, hi: 2.0 }, 2, "t").unwrap();
        let x = CoeffExpr::coordinate(&space, 0).unwrap();
        let y = CoeffExpr::coordinate(&space, 1).unwrap();
        assert_eq!(
            product(&x, &y).unwrap().structural_hash(),
            product(&y, &x).unwrap().structural_hash()
        );
    }

    proptest! {
        #[test]
        fn evaluation_is_a_homomorphism(
            a in -10.0f64..10.0, b in -10.0f64..10.0, x in 0.5f64..5.0
        ) {
            let space = ParameterSpace::iid(
                Distribution::Uniform { lo: 0.5, hi: 5.0 }, 1, "p").unwrap();
            let xi = [x];
            let ea = sum(&[
                CoeffExpr::constant(a),
                CoeffExpr::coordinate(&space, 0).unwrap(),
            ]).unwrap();
            let eb = CoeffExpr::affine_in_coord(&space, 0, b, 1.0).unwrap();
            let prod = product(&ea, &eb).unwrap();
            let lhs = eval(&prod, &xi);
            let rhs = eval(&ea, &xi) * eval(&eb, &xi);
            let tol = 1e-15 * rhs.abs().max(1.0);
            prop_assert!((lhs - rhs).abs() <= tol);
        }
    }
}
