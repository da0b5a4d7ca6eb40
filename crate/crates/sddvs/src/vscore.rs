//! Greedy variable-separation solver for affine stochastic algebraic systems.
//!
//! Given A(xi) = sum_j p_j(xi) A_j and F(xi) = sum_j q_j(xi) F_j, the method
//! builds u(xi) ~ sum_k zeta_k(xi) c_k: at each step it solves the system
//! exactly at the worst remaining training sample to get the deterministic
//! mode c_k, then closes the stochastic factor zeta_k as an explicit rational
//! expression from Galerkin projections of the residual equation onto c_k.
//! The construction interpolates: the surrogate is exact at every selected
//! snapshot.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::coeffspace::{
    evaluate, linear_combination, product, quotient, CoeffError, CoeffExpr, MemoCache, SampleSet,
};
use crate::fem::{AffineOperator, AffineVector};
use crate::linalg::{axpy, dot, factorize, two_norm, LinalgError};

#[derive(Debug, Error)]
pub enum VsError {
    #[error("invalid solver config: {0}")]
    BadConfig(String),
    #[error("snapshot solve failed at step {step}: {source}")]
    SingularSnapshot { step: usize, source: LinalgError },
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// Greedy build parameters. The tolerance is relative: the build stops once
/// the worst remaining training residual drops below
/// `tolerance * max_xi ||F(xi)||_2` over the training set.
#[derive(Clone)]
pub struct VsConfig {
    pub tolerance: f64,
    pub max_terms: usize,
    pub training: SampleSet,
}

impl VsConfig {
    pub fn validate(&self) -> Result<(), VsError> {
        if !(self.tolerance > 0.0) {
            return Err(VsError::BadConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_terms == 0 || self.max_terms > self.training.samples.len() {
            return Err(VsError::BadConfig(format!(
                "max_terms must be in 1..={}, got {}",
                self.training.samples.len(),
                self.max_terms
            )));
        }
        Ok(())
    }
}

/// Separated surrogate u(xi) = sum_k zeta_k(xi) c_k with the projection
/// tables that define the zeta recursion and the greedy build history.
pub struct SeparatedSolution {
    pub terms: Vec<(CoeffExpr, Vec<f64>)>,
    pub snapshots: Vec<Vec<f64>>,
    /// a_table[k][i][j] = c_k' A_j c_i for i <= k
    pub a_table: Vec<Vec<Vec<f64>>>,
    /// f_table[k][j] = c_k' F_j
    pub f_table: Vec<Vec<f64>>,
    /// residual norm at the selected sample, before its correction was added
    pub residual_history: Vec<f64>,
    /// cached products av[k][j] = A_j c_k, reused for residual evaluation
    av: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl SeparatedSolution {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The prefix surrogate with the first `m` greedy terms. Valid because
    /// each zeta_k only references earlier terms.
    pub fn truncated(&self, m: usize) -> SeparatedSolution {
        let m = m.min(self.n_terms());
        SeparatedSolution {
            terms: self.terms[..m].to_vec(),
            snapshots: self.snapshots[..m].to_vec(),
            a_table: self.a_table[..m].to_vec(),
            f_table: self.f_table[..m].to_vec(),
            residual_history: self.residual_history[..m].to_vec(),
            av: self.av[..m].to_vec(),
            dim: self.dim,
        }
    }
}

/// u(xi) = sum_k zeta_k(xi) c_k. All zeta evaluations share the caller's memo
/// cache, which must be fresh for (or cleared between) distinct samples.
pub fn evaluate_solution(
    sol: &SeparatedSolution,
    xi: &[f64],
    cache: &mut MemoCache,
) -> Result<Vec<f64>, VsError> {
    let mut u = vec![0.0; sol.dim];
    for (zeta, c) in &sol.terms {
        let w = evaluate(zeta, xi, cache)?;
        axpy(w, c, &mut u);
    }
    Ok(u)
}

/// ||F(xi) - A(xi) u_N(xi)||_2 via the cached A_j c_k products; costs
/// O(N * m_a * n) with no matrix assembly.
pub fn residual_norm(
    op: &AffineOperator,
    rhs: &AffineVector,
    sol: &SeparatedSolution,
    xi: &[f64],
    cache: &mut MemoCache,
) -> Result<f64, VsError> {
    let mut r = rhs.assemble_at(xi, cache).map_err(fem_coeff)?;
    let p: Result<Vec<f64>, CoeffError> =
        op.terms.iter().map(|t| evaluate(&t.coeff, xi, cache)).collect();
    let p = p?;
    for (k, (zeta, _)) in sol.terms.iter().enumerate() {
        let z = evaluate(zeta, xi, cache)?;
        for (j, pj) in p.iter().enumerate() {
            let w = z * pj;
            if w != 0.0 {
                axpy(-w, &sol.av[k][j], &mut r);
            }
        }
    }
    Ok(two_norm(&r))
}

fn fem_coeff(e: crate::fem::FemError) -> VsError {
    match e {
        crate::fem::FemError::Coeff(c) => VsError::Coeff(c),
        // assemble_at only fails through coefficient evaluation
        other => VsError::BadConfig(format!("unexpected assembly failure: {other}")),
    }
}

/// Algorithm: greedy separated-representation build.
///
/// The first snapshot is the first element of the seed-shuffled training set;
/// each later snapshot is the remaining training sample with the largest
/// residual norm (ties broken by lowest original sample index). Stops when
/// the worst residual falls under the relative tolerance, the training set is
/// exhausted, or `max_terms` is reached. A training set on which F vanishes
/// identically yields the empty surrogate.
pub fn solve_vs(
    op: &AffineOperator,
    rhs: &AffineVector,
    cfg: &VsConfig,
) -> Result<SeparatedSolution, VsError> {
    cfg.validate()?;
    if op.n_rows != op.n_cols || op.n_rows != rhs.n {
        return Err(VsError::BadConfig(format!(
            "operator {}x{} with rhs length {}",
            op.n_rows, op.n_cols, rhs.n
        )));
    }
    let n = op.n_rows;
    let m_a = op.terms.len();
    let samples = &cfg.training.samples;

    let mut sol = SeparatedSolution {
        terms: Vec::new(),
        snapshots: Vec::new(),
        a_table: Vec::new(),
        f_table: Vec::new(),
        residual_history: Vec::new(),
        av: Vec::new(),
        dim: n,
    };

    // per-sample caches survive the whole build: samples never change
    let mut caches: Vec<MemoCache> = (0..samples.len()).map(|_| MemoCache::new()).collect();

    let mut rhs_norm_max: f64 = 0.0;
    for (s, cache) in samples.iter().zip(&mut caches) {
        let f = rhs.assemble_at(s, cache).map_err(fem_coeff)?;
        rhs_norm_max = rhs_norm_max.max(two_norm(&f));
    }
    if rhs_norm_max == 0.0 {
        return Ok(sol);
    }
    let threshold = cfg.tolerance * rhs_norm_max;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.training.seed);
    order.shuffle(&mut rng);
    let mut remaining: Vec<bool> = vec![true; samples.len()];
    let mut pick = order[0];
    let mut pick_residual = {
        let f = rhs.assemble_at(&samples[pick], &mut caches[pick]).map_err(fem_coeff)?;
        two_norm(&f)
    };

    while sol.n_terms() < cfg.max_terms {
        let xi = &samples[pick];
        let k = sol.n_terms();

        // residual at the snapshot (exact, not through the norm shortcut)
        let cache = &mut caches[pick];
        let mut r = rhs.assemble_at(xi, cache).map_err(fem_coeff)?;
        let p: Vec<f64> = op
            .terms
            .iter()
            .map(|t| evaluate(&t.coeff, xi, cache))
            .collect::<Result<_, _>>()?;
        for (i, (zeta, _)) in sol.terms.iter().enumerate() {
            let z = evaluate(zeta, xi, cache)?;
            for (j, pj) in p.iter().enumerate() {
                axpy(-z * pj, &sol.av[i][j], &mut r);
            }
        }

        let a_xi = op.assemble_at(xi, cache).map_err(fem_coeff)?;
        let fact =
            factorize(&a_xi).map_err(|source| VsError::SingularSnapshot { step: k, source })?;
        let mut c_k = fact
            .solve(&r)
            .map_err(|source| VsError::SingularSnapshot { step: k, source })?;
        // normalize the snapshot: zeta_k rescales inversely, so the product
        // zeta_k * c_k is unchanged, but the projection tables (and with them
        // the zeta denominators) stay at the operator's own scale instead of
        // shrinking quadratically as the residual converges
        let c_norm = two_norm(&c_k);
        if c_norm == 0.0 {
            remaining[pick] = false;
        } else {
            for v in &mut c_k {
                *v /= c_norm;
            }
        }
        if c_norm == 0.0 {
            match next_pick(op, rhs, &sol, samples, &remaining, &mut caches)? {
                Some((rn, s)) if rn >= threshold => {
                    pick = s;
                    pick_residual = rn;
                    continue;
                }
                _ => break,
            }
        }

        // cached operator products and projection tables for step k
        let av_k: Vec<Vec<f64>> = op
            .terms
            .iter()
            .map(|t| {
                let mut v = vec![0.0; n];
                t.matrix.spmv_into(&c_k, &mut v, 1.0);
                v
            })
            .collect();
        let mut a_row = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let av_i = if i < k { &sol.av[i] } else { &av_k };
            a_row.push((0..m_a).map(|j| dot(&c_k, &av_i[j])).collect::<Vec<f64>>());
        }
        let f_row: Vec<f64> = rhs.terms.iter().map(|t| dot(&c_k, &t.vector)).collect();

        // zeta_k = (sum_j F_kj q_j - sum_j sum_{i<k} A_kij p_j zeta_i)
        //          / (sum_j A_kkj p_j)
        let mut num_w = Vec::new();
        let mut num_e = Vec::new();
        for (j, t) in rhs.terms.iter().enumerate() {
            num_w.push(f_row[j]);
            num_e.push(t.coeff.clone());
        }
        for (i, (zeta_i, _)) in sol.terms.iter().enumerate() {
            for (j, t) in op.terms.iter().enumerate() {
                num_w.push(-a_row[i][j]);
                num_e.push(product(&t.coeff, zeta_i)?);
            }
        }
        let numerator = linear_combination(&num_w, &num_e)?;
        let den_e: Vec<CoeffExpr> = op.terms.iter().map(|t| t.coeff.clone()).collect();
        let denominator = linear_combination(&a_row[k], &den_e)?;
        let zeta_k = quotient(&numerator, &denominator)?;

        sol.terms.push((zeta_k, c_k));
        sol.snapshots.push(xi.clone());
        sol.a_table.push(a_row);
        sol.f_table.push(f_row);
        sol.residual_history.push(two_norm(&r));
        sol.av.push(av_k);
        remaining[pick] = false;

        match next_pick(op, rhs, &sol, samples, &remaining, &mut caches)? {
            None => break, // training set exhausted
            Some((rn, s)) => {
                if rn < threshold {
                    break;
                }
                pick = s;
                pick_residual = rn;
            }
        }
    }
    let _ = pick_residual;
    Ok(sol)
}

/// Worst remaining training residual, lowest index on ties.
fn next_pick(
    op: &AffineOperator,
    rhs: &AffineVector,
    sol: &SeparatedSolution,
    samples: &[Vec<f64>],
    remaining: &[bool],
    caches: &mut [MemoCache],
) -> Result<Option<(f64, usize)>, VsError> {
    let mut best: Option<(f64, usize)> = None;
    for s in 0..samples.len() {
        if !remaining[s] {
            continue;
        }
        let rn = residual_norm(op, rhs, sol, &samples[s], &mut caches[s])?;
        if best.map_or(true, |(b, _)| rn > b) {
            best = Some((rn, s));
        }
    }
    Ok(best)
}
