//! Lanczos tridiagonalization of the Gram operator with online sparsity
//! detection.
//!
//! Each iteration applies the operator once, orthogonalizes through the
//! three-term recursion (plus full reorthogonalization against the whole
//! basis), and extracts the Ritz values of the growing real symmetric
//! tridiagonal matrix. The start vector is `A f` for a random `f`, so the
//! iteration lives inside the operator's range and a rank-K operator breaks
//! down after exactly K steps.
//!
//! After every iteration the partial effective rank
//!
//! ```text
//! PER_K = exp( -sum_k p_k ln p_k ),   p_k = sigma_k / (sigma_1 + .. + sigma_K),
//! ```
//!
//! is recomputed for every prefix of the current Ritz singular values (an
//! O(j) refresh per step, so the whole trace costs O(K^2)). PER grows by at
//! most 1 per index and stalls once further directions stop contributing
//! comparable energy. The detector picks the smallest K whose PER increment
//! no longer exceeds the average of the next `L` increments; when no such
//! K <= K_max exists the verdict is "not sparse" and callers are expected to
//! fall back to a non-parametric estimator.
//!
//! The iteration stops as soon as the decision is available (K + L + 1
//! steps plus a small convergence margin) or on happy breakdown, which
//! identifies an exact invariant subspace and reports its rank directly.

use crate::error::{Error, Result};
use crate::linalg;
use crate::toeplitz_ops::{ToeplitzGramOperator, DEFAULT_DENSE_CAP};
use crate::util;
use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Relative breakdown threshold on the recursion residual norm.
const BREAKDOWN_REL: f64 = 1e-12;

/// Ritz values below this fraction of the largest one are treated as exact
/// zeros when mapped to the singular scale; keeps roundoff-level residues of
/// a rank-deficient operator from masking the rank cliff.
const THETA_FLOOR_REL: f64 = 1e-10;

/// The newest Ritz values of a snapshot are still converging, which
/// depresses the trailing PER increments. The detector only scans the
/// snapshot prefix that excludes this many trailing increments, at the cost
/// of the same number of extra iterations before a verdict.
const CONVERGENCE_MARGIN: usize = 3;

fn singular_snapshot(theta: &[f64]) -> Vec<f64> {
    let floor = theta.first().copied().unwrap_or(0.0).max(0.0) * THETA_FLOOR_REL;
    theta
        .iter()
        .map(|&t| if t <= floor { 0.0 } else { ritz_to_singular(t) })
        .collect()
}

/// PER values for every prefix of a (nonincreasing) singular spectrum.
fn per_prefix_trace(sigma: &[f64]) -> Result<Vec<f64>> {
    (1..=sigma.len()).map(|k| per(&sigma[..k])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReorthPolicy {
    /// Orthogonalize the residual against every basis vector each step.
    Full,
    /// Plain three-term recursion only.
    None,
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Largest sparsity level the detector may report.
    pub k_max: usize,
    /// Detector look-ahead window L.
    pub window: usize,
    /// Slope margin; 0 accepts any non-decrease of the PER increments.
    pub eps_slope: f64,
    pub reorth: ReorthPolicy,
    /// Optional warm start (for example, a previous frame's dominant Ritz
    /// vector); a seeded random unit vector otherwise.
    pub initial: Option<Array1<Complex64>>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            k_max: 12,
            window: 3,
            eps_slope: 0.0,
            reorth: ReorthPolicy::Full,
            initial: None,
        }
    }
}

/// Basis and recursion coefficients accumulated during a run.
#[derive(Clone, Debug)]
pub struct LanczosState {
    pub basis: Vec<Array1<Complex64>>,
    /// Diagonal of the tridiagonal factor.
    pub alpha: Vec<f64>,
    /// Off-diagonals; includes the final residual norm beta_j.
    pub beta: Vec<f64>,
    pub per_trace: Vec<f64>,
    /// Ritz values (descending, clamped at 0) after each iteration.
    pub ritz_history: Vec<Vec<f64>>,
    /// Worst imaginary part seen in the diagonal coefficients; should be
    /// roundoff-level for a Hermitian operator.
    pub max_alpha_imag: f64,
    pub reorth: ReorthPolicy,
    /// FFT invocations consumed by this run.
    pub fft_calls: u64,
    pub breakdown: bool,
}

/// Ritz approximations of the operator's leading eigenpairs.
#[derive(Clone, Debug)]
pub struct RitzSet {
    /// Eigenvalue-scale Ritz values, descending, clamped at 0.
    pub values: Vec<f64>,
    /// Column k is the Ritz vector for `values[k]`, unit norm, length M+1.
    pub vectors: Array2<Complex64>,
    /// |beta_j s_last| residual bound per pair; 0 for an exact spectrum.
    pub residual_bounds: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "kebab-case")]
pub enum KEstimate {
    Sparse(usize),
    NotSparse,
}

impl KEstimate {
    pub fn sparsity(&self) -> Option<usize> {
        match self {
            KEstimate::Sparse(k) => Some(*k),
            KEstimate::NotSparse => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerDecision {
    pub estimate: KEstimate,
    pub per_trace: Vec<f64>,
    pub window: usize,
    pub k_max: usize,
}

/// Maps a Ritz value of T^H T to the singular-value scale of T used by the
/// PER. Isolated so the scale convention can be changed in one place.
#[inline]
pub fn ritz_to_singular(theta: f64) -> f64 {
    theta.max(0.0).sqrt()
}

/// Partial effective rank of a nonincreasing nonnegative prefix: the
/// exponential of the entropy of the normalized values, with 0 ln 0 = 0.
pub fn per(sigma_prefix: &[f64]) -> Result<f64> {
    if sigma_prefix.is_empty() {
        return Err(Error::InvalidArgument("empty singular prefix".into()));
    }
    if sigma_prefix.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidArgument(
            "negative entry in singular prefix".into(),
        ));
    }
    let total: f64 = sigma_prefix.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("all-zero singular prefix".into()));
    }
    let mut entropy = 0.0;
    for &s in sigma_prefix {
        if s > 0.0 {
            let p = s / total;
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.exp())
}

fn increment(trace: &[f64], k: usize) -> f64 {
    // Delta_k = PER_{k+1} - PER_k with 1-based PER indices
    trace[k] - trace[k - 1]
}

/// Flatness allowance after a knee, as a fraction of the preceding increment
/// drop. A noise-floor plateau decays slightly instead of staying exactly
/// flat, so the tail average alone would sit just below Delta_K and the
/// detector would never fire; scaling the slack by the drop keeps smooth
/// (no-knee) traces unaffected.
const DROP_TOLERANCE: f64 = 0.05;

fn detector_fires(trace: &[f64], k: usize, window: usize, eps_slope: f64) -> bool {
    let dk = increment(trace, k);
    let tail: f64 = (1..=window).map(|l| increment(trace, k + l)).sum();
    // Delta_0 = PER_1 - PER_0 with the empty spectrum assigned PER_0 = 0
    let prev = if k == 1 { 1.0 } else { increment(trace, k - 1) };
    let slack = DROP_TOLERANCE * (prev - dk).max(0.0);
    dk <= tail / window as f64 + slack - eps_slope
}

/// Positive-slope detector over a PER trace: the smallest K >= 1 whose
/// increment stops exceeding the mean of the following `window` increments
/// (up to a small drop-proportional flatness allowance). Deciding at K
/// consumes PER values up to index K + window + 1.
pub fn estimate_k(
    per_trace: &[f64],
    window: usize,
    k_max: usize,
    eps_slope: f64,
) -> Result<PerDecision> {
    if window == 0 || k_max == 0 {
        return Err(Error::InvalidArgument(
            "window and k_max must be >= 1".into(),
        ));
    }
    let need = window + 2;
    if per_trace.len() < need {
        return Err(Error::TraceTooShort {
            have: per_trace.len(),
            need,
        });
    }
    let testable = k_max.min(per_trace.len() - window - 1);
    let mut estimate = KEstimate::NotSparse;
    for k in 1..=testable {
        if detector_fires(per_trace, k, window, eps_slope) {
            estimate = KEstimate::Sparse(k);
            break;
        }
    }
    Ok(PerDecision {
        estimate,
        per_trace: per_trace.to_vec(),
        window,
        k_max,
    })
}

fn normalized(v: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::InvalidArgument("zero initial vector".into()));
    }
    Ok(v.mapv(|z| z / n))
}

fn random_unit(dim: usize, seed: u64) -> Array1<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = Array1::from_shape_fn(dim, |_| util::complex_gaussian(&mut rng));
    normalized(&v).expect("Gaussian draw is nonzero")
}

/// Runs the Lanczos iteration with online PER tracking and the default
/// options except for the detector parameters.
pub fn lanczos_run(
    op: &ToeplitzGramOperator,
    k_max: usize,
    window: usize,
    seed: u64,
) -> Result<(LanczosState, RitzSet, PerDecision)> {
    let opts = LanczosOptions {
        k_max,
        window,
        ..LanczosOptions::default()
    };
    lanczos_run_with(op, &opts, seed)
}

pub fn lanczos_run_with(
    op: &ToeplitzGramOperator,
    opts: &LanczosOptions,
    seed: u64,
) -> Result<(LanczosState, RitzSet, PerDecision)> {
    if opts.k_max == 0 || opts.window == 0 {
        return Err(Error::InvalidArgument(
            "k_max and window must be >= 1".into(),
        ));
    }
    let dim = op.dim();
    if opts.k_max + opts.window > dim {
        return Err(Error::OperatorTooSmall { dim });
    }
    let j_cap = (opts.k_max + opts.window + 1 + CONVERGENCE_MARGIN).min(dim);
    let fft_before = op.fft_calls();

    let f = match &opts.initial {
        Some(v) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            normalized(v)?
        }
        None => random_unit(dim, seed),
    };
    // start inside the operator's range so a rank-K operator saturates the
    // Krylov space after exactly K steps
    let g = op.apply(f.view())?;
    let gnorm: f64 = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if gnorm == 0.0 {
        let state = LanczosState {
            basis: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            per_trace: Vec::new(),
            ritz_history: Vec::new(),
            max_alpha_imag: 0.0,
            reorth: opts.reorth,
            fft_calls: op.fft_calls() - fft_before,
            breakdown: true,
        };
        let ritz = RitzSet {
            values: Vec::new(),
            vectors: Array2::zeros((dim, 0)),
            residual_bounds: Vec::new(),
        };
        let decision = PerDecision {
            estimate: KEstimate::Sparse(0),
            per_trace: Vec::new(),
            window: opts.window,
            k_max: opts.k_max,
        };
        return Ok((state, ritz, decision));
    }

    let mut basis: Vec<Array1<Complex64>> = vec![g.mapv(|z| z / gnorm)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut per_trace: Vec<f64> = Vec::new();
    let mut ritz_history: Vec<Vec<f64>> = Vec::new();
    let mut max_alpha_imag = 0.0f64;
    let mut breakdown = false;
    let mut estimate: Option<KEstimate> = None;
    let mut tri: (Vec<f64>, Array2<f64>) = (Vec::new(), Array2::zeros((0, 0)));

    for j in 1..=j_cap {
        let qj = basis[j - 1].clone();
        let mut w = op.apply(qj.view())?;
        if j > 1 {
            let b = beta[j - 2];
            let qprev = &basis[j - 2];
            for (wi, qi) in w.iter_mut().zip(qprev.iter()) {
                *wi -= qi * b;
            }
        }
        let alpha_raw: Complex64 = qj.iter().zip(w.iter()).map(|(q, x)| q.conj() * x).sum();
        max_alpha_imag = max_alpha_imag.max(alpha_raw.im.abs());
        let a_j = alpha_raw.re;
        for (wi, qi) in w.iter_mut().zip(qj.iter()) {
            *wi -= qi * a_j;
        }
        if opts.reorth == ReorthPolicy::Full {
            let before: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for pass in 0..2 {
                for qi in &basis {
                    let c: Complex64 = qi.iter().zip(w.iter()).map(|(q, x)| q.conj() * x).sum();
                    for (wi, qv) in w.iter_mut().zip(qi.iter()) {
                        *wi -= qv * c;
                    }
                }
                let after: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if pass == 0 && after > 0.707 * before {
                    break; // first pass preserved the norm; second not needed
                }
            }
        }
        let b_j = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        alpha.push(a_j);

        let (theta, svecs) = linalg::symtridiag_eig(&alpha, &beta)?;
        let sigma = singular_snapshot(&theta);
        if sigma[0] == 0.0 {
            // operator annihilates the whole Krylov space: empty spectrum
            estimate = Some(KEstimate::Sparse(0));
            breakdown = true;
            beta.push(b_j);
            tri = (theta, svecs);
            break;
        }
        // refresh the whole PER trace from the current Ritz estimates; the
        // early prefixes sharpen as the extreme Ritz values converge
        per_trace = per_prefix_trace(&sigma)?;
        ritz_history.push(theta.iter().map(|&t| t.max(0.0)).collect());
        tri = (theta, svecs);
        beta.push(b_j);

        let scale = tri.0[0].max(f64::MIN_POSITIVE);
        if b_j <= BREAKDOWN_REL * scale {
            breakdown = true;
            // an exact invariant subspace is rank evidence, not a matter for
            // the slope heuristic: count the strictly positive directions
            let rank = sigma.iter().filter(|&&s| s > 0.0).count();
            estimate = Some(if rank <= opts.k_max {
                KEstimate::Sparse(rank)
            } else {
                KEstimate::NotSparse
            });
            break;
        }

        let scan_len = per_trace.len().saturating_sub(CONVERGENCE_MARGIN);
        if scan_len >= opts.window + 2 {
            let d = estimate_k(&per_trace[..scan_len], opts.window, opts.k_max, opts.eps_slope)?;
            if let KEstimate::Sparse(k) = d.estimate {
                estimate = Some(KEstimate::Sparse(k));
                break;
            }
        }

        if j < j_cap {
            basis.push(w.mapv(|z| z / b_j));
        }
    }

    let estimate = estimate.unwrap_or(KEstimate::NotSparse);
    let ritz = build_ritz(&basis, &tri.0, &tri.1, *beta.last().unwrap_or(&0.0));
    let state = LanczosState {
        basis,
        alpha,
        beta,
        per_trace: per_trace.clone(),
        ritz_history,
        max_alpha_imag,
        reorth: opts.reorth,
        fft_calls: op.fft_calls() - fft_before,
        breakdown,
    };
    let decision = PerDecision {
        estimate,
        per_trace,
        window: opts.window,
        k_max: opts.k_max,
    };
    Ok((state, ritz, decision))
}

fn build_ritz(
    basis: &[Array1<Complex64>],
    theta: &[f64],
    svecs: &Array2<f64>,
    beta_last: f64,
) -> RitzSet {
    let j = theta.len();
    let dim = basis.first().map_or(0, |q| q.len());
    let mut vectors = Array2::<Complex64>::zeros((dim, j));
    for k in 0..j {
        for (i, qi) in basis.iter().take(j).enumerate() {
            let s = svecs[[i, k]];
            for (r, q) in qi.iter().enumerate() {
                vectors[[r, k]] += q * s;
            }
        }
    }
    let residual_bounds = (0..j)
        .map(|k| (beta_last * svecs[[j - 1, k]]).abs())
        .collect();
    RitzSet {
        values: theta.iter().map(|&t| t.max(0.0)).collect(),
        vectors,
        residual_bounds,
    }
}

/// Exact eigenpairs of a Hermitian matrix by cyclic Jacobi rotations,
/// descending; the reference spectrum for the Krylov path.
pub struct DenseEig {
    pub values: Vec<f64>,
    pub vectors: Array2<Complex64>,
}

pub fn dense_eig_reference(a: ArrayView2<Complex64>) -> Result<DenseEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n > DEFAULT_DENSE_CAP + 1 {
        return Err(Error::DenseCapExceeded {
            m: n.saturating_sub(1),
            cap: DEFAULT_DENSE_CAP,
        });
    }
    let resid = linalg::hermitian_residual(a);
    if resid > 1e-8 {
        return Err(Error::NotHermitian(resid));
    }
    let eig = linalg::jacobi_hermitian(a, 1e-12)?;
    Ok(DenseEig {
        values: eig.values,
        vectors: eig.vectors,
    })
}

/// Same PER logic on the exact spectrum from a full eigendecomposition:
/// the comparison arm against the Krylov path, and the estimator used when
/// benchmarking the dense route.
pub fn fri_per_dense(
    op: &ToeplitzGramOperator,
    k_max: usize,
    window: usize,
) -> Result<(RitzSet, PerDecision)> {
    fri_per_dense_with(op, k_max, window, 0.0, DEFAULT_DENSE_CAP)
}

pub fn fri_per_dense_with(
    op: &ToeplitzGramOperator,
    k_max: usize,
    window: usize,
    eps_slope: f64,
    cap: usize,
) -> Result<(RitzSet, PerDecision)> {
    if k_max == 0 || window == 0 {
        return Err(Error::InvalidArgument(
            "k_max and window must be >= 1".into(),
        ));
    }
    let dense = op.dense_materialize_with_cap(cap)?;
    let eig = dense_eig_reference(dense.view())?;
    let sigma = singular_snapshot(&eig.values);

    let dim = sigma.len();
    let trace_len = (k_max + window + 1).min(dim);
    if sigma[0] == 0.0 {
        let decision = PerDecision {
            estimate: KEstimate::Sparse(0),
            per_trace: Vec::new(),
            window,
            k_max,
        };
        let ritz = RitzSet {
            values: eig.values.iter().map(|&t| t.max(0.0)).collect(),
            vectors: eig.vectors,
            residual_bounds: vec![0.0; dim],
        };
        return Ok((ritz, decision));
    }
    let per_trace = per_prefix_trace(&sigma[..trace_len])?;
    // exact rank cliff: the spectrum itself is rank evidence, mirroring the
    // Krylov route's happy breakdown
    let rank = sigma.iter().filter(|&&s| s > 0.0).count();
    let decision = if rank < dim {
        PerDecision {
            estimate: if rank <= k_max {
                KEstimate::Sparse(rank)
            } else {
                KEstimate::NotSparse
            },
            per_trace: per_trace.clone(),
            window,
            k_max,
        }
    } else {
        estimate_k(&per_trace, window, k_max, eps_slope)?
    };
    let ritz = RitzSet {
        values: eig.values.iter().map(|&t| t.max(0.0)).collect(),
        vectors: eig.vectors,
        residual_bounds: vec![0.0; dim],
    };
    Ok((ritz, decision))
}

/// Largest eigenvalue of the Gram operator by a plain (detector-free)
/// Lanczos iteration with full reorthogonalization.
pub fn estimate_largest_eigenvalue(
    op: &ToeplitzGramOperator,
    max_iters: usize,
    seed: u64,
) -> Result<f64> {
    let dim = op.dim();
    let iters = max_iters.max(1).min(dim);
    let mut basis = vec![random_unit(dim, seed)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut top = 0.0f64;
    for j in 1..=iters {
        let qj = basis[j - 1].clone();
        let mut w = op.apply(qj.view())?;
        if j > 1 {
            let b = beta[j - 2];
            for (wi, qi) in w.iter_mut().zip(basis[j - 2].iter()) {
                *wi -= qi * b;
            }
        }
        let a_j: f64 = qj
            .iter()
            .zip(w.iter())
            .map(|(q, x)| (q.conj() * x).re)
            .sum();
        for (wi, qi) in w.iter_mut().zip(qj.iter()) {
            *wi -= qi * a_j;
        }
        for qi in &basis {
            let c: Complex64 = qi.iter().zip(w.iter()).map(|(q, x)| q.conj() * x).sum();
            for (wi, qv) in w.iter_mut().zip(qi.iter()) {
                *wi -= qv * c;
            }
        }
        let b_j = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        alpha.push(a_j);
        let (theta, _) = linalg::symtridiag_eig(&alpha, &beta)?;
        top = theta[0].max(0.0);
        if b_j <= 1e-13 * top.max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(b_j);
        if j < iters {
            basis.push(w.mapv(|z| z / b_j));
        }
    }
    Ok(top)
}
