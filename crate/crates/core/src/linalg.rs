//! Dense complex linear algebra kernels shared by the estimators: Householder
//! least squares, cyclic Jacobi for Hermitian matrices, QL with implicit
//! shifts for real symmetric tridiagonals, and shifted QR for the small
//! general eigenproblems of the rotation step.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

pub(crate) struct LeastSquares {
    /// n x k solution of min ||A X - B||_F.
    pub solution: Array2<Complex64>,
    /// Residual energy ||b_col - A x_col||^2 per right-hand-side column.
    pub residual_energy: Vec<f64>,
    /// max/min modulus over the triangular factor diagonal; infinite when a
    /// diagonal entry vanishes. Cheap conditioning proxy.
    pub diag_ratio: f64,
}

/// Householder QR least squares for an m x n system (m >= n) with k
/// right-hand sides. Residual energies come from the transformed bottom rows,
/// so they are exact up to roundoff.
pub(crate) fn qr_least_squares(
    a: ArrayView2<Complex64>,
    b: ArrayView2<Complex64>,
) -> Result<LeastSquares> {
    let (m, n) = a.dim();
    let (mb, k) = b.dim();
    if mb != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: mb,
        });
    }
    if m < n {
        return Err(Error::DimensionMismatch { expected: n, got: m });
    }

    let mut r = a.to_owned();
    let mut c = b.to_owned();
    let mut diag = vec![0.0f64; n];

    for j in 0..n {
        let norm_x: f64 = (j..m).map(|i| r[[i, j]].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue; // zero column: diag stays 0, flagged through diag_ratio
        }
        let x0 = r[[j, j]];
        let alpha = if x0.norm() == 0.0 {
            Complex64::new(-norm_x, 0.0)
        } else {
            -(x0 / x0.norm()) * norm_x
        };
        // Householder vector v = x - alpha e_1 lives in column j, rows j..m.
        r[[j, j]] = x0 - alpha;
        let vnorm2: f64 = (j..m).map(|i| r[[i, j]].norm_sqr()).sum();
        if vnorm2 > 0.0 {
            let scale = 2.0 / vnorm2;
            for col in j + 1..n {
                let w: Complex64 = (j..m).map(|i| r[[i, j]].conj() * r[[i, col]]).sum();
                let w = w * scale;
                for i in j..m {
                    let vi = r[[i, j]];
                    r[[i, col]] -= w * vi;
                }
            }
            for col in 0..k {
                let w: Complex64 = (j..m).map(|i| r[[i, j]].conj() * c[[i, col]]).sum();
                let w = w * scale;
                for i in j..m {
                    let vi = r[[i, j]];
                    c[[i, col]] -= w * vi;
                }
            }
        }
        r[[j, j]] = alpha;
        diag[j] = norm_x;
    }

    let dmax = diag.iter().cloned().fold(0.0f64, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let diag_ratio = if dmin == 0.0 || n == 0 {
        if n == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        dmax / dmin
    };

    let mut solution = Array2::zeros((n, k));
    for col in 0..k {
        for j in (0..n).rev() {
            let mut s = c[[j, col]];
            for l in j + 1..n {
                s -= r[[j, l]] * solution[[l, col]];
            }
            solution[[j, col]] = if r[[j, j]].norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                s / r[[j, j]]
            };
        }
    }

    let residual_energy = (0..k)
        .map(|col| (n..m).map(|i| c[[i, col]].norm_sqr()).sum())
        .collect();

    Ok(LeastSquares {
        solution,
        residual_energy,
        diag_ratio,
    })
}

/// Relative Hermitian symmetry residual max |a_ij - conj(a_ji)| / scale.
pub(crate) fn hermitian_residual(a: ArrayView2<Complex64>) -> f64 {
    let n = a.nrows();
    let scale = a
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst / scale
}

pub(crate) struct HermitianEig {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Column k is the eigenvector for `values[k]`.
    pub vectors: Array2<Complex64>,
}

/// All eigenpairs of a Hermitian matrix by cyclic Jacobi rotations. Converges
/// when the off-diagonal Frobenius norm drops below `off_tol_rel * ||A||_F`.
pub(crate) fn jacobi_hermitian(
    a: ArrayView2<Complex64>,
    off_tol_rel: f64,
) -> Result<HermitianEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut w = a.to_owned();
    let mut v = Array2::<Complex64>::eye(n);
    let fro: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if fro == 0.0 || n == 1 {
        let values: Vec<f64> = (0..n).map(|i| w[[i, i]].re).collect();
        return Ok(sorted_desc(values, v));
    }
    let target = off_tol_rel * fro;

    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s += w[[i, j]].norm_sqr();
                    }
                }
            }
            s.sqrt()
        };
        if off <= target {
            let values: Vec<f64> = (0..n).map(|i| w[[i, i]].re).collect();
            return Ok(sorted_desc(values, v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[[p, q]];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let tau = (w[[q, q]].re - w[[p, p]].re) / (2.0 * mag);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                let s_ph = phase * sth;

                // columns: W <- W J with J = [[c, s e^{i phi}], [-s e^{-i phi}, c]]
                for i in 0..n {
                    let wip = w[[i, p]];
                    let wiq = w[[i, q]];
                    w[[i, p]] = wip * cth - wiq * s_ph.conj();
                    w[[i, q]] = wip * s_ph + wiq * cth;
                }
                // rows: W <- J^H W
                for jcol in 0..n {
                    let wpj = w[[p, jcol]];
                    let wqj = w[[q, jcol]];
                    w[[p, jcol]] = wpj * cth - s_ph * wqj;
                    w[[q, jcol]] = s_ph.conj() * wpj + wqj * cth;
                }
                w[[p, q]] = Complex64::new(0.0, 0.0);
                w[[q, p]] = Complex64::new(0.0, 0.0);
                w[[p, p]] = Complex64::new(w[[p, p]].re, 0.0);
                w[[q, q]] = Complex64::new(w[[q, q]].re, 0.0);

                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip * cth - viq * s_ph.conj();
                    v[[i, q]] = vip * s_ph + viq * cth;
                }
            }
        }
    }
    Err(Error::EigNoConvergence)
}

fn sorted_desc(values: Vec<f64>, vectors: Array2<Complex64>) -> HermitianEig {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut sorted_vectors = Array2::zeros(vectors.dim());
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..vectors.nrows() {
            sorted_vectors[[r, dst]] = vectors[[r, src]];
        }
    }
    HermitianEig {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

/// Eigenpairs of a real symmetric tridiagonal matrix (QL with implicit
/// shifts). `diag` has length n, `off` length n-1. Returns values descending
/// with the matching eigenvector columns of an n x n real matrix.
pub(crate) fn symtridiag_eig(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = diag.len();
    assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0f64; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = Array2::<f64>::eye(n);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::EigNoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for kk in 0..n {
                    f = z[[kk, i + 1]];
                    z[[kk, i + 1]] = s * z[[kk, i]] + c * f;
                    z[[kk, i]] = c * z[[kk, i]] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, dst]] = z[[r, src]];
        }
    }
    Ok((values, vectors))
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - det * 4.0).sqrt();
    let l1 = (tr + disc) * 0.5;
    let l2 = (tr - disc) * 0.5;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Unitary 2x2 with G^H [a; b] = [r; 0]; returns (c0, c1) meaning
/// G = [[c0, -conj(c1)], [c1, conj(c0)]].
fn givens(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if r == 0.0 {
        (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        (a / r, b / r)
    }
}

/// Eigenvalues of a small general complex matrix: Householder reduction to
/// upper Hessenberg followed by explicitly shifted QR with deflation.
pub(crate) fn general_eigenvalues(a: ArrayView2<Complex64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![a[[0, 0]]]);
    }
    let mut h = a.to_owned();

    // Hessenberg reduction.
    for col in 0..n.saturating_sub(2) {
        let norm_x: f64 = (col + 1..n)
            .map(|i| h[[i, col]].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = h[[col + 1, col]];
        let alpha = if x0.norm() == 0.0 {
            Complex64::new(-norm_x, 0.0)
        } else {
            -(x0 / x0.norm()) * norm_x
        };
        let mut v: Vec<Complex64> = (col + 1..n).map(|i| h[[i, col]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        // H <- (I - s v v^H) H  on rows col+1.., all columns
        for j in col..n {
            let w: Complex64 = v
                .iter()
                .enumerate()
                .map(|(i, vi)| vi.conj() * h[[col + 1 + i, j]])
                .sum();
            let w = w * scale;
            for (i, vi) in v.iter().enumerate() {
                h[[col + 1 + i, j]] -= w * vi;
            }
        }
        // H <- H (I - s v v^H)  on columns col+1.., all rows
        for i in 0..n {
            let w: Complex64 = v
                .iter()
                .enumerate()
                .map(|(jj, vj)| h[[i, col + 1 + jj]] * vj)
                .sum();
            let w = w * scale;
            for (jj, vj) in v.iter().enumerate() {
                h[[i, col + 1 + jj]] -= w * vj.conj();
            }
        }
        h[[col + 1, col]] = alpha;
        for i in col + 2..n {
            h[[i, col]] = Complex64::new(0.0, 0.0);
        }
    }

    let hnorm = h
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let negligible = |h: &Array2<Complex64>, i: usize| -> bool {
        h[[i, i - 1]].norm()
            <= f64::EPSILON * (h[[i - 1, i - 1]].norm() + h[[i, i]].norm()).max(hnorm * 1e-300)
            || h[[i, i - 1]].norm() <= 1e-300
    };

    let mut eigs = Vec::with_capacity(n);
    let mut hi = n - 1;
    let mut total_iters = 0usize;
    let mut stall = 0usize;
    let cap = 100 * n;

    loop {
        // deflate converged 1x1 tails
        while hi > 0 && negligible(&h, hi) {
            eigs.push(h[[hi, hi]]);
            hi -= 1;
            stall = 0;
        }
        if hi == 0 {
            eigs.push(h[[0, 0]]);
            break;
        }
        // active block [lo..=hi]
        let mut lo = hi;
        while lo > 0 && !negligible(&h, lo) {
            lo -= 1;
        }
        if hi == lo + 1 {
            // closed-form 2x2 block
            let (a2, b2, c2, d2) = (h[[lo, lo]], h[[lo, hi]], h[[hi, lo]], h[[hi, hi]]);
            let tr = a2 + d2;
            let det = a2 * d2 - b2 * c2;
            let disc = (tr * tr - det * 4.0).sqrt();
            eigs.push((tr + disc) * 0.5);
            eigs.push((tr - disc) * 0.5);
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            stall = 0;
            continue;
        }

        total_iters += 1;
        stall += 1;
        if total_iters > cap {
            return Err(Error::EigNoConvergence);
        }
        let mu = if stall.is_multiple_of(16) {
            // exceptional shift to break symmetry-induced stalls
            h[[hi, hi]] + Complex64::new(h[[hi, hi - 1]].norm(), 0.0) * 1.5
        } else {
            wilkinson_shift(
                h[[hi - 1, hi - 1]],
                h[[hi - 1, hi]],
                h[[hi, hi - 1]],
                h[[hi, hi]],
            )
        };

        // explicit shifted QR sweep on the block: H - mu I = QR, H <- RQ + mu I
        for i in lo..=hi {
            h[[i, i]] -= mu;
        }
        let mut rots: Vec<(Complex64, Complex64)> = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let (c0, c1) = givens(h[[i, i]], h[[i + 1, i]]);
            rots.push((c0, c1));
            for j in i..=hi {
                let t1 = h[[i, j]];
                let t2 = h[[i + 1, j]];
                h[[i, j]] = c0.conj() * t1 + c1.conj() * t2;
                h[[i + 1, j]] = -c1 * t1 + c0 * t2;
            }
        }
        for (idx, (c0, c1)) in rots.iter().enumerate() {
            let i = lo + idx;
            for r in lo..=(i + 1).min(hi) {
                let t1 = h[[r, i]];
                let t2 = h[[r, i + 1]];
                h[[r, i]] = t1 * c0 + t2 * c1;
                h[[r, i + 1]] = -t1 * c1.conj() + t2 * c0.conj();
            }
        }
        for i in lo..=hi {
            h[[i, i]] += mu;
        }
    }

    Ok(eigs)
}
