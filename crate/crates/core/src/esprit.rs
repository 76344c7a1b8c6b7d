//! Delay recovery from the signal subspace via rotation invariance.
//!
//! A Vandermonde-spanned subspace with column ratios `lambda_k =
//! exp(-j 2 pi D u_k)` satisfies `V_drop_last X = V_drop_first` for a K x K
//! matrix similar to `diag(lambda_k)`, for any basis of the subspace. The
//! delays are read off the eigenvalue phases; amplitudes then follow from a
//! per-antenna least-squares fit against the pilot samples.

use crate::channel_model::{lstsq_on_pilots, PilotLayout, PilotMeasurements};
use crate::error::{Error, Result};
use crate::linalg;
use crate::util::serde_cmat;
use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

pub const EIG_SMALL_CAP: usize = 64;
const COND_LIMIT: f64 = 1e12;
const DUPLICATE_DELAY_TOL: f64 = 1e-9;

/// Recovered common support with per-antenna amplitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportEstimate {
    pub k_hat: usize,
    /// Delays in frame-fraction units, ascending and pairwise distinct.
    pub delays: Vec<f64>,
    /// K x P amplitudes.
    #[serde(with = "serde_cmat")]
    pub amplitudes: Array2<Complex64>,
    /// Per-antenna residual energy of the least-squares fit.
    pub residual_energy: Vec<f64>,
    /// Set when near-coincident eigenvalues were merged into one delay.
    pub collapsed_duplicates: bool,
}

/// Least-squares rotation between the shifted halves of a subspace basis:
/// solves (rows 1..M of V) X = (rows 2..M+1 of V). The eigenvalues of X are
/// basis-invariant and carry the delays on the unit circle.
pub fn solve_rotation(v: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
    let (rows, k) = v.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("empty subspace basis".into()));
    }
    if rows < k + 1 {
        return Err(Error::DimensionMismatch {
            expected: k + 1,
            got: rows,
        });
    }
    let top = v.slice(s![..rows - 1, ..]);
    let bottom = v.slice(s![1.., ..]);
    let ls = linalg::qr_least_squares(top, bottom)?;
    if !ls.diag_ratio.is_finite() || ls.diag_ratio > COND_LIMIT {
        return Err(Error::SingularSupport(ls.diag_ratio));
    }
    Ok(ls.solution)
}

/// Eigenvalues of a small general complex matrix (Hessenberg reduction plus
/// shifted QR).
pub fn eig_small(x: ArrayView2<Complex64>) -> Result<Vec<Complex64>> {
    let n = x.nrows();
    if n > EIG_SMALL_CAP {
        return Err(Error::InvalidArgument(format!(
            "rotation dimension {n} exceeds cap {EIG_SMALL_CAP}"
        )));
    }
    linalg::general_eigenvalues(x)
}

/// Maps rotation eigenvalues to delays: u = -arg(lambda) / (2 pi D), with the
/// branch chosen so results land in the admissible window (-1/(2D), 1/(2D)].
/// Magnitudes are ignored. Near-coincident delays are merged and flagged.
pub fn delays_from_eigs(eigs: &[Complex64], layout: &PilotLayout) -> (Vec<f64>, bool) {
    let d = layout.spacing() as f64;
    let mut delays: Vec<f64> = eigs
        .iter()
        .map(|l| {
            let mut arg = l.arg(); // (-pi, pi]
            if arg == PI {
                arg = -PI; // wrap the branch point onto the admissible edge
            }
            -arg / (TAU * d)
        })
        .collect();
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged = Vec::with_capacity(delays.len());
    let mut collapsed = false;
    for u in delays {
        match merged.last() {
            Some(&last) if u - last <= DUPLICATE_DELAY_TOL => collapsed = true,
            _ => merged.push(u),
        }
    }
    (merged, collapsed)
}

/// Per-antenna least-squares amplitudes for a given delay support. Returns
/// the K x P coefficient matrix and the residual energy per antenna.
pub fn fit_amplitudes(
    meas: &PilotMeasurements,
    delays: &[f64],
) -> Result<(Array2<Complex64>, Vec<f64>)> {
    let n = meas.layout().num_pilots();
    if delays.is_empty() || delays.len() > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K <= N delays, got K={}, N={n}",
            delays.len()
        )));
    }
    let mut sorted = delays.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.windows(2).any(|w| w[1] - w[0] < 1e-12) {
        return Err(Error::DuplicateDelays);
    }
    let ls = lstsq_on_pilots(meas.layout(), delays, meas.samples().view())?;
    if !ls.diag_ratio.is_finite() || ls.diag_ratio > COND_LIMIT {
        return Err(Error::IllPosedSupport(ls.diag_ratio));
    }
    Ok((ls.solution, ls.residual_energy))
}

/// Evaluates the parametric model on every DFT bin of the frame:
/// response[r, p] = sum_k C[k,p] exp(-j 2 pi bin u_k) with bin = r - MD.
pub fn reconstruct_full_grid(
    delays: &[f64],
    amplitudes: &Array2<Complex64>,
    layout: &PilotLayout,
) -> Array2<Complex64> {
    let n_f = layout.frame_len();
    let p = amplitudes.ncols();
    let half = (layout.half_count() * layout.spacing()) as i64;
    let mut out = Array2::<Complex64>::zeros((n_f, p));
    for (k, &u) in delays.iter().enumerate() {
        // phase recurrence down the bins: w_{r+1} = w_r * step
        let step = Complex64::from_polar(1.0, -TAU * u);
        let mut w = Complex64::from_polar(1.0, -TAU * (-half as f64) * u);
        for r in 0..n_f {
            for pi in 0..p {
                out[[r, pi]] += amplitudes[[k, pi]] * w;
            }
            w *= step;
        }
    }
    out
}

/// Full support recovery from a signal-subspace basis: rotation, eigenvalues,
/// phases, then the amplitude fit.
pub fn estimate_support(
    meas: &PilotMeasurements,
    basis: ArrayView2<Complex64>,
) -> Result<SupportEstimate> {
    let x = solve_rotation(basis)?;
    let eigs = eig_small(x.view())?;
    let (delays, collapsed) = delays_from_eigs(&eigs, meas.layout());
    let (amplitudes, residual_energy) = fit_amplitudes(meas, &delays)?;
    Ok(SupportEstimate {
        k_hat: delays.len(),
        delays,
        amplitudes,
        residual_energy,
        collapsed_duplicates: collapsed,
    })
}
