//! Non-parametric and discrete-sparsity baseline estimators.
//!
//! The lowpass interpolator inverts the pilot comb in the transform domain:
//! an N-point inverse DFT of the pilot samples yields taps on the decimated
//! delay grid `q / (N D)`, taps outside the configured delay window are
//! zeroed, and the kept taps are evaluated back onto every DFT bin. On the
//! pilot subspace this is the orthogonal projection onto the windowed tap
//! space, it is idempotent, and it reproduces the pilot samples exactly when
//! the window spans the full admissible range.
//!
//! RA-ORMP performs greedy joint-sparse recovery over an (optionally
//! oversampled) dictionary of candidate delays, scoring each candidate atom
//! after projecting out the selected span and renormalizing, against an
//! orthonormal basis of the residual column space (the rank-aware step).

use crate::channel_model::{PilotLayout, PilotMeasurements};
use crate::error::{Error, Result};
use crate::linalg;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// Dictionary of candidate delays on a uniform grid with spacing
/// `1 / (N D oversample)`.
#[derive(Clone, Debug)]
pub struct DelayGrid {
    layout: PilotLayout,
    delays: Vec<f64>,
    /// N x G raw atoms exp(-j 2 pi bin u); every column has norm sqrt(N).
    atoms: Array2<Complex64>,
    oversample: usize,
}

impl DelayGrid {
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn atoms(&self) -> &Array2<Complex64> {
        &self.atoms
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        let n = self.layout.num_pilots() as f64;
        let d = self.layout.spacing() as f64;
        1.0 / (n * d * self.oversample as f64)
    }
}

/// Builds the candidate grid covering `[-delay_window/2, delay_window/2]`.
/// With `oversample = 1` and the full admissible window the dictionary is
/// square (N columns) and invertible.
pub fn build_delay_grid(
    layout: &PilotLayout,
    delay_window: f64,
    oversample: usize,
) -> Result<DelayGrid> {
    if oversample == 0 {
        return Err(Error::InvalidArgument("oversample must be >= 1".into()));
    }
    let max_window = 1.0 / layout.spacing() as f64;
    if delay_window > max_window * (1.0 + 1e-12) {
        return Err(Error::WindowTooWide {
            window: delay_window,
            max: max_window,
        });
    }
    if delay_window < 0.0 {
        return Err(Error::InvalidArgument("negative delay window".into()));
    }
    let n = layout.num_pilots() as f64;
    let d = layout.spacing() as f64;
    let step = 1.0 / (n * d * oversample as f64);
    let qmax = ((delay_window / 2.0) / step + 1e-9).floor() as i64;
    let delays: Vec<f64> = (-qmax..=qmax).map(|q| q as f64 * step).collect();
    if delays.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let bins: Vec<i64> = layout.pilot_bins().collect();
    let atoms = Array2::from_shape_fn((bins.len(), delays.len()), |(r, g)| {
        Complex64::from_polar(1.0, -TAU * bins[r] as f64 * delays[g])
    });
    Ok(DelayGrid {
        layout: *layout,
        delays,
        atoms,
        oversample,
    })
}

/// Lowpass interpolation of the pilot samples onto the full frame,
/// restricted to CIR taps inside `delay_window` (frame-fraction units).
pub fn lowpass_interpolate(
    meas: &PilotMeasurements,
    delay_window: f64,
) -> Result<Array2<Complex64>> {
    let layout = meas.layout();
    let n = layout.num_pilots();
    let d = layout.spacing() as f64;
    let m = layout.half_count();
    let max_window = 1.0 / d;
    if delay_window > max_window * (1.0 + 1e-12) {
        return Err(Error::WindowTooWide {
            window: delay_window,
            max: max_window,
        });
    }
    if delay_window < 0.0 {
        return Err(Error::InvalidArgument("negative delay window".into()));
    }
    let qmax = (((delay_window / 2.0) * n as f64 * d) + 1e-9).floor() as i64;
    let qmax = qmax.min(m as i64);

    let mut planner = FftPlanner::new();
    let inv = planner.plan_fft_inverse(n);

    let n_f = layout.frame_len();
    let p = meas.num_antennas();
    let half_bin = (m * layout.spacing()) as i64;
    let mut out = Array2::<Complex64>::zeros((n_f, p));
    let nd = n as f64 * d;

    let mut taps = vec![Complex64::new(0.0, 0.0); n];
    for pi in 0..p {
        // natural DFT order: signed pilot index n maps to (n mod N)
        for z in taps.iter_mut() {
            *z = Complex64::new(0.0, 0.0);
        }
        for (r, z) in meas.samples().column(pi).iter().enumerate() {
            let idx = (r + m + 1) % n;
            taps[idx] = *z;
        }
        inv.process(&mut taps);
        let scale = 1.0 / n as f64;

        for row in 0..n_f {
            let bin = row as i64 - half_bin;
            let step = Complex64::from_polar(1.0, -TAU * bin as f64 / nd);
            let mut w = Complex64::from_polar(1.0, TAU * bin as f64 * qmax as f64 / nd);
            let mut acc = Complex64::new(0.0, 0.0);
            for q in -qmax..=qmax {
                let idx = ((q + n as i64) % n as i64) as usize;
                acc += taps[idx] * scale * w;
                w *= step;
            }
            out[[row, pi]] = acc;
        }
    }
    Ok(out)
}

/// Rank-aware order-recursive matching pursuit over a delay grid.
#[derive(Clone, Debug)]
pub struct OrmpOutcome {
    /// Selected grid indices in ascending-delay order.
    pub support: Vec<usize>,
    /// Selected candidate delays, ascending.
    pub delays: Vec<f64>,
    /// K x P joint least-squares coefficients for the raw atoms.
    pub coefficients: Array2<Complex64>,
    /// Residual energy before each selection and after the last one.
    pub residual_history: Vec<f64>,
    /// Set when the residual subspace collapsed before the target size.
    pub collapsed: bool,
}

fn project_out(
    basis: &[Array1<Complex64>],
    y: &Array2<Complex64>,
) -> Array2<Complex64> {
    let mut r = y.clone();
    for q in basis {
        for col in 0..r.ncols() {
            let dot: Complex64 = q
                .iter()
                .zip(r.column(col).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            for (i, qi) in q.iter().enumerate() {
                let sub = qi * dot;
                r[[i, col]] -= sub;
            }
        }
    }
    r
}

/// Greedy MMV recovery: selects up to `k_target` grid atoms, stopping early
/// when the residual energy drops below `residual_threshold` (absolute) or
/// when the residual subspace collapses.
pub fn ra_ormp(
    meas: &PilotMeasurements,
    grid: &DelayGrid,
    k_target: usize,
    residual_threshold: Option<f64>,
) -> Result<OrmpOutcome> {
    let n = meas.layout().num_pilots();
    if grid.atoms.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grid.atoms.nrows(),
        });
    }
    if k_target == 0 || k_target > n.min(grid.len()) {
        return Err(Error::InvalidArgument(format!(
            "k_target must be in 1..=min(N, grid), got {k_target}"
        )));
    }
    let y = meas.samples();
    let p = y.ncols();
    let total_energy: f64 = y.iter().map(|z| z.norm_sqr()).sum();

    let mut selected: Vec<usize> = Vec::new();
    let mut basis: Vec<Array1<Complex64>> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut collapsed = false;

    if total_energy == 0.0 {
        return Ok(OrmpOutcome {
            support: Vec::new(),
            delays: Vec::new(),
            coefficients: Array2::zeros((0, p)),
            residual_history: vec![0.0],
            collapsed: false,
        });
    }

    loop {
        let residual = project_out(&basis, y);
        let res_energy: f64 = residual.iter().map(|z| z.norm_sqr()).sum();
        history.push(res_energy);
        if selected.len() >= k_target {
            break;
        }
        if res_energy <= 1e-24 * total_energy {
            // the measurements live inside the selected span; direction
            // cosines against roundoff residue would still look large
            collapsed = true;
            break;
        }
        if let Some(thr) = residual_threshold {
            if res_energy < thr {
                break;
            }
        }

        // orthonormal basis of the residual column space
        let mut u_cols: Vec<Array1<Complex64>> = Vec::with_capacity(p);
        let res_scale = res_energy.sqrt().max(f64::MIN_POSITIVE);
        for col in 0..p {
            let mut c = residual.column(col).to_owned();
            for u in &u_cols {
                let dot: Complex64 = u.iter().zip(c.iter()).map(|(a, b)| a.conj() * b).sum();
                for (ci, ui) in c.iter_mut().zip(u.iter()) {
                    *ci -= ui * dot;
                }
            }
            let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-10 * res_scale {
                u_cols.push(c.mapv(|z| z / norm));
            }
        }
        if u_cols.is_empty() {
            collapsed = true;
            break;
        }

        // rank-aware scoring: project atom out of the selected span,
        // renormalize, then correlate with the residual subspace
        let mut best: Option<(usize, f64)> = None;
        for g in 0..grid.len() {
            if selected.contains(&g) {
                continue;
            }
            let mut phi = grid.atoms.column(g).to_owned();
            for q in &basis {
                let dot: Complex64 = q.iter().zip(phi.iter()).map(|(a, b)| a.conj() * b).sum();
                for (pi, qi) in phi.iter_mut().zip(q.iter()) {
                    *pi -= qi * dot;
                }
            }
            let norm: f64 = phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm <= 1e-8 * (n as f64).sqrt() {
                continue; // atom already inside the selected span
            }
            let score: f64 = u_cols
                .iter()
                .map(|u| {
                    let dot: Complex64 =
                        phi.iter().zip(u.iter()).map(|(a, b)| a.conj() * b).sum();
                    (dot / norm).norm_sqr()
                })
                .sum::<f64>()
                .sqrt();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((g, score));
            }
        }
        let Some((g_star, score)) = best else {
            collapsed = true;
            break;
        };
        if score <= 1e-12 {
            collapsed = true;
            break;
        }

        // extend the orthonormal selected-span basis with the winning atom
        let mut q_new = grid.atoms.column(g_star).to_owned();
        for q in &basis {
            let dot: Complex64 = q.iter().zip(q_new.iter()).map(|(a, b)| a.conj() * b).sum();
            for (zi, qi) in q_new.iter_mut().zip(q.iter()) {
                *zi -= qi * dot;
            }
        }
        let norm: f64 = q_new.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        basis.push(q_new.mapv(|z| z / norm));
        selected.push(g_star);
    }

    if selected.is_empty() {
        return Ok(OrmpOutcome {
            support: Vec::new(),
            delays: Vec::new(),
            coefficients: Array2::zeros((0, p)),
            residual_history: history,
            collapsed,
        });
    }

    selected.sort_unstable();
    let delays: Vec<f64> = selected.iter().map(|&g| grid.delays[g]).collect();
    let mut sub = Array2::<Complex64>::zeros((n, selected.len()));
    for (c, &g) in selected.iter().enumerate() {
        for r in 0..n {
            sub[[r, c]] = grid.atoms[[r, g]];
        }
    }
    let ls = linalg::qr_least_squares(sub.view(), y.view())?;
    Ok(OrmpOutcome {
        support: selected,
        delays,
        coefficients: ls.solution,
        residual_history: history,
        collapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{
        add_awgn, sample_pilots, ChannelSpec, PilotLayout,
    };
    use crate::esprit::reconstruct_full_grid;

    fn tap_delay(layout: &PilotLayout, q: i64) -> f64 {
        q as f64 / (layout.num_pilots() as f64 * layout.spacing() as f64)
    }

    fn meas_from_spec(layout: &PilotLayout, delays: &[f64], seed: u64) -> PilotMeasurements {
        let mut rng = rand::SeedableRng::seed_from_u64(seed);
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        let gains = Array2::from_shape_fn((delays.len(), 3), |_| {
            crate::util::complex_gaussian(rng)
        });
        let spec = ChannelSpec::new(delays.to_vec(), gains).unwrap();
        sample_pilots(&spec, layout).unwrap()
    }

    #[test]
    fn on_grid_channel_is_reconstructed_exactly() {
        let layout = PilotLayout::new(10, 3).unwrap();
        let delays = vec![tap_delay(&layout, -4), tap_delay(&layout, 1), tap_delay(&layout, 7)];
        let meas = meas_from_spec(&layout, &delays, 5);
        let full = lowpass_interpolate(&meas, 1.0 / 3.0).unwrap();
        let spec_delays = delays;
        let gains = {
            // recover the true gains for the oracle response (fit is exact here)
            crate::esprit::fit_amplitudes(&meas, &spec_delays).unwrap().0
        };
        let truth = reconstruct_full_grid(&spec_delays, &gains, &layout);
        let num: f64 = (&full - &truth).iter().map(|z| z.norm_sqr()).sum();
        let den: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-10, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn interpolation_reproduces_pilot_samples_and_is_idempotent() {
        let layout = PilotLayout::new(8, 3).unwrap();
        let meas = add_awgn(
            &meas_from_spec(&layout, &[-0.071, 0.033, 0.102], 9),
            3.0,
            17,
        )
        .unwrap();
        let window = 1.0 / 3.0;
        let full = lowpass_interpolate(&meas, window).unwrap();
        let half_bin = (layout.half_count() * layout.spacing()) as i64;

        // pilot restriction equals the input samples
        let mut pilot_rows = Array2::zeros((layout.num_pilots(), meas.num_antennas()));
        for (r, bin) in layout.pilot_bins().enumerate() {
            for p in 0..meas.num_antennas() {
                pilot_rows[[r, p]] = full[[(bin + half_bin) as usize, p]];
            }
        }
        let scale: f64 = meas.samples().iter().map(|z| z.norm()).fold(1e-300, f64::max);
        for (a, b) in pilot_rows.iter().zip(meas.samples().iter()) {
            assert!((a - b).norm() <= 1e-12 * scale, "pilot interpolation broken");
        }

        // applying again on the resampled pilots changes nothing
        let meas2 =
            PilotMeasurements::new(*meas.layout(), pilot_rows, meas.noise_variance()).unwrap();
        let full2 = lowpass_interpolate(&meas2, window).unwrap();
        for (a, b) in full.iter().zip(full2.iter()) {
            assert!((a - b).norm() <= 1e-12 * scale, "projector not idempotent");
        }
    }

    #[test]
    fn transform_path_matches_dense_kernel() {
        let layout = PilotLayout::new(5, 3).unwrap();
        let meas = add_awgn(&meas_from_spec(&layout, &[-0.09, 0.05], 3), 0.0, 7).unwrap();
        let n = layout.num_pilots();
        let n_f = layout.frame_len();
        let half_bin = (layout.half_count() * layout.spacing()) as i64;
        let d = layout.spacing() as f64;

        // dense kernel: row = target bin, column = pilot; Dirichlet ratio in
        // the decimated variable x = (pilot_bin - bin) / D
        let bins: Vec<i64> = layout.pilot_bins().collect();
        let mut kernel = Array2::<Complex64>::zeros((n_f, n));
        for row in 0..n_f {
            let bin = row as i64 - half_bin;
            for (c, &pb) in bins.iter().enumerate() {
                let x = (pb - bin) as f64 / d;
                // |x| <= 2M < N, so the denominator only vanishes at x = 0
                let val = if x == 0.0 {
                    n as f64
                } else {
                    (std::f64::consts::PI * x).sin()
                        / (std::f64::consts::PI * x / n as f64).sin()
                };
                kernel[[row, c]] = Complex64::new(val / n as f64, 0.0);
            }
        }
        let dense = kernel.dot(meas.samples());
        let fast = lowpass_interpolate(&meas, 1.0 / 3.0).unwrap();
        let scale: f64 = dense.iter().map(|z| z.norm()).fold(1e-300, f64::max);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn too_wide_window_is_rejected() {
        let layout = PilotLayout::new(6, 3).unwrap();
        let meas = meas_from_spec(&layout, &[0.01], 2);
        assert!(matches!(
            lowpass_interpolate(&meas, 0.5),
            Err(Error::WindowTooWide { .. })
        ));
    }

    #[test]
    fn full_grid_is_square_with_unit_modulus_atoms() {
        let layout = PilotLayout::new(7, 3).unwrap();
        let grid = build_delay_grid(&layout, 1.0 / 3.0, 1).unwrap();
        let n = layout.num_pilots();
        assert_eq!(grid.len(), n);
        for g in 0..grid.len() {
            let norm: f64 = grid
                .atoms()
                .column(g)
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!((norm - (n as f64).sqrt()).abs() < 1e-12);
        }
        // invertible: QR diagonal stays well away from zero
        let eye = Array2::<Complex64>::eye(n);
        let ls = linalg::qr_least_squares(grid.atoms().view(), eye.view()).unwrap();
        assert!(ls.diag_ratio < 1e6, "dictionary nearly singular: {}", ls.diag_ratio);
    }

    #[test]
    fn on_grid_single_path_matches_one_atom() {
        let layout = PilotLayout::new(9, 3).unwrap();
        let grid = build_delay_grid(&layout, 1.0 / 3.0, 1).unwrap();
        let u = tap_delay(&layout, 5);
        let meas = meas_from_spec(&layout, &[u], 8);
        let g_expect = grid
            .delays()
            .iter()
            .position(|&d| (d - u).abs() < 1e-12)
            .unwrap();
        // the matching atom correlates perfectly, all others strictly less
        let y = meas.samples().column(0).to_owned();
        let ynorm: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let n = layout.num_pilots() as f64;
        let mut best = (0usize, 0.0f64);
        for g in 0..grid.len() {
            let dot: Complex64 = grid
                .atoms()
                .column(g)
                .iter()
                .zip(y.iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let corr = dot.norm() / (n.sqrt() * ynorm);
            if corr > best.1 {
                best = (g, corr);
            }
        }
        assert_eq!(best.0, g_expect);
        assert!((best.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ra_ormp_zero_measurements_return_empty_support() {
        let layout = PilotLayout::new(6, 3).unwrap();
        let grid = build_delay_grid(&layout, 1.0 / 3.0, 1).unwrap();
        let meas = PilotMeasurements::new(layout, Array2::zeros((13, 2)), 0.0).unwrap();
        let out = ra_ormp(&meas, &grid, 3, None).unwrap();
        assert!(out.support.is_empty());
        assert_eq!(out.coefficients.nrows(), 0);
    }

    #[test]
    fn ra_ormp_recovers_on_grid_support_exactly() {
        let layout = PilotLayout::new(12, 3).unwrap();
        let grid = build_delay_grid(&layout, 1.0 / 3.0, 1).unwrap();
        let delays = vec![tap_delay(&layout, -6), tap_delay(&layout, 2), tap_delay(&layout, 9)];
        let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(12);
        let gains = Array2::from_shape_fn((3, 4), |_| crate::util::complex_gaussian(&mut rng));
        let spec = ChannelSpec::new(delays.clone(), gains.clone()).unwrap();
        let meas = sample_pilots(&spec, &layout).unwrap();

        let out = ra_ormp(&meas, &grid, 3, None).unwrap();
        assert_eq!(out.delays.len(), 3);
        for (got, want) in out.delays.iter().zip(delays.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        for (a, b) in out.coefficients.iter().zip(gains.iter()) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
        // residual energy strictly decreasing across iterations
        for w in out.residual_history.windows(2) {
            assert!(w[1] < w[0], "residual not strictly decreasing: {w:?}");
        }
    }

    #[test]
    fn finer_grids_approach_an_off_grid_delay() {
        let layout = PilotLayout::new(16, 3).unwrap();
        let u_true = 0.5 * (tap_delay(&layout, 3) + tap_delay(&layout, 4)); // worst case
        let meas = meas_from_spec(&layout, &[u_true], 4);
        for os in [1usize, 2, 4, 8] {
            let grid = build_delay_grid(&layout, 1.0 / 3.0, os).unwrap();
            let out = ra_ormp(&meas, &grid, 1, None).unwrap();
            let err = (out.delays[0] - u_true).abs();
            assert!(
                err <= grid.spacing() * (1.0 + 1e-9),
                "oversample {os}: err {err} vs step {}",
                grid.spacing()
            );
        }
    }

    #[test]
    fn exhausted_residual_stops_early_with_flag() {
        let layout = PilotLayout::new(10, 3).unwrap();
        let grid = build_delay_grid(&layout, 1.0 / 3.0, 1).unwrap();
        let meas = meas_from_spec(&layout, &[tap_delay(&layout, 2)], 3);
        let out = ra_ormp(&meas, &grid, 4, None).unwrap();
        assert_eq!(out.delays.len(), 1, "one atom explains the data exactly");
        assert!(out.collapsed);
        assert!(*out.residual_history.last().unwrap() <= 1e-20);
    }

    #[test]
    fn noisy_off_grid_path_spends_extra_atoms() {
        // with a noise-floor stopping rule an off-grid arrival soaks up
        // several dictionary atoms before the residual reaches the floor
        let layout = PilotLayout::new(16, 3).unwrap();
        let u_true = 0.5 * (tap_delay(&layout, 3) + tap_delay(&layout, 4));
        let mut extra = 0usize;
        let trials = 9u64;
        for seed in 0..trials {
            let clean = meas_from_spec(&layout, &[u_true], 100 + seed);
            let noisy = add_awgn(&clean, 5.0, seed).unwrap();
            let thr = noisy.noise_variance()
                * layout.num_pilots() as f64
                * noisy.num_antennas() as f64
                * 1.5;
            let grid = build_delay_grid(&layout, 1.0 / 3.0, 1).unwrap();
            let out = ra_ormp(&noisy, &grid, 8, Some(thr)).unwrap();
            if out.delays.len() > 1 {
                extra += 1;
            }
        }
        assert!(
            extra * 2 > trials as usize,
            "expected spurious atoms in most trials, got {extra}/{trials}"
        );
    }
}
