//! Implicit stacked block-Toeplitz Gram operator.
//!
//! Each antenna contributes an (M+1) x (M+1) Toeplitz data block
//! `T_p[i, j] = h_p[(i - j) D]` built from its pilot samples. The operator
//! applies `sum_p T_p^H T_p` without ever forming the blocks: every block is
//! embedded in a circulant of dimension `N + 1 = 2(M+1)` whose spectrum is
//! precomputed, so one application costs exactly 4 FFTs of length N+1 per
//! block. The embedding identity is
//!
//! ```text
//! [I 0] C_p^H [I 0; 0 0] C_p [f; 0] = T_p^H T_p f
//! ```
//!
//! with `C_p` the circulant generated by `(t_0..t_M, 0, t_{-M}..t_{-1})`.

use crate::channel_model::PilotMeasurements;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub const DEFAULT_DENSE_CAP: usize = 2048;

pub struct ToeplitzGramOperator {
    m: usize,
    p: usize,
    fft_len: usize,
    /// DFT of each block's circulant generator, length `fft_len`.
    spectra: Vec<Vec<Complex64>>,
    /// Raw generators (lags -M..M at index lag+M); dropped by `into_lean`.
    generators: Option<Vec<Vec<Complex64>>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fft_calls: AtomicU64,
}

impl ToeplitzGramOperator {
    /// Builds the operator from pilot measurements; block p's generator is
    /// antenna p's pilot sample sequence.
    pub fn from_measurements(meas: &PilotMeasurements) -> Result<Self> {
        let generators: Vec<Vec<Complex64>> = (0..meas.num_antennas())
            .map(|p| meas.samples().column(p).to_vec())
            .collect();
        Self::from_generators(generators)
    }

    /// Builds the operator from raw generators (lags -M..M, odd length each).
    pub fn from_generators(generators: Vec<Vec<Complex64>>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument("no generator blocks".into()));
        }
        let len = generators[0].len();
        if len.is_multiple_of(2) {
            return Err(Error::InvalidLayout(format!(
                "generator length must be odd (2M+1), got {len}"
            )));
        }
        if generators.iter().any(|g| g.len() != len) {
            return Err(Error::InvalidArgument("ragged generator blocks".into()));
        }
        let m = (len - 1) / 2;
        let fft_len = 2 * (m + 1);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(fft_len);
        let inv = planner.plan_fft_inverse(fft_len);

        let mut spectra = Vec::with_capacity(generators.len());
        for g in &generators {
            // circulant first column: (t_0 .. t_M, 0, t_{-M} .. t_{-1})
            let mut col = vec![Complex64::new(0.0, 0.0); fft_len];
            col[..=m].copy_from_slice(&g[m..]);
            for lag in 1..=m {
                col[fft_len - lag] = g[m - lag];
            }
            let embedded = col.clone();
            fwd.process(&mut col);
            debug_assert!(spectrum_matches_generator(&inv, &col, &embedded));
            spectra.push(col);
        }

        Ok(Self {
            m,
            p: generators.len(),
            fft_len,
            spectra,
            generators: Some(generators),
            fwd,
            inv,
            fft_calls: AtomicU64::new(0),
        })
    }

    /// Drops the retained generators for an O(P N) memory profile. Dense
    /// materialization becomes unavailable afterwards.
    pub fn into_lean(mut self) -> Self {
        self.generators = None;
        self
    }

    /// Operator dimension M+1.
    pub fn dim(&self) -> usize {
        self.m + 1
    }

    pub fn half_count(&self) -> usize {
        self.m
    }

    pub fn num_blocks(&self) -> usize {
        self.p
    }

    /// Total FFT invocations so far; one `apply` adds exactly `4 * P`.
    pub fn fft_calls(&self) -> u64 {
        self.fft_calls.load(Ordering::Relaxed)
    }

    /// Applies `sum_p T_p^H T_p` to a vector of length M+1. Blocks are
    /// processed in ascending antenna order with a fixed reduction order, so
    /// results are reproducible bit for bit.
    pub fn apply(&self, f: ArrayView1<Complex64>) -> Result<Array1<Complex64>> {
        let dim = self.dim();
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        let mut acc = Array1::<Complex64>::zeros(dim);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let scratch_len = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        let scale = 1.0 / self.fft_len as f64;

        for spectrum in &self.spectra {
            for (dst, src) in buf[..dim].iter_mut().zip(f.iter()) {
                *dst = *src;
            }
            for z in buf[dim..].iter_mut() {
                *z = Complex64::new(0.0, 0.0);
            }
            // C_p [f; 0]
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for (z, s) in buf.iter_mut().zip(spectrum.iter()) {
                *z *= s;
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for z in buf.iter_mut() {
                *z *= scale;
            }
            // [I 0; 0 0] mask, then C_p^H
            for z in buf[dim..].iter_mut() {
                *z = Complex64::new(0.0, 0.0);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for (z, s) in buf.iter_mut().zip(spectrum.iter()) {
                *z *= s.conj();
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for (dst, src) in acc.iter_mut().zip(buf[..dim].iter()) {
                *dst += src * scale;
            }
            self.fft_calls.fetch_add(4, Ordering::Relaxed);
        }
        Ok(acc)
    }

    /// Dense Toeplitz block for antenna p (test oracle path).
    pub fn dense_block(&self, p: usize) -> Result<Array2<Complex64>> {
        let generators = self.generators.as_ref().ok_or_else(|| {
            Error::InvalidArgument("operator built lean: generators dropped".into())
        })?;
        let g = &generators[p];
        let dim = self.dim();
        Ok(Array2::from_shape_fn((dim, dim), |(i, j)| {
            g[(self.m as i64 + i as i64 - j as i64) as usize]
        }))
    }

    /// Explicit `sum_p T_p^H T_p`, guarded by the default dimension cap.
    pub fn dense_materialize(&self) -> Result<Array2<Complex64>> {
        self.dense_materialize_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn dense_materialize_with_cap(&self, cap: usize) -> Result<Array2<Complex64>> {
        if self.m > cap {
            return Err(Error::DenseCapExceeded { m: self.m, cap });
        }
        let dim = self.dim();
        let mut gram = Array2::<Complex64>::zeros((dim, dim));
        for p in 0..self.p {
            let t = self.dense_block(p)?;
            for i in 0..dim {
                for j in i..dim {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r in 0..dim {
                        acc += t[[r, i]].conj() * t[[r, j]];
                    }
                    gram[[i, j]] += acc;
                    if i != j {
                        gram[[j, i]] += acc.conj();
                    }
                }
            }
        }
        Ok(gram)
    }
}

fn spectrum_matches_generator(
    inv: &Arc<dyn Fft<f64>>,
    spectrum: &[Complex64],
    embedded: &[Complex64],
) -> bool {
    let mut back = spectrum.to_vec();
    inv.process(&mut back);
    let scale = 1.0 / back.len() as f64;
    let worst = back
        .iter()
        .zip(embedded.iter())
        .map(|(b, e)| (b * scale - e).norm())
        .fold(0.0f64, f64::max);
    let mag = embedded.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    worst <= 1e-12 * mag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{add_awgn, sample_pilots, synth_scs_channel, PilotLayout};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_generators(m: usize, p: usize, seed: u64) -> Vec<Vec<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..p)
            .map(|_| {
                (0..2 * m + 1)
                    .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect()
            })
            .collect()
    }

    fn random_vector(n: usize, seed: u64) -> Array1<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_shape_fn(n, |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn delta_generator_is_identity_block() {
        let m = 5;
        let p = 3;
        let mut gens = vec![vec![Complex64::new(0.0, 0.0); 2 * m + 1]; p];
        for g in gens.iter_mut() {
            g[m] = Complex64::new(1.0, 0.0); // only lag 0
        }
        let op = ToeplitzGramOperator::from_generators(gens).unwrap();
        let f = random_vector(m + 1, 1);
        let out = op.apply(f.view()).unwrap();
        for (o, fi) in out.iter().zip(f.iter()) {
            assert!((o - fi * p as f64).norm() < 1e-12);
        }
        let dense = op.dense_materialize().unwrap();
        for i in 0..=m {
            for j in 0..=m {
                let want = if i == j { p as f64 } else { 0.0 };
                assert!((dense[[i, j]] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_computed_two_by_two_block() {
        // lags (t_{-1}, t_0, t_1) = (0, 1, 1): T = [[1, 0], [1, 1]]
        let gens = vec![vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]];
        let op = ToeplitzGramOperator::from_generators(gens).unwrap();
        let t = op.dense_block(0).unwrap();
        let want_t = array![
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]
        ];
        assert_eq!(t, want_t);

        let gram = op.dense_materialize().unwrap();
        let want = array![
            [Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)],
            [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]
        ];
        for (a, b) in gram.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-14);
        }

        let f = array![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let out = op.apply(f.view()).unwrap();
        assert!((out[0] - Complex64::new(2.0, 0.0)).norm() < 1e-13);
        assert!((out[1] - Complex64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn fft_path_matches_dense_path() {
        for seed in 0..30 {
            let m = 3 + (seed as usize % 20);
            let p = 1 + (seed as usize % 4);
            let op = ToeplitzGramOperator::from_generators(random_generators(m, p, seed)).unwrap();
            let f = random_vector(m + 1, 1000 + seed);
            let fast = op.apply(f.view()).unwrap();
            let dense = op.dense_materialize().unwrap();
            let slow = dense.dot(&f);
            let scale: f64 = slow.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
            let err: f64 = fast
                .iter()
                .zip(slow.iter())
                .map(|(a, b)| (a - b).norm())
                .sum();
            assert!(err / scale < 1e-12, "m={m} p={p}: rel err {}", err / scale);
        }
    }

    #[test]
    fn operator_is_hermitian_psd_on_random_vectors() {
        let op = ToeplitzGramOperator::from_generators(random_generators(24, 4, 7)).unwrap();
        for seed in 0..10 {
            let f = random_vector(25, 40 + seed);
            let af = op.apply(f.view()).unwrap();
            let quad: Complex64 = f.iter().zip(af.iter()).map(|(x, y)| x.conj() * y).sum();
            let fnorm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let anorm = af.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = fnorm * anorm;
            assert!(quad.im.abs() <= 1e-10 * scale, "imag part {}", quad.im);
            assert!(quad.re >= -1e-10 * scale, "negative quadratic form {}", quad.re);
        }
    }

    #[test]
    fn antenna_contributions_are_additive() {
        let gens = random_generators(12, 5, 11);
        let joint = ToeplitzGramOperator::from_generators(gens.clone()).unwrap();
        let f = random_vector(13, 2);
        let joint_out = joint.apply(f.view()).unwrap();

        let mut acc = Array1::<Complex64>::zeros(13);
        for g in gens {
            let single = ToeplitzGramOperator::from_generators(vec![g]).unwrap();
            acc = acc + single.apply(f.view()).unwrap();
        }
        // same summation order, so this is exact
        for (a, b) in joint_out.iter().zip(acc.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fft_call_counter_counts_four_per_block() {
        let op = ToeplitzGramOperator::from_generators(random_generators(9, 6, 3)).unwrap();
        assert_eq!(op.fft_calls(), 0);
        let f = random_vector(10, 0);
        op.apply(f.view()).unwrap();
        assert_eq!(op.fft_calls(), 4 * 6);
        op.apply(f.view()).unwrap();
        assert_eq!(op.fft_calls(), 8 * 6);
    }

    #[test]
    fn even_generator_length_is_rejected() {
        let gens = vec![vec![Complex64::new(1.0, 0.0); 6]];
        assert!(matches!(
            ToeplitzGramOperator::from_generators(gens),
            Err(Error::InvalidLayout(_))
        ));
    }

    #[test]
    fn dense_cap_is_enforced_and_lean_drops_generators() {
        let op = ToeplitzGramOperator::from_generators(random_generators(10, 1, 5)).unwrap();
        assert!(matches!(
            op.dense_materialize_with_cap(5),
            Err(Error::DenseCapExceeded { .. })
        ));
        let lean = op.into_lean();
        assert!(lean.dense_materialize().is_err());
        // apply still works
        let f = random_vector(11, 8);
        lean.apply(f.view()).unwrap();
    }

    #[test]
    fn operator_is_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ToeplitzGramOperator>();

        let op = std::sync::Arc::new(
            ToeplitzGramOperator::from_generators(random_generators(12, 3, 2)).unwrap(),
        );
        let f = random_vector(13, 4);
        let expect = op.apply(f.view()).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let op = op.clone();
                let f = f.clone();
                std::thread::spawn(move || op.apply(f.view()).unwrap())
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), expect);
        }
    }

    #[test]
    fn measurement_build_matches_generator_build() {
        let layout = PilotLayout::new(10, 3).unwrap();
        let spec = synth_scs_channel(3, 2, &layout, 0.0, None, None, 5).unwrap();
        let meas = add_awgn(&sample_pilots(&spec, &layout).unwrap(), 20.0, 1).unwrap();
        let op = ToeplitzGramOperator::from_measurements(&meas).unwrap();
        assert_eq!(op.dim(), 11);
        assert_eq!(op.num_blocks(), 3);
        let gens: Vec<Vec<Complex64>> = (0..3).map(|p| meas.samples().column(p).to_vec()).collect();
        let op2 = ToeplitzGramOperator::from_generators(gens).unwrap();
        let f = random_vector(11, 9);
        assert_eq!(op.apply(f.view()).unwrap(), op2.apply(f.view()).unwrap());
    }
}
