//! Synthetic multipath channel generation and DFT pilot sampling.
//!
//! Delays are stored as dimensionless frame fractions `u` and the sampled
//! frequency response at DFT bin `b` is `sum_k C[k,p] exp(-j 2 pi b u_k)`.
//! A layout with pilot spacing `D` admits delays in `(-1/(2D), 1/(2D)]`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::util::{self, serde_cmat};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform comb of `N = 2M+1` pilots at bins `{-MD, ..., -D, 0, D, ..., MD}`
/// of a frame with `N_f = 2MD+1` DFT bins, centered on the DC carrier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PilotLayout {
    m: usize,
    d: usize,
}

impl PilotLayout {
    pub fn new(m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidLayout(format!(
                "need M >= 1 and D >= 1, got M={m}, D={d}"
            )));
        }
        Ok(Self { m, d })
    }

    /// Half pilot count M.
    pub fn half_count(&self) -> usize {
        self.m
    }

    /// Pilot spacing D in DFT bins.
    pub fn spacing(&self) -> usize {
        self.d
    }

    /// Frame length N_f = 2MD + 1.
    pub fn frame_len(&self) -> usize {
        2 * self.m * self.d + 1
    }

    /// Number of pilots N = 2M + 1.
    pub fn num_pilots(&self) -> usize {
        2 * self.m + 1
    }

    /// Pilot bin indices nD for n = -M..=M, ascending.
    pub fn pilot_bins(&self) -> impl Iterator<Item = i64> + '_ {
        let (m, d) = (self.m as i64, self.d as i64);
        (-m..=m).map(move |n| n * d)
    }

    /// Half-width of the admissible delay window: |u| <= 1/(2D).
    pub fn delay_half_window(&self) -> f64 {
        1.0 / (2.0 * self.d as f64)
    }

    /// Admissible delays form the half-open interval (-1/(2D), 1/(2D)].
    pub fn admits(&self, u: f64) -> bool {
        let h = self.delay_half_window();
        u > -h - 1e-15 && u <= h + 1e-15
    }

    /// Default minimum separation between generated delays: a quarter of the
    /// pilot Rayleigh resolution, 1/(4 N D) in frame units.
    pub fn default_min_separation(&self) -> f64 {
        1.0 / (4.0 * self.num_pilots() as f64 * self.d as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    m: usize,
    d: usize,
}

impl Serialize for PilotLayout {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LayoutRepr {
            m: self.m,
            d: self.d,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PilotLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = LayoutRepr::deserialize(d)?;
        PilotLayout::new(repr.m, repr.d).map_err(serde::de::Error::custom)
    }
}

/// Ground-truth multipath parameterization: K delays shared by P antennas
/// with a K x P complex gain matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelSpec {
    delays: Vec<f64>,
    #[serde(with = "serde_cmat")]
    gains: Array2<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    antenna_positions: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carrier_angular_freq: Option<f64>,
}

impl ChannelSpec {
    pub fn new(delays: Vec<f64>, gains: Array2<Complex64>) -> Result<Self> {
        if delays.len() != gains.nrows() {
            return Err(Error::DimensionMismatch {
                expected: delays.len(),
                got: gains.nrows(),
            });
        }
        for w in delays.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(
                    "delays must be strictly ascending".into(),
                ));
            }
        }
        Ok(Self {
            delays,
            gains,
            antenna_positions: None,
            carrier_angular_freq: None,
        })
    }

    pub fn num_paths(&self) -> usize {
        self.delays.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.gains.ncols()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn gains(&self) -> &Array2<Complex64> {
        &self.gains
    }

    pub fn antenna_positions(&self) -> Option<&[[f64; 2]]> {
        self.antenna_positions.as_deref()
    }
}

/// N x P complex pilot samples; row r holds pilot bin (r - M) D.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PilotMeasurements {
    layout: PilotLayout,
    #[serde(with = "serde_cmat")]
    samples: Array2<Complex64>,
    noise_variance: f64,
}

impl PilotMeasurements {
    pub fn new(layout: PilotLayout, samples: Array2<Complex64>, noise_variance: f64) -> Result<Self> {
        if samples.nrows() != layout.num_pilots() {
            return Err(Error::DimensionMismatch {
                expected: layout.num_pilots(),
                got: samples.nrows(),
            });
        }
        if noise_variance < 0.0 {
            return Err(Error::InvalidArgument("negative noise variance".into()));
        }
        Ok(Self {
            layout,
            samples,
            noise_variance,
        })
    }

    pub fn layout(&self) -> &PilotLayout {
        &self.layout
    }

    pub fn samples(&self) -> &Array2<Complex64> {
        &self.samples
    }

    pub fn num_antennas(&self) -> usize {
        self.samples.ncols()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn signal_power(&self) -> f64 {
        let n = self.samples.len();
        if n == 0 {
            0.0
        } else {
            self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64
        }
    }
}

/// Antenna geometry for spatially correlated gain synthesis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpatialGeometry {
    /// Antenna coordinates in meters.
    pub positions: Vec<[f64; 2]>,
    /// Carrier angular frequency in rad/s.
    pub carrier_angular_freq: f64,
}

impl SpatialGeometry {
    /// Per-path antenna correlation matrix J0(d_mn * w / c); unit diagonal.
    pub fn correlation_matrix(&self) -> Array2<f64> {
        let p = self.positions.len();
        Array2::from_shape_fn((p, p), |(i, j)| {
            let dx = self.positions[i][0] - self.positions[j][0];
            let dy = self.positions[i][1] - self.positions[j][1];
            let dist = (dx * dx + dy * dy).sqrt();
            bessel_j0(dist * self.carrier_angular_freq / SPEED_OF_LIGHT)
        })
    }
}

/// Uniform draw of k points in [lo, hi] conditioned on pairwise gaps of at
/// least `min_sep`: k sorted uniforms on the free length, spread back out by
/// the mandatory gaps.
fn draw_separated_delays<R: Rng>(
    rng: &mut R,
    k: usize,
    lo: f64,
    hi: f64,
    min_sep: f64,
) -> Result<Vec<f64>> {
    let width = hi - lo;
    if k as f64 * min_sep >= width {
        return Err(Error::DelayPlacement {
            paths: k,
            separation: min_sep,
            window: width,
        });
    }
    let free = width - (k - 1) as f64 * min_sep;
    let mut u: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * free).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (i, v) in u.iter_mut().enumerate() {
        *v += lo + i as f64 * min_sep;
    }
    Ok(u)
}

/// Draws a K-path common-support channel: delays uniform over the admissible
/// window with enforced minimum separation, per-path gain vectors circular
/// complex Gaussian with variance following `exp(-decay * k)`, optionally
/// colored across antennas by the J0 spatial correlation of `geometry`.
pub fn synth_scs_channel(
    p: usize,
    k: usize,
    layout: &PilotLayout,
    decay: f64,
    geometry: Option<&SpatialGeometry>,
    min_separation: Option<f64>,
    seed: u64,
) -> Result<ChannelSpec> {
    if p == 0 || k == 0 {
        return Err(Error::InvalidArgument("need P >= 1 and K >= 1".into()));
    }
    if let Some(g) = geometry {
        if g.positions.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: g.positions.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = layout.delay_half_window();
    let sep = min_separation.unwrap_or_else(|| layout.default_min_separation());
    let delays = draw_separated_delays(&mut rng, k, -h, h, sep)?;

    // coloring factor for one path: identity, or sqrt of the J0 matrix
    let color: Option<Array2<Complex64>> = match geometry {
        None => None,
        Some(g) => {
            let corr = g.correlation_matrix();
            let herm = Array2::from_shape_fn((p, p), |(i, j)| Complex64::new(corr[[i, j]], 0.0));
            let eig = linalg::jacobi_hermitian(herm.view(), 1e-13)?;
            let trace: f64 = eig.values.iter().sum();
            if let Some(&lmin) = eig
                .values
                .iter()
                .min_by(|a, b| a.partial_cmp(b).unwrap())
            {
                if lmin < -1e-12 * trace.max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "spatial correlation matrix is not PSD (lambda_min = {lmin:.3e})"
                    )));
                }
            }
            let mut b = Array2::<Complex64>::zeros((p, p));
            for i in 0..p {
                for j in 0..p {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in 0..p {
                        let s = eig.values[l].max(0.0).sqrt();
                        acc += eig.vectors[[i, l]] * s * eig.vectors[[j, l]].conj();
                    }
                    b[[i, j]] = acc;
                }
            }
            Some(b)
        }
    };

    let mut gains = Array2::<Complex64>::zeros((k, p));
    for (ki, row) in gains.rows_mut().into_iter().enumerate() {
        let c_k = (-decay * ki as f64 / 2.0).exp(); // amplitude scale, c_k^2 decays
        let z: Vec<Complex64> = (0..p).map(|_| util::complex_gaussian(&mut rng)).collect();
        let mut row = row;
        match &color {
            None => {
                for (pi, g) in row.iter_mut().enumerate() {
                    *g = z[pi] * c_k;
                }
            }
            Some(b) => {
                for pi in 0..p {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in 0..p {
                        acc += b[[pi, l]] * z[l];
                    }
                    row[pi] = acc * c_k;
                }
            }
        }
    }

    let mut spec = ChannelSpec::new(delays, gains)?;
    if let Some(g) = geometry {
        spec.antenna_positions = Some(g.positions.clone());
        spec.carrier_angular_freq = Some(g.carrier_angular_freq);
    }
    Ok(spec)
}

/// Draws a clustered channel: `k_clusters` cluster centers with minimum
/// separation, each carrying `reflections` offsets uniform in `[0, girth]`
/// (sorted) whose energies decay exponentially within the cluster. Girth is
/// in frame-fraction units. With `girth = 0` and one reflection per cluster
/// this degenerates to a plain `k_clusters`-path common-support channel.
pub fn synth_clustered_channel(
    p: usize,
    k_clusters: usize,
    reflections: usize,
    girth: f64,
    layout: &PilotLayout,
    seed: u64,
) -> Result<ChannelSpec> {
    if p == 0 || k_clusters == 0 || reflections == 0 {
        return Err(Error::InvalidArgument(
            "need P, clusters, reflections >= 1".into(),
        ));
    }
    if girth < 0.0 {
        return Err(Error::InvalidArgument("girth must be >= 0".into()));
    }
    let h = layout.delay_half_window();
    if girth >= 2.0 * h {
        return Err(Error::WindowTooWide {
            window: girth,
            max: 2.0 * h,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center_sep = girth + layout.default_min_separation();
    let centers = draw_separated_delays(&mut rng, k_clusters, -h, h - girth, center_sep)?;

    // ~20 dB of energy decay across each cluster
    let gamma = if reflections > 1 {
        (100.0f64).ln() / (reflections - 1) as f64
    } else {
        0.0
    };

    let mut entries: Vec<(f64, Vec<Complex64>)> = Vec::with_capacity(k_clusters * reflections);
    for &t_k in &centers {
        let mut offsets: Vec<f64> = (0..reflections).map(|_| rng.gen::<f64>() * girth).collect();
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        offsets[0] = 0.0; // leading reflection sits on the cluster center
        for (l, dt) in offsets.iter().enumerate() {
            let amp = (-gamma * l as f64 / 2.0).exp();
            let g: Vec<Complex64> = (0..p)
                .map(|_| util::complex_gaussian(&mut rng) * amp)
                .collect();
            entries.push((t_k + dt, g));
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // cluster windows may overlap, so offsets from different clusters can tie
    for i in 1..entries.len() {
        if entries[i].0 - entries[i - 1].0 < 1e-13 {
            entries[i].0 = entries[i - 1].0 + 1e-13;
        }
    }

    let delays: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let mut gains = Array2::zeros((delays.len(), p));
    for (i, (_, g)) in entries.iter().enumerate() {
        for (j, &z) in g.iter().enumerate() {
            gains[[i, j]] = z;
        }
    }
    ChannelSpec::new(delays, gains)
}

/// Evaluates the pilot model: samples[n, p] = sum_k C[k,p] exp(-j 2 pi nD u_k).
pub fn sample_pilots(spec: &ChannelSpec, layout: &PilotLayout) -> Result<PilotMeasurements> {
    for &u in spec.delays() {
        if !layout.admits(u) {
            return Err(Error::DelayOutOfWindow(u));
        }
    }
    let n = layout.num_pilots();
    let p = spec.num_antennas();
    let m = layout.half_count() as i64;
    let d = layout.spacing() as i64;
    let mut samples = Array2::zeros((n, p));
    for r in 0..n {
        let bin = (r as i64 - m) * d;
        for (k, &u) in spec.delays().iter().enumerate() {
            let w = Complex64::from_polar(1.0, -TAU * bin as f64 * u);
            for pi in 0..p {
                samples[[r, pi]] += spec.gains()[[k, pi]] * w;
            }
        }
    }
    PilotMeasurements::new(*layout, samples, 0.0)
}

/// Adds circular complex white Gaussian noise calibrated against the mean
/// squared sample magnitude: sigma^2 = power / 10^(snr_db/10). An infinite
/// SNR returns the input unchanged.
pub fn add_awgn(meas: &PilotMeasurements, snr_db: f64, seed: u64) -> Result<PilotMeasurements> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(meas.clone());
    }
    let power = meas.signal_power();
    if power == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let sigma2 = power / 10f64.powf(snr_db / 10.0);
    let sigma = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = meas.samples().clone();
    for z in samples.iter_mut() {
        *z += util::complex_gaussian(&mut rng) * sigma;
    }
    PilotMeasurements::new(*meas.layout(), samples, meas.noise_variance() + sigma2)
}

/// Bessel function of the first kind, order zero. Rational fit for |x| < 8,
/// asymptotic cosine form beyond; absolute error below 1e-7.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        let y = x * x;
        let p1 = 57_568_490_574.0
            + y * (-13_362_590_354.0
                + y * (651_619_640.7
                    + y * (-11_214_424.18 + y * (77_392.330_17 + y * (-184.905_245_6)))));
        let p2 = 57_568_490_411.0
            + y * (1_029_532_985.0
                + y * (9_494_680.718 + y * (59_272.648_53 + y * (267.853_271_2 + y))));
        p1 / p2
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785_398_164;
        let p0 = 1.0
            + y * (-0.109_862_862_7e-2
                + y * (0.273_451_040_7e-4 + y * (-0.207_337_063_9e-5 + y * 0.209_388_721_1e-6)));
        let q0 = -0.156_249_999_5e-1
            + y * (0.143_048_876_5e-3
                + y * (-0.691_114_765_1e-5 + y * (0.762_109_516_1e-6 + y * (-0.934_935_152e-7))));
        (std::f64::consts::FRAC_2_PI / ax).sqrt() * (xx.cos() * p0 - z * xx.sin() * q0)
    }
}

/// Dense pilot-domain Vandermonde for a delay set: column k is
/// exp(-j 2 pi (nD) u_k) over the pilot bins.
pub(crate) fn pilot_vandermonde(layout: &PilotLayout, delays: &[f64]) -> Array2<Complex64> {
    let n = layout.num_pilots();
    let m = layout.half_count() as i64;
    let d = layout.spacing() as i64;
    Array2::from_shape_fn((n, delays.len()), |(r, k)| {
        let bin = (r as i64 - m) * d;
        Complex64::from_polar(1.0, -TAU * bin as f64 * delays[k])
    })
}

pub(crate) fn lstsq_on_pilots(
    layout: &PilotLayout,
    delays: &[f64],
    samples: ArrayView2<Complex64>,
) -> Result<linalg::LeastSquares> {
    let v = pilot_vandermonde(layout, delays);
    linalg::qr_least_squares(v.view(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    fn j0_quadrature(x: f64) -> f64 {
        // (1/pi) * integral_0^pi cos(x sin t) dt by composite Simpson
        let n = 20_000;
        let h = PI / n as f64;
        let f = |t: f64| (x * t.sin()).cos();
        let mut s = f(0.0) + f(PI);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn bessel_j0_matches_quadrature() {
        for &x in &[0.0, 0.5, 1.0, 2.404_825_557_695_773, 5.0, 7.9, 8.1, 12.0, 25.13, 40.0] {
            let got = bessel_j0(x);
            let want = j0_quadrature(x);
            assert!((got - want).abs() < 1e-7, "J0({x}): {got} vs {want}");
        }
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn layout_shape_invariants() {
        let l = PilotLayout::new(5, 3).unwrap();
        assert_eq!(l.frame_len(), 31);
        assert_eq!(l.num_pilots(), 11);
        assert_eq!(l.frame_len(), 2 * l.half_count() * l.spacing() + 1);
        let bins: Vec<i64> = l.pilot_bins().collect();
        assert_eq!(bins.len(), l.num_pilots());
        assert_eq!(bins[0], -15);
        assert_eq!(*bins.last().unwrap(), 15);
        assert!(PilotLayout::new(0, 3).is_err());
    }

    #[test]
    fn zero_delay_path_gives_all_ones() {
        let layout = PilotLayout::new(4, 2).unwrap();
        let spec = ChannelSpec::new(vec![0.0], array![[Complex64::new(1.0, 0.0)]]).unwrap();
        let meas = sample_pilots(&spec, &layout).unwrap();
        for z in meas.samples().iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn single_path_is_unit_magnitude_exponential() {
        let layout = PilotLayout::new(6, 3).unwrap();
        let u0 = 0.071;
        let spec = ChannelSpec::new(vec![u0], array![[Complex64::new(1.0, 0.0)]]).unwrap();
        let meas = sample_pilots(&spec, &layout).unwrap();
        for (r, z) in meas.samples().column(0).iter().enumerate() {
            let bin = (r as i64 - 6) * 3;
            let want = Complex64::from_polar(1.0, -TAU * bin as f64 * u0);
            assert!((z - want).norm() < 1e-12);
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_linear_in_gains() {
        let layout = PilotLayout::new(8, 3).unwrap();
        let delays = vec![-0.05, 0.02, 0.11];
        let g1 = array![
            [Complex64::new(1.0, -0.3)],
            [Complex64::new(0.2, 0.9)],
            [Complex64::new(-0.5, 0.1)]
        ];
        let g2 = array![
            [Complex64::new(-0.7, 0.4)],
            [Complex64::new(0.3, -0.2)],
            [Complex64::new(0.8, 0.6)]
        ];
        let s1 = sample_pilots(&ChannelSpec::new(delays.clone(), g1.clone()).unwrap(), &layout).unwrap();
        let s2 = sample_pilots(&ChannelSpec::new(delays.clone(), g2.clone()).unwrap(), &layout).unwrap();
        let s12 = sample_pilots(&ChannelSpec::new(delays, &g1 + &g2).unwrap(), &layout).unwrap();
        let scale: f64 = s12.samples().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for ((a, b), c) in s1
            .samples()
            .iter()
            .zip(s2.samples().iter())
            .zip(s12.samples().iter())
        {
            assert!((a + b - c).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn generated_delays_stay_admissible_and_span_vandermonde() {
        let layout = PilotLayout::new(16, 3).unwrap();
        for seed in 0..20 {
            let spec = synth_scs_channel(4, 5, &layout, 0.2, None, None, seed).unwrap();
            for &u in spec.delays() {
                assert!(layout.admits(u), "delay {u} out of window");
            }
            let meas = sample_pilots(&spec, &layout).unwrap();
            let ls = lstsq_on_pilots(&layout, spec.delays(), meas.samples().view()).unwrap();
            let energy: f64 = meas.samples().iter().map(|z| z.norm_sqr()).sum();
            let resid: f64 = ls.residual_energy.iter().sum();
            assert!(resid.sqrt() <= 1e-10 * energy.sqrt(), "residual {resid}");
        }
    }

    #[test]
    fn placement_rejects_overcrowded_window() {
        let layout = PilotLayout::new(4, 3).unwrap();
        // window width 1/3; ask for 10 paths with separation 0.05 -> impossible
        let err = synth_scs_channel(1, 10, &layout, 0.0, None, Some(0.05), 1).unwrap_err();
        matches!(err, Error::DelayPlacement { .. })
            .then_some(())
            .expect("expected placement error");
    }

    #[test]
    fn coincident_antennas_are_fully_coherent() {
        let layout = PilotLayout::new(8, 3).unwrap();
        let geom = SpatialGeometry {
            positions: vec![[0.0, 0.0]; 4],
            carrier_angular_freq: TAU * 2e9,
        };
        let spec = synth_scs_channel(4, 3, &layout, 0.0, Some(&geom), None, 5).unwrap();
        for k in 0..3 {
            let g0 = spec.gains()[[k, 0]];
            for p in 1..4 {
                assert!((spec.gains()[[k, p]] - g0).norm() < 1e-9 * g0.norm().max(1e-9));
            }
        }
    }

    #[test]
    fn independent_gains_decorrelate_across_antennas() {
        let layout = PilotLayout::new(8, 3).unwrap();
        let trials = 4000;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        for seed in 0..trials {
            let spec = synth_scs_channel(2, 1, &layout, 0.0, None, None, seed).unwrap();
            acc += spec.gains()[[0, 0]] * spec.gains()[[0, 1]].conj();
            pow += spec.gains()[[0, 0]].norm_sqr();
        }
        let corr = acc.norm() / pow;
        assert!(corr < 0.05, "empirical correlation {corr}");
    }

    #[test]
    fn wide_aperture_correlation_is_small() {
        // 8-element line array with 60 cm aperture at a 2 GHz carrier
        let positions: Vec<[f64; 2]> = (0..8).map(|i| [0.6 * i as f64 / 7.0, 0.0]).collect();
        let geom = SpatialGeometry {
            positions,
            carrier_angular_freq: TAU * 2e9,
        };
        let corr = geom.correlation_matrix();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert!(corr[[i, j]].abs() <= 0.5, "corr[{i},{j}] = {}", corr[[i, j]]);
                }
            }
        }
        // PSD up to roundoff
        let herm = Array2::from_shape_fn((8, 8), |(i, j)| Complex64::new(corr[[i, j]], 0.0));
        let eig = linalg::jacobi_hermitian(herm.view(), 1e-13).unwrap();
        let trace: f64 = eig.values.iter().sum();
        assert!(eig.values.iter().all(|&l| l >= -1e-12 * trace));
    }

    #[test]
    fn awgn_is_calibrated_and_deterministic() {
        let layout = PilotLayout::new(64, 3).unwrap();
        let spec = synth_scs_channel(8, 4, &layout, 0.0, None, None, 3).unwrap();
        let clean = sample_pilots(&spec, &layout).unwrap();

        let inf = add_awgn(&clean, f64::INFINITY, 9).unwrap();
        assert_eq!(inf.samples(), clean.samples());

        let a = add_awgn(&clean, 0.0, 11).unwrap();
        let b = add_awgn(&clean, 0.0, 11).unwrap();
        assert_eq!(a.samples(), b.samples());

        // empirical noise variance over >= 10^4 entries at 0 dB
        let entries = (clean.samples().len()) as f64;
        assert!(entries >= 1.0e3);
        let mut acc = 0.0;
        let mut count = 0.0;
        for seed in 0..10 {
            let noisy = add_awgn(&clean, 0.0, 1000 + seed).unwrap();
            for (x, y) in noisy.samples().iter().zip(clean.samples().iter()) {
                acc += (x - y).norm_sqr();
                count += 1.0;
            }
        }
        assert!(count >= 1.0e4);
        let sigma2 = clean.signal_power();
        let est = acc / count;
        // var(|z|^2) = sigma^4 for circular Gaussian; 3 standard errors
        let se = sigma2 / count.sqrt();
        assert!(
            (est - sigma2).abs() <= 3.0 * se,
            "est {est} vs sigma2 {sigma2}"
        );
    }

    #[test]
    fn awgn_rejects_zero_signal() {
        let layout = PilotLayout::new(4, 1).unwrap();
        let zeros = PilotMeasurements::new(layout, Array2::zeros((9, 2)), 0.0).unwrap();
        assert!(matches!(add_awgn(&zeros, 10.0, 0), Err(Error::ZeroSignal)));
    }

    #[test]
    fn degenerate_cluster_is_plain_scs() {
        let layout = PilotLayout::new(16, 3).unwrap();
        let spec = synth_clustered_channel(2, 5, 1, 0.0, &layout, 7).unwrap();
        assert_eq!(spec.num_paths(), 5);
        for &u in spec.delays() {
            assert!(layout.admits(u));
        }
        let meas = sample_pilots(&spec, &layout).unwrap();
        let ls = lstsq_on_pilots(&layout, spec.delays(), meas.samples().view()).unwrap();
        let resid: f64 = ls.residual_energy.iter().sum();
        let energy: f64 = meas.samples().iter().map(|z| z.norm_sqr()).sum();
        assert!(resid <= 1e-20 * energy);
    }

    #[test]
    fn clustered_taxonomy_inputs_have_eighty_paths() {
        let layout = PilotLayout::new(50, 3).unwrap();
        let spec = synth_clustered_channel(8, 8, 10, 0.02, &layout, 13).unwrap();
        assert_eq!(spec.num_paths(), 80);
    }

    #[test]
    fn wide_clusters_resist_k_term_approximation() {
        let layout = PilotLayout::new(50, 3).unwrap();
        let girth = 0.04;
        let spec = synth_clustered_channel(4, 4, 10, girth, &layout, 21).unwrap();
        let meas = sample_pilots(&spec, &layout).unwrap();
        // oracle fit at the cluster centers (first reflection of each cluster)
        let centers: Vec<f64> = spec
            .delays()
            .iter()
            .cloned()
            .enumerate()
            .filter(|(i, _)| i % 10 == 0)
            .map(|(_, u)| u)
            .collect();
        let ls = lstsq_on_pilots(&layout, &centers, meas.samples().view()).unwrap();
        let resid: f64 = ls.residual_energy.iter().sum();
        let energy: f64 = meas.samples().iter().map(|z| z.norm_sqr()).sum();
        assert!(
            resid > 1e-3 * energy,
            "wide clusters unexpectedly well approximated: {resid:.3e} vs {energy:.3e}"
        );
    }

    #[test]
    fn spec_and_measurements_round_trip_json() {
        let layout = PilotLayout::new(8, 3).unwrap();
        let spec = synth_scs_channel(3, 2, &layout, 0.5, None, None, 17).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: ChannelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec.delays(), back.delays());
        assert_eq!(spec.gains(), back.gains());

        let meas = add_awgn(&sample_pilots(&spec, &layout).unwrap(), 10.0, 3).unwrap();
        let s = serde_json::to_string(&meas).unwrap();
        let back: PilotMeasurements = serde_json::from_str(&s).unwrap();
        assert_eq!(meas.samples(), back.samples());
        assert_eq!(meas.layout(), back.layout());
        assert_eq!(meas.noise_variance(), back.noise_variance());
    }
}
