//! Shared helpers: seeded random streams, JSON encoding of complex arrays,
//! and a stable hash for experiment configs.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;

/// Derives an independent stream seed from a base seed and a tag.
pub(crate) fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Circular complex Gaussian with E|z|^2 = 1 (squared magnitude is Exp(1),
/// phase uniform).
pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    Complex64::from_polar((-u1.ln()).sqrt(), TAU * u2)
}

/// FNV-1a over bytes; used to stamp CSV rows with a config fingerprint.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub(crate) fn cmat_to_rows(m: &Array2<Complex64>) -> Vec<Vec<[f64; 2]>> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

pub(crate) fn cmat_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<Array2<Complex64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged complex matrix".into());
    }
    let mut out = Array2::zeros((nrows, ncols));
    for (i, row) in rows.iter().enumerate() {
        for (j, &[re, im]) in row.iter().enumerate() {
            out[[i, j]] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

/// Serde adaptor storing an `Array2<Complex64>` as nested `[re, im]` pairs.
pub(crate) mod serde_cmat {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        cmat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<Complex64>, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        cmat_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn subseed_decorrelates_tags() {
        let a = subseed(42, 0);
        let b = subseed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, subseed(42, 0));
    }

    #[test]
    fn complex_gaussian_is_circular_unit_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut p = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        for _ in 0..n {
            let z = complex_gaussian(&mut rng);
            p += z.norm_sqr();
            mean += z;
        }
        p /= n as f64;
        mean /= n as f64;
        assert!((p - 1.0).abs() < 0.02, "power {p}");
        assert!(mean.norm() < 0.01, "mean {mean}");
    }

    #[test]
    fn cmat_round_trip() {
        let m = Array2::from_shape_fn((3, 2), |(i, j)| Complex64::new(i as f64, -(j as f64)));
        let back = cmat_from_rows(&cmat_to_rows(&m)).unwrap();
        assert_eq!(m, back);
    }
}
