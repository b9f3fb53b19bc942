//! Linear hash mappings, packed binary codes, and the hash table that
//! serves lookups.
//!
//! A mapping holds a weight matrix W with one column per output bit.
//! Encoding takes the sign of each projection (codes live in {-1, +1},
//! with sign(0) = +1), and the relaxed encoding replaces the sign with
//! a scaled sigmoid `2 * sigmoid(A * w.x) - 1` so training can
//! differentiate through it. Hamming distance between packed codes is
//! `(b - <c1, c2>) / 2`, computed as a popcount over XORed words.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Example;

/// Largest supported code width in bits.
pub const MAX_BITS: usize = 1024;

/// Logistic sigmoid.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// A linear hash mapping: weights W (`dim` x `bits`, column-major, one
/// column per bit) plus the sigmoid sharpness used by the relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashMapping {
    dim: usize,
    bits: usize,
    sharpness: f64,
    weights: Vec<f64>,
}

impl HashMapping {
    pub fn new(dim: usize, bits: usize, sharpness: f64, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || bits == 0 || bits > MAX_BITS {
            return Err(Error::domain(format!(
                "mapping shape must satisfy dim >= 1 and 1 <= bits <= {MAX_BITS}, got {dim}x{bits}"
            )));
        }
        if !(sharpness > 0.0) {
            return Err(Error::domain(format!(
                "sharpness must be positive, got {sharpness}"
            )));
        }
        if weights.len() != dim * bits {
            return Err(Error::DimensionMismatch {
                expected: dim * bits,
                got: weights.len(),
            });
        }
        Ok(HashMapping {
            dim,
            bits,
            sharpness,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    /// Column-major weights; column `i` is the hyperplane for bit `i`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn column(&self, bit: usize) -> &[f64] {
        &self.weights[bit * self.dim..(bit + 1) * self.dim]
    }

    /// Raw projections `w_i . x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut z = vec![0.0; self.bits];
        for (i, zi) in z.iter_mut().enumerate() {
            let col = self.column(i);
            let mut acc = 0.0;
            for (w, xv) in col.iter().zip(x) {
                acc += w * xv;
            }
            *zi = acc;
        }
        Ok(z)
    }

    /// Random mapping with N(0, 1/dim) weights, the standard data-blind
    /// baseline (random hyperplanes) and the initializer for training.
    /// Column norms concentrate near 1. Deterministic in the seed.
    pub fn random_gaussian(dim: usize, bits: usize, sharpness: f64, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        if dim == 0 {
            return Err(Error::domain("mapping dim must be at least 1".to_string()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let weights: Vec<f64> = (0..dim * bits)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        HashMapping::new(dim, bits, sharpness, weights)
    }

    /// Frobenius distance between two weight matrices of the same
    /// shape. The sharpness is excluded: it never changes which side
    /// of a hyperplane a point falls on, so equal weights mean equal
    /// binary codes.
    pub fn frobenius_distance(&self, other: &HashMapping) -> Result<f64> {
        if self.dim != other.dim || self.bits != other.bits {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.bits,
                got: other.dim * other.bits,
            });
        }
        let s: f64 = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(s.sqrt())
    }
}

/// A packed binary code in {-1, +1}^bits; bit set means +1. Words
/// beyond `len` bits are kept zero so XOR popcounts stay exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCode {
    words: Vec<u64>,
    len: usize,
}

impl BinaryCode {
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.is_empty() || bits.len() > MAX_BITS {
            return Err(Error::domain(format!(
                "code width must lie in 1..={MAX_BITS}, got {}",
                bits.len()
            )));
        }
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, b) in bits.iter().enumerate() {
            if *b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(BinaryCode {
            words,
            len: bits.len(),
        })
    }

    /// Builds a code from +-1 values (anything >= 0 packs as +1).
    pub fn from_signs(signs: &[f64]) -> Result<Self> {
        let bits: Vec<bool> = signs.iter().map(|s| *s >= 0.0).collect();
        Self::from_bits(&bits)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Unpacks to +-1 values, mostly for reference implementations.
    pub fn to_signs(&self) -> Vec<f64> {
        (0..self.len)
            .map(|i| if self.bit(i) { 1.0 } else { -1.0 })
            .collect()
    }
}

/// Hamming distance between equal-width codes.
pub fn hamming(c1: &BinaryCode, c2: &BinaryCode) -> Result<u32> {
    if c1.len != c2.len {
        return Err(Error::DimensionMismatch {
            expected: c1.len,
            got: c2.len,
        });
    }
    let mut d = 0u32;
    for (a, b) in c1.words.iter().zip(&c2.words) {
        d += (a ^ b).count_ones();
    }
    Ok(d)
}

/// Distance between relaxed codes: `(b - <r1, r2>) / 2`. Coincides
/// with the Hamming distance when both codes sit exactly at +-1.
pub fn relaxed_distance(r1: &[f64], r2: &[f64]) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(Error::DimensionMismatch {
            expected: r1.len(),
            got: r2.len(),
        });
    }
    let inner: f64 = r1.iter().zip(r2).map(|(a, b)| a * b).sum();
    Ok(0.5 * (r1.len() as f64 - inner))
}

impl HashMapping {
    /// Binary code of `x`: bit i is the sign of `w_i . x`, with
    /// sign(0) = +1.
    pub fn encode(&self, x: &[f64]) -> Result<BinaryCode> {
        let z = self.project(x)?;
        let bits: Vec<bool> = z.iter().map(|zi| *zi >= 0.0).collect();
        BinaryCode::from_bits(&bits)
    }

    /// Relaxed code of `x`: `2 * sigmoid(A * w_i . x) - 1` per bit,
    /// each value in (-1, 1).
    pub fn encode_relaxed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.project(x)?;
        for zi in z.iter_mut() {
            *zi = 2.0 * sigmoid(self.sharpness * *zi) - 1.0;
        }
        Ok(z)
    }
}

/// Binary codes for a retrieval set, frozen at some mapping version.
#[derive(Debug, Clone)]
pub struct HashTable {
    entries: Vec<(u64, BinaryCode)>,
    mapping_version: u64,
}

impl HashTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mapping_version(&self) -> u64 {
        self.mapping_version
    }

    /// Entries sorted by example id.
    pub fn entries(&self) -> &[(u64, BinaryCode)] {
        &self.entries
    }

    pub fn get(&self, id: u64) -> Option<&BinaryCode> {
        self.entries
            .binary_search_by_key(&id, |(eid, _)| *eid)
            .ok()
            .map(|idx| &self.entries[idx].1)
    }
}

/// Encodes the whole retrieval set under `mapping`, producing a table
/// stamped with `version`. Entries are sorted by id, so the result is
/// independent of the input order. Errors on duplicate ids.
pub fn rebuild_table(
    mapping: &HashMapping,
    retrieval_set: &[Example],
    version: u64,
) -> Result<HashTable> {
    let mut entries: Vec<(u64, BinaryCode)> = retrieval_set
        .par_iter()
        .map(|x| Ok((x.id, mapping.encode(&x.features)?)))
        .collect::<Result<_>>()?;
    entries.sort_unstable_by_key(|(id, _)| *id);
    for pair in entries.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::domain(format!(
                "duplicate example id {} in retrieval set",
                pair[0].0
            )));
        }
    }
    Ok(HashTable {
        entries,
        mapping_version: version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mapping_from_rows(dim: usize, bits: usize, a: f64, cols: &[&[f64]]) -> HashMapping {
        let mut w = Vec::with_capacity(dim * bits);
        for col in cols {
            w.extend_from_slice(col);
        }
        HashMapping::new(dim, bits, a, w).unwrap()
    }

    #[test]
    fn encode_takes_projection_signs_with_zero_positive() {
        let m = mapping_from_rows(2, 3, 1.0, &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 0.0]]);
        let c = m.encode(&[2.0, 5.0]).unwrap();
        assert!(c.bit(0));
        assert!(!c.bit(1));
        // zero projection packs as +1
        assert!(c.bit(2));
    }

    #[test]
    fn relaxed_value_at_known_sigmoid_point() {
        // A * w.x = ln 3 gives sigmoid 0.75, so the relaxed bit is 0.5.
        let m = mapping_from_rows(1, 1, 1.0, &[&[3.0f64.ln()]]);
        let r = m.encode_relaxed(&[1.0]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relaxed_values_stay_inside_unit_interval() {
        // Saturated projections round to exactly +-1 in floating
        // point; moderate ones stay strictly inside.
        let m = mapping_from_rows(2, 2, 50.0, &[&[10.0, 0.0], &[-10.0, 3.0]]);
        for r in m.encode_relaxed(&[100.0, -7.0]).unwrap() {
            assert!((-1.0..=1.0).contains(&r));
        }
        let m = mapping_from_rows(1, 1, 1.0, &[&[0.5]]);
        let r = m.encode_relaxed(&[1.0]).unwrap();
        assert!(r[0] > -1.0 && r[0] < 1.0);
    }

    #[test]
    fn hamming_counts_disagreements() {
        let c1 = BinaryCode::from_signs(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        let c2 = BinaryCode::from_signs(&[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(hamming(&c1, &c2).unwrap(), 2);
    }

    #[test]
    fn hamming_matches_bitwise_loop() {
        // Oracle: count sign disagreements one bit at a time.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let b = rng.random_range(1..=130usize);
            let s1: Vec<f64> = (0..b).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let s2: Vec<f64> = (0..b).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let c1 = BinaryCode::from_signs(&s1).unwrap();
            let c2 = BinaryCode::from_signs(&s2).unwrap();
            let naive = s1.iter().zip(&s2).filter(|(a, b)| a != b).count() as u32;
            assert_eq!(hamming(&c1, &c2).unwrap(), naive);
        }
    }

    #[test]
    fn relaxed_distance_hand_value() {
        // b = 2, inner product 0 -> distance 1.
        assert!((relaxed_distance(&[1.0, 1.0], &[1.0, -1.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relaxed_distance_reduces_to_hamming_on_sign_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let b = rng.random_range(1..=64usize);
            let s1: Vec<f64> = (0..b).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let s2: Vec<f64> = (0..b).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let c1 = BinaryCode::from_signs(&s1).unwrap();
            let c2 = BinaryCode::from_signs(&s2).unwrap();
            let h = hamming(&c1, &c2).unwrap() as f64;
            let r = relaxed_distance(&s1, &s2).unwrap();
            assert!((h - r).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_is_sign_of_relaxed_encode() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let d = rng.random_range(1..=8usize);
            let b = rng.random_range(1..=16usize);
            let w: Vec<f64> = (0..d * b).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = HashMapping::new(d, b, 10.0, w).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = m.encode(&x).unwrap();
            let r = m.encode_relaxed(&x).unwrap();
            for i in 0..b {
                assert_eq!(c.bit(i), r[i] >= 0.0);
            }
        }
    }

    #[test]
    fn mapping_rejects_bad_shapes() {
        assert!(HashMapping::new(0, 4, 1.0, vec![]).is_err());
        assert!(HashMapping::new(4, 0, 1.0, vec![]).is_err());
        assert!(HashMapping::new(2, MAX_BITS + 1, 1.0, vec![0.0; 2 * (MAX_BITS + 1)]).is_err());
        assert!(HashMapping::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(HashMapping::new(2, 2, 1.0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn distance_ops_reject_width_mismatch() {
        let c1 = BinaryCode::from_signs(&[1.0, 1.0]).unwrap();
        let c2 = BinaryCode::from_signs(&[1.0, 1.0, 1.0]).unwrap();
        assert!(hamming(&c1, &c2).is_err());
        assert!(relaxed_distance(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn rebuild_table_sorts_by_id_and_stamps_version() {
        let m = mapping_from_rows(1, 2, 1.0, &[&[1.0], &[-1.0]]);
        let set = vec![
            Example::new(5, vec![1.0], None),
            Example::new(2, vec![-1.0], None),
            Example::new(9, vec![0.5], None),
        ];
        let t = rebuild_table(&m, &set, 3).unwrap();
        assert_eq!(t.mapping_version(), 3);
        let ids: Vec<u64> = t.entries().iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, vec![2, 5, 9]);
        assert!(t.get(5).is_some());
        assert!(t.get(4).is_none());
    }

    #[test]
    fn rebuild_table_rejects_duplicate_ids() {
        let m = mapping_from_rows(1, 1, 1.0, &[&[1.0]]);
        let set = vec![
            Example::new(1, vec![1.0], None),
            Example::new(1, vec![2.0], None),
        ];
        assert!(rebuild_table(&m, &set, 1).is_err());
    }

    #[test]
    fn table_is_input_order_invariant() {
        let m = mapping_from_rows(2, 8, 1.0, &[
            &[0.3, -0.7], &[1.0, 0.1], &[-0.2, 0.4], &[0.9, 0.9],
            &[-0.5, 0.2], &[0.6, -0.3], &[0.1, 0.8], &[-0.9, -0.1],
        ]);
        let set: Vec<Example> = (0..20)
            .map(|i| Example::new(i, vec![i as f64 * 0.1 - 1.0, 1.0 - i as f64 * 0.07], None))
            .collect();
        let mut shuffled = set.clone();
        shuffled.reverse();
        let t1 = rebuild_table(&m, &set, 1).unwrap();
        let t2 = rebuild_table(&m, &shuffled, 1).unwrap();
        assert_eq!(t1.entries(), t2.entries());
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(bits in prop::collection::vec(any::<bool>(), 1..96),
                               flips1 in prop::collection::vec(any::<bool>(), 1..96),
                               flips2 in prop::collection::vec(any::<bool>(), 1..96)) {
            let n = bits.len().min(flips1.len()).min(flips2.len());
            let a = BinaryCode::from_bits(&bits[..n]).unwrap();
            let bbits: Vec<bool> = bits[..n].iter().zip(&flips1[..n]).map(|(x, f)| x ^ f).collect();
            let cbits: Vec<bool> = bits[..n].iter().zip(&flips2[..n]).map(|(x, f)| x ^ f).collect();
            let b = BinaryCode::from_bits(&bbits).unwrap();
            let c = BinaryCode::from_bits(&cbits).unwrap();
            let dab = hamming(&a, &b).unwrap();
            let dba = hamming(&b, &a).unwrap();
            let dac = hamming(&a, &c).unwrap();
            let dcb = hamming(&c, &b).unwrap();
            prop_assert_eq!(dab, dba);
            prop_assert_eq!(hamming(&a, &a).unwrap(), 0);
            prop_assert!(dab as usize <= n);
            prop_assert!(dab <= dac + dcb);
        }
    }
}
