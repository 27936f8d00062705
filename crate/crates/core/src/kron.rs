//! Kronecker products of phase vectors, the primitive (prime-length)
//! decomposition of phase ramps, and the index permutations that swap
//! factors inside a Kronecker chain.
//!
//! Chains are ordered so that materialization is a left fold of [`kron`]:
//! index `i` of the product has mixed-radix digits `(i_1, .., i_D)` with the
//! first factor most significant.

use num_complex::Complex64;

use crate::{Error, Result};

/// Tolerance on `|entry| = 1` for phase vectors.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

/// A complex vector whose entries all have unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<Complex64>);

impl PhaseVector {
    /// Wraps `entries`, rejecting any entry whose modulus is not 1.
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("phase vector must be nonempty".into()));
        }
        for (index, z) in entries.iter().enumerate() {
            let modulus = z.norm();
            if modulus.is_nan() || (modulus - 1.0).abs() > UNIT_MODULUS_TOL {
                return Err(Error::NotUnitModulus { index, modulus });
            }
        }
        Ok(Self(entries))
    }

    /// `[e^{j p_0}, e^{j p_1}, ..]`.
    pub fn from_phases<I: IntoIterator<Item = f64>>(phases: I) -> Self {
        let v: Vec<_> = phases.into_iter().map(|p| Complex64::from_polar(1.0, p)).collect();
        assert!(!v.is_empty(), "phase vector must be nonempty");
        Self(v)
    }

    /// The ramp `[1, e^{j theta}, .., e^{j (n-1) theta}]`.
    pub fn ramp(theta: f64, n: usize) -> Self {
        Self::from_phases((0..n).map(|m| m as f64 * theta))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![Complex64::new(1.0, 0.0); n])
    }

    /// `exp(j angle(v))` entry-wise. Zero entries map to 1.
    pub fn phase_of(v: &[Complex64]) -> Self {
        let out = v
            .iter()
            .map(|z| {
                let r = z.norm();
                if r == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    z / r
                }
            })
            .collect::<Vec<_>>();
        assert!(!out.is_empty(), "phase vector must be nonempty");
        Self(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    /// `selfᴴ other`.
    pub fn inner(&self, other: &[Complex64]) -> Complex64 {
        inner(&self.0, other)
    }
}

impl AsRef<[Complex64]> for PhaseVector {
    fn as_ref(&self) -> &[Complex64] {
        &self.0
    }
}

/// `aᴴ b` for equal-length slices.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len(), "inner product of mismatched lengths");
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Kronecker product of two vectors: `out[i * len(b) + j] = a[i] * b[j]`.
pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

/// Left fold of [`kron`] over a list of factors. An empty list gives `[1]`.
pub fn kron_all<'a, I, V>(factors: I) -> Vec<Complex64>
where
    I: IntoIterator<Item = &'a V>,
    V: AsRef<[Complex64]> + 'a + ?Sized,
{
    factors
        .into_iter()
        .fold(vec![Complex64::new(1.0, 0.0)], |acc, f| kron(&acc, f.as_ref()))
}

/// A vector held as an ordered Kronecker product of phase vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerChain {
    factors: Vec<PhaseVector>,
    total_len: usize,
}

impl KroneckerChain {
    pub fn new(factors: Vec<PhaseVector>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("Kronecker chain needs at least one factor".into()));
        }
        let total_len = factors.iter().map(PhaseVector::len).product();
        Ok(Self { factors, total_len })
    }

    pub fn factors(&self) -> &[PhaseVector] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<PhaseVector> {
        self.factors
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.factors.iter().map(PhaseVector::len).collect()
    }

    /// Appends the factors of `other` after those of `self`.
    pub fn concat(mut self, other: KroneckerChain) -> Self {
        self.total_len *= other.total_len;
        self.factors.extend(other.factors);
        self
    }

    /// Exchanges factors `p` and `q` in place.
    pub fn swap_factors(&mut self, p: usize, q: usize) {
        self.factors.swap(p, q);
    }

    pub fn materialize(&self) -> Vec<Complex64> {
        materialize(self)
    }
}

/// Materializes a chain by left-folding [`kron`] over its factors.
pub fn materialize(chain: &KroneckerChain) -> Vec<Complex64> {
    kron_all(chain.factors.iter())
}

/// Prime factors of `n` in ascending order, with multiplicity. `n = 1` gives
/// an empty list.
pub fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Splits the length-`n` ramp with phase step `theta` into prime-length
/// ramp factors.
///
/// Factor lengths are the ascending prime factors of `n`. Factor `d` steps by
/// `theta` times the product of the lengths to its right, so the first factor
/// carries the largest stride and the last one steps by `theta` itself.
/// `n = 1` yields the single factor `[1]`.
pub fn primitive_decompose_ramp(theta: f64, n: usize) -> Result<KroneckerChain> {
    if n == 0 {
        return Err(Error::InvalidArgument("ramp length must be positive".into()));
    }
    let lengths = prime_factors(n);
    if lengths.is_empty() {
        return KroneckerChain::new(vec![PhaseVector::ones(1)]);
    }
    let mut factors = Vec::with_capacity(lengths.len());
    let mut stride: usize = n;
    for &len in &lengths {
        stride /= len;
        factors.push(PhaseVector::ramp(theta * stride as f64, len));
    }
    KroneckerChain::new(factors)
}

/// A permutation `P` of `{0, .., n-1}` stored as an index map:
/// `(P v)[i] = v[index_map[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorPermutation {
    index_map: Vec<usize>,
}

impl FactorPermutation {
    pub fn identity(n: usize) -> Self {
        Self { index_map: (0..n).collect() }
    }

    /// Checks that `index_map` is a bijection.
    pub fn from_index_map(index_map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; index_map.len()];
        for &j in &index_map {
            if j >= seen.len() || seen[j] {
                return Err(Error::InvalidArgument("index map is not a permutation".into()));
            }
            seen[j] = true;
        }
        Ok(Self { index_map })
    }

    /// The permutation relating a chain to a reordering of its factors.
    ///
    /// Position `t` of the reordered chain holds original factor `order[t]`.
    /// The result satisfies `materialize(original) = P · materialize(reordered)`.
    pub fn from_factor_order(lengths: &[usize], order: &[usize]) -> Result<Self> {
        let d = lengths.len();
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != (0..d).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument("factor order is not a permutation".into()));
        }
        let n: usize = lengths.iter().product();
        let new_lengths: Vec<usize> = order.iter().map(|&t| lengths[t]).collect();
        let mut digits = vec![0usize; d];
        let mut index_map = Vec::with_capacity(n);
        for i in 0..n {
            decompose_index(i, lengths, &mut digits);
            let mut j = 0;
            for (t, &src) in order.iter().enumerate() {
                j = j * new_lengths[t] + digits[src];
            }
            index_map.push(j);
        }
        Ok(Self { index_map })
    }

    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn is_identity(&self) -> bool {
        self.index_map.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `P v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.len(), "permutation applied to wrong length");
        self.index_map.iter().map(|&j| v[j]).collect()
    }

    /// `Pᵀ v`.
    pub fn apply_transpose(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.len(), "permutation applied to wrong length");
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (i, &j) in self.index_map.iter().enumerate() {
            out[j] = v[i];
        }
        out
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &FactorPermutation) -> FactorPermutation {
        assert_eq!(self.len(), other.len(), "composing permutations of different sizes");
        FactorPermutation {
            index_map: self.index_map.iter().map(|&j| other.index_map[j]).collect(),
        }
    }

    /// Dense 0/1 matrix, row-major. Test and diagnostics use only.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        self.index_map
            .iter()
            .map(|&j| {
                let mut row = vec![0u8; n];
                row[j] = 1;
                row
            })
            .collect()
    }
}

/// Mixed-radix digits of `i` for the given lengths, most significant first.
fn decompose_index(mut i: usize, lengths: &[usize], digits: &mut [usize]) {
    for t in (0..lengths.len()).rev() {
        digits[t] = i % lengths[t];
        i /= lengths[t];
    }
}

/// Permutation for exchanging factors `p` and `q` of a chain with the given
/// factor lengths.
///
/// For any vectors `s_1, .., s_k` of these lengths,
/// `kron(s_1, .., s_k) = P · kron(s_1, .., s_q, .., s_p, .., s_k)`.
pub fn swap_permutation(lengths: &[usize], p: usize, q: usize) -> Result<FactorPermutation> {
    if p == q {
        return Err(Error::InvalidArgument(format!("cannot swap factor {p} with itself")));
    }
    if p >= lengths.len() || q >= lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "swap indices ({p}, {q}) out of range for {} factors",
            lengths.len()
        )));
    }
    if lengths.contains(&0) {
        return Err(Error::InvalidArgument("factor lengths must be positive".into()));
    }
    let mut swapped = lengths.to_vec();
    swapped.swap(p, q);
    let n: usize = lengths.iter().product();
    let mut digits = vec![0usize; lengths.len()];
    let mut index_map = Vec::with_capacity(n);
    for i in 0..n {
        decompose_index(i, lengths, &mut digits);
        digits.swap(p, q);
        let j = digits.iter().zip(&swapped).fold(0, |acc, (&dig, &len)| acc * len + dig);
        index_map.push(j);
    }
    Ok(FactorPermutation { index_map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn random_phase(rng: &mut ChaCha8Rng, n: usize) -> PhaseVector {
        PhaseVector::from_phases((0..n).map(|_| rng.random_range(0.0..2.0 * PI)))
    }

    fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn kron_identity_and_hand_expansion() {
        let xy = [c(0.3, 0.1), c(-2.0, 1.0)];
        assert_eq!(kron(&[c(1.0, 0.0)], &xy), xy.to_vec());
        let out = kron(&[c(1.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(out, vec![c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn kron_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_phase(&mut rng, 3);
        let b = random_phase(&mut rng, 3);
        let out = kron(a.as_slice(), b.as_slice());
        assert_eq!(out.len(), 9);
        for i in 0..3 {
            for j in 0..3 {
                let expect = a.as_slice()[i] * b.as_slice()[j];
                assert!((out[i * 3 + j] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn phase_vector_rejects_non_unit_entries() {
        assert!(PhaseVector::new(vec![c(1.0, 0.0), c(0.0, 1.0)]).is_ok());
        match PhaseVector::new(vec![c(1.0, 0.0), c(0.5, 0.0)]) {
            Err(Error::NotUnitModulus { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(PhaseVector::new(vec![]).is_err());
    }

    #[test]
    fn phase_of_maps_zero_to_one() {
        let p = PhaseVector::phase_of(&[c(0.0, 0.0), c(0.0, -3.0)]);
        assert_eq!(p.as_slice()[0], c(1.0, 0.0));
        assert!((p.as_slice()[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn prime_factorization() {
        assert_eq!(prime_factors(1), Vec::<usize>::new());
        assert_eq!(prime_factors(12), vec![2, 2, 3]);
        assert_eq!(prime_factors(128), vec![2; 7]);
        assert_eq!(prime_factors(97), vec![97]);
        assert_eq!(prime_factors(1 << 20), vec![2; 20]);
    }

    #[test]
    fn decompose_four_has_largest_stride_first() {
        let theta = 0.7;
        let chain = primitive_decompose_ramp(theta, 4).unwrap();
        assert_eq!(chain.lengths(), vec![2, 2]);
        let f = chain.factors();
        assert!(max_err(f[0].as_slice(), PhaseVector::ramp(2.0 * theta, 2).as_slice()) < 1e-15);
        assert!(max_err(f[1].as_slice(), PhaseVector::ramp(theta, 2).as_slice()) < 1e-15);
        assert!(max_err(&chain.materialize(), PhaseVector::ramp(theta, 4).as_slice()) < 1e-12);
    }

    #[test]
    fn decompose_zero_phase_is_all_ones() {
        let chain = primitive_decompose_ramp(0.0, 8).unwrap();
        assert_eq!(chain.num_factors(), 3);
        for f in chain.factors() {
            assert_eq!(f.as_slice(), &[c(1.0, 0.0), c(1.0, 0.0)]);
        }
        assert!(chain.materialize().iter().all(|z| *z == c(1.0, 0.0)));
    }

    #[test]
    fn decompose_twelve_strides() {
        let theta = 1.234;
        let chain = primitive_decompose_ramp(theta, 12).unwrap();
        assert_eq!(chain.lengths(), vec![2, 2, 3]);
        for (f, stride) in chain.factors().iter().zip([6.0, 3.0, 1.0]) {
            let step = f.as_slice()[1] / f.as_slice()[0];
            assert!((step - Complex64::from_polar(1.0, stride * theta)).norm() < 1e-14);
        }
        // Direct evaluation of the ramp, entry by entry.
        let direct: Vec<_> = (0..12).map(|m| Complex64::from_polar(1.0, m as f64 * theta)).collect();
        assert!(max_err(&chain.materialize(), &direct) < 1e-12);
    }

    #[test]
    fn decompose_length_one() {
        let chain = primitive_decompose_ramp(2.0, 1).unwrap();
        assert_eq!(chain.lengths(), vec![1]);
        assert_eq!(chain.materialize(), vec![c(1.0, 0.0)]);
        assert!(primitive_decompose_ramp(2.0, 0).is_err());
    }

    #[test]
    fn materialize_single_and_three_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_phase(&mut rng, 3);
        let single = KroneckerChain::new(vec![a.clone()]).unwrap();
        assert_eq!(single.materialize(), a.as_slice().to_vec());

        let b = random_phase(&mut rng, 2);
        let d = random_phase(&mut rng, 5);
        let chain = KroneckerChain::new(vec![a.clone(), b.clone(), d.clone()]).unwrap();
        let nested = kron(&kron(a.as_slice(), b.as_slice()), d.as_slice());
        assert_eq!(chain.total_len(), 30);
        assert!(max_err(&chain.materialize(), &nested) < 1e-15);
        let ramp = primitive_decompose_ramp(0.3, 8).unwrap();
        assert!(max_err(&ramp.materialize(), PhaseVector::ramp(0.3, 8).as_slice()) < 1e-12);
    }

    #[test]
    fn swap_two_by_two_is_perfect_shuffle() {
        let p = swap_permutation(&[2, 2], 0, 1).unwrap();
        assert_eq!(p.index_map(), &[0, 2, 1, 3]);
        let dense = p.to_dense();
        let expect = vec![vec![1, 0, 0, 0], vec![0, 0, 1, 0], vec![0, 1, 0, 0], vec![0, 0, 0, 1]];
        assert_eq!(dense, expect);

        // Brute force over basis pairs e_i ⊗ e_j.
        for i in 0..2 {
            for j in 0..2 {
                let mut a = vec![c(0.0, 0.0); 2];
                let mut b = vec![c(0.0, 0.0); 2];
                a[i] = c(1.0, 0.0);
                b[j] = c(1.0, 0.0);
                assert_eq!(kron(&a, &b), p.apply(&kron(&b, &a)));
            }
        }
    }

    #[test]
    fn swap_of_equal_factors_fixes_vector() {
        let a = PhaseVector::ramp(0.4, 2);
        let v = kron(a.as_slice(), a.as_slice());
        let p = swap_permutation(&[2, 2], 0, 1).unwrap();
        assert_eq!(p.apply(&v), v);
    }

    #[test]
    fn swap_two_three_two_reconstruction() {
        let lengths = [2, 3, 2];
        let p = swap_permutation(&lengths, 0, 2).unwrap();
        // Pᵀ P = I on the dense form.
        let dense = p.to_dense();
        for r in 0..12 {
            for s in 0..12 {
                let dot: u32 = (0..12).map(|i| dense[i][r] as u32 * dense[i][s] as u32).sum();
                assert_eq!(dot, u32::from(r == s));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s: Vec<_> = lengths.iter().map(|&l| random_complex(&mut rng, l)).collect();
            let original = kron_all(s.iter());
            let swapped = kron_all([&s[2], &s[1], &s[0]]);
            assert!(max_err(&original, &p.apply(&swapped)) < 1e-14);
        }
    }

    #[test]
    fn swap_rejects_bad_indices() {
        assert!(swap_permutation(&[2, 2], 1, 1).is_err());
        assert!(swap_permutation(&[2, 2], 0, 2).is_err());
    }

    #[test]
    fn factor_order_matches_single_swap() {
        let lengths = [2, 3, 5, 2];
        let swap = swap_permutation(&lengths, 1, 3).unwrap();
        let order = FactorPermutation::from_factor_order(&lengths, &[0, 3, 2, 1]).unwrap();
        assert_eq!(swap, order);
    }

    #[test]
    fn apply_transpose_inverts_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = swap_permutation(&[3, 2, 2], 0, 2).unwrap();
        let v = random_complex(&mut rng, 12);
        assert_eq!(p.apply_transpose(&p.apply(&v)), v);
        assert!(FactorPermutation::from_index_map(vec![0, 0, 1]).is_err());
    }
}
