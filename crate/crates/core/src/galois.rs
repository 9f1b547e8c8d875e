//! Arithmetic over GF(2^p) and probability mass functions over the field.
//!
//! Field elements are stored by their polynomial-basis binary label, so
//! addition is XOR and multiplication goes through exp/log tables built from
//! a primitive polynomial. A [`Pmf`] is a vector of `m = 2^p` weights indexed
//! by that same label; it is the message type exchanged by the detector and
//! the decoder.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Entries are floored at this value before any element-wise division.
pub const PMF_FLOOR: f64 = 1e-300;

/// Default primitive polynomials, indexed by `p`. Bit `k` is the coefficient of `x^k`.
const DEFAULT_POLYNOMIALS: [u32; 9] = [
    0, 0, 0b111, 0b1011, 0b1_0011, 0b10_0101, 0b100_0011, 0b1000_1001, 0b1_0001_1101,
];

/// An element of GF(2^p), stored as its binary label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The finite field GF(2^p) with precomputed exp/log tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    p: u32,
    poly: u32,
    exp: Vec<u8>,
    log: Vec<u16>,
}

impl Field {
    /// Builds GF(2^p) from the primitive polynomial `poly`.
    ///
    /// Fails if `p` is outside `2..=8`, if `poly` is not of degree `p`, or if
    /// the powers of `x` modulo `poly` do not enumerate every nonzero element.
    pub fn new(p: u32, poly: u32) -> Result<Field> {
        if !(2..=8).contains(&p) {
            return Err(Error::UnsupportedExponent(p));
        }
        if poly >> p != 1 || poly & 1 == 0 {
            return Err(Error::NonPrimitivePolynomial { p, poly });
        }
        let order = 1usize << p;
        let mut exp = vec![0u8; order - 1];
        let mut log = vec![u16::MAX; order];
        let mut x: u32 = 1;
        for (k, slot) in exp.iter_mut().enumerate() {
            if log[x as usize] != u16::MAX {
                return Err(Error::NonPrimitivePolynomial { p, poly });
            }
            *slot = x as u8;
            log[x as usize] = k as u16;
            x <<= 1;
            if x & (1 << p) != 0 {
                x ^= poly;
            }
        }
        if x != 1 {
            return Err(Error::NonPrimitivePolynomial { p, poly });
        }
        Ok(Field { p, poly, exp, log })
    }

    /// GF(2^p) with the default primitive polynomial (`1+x+x^3` for GF(8),
    /// `1+x+x^4` for GF(16)).
    pub fn with_default_polynomial(p: u32) -> Result<Field> {
        let poly = *DEFAULT_POLYNOMIALS
            .get(p as usize)
            .filter(|&&q| q != 0)
            .ok_or(Error::UnsupportedExponent(p))?;
        Field::new(p, poly)
    }

    pub fn default_polynomial(p: u32) -> Option<u32> {
        DEFAULT_POLYNOMIALS.get(p as usize).copied().filter(|&q| q != 0)
    }

    #[inline]
    pub fn exponent(&self) -> u32 {
        self.p
    }

    /// Field order `m = 2^p`.
    #[inline]
    pub fn order(&self) -> usize {
        1 << self.p
    }

    #[inline]
    pub fn polynomial(&self) -> u32 {
        self.poly
    }

    pub fn elements(&self) -> impl Iterator<Item = FieldElement> {
        (0..self.order()).map(|x| FieldElement(x as u8))
    }

    pub fn nonzero_elements(&self) -> impl Iterator<Item = FieldElement> {
        (1..self.order()).map(|x| FieldElement(x as u8))
    }

    pub fn element(&self, value: usize) -> Result<FieldElement> {
        if value < self.order() {
            Ok(FieldElement(value as u8))
        } else {
            Err(Error::InvalidParameter(format!(
                "{value} is not an element of GF({})",
                self.order()
            )))
        }
    }

    /// `alpha^k` for the primitive element `alpha`.
    #[inline]
    pub fn alpha_pow(&self, k: usize) -> FieldElement {
        FieldElement(self.exp[k % (self.order() - 1)])
    }

    /// Discrete logarithm; `None` for zero.
    #[inline]
    pub fn log(&self, a: FieldElement) -> Option<usize> {
        match self.log[a.index()] {
            u16::MAX => None,
            k => Some(k as usize),
        }
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.is_zero() || b.is_zero() {
            return FieldElement::ZERO;
        }
        let k = self.log[a.index()] as usize + self.log[b.index()] as usize;
        FieldElement(self.exp[k % (self.order() - 1)])
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: FieldElement) -> Option<FieldElement> {
        let k = self.log(a)?;
        let q = self.order() - 1;
        Some(FieldElement(self.exp[(q - k) % q]))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        let inv = self.inv(b).ok_or(Error::ZeroLabel)?;
        Ok(self.mul(a, inv))
    }

    /// Index table of multiplication by `h`: entry `x` holds `h*x`.
    pub fn mul_table(&self, h: FieldElement) -> Vec<u8> {
        self.elements().map(|x| self.mul(h, x).0).collect()
    }

    /// Moves the mass at `x` to `h*x`.
    pub fn pmf_permute_mul(&self, pmf: &Pmf, h: FieldElement) -> Result<Pmf> {
        if h.is_zero() {
            return Err(Error::ZeroLabel);
        }
        let mut out = vec![0.0; self.order()];
        for (x, &w) in pmf.0.iter().enumerate() {
            out[self.mul(h, FieldElement(x as u8)).index()] = w;
        }
        Ok(Pmf(out))
    }

    /// `out[x] = in[x + t]`.
    pub fn pmf_permute_add(&self, pmf: &Pmf, t: FieldElement) -> Pmf {
        pmf.permute_add(t)
    }
}

/// Probability mass function over the elements of GF(2^p), indexed by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn uniform(order: usize) -> Pmf {
        Pmf(vec![1.0 / order as f64; order])
    }

    pub fn delta(order: usize, at: FieldElement) -> Pmf {
        let mut w = vec![0.0; order];
        w[at.index()] = 1.0;
        Pmf(w)
    }

    /// Wraps raw weights; they must be finite and non-negative, but need not be normalized.
    pub fn from_weights(weights: Vec<f64>) -> Result<Pmf> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "pmf weights must be finite and non-negative".into(),
            ));
        }
        Ok(Pmf(weights))
    }

    /// Builds a normalized pmf, falling back to uniform when the mass vanishes.
    pub fn normalized(weights: Vec<f64>) -> Pmf {
        let mut pmf = Pmf(weights);
        pmf.normalize();
        pmf
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Rescales to unit sum; returns `false` (and becomes uniform) if the mass underflowed.
    pub fn normalize(&mut self) -> bool {
        normalize_in_place(&mut self.0)
    }

    /// Most likely symbol; ties resolve to the smallest label.
    pub fn argmax(&self) -> FieldElement {
        FieldElement(argmax(&self.0) as u8)
    }

    pub fn permute_add(&self, t: FieldElement) -> Pmf {
        let t = t.index();
        Pmf((0..self.0.len()).map(|x| self.0[x ^ t]).collect())
    }

    /// Element-wise product.
    pub fn mul_pointwise(&self, other: &Pmf) -> Pmf {
        Pmf(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    /// Element-wise quotient with the denominator floored at [`PMF_FLOOR`], normalized.
    pub fn div_pointwise(&self, denom: &Pmf) -> Pmf {
        Pmf::normalized(
            self.0
                .iter()
                .zip(&denom.0)
                .map(|(a, b)| a.max(PMF_FLOOR) / b.max(PMF_FLOOR))
                .collect(),
        )
    }

    /// Walsh-Hadamard transform over the additive group of the field.
    pub fn hadamard(&self) -> Pmf {
        let mut w = self.0.clone();
        hadamard_in_place(&mut w);
        Pmf(w)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(w: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in w.iter().enumerate().skip(1) {
        if v > w[best] {
            best = i;
        }
    }
    best
}

/// Normalizes to unit sum. Non-finite or vanishing mass becomes uniform and returns `false`.
pub fn normalize_in_place(w: &mut [f64]) -> bool {
    let s: f64 = w.iter().sum();
    if s > 0.0 && s.is_finite() {
        let inv = 1.0 / s;
        w.iter_mut().for_each(|x| *x *= inv);
        true
    } else {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|x| *x = u);
        false
    }
}

/// In-place fast Walsh-Hadamard transform; the length must be a power of two.
///
/// `out[y] = sum_x (-1)^{popcount(x & y)} in[x]`. Applying it twice scales by the length.
pub fn hadamard_in_place(w: &mut [f64]) {
    let n = w.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in w.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Carry-less polynomial product reduced modulo `poly`.
    fn poly_mul(a: u32, b: u32, p: u32, poly: u32) -> u32 {
        let mut prod = 0u32;
        for i in 0..p {
            if b >> i & 1 == 1 {
                prod ^= a << i;
            }
        }
        for bit in (p..2 * p).rev() {
            if prod >> bit & 1 == 1 {
                prod ^= poly << (bit - p);
            }
        }
        prod
    }

    fn xor_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut out = vec![0.0; n];
        for x in 0..n {
            for y in 0..n {
                out[x ^ y] += a[x] * b[y];
            }
        }
        out
    }

    #[test]
    fn gf8_table_matches_mapping_table_labels() {
        let f = Field::new(3, 0b1011).unwrap();
        let labels: Vec<u8> = (0..7).map(|k| f.alpha_pow(k).0).collect();
        assert_eq!(labels, vec![0b001, 0b010, 0b100, 0b011, 0b110, 0b111, 0b101]);
    }

    #[test]
    fn gf16_alpha4_label() {
        let f = Field::new(4, 0b10011).unwrap();
        assert_eq!(f.alpha_pow(4).0, 0b0011);
    }

    #[test]
    fn rejects_small_or_non_primitive() {
        assert_eq!(Field::new(1, 0b11), Err(Error::UnsupportedExponent(1)));
        // 1 + x^2 + x^4 = (1 + x + x^2)^2 is reducible
        assert!(matches!(
            Field::new(4, 0b10101),
            Err(Error::NonPrimitivePolynomial { .. })
        ));
        // 1 + x + x^2 + x^3 + x^4 is irreducible but has order 5
        assert!(matches!(
            Field::new(4, 0b11111),
            Err(Error::NonPrimitivePolynomial { .. })
        ));
        assert!(Field::new(3, 0b111).is_err());
    }

    #[test]
    fn default_polynomials_are_primitive() {
        for p in 2..=8 {
            let f = Field::with_default_polynomial(p).unwrap();
            assert_eq!(f.order(), 1 << p);
        }
    }

    #[test]
    fn gf8_mul_examples() {
        let f = Field::new(3, 0b1011).unwrap();
        let a6 = f.alpha_pow(6);
        let a3 = f.alpha_pow(3);
        assert_eq!(f.mul(a6, a3), f.alpha_pow(2));
        assert_eq!(poly_mul(a6.0 as u32, a3.0 as u32, 3, 0b1011), f.alpha_pow(2).0 as u32);
        for x in f.elements() {
            assert_eq!(f.mul(FieldElement::ZERO, x), FieldElement::ZERO);
            assert_eq!(f.mul(FieldElement::ONE, x), x);
        }
    }

    #[test]
    fn mul_matches_polynomial_product() {
        for p in 2..=8 {
            let f = Field::with_default_polynomial(p).unwrap();
            for a in f.elements() {
                for b in f.elements() {
                    let expect = poly_mul(a.0 as u32, b.0 as u32, p, f.polynomial());
                    assert_eq!(f.mul(a, b).0 as u32, expect);
                }
            }
        }
    }

    #[test]
    fn inverses() {
        for p in 2..=8 {
            let f = Field::with_default_polynomial(p).unwrap();
            for a in f.nonzero_elements() {
                assert_eq!(f.mul(a, f.inv(a).unwrap()), FieldElement::ONE);
                assert_eq!(f.alpha_pow(f.log(a).unwrap()), a);
            }
            assert_eq!(f.inv(FieldElement::ZERO), None);
        }
    }

    #[test]
    fn permute_mul_examples() {
        let f = Field::new(2, 0b111).unwrap();
        let pmf = Pmf::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(f.pmf_permute_mul(&pmf, FieldElement::ONE).unwrap(), pmf);
        let alpha = f.alpha_pow(1);
        let out = f.pmf_permute_mul(&pmf, alpha).unwrap();
        // GF(4): alpha*0=0, alpha*1=2, alpha*2=3, alpha*3=1
        assert_eq!(out.weights(), &[0.1, 0.4, 0.2, 0.3]);
        let u = Pmf::uniform(4);
        assert_eq!(f.pmf_permute_mul(&u, alpha).unwrap(), u);
        assert_eq!(f.pmf_permute_mul(&pmf, FieldElement::ZERO), Err(Error::ZeroLabel));
    }

    #[test]
    fn permute_add_examples() {
        let f = Field::new(3, 0b1011).unwrap();
        let w: Vec<f64> = (0..8).map(|x| x as f64 + 1.0).collect();
        let pmf = Pmf::from_weights(w.clone()).unwrap();
        assert_eq!(f.pmf_permute_add(&pmf, FieldElement::ZERO), pmf);
        let out = f.pmf_permute_add(&pmf, f.alpha_pow(0));
        for x in 0..8 {
            assert_eq!(out.weights()[x], w[x ^ 0b001]);
        }
    }

    #[test]
    fn hadamard_of_uniform_is_delta() {
        for m in [4, 8, 16] {
            let h = Pmf::uniform(m).hadamard();
            assert!((h.weights()[0] - 1.0).abs() < 1e-15);
            assert!(h.weights()[1..].iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn hadamard_matches_definition() {
        let w: Vec<f64> = (0..16).map(|x| ((x * 7 + 3) % 11) as f64).collect();
        let fast = Pmf::from_weights(w.clone()).unwrap().hadamard();
        for y in 0..16usize {
            let direct: f64 = (0..16usize)
                .map(|x| if (x & y).count_ones() % 2 == 0 { w[x] } else { -w[x] })
                .sum();
            assert!((fast.weights()[y] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_prefers_smallest_label() {
        assert_eq!(Pmf::uniform(8).argmax(), FieldElement(0));
        let p = Pmf::from_weights(vec![0.1, 0.4, 0.4, 0.1]).unwrap();
        assert_eq!(p.argmax(), FieldElement(1));
    }

    #[test]
    fn normalize_falls_back_to_uniform() {
        let mut p = Pmf::from_weights(vec![0.0; 4]).unwrap();
        assert!(!p.normalize());
        assert_eq!(p, Pmf::uniform(4));
    }

    fn pmf_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, m).prop_map(|mut w| {
            normalize_in_place(&mut w);
            w
        })
    }

    proptest! {
        #[test]
        fn convolution_theorem(p in 2u32..=4, a in pmf_strategy(16), b in pmf_strategy(16)) {
            let m = 1usize << p;
            let mut a = a[..m].to_vec();
            let mut b = b[..m].to_vec();
            normalize_in_place(&mut a);
            normalize_in_place(&mut b);
            let conv = Pmf::from_weights(xor_convolution(&a, &b)).unwrap().hadamard();
            let ha = Pmf::from_weights(a).unwrap().hadamard();
            let hb = Pmf::from_weights(b).unwrap().hadamard();
            for y in 0..m {
                let prod = ha.weights()[y] * hb.weights()[y];
                let scale = prod.abs().max(conv.weights()[y].abs()).max(1e-300);
                prop_assert!((conv.weights()[y] - prod).abs() <= 1e-10 * scale.max(1e-3));
            }
        }

        #[test]
        fn hadamard_involution(w in pmf_strategy(16)) {
            let pmf = Pmf::from_weights(w.clone()).unwrap();
            let twice = pmf.hadamard().hadamard();
            for (x, y) in twice.weights().iter().zip(&w) {
                prop_assert!((x - 16.0 * y).abs() < 1e-10);
            }
        }

        #[test]
        fn permutations_preserve_weights(w in pmf_strategy(8), t in 0u8..8, h in 1u8..8) {
            let f = Field::new(3, 0b1011).unwrap();
            let pmf = Pmf::from_weights(w.clone()).unwrap();
            let added = f.pmf_permute_add(&pmf, FieldElement(t));
            prop_assert_eq!(f.pmf_permute_add(&added, FieldElement(t)), pmf.clone());
            let mut sorted_in = w.clone();
            let mut sorted_out = f.pmf_permute_mul(&pmf, FieldElement(h)).unwrap().into_weights();
            sorted_in.sort_by(f64::total_cmp);
            sorted_out.sort_by(f64::total_cmp);
            prop_assert_eq!(sorted_in, sorted_out);
        }
    }
}
