//! Arithmetic over the prime field `F_p`.
//!
//! Elements are stored as canonical `u64` representatives in `[0, p-1]`.
//! Tensor code works on raw `u64` slices through [`PrimeField`]; the
//! [`FieldElement`] wrapper carries its modulus and rejects mixed-field
//! arithmetic.

mod matrix;
mod split;

use std::fmt;

use rand::Rng;
use thiserror::Error;

pub use matrix::Matrix;
pub use split::SplitTrace;

/// `2^45 - 55`, the default 45-bit prime.
pub const DEFAULT_MODULUS: u64 = 35_184_372_088_777;

/// Width of the limbs used by [`PrimeField::split_mul`].
pub const LIMB_BITS: u32 = 23;

/// Bytes per element on the wire.
pub const WIRE_BYTES: usize = 8;

/// Number of products that must sum exactly in a 128-bit accumulator.
pub const ACCUMULATION_BITS: u32 = 13;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too wide: 2*{1} + 13 bits exceeds the 128-bit accumulator")]
    TooWide(u64, u32),
    #[error("field mismatch: {0} vs {1}")]
    FieldMismatch(u64, u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("value {value} is outside the signed range +/-{bound}")]
    OutOfRange { value: i128, bound: u64 },
    #[error("value {0} is not a canonical field element")]
    NotCanonical(u64),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("split multiplication requires p < 2^46 with a 53-bit-safe fold constant (p = {0})")]
    SplitUnsupported(u64),
}

/// Which multiplication routine tensor kernels use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MulMode {
    /// 128-bit exact product followed by one reduction.
    #[default]
    Wide,
    /// 23-bit limb decomposition keeping every intermediate below `2^53`.
    Split,
}

/// A prime modulus plus the bit-width configuration derived from it.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    p: u64,
    element_bits: u32,
    mul_mode: MulMode,
}

impl fmt::Debug for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.p)
    }
}

impl Default for PrimeField {
    fn default() -> Self {
        Self::new(DEFAULT_MODULUS).expect("default modulus is prime")
    }
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        let element_bits = 64 - p.leading_zeros();
        if 2 * element_bits + ACCUMULATION_BITS > 128 {
            return Err(FieldError::TooWide(p, element_bits));
        }
        Ok(Self {
            p,
            element_bits,
            mul_mode: MulMode::Wide,
        })
    }

    /// Selects the multiplication routine used by tensor kernels.
    pub fn with_mul_mode(mut self, mode: MulMode) -> Result<Self, FieldError> {
        if mode == MulMode::Split && !self.supports_split_mul() {
            return Err(FieldError::SplitUnsupported(self.p));
        }
        self.mul_mode = mode;
        Ok(self)
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn element_bits(&self) -> u32 {
        self.element_bits
    }

    #[inline]
    pub fn mul_mode(&self) -> MulMode {
        self.mul_mode
    }

    pub fn wire_bytes(&self) -> usize {
        WIRE_BYTES
    }

    pub fn limb_bits(&self) -> u32 {
        LIMB_BITS
    }

    /// Largest magnitude representable by the signed encoding, `(p-1)/2`.
    #[inline]
    pub fn signed_bound(&self) -> u64 {
        (self.p - 1) / 2
    }

    pub fn element(&self, value: u64) -> Result<FieldElement, FieldError> {
        if value >= self.p {
            return Err(FieldError::NotCanonical(value));
        }
        Ok(FieldElement { value, p: self.p })
    }

    /// Reduces an arbitrary `u64` into the field.
    #[inline]
    pub fn reduce(&self, value: u64) -> u64 {
        value % self.p
    }

    #[inline]
    pub fn reduce_wide(&self, value: u128) -> u64 {
        (value % self.p as u128) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.p && b < self.p);
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.p && b < self.p);
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    /// Product through the configured [`MulMode`].
    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        match self.mul_mode {
            MulMode::Wide => self.mul_wide(a, b),
            MulMode::Split => self.split_mul(a, b),
        }
    }

    /// Canonical 128-bit product and reduction.
    #[inline]
    pub fn mul_wide(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    pub fn inv(&self, a: u64) -> Result<u64, FieldError> {
        let a = a % self.p;
        if a == 0 {
            return Err(FieldError::DivisionByZero);
        }
        let (mut old_r, mut r) = (a as i128, self.p as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        debug_assert_eq!(old_r, 1);
        Ok(old_s.rem_euclid(self.p as i128) as u64)
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul_wide(acc, base);
            }
            base = self.mul_wide(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Maps a signed integer to its field representative; negatives become `p - |x|`.
    pub fn encode_signed(&self, x: i64) -> Result<u64, FieldError> {
        let bound = self.signed_bound();
        if x.unsigned_abs() > bound {
            return Err(FieldError::OutOfRange {
                value: x as i128,
                bound,
            });
        }
        Ok(if x < 0 {
            self.p - x.unsigned_abs()
        } else {
            x as u64
        })
    }

    /// Inverse of [`encode_signed`](Self::encode_signed): values above `(p-1)/2` are negative.
    #[inline]
    pub fn decode_signed(&self, a: u64) -> i64 {
        debug_assert!(a < self.p);
        if a <= self.signed_bound() {
            a as i64
        } else {
            -((self.p - a) as i64)
        }
    }

    pub fn encode_slice(&self, xs: &[i64]) -> Result<Vec<u64>, FieldError> {
        xs.iter().map(|&x| self.encode_signed(x)).collect()
    }

    pub fn decode_slice(&self, xs: &[u64]) -> Vec<i64> {
        xs.iter().map(|&x| self.decode_signed(x)).collect()
    }

    /// Uniform element of `[0, p-1]`.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.p)
    }

    /// Uniform nonzero element.
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(1..self.p)
    }

    /// Sum of elementwise products, accumulated exactly in 128 bits.
    ///
    /// Up to `2^13` products are summed before a single reduction.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        debug_assert_eq!(a.len(), b.len());
        match self.mul_mode {
            MulMode::Wide => {
                let mut acc: u128 = 0;
                for (chunk_a, chunk_b) in a
                    .chunks(1 << ACCUMULATION_BITS)
                    .zip(b.chunks(1 << ACCUMULATION_BITS))
                {
                    let mut part: u128 = 0;
                    for (&x, &y) in chunk_a.iter().zip(chunk_b) {
                        part += x as u128 * y as u128;
                    }
                    acc = (acc + part % self.p as u128) % self.p as u128;
                }
                acc as u64
            }
            MulMode::Split => a
                .iter()
                .zip(b)
                .fold(0, |acc, (&x, &y)| self.add(acc, self.split_mul(x, y))),
        }
    }
}

/// An element of a specific prime field.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    p: u64,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.p)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl FieldElement {
    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    fn field(&self) -> PrimeField {
        PrimeField {
            p: self.p,
            element_bits: 64 - self.p.leading_zeros(),
            mul_mode: MulMode::Wide,
        }
    }

    fn check(&self, other: &Self) -> Result<PrimeField, FieldError> {
        if self.p != other.p {
            return Err(FieldError::FieldMismatch(self.p, other.p));
        }
        Ok(self.field())
    }

    fn with(&self, value: u64) -> Self {
        Self { value, p: self.p }
    }

    pub fn checked_add(self, other: Self) -> Result<Self, FieldError> {
        let f = self.check(&other)?;
        Ok(self.with(f.add(self.value, other.value)))
    }

    pub fn checked_sub(self, other: Self) -> Result<Self, FieldError> {
        let f = self.check(&other)?;
        Ok(self.with(f.sub(self.value, other.value)))
    }

    pub fn checked_mul(self, other: Self) -> Result<Self, FieldError> {
        let f = self.check(&other)?;
        Ok(self.with(f.mul_wide(self.value, other.value)))
    }

    pub fn split_mul(self, other: Self) -> Result<Self, FieldError> {
        let f = self.check(&other)?;
        if !f.supports_split_mul() {
            return Err(FieldError::SplitUnsupported(self.p));
        }
        Ok(self.with(f.split_mul(self.value, other.value)))
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        Ok(self.with(self.field().inv(self.value)?))
    }

    pub fn to_signed(self) -> i64 {
        self.field().decode_signed(self.value)
    }

    pub fn to_le_bytes(self) -> [u8; WIRE_BYTES] {
        self.value.to_le_bytes()
    }
}

impl std::ops::Neg for FieldElement {
    type Output = Self;

    fn neg(self) -> Self {
        self.with(self.field().neg(self.value))
    }
}

/// Deterministic Miller-Rabin, exact for every `n < 2^64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mulmod(acc, base);
            }
            base = mulmod(base, base);
            exp >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn f11() -> PrimeField {
        PrimeField::new(11).unwrap()
    }

    #[test]
    fn default_modulus_is_prime_45_bits() {
        let f = PrimeField::default();
        assert_eq!(f.modulus(), (1u64 << 45) - 55);
        assert_eq!(f.element_bits(), 45);
        assert_eq!(f.wire_bytes(), 8);
        assert_eq!(f.limb_bits(), 23);
        assert!(is_prime(DEFAULT_MODULUS));
    }

    #[test]
    fn rejects_composites() {
        assert_eq!(PrimeField::new(12), Err(FieldError::NotPrime(12)));
        assert!(PrimeField::new(1).is_err());
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn rejects_fields_too_wide_for_the_accumulator() {
        // 2*58 + 13 = 129
        let p = (1u64 << 58) - 27;
        assert!(is_prime(p));
        assert!(matches!(PrimeField::new(p), Err(FieldError::TooWide(..))));
    }

    #[test]
    fn small_field_examples() {
        let f = f11();
        assert_eq!(f.add(9, 9), 7);
        for x in 0..11 {
            assert_eq!(f.add(0, x), x);
        }
        assert_eq!(f.mul(5, 2), 10);
        assert_eq!(f.mul(2, 6), 1);
        assert_eq!(f.inv(2).unwrap(), 6);
        assert_eq!(f.inv(1).unwrap(), 1);
        assert_eq!(f.inv(0), Err(FieldError::DivisionByZero));
        assert_eq!(f.sub(3, 5), 9);
    }

    #[test]
    fn default_field_wraparound_and_fold_constant() {
        let f = PrimeField::default();
        let p = f.modulus();
        assert_eq!(f.add(p - 1, 1), 0);
        assert_eq!(f.mul(1 << 23, 1 << 23), 110);
    }

    #[test]
    fn signed_encoding() {
        let f = f11();
        assert_eq!(f.encode_signed(-5).unwrap(), 6);
        assert_eq!(f.decode_signed(6), -5);
        assert_eq!(f.encode_signed(0).unwrap(), 0);
        assert_eq!(f.decode_signed(5), 5);
        assert!(matches!(
            f.encode_signed(6),
            Err(FieldError::OutOfRange { .. })
        ));
        assert!(f.encode_signed(-6).is_err());
        let g = PrimeField::default();
        let b = g.signed_bound() as i64;
        assert_eq!(g.decode_signed(g.encode_signed(b).unwrap()), b);
        assert_eq!(g.decode_signed(g.encode_signed(-b).unwrap()), -b);
    }

    #[test]
    fn inverse_property_against_fermat() {
        let f = PrimeField::default();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let r = f.random_nonzero(&mut rng);
            let inv = f.inv(r).unwrap();
            assert_eq!(f.mul_wide(inv, r), 1);
            // independent route: r^(p-2)
            assert_eq!(inv, f.pow(r, f.modulus() - 2));
        }
    }

    #[test]
    fn element_wrapper_rejects_mixed_fields() {
        let a = f11().element(3).unwrap();
        let b = PrimeField::new(13).unwrap().element(3).unwrap();
        assert_eq!(a.checked_add(b), Err(FieldError::FieldMismatch(11, 13)));
        assert_eq!(a.checked_mul(b), Err(FieldError::FieldMismatch(11, 13)));
        assert!(f11().element(11).is_err());
        let c = f11().element(9).unwrap();
        assert_eq!(c.checked_add(c).unwrap().value(), 7);
        assert_eq!((-c).value(), 2);
        assert_eq!(f11().element(6).unwrap().to_signed(), -5);
        assert_eq!(c.to_le_bytes(), [9, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let f = PrimeField::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a: Vec<u64> = (0..20_000).map(|_| f.random(&mut rng)).collect();
        let b: Vec<u64> = (0..20_000).map(|_| f.random(&mut rng)).collect();
        let naive = a
            .iter()
            .zip(&b)
            .fold(0, |acc, (&x, &y)| f.add(acc, f.mul_wide(x, y)));
        assert_eq!(f.dot(&a, &b), naive);
        let s = f.with_mul_mode(MulMode::Split).unwrap();
        assert_eq!(s.dot(&a, &b), naive);
    }

    fn ring_axioms(f: PrimeField, a: u64, b: u64, c: u64) {
        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        assert_eq!(f.add(a, b), f.add(b, a));
        assert_eq!(f.mul(a, b), f.mul(b, a));
        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        assert_eq!(f.add(a, f.neg(a)), 0);
        assert_eq!(f.mul(a, 1), a);
    }

    proptest! {
        #[test]
        fn ring_axioms_small(a in 0u64..11, b in 0u64..11, c in 0u64..11) {
            ring_axioms(f11(), a, b, c);
        }

        #[test]
        fn ring_axioms_default(a in 0..DEFAULT_MODULUS, b in 0..DEFAULT_MODULUS, c in 0..DEFAULT_MODULUS) {
            ring_axioms(PrimeField::default(), a, b, c);
        }

        #[test]
        fn signed_round_trip(x in -(1i64 << 32)..=(1i64 << 32)) {
            let f = PrimeField::default();
            prop_assert_eq!(f.decode_signed(f.encode_signed(x).unwrap()), x);
        }

        #[test]
        fn signed_round_trip_full_range(x in -((DEFAULT_MODULUS as i64 - 1) / 2)..=((DEFAULT_MODULUS as i64 - 1) / 2)) {
            let f = PrimeField::default();
            prop_assert_eq!(f.decode_signed(f.encode_signed(x).unwrap()), x);
        }
    }
}
