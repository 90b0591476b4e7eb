//! Limb-split modular multiplication.
//!
//! Emulates a device whose exact integer range stops at `2^53` (the
//! mantissa of an IEEE-754 double): operands are split into 23-bit limbs,
//! partial products are regrouped as `C_H * 2^46 + C_L`, and `2^46 mod p`
//! folds the high part back into range.

use super::{PrimeField, LIMB_BITS};

/// Exact-integer ceiling of a 64-bit float.
pub const EXACT_LIMIT: u64 = 1 << 53;

const LIMB_MASK: u64 = (1 << LIMB_BITS) - 1;
const HIGH_SHIFT: u32 = 2 * LIMB_BITS;

/// Every intermediate produced by one [`PrimeField::split_mul_traced`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitTrace {
    pub steps: Vec<(&'static str, u64)>,
}

impl SplitTrace {
    fn record(&mut self, name: &'static str, value: u64) -> u64 {
        self.steps.push((name, value));
        value
    }

    pub fn max(&self) -> u64 {
        self.steps.iter().map(|&(_, v)| v).max().unwrap_or(0)
    }

    pub fn within_exact_range(&self) -> bool {
        self.steps.iter().all(|&(_, v)| v < EXACT_LIMIT)
    }
}

impl PrimeField {
    /// `2^46 mod p`; 110 for the default modulus.
    pub fn fold_constant(&self) -> u64 {
        ((1u128 << HIGH_SHIFT) % self.modulus() as u128) as u64
    }

    pub fn supports_split_mul(&self) -> bool {
        let p = self.modulus();
        p < (1 << HIGH_SHIFT)
            && (self.fold_constant() as u128) * (p as u128 - 1) + (p as u128 - 1)
                < EXACT_LIMIT as u128
    }

    #[inline]
    pub fn split_mul(&self, a: u64, b: u64) -> u64 {
        self.split_mul_inner(a, b, &mut None)
    }

    /// [`split_mul`](Self::split_mul) that also returns every intermediate value.
    pub fn split_mul_traced(&self, a: u64, b: u64) -> (u64, SplitTrace) {
        let mut trace = Some(SplitTrace::default());
        let c = self.split_mul_inner(a, b, &mut trace);
        (c, trace.unwrap_or_default())
    }

    #[inline(always)]
    fn split_mul_inner(&self, a: u64, b: u64, trace: &mut Option<SplitTrace>) -> u64 {
        debug_assert!(self.supports_split_mul());
        let p = self.modulus();
        let mut t = |name: &'static str, v: u64| -> u64 {
            if let Some(tr) = trace.as_mut() {
                tr.record(name, v);
            }
            v
        };

        let (a_h, a_l) = (t("a_h", a >> LIMB_BITS), t("a_l", a & LIMB_MASK));
        let (b_h, b_l) = (t("b_h", b >> LIMB_BITS), t("b_l", b & LIMB_MASK));

        let c_hh = t("c_hh", a_h * b_h);
        let c_hl = t("c_hl", a_h * b_l);
        let c_lh = t("c_lh", a_l * b_h);
        let c_ll = t("c_ll", a_l * b_l);

        // middle terms carry a 2^23 factor; split them so their high limbs join the 2^46 group
        let c_hl_h = t("c_hl_h", c_hl >> LIMB_BITS);
        let c_hl_l = t("c_hl_l", (c_hl & LIMB_MASK) << LIMB_BITS);
        let c_lh_h = t("c_lh_h", c_lh >> LIMB_BITS);
        let c_lh_l = t("c_lh_l", (c_lh & LIMB_MASK) << LIMB_BITS);

        let c_high = t("c_high", c_hh + c_hl_h + c_lh_h);
        let c_low = t("c_low", c_hl_l + c_lh_l + c_ll);

        let high_mod = t("c_high_mod", c_high % p);
        let low_mod = t("c_low_mod", c_low % p);
        let folded = t("folded", high_mod * self.fold_constant());
        let folded_mod = t("folded_mod", folded % p);
        let sum = t("sum", folded_mod + low_mod);
        t("result", sum % p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MulMode, DEFAULT_MODULUS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn fold_constant_matches_known_value() {
        assert_eq!(PrimeField::default().fold_constant(), 110);
    }

    #[test]
    fn anchor_values() {
        let f = PrimeField::default();
        assert_eq!(f.split_mul(1 << 23, 1 << 23), 110);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = f.random(&mut rng);
            assert_eq!(f.split_mul(a, 1), a);
            assert_eq!(f.split_mul(a, 0), 0);
        }
        let top = DEFAULT_MODULUS - 1;
        assert_eq!(f.split_mul(top, top), 1);
    }

    #[test]
    fn traced_intermediates_stay_below_2_53() {
        let f = PrimeField::default();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let edges = [0, 1, (1 << 23) - 1, 1 << 23, DEFAULT_MODULUS - 1];
        let mut pairs: Vec<(u64, u64)> = edges
            .iter()
            .flat_map(|&a| edges.iter().map(move |&b| (a, b)))
            .collect();
        pairs.extend((0..10_000).map(|_| {
            (
                rng.gen_range(0..DEFAULT_MODULUS),
                rng.gen_range(0..DEFAULT_MODULUS),
            )
        }));
        for (a, b) in pairs {
            let (c, trace) = f.split_mul_traced(a, b);
            assert_eq!(c, f.mul_wide(a, b));
            assert!(trace.within_exact_range(), "{a} * {b}: max {}", trace.max());
        }
    }

    #[test]
    fn small_fields_support_split() {
        let f = PrimeField::new(11).unwrap();
        assert!(f.supports_split_mul());
        for a in 0..11 {
            for b in 0..11 {
                assert_eq!(f.split_mul(a, b), (a * b) % 11);
            }
        }
    }

    #[test]
    fn wide_fields_reject_split_mode() {
        let f = PrimeField::new(18_446_744_073_709_551_557)
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(f, crate::field::FieldError::TooWide(..)));
        let p = (1u64 << 47) - 115; // prime just under 2^47
        if let Ok(g) = PrimeField::new(p) {
            assert!(!g.supports_split_mul());
            assert!(g.with_mul_mode(MulMode::Split).is_err());
        }
    }
}
