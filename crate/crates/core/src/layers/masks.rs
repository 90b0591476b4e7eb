//! Source-side plaintext masks for truncation and nonlinear ops.

use rand::Rng;

use crate::field::PrimeField;

use super::schedule::PoolOp;
use super::LayerError;

/// Upper end of the additive mask interval `(0, 2^32]`.
pub const ADDITIVE_MASK_LIMIT: u64 = 1 << 32;

/// `alpha = e * r * d` and `alpha_bar = -e`, elementwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdditiveMask {
    pub e: Vec<u64>,
    pub alpha: Vec<u64>,
    pub alpha_bar: Vec<u64>,
}

/// Number of admissible `e` values, `floor(2^32 / (r * d))`.
pub fn additive_mask_range(r: u64, d: u64) -> Result<u64, LayerError> {
    let step = r
        .checked_mul(d)
        .filter(|&s| s > 0 && s <= ADDITIVE_MASK_LIMIT)
        .ok_or_else(|| LayerError::EmptyMaskSpace(format!("r*d = {r}*{d} exceeds 2^32")))?;
    Ok(ADDITIVE_MASK_LIMIT / step)
}

/// Draws `e` uniformly from `[1, floor(2^32 / (r d))]`; `zero` forces `e = 0` for oracle tests.
pub fn gen_additive_mask<R: Rng + ?Sized>(
    field: &PrimeField,
    len: usize,
    r: u64,
    d: u64,
    zero: bool,
    rng: &mut R,
) -> Result<AdditiveMask, LayerError> {
    let e_max = additive_mask_range(r, d)?;
    let e: Vec<u64> = (0..len)
        .map(|_| if zero { 0 } else { rng.gen_range(1..=e_max) })
        .collect();
    let alpha = e.iter().map(|&v| field.reduce(v * r * d)).collect();
    let alpha_bar = e.iter().map(|&v| field.neg(field.reduce(v))).collect();
    Ok(AdditiveMask {
        e,
        alpha,
        alpha_bar,
    })
}

/// `beta` over the input shape and `beta^-1` over the pooled output shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicativeMask {
    pub beta: Vec<u64>,
    pub beta_inv: Vec<u64>,
}

/// Output block index of each input position for a `CxHxW` tensor.
pub fn pool_block_index(shape: &[usize], pool: PoolOp) -> Result<Vec<usize>, LayerError> {
    let Some((kh, kw)) = pool.window() else {
        return Ok((0..shape.iter().product()).collect());
    };
    let [c, h, w] = shape else {
        return Err(LayerError::Shape(format!(
            "pooling needs CxHxW, got {shape:?}"
        )));
    };
    if h % kh != 0 || w % kw != 0 {
        return Err(LayerError::Shape(format!(
            "{kh}x{kw} does not tile {h}x{w}"
        )));
    }
    let (oh, ow) = (h / kh, w / kw);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..*c {
        for y in 0..*h {
            for x in 0..*w {
                out.push((ch * oh + y / kh) * ow + x / kw);
            }
        }
    }
    Ok(out)
}

/// Draws `beta` uniformly from `[1, max]`, one value per pool block.
pub fn gen_multiplicative_mask<R: Rng + ?Sized>(
    field: &PrimeField,
    shape: &[usize],
    pool: PoolOp,
    max: u64,
    rng: &mut R,
) -> Result<MultiplicativeMask, LayerError> {
    if max == 0 || max > field.signed_bound() {
        return Err(LayerError::EmptyMaskSpace(format!("beta bound {max}")));
    }
    let block = pool_block_index(shape, pool)?;
    let blocks = shape.iter().product::<usize>() / pool.area();
    let per_block: Vec<u64> = (0..blocks).map(|_| rng.gen_range(1..=max)).collect();
    let beta_inv = per_block
        .iter()
        .map(|&b| field.inv(b))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MultiplicativeMask {
        beta: block.iter().map(|&b| per_block[b]).collect(),
        beta_inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn additive_ranges() {
        assert_eq!(additive_mask_range(1 << 16, 1).unwrap(), 1 << 16);
        assert_eq!(additive_mask_range(1 << 16, 4).unwrap(), 1 << 14);
        assert!(additive_mask_range(1 << 32, 2).is_err());
    }

    #[test]
    fn additive_masks_are_multiples_and_cancel() {
        let field = PrimeField::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (r, d) = (1 << 16, 4);
        let m = gen_additive_mask(&field, 500, r, d, false, &mut rng).unwrap();
        for i in 0..500 {
            let alpha = field.decode_signed(m.alpha[i]);
            assert!(alpha > 0 && alpha as u64 <= ADDITIVE_MASK_LIMIT);
            assert_eq!(alpha as u64 % (r * d), 0);
            let cancel = field.add(m.alpha[i], field.mul(field.reduce(r * d), m.alpha_bar[i]));
            assert_eq!(cancel, 0);
            assert!((1..=1 << 14).contains(&m.e[i]));
        }
        let z = gen_additive_mask(&field, 3, r, 1, true, &mut rng).unwrap();
        assert_eq!(z.alpha, vec![0; 3]);
    }

    #[test]
    fn multiplicative_masks_are_block_constant() {
        let field = PrimeField::default();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let shape = [2, 4, 4];
        let pool = PoolOp::Max { kh: 2, kw: 2 };
        let m = gen_multiplicative_mask(&field, &shape, pool, 1 << 28, &mut rng).unwrap();
        let block = pool_block_index(&shape, pool).unwrap();
        assert_eq!(m.beta_inv.len(), 8);
        for (i, &b) in block.iter().enumerate() {
            assert_eq!(field.mul(m.beta[i], m.beta_inv[b]), 1);
            assert!((1..=1 << 28).contains(&m.beta[i]));
        }
    }
}
