//! The secure linear, truncation and nonlinear operations, run by every party in lockstep.

use crate::model::{round_half_up_div, LinearShares};
use crate::protocol::{rerand, reshare_degree_reduce, OpMasks, PartyNet, Phase, ProtocolError};
use crate::sss::{interpolate_at_zero, Public, ShareTensor, SssError};

use super::kernels::Geometry;
use super::masks::{pool_block_index, ADDITIVE_MASK_LIMIT};
use super::schedule::PoolOp;
use super::LayerError;

fn need<'a>(net: &PartyNet, x: Option<&'a ShareTensor>) -> Result<&'a ShareTensor, ProtocolError> {
    x.ok_or(ProtocolError::MissingInput { party: net.index() })
}

fn check_degree(net: &PartyNet, x: &ShareTensor) -> Result<(), ProtocolError> {
    let want = net.scheme().share_degree();
    if x.degree() != want {
        return Err(SssError::DegreeMismatch(want, x.degree()).into());
    }
    Ok(())
}

fn mask_mismatch(op: &str) -> ProtocolError {
    ProtocolError::Mask(format!("bundle entry does not match a {op} op"))
}

/// Convolution or dense layer on shares.
///
/// The first `2k-1` parties evaluate the layer locally on their shares,
/// giving a degree-`2k-2` sharing (the bias share is a valid point of that
/// polynomial too). Resharing brings it back to degree `k-1` on the front `k`
/// parties, or on all `n` when `passive_out` is set, and each holder then adds
/// its zero share.
pub fn sss_linear(
    net: &mut PartyNet,
    x: Option<&ShareTensor>,
    weights: &LinearShares,
    geometry: &Geometry,
    passive_out: bool,
    masks: &OpMasks,
) -> Result<Option<ShareTensor>, ProtocolError> {
    let OpMasks::Linear { zero } = masks else {
        return Err(mask_mismatch("linear"));
    };
    let field = *net.field();
    let i = net.index();
    let out_shape = geometry.out_shape.clone();
    let product = if i < net.scheme().product_parties() {
        let x = need(net, x)?;
        check_degree(net, x)?;
        let mut y = geometry.apply_field(&field, x.values(), weights.weights.values());
        if let Some(b) = &weights.bias {
            for (o, v) in y.iter_mut().enumerate() {
                *v = field.add(*v, b.values()[o / geometry.plane]);
            }
        }
        Some(ShareTensor::new(
            net.scheme().party_id(i),
            net.scheme().product_degree(),
            out_shape.clone(),
            y,
        )?)
    } else {
        None
    };
    let targets = if passive_out { net.n() } else { net.k() };
    let reduced = reshare_degree_reduce(net, product.as_ref(), &out_shape, targets)?;
    match reduced {
        Some(r) => Ok(Some(rerand(net.scheme(), &r, zero)?)),
        None => Ok(None),
    }
}

/// Exact truncation `floor(x / r)`, optionally followed by the pooling
/// divisor `[. / d]`.
///
/// The front parties add `alpha = e r d`, the elite opens `x + alpha`,
/// divides in the signed integers, and reshares the quotient to all `n`
/// parties, who add `alpha_bar = -e`.
pub fn sss_truncation(
    net: &mut PartyNet,
    x: Option<&ShareTensor>,
    scale: u64,
    divisor: u64,
    shape: &[usize],
    masks: &OpMasks,
) -> Result<ShareTensor, ProtocolError> {
    let OpMasks::Truncation { alpha, alpha_bar } = masks else {
        return Err(mask_mismatch("truncation"));
    };
    let scheme = net.scheme().clone();
    let field = *scheme.field();
    let (k, i) = (scheme.k(), net.index());

    let masked = if i < k {
        let x = need(net, x)?;
        check_degree(net, x)?;
        Some(scheme.share_add(x, alpha)?)
    } else {
        None
    };
    if (1..k).contains(&i) {
        net.send_tensor(0, Phase::TruncMasked, masked.as_ref().expect("front party"))?;
    }

    let fresh = if i == 0 {
        let mut columns = vec![masked.expect("elite is a front party")];
        for j in 1..k {
            columns.push(net.recv_tensor(j, Phase::TruncMasked)?);
        }
        let cols: Vec<&[u64]> = columns.iter().map(|c| c.values()).collect();
        let opened = field.decode_slice(&interpolate_at_zero(
            &field,
            &scheme.party_ids()[..k],
            scheme.front_weights(),
            &cols,
        ));
        net.observe(Phase::TruncMasked, &opened);
        // Half the signed range is kept as headroom for the mask; teaching
        // fields too small to hold a mask only get the decode range.
        let bound = field.signed_bound();
        let budget = if bound > 2 * ADDITIVE_MASK_LIMIT {
            bound / 2
        } else {
            bound
        } as i64;
        let mut quotient = Vec::with_capacity(opened.len());
        for &z in &opened {
            if z.abs() > budget {
                return Err(ProtocolError::Budget(format!(
                    "masked value {z} is outside the truncation budget"
                )));
            }
            let q = z.div_euclid(scale as i64);
            quotient.push(if divisor > 1 {
                round_half_up_div(q, divisor as i64)
            } else {
                q
            });
        }
        let encoded = field.encode_slice(&quotient)?;
        let mut shares = scheme.gen(&encoded, shape, net.rng())?.into_iter();
        let own = shares.next().expect("n >= 1");
        for (j, s) in shares.enumerate() {
            net.send_tensor(j + 1, Phase::TruncShares, &s)?;
        }
        own
    } else {
        net.recv_tensor(0, Phase::TruncShares)?
    };
    Ok(scheme.share_add(&fresh, alpha_bar)?)
}

/// ReLU and/or pooling on shares through a positive multiplicative mask.
///
/// The first `2k-1` parties multiply by their `beta` share and send the
/// degree-`2k-2` result to the elite, which opens `x * beta`, applies the
/// plaintext function (sign and per-block order survive a positive
/// block-constant `beta`) and sends the result to the targets. Each target
/// multiplies the public result by its `beta^-1` share.
#[allow(clippy::too_many_arguments)]
pub fn sss_nonlinear(
    net: &mut PartyNet,
    x: Option<&ShareTensor>,
    relu: bool,
    pool: PoolOp,
    in_shape: &[usize],
    out_shape: &[usize],
    passive_out: bool,
    masks: &OpMasks,
) -> Result<Option<ShareTensor>, ProtocolError> {
    let OpMasks::NonLinear { beta, beta_inv } = masks else {
        return Err(mask_mismatch("nonlinear"));
    };
    let scheme = net.scheme().clone();
    let field = *scheme.field();
    let i = net.index();
    let m = scheme.product_parties();
    let targets = if passive_out { scheme.n() } else { scheme.k() };

    let product = if i < m {
        let x = need(net, x)?;
        check_degree(net, x)?;
        let beta = beta
            .as_ref()
            .ok_or_else(|| ProtocolError::Mask(format!("party {i} has no beta share")))?;
        Some(scheme.share_mul(x, beta)?)
    } else {
        None
    };
    if (1..m).contains(&i) {
        net.send_tensor(0, Phase::NonlinMasked, product.as_ref().expect("holder"))?;
    }

    let plain: Option<Vec<u64>> = if i == 0 {
        let mut columns = vec![product.expect("elite holds a product share")];
        for j in 1..m {
            columns.push(net.recv_tensor(j, Phase::NonlinMasked)?);
        }
        let cols: Vec<&[u64]> = columns.iter().map(|c| c.values()).collect();
        let opened = field.decode_slice(&interpolate_at_zero(
            &field,
            &scheme.party_ids()[..m],
            scheme.product_weights(),
            &cols,
        ));
        net.observe(Phase::NonlinMasked, &opened);
        let result = apply_nonlinear(&opened, in_shape, relu, pool)?;
        let encoded = field.encode_slice(&result)?;
        let carrier = ShareTensor::new(0, 0, out_shape.to_vec(), encoded.clone())?;
        for t in 1..targets {
            net.send_tensor(t, Phase::NonlinPlain, &carrier)?;
        }
        Some(encoded)
    } else if i < targets {
        let carrier = net.recv_tensor(0, Phase::NonlinPlain)?;
        if carrier.shape() != out_shape {
            return Err(
                SssError::ShapeMismatch(format!("{:?} vs {out_shape:?}", carrier.shape())).into(),
            );
        }
        let seen = field.decode_slice(carrier.values());
        net.observe(Phase::NonlinPlain, &seen);
        Some(carrier.into_values())
    } else {
        None
    };

    match plain {
        Some(p) => Ok(Some(scheme.share_mul_public(beta_inv, Public::Tensor(&p))?)),
        None => Ok(None),
    }
}

/// ReLU then max or sum over non-overlapping blocks, on plaintext integers.
pub fn apply_nonlinear(
    x: &[i64],
    shape: &[usize],
    relu: bool,
    pool: PoolOp,
) -> Result<Vec<i64>, LayerError> {
    let act: Vec<i64> = if relu {
        x.iter().map(|&v| v.max(0)).collect()
    } else {
        x.to_vec()
    };
    if pool == PoolOp::None {
        return Ok(act);
    }
    let block = pool_block_index(shape, pool)?;
    let blocks = act.len() / pool.area();
    let mut out: Vec<Option<i64>> = vec![None; blocks];
    for (v, &b) in act.iter().zip(&block) {
        out[b] = Some(match (out[b], pool) {
            (None, _) => *v,
            (Some(cur), PoolOp::Max { .. }) => cur.max(*v),
            (Some(cur), _) => cur + v,
        });
    }
    Ok(out
        .into_iter()
        .map(|v| v.expect("every block is covered"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plaintext_pooling() {
        let x: Vec<i64> = vec![1, -2, 3, 4, -5, -6, 7, -8, 9, 10, 11, 12, 13, 14, 15, -16];
        let shape = [1, 4, 4];
        assert_eq!(
            apply_nonlinear(&x, &shape, true, PoolOp::Max { kh: 2, kw: 2 }).unwrap(),
            vec![1, 7, 14, 15]
        );
        assert_eq!(
            apply_nonlinear(&x, &shape, false, PoolOp::Sum { kh: 2, kw: 2 }).unwrap(),
            vec![
                1 - 2 - 5 - 6,
                3 + 4 + 7 - 8,
                9 + 10 + 13 + 14,
                11 + 12 + 15 - 16
            ]
        );
        assert_eq!(
            apply_nonlinear(&[-3, 5], &[2], true, PoolOp::None).unwrap(),
            vec![0, 5]
        );
    }
}
