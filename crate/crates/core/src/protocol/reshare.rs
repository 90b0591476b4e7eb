//! Degree reduction by resharing, re-randomization and zero sharings.

use crate::field::PrimeField;
use crate::sss::{interpolate_at_zero, share_random, ShareTensor, SssError, SssScheme};

use super::net::PartyNet;
use super::wire::Phase;
use super::ProtocolError;

/// Reduces a degree-`2k-2` sharing held by the first `2k-1` parties to a
/// degree-`k-1` sharing held by the first `targets` parties.
///
/// 1. Each of the `2k-1` holders shares its share with `gen(., k, k)` to the
///    front `k` parties, keeping its own sub-share.
/// 2. Each front party combines the sub-shares it holds with the public
///    column of `B^-1 P V` for every target.
/// 3. Each front party sends target `t` its combination; `t` interpolates the
///    `k` values at zero to get its reduced share.
///
/// No party receives more than one value derived from any other party's
/// share, and each such value is itself one point of a fresh degree-`k-1`
/// polynomial.
pub fn reshare_degree_reduce(
    net: &mut PartyNet,
    product: Option<&ShareTensor>,
    shape: &[usize],
    targets: usize,
) -> Result<Option<ShareTensor>, ProtocolError> {
    let scheme = net.scheme().clone();
    let field = *scheme.field();
    let (k, i) = (scheme.k(), net.index());
    let m = scheme.product_parties();
    if targets < k || targets > scheme.n() {
        return Err(ProtocolError::Config(format!("{targets} reshare targets")));
    }
    let front_ids = &scheme.party_ids()[..k];

    // Step 1
    let mut own_sub = None;
    if i < m {
        let c = product.ok_or(ProtocolError::MissingInput { party: i })?;
        if c.degree() != scheme.product_degree() {
            return Err(SssError::DegreeMismatch(scheme.product_degree(), c.degree()).into());
        }
        if c.shape() != shape {
            return Err(SssError::ShapeMismatch(format!("{:?} vs {shape:?}", c.shape())).into());
        }
        let subs = share_random(&field, c.values(), shape, k, front_ids, net.rng())?;
        for (j, sub) in subs.into_iter().enumerate() {
            if j == i {
                own_sub = Some(sub);
            } else {
                net.send_tensor(j, Phase::ReshareOut, &sub)?;
            }
        }
    }

    // Step 2
    let mut own_back = None;
    if i < k {
        let mut subs = Vec::with_capacity(m);
        for src in 0..m {
            let s = if src == i {
                own_sub.take().expect("front parties hold a product share")
            } else {
                net.recv_tensor(src, Phase::ReshareOut)?
            };
            check_sub(&s, scheme.party_id(i), shape)?;
            subs.push(s);
        }
        let cols = scheme.reduction_columns();
        for t in 0..targets {
            let coeffs: Vec<u64> = (0..m).map(|src| cols[(src, t)]).collect();
            let values = combine(&field, &subs, &coeffs);
            let v = ShareTensor::new(scheme.party_id(i), k - 1, shape.to_vec(), values)?;
            if t == i {
                own_back = Some(v);
            } else {
                net.send_tensor(t, Phase::ReshareBack, &v)?;
            }
        }
    }

    // Step 3
    if i >= targets {
        return Ok(None);
    }
    let mut backs = Vec::with_capacity(k);
    for j in 0..k {
        let v = if j == i {
            own_back.take().expect("front party kept its own value")
        } else {
            net.recv_tensor(j, Phase::ReshareBack)?
        };
        check_sub(&v, scheme.party_id(j), shape)?;
        backs.push(v);
    }
    let columns: Vec<&[u64]> = backs.iter().map(|b| b.values()).collect();
    let reduced = interpolate_at_zero(&field, front_ids, scheme.front_weights(), &columns);
    Ok(Some(ShareTensor::new(
        scheme.party_id(i),
        scheme.share_degree(),
        shape.to_vec(),
        reduced,
    )?))
}

fn check_sub(s: &ShareTensor, id: u64, shape: &[usize]) -> Result<(), ProtocolError> {
    if s.party_id() != id {
        return Err(SssError::PartyMismatch(id, s.party_id()).into());
    }
    if s.shape() != shape {
        return Err(SssError::ShapeMismatch(format!("{:?} vs {shape:?}", s.shape())).into());
    }
    Ok(())
}

fn combine(field: &PrimeField, subs: &[ShareTensor], coeffs: &[u64]) -> Vec<u64> {
    let len = subs.first().map_or(0, |s| s.len());
    (0..len)
        .map(|e| {
            let acc: u128 = subs
                .iter()
                .zip(coeffs)
                .map(|(s, &c)| s.values()[e] as u128 * c as u128)
                .sum();
            field.reduce_wide(acc)
        })
        .collect()
}

/// Adds a sharing of zero; the secret is unchanged and the higher coefficients are refreshed.
pub fn rerand(
    scheme: &SssScheme,
    share: &ShareTensor,
    zero_share: &ShareTensor,
) -> Result<ShareTensor, SssError> {
    for d in [share.degree(), zero_share.degree()] {
        if d != scheme.share_degree() {
            return Err(SssError::DegreeMismatch(scheme.share_degree(), d));
        }
    }
    scheme.share_add(share, zero_share)
}

/// Source-free zero sharing: every party shares zero to everyone and sums what it receives.
pub fn distributed_zero_shares(
    net: &mut PartyNet,
    shape: &[usize],
) -> Result<ShareTensor, ProtocolError> {
    let scheme = net.scheme().clone();
    let i = net.index();
    let zeros = vec![0; shape.iter().product()];
    let mine = scheme.gen(&zeros, shape, net.rng())?;
    let mut acc = None;
    for (j, s) in mine.into_iter().enumerate() {
        if j == i {
            acc = Some(s);
        } else {
            net.send_tensor(j, Phase::ZeroShare, &s)?;
        }
    }
    let mut acc = acc.expect("own share");
    for j in (0..scheme.n()).filter(|&j| j != i) {
        let s = net.recv_tensor(j, Phase::ZeroShare)?;
        acc = scheme.share_add(&acc, &s)?;
    }
    Ok(acc)
}

/// What party 1 learns from the insecure row-scaling reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveDemo {
    /// Values party 1 receives: `c_j * R[j][0]` from each other holder `j`.
    pub received: Vec<Vec<u64>>,
    /// `c_j` recovered by dividing by the public `R[j][0]`, own share first.
    pub recovered: Vec<ShareTensor>,
    /// The product secret reconstructed by party 1 alone.
    pub secret: Vec<u64>,
}

/// The insecure reduction in which party `j` sends `c_j * R[j][t]` directly
/// to party `t`. Party 1 divides out the public entries of `R`, obtains all
/// `2k-1` raw product shares and reconstructs the secret.
///
/// Kept as a negative test of the transcript audit.
pub fn naive_degree_reduce_demo(
    shares: &[ShareTensor],
    scheme: &SssScheme,
) -> Result<NaiveDemo, SssError> {
    let field = scheme.field();
    let m = scheme.product_parties();
    if shares.len() < m {
        return Err(SssError::InsufficientShares {
            need: m,
            got: shares.len(),
        });
    }
    let r = scheme.reducing_matrix();
    let mut received = Vec::new();
    let mut recovered = vec![shares[0].clone()];
    for (j, c) in shares.iter().enumerate().take(m).skip(1) {
        let scaled: Vec<u64> = c
            .values()
            .iter()
            .map(|&v| field.mul(v, r[(j, 0)]))
            .collect();
        let inv = field.inv(r[(j, 0)])?;
        let solved = scaled.iter().map(|&v| field.mul(v, inv)).collect();
        recovered.push(ShareTensor::new(
            c.party_id(),
            c.degree(),
            c.shape().to_vec(),
            solved,
        )?);
        received.push(scaled);
    }
    let refs: Vec<&ShareTensor> = recovered.iter().collect();
    let secret = scheme.rec(&refs, m)?;
    Ok(NaiveDemo {
        received,
        recovered,
        secret,
    })
}
