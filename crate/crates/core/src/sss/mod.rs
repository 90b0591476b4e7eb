//! Shamir sharing: generation, Lagrange reconstruction, local share
//! arithmetic and the degree-reducing matrix `R = B^-1 P B`.

mod share;

use std::collections::HashSet;

use rand::Rng;
use thiserror::Error;

use crate::field::{FieldError, Matrix, PrimeField};

pub use share::{element_count, Public, ShareTensor};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SssError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("need at least {need} shares, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("duplicate party id {0}")]
    DuplicateIds(u64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("party mismatch: {0} vs {1}")]
    PartyMismatch(u64, u64),
    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("degree overflow: multiplying degree {0} shares would exceed 2k-2 = {1}")]
    DegreeOverflow(usize, usize),
    #[error("degree {0} is neither k-1 nor 2k-2")]
    InvalidDegree(usize),
}

/// A `(k, n)` threshold scheme with its precomputed constants.
#[derive(Debug, Clone)]
pub struct SssScheme {
    field: PrimeField,
    k: usize,
    n: usize,
    party_ids: Vec<u64>,
    front_weights: Vec<u64>,
    product_weights: Vec<u64>,
    reducing: Matrix,
    reduction_all: Matrix,
}

/// Lagrange coefficients `w_i = prod_{j != i} id_j / (id_j - id_i)` for evaluation at zero.
pub fn lagrange_weights(field: &PrimeField, ids: &[u64]) -> Result<Vec<u64>, SssError> {
    check_ids(field, ids)?;
    ids.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut num = 1;
            let mut den = 1;
            for (j, &xj) in ids.iter().enumerate() {
                if i != j {
                    num = field.mul_wide(num, xj);
                    den = field.mul_wide(den, field.sub(xj, xi));
                }
            }
            Ok(field.mul_wide(num, field.inv(den)?))
        })
        .collect()
}

fn check_ids(field: &PrimeField, ids: &[u64]) -> Result<(), SssError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for &id in ids {
        if id == 0 || id >= field.modulus() {
            return Err(SssError::InvalidScheme(format!(
                "party id {id} must be a nonzero field element"
            )));
        }
        if !seen.insert(id) {
            return Err(SssError::DuplicateIds(id));
        }
    }
    Ok(())
}

/// Evaluates `secret + c_1 x + ... + c_{k-1} x^{k-1}` at each id, elementwise.
///
/// `coefficient(c, e)` supplies `c_{c+1}` for element `e`.
pub fn share_with_coefficients(
    field: &PrimeField,
    secret: &[u64],
    shape: &[usize],
    k: usize,
    ids: &[u64],
    mut coefficient: impl FnMut(usize, usize) -> u64,
) -> Result<Vec<ShareTensor>, SssError> {
    if k == 0 {
        return Err(SssError::InvalidScheme("k must be at least 1".into()));
    }
    if element_count(shape) != secret.len() {
        return Err(SssError::ShapeMismatch(format!(
            "shape {shape:?} does not hold {} secrets",
            secret.len()
        )));
    }
    let mut outputs: Vec<Vec<u64>> = vec![Vec::with_capacity(secret.len()); ids.len()];
    let mut coeffs = vec![0u64; k];
    for (e, &s) in secret.iter().enumerate() {
        coeffs[0] = s;
        for (c, slot) in coeffs.iter_mut().enumerate().skip(1) {
            *slot = coefficient(c - 1, e);
        }
        for (out, &id) in outputs.iter_mut().zip(ids) {
            // Horner
            let v = coeffs
                .iter()
                .rev()
                .fold(0, |acc, &c| field.add(field.mul_wide(acc, id), c));
            out.push(v);
        }
    }
    ids.iter()
        .zip(outputs)
        .map(|(&id, values)| ShareTensor::new(id, k - 1, shape.to_vec(), values))
        .collect()
}

/// Fresh degree-`k-1` sharing of `secret` to `ids` with uniform coefficients.
pub fn share_random<R: Rng + ?Sized>(
    field: &PrimeField,
    secret: &[u64],
    shape: &[usize],
    k: usize,
    ids: &[u64],
    rng: &mut R,
) -> Result<Vec<ShareTensor>, SssError> {
    share_with_coefficients(field, secret, shape, k, ids, |_, _| field.random(rng))
}

/// Interpolates the constant term from shares taken at `ids`.
pub fn interpolate_at_zero(
    field: &PrimeField,
    ids: &[u64],
    weights: &[u64],
    columns: &[&[u64]],
) -> Vec<u64> {
    debug_assert_eq!(ids.len(), weights.len());
    let len = columns.first().map_or(0, |c| c.len());
    (0..len)
        .map(|e| {
            let mut acc: u128 = 0;
            for (w, col) in weights.iter().zip(columns) {
                acc += *w as u128 * col[e] as u128;
            }
            field.reduce_wide(acc)
        })
        .collect()
}

impl SssScheme {
    /// Scheme with the default ids `1..=n`.
    pub fn new(field: PrimeField, k: usize, n: usize) -> Result<Self, SssError> {
        Self::with_ids(field, k, (1..=n as u64).collect())
    }

    pub fn with_ids(field: PrimeField, k: usize, party_ids: Vec<u64>) -> Result<Self, SssError> {
        let n = party_ids.len();
        if k == 0 {
            return Err(SssError::InvalidScheme("k must be at least 1".into()));
        }
        if n < 2 * k - 1 {
            return Err(SssError::InvalidScheme(format!(
                "n >= 2k-1 required (k = {k}, n = {n})"
            )));
        }
        check_ids(&field, &party_ids)?;
        let front_weights = lagrange_weights(&field, &party_ids[..k])?;
        let product_weights = lagrange_weights(&field, &party_ids[..2 * k - 1])?;
        let m = 2 * k - 1;
        let b = Matrix::vandermonde(&field, &party_ids[..m], m);
        let b_inv = b.inverse(&field)?;
        let mut projection = Matrix::zeros(m, m);
        for i in 0..k {
            projection[(i, i)] = 1;
        }
        let b_inv_p = b_inv.mul(&projection, &field)?;
        let reducing = b_inv_p.mul(&b, &field)?;
        let reduction_all = b_inv_p.mul(&Matrix::vandermonde(&field, &party_ids, m), &field)?;
        Ok(Self {
            field,
            k,
            n,
            party_ids,
            front_weights,
            product_weights,
            reducing,
            reduction_all,
        })
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Degree of a fresh sharing, `k - 1`.
    pub fn share_degree(&self) -> usize {
        self.k - 1
    }

    /// Degree after one share-by-share product, `2k - 2`.
    pub fn product_degree(&self) -> usize {
        2 * self.k - 2
    }

    /// Parties needed to hold a product sharing, `2k - 1`.
    pub fn product_parties(&self) -> usize {
        2 * self.k - 1
    }

    pub fn party_ids(&self) -> &[u64] {
        &self.party_ids
    }

    pub fn party_id(&self, index: usize) -> u64 {
        self.party_ids[index]
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.party_ids.iter().position(|&x| x == id)
    }

    /// Reconstruction weights for the first `k` ids.
    pub fn front_weights(&self) -> &[u64] {
        &self.front_weights
    }

    /// Reconstruction weights for the first `2k - 1` ids.
    pub fn product_weights(&self) -> &[u64] {
        &self.product_weights
    }

    /// `R = B^-1 P B` over the first `2k - 1` ids.
    pub fn reducing_matrix(&self) -> &Matrix {
        &self.reducing
    }

    /// `B^-1 P V`, one column per party; its first `2k - 1` columns equal `R`.
    pub fn reduction_columns(&self) -> &Matrix {
        &self.reduction_all
    }

    fn check_degree(&self, degree: usize) -> Result<(), SssError> {
        if degree == self.share_degree() || degree == self.product_degree() {
            Ok(())
        } else {
            Err(SssError::InvalidDegree(degree))
        }
    }

    /// Shares `secret` to all `n` parties with fresh random coefficients.
    pub fn gen<R: Rng + ?Sized>(
        &self,
        secret: &[u64],
        shape: &[usize],
        rng: &mut R,
    ) -> Result<Vec<ShareTensor>, SssError> {
        self.check_secret(secret)?;
        share_random(&self.field, secret, shape, self.k, &self.party_ids, rng)
    }

    /// Deterministic variant: `coefficients[c][e]` is `a_{c+1}` for element `e`.
    pub fn gen_with_coefficients(
        &self,
        secret: &[u64],
        shape: &[usize],
        coefficients: &[Vec<u64>],
    ) -> Result<Vec<ShareTensor>, SssError> {
        self.check_secret(secret)?;
        if coefficients.len() != self.k - 1 || coefficients.iter().any(|c| c.len() != secret.len())
        {
            return Err(SssError::ShapeMismatch(format!(
                "expected {} coefficient rows of {} elements",
                self.k - 1,
                secret.len()
            )));
        }
        share_with_coefficients(
            &self.field,
            secret,
            shape,
            self.k,
            &self.party_ids,
            |c, e| self.field.reduce(coefficients[c][e]),
        )
    }

    fn check_secret(&self, secret: &[u64]) -> Result<(), SssError> {
        match secret.iter().find(|&&s| s >= self.field.modulus()) {
            Some(&s) => Err(FieldError::NotCanonical(s).into()),
            None => Ok(()),
        }
    }

    /// Lagrange reconstruction from the first `m` of `shares`.
    pub fn rec(&self, shares: &[&ShareTensor], m: usize) -> Result<Vec<u64>, SssError> {
        if shares.len() < m {
            return Err(SssError::InsufficientShares {
                need: m,
                got: shares.len(),
            });
        }
        let used = &shares[..m];
        let first = used
            .first()
            .ok_or(SssError::InsufficientShares { need: 1, got: 0 })?;
        let degree = first.degree();
        for s in used {
            if s.degree() != degree {
                return Err(SssError::DegreeMismatch(degree, s.degree()));
            }
            if s.shape() != first.shape() {
                return Err(SssError::ShapeMismatch(format!(
                    "{:?} vs {:?}",
                    first.shape(),
                    s.shape()
                )));
            }
        }
        if m < degree + 1 {
            return Err(SssError::InsufficientShares {
                need: degree + 1,
                got: m,
            });
        }
        let ids: Vec<u64> = used.iter().map(|s| s.party_id()).collect();
        let weights = if ids == self.party_ids[..self.k.min(self.n)] && m == self.k {
            self.front_weights.clone()
        } else if m == self.product_parties() && ids == self.party_ids[..m] {
            self.product_weights.clone()
        } else {
            lagrange_weights(&self.field, &ids)?
        };
        let columns: Vec<&[u64]> = used.iter().map(|s| s.values()).collect();
        Ok(interpolate_at_zero(&self.field, &ids, &weights, &columns))
    }

    pub fn share_add(&self, a: &ShareTensor, b: &ShareTensor) -> Result<ShareTensor, SssError> {
        self.linear_combine(a, b, |x, y| self.field.add(x, y))
    }

    pub fn share_sub(&self, a: &ShareTensor, b: &ShareTensor) -> Result<ShareTensor, SssError> {
        self.linear_combine(a, b, |x, y| self.field.sub(x, y))
    }

    fn linear_combine(
        &self,
        a: &ShareTensor,
        b: &ShareTensor,
        f: impl Fn(u64, u64) -> u64,
    ) -> Result<ShareTensor, SssError> {
        a.check_compatible(b)?;
        self.check_degree(a.degree())?;
        if a.degree() != b.degree() {
            return Err(SssError::DegreeMismatch(a.degree(), b.degree()));
        }
        Ok(a.map_values(a.zip_with(b, f), a.degree()))
    }

    pub fn share_add_public(
        &self,
        a: &ShareTensor,
        b: Public<'_>,
    ) -> Result<ShareTensor, SssError> {
        self.check_degree(a.degree())?;
        Ok(a.map_values(a.zip_public(b, |x, y| self.field.add(x, y))?, a.degree()))
    }

    pub fn share_sub_public(
        &self,
        a: &ShareTensor,
        b: Public<'_>,
    ) -> Result<ShareTensor, SssError> {
        self.check_degree(a.degree())?;
        Ok(a.map_values(a.zip_public(b, |x, y| self.field.sub(x, y))?, a.degree()))
    }

    /// Share-by-share elementwise product; the result has degree `2k - 2`.
    pub fn share_mul(&self, a: &ShareTensor, b: &ShareTensor) -> Result<ShareTensor, SssError> {
        a.check_compatible(b)?;
        let low = self.share_degree();
        for d in [a.degree(), b.degree()] {
            self.check_degree(d)?;
            if d != low {
                return Err(SssError::DegreeOverflow(d, self.product_degree()));
            }
        }
        Ok(a.map_values(
            a.zip_with(b, |x, y| self.field.mul(x, y)),
            self.product_degree(),
        ))
    }

    /// Public-by-share product; the degree is unchanged.
    pub fn share_mul_public(
        &self,
        a: &ShareTensor,
        b: Public<'_>,
    ) -> Result<ShareTensor, SssError> {
        self.check_degree(a.degree())?;
        Ok(a.map_values(a.zip_public(b, |x, y| self.field.mul(x, y))?, a.degree()))
    }

    /// Applies `R` centrally to the first `2k - 1` product shares, yielding
    /// degree-`k-1` shares for every party.
    ///
    /// This sees every share at once and is only an oracle for the
    /// distributed protocol.
    pub fn reduce_degree_centrally(
        &self,
        shares: &[&ShareTensor],
    ) -> Result<Vec<ShareTensor>, SssError> {
        let m = self.product_parties();
        if shares.len() < m {
            return Err(SssError::InsufficientShares {
                need: m,
                got: shares.len(),
            });
        }
        let used = &shares[..m];
        for (i, s) in used.iter().enumerate() {
            if s.party_id() != self.party_ids[i] {
                return Err(SssError::PartyMismatch(self.party_ids[i], s.party_id()));
            }
            if s.shape() != used[0].shape() {
                return Err(SssError::ShapeMismatch(format!(
                    "{:?} vs {:?}",
                    used[0].shape(),
                    s.shape()
                )));
            }
        }
        let len = used[0].len();
        (0..self.n)
            .map(|t| {
                let col = self.reduction_all.column(t);
                let values = (0..len)
                    .map(|e| {
                        let mut acc: u128 = 0;
                        for (s, &r) in used.iter().zip(&col) {
                            acc += s.values()[e] as u128 * r as u128;
                        }
                        self.field.reduce_wide(acc)
                    })
                    .collect();
                ShareTensor::new(
                    self.party_ids[t],
                    self.share_degree(),
                    used[0].shape().to_vec(),
                    values,
                )
            })
            .collect()
    }
}
