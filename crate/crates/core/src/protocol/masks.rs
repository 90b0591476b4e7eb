//! Trusted-source preprocessing: per-party zero shares and mask shares for one inference.

use rand::Rng;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::field::PrimeField;
use crate::layers::{gen_additive_mask, gen_multiplicative_mask, OpKind, Schedule};
use crate::sss::{ShareTensor, SssScheme};

use super::ProtocolError;

const BUNDLE_MAGIC: &[u8; 4] = b"SSMB";

/// One party's material for one scheduled op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpMasks {
    Linear {
        zero: ShareTensor,
    },
    Truncation {
        alpha: ShareTensor,
        alpha_bar: ShareTensor,
    },
    NonLinear {
        /// Only the `2k-1` parties that multiply hold a `beta` share.
        beta: Option<ShareTensor>,
        beta_inv: ShareTensor,
    },
}

/// One party's material for one inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBundle {
    pub party: usize,
    pub schedule_digest: [u8; 32],
    pub ops: Vec<OpMasks>,
}

/// Plaintext masks the source keeps in audit mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditMasks {
    Linear,
    Truncation { e: Vec<u64>, step: u64 },
    NonLinear { beta: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceAudit {
    pub ops: Vec<AuditMasks>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceOptions {
    /// Keep `e` and `beta` for the audit.
    pub audit: bool,
    /// Use `alpha = 0`; only for oracle-alignment tests.
    pub zero_alpha: bool,
}

/// Generates every party's bundle for `schedule`.
pub fn trusted_source_prepare<R: Rng + ?Sized>(
    schedule: &Schedule,
    scheme: &SssScheme,
    rng: &mut R,
    opts: SourceOptions,
) -> Result<(Vec<MaskBundle>, Option<SourceAudit>), ProtocolError> {
    let field = *scheme.field();
    let n = scheme.n();
    let digest = schedule.digest();
    let mut per_party: Vec<Vec<OpMasks>> = vec![Vec::with_capacity(schedule.ops.len()); n];
    let mut audit = Vec::new();
    for op in &schedule.ops {
        match op.kind {
            OpKind::Linear { .. } => {
                let zeros = vec![0; op.out_elems()];
                for (p, zero) in scheme
                    .gen(&zeros, &op.out_shape, rng)?
                    .into_iter()
                    .enumerate()
                {
                    per_party[p].push(OpMasks::Linear { zero });
                }
                audit.push(AuditMasks::Linear);
            }
            OpKind::Truncation { scale, divisor } => {
                let mask =
                    gen_additive_mask(&field, op.in_elems(), scale, divisor, opts.zero_alpha, rng)?;
                let alpha = scheme.gen(&mask.alpha, &op.in_shape, rng)?;
                let alpha_bar = scheme.gen(&mask.alpha_bar, &op.in_shape, rng)?;
                for (p, (alpha, alpha_bar)) in alpha.into_iter().zip(alpha_bar).enumerate() {
                    per_party[p].push(OpMasks::Truncation { alpha, alpha_bar });
                }
                audit.push(AuditMasks::Truncation {
                    e: mask.e,
                    step: scale * divisor,
                });
            }
            OpKind::NonLinear { pool, mask_max, .. } => {
                let mask = gen_multiplicative_mask(&field, &op.in_shape, pool, mask_max, rng)?;
                let beta = scheme.gen(&mask.beta, &op.in_shape, rng)?;
                let beta_inv = scheme.gen(&mask.beta_inv, &op.out_shape, rng)?;
                let holders = scheme.product_parties();
                for (p, (beta, beta_inv)) in beta.into_iter().zip(beta_inv).enumerate() {
                    per_party[p].push(OpMasks::NonLinear {
                        beta: (p < holders).then_some(beta),
                        beta_inv,
                    });
                }
                audit.push(AuditMasks::NonLinear { beta: mask.beta });
            }
        }
    }
    let bundles = per_party
        .into_iter()
        .enumerate()
        .map(|(party, ops)| MaskBundle {
            party,
            schedule_digest: digest,
            ops,
        })
        .collect();
    Ok((bundles, opts.audit.then_some(SourceAudit { ops: audit })))
}

impl MaskBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(BUNDLE_MAGIC)
            .u32(self.party as u32)
            .bytes(&self.schedule_digest)
            .u32(self.ops.len() as u32);
        for op in &self.ops {
            match op {
                OpMasks::Linear { zero } => {
                    w.u8(0);
                    zero.write_to(&mut w);
                }
                OpMasks::Truncation { alpha, alpha_bar } => {
                    w.u8(1);
                    alpha.write_to(&mut w);
                    alpha_bar.write_to(&mut w);
                }
                OpMasks::NonLinear { beta, beta_inv } => {
                    w.u8(2).u8(u8::from(beta.is_some()));
                    if let Some(b) = beta {
                        b.write_to(&mut w);
                    }
                    beta_inv.write_to(&mut w);
                }
            }
        }
        w.into_inner()
    }

    pub fn read_from(r: &mut ByteReader<'_>, field: &PrimeField) -> Result<Self, CodecError> {
        r.magic(BUNDLE_MAGIC)?;
        let party = r.u32()? as usize;
        let schedule_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u32()? as usize;
        let mut ops = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            ops.push(match r.u8()? {
                0 => OpMasks::Linear {
                    zero: ShareTensor::read_from(r, field)?,
                },
                1 => OpMasks::Truncation {
                    alpha: ShareTensor::read_from(r, field)?,
                    alpha_bar: ShareTensor::read_from(r, field)?,
                },
                2 => {
                    let beta = match r.u8()? {
                        0 => None,
                        1 => Some(ShareTensor::read_from(r, field)?),
                        f => return Err(CodecError::Invalid(format!("beta flag {f}"))),
                    };
                    OpMasks::NonLinear {
                        beta,
                        beta_inv: ShareTensor::read_from(r, field)?,
                    }
                }
                t => return Err(CodecError::Invalid(format!("unknown mask tag {t}"))),
            });
        }
        Ok(Self {
            party,
            schedule_digest,
            ops,
        })
    }

    pub fn from_bytes(bytes: &[u8], field: &PrimeField) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(bytes);
        let b = Self::read_from(&mut r, field)?;
        r.finish()?;
        Ok(b)
    }
}
