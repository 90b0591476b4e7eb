//! The trusted source's file: scheme, model identity and per-party mask bundles.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::codec::{digest, ByteReader, ByteWriter, CodecError};
use crate::field::PrimeField;
use crate::layers::{plan_schedule, Ordering, Schedule};
use crate::model::Skeleton;
use crate::sss::{SssError, SssScheme};

use super::masks::MaskBundle;
use super::ProtocolError;

const SOURCE_MAGIC: &[u8; 4] = b"SSNB";
const SOURCE_VERSION: u16 = 1;

/// Digest every endpoint presents in HELLO: `SHA-256(model digest || schedule bytes)`.
pub fn handshake_digest(model_digest: &[u8; 32], schedule: &Schedule) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(model_digest);
    h.update(schedule.to_bytes());
    h.finalize().into()
}

/// Everything the source needs to serve one inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBundle {
    pub k: usize,
    pub modulus: u64,
    pub party_ids: Vec<u64>,
    pub model_digest: [u8; 32],
    pub ordering: Ordering,
    pub skeleton: Skeleton,
    pub bundles: Vec<MaskBundle>,
}

impl SourceBundle {
    pub fn scheme(&self) -> Result<SssScheme, ProtocolError> {
        let field = PrimeField::new(self.modulus)?;
        Ok(SssScheme::with_ids(field, self.k, self.party_ids.clone())?)
    }

    pub fn schedule(&self) -> Result<Schedule, ProtocolError> {
        Ok(plan_schedule(
            &self.skeleton,
            self.ordering,
            &PrimeField::new(self.modulus)?,
        )?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SOURCE_MAGIC)
            .u16(SOURCE_VERSION)
            .u32(self.k as u32)
            .u64(self.modulus)
            .u32(self.party_ids.len() as u32)
            .u64s(&self.party_ids)
            .bytes(&self.model_digest)
            .u8(match self.ordering {
                Ordering::Ltn => 0,
                Ordering::Lnt => 1,
            })
            .blob(&self.skeleton.to_bytes())
            .u32(self.bundles.len() as u32);
        for b in &self.bundles {
            w.blob(&b.to_bytes());
        }
        let d = digest(w.as_slice());
        w.bytes(&d);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < 32 {
            return Err(CodecError::Truncated {
                offset: 0,
                wanted: 32,
            }
            .into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 32);
        if digest(body) != tail {
            return Err(CodecError::Digest.into());
        }
        let mut r = ByteReader::new(body);
        r.magic(SOURCE_MAGIC)?;
        let version = r.u16()?;
        if version != SOURCE_VERSION {
            return Err(CodecError::Version(version).into());
        }
        let k = r.u32()? as usize;
        let modulus = r.u64()?;
        let n = r.u32()? as usize;
        let party_ids = r.u64s(n)?;
        let model_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let ordering = match r.u8()? {
            0 => Ordering::Ltn,
            1 => Ordering::Lnt,
            o => return Err(CodecError::Invalid(format!("ordering tag {o}")).into()),
        };
        let skeleton = Skeleton::read_from(&mut ByteReader::new(r.blob()?))?;
        let field = PrimeField::new(modulus).map_err(SssError::from)?;
        let count = r.u32()? as usize;
        let mut bundles = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            bundles.push(MaskBundle::from_bytes(r.blob()?, &field)?);
        }
        r.finish()?;
        Ok(Self {
            k,
            modulus,
            party_ids,
            model_digest,
            ordering,
            skeleton,
            bundles,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ProtocolError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
