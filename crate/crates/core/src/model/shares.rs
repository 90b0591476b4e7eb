//! Secret-shared model weights and their per-party files.

use std::path::Path;

use rand::Rng;

use crate::codec::{digest, ByteReader, ByteWriter, CodecError};
use crate::field::PrimeField;
use crate::sss::{ShareTensor, SssError, SssScheme};

use super::graph::{ModelGraph, Skeleton};
use super::ModelError;

const SHARE_MAGIC: &[u8; 4] = b"SSNS";
const SHARE_VERSION: u16 = 1;

/// One party's shares of one linear layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearShares {
    pub weights: ShareTensor,
    pub bias: Option<ShareTensor>,
}

/// Everything one party holds about the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyModelShares {
    pub party: usize,
    pub k: usize,
    pub modulus: u64,
    pub party_ids: Vec<u64>,
    pub skeleton: Skeleton,
    pub model_digest: [u8; 32],
    pub layers: Vec<LinearShares>,
}

/// Encodes every weight and bias tensor and shares it to all `n` parties.
pub fn share_model<R: Rng + ?Sized>(
    model: &ModelGraph,
    scheme: &SssScheme,
    rng: &mut R,
) -> Result<Vec<PartyModelShares>, ModelError> {
    let field = scheme.field();
    let n = scheme.n();
    let mut per_party: Vec<Vec<LinearShares>> = vec![Vec::new(); n];
    for lin in model.linear_layers() {
        let w = field
            .encode_slice(&lin.weights.to_i64())
            .map_err(SssError::from)?;
        let w_shares = scheme.gen(&w, lin.weights.shape(), rng)?;
        let b_shares = match &lin.bias {
            Some(b) => {
                let enc = field.encode_slice(b).map_err(SssError::from)?;
                Some(scheme.gen(&enc, &[b.len()], rng)?)
            }
            None => None,
        };
        for (p, weights) in w_shares.into_iter().enumerate() {
            per_party[p].push(LinearShares {
                weights,
                bias: b_shares.as_ref().map(|b| b[p].clone()),
            });
        }
    }
    let skeleton = model.skeleton();
    let model_digest = model.digest();
    Ok(per_party
        .into_iter()
        .enumerate()
        .map(|(party, layers)| PartyModelShares {
            party,
            k: scheme.k(),
            modulus: field.modulus(),
            party_ids: scheme.party_ids().to_vec(),
            skeleton: skeleton.clone(),
            model_digest,
            layers,
        })
        .collect())
}

impl PartyModelShares {
    pub fn n(&self) -> usize {
        self.party_ids.len()
    }

    pub fn scheme(&self) -> Result<SssScheme, ModelError> {
        let field = PrimeField::new(self.modulus).map_err(SssError::from)?;
        Ok(SssScheme::with_ids(field, self.k, self.party_ids.clone())?)
    }

    /// Fails unless the file was produced for `scheme`.
    pub fn check_scheme(&self, scheme: &SssScheme) -> Result<(), ModelError> {
        if self.k != scheme.k()
            || self.party_ids != scheme.party_ids()
            || self.modulus != scheme.field().modulus()
        {
            return Err(ModelError::Invalid(format!(
                "share file is for ({}, {}) over p = {}, expected ({}, {}) over p = {}",
                self.k,
                self.n(),
                self.modulus,
                scheme.k(),
                scheme.n(),
                scheme.field().modulus()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SHARE_MAGIC)
            .u16(SHARE_VERSION)
            .u32(self.party as u32)
            .u32(self.k as u32)
            .u64(self.modulus)
            .u32(self.party_ids.len() as u32)
            .u64s(&self.party_ids)
            .bytes(&self.model_digest)
            .blob(&self.skeleton.to_bytes())
            .u32(self.layers.len() as u32);
        for l in &self.layers {
            l.weights.write_to(&mut w);
            w.u8(u8::from(l.bias.is_some()));
            if let Some(b) = &l.bias {
                b.write_to(&mut w);
            }
        }
        let d = digest(w.as_slice());
        w.bytes(&d);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
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
        r.magic(SHARE_MAGIC)?;
        let version = r.u16()?;
        if version != SHARE_VERSION {
            return Err(CodecError::Version(version).into());
        }
        let party = r.u32()? as usize;
        let k = r.u32()? as usize;
        let modulus = r.u64()?;
        let n = r.u32()? as usize;
        let party_ids = r.u64s(n)?;
        let model_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let skeleton = Skeleton::read_from(&mut ByteReader::new(r.blob()?))?;
        let field = PrimeField::new(modulus).map_err(SssError::from)?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let weights = ShareTensor::read_from(&mut r, &field)?;
            let bias = match r.u8()? {
                0 => None,
                1 => Some(ShareTensor::read_from(&mut r, &field)?),
                f => return Err(CodecError::Invalid(format!("bias flag {f}")).into()),
            };
            layers.push(LinearShares { weights, bias });
        }
        r.finish()?;
        if party >= n {
            return Err(ModelError::Invalid(format!("party {party} of {n}")));
        }
        Ok(Self {
            party,
            k,
            modulus,
            party_ids,
            skeleton,
            model_digest,
            layers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
