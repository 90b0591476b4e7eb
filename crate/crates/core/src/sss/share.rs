use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::field::PrimeField;

use super::SssError;

/// One party's shares of a tensor of secrets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShareTensor {
    party_id: u64,
    degree: usize,
    shape: Vec<usize>,
    values: Vec<u64>,
}

/// A public right-hand operand for share arithmetic.
#[derive(Debug, Clone, Copy)]
pub enum Public<'a> {
    Scalar(u64),
    Tensor(&'a [u64]),
}

impl Public<'_> {
    #[inline]
    fn at(&self, i: usize) -> u64 {
        match self {
            Public::Scalar(s) => *s,
            Public::Tensor(t) => t[i],
        }
    }

    fn check_len(&self, len: usize) -> Result<(), SssError> {
        match self {
            Public::Tensor(t) if t.len() != len => Err(SssError::ShapeMismatch(format!(
                "public operand has {} elements, share has {len}",
                t.len()
            ))),
            _ => Ok(()),
        }
    }
}

pub fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl ShareTensor {
    pub fn new(
        party_id: u64,
        degree: usize,
        shape: Vec<usize>,
        values: Vec<u64>,
    ) -> Result<Self, SssError> {
        if element_count(&shape) != values.len() {
            return Err(SssError::ShapeMismatch(format!(
                "shape {shape:?} does not hold {} values",
                values.len()
            )));
        }
        Ok(Self {
            party_id,
            degree,
            shape,
            values,
        })
    }

    pub fn party_id(&self) -> u64 {
        self.party_id
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<u64> {
        self.values
    }

    /// Same share data under a different shape with the same element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self, SssError> {
        if element_count(&shape) != self.values.len() {
            return Err(SssError::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub(crate) fn map_values(&self, values: Vec<u64>, degree: usize) -> Self {
        Self {
            party_id: self.party_id,
            degree,
            shape: self.shape.clone(),
            values,
        }
    }

    pub(crate) fn check_compatible(&self, other: &ShareTensor) -> Result<(), SssError> {
        if self.party_id != other.party_id {
            return Err(SssError::PartyMismatch(self.party_id, other.party_id));
        }
        if self.shape != other.shape {
            return Err(SssError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn zip_with(&self, other: &ShareTensor, f: impl Fn(u64, u64) -> u64) -> Vec<u64> {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect()
    }

    pub(crate) fn zip_public(
        &self,
        rhs: Public<'_>,
        f: impl Fn(u64, u64) -> u64,
    ) -> Result<Vec<u64>, SssError> {
        rhs.check_len(self.values.len())?;
        Ok(self
            .values
            .iter()
            .enumerate()
            .map(|(i, &a)| f(a, rhs.at(i)))
            .collect())
    }

    /// Header (party id, degree, shape) followed by row-major 8-byte little-endian elements.
    pub fn write_to(&self, w: &mut ByteWriter) {
        w.u64(self.party_id)
            .u32(self.degree as u32)
            .u32(self.shape.len() as u32);
        for &d in &self.shape {
            w.u64(d as u64);
        }
        w.u64s(&self.values);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(16 + 8 * (self.shape.len() + self.values.len()));
        self.write_to(&mut w);
        w.into_inner()
    }

    pub fn read_from(r: &mut ByteReader<'_>, field: &PrimeField) -> Result<Self, CodecError> {
        let party_id = r.u64()?;
        let degree = r.u32()? as usize;
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(CodecError::Invalid(format!("{ndim} dimensions")));
        }
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CodecError::Invalid("shape overflows".into()))?;
        let values = r.u64s(count)?;
        if let Some(v) = values.iter().find(|&&v| v >= field.modulus()) {
            return Err(CodecError::Invalid(format!(
                "element {v} is not below {}",
                field.modulus()
            )));
        }
        Ok(Self {
            party_id,
            degree,
            shape,
            values,
        })
    }

    pub fn from_bytes(bytes: &[u8], field: &PrimeField) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(bytes);
        let t = Self::read_from(&mut r, field)?;
        r.finish()?;
        Ok(t)
    }
}
