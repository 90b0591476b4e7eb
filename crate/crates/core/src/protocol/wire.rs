//! Length-prefixed frames: `"SSN1" | sender u16 | phase u16 | len u32 | payload`.

use std::io::{self, Read, Write};

use crate::codec::{ByteReader, ByteWriter, CodecError};

pub const FRAME_MAGIC: &[u8; 4] = b"SSN1";
pub const HEADER_BYTES: usize = 12;

/// Frames larger than this are rejected before allocation.
pub const MAX_PAYLOAD: u32 = 1 << 30;

/// The protocol step a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u16)]
pub enum Phase {
    Hello = 1,
    ShareDist = 2,
    ReshareOut = 3,
    ReshareBack = 4,
    TruncMasked = 5,
    TruncShares = 6,
    NonlinMasked = 7,
    NonlinPlain = 8,
    ZeroShare = 9,
    OutputOpen = 10,
    MaskBundle = 11,
}

impl Phase {
    pub const ALL: [Phase; 11] = [
        Phase::Hello,
        Phase::ShareDist,
        Phase::ReshareOut,
        Phase::ReshareBack,
        Phase::TruncMasked,
        Phase::TruncShares,
        Phase::NonlinMasked,
        Phase::NonlinPlain,
        Phase::ZeroShare,
        Phase::OutputOpen,
        Phase::MaskBundle,
    ];

    pub fn from_u16(tag: u16) -> Option<Phase> {
        Phase::ALL.iter().copied().find(|p| *p as u16 == tag)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Hello => "HELLO",
            Phase::ShareDist => "SHARE_DIST",
            Phase::ReshareOut => "RESHARE_OUT",
            Phase::ReshareBack => "RESHARE_BACK",
            Phase::TruncMasked => "TRUNC_MASKED",
            Phase::TruncShares => "TRUNC_SHARES",
            Phase::NonlinMasked => "NONLIN_MASKED",
            Phase::NonlinPlain => "NONLIN_PLAIN",
            Phase::ZeroShare => "ZERO_SHARE",
            Phase::OutputOpen => "OUTPUT_OPEN",
            Phase::MaskBundle => "MASK_BUNDLE",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub sender: u16,
    pub phase: Phase,
    pub payload: Vec<u8>,
}

impl WireFrame {
    pub fn new(sender: usize, phase: Phase, payload: Vec<u8>) -> Self {
        Self {
            sender: sender as u16,
            phase,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(self.encoded_len());
        w.bytes(FRAME_MAGIC)
            .u16(self.sender)
            .u16(self.phase as u16)
            .u32(self.payload.len() as u32)
            .bytes(&self.payload);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(bytes);
        let (sender, phase, len) = read_header(&mut r)?;
        let payload = r.take(len as usize)?.to_vec();
        r.finish()?;
        Ok(Self {
            sender,
            phase,
            payload,
        })
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(&self.to_bytes())
    }

    /// Reads exactly one frame from a stream.
    pub fn read_from(input: &mut impl Read) -> Result<Self, FrameReadError> {
        let mut header = [0u8; HEADER_BYTES];
        input.read_exact(&mut header)?;
        let (sender, phase, len) = read_header(&mut ByteReader::new(&header))?;
        let mut payload = vec![0u8; len as usize];
        input.read_exact(&mut payload)?;
        Ok(Self {
            sender,
            phase,
            payload,
        })
    }
}

fn read_header(r: &mut ByteReader<'_>) -> Result<(u16, Phase, u32), CodecError> {
    r.magic(FRAME_MAGIC)?;
    let sender = r.u16()?;
    let tag = r.u16()?;
    let phase = Phase::from_u16(tag)
        .ok_or_else(|| CodecError::Invalid(format!("unknown phase tag {tag}")))?;
    let len = r.u32()?;
    if len > MAX_PAYLOAD {
        return Err(CodecError::Invalid(format!("payload of {len} bytes")));
    }
    Ok((sender, phase, len))
}

#[derive(Debug, thiserror::Error)]
pub enum FrameReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let f = WireFrame::new(2, Phase::ReshareOut, vec![9, 8, 7]);
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"SSN1");
        assert_eq!(&bytes[4..6], &[2, 0]);
        assert_eq!(&bytes[6..8], &[3, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(WireFrame::from_bytes(&bytes).unwrap(), f);
        assert_eq!(WireFrame::read_from(&mut &bytes[..]).unwrap(), f);
    }

    #[test]
    fn rejects_unknown_phase_and_bad_length() {
        let mut bytes = WireFrame::new(0, Phase::Hello, vec![1]).to_bytes();
        bytes[6] = 99;
        assert!(matches!(
            WireFrame::from_bytes(&bytes),
            Err(CodecError::Invalid(_))
        ));
        let mut short = WireFrame::new(0, Phase::Hello, vec![1, 2]).to_bytes();
        short.pop();
        assert!(matches!(
            WireFrame::from_bytes(&short),
            Err(CodecError::Truncated { .. })
        ));
    }

    #[test]
    fn phase_tags_round_trip() {
        for p in Phase::ALL {
            assert_eq!(Phase::from_u16(p as u16), Some(p));
        }
        assert_eq!(Phase::from_u16(0), None);
    }
}
