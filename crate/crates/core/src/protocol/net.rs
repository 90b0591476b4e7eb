//! A party's view of the network: typed send/receive with accounting.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::field::PrimeField;
use crate::sss::{ShareTensor, SssScheme};

use super::metrics::{PartyMetrics, Section};
use super::transport::Transport;
use super::wire::{Phase, WireFrame};
use super::{ProtocolError, Role};

/// Share values a party received, kept in audit mode for transcript scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub section: Section,
    pub phase: Phase,
    pub from: usize,
    pub values: Vec<u64>,
}

/// Plaintext a party learned, kept in audit mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub section: Section,
    pub phase: Phase,
    pub values: Vec<i64>,
}

/// Everything a finished party hands back besides its protocol result.
#[derive(Debug, Clone)]
pub struct NetSummary {
    pub party: usize,
    pub metrics: PartyMetrics,
    pub transcript: [u8; 32],
    pub received: Vec<Received>,
    pub observations: Vec<Observation>,
}

pub struct PartyNet {
    index: usize,
    scheme: SssScheme,
    transport: Box<dyn Transport>,
    rng: ChaCha20Rng,
    section: Section,
    metrics: PartyMetrics,
    transcript: Sha256,
    audit: bool,
    received: Vec<Received>,
    observations: Vec<Observation>,
}

impl PartyNet {
    /// `seed` is the run seed; each party draws from its own ChaCha stream.
    pub fn new(scheme: SssScheme, transport: Box<dyn Transport>, seed: u64, audit: bool) -> Self {
        let index = transport.local();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        Self {
            index,
            metrics: PartyMetrics::new(index),
            scheme,
            transport,
            rng,
            section: Section::Custom("setup"),
            transcript: Sha256::new(),
            audit,
            received: Vec::new(),
            observations: Vec::new(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn scheme(&self) -> &SssScheme {
        &self.scheme
    }

    pub fn field(&self) -> &PrimeField {
        self.scheme.field()
    }

    pub fn k(&self) -> usize {
        self.scheme.k()
    }

    pub fn n(&self) -> usize {
        self.scheme.n()
    }

    pub fn role(&self) -> Role {
        Role::of(self.index, self.scheme.k())
    }

    pub fn is_elite(&self) -> bool {
        self.index == 0
    }

    /// Endpoint index of the trusted source.
    pub fn source(&self) -> usize {
        self.scheme.n()
    }

    pub fn audit(&self) -> bool {
        self.audit
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn set_section(&mut self, section: Section) {
        self.section = section;
    }

    pub fn section(&self) -> Section {
        self.section
    }

    fn send_frame(
        &mut self,
        to: usize,
        frame: WireFrame,
        elements: u64,
    ) -> Result<(), ProtocolError> {
        let bytes = frame.to_bytes();
        self.transcript.update(b"S");
        self.transcript.update((to as u64).to_le_bytes());
        self.transcript.update(&bytes);
        self.metrics
            .record_send(self.section, frame.phase, elements, bytes.len() as u64);
        self.transport.send(to, frame)
    }

    fn recv_frame(&mut self, from: usize, phase: Phase) -> Result<WireFrame, ProtocolError> {
        let frame = self.transport.recv(from)?;
        if frame.phase != phase {
            return Err(ProtocolError::UnexpectedPhase {
                from,
                expected: phase,
                got: frame.phase,
            });
        }
        if frame.sender as usize != from {
            return Err(ProtocolError::Handshake(format!(
                "frame on link {from} claims sender {}",
                frame.sender
            )));
        }
        let bytes = frame.to_bytes();
        self.transcript.update(b"R");
        self.transcript.update((from as u64).to_le_bytes());
        self.transcript.update(&bytes);
        Ok(frame)
    }

    pub fn send_tensor(
        &mut self,
        to: usize,
        phase: Phase,
        tensor: &ShareTensor,
    ) -> Result<(), ProtocolError> {
        let frame = WireFrame::new(self.index, phase, tensor.to_bytes());
        self.send_frame(to, frame, tensor.len() as u64)
    }

    pub fn recv_tensor(&mut self, from: usize, phase: Phase) -> Result<ShareTensor, ProtocolError> {
        let frame = self.recv_frame(from, phase)?;
        let tensor = ShareTensor::from_bytes(&frame.payload, self.scheme.field())?;
        self.metrics.record_recv(
            self.section,
            tensor.len() as u64,
            frame.encoded_len() as u64,
        );
        if self.audit {
            self.received.push(Received {
                section: self.section,
                phase,
                from,
                values: tensor.values().to_vec(),
            });
        }
        Ok(tensor)
    }

    /// Opaque payload that is not counted as field elements.
    pub fn send_bytes(
        &mut self,
        to: usize,
        phase: Phase,
        payload: Vec<u8>,
    ) -> Result<(), ProtocolError> {
        let frame = WireFrame::new(self.index, phase, payload);
        self.send_frame(to, frame, 0)
    }

    pub fn recv_bytes(&mut self, from: usize, phase: Phase) -> Result<Vec<u8>, ProtocolError> {
        let frame = self.recv_frame(from, phase)?;
        self.metrics
            .record_recv(self.section, 0, frame.encoded_len() as u64);
        Ok(frame.payload)
    }

    /// Logs plaintext this party has seen, in audit mode.
    pub fn observe(&mut self, phase: Phase, values: &[i64]) {
        if self.audit {
            self.observations.push(Observation {
                section: self.section,
                phase,
                values: values.to_vec(),
            });
        }
    }

    pub fn finish(self) -> NetSummary {
        NetSummary {
            party: self.index,
            metrics: self.metrics,
            transcript: self.transcript.finalize().into(),
            received: self.received,
            observations: self.observations,
        }
    }
}
