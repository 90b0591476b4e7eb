//! Multi-party runtime: framing, transports, resharing, masks and the per-party driver.

mod audit;
mod masks;
mod metrics;
mod net;
mod party;
mod reshare;
mod sim;
mod source;
mod tcp;
mod transport;
mod wire;

use std::fmt;

use thiserror::Error;

use crate::codec::CodecError;
use crate::field::FieldError;
use crate::layers::LayerError;
use crate::model::ModelError;
use crate::sss::SssError;

pub use audit::{
    audit_observations, audit_reshare_transcript, derivable_shares, AuditReport, ReshareAudit,
};
pub use masks::{
    trusted_source_prepare, AuditMasks, MaskBundle, OpMasks, SourceAudit, SourceOptions,
};
pub use metrics::{Counters, PartyMetrics, RunMetrics, Section, SectionSummary};
pub use net::{NetSummary, Observation, PartyNet, Received};
pub use party::{run_party, run_source};
pub use reshare::{
    distributed_zero_shares, naive_degree_reduce_demo, rerand, reshare_degree_reduce, NaiveDemo,
};
pub use sim::{
    localhost_network, run_endpoints, simulate_inference, simulate_network, InferenceSetup,
    SimConfig, SimOutcome, SimRun,
};
pub use source::{handshake_digest, SourceBundle};
pub use tcp::{
    tcp_connect, tcp_connect_with_listener, Hello, TcpEndpoint, TcpOptions, PROTOCOL_VERSION,
};
pub use transport::{sim_network, SimEndpoint, Transport};
pub use wire::{FrameReadError, Phase, WireFrame, FRAME_MAGIC, HEADER_BYTES, MAX_PAYLOAD};

/// A party's role, fixed by its index: 0 is the elite, then `k-1` actives, then passives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Role {
    Elite,
    Active,
    Passive,
}

impl Role {
    pub fn of(index: usize, k: usize) -> Self {
        if index == 0 {
            Role::Elite
        } else if index < k {
            Role::Active
        } else {
            Role::Passive
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Elite => "elite",
            Role::Active => "active",
            Role::Passive => "passive",
        })
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sss(#[from] SssError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("timed out waiting for endpoint {peer}")]
    Timeout { peer: usize },
    #[error("endpoint {peer} disconnected")]
    Disconnected { peer: usize },
    #[error("no link from endpoint {from} to endpoint {to}")]
    NoRoute { from: usize, to: usize },
    #[error("endpoint {from} sent {got}, expected {expected}")]
    UnexpectedPhase {
        from: usize,
        expected: Phase,
        got: Phase,
    },
    #[error("handshake: {0}")]
    Handshake(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("schedule divergence: {0}")]
    ScheduleDivergence(String),
    #[error("value budget exceeded: {0}")]
    Budget(String),
    #[error("mask material: {0}")]
    Mask(String),
    #[error("party {party} has no input for this step")]
    MissingInput { party: usize },
    #[error("party {party}, op {op} ({name}): {source}")]
    At {
        party: usize,
        op: usize,
        name: &'static str,
        #[source]
        source: Box<ProtocolError>,
    },
}

impl ProtocolError {
    /// Tags an error with the party and op it happened in.
    pub fn at(self, party: usize, op: usize, name: &'static str) -> Self {
        match self {
            e @ ProtocolError::At { .. } => e,
            e => ProtocolError::At {
                party,
                op,
                name,
                source: Box::new(e),
            },
        }
    }

    /// The error with any op context stripped.
    pub fn root(&self) -> &ProtocolError {
        match self {
            ProtocolError::At { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 2 for configuration, scheme and handshake failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            ProtocolError::Config(_)
            | ProtocolError::Handshake(_)
            | ProtocolError::ScheduleDivergence(_)
            | ProtocolError::Sss(SssError::InvalidScheme(_)) => 2,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_by_index() {
        assert_eq!(Role::of(0, 3), Role::Elite);
        assert_eq!(Role::of(2, 3), Role::Active);
        assert_eq!(Role::of(3, 3), Role::Passive);
    }

    #[test]
    fn exit_codes_see_through_context() {
        let e = ProtocolError::Handshake("digest".into()).at(1, 2, "linear");
        assert_eq!(e.exit_code(), 2);
        assert_eq!(ProtocolError::Timeout { peer: 0 }.exit_code(), 1);
        let scheme = ProtocolError::from(SssError::InvalidScheme("n".into()));
        assert_eq!(scheme.exit_code(), 2);
        assert!(e.to_string().contains("op 2"));
    }
}
