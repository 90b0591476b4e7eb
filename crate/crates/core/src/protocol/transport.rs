//! Point-to-point frame delivery between endpoints `0..n` (parties) and `n` (source).

use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::wire::WireFrame;
use super::ProtocolError;

/// Blocking, ordered, reliable delivery between numbered endpoints.
pub trait Transport: Send {
    fn local(&self) -> usize;

    fn endpoints(&self) -> usize;

    fn send(&mut self, to: usize, frame: WireFrame) -> Result<(), ProtocolError>;

    fn recv(&mut self, from: usize) -> Result<WireFrame, ProtocolError>;
}

/// In-process endpoint: one unbounded channel per ordered pair, so delivery
/// order per sender is the send order regardless of thread scheduling.
pub struct SimEndpoint {
    local: usize,
    outgoing: Vec<Option<Sender<Vec<u8>>>>,
    incoming: Vec<Option<Receiver<Vec<u8>>>>,
    timeout: Option<Duration>,
}

/// Fully connected simulated network of `endpoints` endpoints.
pub fn sim_network(endpoints: usize) -> Vec<SimEndpoint> {
    let mut outgoing: Vec<Vec<Option<Sender<Vec<u8>>>>> = (0..endpoints)
        .map(|_| (0..endpoints).map(|_| None).collect())
        .collect();
    let mut incoming: Vec<Vec<Option<Receiver<Vec<u8>>>>> = (0..endpoints)
        .map(|_| (0..endpoints).map(|_| None).collect())
        .collect();
    for a in 0..endpoints {
        for b in 0..endpoints {
            if a != b {
                let (tx, rx) = unbounded();
                outgoing[a][b] = Some(tx);
                incoming[b][a] = Some(rx);
            }
        }
    }
    outgoing
        .into_iter()
        .zip(incoming)
        .enumerate()
        .map(|(local, (outgoing, incoming))| SimEndpoint {
            local,
            outgoing,
            incoming,
            timeout: None,
        })
        .collect()
}

impl SimEndpoint {
    /// Bounds every receive; simulation is unbounded by default.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

impl Transport for SimEndpoint {
    fn local(&self) -> usize {
        self.local
    }

    fn endpoints(&self) -> usize {
        self.outgoing.len()
    }

    fn send(&mut self, to: usize, frame: WireFrame) -> Result<(), ProtocolError> {
        let tx = self
            .outgoing
            .get(to)
            .and_then(Option::as_ref)
            .ok_or(ProtocolError::NoRoute {
                from: self.local,
                to,
            })?;
        tx.send(frame.to_bytes())
            .map_err(|_| ProtocolError::Disconnected { peer: to })
    }

    fn recv(&mut self, from: usize) -> Result<WireFrame, ProtocolError> {
        let rx =
            self.incoming
                .get(from)
                .and_then(Option::as_ref)
                .ok_or(ProtocolError::NoRoute {
                    from,
                    to: self.local,
                })?;
        let bytes = match self.timeout {
            None => rx
                .recv()
                .map_err(|_| ProtocolError::Disconnected { peer: from })?,
            Some(t) => rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => ProtocolError::Timeout { peer: from },
                RecvTimeoutError::Disconnected => ProtocolError::Disconnected { peer: from },
            })?,
        };
        Ok(WireFrame::from_bytes(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Phase;

    #[test]
    fn per_pair_fifo() {
        let mut net = sim_network(3);
        let mut c = net.pop().unwrap();
        let mut b = net.pop().unwrap();
        let mut a = net.pop().unwrap();
        for i in 0..5u8 {
            a.send(2, WireFrame::new(0, Phase::ShareDist, vec![i]))
                .unwrap();
        }
        b.send(2, WireFrame::new(1, Phase::ShareDist, vec![42]))
            .unwrap();
        assert_eq!(c.recv(1).unwrap().payload, vec![42]);
        for i in 0..5u8 {
            assert_eq!(c.recv(0).unwrap().payload, vec![i]);
        }
        assert!(matches!(
            a.send(0, WireFrame::new(0, Phase::Hello, vec![])),
            Err(ProtocolError::NoRoute { .. })
        ));
    }

    #[test]
    fn timeout_and_disconnect() {
        let mut net = sim_network(2);
        let b = net.pop().unwrap();
        let mut a = net.pop().unwrap().with_timeout(Duration::from_millis(10));
        assert!(matches!(a.recv(1), Err(ProtocolError::Timeout { peer: 1 })));
        drop(b);
        assert!(matches!(
            a.recv(1),
            Err(ProtocolError::Disconnected { peer: 1 })
        ));
    }
}
