//! Closed-form communication counts per secure operation.

use serde::Serialize;

use super::schedule::{OpKind, Schedule, ScheduledOp};

/// Rounds and total field elements sent by all parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CommEstimate {
    pub rounds: u32,
    pub elements: u64,
}

impl std::ops::Add for CommEstimate {
    type Output = CommEstimate;

    fn add(self, rhs: Self) -> Self {
        CommEstimate {
            rounds: self.rounds + rhs.rounds,
            elements: self.elements + rhs.elements,
        }
    }
}

/// Counts for one op on `in_elems` inputs producing `out_elems` outputs.
///
/// Linear: `2k(k-1)` for the sub-share fan-out plus `k(T-1)` for the return
/// leg, per output. Truncation: `k-1` masked shares in, `n-1` fresh shares
/// out. NonLinear: `2k-2` masked products in, `T-1` plaintexts out.
/// `T` is `n` with `passive_out` and `k` otherwise.
pub fn comm_estimate(
    kind: &OpKind,
    passive_out: bool,
    k: usize,
    n: usize,
    in_elems: usize,
    out_elems: usize,
) -> CommEstimate {
    let (k, n) = (k as u64, n as u64);
    let targets = if passive_out { n } else { k };
    let (rounds, elements) = match kind {
        OpKind::Linear { .. } => (2, out_elems as u64 * (2 * k * (k - 1) + k * (targets - 1))),
        OpKind::Truncation { .. } => (1, in_elems as u64 * ((k - 1) + (n - 1))),
        OpKind::NonLinear { .. } => (
            1,
            in_elems as u64 * (2 * k - 2) + out_elems as u64 * (targets - 1),
        ),
    };
    CommEstimate { rounds, elements }
}

pub fn estimate_op(op: &ScheduledOp, k: usize, n: usize) -> CommEstimate {
    comm_estimate(
        &op.kind,
        op.passive_out,
        k,
        n,
        op.in_elems(),
        op.out_elems(),
    )
}

pub fn estimate_schedule(schedule: &Schedule, k: usize, n: usize) -> Vec<CommEstimate> {
    schedule
        .ops
        .iter()
        .map(|op| estimate_op(op, k, n))
        .collect()
}
