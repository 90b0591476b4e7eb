//! Audit-mode checks over what parties saw during a run.

use serde::Serialize;

use crate::field::PrimeField;
use crate::layers::{additive_mask_range, apply_nonlinear, pool_block_index, OpKind, Schedule};
use crate::model::PlaintextTrace;

use super::masks::{AuditMasks, SourceAudit};
use super::metrics::Section;
use super::net::NetSummary;
use super::wire::Phase;

/// Result of checking every logged observation against the plaintext trace and the masks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    /// Plaintext values checked.
    pub checked: usize,
    /// Observations that are not a correctly masked value from the declared range.
    pub violations: Vec<String>,
    /// Nonzero values whose mask happened to be the identity (`e = 0` or `beta = 1`).
    pub exposed: usize,
    /// Share tensors received, by phase name.
    pub shares_received: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every plaintext a party observed is the masked form the protocol
/// defines: `x + e r d` at the elite before truncation, `x beta` at the elite before
/// the nonlinear function, and `f(x) beta` at the other targets after it.
pub fn audit_observations(
    schedule: &Schedule,
    trace: &PlaintextTrace,
    masks: &SourceAudit,
    summaries: &[NetSummary],
    k: usize,
) -> AuditReport {
    let mut report = AuditReport::default();
    let n = summaries.len().saturating_sub(1);
    for s in summaries {
        let p = s.party;
        for r in &s.received {
            report.shares_received += 1;
            let elite_only = matches!(
                r.phase,
                Phase::TruncMasked | Phase::NonlinMasked | Phase::OutputOpen
            );
            if elite_only && p != 0 {
                report
                    .violations
                    .push(format!("party {p} received {} from {}", r.phase, r.from));
            }
            if p == n {
                report
                    .violations
                    .push(format!("source received {}", r.phase));
            }
        }
        for obs in &s.observations {
            let Section::Op { index, .. } = obs.section else {
                report
                    .violations
                    .push(format!("party {p} observed {} outside an op", obs.phase));
                continue;
            };
            let (Some(op), Some(x), Some(m)) = (
                schedule.ops.get(index),
                trace.op_inputs.get(index),
                masks.ops.get(index),
            ) else {
                report
                    .violations
                    .push(format!("party {p} observed data for unknown op {index}"));
                continue;
            };
            report.checked += obs.values.len();
            let tag = format!("party {p}, op {index}, {}", obs.phase);
            match (op.kind, obs.phase, m) {
                (
                    OpKind::Truncation { scale, divisor },
                    Phase::TruncMasked,
                    AuditMasks::Truncation { e, step },
                ) if p == 0 => {
                    let range = additive_mask_range(scale, divisor).unwrap_or(0);
                    check_all(&mut report, &tag, &obs.values, x.len(), |j| {
                        let ej = e[j];
                        let exposed = ej == 0 && x[j] != 0;
                        let ok = ej <= range
                            && i128::from(obs.values[j])
                                == x[j] as i128 + (ej as i128) * (*step as i128);
                        (ok, exposed)
                    });
                }
                (
                    OpKind::NonLinear { mask_max, .. },
                    Phase::NonlinMasked,
                    AuditMasks::NonLinear { beta },
                ) if p == 0 => {
                    check_all(&mut report, &tag, &obs.values, x.len(), |j| {
                        let b = beta[j];
                        let ok = (1..=mask_max).contains(&b)
                            && i128::from(obs.values[j]) == x[j] as i128 * b as i128;
                        (ok, b == 1 && x[j] != 0)
                    });
                }
                (
                    OpKind::NonLinear {
                        relu,
                        pool,
                        mask_max,
                    },
                    Phase::NonlinPlain,
                    AuditMasks::NonLinear { beta },
                ) if p != 0 && p < n && (p < k || op.passive_out) => {
                    let (Ok(out), Ok(block)) = (
                        apply_nonlinear(x, &op.in_shape, relu, pool),
                        pool_block_index(&op.in_shape, pool),
                    ) else {
                        report
                            .violations
                            .push(format!("{tag}: cannot recompute the op"));
                        continue;
                    };
                    let mut block_beta = vec![0; out.len()];
                    for (j, &b) in block.iter().enumerate() {
                        block_beta[b] = beta[j];
                    }
                    check_all(&mut report, &tag, &obs.values, out.len(), |b| {
                        let bb = block_beta[b];
                        let ok = (1..=mask_max).contains(&bb)
                            && i128::from(obs.values[b]) == out[b] as i128 * bb as i128;
                        (ok, bb == 1 && out[b] != 0)
                    });
                }
                _ => report
                    .violations
                    .push(format!("{tag}: not a permitted observation")),
            }
        }
    }
    report
}

fn check_all(
    report: &mut AuditReport,
    tag: &str,
    values: &[i64],
    expected_len: usize,
    mut check: impl FnMut(usize) -> (bool, bool),
) {
    if values.len() != expected_len {
        report.violations.push(format!(
            "{tag}: {} values, expected {expected_len}",
            values.len()
        ));
        return;
    }
    let mut bad = 0;
    for j in 0..values.len() {
        let (ok, exposed) = check(j);
        if !ok {
            bad += 1;
        }
        if exposed {
            report.exposed += 1;
        }
    }
    if bad > 0 {
        report
            .violations
            .push(format!("{tag}: {bad} values are not correctly masked"));
    }
}

/// Indices of `raw` shares (other than `own`) that equal a public scalar
/// multiple of one of the `received` vectors, element for element.
///
/// A party that can divide a received vector by a public constant and obtain
/// another party's raw product share has learned that share.
pub fn derivable_shares(
    field: &PrimeField,
    raw: &[&[u64]],
    own: Option<usize>,
    received: &[&[u64]],
) -> Vec<usize> {
    let mut found = Vec::new();
    for (src, c) in raw.iter().enumerate() {
        if Some(src) == own || c.is_empty() {
            continue;
        }
        let derivable = received.iter().any(|v| {
            if v.len() != c.len() {
                return false;
            }
            // Find lambda with v = lambda * c from the first usable element.
            let Some(e) = c.iter().position(|&x| x != 0) else {
                return v.iter().all(|&y| y == 0);
            };
            let Ok(inv) = field.inv(c[e]) else {
                return false;
            };
            let lambda = field.mul(v[e], inv);
            c.iter()
                .zip(v.iter())
                .all(|(&x, &y)| field.mul(lambda, x) == y)
        });
        if derivable {
            found.push(src);
        }
    }
    found
}

/// Per party, the raw product shares of other holders it could derive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReshareAudit {
    pub derivable: Vec<Vec<usize>>,
}

impl ReshareAudit {
    pub fn passed(&self) -> bool {
        self.derivable.iter().all(Vec::is_empty)
    }

    pub fn max_derivable(&self) -> usize {
        self.derivable.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Scans every party's logged reshare traffic for values that expose another
/// holder's raw product share. `raw[src]` is holder `src`'s degree-`2k-2` share.
pub fn audit_reshare_transcript(
    field: &PrimeField,
    raw: &[&[u64]],
    summaries: &[NetSummary],
) -> ReshareAudit {
    let derivable = summaries
        .iter()
        .map(|s| {
            let received: Vec<&[u64]> = s
                .received
                .iter()
                .filter(|r| matches!(r.phase, Phase::ReshareOut | Phase::ReshareBack))
                .map(|r| r.values.as_slice())
                .collect();
            let own = (s.party < raw.len()).then_some(s.party);
            derivable_shares(field, raw, own, &received)
        })
        .collect();
    ReshareAudit { derivable }
}
