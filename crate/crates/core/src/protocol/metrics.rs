//! Per-party communication counters and their per-operation aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::wire::Phase;

/// The protocol stretch a frame is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    /// Mask bundles from the trusted source.
    Offline,
    /// Input sharing.
    Input,
    /// One scheduled operation.
    Op { index: usize, name: &'static str },
    /// Opening the result to the elite.
    Output,
    /// Ad hoc protocol runs outside a schedule.
    Custom(&'static str),
}

impl Section {
    pub fn label(&self) -> String {
        match self {
            Section::Offline => "offline".into(),
            Section::Input => "input".into(),
            Section::Op { name, .. } => (*name).into(),
            Section::Output => "output".into(),
            Section::Custom(s) => (*s).into(),
        }
    }

    pub fn layer(&self) -> Option<usize> {
        match self {
            Section::Op { index, .. } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub elements_sent: u64,
    pub elements_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    /// Distinct phases this party sent in; each is one send epoch.
    pub send_phases: BTreeSet<u16>,
}

impl Counters {
    pub fn send_epochs(&self) -> u32 {
        self.send_phases.len() as u32
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartyMetrics {
    pub party: usize,
    pub sections: BTreeMap<Section, Counters>,
}

impl PartyMetrics {
    pub fn new(party: usize) -> Self {
        Self {
            party,
            sections: BTreeMap::new(),
        }
    }

    pub fn record_send(&mut self, section: Section, phase: Phase, elements: u64, bytes: u64) {
        let c = self.sections.entry(section).or_default();
        c.elements_sent += elements;
        c.bytes_sent += bytes;
        c.frames_sent += 1;
        c.send_phases.insert(phase as u16);
    }

    pub fn record_recv(&mut self, section: Section, elements: u64, bytes: u64) {
        let c = self.sections.entry(section).or_default();
        c.elements_received += elements;
        c.bytes_received += bytes;
    }
}

/// All parties' counters for one section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SectionSummary {
    pub section: Section,
    pub elements: u64,
    pub bytes: u64,
    /// Maximum over parties of send epochs.
    pub rounds: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunMetrics {
    pub parties: Vec<PartyMetrics>,
    pub sections: Vec<SectionSummary>,
}

impl RunMetrics {
    pub fn from_parties(mut parties: Vec<PartyMetrics>) -> Self {
        parties.sort_by_key(|p| p.party);
        let mut totals: BTreeMap<Section, SectionSummary> = BTreeMap::new();
        for p in &parties {
            for (section, c) in &p.sections {
                let s = totals.entry(*section).or_insert(SectionSummary {
                    section: *section,
                    elements: 0,
                    bytes: 0,
                    rounds: 0,
                });
                s.elements += c.elements_sent;
                s.bytes += c.bytes_sent;
                s.rounds = s.rounds.max(c.send_epochs());
            }
        }
        Self {
            parties,
            sections: totals.into_values().collect(),
        }
    }

    pub fn section(&self, section: Section) -> Option<&SectionSummary> {
        self.sections.iter().find(|s| s.section == section)
    }

    /// Summaries of scheduled operations in schedule order.
    pub fn ops(&self) -> Vec<&SectionSummary> {
        self.sections
            .iter()
            .filter(|s| matches!(s.section, Section::Op { .. }))
            .collect()
    }

    /// Elements sent during online operations, excluding input, output and offline traffic.
    pub fn online_elements(&self) -> u64 {
        self.ops().iter().map(|s| s.elements).sum()
    }

    /// One JSON record per (section, party): operation, layer, party, elements, bytes, rounds.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for p in &self.parties {
            for (section, c) in &p.sections {
                let record = serde_json::json!({
                    "operation": section.label(),
                    "layer": section.layer(),
                    "party": p.party,
                    "elements": c.elements_sent,
                    "bytes": c.bytes_sent,
                    "bytes_received": c.bytes_received,
                    "rounds": c.send_epochs(),
                });
                let _ = writeln!(out, "{record}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_are_max_send_epochs() {
        let op = Section::Op {
            index: 0,
            name: "linear",
        };
        let mut a = PartyMetrics::new(0);
        a.record_send(op, Phase::ReshareOut, 2, 40);
        a.record_send(op, Phase::ReshareOut, 2, 40);
        a.record_send(op, Phase::ReshareBack, 1, 30);
        let mut b = PartyMetrics::new(1);
        b.record_send(op, Phase::ReshareOut, 3, 50);
        b.record_recv(op, 5, 100);
        let run = RunMetrics::from_parties(vec![b, a]);
        let s = run.section(op).unwrap();
        assert_eq!((s.elements, s.bytes, s.rounds), (8, 160, 2));
        assert_eq!(run.online_elements(), 8);
        let lines: Vec<_> = run.to_ndjson().lines().map(String::from).collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(first["party"], 0);
        assert_eq!(first["operation"], "linear");
        assert_eq!(first["rounds"], 2);
    }
}
