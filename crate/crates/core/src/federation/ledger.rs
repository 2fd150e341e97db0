use serde::{Deserialize, Serialize};

use crate::model::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Server to client.
    Down,
    /// Client to server.
    Up,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub client: usize,
    pub direction: Direction,
    pub elements: usize,
    pub bytes: usize,
}

/// Counting tap on every server/client transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    wire_bytes: usize,
    entries: Vec<LedgerEntry>,
}

impl CommLedger {
    pub fn new(wire_bytes: usize) -> Self {
        CommLedger {
            wire_bytes,
            entries: Vec::new(),
        }
    }

    pub fn wire_bytes(&self) -> usize {
        self.wire_bytes
    }

    /// Transfer `payload` and log its size. Returns the receiver's copy.
    pub fn communicate(&mut self, round: usize, client: usize, direction: Direction, payload: &ParamVector) -> ParamVector {
        let received = payload.clone();
        let elements = received.flatten().len();
        self.entries.push(LedgerEntry {
            round,
            client,
            direction,
            elements,
            bytes: elements * self.wire_bytes,
        });
        received
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn round_entries(&self, round: usize) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(move |e| e.round == round)
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.bytes).sum()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|e| e.elements).sum()
    }

    /// Cumulative bytes after each round `1..=rounds`.
    pub fn cumulative_bytes(&self, rounds: usize) -> Vec<usize> {
        let mut acc = 0;
        (1..=rounds)
            .map(|r| {
                acc += self.round_entries(r).map(|e| e.bytes).sum::<usize>();
                acc
            })
            .collect()
    }

    /// Down plus up elements for one client in one round.
    pub fn client_round_elements(&self, round: usize, client: usize) -> usize {
        self.round_entries(round)
            .filter(|e| e.client == client)
            .map(|e| e.elements)
            .sum()
    }
}
