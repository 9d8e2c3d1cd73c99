use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::RemediationError;
use crate::{hours, Millis, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TicketStatus {
    Open,
    HostDeallocated,
    Migrated,
    Closed,
}

/// Evidence attached to a ticket so the repair team need not re-diagnose.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub fault_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
    /// `[t0, t1)` of the telemetry that triggered the action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_window: Option<(Millis, Millis)>,
    #[serde(default)]
    pub evidence: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ticket {
    pub ticket_id: String,
    pub node_id: NodeId,
    pub idempotency_key: String,
    pub diagnostics: Diagnostics,
    pub status: TicketStatus,
    /// When each status was first observed.
    pub timeline: Vec<(TicketStatus, Millis)>,
}

impl Ticket {
    /// Moves forward to `status`; earlier or equal statuses are ignored.
    pub fn advance(&mut self, status: TicketStatus, t: Millis) -> bool {
        if status <= self.status {
            return false;
        }
        self.status = status;
        self.timeline.push((status, t));
        true
    }
}

/// Request/response contract of an external incident system. Delivery is
/// at-least-once, so `create` must be idempotent in `key`.
pub trait TicketPort {
    fn create(
        &mut self,
        key: &str,
        node: NodeId,
        diagnostics: &Diagnostics,
        now: Millis,
    ) -> Result<String, RemediationError>;
    fn poll(&mut self, ticket_id: &str, now: Millis) -> Result<TicketStatus, RemediationError>;
    fn close(&mut self, ticket_id: &str, now: Millis) -> Result<(), RemediationError>;
}

#[derive(Debug, Clone, Serialize)]
struct JournalLine<'a> {
    op: &'a str,
    t: Millis,
    ticket_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_id: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<&'a Diagnostics>,
}

#[derive(Debug, Clone)]
struct MockEntry {
    created: Millis,
    closed: bool,
}

/// File-journal stand-in for an incident system. The host is deallocated
/// `deallocate_after` and migrated `migrate_after` after creation.
#[derive(Debug, Clone)]
pub struct MockTicketClient {
    pub deallocate_after: Millis,
    pub migrate_after: Millis,
    journal: Option<PathBuf>,
    lines: Vec<String>,
    by_key: BTreeMap<String, String>,
    entries: BTreeMap<String, MockEntry>,
    outage: usize,
    lose_ack: bool,
}

impl Default for MockTicketClient {
    fn default() -> Self {
        Self {
            deallocate_after: hours(0.5),
            migrate_after: hours(4.0),
            journal: None,
            lines: Vec::new(),
            by_key: BTreeMap::new(),
            entries: BTreeMap::new(),
            outage: 0,
            lose_ack: false,
        }
    }
}

impl MockTicketClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_schedule(mut self, deallocate_after: Millis, migrate_after: Millis) -> Self {
        self.deallocate_after = deallocate_after;
        self.migrate_after = migrate_after.max(deallocate_after);
        self
    }

    /// Appends every record to `path` as JSON lines.
    pub fn with_journal(mut self, path: impl Into<PathBuf>) -> Self {
        self.journal = Some(path.into());
        self
    }

    /// The next `calls` requests fail. With `lose_ack` a failing `create`
    /// is still recorded; only the reply is lost.
    pub fn set_outage(&mut self, calls: usize, lose_ack: bool) {
        self.outage = calls;
        self.lose_ack = lose_ack;
    }

    pub fn created(&self) -> usize {
        self.entries.len()
    }

    /// Journal records written so far.
    pub fn journal_lines(&self) -> &[String] {
        &self.lines
    }

    fn write(&mut self, rec: JournalLine<'_>) -> Result<(), RemediationError> {
        let line = serde_json::to_string(&rec).map_err(|e| RemediationError::Io(e.to_string()))?;
        if let Some(p) = &self.journal {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| RemediationError::Io(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| RemediationError::Io(e.to_string()))?;
        }
        self.lines.push(line);
        Ok(())
    }

    fn down(&mut self) -> bool {
        if self.outage > 0 {
            self.outage -= 1;
            true
        } else {
            false
        }
    }
}

impl TicketPort for MockTicketClient {
    fn create(
        &mut self,
        key: &str,
        node: NodeId,
        diagnostics: &Diagnostics,
        now: Millis,
    ) -> Result<String, RemediationError> {
        let down = self.down();
        if down && !self.lose_ack {
            return Err(RemediationError::ClientUnavailable);
        }
        if let Some(id) = self.by_key.get(key) {
            let id = id.clone();
            return if down { Err(RemediationError::ClientUnavailable) } else { Ok(id) };
        }
        let id = format!("TKT-{:05}", self.entries.len() + 1);
        self.entries.insert(id.clone(), MockEntry { created: now, closed: false });
        self.by_key.insert(key.to_string(), id.clone());
        self.write(JournalLine {
            op: "create",
            t: now,
            ticket_id: &id,
            key: Some(key),
            node_id: Some(node),
            diagnostics: Some(diagnostics),
        })?;
        if down {
            Err(RemediationError::ClientUnavailable)
        } else {
            Ok(id)
        }
    }

    fn poll(&mut self, ticket_id: &str, now: Millis) -> Result<TicketStatus, RemediationError> {
        if self.down() {
            return Err(RemediationError::ClientUnavailable);
        }
        let e = self.entries.get(ticket_id).ok_or_else(|| RemediationError::UnknownTicket(ticket_id.to_string()))?;
        let age = now.saturating_sub(e.created);
        Ok(if e.closed {
            TicketStatus::Closed
        } else if age >= self.migrate_after {
            TicketStatus::Migrated
        } else if age >= self.deallocate_after {
            TicketStatus::HostDeallocated
        } else {
            TicketStatus::Open
        })
    }

    fn close(&mut self, ticket_id: &str, now: Millis) -> Result<(), RemediationError> {
        if self.down() {
            return Err(RemediationError::ClientUnavailable);
        }
        let e =
            self.entries.get_mut(ticket_id).ok_or_else(|| RemediationError::UnknownTicket(ticket_id.to_string()))?;
        if !e.closed {
            e.closed = true;
            self.write(JournalLine { op: "close", t: now, ticket_id, key: None, node_id: None, diagnostics: None })?;
        }
        Ok(())
    }
}
