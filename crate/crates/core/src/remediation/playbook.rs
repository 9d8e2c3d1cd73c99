use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RemediationError;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Reboot,
    OpenTicket,
    ValidateQuick,
    ValidateComprehensive,
}

impl Action {
    pub fn is_validation(self) -> bool {
        matches!(self, Action::ValidateQuick | Action::ValidateComprehensive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Playbook {
    pub fault_class: String,
    pub actions: Vec<Action>,
}

impl Playbook {
    /// A playbook must end with a validation so no node is returned to
    /// service unchecked.
    pub fn new(fault_class: &str, actions: Vec<Action>) -> Result<Self, RemediationError> {
        if !actions.last().is_some_and(|a| a.is_validation()) {
            return Err(RemediationError::InvalidPlaybook(fault_class.to_string()));
        }
        Ok(Self { fault_class: fault_class.to_string(), actions })
    }
}

pub fn default_playbooks() -> BTreeMap<String, Playbook> {
    use Action::*;
    [
        ("host-os", vec![Reboot, ValidateQuick]),
        ("silent-hang", vec![Reboot, ValidateComprehensive]),
        ("throughput-degradation", vec![Reboot, ValidateComprehensive]),
        ("accelerator-memory", vec![OpenTicket, ValidateComprehensive]),
        ("interconnect", vec![OpenTicket, ValidateComprehensive]),
    ]
    .into_iter()
    .map(|(c, a)| (c.to_string(), Playbook::new(c, a).expect("default playbooks end in validation")))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionRecord {
    pub t: Millis,
    pub action: Action,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaybookOutcome {
    /// Validated and back in service.
    Returned,
    /// Handed to the repair team; the node stays out of service.
    Ticketed(String),
    /// A ticket is needed but the client is unreachable; retried on poll.
    AwaitingTicket,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaybookRun {
    pub node_id: crate::NodeId,
    pub fault_class: String,
    pub actions: Vec<ActionRecord>,
    pub outcome: PlaybookOutcome,
}
