//! Failure signature knowledge base: a small rule language, versioned rule
//! storage, rule matching and offline rule learning from labeled incidents.

mod dsl;
mod eval;
mod incident;
mod learn;
mod rule;
mod store;

pub use dsl::{
    format_window, normalize_line, parse_implicates, parse_predicate, Cmp, Expr, Implicates, Pattern, Predicate, Term,
    MAX_TERMS,
};
pub use eval::{evaluate_rule, expr_value, Evidence, MatchScope, RuleMatch};
pub use incident::{load_corpus, save_corpus, Label, LabeledIncident};
pub use learn::{
    contextual_data_selection, contrastive_feature_selection, evaluate_rule_set, evaluate_rules, generate_rule,
    generate_rule_with, repair, stratified_split, EvalReport, Feature, FeatureScore, GenerateConfig, Generated,
    ProposalContext, Repair, RuleCandidate, RuleProposer, RuleStats, TemplateProposer, TraceEntry, FEATURE_WINDOW,
};
pub use rule::{Provenance, Rule, RuleAction, RuleDoc, Severity};
pub use store::{AuditAction, AuditEntry, KnowledgeBase, MatchOutcome};

use thiserror::Error;

use crate::RuleId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KbError {
    #[error("rule `{rule}` does not parse: {message}")]
    Parse { rule: String, message: String },
    #[error("rule `{rule}` does not fit the telemetry schema: {message}")]
    Schema { rule: String, message: String },
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule id `{0}` is not a valid file name")]
    InvalidRuleId(String),
    #[error("feature selection needs non-empty anomalous and normal sets")]
    EmptySet,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no incident in the corpus carries a different label")]
    NoContrastAvailable,
    #[error("validation corpus needs both positive and negative incidents")]
    ValidationCorpusDegenerate,
    #[error("io: {0}")]
    Io(String),
}

/// A rule failed while executing against telemetry (for example a numeric
/// aggregate over a log channel).
#[derive(Debug, Error, Clone, PartialEq)]
#[error("rule `{rule_id}` failed at runtime: {message}")]
pub struct RuleRuntimeError {
    pub rule_id: RuleId,
    pub message: String,
}

/// Hand-written signatures for the fault classes the default fault catalog
/// marks as known.
pub const DEFAULT_RULES: &str = r#"
rule_id: accelerator-memory-fault
name: accelerator memory access fault
predicate: 'count("Memory access fault by Node-*", 60s) >= 1 and max(accel_mem_ecc, 60s) > 5'
implicates: argmax max(accel_mem_ecc, 60s)
severity: critical
action: ticket
provenance: manual
fault_class: accelerator-memory
---
rule_id: interconnect-link-down
name: interconnect link down
predicate: 'count("link down", 60s) >= 1'
implicates: argmin min(ib_bw, 60s)
severity: high
action: ticket
provenance: manual
fault_class: interconnect
---
rule_id: host-soft-lockup
name: host kernel soft lockup
predicate: 'count("soft lockup", 60s) >= 1'
implicates: argmax count("soft lockup", 60s)
severity: high
action: reboot
provenance: manual
fault_class: host-os
---
rule_id: silent-hang
name: job hang with idle accelerator
predicate: 'max(job_throughput, 60s) < 1 and min(accel_util, 60s) < 0.05'
implicates: argmin min(accel_util, 60s)
severity: high
action: reboot
provenance: manual
fault_class: silent-hang
---
rule_id: clock-throttling
name: accelerator clock throttling
predicate: 'count("clocks throttled", 60s) >= 1'
implicates: argmin mean(accel_util, 60s)
severity: medium
action: reboot
provenance: manual
fault_class: throughput-degradation
"#;

pub fn default_rules() -> Vec<Rule> {
    DEFAULT_RULES.split("\n---\n").map(|doc| Rule::from_yaml(doc).expect("bundled rules parse")).collect()
}

/// A KB holding [`default_rules`].
pub fn default_kb() -> KnowledgeBase {
    KnowledgeBase::with_rules(default_rules()).expect("bundled rules have valid ids")
}

#[cfg(test)]
mod tests;
