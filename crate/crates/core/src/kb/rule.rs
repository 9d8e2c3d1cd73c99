use std::fmt;

use serde::{Deserialize, Serialize};

use super::dsl::{parse_implicates, parse_predicate, Expr, Implicates, Predicate};
use super::KbError;
use crate::telemetry::Source;
use crate::RuleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleAction {
    RecoverJobOnly,
    Reboot,
    Ticket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Manual,
    Generated,
}

/// A failure signature: when `predicate` holds on a node, the nodes selected
/// by `implicates` are blamed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleDoc", into = "RuleDoc")]
pub struct Rule {
    pub rule_id: RuleId,
    pub name: String,
    pub predicate: Predicate,
    pub implicates: Implicates,
    pub severity: Severity,
    pub action: RuleAction,
    pub provenance: Provenance,
    pub version: u32,
    /// Fault class handed to remediation when this rule fires.
    pub fault_class: Option<String>,
}

/// On-disk form of a rule: the predicate and implicates clause as DSL text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleDoc {
    pub rule_id: String,
    pub name: String,
    pub predicate: String,
    pub implicates: String,
    pub severity: Severity,
    pub action: RuleAction,
    pub provenance: Provenance,
    #[serde(default)]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_class: Option<String>,
}

impl TryFrom<RuleDoc> for Rule {
    type Error = KbError;

    fn try_from(d: RuleDoc) -> Result<Self, KbError> {
        let bad = |e: String| KbError::Parse { rule: d.rule_id.clone(), message: e };
        Ok(Rule {
            predicate: parse_predicate(&d.predicate).map_err(bad)?,
            implicates: parse_implicates(&d.implicates).map_err(bad)?,
            rule_id: RuleId::new(&d.rule_id),
            name: d.name,
            severity: d.severity,
            action: d.action,
            provenance: d.provenance,
            version: d.version,
            fault_class: d.fault_class,
        })
    }
}

impl From<Rule> for RuleDoc {
    fn from(r: Rule) -> Self {
        RuleDoc {
            rule_id: r.rule_id.as_str().to_string(),
            name: r.name,
            predicate: r.predicate.to_string(),
            implicates: r.implicates.to_string(),
            severity: r.severity,
            action: r.action,
            provenance: r.provenance,
            version: r.version,
            fault_class: r.fault_class,
        }
    }
}

impl Rule {
    pub fn parse(
        rule_id: &str,
        predicate: &str,
        implicates: &str,
        action: RuleAction,
        fault_class: Option<&str>,
    ) -> Result<Self, KbError> {
        Rule::try_from(RuleDoc {
            rule_id: rule_id.into(),
            name: rule_id.into(),
            predicate: predicate.into(),
            implicates: implicates.into(),
            severity: Severity::High,
            action,
            provenance: Provenance::Manual,
            version: 0,
            fault_class: fault_class.map(str::to_string),
        })
    }

    pub fn from_yaml(text: &str) -> Result<Self, KbError> {
        let doc: RuleDoc =
            serde_yaml::from_str(text).map_err(|e| KbError::Parse { rule: "?".into(), message: e.to_string() })?;
        Rule::try_from(doc)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(&RuleDoc::from(self.clone())).expect("rule documents always serialize")
    }

    fn exprs(&self) -> impl Iterator<Item = &Expr> {
        let imp = match &self.implicates {
            Implicates::All => None,
            Implicates::ArgMax(e) | Implicates::ArgMin(e) => Some(e),
        };
        self.predicate.terms.iter().map(|t| &t.expr).chain(imp)
    }

    /// Checks the rule against a telemetry schema: every referenced metric
    /// exists, numeric aggregates name numeric metrics, thresholds are
    /// finite and windows positive.
    pub fn check_schema(&self, schema: &[(String, Source)]) -> Result<(), KbError> {
        let fail = |m: String| Err(KbError::Schema { rule: self.rule_id.as_str().to_string(), message: m });
        if self.predicate.terms.is_empty() {
            return fail("empty predicate".into());
        }
        for t in &self.predicate.terms {
            if !t.threshold.is_finite() {
                return fail(format!("non-finite threshold in `{t}`"));
            }
        }
        for e in self.exprs() {
            if e.window() == 0 {
                return fail(format!("zero window in `{e}`"));
            }
            if let Some(m) = e.metric() {
                match schema.iter().find(|(n, _)| n == m) {
                    None => return fail(format!("unknown metric `{m}`")),
                    Some((_, s)) if s.is_log() => return fail(format!("`{m}` is a log channel")),
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} v{}: {} => {}", self.rule_id, self.version, self.predicate, self.implicates)
    }
}
