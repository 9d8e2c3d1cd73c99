use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_rule, MatchScope, RuleMatch};
use super::rule::Rule;
use super::KbError;
use crate::telemetry::TelemetryView;
use crate::RuleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditAction {
    Commit,
    Quarantine,
    Reaccept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub rule_id: RuleId,
    pub version: u32,
    pub action: AuditAction,
    pub detail: String,
}

#[derive(Debug, Clone)]
struct Entry {
    current: Rule,
    history: Vec<Rule>,
    quarantined: Option<String>,
}

#[derive(Debug, Default)]
struct State {
    rules: BTreeMap<RuleId, Entry>,
    audit: Vec<AuditEntry>,
}

/// Result of matching the active rules against telemetry. Rules that failed
/// at runtime are quarantined as a side effect and listed here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOutcome {
    pub matches: Vec<RuleMatch>,
    pub quarantined: Vec<(RuleId, String)>,
}

/// Versioned rule store. Reads run concurrently; every mutation takes the
/// write lock, so commits and quarantines are serialized.
///
/// When backed by a directory the layout is
/// `<rule_id>.yaml` (current version), `history/<rule_id>.v<n>.yaml`,
/// `quarantine.yaml` and `audit.jsonl`.
#[derive(Debug, Default)]
pub struct KnowledgeBase {
    state: RwLock<State>,
    dir: Option<PathBuf>,
}

fn io(e: impl std::fmt::Display) -> KbError {
    KbError::Io(e.to_string())
}

fn check_id(id: &RuleId) -> Result<(), KbError> {
    let s = id.as_str();
    if s.is_empty()
        || s.starts_with('.')
        || !s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        return Err(KbError::InvalidRuleId(s.to_string()));
    }
    Ok(())
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) a directory-backed KB and loads any rules in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, KbError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("history")).map_err(io)?;
        let mut state = State::default();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "yaml") && p.file_stem().is_some_and(|s| s != "quarantine"))
            .collect();
        files.sort();
        for path in files {
            let rule = Rule::from_yaml(&fs::read_to_string(&path).map_err(io)?)?;
            let mut history = Vec::new();
            for v in 1..rule.version {
                let p = dir.join("history").join(format!("{}.v{v}.yaml", rule.rule_id));
                if let Ok(text) = fs::read_to_string(p) {
                    history.push(Rule::from_yaml(&text)?);
                }
            }
            state.rules.insert(rule.rule_id.clone(), Entry { current: rule, history, quarantined: None });
        }
        if let Ok(text) = fs::read_to_string(dir.join("quarantine.yaml")) {
            let q: BTreeMap<String, String> = serde_yaml::from_str(&text).map_err(io)?;
            for (id, reason) in q {
                if let Some(e) = state.rules.get_mut(&RuleId::new(&id)) {
                    e.quarantined = Some(reason);
                }
            }
        }
        if let Ok(text) = fs::read_to_string(dir.join("audit.jsonl")) {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                state.audit.push(serde_json::from_str(line).map_err(io)?);
            }
        }
        Ok(Self { state: RwLock::new(state), dir: Some(dir) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn persist(&self, st: &State, touched: &RuleId) -> Result<(), KbError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        if let Some(e) = st.rules.get(touched) {
            let r = &e.current;
            fs::write(dir.join(format!("{}.yaml", r.rule_id)), r.to_yaml()).map_err(io)?;
            fs::write(dir.join("history").join(format!("{}.v{}.yaml", r.rule_id, r.version)), r.to_yaml())
                .map_err(io)?;
        }
        let q: BTreeMap<&str, &str> =
            st.rules.iter().filter_map(|(id, e)| e.quarantined.as_deref().map(|r| (id.as_str(), r))).collect();
        fs::write(dir.join("quarantine.yaml"), serde_yaml::to_string(&q).map_err(io)?).map_err(io)?;
        let mut audit = String::new();
        for a in &st.audit {
            audit.push_str(&serde_json::to_string(a).map_err(io)?);
            audit.push('\n');
        }
        fs::write(dir.join("audit.jsonl"), audit).map_err(io)
    }

    fn record(st: &mut State, rule_id: &RuleId, version: u32, action: AuditAction, detail: String) {
        let seq = st.audit.len() as u64 + 1;
        st.audit.push(AuditEntry { seq, rule_id: rule_id.clone(), version, action, detail });
    }

    /// Stores a new version of `rule`; the version number is assigned here.
    /// Committing also lifts any quarantine on the rule id.
    pub fn commit(&self, mut rule: Rule) -> Result<Rule, KbError> {
        check_id(&rule.rule_id)?;
        let mut st = self.state.write();
        let id = rule.rule_id.clone();
        let prev = st.rules.remove(&id);
        rule.version = prev.as_ref().map_or(1, |e| e.current.version + 1);
        let mut history = Vec::new();
        if let Some(e) = prev {
            history = e.history;
            history.push(e.current);
        }
        st.rules.insert(id.clone(), Entry { current: rule.clone(), history, quarantined: None });
        Self::record(&mut st, &id, rule.version, AuditAction::Commit, rule.predicate.to_string());
        self.persist(&st, &id)?;
        Ok(rule)
    }

    /// Commits each rule in order.
    pub fn with_rules(rules: impl IntoIterator<Item = Rule>) -> Result<Self, KbError> {
        let kb = Self::new();
        for r in rules {
            kb.commit(r)?;
        }
        Ok(kb)
    }

    /// Excludes a rule from matching. Quarantining an already quarantined
    /// rule changes nothing.
    pub fn quarantine(&self, rule_id: &RuleId, reason: &str) -> Result<(), KbError> {
        let mut st = self.state.write();
        let e = st.rules.get_mut(rule_id).ok_or_else(|| KbError::UnknownRule(rule_id.to_string()))?;
        if e.quarantined.is_some() {
            return Ok(());
        }
        e.quarantined = Some(reason.to_string());
        let v = e.current.version;
        Self::record(&mut st, rule_id, v, AuditAction::Quarantine, reason.to_string());
        self.persist(&st, rule_id)
    }

    /// Lifts a quarantine once the rule has passed review elsewhere.
    pub fn reaccept(&self, rule_id: &RuleId, detail: &str) -> Result<(), KbError> {
        let mut st = self.state.write();
        let e = st.rules.get_mut(rule_id).ok_or_else(|| KbError::UnknownRule(rule_id.to_string()))?;
        if e.quarantined.take().is_none() {
            return Ok(());
        }
        let v = e.current.version;
        Self::record(&mut st, rule_id, v, AuditAction::Reaccept, detail.to_string());
        self.persist(&st, rule_id)
    }

    pub fn get(&self, rule_id: &RuleId) -> Option<Rule> {
        self.state.read().rules.get(rule_id).map(|e| e.current.clone())
    }

    pub fn is_quarantined(&self, rule_id: &RuleId) -> bool {
        self.state.read().rules.get(rule_id).is_some_and(|e| e.quarantined.is_some())
    }

    /// Earlier versions of a rule, oldest first.
    pub fn history(&self, rule_id: &RuleId) -> Vec<Rule> {
        self.state.read().rules.get(rule_id).map(|e| e.history.clone()).unwrap_or_default()
    }

    pub fn rules(&self) -> Vec<Rule> {
        self.state.read().rules.values().map(|e| e.current.clone()).collect()
    }

    pub fn active_rules(&self) -> Vec<Rule> {
        self.state.read().rules.values().filter(|e| e.quarantined.is_none()).map(|e| e.current.clone()).collect()
    }

    pub fn audit(&self) -> Vec<AuditEntry> {
        self.state.read().audit.clone()
    }

    pub fn len(&self) -> usize {
        self.state.read().rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluates every active rule. Results are ordered by rule id, then
    /// node, whatever order the rules were committed in.
    pub fn match_rules(&self, view: &dyn TelemetryView, scope: &MatchScope) -> Result<MatchOutcome, KbError> {
        let mut out = MatchOutcome::default();
        for rule in self.active_rules() {
            match evaluate_rule(view, &rule, scope) {
                Ok(m) => out.matches.extend(m),
                Err(e) => out.quarantined.push((e.rule_id.clone(), e.message)),
            }
        }
        for (id, reason) in &out.quarantined {
            self.quarantine(id, &format!("runtime error: {reason}"))?;
        }
        out.matches.sort_by(|a, b| (&a.rule_id, a.node_id).cmp(&(&b.rule_id, b.node_id)));
        Ok(out)
    }
}
