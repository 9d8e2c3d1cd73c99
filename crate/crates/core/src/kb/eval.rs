use std::collections::BTreeSet;

use serde::Serialize;

use super::dsl::{Expr, Implicates};
use super::rule::Rule;
use super::RuleRuntimeError;
use crate::telemetry::{AggOp, TelemetryView};
use crate::{Millis, NodeId, RuleId};

/// Where and when rules are evaluated. Each term looks back over its own
/// window ending at `now` (inclusive), clipped so it never reaches before
/// `since`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchScope {
    pub nodes: Vec<NodeId>,
    pub now: Millis,
    pub since: Millis,
}

impl MatchScope {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>, now: Millis, since: Millis) -> Self {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        Self { nodes: nodes.into_iter().collect(), now, since }
    }

    pub fn range(&self, window: Millis) -> (Millis, Millis) {
        let hi = self.now + 1;
        (hi.saturating_sub(window).max(self.since).min(hi), hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub window: (Millis, Millis),
    /// Observed value of each predicate term on the implicated node.
    pub terms: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleMatch {
    pub rule_id: RuleId,
    pub version: u32,
    pub node_id: NodeId,
    pub fault_class: Option<String>,
    pub evidence: Evidence,
}

/// Value of an expression on one node. `None` means no data in the window,
/// which makes any comparison false.
pub fn expr_value(
    view: &dyn TelemetryView,
    expr: &Expr,
    node: NodeId,
    scope: &MatchScope,
) -> Result<Option<f64>, String> {
    let (lo, hi) = scope.range(expr.window());
    match expr {
        Expr::Agg { op, metric, .. } => {
            if *op == AggOp::Rate {
                let pts = view.numeric(metric, node, lo, hi).map_err(|e| e.to_string())?;
                return Ok(match (pts.first(), pts.last()) {
                    (Some(a), Some(b)) if b.0 > a.0 => Some((b.1 - a.1) / ((b.0 - a.0) as f64 / 1000.0)),
                    _ => None,
                });
            }
            let vals = view.numeric_values(metric, node, lo, hi).map_err(|e| e.to_string())?;
            Ok(match op {
                AggOp::Count => Some(vals.len() as f64),
                _ if vals.is_empty() => None,
                _ => Some(op.reduce(&vals)),
            })
        }
        Expr::Count { pattern, .. } => {
            let mut n = 0usize;
            for (channel, source) in view.schema() {
                if source.is_log() {
                    let lines = view.lines(&channel, node, lo, hi).map_err(|e| e.to_string())?;
                    n += lines.iter().filter(|(_, l)| pattern.matches(l)).count();
                }
            }
            Ok(Some(n as f64))
        }
    }
}

/// Evaluates one rule over the scope and returns the implicated nodes.
pub fn evaluate_rule(
    view: &dyn TelemetryView,
    rule: &Rule,
    scope: &MatchScope,
) -> Result<Vec<RuleMatch>, RuleRuntimeError> {
    let err = |m: String| RuleRuntimeError { rule_id: rule.rule_id.clone(), message: m };
    let mut hits: Vec<(NodeId, Vec<(String, f64)>)> = Vec::new();
    'nodes: for &node in &scope.nodes {
        let mut observed = Vec::with_capacity(rule.predicate.terms.len());
        for term in &rule.predicate.terms {
            match expr_value(view, &term.expr, node, scope).map_err(err)? {
                Some(v) if term.cmp.holds(v, term.threshold) => observed.push((term.to_string(), v)),
                _ => continue 'nodes,
            }
        }
        hits.push((node, observed));
    }
    let chosen: Vec<usize> = match &rule.implicates {
        Implicates::All => (0..hits.len()).collect(),
        Implicates::ArgMax(e) | Implicates::ArgMin(e) => {
            let max = matches!(rule.implicates, Implicates::ArgMax(_));
            let mut best: Option<(usize, f64)> = None;
            for (i, (node, _)) in hits.iter().enumerate() {
                let Some(v) = expr_value(view, e, *node, scope).map_err(err)? else { continue };
                let better = match best {
                    None => true,
                    Some((_, b)) => (max && v > b) || (!max && v < b),
                };
                if better {
                    best = Some((i, v));
                }
            }
            match best {
                Some((i, _)) => vec![i],
                None if !hits.is_empty() => vec![0],
                None => vec![],
            }
        }
    };
    Ok(chosen
        .into_iter()
        .map(|i| {
            let (node, terms) = hits[i].clone();
            let w = rule.predicate.terms.iter().map(|t| t.expr.window()).max().unwrap_or(0);
            RuleMatch {
                rule_id: rule.rule_id.clone(),
                version: rule.version,
                node_id: node,
                fault_class: rule.fault_class.clone(),
                evidence: Evidence { window: scope.range(w), terms },
            }
        })
        .collect())
}
