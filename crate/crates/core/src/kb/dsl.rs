//! Parser and printer for the rule language.
//!
//! ```text
//! predicate  := term ("and" term)*                  (at most 4 terms)
//! term       := expr cmp number
//! expr       := agg "(" metric "," window ")"        agg ∈ mean|max|min|count|rate
//!             | "count" "(" string "," window ")"    log lines matching a pattern
//! cmp        := ">" | ">=" | "<" | "<=" | "=="
//! window     := number ("ms"|"s"|"m"|"h")
//! implicates := "all" | ("argmax"|"argmin") expr
//! ```
//!
//! In patterns `*` matches any run of characters; matching is by substring.

use std::fmt;

use regex::Regex;

use crate::telemetry::AggOp;
use crate::{Millis, MS_PER_HOUR, MS_PER_MIN, MS_PER_SEC};

pub const MAX_TERMS: usize = 4;

#[derive(Debug, Clone)]
pub struct Pattern {
    text: String,
    regex: Regex,
}

impl Pattern {
    pub fn new(text: &str) -> Result<Self, String> {
        if text.trim().is_empty() {
            return Err("empty log pattern".into());
        }
        let body: Vec<String> = text.split('*').map(regex::escape).collect();
        let regex = Regex::new(&body.join(".*?")).map_err(|e| e.to_string())?;
        Ok(Self { text: text.to_string(), regex })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn matches(&self, line: &str) -> bool {
        self.regex.is_match(line)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, o: &Self) -> bool {
        self.text == o.text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Agg { op: AggOp, metric: String, window: Millis },
    Count { pattern: Pattern, window: Millis },
}

impl Expr {
    pub fn window(&self) -> Millis {
        match self {
            Expr::Agg { window, .. } | Expr::Count { window, .. } => *window,
        }
    }

    pub fn metric(&self) -> Option<&str> {
        match self {
            Expr::Agg { metric, .. } => Some(metric),
            Expr::Count { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cmp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl Cmp {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Eq => a == b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "==",
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Cmp::Gt | Cmp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub expr: Expr,
    pub cmp: Cmp,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Implicates {
    All,
    ArgMax(Expr),
    ArgMin(Expr),
}

pub fn format_window(ms: Millis) -> String {
    if ms > 0 && ms % MS_PER_HOUR == 0 {
        format!("{}h", ms / MS_PER_HOUR)
    } else if ms > 0 && ms % MS_PER_MIN == 0 && ms % MS_PER_HOUR != 0 && ms < 10 * MS_PER_MIN {
        format!("{}s", ms / MS_PER_SEC)
    } else if ms > 0 && ms % MS_PER_MIN == 0 {
        format!("{}m", ms / MS_PER_MIN)
    } else if ms % MS_PER_SEC == 0 {
        format!("{}s", ms / MS_PER_SEC)
    } else {
        format!("{ms}ms")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Agg { op, metric, window } => write!(f, "{}({metric}, {})", op.name(), format_window(*window)),
            Expr::Count { pattern, window } => {
                write!(
                    f,
                    "count(\"{}\", {})",
                    pattern.text.replace('\\', "\\\\").replace('"', "\\\""),
                    format_window(*window)
                )
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.expr, self.cmp.symbol(), self.threshold)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Implicates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Implicates::All => f.write_str("all"),
            Implicates::ArgMax(e) => write!(f, "argmax {e}"),
            Implicates::ArgMin(e) => write!(f, "argmin {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Dur(Millis),
    LParen,
    RParen,
    Comma,
    Cmp(Cmp),
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Tok::LParen);
                i += 1
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1
            }
            '>' | '<' | '=' => {
                let two = chars.get(i + 1) == Some(&'=');
                let cmp = match (c, two) {
                    ('>', true) => Cmp::Ge,
                    ('>', false) => Cmp::Gt,
                    ('<', true) => Cmp::Le,
                    ('<', false) => Cmp::Lt,
                    ('=', true) => Cmp::Eq,
                    _ => return Err(format!("unexpected `=` at {i}")),
                };
                out.push(Tok::Cmp(cmp));
                i += if two { 2 } else { 1 };
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err("unterminated string".into()),
                        Some('"') => break,
                        Some('\\') => {
                            let n = chars.get(i + 1).ok_or("dangling escape")?;
                            s.push(*n);
                            i += 2;
                        }
                        Some(ch) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Tok::Str(s));
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let mut num: String = chars[start..i].iter().collect();
                // "1e" followed by a unit letter is not an exponent
                if num.ends_with('e') || num.ends_with('E') {
                    num.pop();
                    i -= 1;
                }
                let v: f64 = num.parse().map_err(|_| format!("bad number `{num}`"))?;
                let unit_start = i;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                let unit: String = chars[unit_start..i].iter().collect();
                if unit.is_empty() {
                    out.push(Tok::Num(v));
                } else {
                    let scale = match unit.as_str() {
                        "ms" => 1.0,
                        "s" => MS_PER_SEC as f64,
                        "m" => MS_PER_MIN as f64,
                        "h" => MS_PER_HOUR as f64,
                        _ => return Err(format!("unknown unit `{unit}`")),
                    };
                    let ms = v * scale;
                    if !(ms >= 0.0 && ms.is_finite()) {
                        return Err(format!("bad window `{num}{unit}`"));
                    }
                    out.push(Tok::Dur(ms.round() as Millis));
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '-' | '.')) {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(format!("unexpected `{c}` at {i}")),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, String> {
        let t = self.toks.get(self.pos).cloned().ok_or("unexpected end of input")?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), String> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(format!("expected {want:?}, found {got:?}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let Tok::Ident(name) = self.next()? else { return Err("expected aggregate name".into()) };
        let op = AggOp::parse(&name).ok_or_else(|| format!("unknown aggregate `{name}`"))?;
        self.expect(Tok::LParen)?;
        let subject = self.next()?;
        self.expect(Tok::Comma)?;
        let window = match self.next()? {
            Tok::Dur(ms) => ms,
            other => return Err(format!("expected window like 60s, found {other:?}")),
        };
        self.expect(Tok::RParen)?;
        match subject {
            Tok::Ident(metric) => Ok(Expr::Agg { op, metric, window }),
            Tok::Str(p) if op == AggOp::Count => Ok(Expr::Count { pattern: Pattern::new(&p)?, window }),
            Tok::Str(_) => Err(format!("`{name}` cannot take a log pattern")),
            other => Err(format!("expected metric or pattern, found {other:?}")),
        }
    }

    fn term(&mut self) -> Result<Term, String> {
        let expr = self.expr()?;
        let Tok::Cmp(cmp) = self.next()? else { return Err("expected comparison".into()) };
        let threshold = match self.next()? {
            Tok::Num(v) => v,
            Tok::Ident(s) if s.eq_ignore_ascii_case("nan") => f64::NAN,
            other => return Err(format!("expected threshold, found {other:?}")),
        };
        Ok(Term { expr, cmp, threshold })
    }

    fn done(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("trailing input at {t:?}")),
        }
    }
}

pub fn parse_predicate(src: &str) -> Result<Predicate, String> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0 };
    let mut terms = vec![p.term()?];
    while let Some(Tok::Ident(k)) = p.peek() {
        if !k.eq_ignore_ascii_case("and") {
            break;
        }
        p.pos += 1;
        terms.push(p.term()?);
    }
    p.done()?;
    if terms.len() > MAX_TERMS {
        return Err(format!("{} terms, at most {MAX_TERMS} allowed", terms.len()));
    }
    Ok(Predicate { terms })
}

pub fn parse_implicates(src: &str) -> Result<Implicates, String> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0 };
    let Tok::Ident(head) = p.next()? else { return Err("expected all/argmax/argmin".into()) };
    let out = match head.as_str() {
        "all" => Implicates::All,
        "argmax" => Implicates::ArgMax(p.expr()?),
        "argmin" => Implicates::ArgMin(p.expr()?),
        other => return Err(format!("unknown implicates clause `{other}`")),
    };
    p.done()?;
    Ok(out)
}

/// Replaces volatile tokens of a log line (hex words, numbers) with `*` so
/// that recurrences of the same message share one pattern.
pub fn normalize_line(line: &str) -> String {
    use std::sync::OnceLock;
    static TOKENS: OnceLock<Regex> = OnceLock::new();
    static STARS: OnceLock<Regex> = OnceLock::new();
    let tokens = TOKENS.get_or_init(|| Regex::new(r"0x[0-9a-fA-F]+|\b[0-9a-fA-F]*[0-9][0-9a-fA-F]*\b|[0-9]+").unwrap());
    let stars = STARS.get_or_init(|| Regex::new(r"\*+").unwrap());
    let s = tokens.replace_all(line, |c: &regex::Captures<'_>| if c[0].starts_with("0x") { "0x*" } else { "*" });
    stars.replace_all(&s, "*").into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let src = r#"count("Memory access fault by Node-*", 60s) >= 1 and max(accel_mem_ecc, 2m) > 5.5"#;
        let p = parse_predicate(src).unwrap();
        assert_eq!(p.terms.len(), 2);
        let again = parse_predicate(&p.to_string()).unwrap();
        assert_eq!(p, again);
        let i = parse_implicates("argmax max(accel_mem_ecc, 120s)").unwrap();
        assert_eq!(parse_implicates(&i.to_string()).unwrap(), i);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_predicate("max(x, 60s) >").is_err());
        assert!(parse_predicate("median(x, 60s) > 1").is_err());
        assert!(parse_predicate("max(\"p\", 60s) > 1").is_err());
        assert!(parse_predicate("max(x, 60) > 1").is_err());
        let five = ["max(a, 1s) > 1"; 5].join(" and ");
        assert!(parse_predicate(&five).is_err());
    }

    #[test]
    fn pattern_wildcards() {
        let p = Pattern::new("Memory access fault by Node-* (Agent").unwrap();
        assert!(p.matches("xx Memory access fault by Node-9 (Agent handle: 0x1)"));
        assert!(!p.matches("Memory access fault by Node-9"));
        assert!(Pattern::new("a.b").unwrap().matches("a.b") && !Pattern::new("a.b").unwrap().matches("axb"));
    }

    #[test]
    fn normalization() {
        let line = "Memory access fault by Node-9 (Agent handle: 0x7f3a9c) on address 0xdeadbeef. Reason: Unknown.";
        assert_eq!(
            normalize_line(line),
            "Memory access fault by Node-* (Agent handle: 0x*) on address 0x*. Reason: Unknown."
        );
        assert_eq!(normalize_line("task kworker/u256:3 blocked for 120 s"), "task kworker/u*:* blocked for * s");
    }

    #[test]
    fn window_format() {
        assert_eq!(format_window(60_000), "60s");
        assert_eq!(format_window(3_600_000), "1h");
        assert_eq!(format_window(1_800_000), "30m");
        assert_eq!(format_window(1500), "1500ms");
    }
}
