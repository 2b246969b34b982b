//! Line-oriented text formats for PDFA and guide automata.
//!
//! ```text
//! # PDFA
//! alphabet a b
//! states 2
//! initial 0
//! dist 0 a=7/10 b=1/5 $=1/10
//! trans 0 a=0 b=1
//! ```
//!
//! Omitted probabilities are 0 and omitted transitions are `UNDEF`. A state
//! whose entries are all integers or `p/q` fractions is stored exactly;
//! otherwise entries are floats, written with 17 significant digits.
//!
//! Guides replace `dist` by `allow q sym… [$]`; masked-out symbols without a
//! `trans` entry loop on their state.

use std::fmt::Write as _;

use thiserror::Error;

use crate::automata::{AutomataError, GuideAutomaton, Pdfa};
use crate::simplex::{Alphabet, Distribution, Rational, SimplexError};

pub const UNDEF: &str = "UNDEF";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: state {state} has two transitions on `{symbol}`")]
    Nondeterministic { line: usize, state: usize, symbol: String },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

#[derive(Debug, Clone)]
enum Value {
    Exact(Rational),
    Float(f64),
}

fn parse_value(line: usize, text: &str) -> Result<Value, FormatError> {
    let bad = || err(line, format!("bad probability `{text}`"));
    if let Some((n, d)) = text.split_once('/') {
        let (n, d) = (n.parse::<i64>().map_err(|_| bad())?, d.parse::<i64>().map_err(|_| bad())?);
        if d <= 0 {
            return Err(bad());
        }
        return Ok(Value::Exact(Rational::new(n, d)));
    }
    if let Ok(n) = text.parse::<i64>() {
        return Ok(Value::Exact(Rational::from_integer(n)));
    }
    text.parse::<f64>().map(Value::Float).map_err(|_| bad())
}

fn value_f64(v: &Value) -> f64 {
    match v {
        Value::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
        Value::Float(x) => *x,
    }
}

/// Header fields shared by both formats.
struct Header {
    alphabet: Alphabet,
    states: usize,
    initial: usize,
}

/// Lines after comment stripping, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_header(text: &str) -> Result<Header, FormatError> {
    let (mut alphabet, mut states, mut initial) = (None, None, None);
    for (line, fields) in content_lines(text) {
        match fields[0] {
            "alphabet" => alphabet = Some(Alphabet::new(fields[1..].iter().copied()).map_err(|e| err(line, e.to_string()))?),
            "states" | "initial" => {
                let [_, n] = fields[..] else {
                    return Err(err(line, format!("`{}` takes one number", fields[0])));
                };
                let n = n.parse::<usize>().map_err(|_| err(line, format!("bad number `{n}`")))?;
                if fields[0] == "states" {
                    states = Some(n);
                } else {
                    initial = Some(n);
                }
            }
            _ => {}
        }
    }
    let end = text.lines().count().max(1);
    let missing = |what: &str| err(end, format!("missing `{what}` line"));
    let alphabet = alphabet.ok_or_else(|| missing("alphabet"))?;
    let states = states.ok_or_else(|| missing("states"))?;
    if states == 0 {
        return Err(err(end, "at least one state is required"));
    }
    Ok(Header { alphabet, states, initial: initial.unwrap_or(0) })
}

fn parse_state(line: usize, text: &str, states: usize) -> Result<usize, FormatError> {
    let q = text.parse::<usize>().map_err(|_| err(line, format!("bad state `{text}`")))?;
    if q >= states {
        return Err(err(line, format!("state {q} out of range")));
    }
    Ok(q)
}

/// `sym=value` pairs.
fn assignments<'a>(line: usize, fields: &[&'a str]) -> Result<Vec<(&'a str, &'a str)>, FormatError> {
    fields
        .iter()
        .map(|f| f.split_once('=').ok_or_else(|| err(line, format!("expected `symbol=value`, got `{f}`"))))
        .collect()
}

pub fn parse_pdfa(text: &str) -> Result<Pdfa, FormatError> {
    let Header { alphabet, states, initial } = parse_header(text)?;
    let mut dists: Vec<Option<Vec<Value>>> = vec![None; states];
    let mut tau: Vec<Vec<Option<usize>>> = vec![vec![None; alphabet.len()]; states];
    let mut seen_trans = vec![vec![false; alphabet.len()]; states];
    for (line, fields) in content_lines(text) {
        match fields[0] {
            "alphabet" | "states" | "initial" => {}
            "dist" | "trans" if fields.len() < 2 => return Err(err(line, format!("`{}` needs a state", fields[0]))),
            "dist" => {
                let q = parse_state(line, fields[1], states)?;
                if dists[q].is_some() {
                    return Err(err(line, format!("second `dist` line for state {q}")));
                }
                let mut values = vec![Value::Exact(Rational::from_integer(0)); alphabet.slots()];
                for (name, v) in assignments(line, &fields[2..])? {
                    let slot = alphabet.slot(name).ok_or_else(|| err(line, format!("unknown symbol `{name}`")))?;
                    values[slot] = parse_value(line, v)?;
                }
                dists[q] = Some(values);
            }
            "trans" => {
                let q = parse_state(line, fields[1], states)?;
                for (name, t) in assignments(line, &fields[2..])? {
                    let s = alphabet.symbol(name).ok_or_else(|| err(line, format!("unknown symbol `{name}`")))?;
                    if std::mem::replace(&mut seen_trans[q][s.index()], true) {
                        return Err(FormatError::Nondeterministic { line, state: q, symbol: name.to_string() });
                    }
                    tau[q][s.index()] = if t == UNDEF { None } else { Some(parse_state(line, t, states)?) };
                }
            }
            other => return Err(err(line, format!("unknown directive `{other}`"))),
        }
    }
    let mut pi = Vec::with_capacity(states);
    for (q, values) in dists.into_iter().enumerate() {
        let values = values.ok_or_else(|| err(0, format!("state {q} has no `dist` line")))?;
        let exact: Option<Vec<Rational>> =
            values.iter().map(|v| if let Value::Exact(r) = v { Some(*r) } else { None }).collect();
        let d = match exact {
            Some(r) => Distribution::from_rationals(r),
            None => Distribution::new(values.iter().map(value_f64).collect()),
        };
        pi.push(d.map_err(|e| err(0, format!("state {q}: {e}")))?);
    }
    Ok(Pdfa::new(alphabet, initial, pi, tau)?)
}

fn format_prob(d: &Distribution, slot: usize) -> String {
    match d.exact() {
        Some(r) if r[slot].is_integer() => r[slot].numer().to_string(),
        Some(r) => format!("{}/{}", r[slot].numer(), r[slot].denom()),
        None => format!("{:.16e}", d.probs()[slot]),
    }
}

pub fn write_pdfa(a: &Pdfa) -> String {
    let ab = a.alphabet();
    let mut out = String::new();
    let _ = writeln!(out, "alphabet {}", ab.names().join(" "));
    let _ = writeln!(out, "states {}", a.num_states());
    let _ = writeln!(out, "initial {}", a.initial());
    for q in 0..a.num_states() {
        let d = a.dist(q);
        let _ = write!(out, "dist {q}");
        for slot in (0..ab.slots()).filter(|&s| d.probs()[s] > 0.0) {
            let _ = write!(out, " {}={}", ab.slot_name(slot), format_prob(d, slot));
        }
        out.push('\n');
    }
    for q in 0..a.num_states() {
        let _ = write!(out, "trans {q}");
        for s in ab.symbols() {
            let t = a.next_state(q, s).map_or_else(|| UNDEF.to_string(), |t| t.to_string());
            let _ = write!(out, " {}={t}", ab.name(s));
        }
        out.push('\n');
    }
    out
}

pub fn parse_guide(text: &str) -> Result<GuideAutomaton, FormatError> {
    let Header { alphabet, states, initial } = parse_header(text)?;
    let mut mask = vec![vec![false; alphabet.slots()]; states];
    let mut delta: Vec<Vec<Option<usize>>> = vec![vec![None; alphabet.len()]; states];
    for (line, fields) in content_lines(text) {
        match fields[0] {
            "alphabet" | "states" | "initial" => {}
            "allow" | "trans" if fields.len() < 2 => return Err(err(line, format!("`{}` needs a state", fields[0]))),
            "allow" => {
                let g = parse_state(line, fields[1], states)?;
                for name in &fields[2..] {
                    let slot = alphabet.slot(name).ok_or_else(|| err(line, format!("unknown symbol `{name}`")))?;
                    mask[g][slot] = true;
                }
            }
            "trans" => {
                let g = parse_state(line, fields[1], states)?;
                for (name, t) in assignments(line, &fields[2..])? {
                    let s = alphabet.symbol(name).ok_or_else(|| err(line, format!("unknown symbol `{name}`")))?;
                    let t = parse_state(line, t, states)?;
                    if delta[g][s.index()].replace(t).is_some() {
                        return Err(FormatError::Nondeterministic { line, state: g, symbol: name.to_string() });
                    }
                }
            }
            other => return Err(err(line, format!("unknown directive `{other}`"))),
        }
    }
    let mut total = Vec::with_capacity(states);
    for (g, row) in delta.into_iter().enumerate() {
        let mut filled = Vec::with_capacity(row.len());
        for (i, t) in row.into_iter().enumerate() {
            match t {
                Some(t) => filled.push(t),
                None if mask[g][i] => {
                    return Err(err(0, format!("state {g} allows `{}` without a transition", alphabet.names()[i])));
                }
                None => filled.push(g),
            }
        }
        total.push(filled);
    }
    Ok(GuideAutomaton::new(alphabet, initial, mask, total)?)
}

pub fn write_guide(g: &GuideAutomaton) -> String {
    let ab = g.alphabet();
    let mut out = String::new();
    let _ = writeln!(out, "alphabet {}", ab.names().join(" "));
    let _ = writeln!(out, "states {}", g.num_states());
    let _ = writeln!(out, "initial {}", g.initial());
    for q in 0..g.num_states() {
        let allowed: Vec<&str> = (0..ab.slots()).filter(|&s| g.mask(q)[s]).map(|s| ab.slot_name(s)).collect();
        let _ = writeln!(out, "allow {q} {}", allowed.join(" "));
    }
    for q in 0..g.num_states() {
        let _ = write!(out, "trans {q}");
        for s in ab.symbols() {
            let _ = write!(out, " {}={}", ab.name(s), g.step(q, s));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::fixtures::*;
    use crate::randgen::GenSpec;

    #[test]
    fn float_round_trip_is_bit_exact() {
        let a = GenSpec { n: 30, m: 4, theta: 0.5, kappa: 10, seed: 3 }.generate().unwrap();
        let text = write_pdfa(&a);
        let b = parse_pdfa(&text).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.distributions().iter().zip(b.distributions()) {
            assert!(x.probs().iter().zip(y.probs()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        assert_eq!(write_pdfa(&b), text);
    }

    #[test]
    fn rational_round_trip() {
        let a = fig4_l();
        let text = write_pdfa(&a);
        assert!(text.contains("a=7/10"));
        let b = parse_pdfa(&text).unwrap();
        assert_eq!(b.dist(0).exact(), a.dist(0).exact());
    }

    #[test]
    fn undef_and_defaults() {
        let text = "alphabet a b\nstates 1\ndist 0 a=1\ntrans 0 a=0 b=UNDEF # only a\n";
        let a = parse_pdfa(text).unwrap();
        assert_eq!(a.transitions(0), vec![Some(0), None]);
        assert_eq!(a.dist(0).probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn parse_failures_carry_lines() {
        assert!(matches!(parse_pdfa("alphabet a\nstates 1\ndist 0 a=x\n"), Err(FormatError::Parse { line: 3, .. })));
        assert!(matches!(parse_pdfa("alphabet a\nstates 1\nfoo\n"), Err(FormatError::Parse { line: 3, .. })));
        assert!(parse_pdfa("alphabet a\nstates 1\ndist 0 a=1/2\ntrans 0 a=0\n").is_err(), "not normalized");
        assert!(matches!(
            parse_pdfa("alphabet a\nstates 1\ndist 0 a=1/2 $=1/2\ntrans 0 a=0\ntrans 0 a=0\n"),
            Err(FormatError::Nondeterministic { line: 5, .. })
        ));
    }

    #[test]
    fn guide_round_trip_and_errors() {
        let g = fig4_g();
        let text = write_guide(&g);
        assert_eq!(parse_guide(&text).unwrap(), g);
        let implicit = parse_guide("alphabet a b\nstates 1\nallow 0 a $\ntrans 0 a=0\n").unwrap();
        assert_eq!(implicit.step(0, crate::simplex::Symbol(1)), 0);
        assert!(parse_guide("alphabet a\nstates 1\nallow 0 a\n").is_err());
        assert!(matches!(
            parse_guide("alphabet a\nstates 2\nallow 0 a\ntrans 0 a=1 a=0\n"),
            Err(FormatError::Nondeterministic { .. })
        ));
    }
}
