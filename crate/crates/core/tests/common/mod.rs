#![allow(dead_code)]

use std::path::PathBuf;

use pdfa_learn::automata::{GuideAutomaton, Pdfa, StateId};
use pdfa_learn::harness::format::{parse_guide, parse_pdfa};
use pdfa_learn::simplex::{Alphabet, Distribution, Rational, Symbol, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture(name: &str) -> Pdfa {
    parse_pdfa(&fixture_text(name)).unwrap()
}

pub fn guide_fixture(name: &str) -> GuideAutomaton {
    parse_guide(&fixture_text(name)).unwrap()
}

/// Exact distributions over `a b $`, few enough that equal states are common.
fn palette() -> Vec<Distribution> {
    let r = |n, d| Rational::new(n, d);
    [
        [r(1, 2), r(1, 2), r(0, 1)],
        [r(1, 2), r(0, 1), r(1, 2)],
        [r(0, 1), r(1, 4), r(3, 4)],
        [r(1, 4), r(1, 4), r(1, 2)],
        [r(0, 1), r(0, 1), r(1, 1)],
    ]
    .into_iter()
    .map(|d| Distribution::from_rationals(d.to_vec()).unwrap())
    .collect()
}

/// Random PDFA over `a b` with at most `max_states` states; UNDEF appears only
/// off-support and only when `partial`.
pub fn small_pdfa(seed: u64, max_states: usize, partial: bool) -> Pdfa {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_states);
    let palette = palette();
    let pi: Vec<Distribution> = (0..n).map(|_| palette[rng.gen_range(0..palette.len())].clone()).collect();
    let tau = pi
        .iter()
        .map(|d| {
            (0..2)
                .map(|s| {
                    if partial && !d.in_support(Symbol(s)) && rng.gen_bool(0.5) {
                        None
                    } else {
                        Some(rng.gen_range(0..n))
                    }
                })
                .collect()
        })
        .collect();
    Pdfa::new(Alphabet::new(["a", "b"]).unwrap(), 0, pi, tau).unwrap()
}

/// Every word over the alphabet of length at most `max_len`, shortest first.
pub fn words(alphabet: &Alphabet, max_len: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Word> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for s in alphabet.symbols() {
                let mut v = w.clone();
                v.push(s);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Language-level relation: every extension defined from `p` is defined from
/// `q` with an equal next-symbol distribution, up to `depth` symbols.
pub fn same_language(a: &Pdfa, p: StateId, q: StateId, depth: usize) -> bool {
    if a.dist(p) != a.dist(q) {
        return false;
    }
    if depth == 0 {
        return true;
    }
    a.alphabet().symbols().filter(|&s| a.dist(p).in_support(s)).all(|s| {
        let (p2, q2) = (a.next_state(p, s).unwrap(), a.next_state(q, s).unwrap());
        same_language(a, p2, q2, depth - 1)
    })
}
