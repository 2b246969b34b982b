use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{AutomataError, LanguageModel, ModelError, Pdfa, StateId};
use crate::simplex::{apply_sampling, normalize, Alphabet, Distribution, SamplingStrategy, SimplexError, Symbol, Word};

/// Deterministic automaton whose states carry `{0,1}` masks over `Σ ∪ {$}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideAutomaton {
    alphabet: Alphabet,
    initial: StateId,
    mask: Vec<Vec<bool>>,
    delta: Vec<Vec<StateId>>,
}

impl GuideAutomaton {
    pub fn new(
        alphabet: Alphabet,
        initial: StateId,
        mask: Vec<Vec<bool>>,
        delta: Vec<Vec<StateId>>,
    ) -> Result<Self, AutomataError> {
        let n = mask.len();
        if n == 0 {
            return Err(AutomataError::Empty);
        }
        if initial >= n {
            return Err(AutomataError::InvalidState(initial));
        }
        if delta.len() != n {
            return Err(AutomataError::Malformed { state: 0, message: "mask and delta sizes differ".into() });
        }
        for (g, (m, row)) in mask.iter().zip(&delta).enumerate() {
            if m.len() != alphabet.slots() || row.len() != alphabet.len() {
                return Err(AutomataError::Malformed { state: g, message: "row has the wrong width".into() });
            }
            if let Some(&t) = row.iter().find(|&&t| t >= n) {
                return Err(AutomataError::InvalidState(t));
            }
        }
        Ok(GuideAutomaton { alphabet, initial, mask, delta })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.mask.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn mask(&self, g: StateId) -> &[bool] {
        &self.mask[g]
    }

    pub fn allows_terminal(&self, g: StateId) -> bool {
        self.mask[g][self.alphabet.terminal_slot()]
    }

    pub fn step(&self, g: StateId, s: Symbol) -> StateId {
        self.delta[g][s.index()]
    }

    pub fn walk(&self, u: &[Symbol]) -> StateId {
        u.iter().fold(self.initial, |g, &s| self.step(g, s))
    }

    /// True when every symbol of `u` and then termination are allowed.
    pub fn accepts(&self, u: &[Symbol]) -> bool {
        let mut g = self.initial;
        for &s in u {
            if !self.mask[g][s.index()] {
                return false;
            }
            g = self.step(g, s);
        }
        self.allows_terminal(g)
    }
}

fn masked_step(
    d: &Distribution,
    mask: &[bool],
    strategy: SamplingStrategy,
) -> Result<Option<Distribution>, SimplexError> {
    match normalize(&d.masked(mask)) {
        Ok(masked) => apply_sampling(strategy, &masked).map(Some),
        Err(SimplexError::AllZero) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `samp(L × G)`, evaluated on demand.
pub struct Composed<L> {
    model: L,
    guide: GuideAutomaton,
    strategy: SamplingStrategy,
    cache: Mutex<HashMap<Word, Option<Distribution>>>,
}

pub fn compose<L: LanguageModel>(
    model: L,
    guide: GuideAutomaton,
    strategy: SamplingStrategy,
) -> Result<Composed<L>, AutomataError> {
    if model.alphabet() != guide.alphabet() {
        return Err(AutomataError::AlphabetMismatch);
    }
    strategy.validate()?;
    Ok(Composed { model, guide, strategy, cache: Mutex::new(HashMap::new()) })
}

impl<L: LanguageModel> Composed<L> {
    pub fn guide(&self) -> &GuideAutomaton {
        &self.guide
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.strategy
    }

    pub fn inner(&self) -> &L {
        &self.model
    }

    fn at(&self, prefix: &[Symbol], g: StateId) -> Result<Option<Distribution>, ModelError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(prefix) {
            return Ok(hit.clone());
        }
        let value = match self.model.next(prefix)? {
            None => None,
            Some(d) => masked_step(&d, self.guide.mask(g), self.strategy)
                .map_err(|e| ModelError::Backend(Box::new(e)))?,
        };
        self.cache.lock().expect("cache lock").insert(prefix.to_vec(), value.clone());
        Ok(value)
    }
}

impl<L: LanguageModel> LanguageModel for Composed<L> {
    fn alphabet(&self) -> &Alphabet {
        self.guide.alphabet()
    }

    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError> {
        if let Some(s) = u.iter().find(|s| !self.guide.alphabet().contains(**s)) {
            return Err(ModelError::UnknownSymbol(s.0));
        }
        let mut g = self.guide.initial();
        for i in 0..u.len() {
            match self.at(&u[..i], g)? {
                Some(d) if d.in_support(u[i]) => g = self.guide.step(g, u[i]),
                _ => return Ok(None),
            }
        }
        self.at(u, g)
    }
}

/// Eager product of a PDFA with a guide over all structurally reachable
/// pairs, with `strategy` applied at every state.
///
/// A pair whose masked distribution vanishes gets the inert distribution
/// `{$: 1}` when it cannot be reached with positive probability.
pub fn materialize(a: &Pdfa, guide: &GuideAutomaton, strategy: SamplingStrategy) -> Result<Pdfa, AutomataError> {
    if a.alphabet() != guide.alphabet() {
        return Err(AutomataError::AlphabetMismatch);
    }
    let mut index: HashMap<(StateId, StateId), usize> = HashMap::new();
    let mut pairs = vec![(a.initial(), guide.initial())];
    index.insert((a.initial(), guide.initial()), 0);
    let mut dists: Vec<Option<Distribution>> = Vec::new();
    let mut rows: Vec<Vec<Option<StateId>>> = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let (q, g) = pairs[i];
        dists.push(masked_step(a.dist(q), guide.mask(g), strategy)?);
        let mut row = Vec::with_capacity(a.alphabet().len());
        for s in a.alphabet().symbols() {
            let target = a.next_state(q, s).map(|t| {
                let key = (t, guide.step(g, s));
                let next = pairs.len();
                *index.entry(key).or_insert_with(|| {
                    pairs.push(key);
                    next
                })
            });
            row.push(target);
        }
        rows.push(row);
        i += 1;
    }

    let mut positive = vec![false; pairs.len()];
    let mut queue = VecDeque::from([0]);
    positive[0] = true;
    while let Some(p) = queue.pop_front() {
        let Some(d) = &dists[p] else {
            let (q, g) = pairs[p];
            return Err(AutomataError::DeadComposition(format!("target state {q}, guide state {g}")));
        };
        for s in d.support() {
            let t = rows[p][s.index()].expect("support of a restriction stays defined");
            if !positive[t] {
                positive[t] = true;
                queue.push_back(t);
            }
        }
    }

    let slots = a.alphabet().slots();
    let pi: Vec<Distribution> = dists
        .into_iter()
        .map(|d| d.unwrap_or_else(|| Distribution::point(slots, slots - 1)))
        .collect();
    Pdfa::new(a.alphabet().clone(), 0, pi, rows)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::simplex::Rational;

    fn exact(d: &Distribution) -> Vec<Rational> {
        d.exact().expect("rational mode").to_vec()
    }

    fn r(n: i64, k: i64) -> Rational {
        Rational::new(n, k)
    }

    #[test]
    fn fig4_composition_is_exact() {
        let c = compose(fig4_l(), fig4_g(), SamplingStrategy::TopR(2)).unwrap();
        let ab = alphabet_ab();
        let at = |s: &str| c.next(&ab.parse_word(s).unwrap()).unwrap().unwrap();
        assert_eq!(exact(&at("")), vec![r(7, 8), r(0, 1), r(1, 8)]);
        assert_eq!(exact(&at("a")), vec![r(7, 9), r(2, 9), r(0, 1)]);
        assert_eq!(exact(&at("a b")), vec![r(3, 8), r(0, 1), r(5, 8)]);
        assert_eq!(exact(&at("a b a")), vec![r(3, 8), r(0, 1), r(5, 8)]);
        assert!(c.next(&ab.parse_word("b").unwrap()).unwrap().is_none());
    }

    #[test]
    fn all_ones_identity_is_unchanged() {
        let ones = GuideAutomaton::new(alphabet_ab(), 0, vec![vec![true; 3]], vec![vec![0, 0]]).unwrap();
        let a = fig1_a();
        let c = compose(&a, ones, SamplingStrategy::Identity).unwrap();
        let ab = alphabet_ab();
        for s in ["", "a", "b", "b a", "a a a"] {
            let u = ab.parse_word(s).unwrap();
            assert_eq!(c.next(&u).unwrap(), a.next(&u).unwrap());
        }
    }

    #[test]
    fn composition_rejects_foreign_alphabet() {
        let other = Alphabet::new(["x", "y"]).unwrap();
        let g = GuideAutomaton::new(other, 0, vec![vec![true; 3]], vec![vec![0, 0]]).unwrap();
        assert!(matches!(compose(fig1_a(), g, SamplingStrategy::Identity), Err(AutomataError::AlphabetMismatch)));
    }

    #[test]
    fn materialized_product_matches_on_demand() {
        let b = materialize(&fig4_l(), &fig4_g(), SamplingStrategy::TopR(2)).unwrap();
        let c = compose(fig4_l(), fig4_g(), SamplingStrategy::TopR(2)).unwrap();
        let ab = alphabet_ab();
        for s in ["", "a", "a b", "a b a", "a a b a", "b", "a b b"] {
            let u = ab.parse_word(s).unwrap();
            assert_eq!(b.next(&u).unwrap(), c.next(&u).unwrap(), "at `{s}`");
        }
        assert_eq!(exact(b.next_dist(&ab.parse_word("a").unwrap()).unwrap().unwrap()), vec![r(7, 9), r(2, 9), r(0, 1)]);
    }

    #[test]
    fn dead_reachable_pair_is_an_error() {
        let no_end = GuideAutomaton::new(alphabet_ab(), 0, vec![vec![false, true, false]], vec![vec![0, 0]]).unwrap();
        let only_a = pdfa(&[[0.5, 0.0, 0.5]], &[[Some(0), Some(0)]]);
        assert!(matches!(
            materialize(&only_a, &no_end, SamplingStrategy::Identity),
            Err(AutomataError::DeadComposition(_))
        ));
    }

    #[test]
    fn guide_acceptance() {
        let g = fig4_g();
        let ab = alphabet_ab();
        assert!(g.accepts(&[]));
        assert!(g.accepts(&ab.parse_word("a b").unwrap()));
        assert!(!g.accepts(&ab.parse_word("b").unwrap()));
    }
}
