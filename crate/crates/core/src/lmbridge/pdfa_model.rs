use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{LmError, SymbolMap, TokenDistribution, TokenId, TokenModel};
use crate::automata::{Pdfa, StateId};
use crate::simplex::{Alphabet, Distribution, Symbol};

/// Token model answering from a fully defined PDFA whose symbols are tokens.
#[derive(Debug, Clone)]
pub struct PdfaTokenModel {
    pdfa: Pdfa,
    ids: Vec<TokenId>,
    symbol_of: HashMap<TokenId, Symbol>,
    eos: TokenId,
    bos: TokenId,
}

impl PdfaTokenModel {
    /// Symbol `i` of `pdfa` is token `ids[i]`; the terminal is `eos`.
    pub fn new(pdfa: Pdfa, ids: Vec<TokenId>, eos: TokenId, bos: TokenId) -> Result<Self, LmError> {
        if !pdfa.is_total() {
            return Err(LmError::VocabMismatch("token PDFA must be fully defined".into()));
        }
        if ids.len() != pdfa.alphabet().len() {
            return Err(LmError::VocabMismatch(format!("{} ids for {} tokens", ids.len(), pdfa.alphabet().len())));
        }
        let symbol_of: HashMap<TokenId, Symbol> = ids.iter().enumerate().map(|(i, &t)| (t, Symbol(i as u32))).collect();
        if symbol_of.len() != ids.len() || symbol_of.contains_key(&eos) || symbol_of.contains_key(&bos) || eos == bos {
            return Err(LmError::VocabMismatch("token ids must be distinct".into()));
        }
        Ok(PdfaTokenModel { pdfa, ids, symbol_of, eos, bos })
    }

    /// Symbol `i` is token `i`, EOS is `m` and BOS is `m + 1`.
    pub fn identity(pdfa: Pdfa) -> Result<Self, LmError> {
        let m = pdfa.alphabet().len() as TokenId;
        PdfaTokenModel::new(pdfa, (0..m).collect(), m, m + 1)
    }

    pub fn pdfa(&self) -> &Pdfa {
        &self.pdfa
    }
}

impl TokenModel for PdfaTokenModel {
    fn bos(&self) -> TokenId {
        self.bos
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn vocab(&self) -> Option<Vec<TokenId>> {
        Some(self.ids.iter().copied().chain([self.eos, self.bos]).collect())
    }

    fn next_tokens(&self, context: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError> {
        let body = context.strip_prefix(&[self.bos]).unwrap_or(context);
        let mut q = self.pdfa.initial();
        for t in body {
            let s = self
                .symbol_of
                .get(t)
                .ok_or_else(|| LmError::VocabMismatch(format!("token {t} is not emitted by the model")))?;
            q = self.pdfa.next_state(q, *s).expect("total");
        }
        let d = self.pdfa.dist(q);
        let mut out: TokenDistribution = self.ids.iter().enumerate().map(|(i, &t)| (t, d.probs()[i])).collect();
        out.insert(self.eos, d.terminal());
        Ok(Arc::new(out))
    }
}

/// Token-level PDFA whose symbol view under `map` is `a`: every state of `a`
/// becomes a trie over the token sequences of its symbols, and products of
/// trie steps telescope to `π(q)(σ)`.
///
/// Requires a prefix-free map; tokens outside a trie lead to an absorbing
/// sink that only emits EOS.
pub fn token_expansion(a: &Pdfa, map: &SymbolMap) -> Result<PdfaTokenModel, LmError> {
    if a.alphabet() != map.alphabet() {
        return Err(LmError::VocabMismatch("map and PDFA alphabets differ".into()));
    }
    if !a.is_total() {
        return Err(LmError::VocabMismatch("symbol PDFA must be fully defined".into()));
    }
    if !map.is_prefix_free() {
        return Err(LmError::VocabMismatch("token expansion needs a prefix-free symbol map".into()));
    }
    let eos = map.eos();
    let reserved = |t: &TokenId| *t == eos || *t == map.bos();
    if (0..a.alphabet().len()).any(|slot| map.tokens(slot).iter().any(reserved)) {
        return Err(LmError::VocabMismatch("symbol token sequences may not contain BOS or EOS".into()));
    }
    let ids: Vec<TokenId> = map.token_ids().into_iter().filter(|&t| t != eos && t != map.bos()).collect();
    let column: HashMap<TokenId, usize> = ids.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let slots = a.alphabet().slots();

    // trie nodes of one state: token-sequence prefix -> slots below it
    let mut prefixes: BTreeMap<Vec<TokenId>, Vec<usize>> = BTreeMap::new();
    for slot in 0..slots {
        let seq = map.tokens(slot);
        for k in 0..seq.len() {
            prefixes.entry(seq[..k].to_vec()).or_default().push(slot);
        }
    }
    let nodes: Vec<Vec<TokenId>> = prefixes.keys().cloned().collect();
    let node_index: HashMap<&[TokenId], usize> = nodes.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let per_state = nodes.len();
    let root = node_index[&[][..]];
    let sink = a.num_states() * per_state;
    let state_of = |q: StateId, node: usize| q * per_state + node;

    let mut pi = Vec::with_capacity(sink + 1);
    let mut tau = Vec::with_capacity(sink + 1);
    for q in 0..a.num_states() {
        let d = a.dist(q);
        for prefix in &nodes {
            let below = &prefixes[prefix];
            let mass: f64 = below.iter().map(|&s| d.probs()[s]).sum();
            let mut probs = vec![0.0; ids.len() + 1];
            let mut row = vec![Some(sink); ids.len()];
            if mass > 0.0 {
                for &slot in below {
                    let seq = map.tokens(slot);
                    let t = seq[prefix.len()];
                    let share = d.probs()[slot] / mass;
                    if t == eos {
                        probs[ids.len()] += share;
                        continue;
                    }
                    let c = column[&t];
                    probs[c] += share;
                    let child = &seq[..=prefix.len()];
                    row[c] = Some(match node_index.get(child) {
                        Some(&n) => state_of(q, n),
                        None => {
                            let s = Symbol(slot as u32);
                            state_of(a.next_state(q, s).expect("total"), root)
                        }
                    });
                }
            } else {
                probs[ids.len()] = 1.0;
            }
            pi.push(Distribution::new(probs)?);
            tau.push(row);
        }
    }
    pi.push(Distribution::point(ids.len() + 1, ids.len()));
    tau.push(vec![Some(sink); ids.len()]);

    let names: Vec<String> = ids.iter().map(|t| format!("t{t}")).collect();
    let token_pdfa = Pdfa::new(Alphabet::new(names)?, state_of(a.initial(), root), pi, tau)
        .expect("expansion is total");
    PdfaTokenModel::new(token_pdfa, ids, eos, map.bos())
}
