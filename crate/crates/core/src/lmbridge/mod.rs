//! Token-level models and their symbol-level view.
//!
//! A [`SymbolMap`] assigns every symbol a nonempty token sequence; the
//! probability of a symbol after a context is the product of the token-step
//! probabilities along its sequence, renormalized over `Σ ∪ {$}`.

mod pdfa_model;
mod remote;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

pub use pdfa_model::{token_expansion, PdfaTokenModel};
pub use remote::{remote_token_model, serve_model, MockReply, MockServer, RemoteTokenModel, DISTRIBUTION_PATH};

use crate::automata::{LanguageModel, ModelError};
use crate::simplex::{normalize, Alphabet, Distribution, SimplexError, Symbol, Weights, TERMINAL_NAME};

pub type TokenId = u32;

/// Next-token probabilities; absent tokens have probability 0.
pub type TokenDistribution = HashMap<TokenId, f64>;

/// Reserved symbol naming the begin-of-sequence token in map files.
pub const BOS_NAME: &str = "<bos>";

#[derive(Debug, Error)]
pub enum LmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

pub trait TokenModel: Send + Sync {
    fn bos(&self) -> TokenId;
    fn eos(&self) -> TokenId;
    /// Every token the model can emit, when known.
    fn vocab(&self) -> Option<Vec<TokenId>>;
    fn next_tokens(&self, context: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError>;
}

impl<T: TokenModel + ?Sized> TokenModel for &T {
    fn bos(&self) -> TokenId {
        (**self).bos()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn vocab(&self) -> Option<Vec<TokenId>> {
        (**self).vocab()
    }
    fn next_tokens(&self, context: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError> {
        (**self).next_tokens(context)
    }
}

impl<T: TokenModel + ?Sized> TokenModel for Arc<T> {
    fn bos(&self) -> TokenId {
        (**self).bos()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn vocab(&self) -> Option<Vec<TokenId>> {
        (**self).vocab()
    }
    fn next_tokens(&self, context: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError> {
        (**self).next_tokens(context)
    }
}

/// Symbol strings and token sequences; the terminal maps to `[EOS]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolMap {
    alphabet: Alphabet,
    chars: Vec<String>,
    tokens: Vec<Vec<TokenId>>,
    bos: TokenId,
}

impl SymbolMap {
    /// `chars` and `tokens` are indexed by symbol.
    pub fn new(
        alphabet: Alphabet,
        chars: Vec<String>,
        tokens: Vec<Vec<TokenId>>,
        bos: TokenId,
        eos: TokenId,
    ) -> Result<Self, LmError> {
        if chars.len() != alphabet.len() || tokens.len() != alphabet.len() {
            return Err(LmError::VocabMismatch(format!("{} symbols need as many entries", alphabet.len())));
        }
        if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
            return Err(LmError::VocabMismatch(format!("symbol `{}` has no tokens", alphabet.name(Symbol(i as u32)))));
        }
        let mut tokens = tokens;
        tokens.push(vec![eos]);
        let map = SymbolMap { alphabet, chars, tokens, bos };
        for (a, b) in map.collisions() {
            log::warn!("symbols `{a}` and `{b}` share a token sequence");
        }
        Ok(map)
    }

    /// Symbol `i` is token `i`, EOS is `m` and BOS is `m + 1`.
    pub fn identity(alphabet: Alphabet) -> Self {
        let m = alphabet.len() as TokenId;
        let chars = alphabet.names().to_vec();
        let tokens = (0..m).map(|t| vec![t]).collect();
        SymbolMap::new(alphabet, chars, tokens, m + 1, m).expect("identity map is well formed")
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.tokens[self.alphabet.terminal_slot()][0]
    }

    pub fn chars(&self, s: Symbol) -> &str {
        &self.chars[s.index()]
    }

    /// Token sequence of a slot of `Σ ∪ {$}`.
    pub fn tokens(&self, slot: usize) -> &[TokenId] {
        &self.tokens[slot]
    }

    /// `⟨λ⟩⟨u₁⟩…⟨uₖ⟩`.
    pub fn context(&self, u: &[Symbol]) -> Vec<TokenId> {
        let mut ctx = vec![self.bos];
        for s in u {
            ctx.extend_from_slice(&self.tokens[s.index()]);
        }
        ctx
    }

    /// Pairs of slot names with identical token sequences.
    pub fn collisions(&self) -> Vec<(String, String)> {
        let mut seen: HashMap<&[TokenId], usize> = HashMap::new();
        let mut out = Vec::new();
        for (slot, t) in self.tokens.iter().enumerate() {
            if let Some(&first) = seen.get(t.as_slice()) {
                out.push((self.alphabet.slot_name(first).to_string(), self.alphabet.slot_name(slot).to_string()));
            } else {
                seen.insert(t, slot);
            }
        }
        out
    }

    /// No token sequence is a proper prefix of another, and none repeat.
    pub fn is_prefix_free(&self) -> bool {
        self.tokens.iter().enumerate().all(|(i, a)| {
            self.tokens.iter().enumerate().all(|(j, b)| i == j || !b.starts_with(a))
        })
    }

    /// Every token id mentioned, BOS included.
    pub fn token_ids(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = self.tokens.iter().flatten().copied().chain([self.bos]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Lines `symbol<TAB>chars<TAB>ids`, with `<bos>` and `$` lines for the
    /// reserved tokens; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, LmError> {
        let mut names = Vec::new();
        let mut chars = Vec::new();
        let mut tokens = Vec::new();
        let (mut bos, mut eos) = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| LmError::Parse { line, message };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let [name, text, ids] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let ids = ids
                .split(',')
                .map(|t| t.trim().parse::<TokenId>().map_err(|_| err(format!("bad token id `{t}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            match name {
                BOS_NAME | TERMINAL_NAME => {
                    let [id] = ids[..] else {
                        return Err(err(format!("`{name}` needs exactly one token")));
                    };
                    let slot = if name == BOS_NAME { &mut bos } else { &mut eos };
                    if slot.replace(id).is_some() {
                        return Err(err(format!("duplicate `{name}` line")));
                    }
                }
                _ => {
                    names.push(name.to_string());
                    chars.push(text.to_string());
                    tokens.push(ids);
                }
            }
        }
        let end = text.lines().count().max(1);
        let missing = |what: &str| LmError::Parse { line: end, message: format!("missing `{what}` line") };
        let bos = bos.ok_or_else(|| missing(BOS_NAME))?;
        let eos = eos.ok_or_else(|| missing(TERMINAL_NAME))?;
        let alphabet = Alphabet::new(names)?;
        SymbolMap::new(alphabet, chars, tokens, bos, eos)
    }

    pub fn to_text(&self) -> String {
        let ids = |t: &[TokenId]| t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "{BOS_NAME}\t\t{}", self.bos);
        for s in self.alphabet.symbols() {
            let _ = writeln!(out, "{}\t{}\t{}", self.alphabet.name(s), self.chars[s.index()], ids(&self.tokens[s.index()]));
        }
        let _ = writeln!(out, "{TERMINAL_NAME}\t\t{}", self.eos());
        out
    }
}

/// Symbol-level language model over a token model.
pub struct SymbolModel<M> {
    tokens: M,
    map: SymbolMap,
}

pub fn symbol_model<M: TokenModel>(tokens: M, map: SymbolMap) -> Result<SymbolModel<M>, LmError> {
    if tokens.bos() != map.bos() || tokens.eos() != map.eos() {
        return Err(LmError::VocabMismatch(format!(
            "map uses BOS {} / EOS {}, model {} / {}",
            map.bos(),
            map.eos(),
            tokens.bos(),
            tokens.eos()
        )));
    }
    if let Some(vocab) = tokens.vocab() {
        if let Some(t) = map.token_ids().into_iter().find(|t| !vocab.contains(t)) {
            return Err(LmError::VocabMismatch(format!("token {t} is not in the model vocabulary")));
        }
    }
    Ok(SymbolModel { tokens, map })
}

impl<M: TokenModel> SymbolModel<M> {
    pub fn map(&self) -> &SymbolMap {
        &self.map
    }

    pub fn token_model(&self) -> &M {
        &self.tokens
    }

    /// Product of the step probabilities of `seq` after `ctx`; stops at a zero step.
    fn sequence_mass(&self, ctx: &mut Vec<TokenId>, seq: &[TokenId]) -> Result<f64, LmError> {
        let base = ctx.len();
        let mut mass = 1.0;
        for &t in seq {
            let p = self.tokens.next_tokens(ctx)?.get(&t).copied().unwrap_or(0.0);
            mass *= p;
            if mass == 0.0 {
                break;
            }
            ctx.push(t);
        }
        ctx.truncate(base);
        Ok(mass)
    }

    /// Unnormalized masses of every slot after `u`; `None` when the context
    /// itself has a zero step.
    pub fn raw_masses(&self, u: &[Symbol]) -> Result<Option<Vec<f64>>, LmError> {
        let mut ctx = vec![self.map.bos()];
        for s in u {
            let seq = self.map.tokens(s.index());
            if self.sequence_mass(&mut ctx, seq)? == 0.0 {
                return Ok(None);
            }
            ctx.extend_from_slice(seq);
        }
        let slots = self.map.alphabet().slots();
        let masses = (0..slots).map(|slot| self.sequence_mass(&mut ctx, self.map.tokens(slot))).collect::<Result<_, _>>()?;
        Ok(Some(masses))
    }
}

impl<M: TokenModel> LanguageModel for SymbolModel<M> {
    fn alphabet(&self) -> &Alphabet {
        self.map.alphabet()
    }

    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError> {
        if let Some(s) = u.iter().find(|s| !self.map.alphabet().contains(**s)) {
            return Err(ModelError::UnknownSymbol(s.0));
        }
        let backend = |e: LmError| ModelError::Backend(Box::new(e));
        let Some(masses) = self.raw_masses(u).map_err(backend)? else {
            return Ok(None);
        };
        match normalize(&Weights::new(masses)) {
            Ok(d) => Ok(Some(d)),
            Err(SimplexError::AllZero) => Ok(None),
            Err(e) => Err(backend(e.into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::fixtures::*;
    use crate::automata::Pdfa;

    fn words(m: u32, max_len: usize) -> Vec<Vec<Symbol>> {
        let mut all = vec![vec![]];
        let mut layer: Vec<Vec<Symbol>> = vec![vec![]];
        for _ in 0..max_len {
            layer = layer
                .iter()
                .flat_map(|w| (0..m).map(move |s| [w.clone(), vec![Symbol(s)]].concat()))
                .collect();
            all.extend(layer.iter().cloned());
        }
        all
    }

    /// Token model with fixed answers per context, zero elsewhere.
    struct Table {
        answers: HashMap<Vec<TokenId>, Arc<TokenDistribution>>,
    }

    impl TokenModel for Table {
        fn bos(&self) -> TokenId {
            100
        }
        fn eos(&self) -> TokenId {
            101
        }
        fn vocab(&self) -> Option<Vec<TokenId>> {
            None
        }
        fn next_tokens(&self, context: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError> {
            Ok(self.answers.get(context).cloned().unwrap_or_default())
        }
    }

    #[test]
    fn identity_map_matches_pdfa() {
        let a = fig1_a();
        let lm = symbol_model(PdfaTokenModel::identity(a.clone()).unwrap(), SymbolMap::identity(a.alphabet().clone())).unwrap();
        for u in words(2, 8) {
            assert_eq!(lm.next(&u).unwrap(), a.next(&u).unwrap(), "at {u:?}");
        }
    }

    #[test]
    fn two_token_product() {
        let ab = Alphabet::new(["x"]).unwrap();
        let map = SymbolMap::new(ab, vec!["x".into()], vec![vec![1, 2]], 100, 101).unwrap();
        let answers = HashMap::from([
            (vec![100], Arc::new(HashMap::from([(1, 0.5), (101, 0.5)]))),
            (vec![100, 1], Arc::new(HashMap::from([(2, 0.4), (7, 0.6)]))),
        ]);
        let lm = symbol_model(Table { answers }, map).unwrap();
        let raw = lm.raw_masses(&[]).unwrap().unwrap();
        assert!((raw[0] - 0.2).abs() < 1e-15);
        assert_eq!(raw[1], 0.5);
        let d = lm.next(&[]).unwrap().unwrap();
        assert!((d.probs()[0] - 0.2 / 0.7).abs() < 1e-12);
        assert!(lm.next(&[Symbol(0), Symbol(0)]).unwrap().is_none(), "zero step in the context");
    }

    #[test]
    fn medicine_tokenization_matters() {
        let text = include_str!("../../fixtures/table1_prefix_space.tsv");
        let merged = SymbolMap::parse(text).unwrap();
        let split = SymbolMap::parse(include_str!("../../fixtures/table1_no_prefix_space.tsv")).unwrap();
        assert_eq!(merged.tokens(2), &[9007]);
        assert_eq!(split.tokens(2), &[1150, 291, 500]);
        let answers = HashMap::from([
            (vec![50256], Arc::new(HashMap::from([(464, 1.0)]))),
            (vec![50256, 464], Arc::new(HashMap::from([(582, 0.5), (2415, 0.5)]))),
            (vec![50256, 464, 582], Arc::new(HashMap::from([(9007, 0.3), (1150, 0.2), (50256, 0.5)]))),
            (vec![50256, 464, 582, 1150], Arc::new(HashMap::from([(291, 0.5), (3, 0.5)]))),
            (vec![50256, 464, 582, 1150, 291], Arc::new(HashMap::from([(500, 1.0)]))),
        ]);
        struct Gpt(HashMap<Vec<TokenId>, Arc<TokenDistribution>>);
        impl TokenModel for Gpt {
            fn bos(&self) -> TokenId {
                50256
            }
            fn eos(&self) -> TokenId {
                50256
            }
            fn vocab(&self) -> Option<Vec<TokenId>> {
                None
            }
            fn next_tokens(&self, c: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError> {
                Ok(self.0.get(c).cloned().unwrap_or_default())
            }
        }
        let u = merged.alphabet().parse_word("The man").unwrap();
        let a = symbol_model(Gpt(answers.clone()), merged).unwrap().raw_masses(&u).unwrap().unwrap();
        let b = symbol_model(Gpt(answers), split).unwrap().raw_masses(&u).unwrap().unwrap();
        assert!((a[2] - 0.3).abs() < 1e-15);
        assert!((b[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn map_file_round_trip() {
        let map = SymbolMap::parse(include_str!("../../fixtures/table1_no_prefix_space.tsv")).unwrap();
        assert_eq!(SymbolMap::parse(&map.to_text()).unwrap(), map);
        assert!(matches!(SymbolMap::parse("a\tb\n"), Err(LmError::Parse { line: 1, .. })));
        assert!(matches!(SymbolMap::parse("a\ta\t1\n$\t\t2\n"), Err(LmError::Parse { line: 2, .. })));
    }

    #[test]
    fn collisions_are_reported() {
        let ab = Alphabet::new(["x", "y"]).unwrap();
        let map = SymbolMap::new(ab, vec!["x".into(), "y".into()], vec![vec![1], vec![1]], 9, 8).unwrap();
        assert_eq!(map.collisions(), vec![("x".to_string(), "y".to_string())]);
        assert!(!map.is_prefix_free());
    }

    #[test]
    fn vocab_mismatch() {
        let a: Pdfa = fig1_a();
        let ab = a.alphabet().clone();
        let map = SymbolMap::new(ab, vec!["a".into(), "b".into()], vec![vec![0], vec![7]], 3, 2).unwrap();
        assert!(matches!(symbol_model(PdfaTokenModel::identity(a).unwrap(), map), Err(LmError::VocabMismatch(_))));
    }
}
