//! Back-off n-gram language model.
//!
//! Values are stored as log10 probabilities and log10 back-off weights in a
//! trie keyed by the context read right to left, so a lookup walks at most
//! `order - 1` edges. [`train_lm`] estimates an interpolated Kneser–Ney model;
//! [`NGramModel::from_arpa`] and [`NGramModel::to_arpa`] convert to and from
//! the record layout of the ARPA text format.

mod train;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use train::train_lm;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// log10 probability written for `<s>`, which is never predicted.
pub const BOS_LOG10_PROB: f64 = -99.0;

/// log10 probability given to `<unk>` when a loaded model does not list it.
pub const MISSING_UNK_LOG10_PROB: f64 = -100.0;

pub type TokenId = u32;

const UNK_ID: TokenId = 0;
const BOS_ID: TokenId = 1;
const EOS_ID: TokenId = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("language model training needs at least one non-empty transcript")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("discount {0} is outside [0, 1]")]
    DiscountOutOfRange(f64),
    #[error("ARPA document has no n-grams")]
    EmptyDocument,
    #[error("order-{order} record has {found} tokens")]
    WrongTokenCount { order: usize, found: usize },
    #[error("order-{order} record has a non-finite value")]
    NonFiniteValue { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    Word,
    Char,
}

impl TokenMode {
    /// Splits a normalized transcript into model tokens: single spaces in
    /// word mode, characters (space included) in char mode.
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            TokenMode::Word => text.split(' ').filter(|w| !w.is_empty()).map(String::from).collect(),
            TokenMode::Char => text.chars().map(|c| c.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: BTreeMap<String, TokenId>,
}

impl Vocab {
    fn with_sentinels() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            ids: BTreeMap::new(),
        };
        for s in [UNK, BOS, EOS] {
            v.intern(s);
        }
        v
    }

    fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.into());
        self.ids.insert(token.into(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or `<unk>` for out-of-vocabulary tokens.
    pub fn id(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokens that can be predicted: everything except `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.tokens.len() as TokenId).filter(|&id| id != BOS_ID)
    }

    pub fn is_sentinel(token: &str) -> bool {
        matches!(token, UNK | BOS | EOS)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextNode {
    /// log10 back-off weight of the n-gram this node's context spells.
    backoff: f64,
    /// Extends the context one token further into the past.
    children: BTreeMap<TokenId, usize>,
    /// log10 P(token | context) for n-grams stored at this context.
    probs: BTreeMap<TokenId, f64>,
}

/// One record of an ARPA file: tokens in reading order plus values.
#[derive(Debug, Clone, PartialEq)]
pub struct ArpaEntry {
    pub log10_prob: f64,
    pub tokens: Vec<String>,
    pub log10_backoff: Option<f64>,
}

/// Records grouped by order; `ngrams[n - 1]` holds the order-`n` records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArpaDocument {
    pub ngrams: Vec<Vec<ArpaEntry>>,
}

impl ArpaDocument {
    pub fn counts(&self) -> Vec<usize> {
        self.ngrams.iter().map(Vec::len).collect()
    }

    pub fn order(&self) -> usize {
        self.ngrams.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    mode: TokenMode,
    vocab: Vocab,
    nodes: Vec<ContextNode>,
}

impl NGramModel {
    fn empty(order: usize, mode: TokenMode) -> Self {
        Self {
            order,
            mode,
            vocab: Vocab::with_sentinels(),
            nodes: vec![ContextNode::default()],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn token_mode(&self) -> TokenMode {
        self.mode
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn bos(&self) -> TokenId {
        BOS_ID
    }

    pub fn eos(&self) -> TokenId {
        EOS_ID
    }

    pub fn unk(&self) -> TokenId {
        UNK_ID
    }

    /// Node for `context` (reading order), creating the path as needed.
    fn node_mut(&mut self, context: &[TokenId]) -> &mut ContextNode {
        let mut idx = 0;
        for &tok in context.iter().rev() {
            idx = match self.nodes[idx].children.get(&tok) {
                Some(&child) => child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(ContextNode::default());
                    self.nodes[idx].children.insert(tok, child);
                    child
                }
            };
        }
        &mut self.nodes[idx]
    }

    fn set_prob(&mut self, ngram: &[TokenId], log10_prob: f64) {
        let (&token, context) = ngram.split_last().expect("n-gram is non-empty");
        self.node_mut(context).probs.insert(token, log10_prob);
    }

    fn set_backoff(&mut self, ngram: &[TokenId], log10_backoff: f64) {
        self.node_mut(ngram).backoff = log10_backoff;
    }

    /// Back-off score of `token` after `context` (reading order). Only the
    /// last `order - 1` context tokens are used.
    pub fn score_id(&self, token: TokenId, context: &[TokenId]) -> f64 {
        let keep = context.len().min(self.order.saturating_sub(1));
        let context = &context[context.len() - keep..];

        let root = &self.nodes[0];
        let mut score = root.probs.get(&token).copied().unwrap_or_else(|| {
            // every loaded or trained model lists <unk>
            root.probs.get(&UNK_ID).copied().unwrap_or(MISSING_UNK_LOG10_PROB)
        });
        let mut pending = 0.0;
        let mut idx = 0;
        for &tok in context.iter().rev() {
            match self.nodes[idx].children.get(&tok) {
                Some(&child) => idx = child,
                None => break,
            }
            let node = &self.nodes[idx];
            match node.probs.get(&token) {
                Some(&p) => {
                    score = p;
                    pending = 0.0;
                }
                None => pending += node.backoff,
            }
        }
        score + pending
    }

    /// log10 P(token | context) with out-of-vocabulary tokens mapped to `<unk>`.
    pub fn score_token(&self, token: &str, context: &[&str]) -> f64 {
        let ids: Vec<TokenId> = context.iter().map(|t| self.vocab.id(t)).collect();
        self.score_id(self.vocab.id(token), &ids)
    }

    /// Sum of token scores after `<s>`, without the `</s>` term.
    pub fn prefix_logprob(&self, tokens: &[&str]) -> f64 {
        let mut history = vec![BOS_ID];
        let mut total = 0.0;
        for t in tokens {
            let id = self.vocab.id(t);
            total += self.score_id(id, &history);
            history.push(id);
        }
        total
    }

    /// log10 probability of a whole sentence: `<s>` priming, `</s>` at the end.
    pub fn sequence_logprob(&self, tokens: &[&str]) -> f64 {
        let mut history = vec![BOS_ID];
        history.extend(tokens.iter().map(|t| self.vocab.id(t)));
        self.prefix_logprob(tokens) + self.score_id(EOS_ID, &history)
    }

    pub fn text_logprob(&self, text: &str) -> f64 {
        let tokens = self.mode.tokenize(text);
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        self.sequence_logprob(&refs)
    }

    /// `10^(-Σ log10 P / N)` where `N` counts every token plus one `</s>` per
    /// transcript.
    pub fn perplexity<S: AsRef<str>>(&self, transcripts: &[S]) -> Result<f64, LmError> {
        if transcripts.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for t in transcripts {
            let tokens = self.mode.tokenize(t.as_ref());
            count += tokens.len() + 1;
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            total += self.sequence_logprob(&refs);
        }
        Ok(libm::pow(10.0, -total / count as f64))
    }

    /// Copy with every n-gram of the highest order dropped; back-off weights
    /// and the context length used for lookups stay as they are.
    pub fn without_highest_order(&self) -> Self {
        let mut out = self.clone();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, depth)) = stack.pop() {
            if depth + 1 == self.order {
                out.nodes[idx].probs.clear();
            }
            stack.extend(self.nodes[idx].children.values().map(|&c| (c, depth + 1)));
        }
        out
    }

    /// Builds a model from parsed records. Orders are taken from the record
    /// grouping; a missing `<unk>` scores at [`MISSING_UNK_LOG10_PROB`].
    pub fn from_arpa(doc: &ArpaDocument, mode: TokenMode) -> Result<Self, LmError> {
        if doc.ngrams.is_empty() || doc.ngrams[0].is_empty() {
            return Err(LmError::EmptyDocument);
        }
        let mut model = Self::empty(doc.order(), mode);
        for (i, entries) in doc.ngrams.iter().enumerate() {
            let order = i + 1;
            for entry in entries {
                if entry.tokens.len() != order {
                    return Err(LmError::WrongTokenCount {
                        order,
                        found: entry.tokens.len(),
                    });
                }
                let finite = entry.log10_prob.is_finite() && entry.log10_backoff.is_none_or(|b| b.is_finite());
                if !finite {
                    return Err(LmError::NonFiniteValue { order });
                }
                let ids: Vec<TokenId> = entry.tokens.iter().map(|t| model.vocab.intern(t)).collect();
                model.set_prob(&ids, entry.log10_prob);
                if let Some(bo) = entry.log10_backoff {
                    model.set_backoff(&ids, bo);
                }
            }
        }
        model.nodes[0].probs.entry(UNK_ID).or_insert(MISSING_UNK_LOG10_PROB);
        Ok(model)
    }

    /// Records in a fixed order: by order, then by token ids. Back-off
    /// weights are listed below the highest order wherever they are non-zero.
    pub fn to_arpa(&self) -> ArpaDocument {
        let mut by_order: Vec<Vec<(Vec<TokenId>, f64)>> = vec![Vec::new(); self.order];
        // (node, context in reading order)
        let mut stack: Vec<(usize, Vec<TokenId>)> = vec![(0, Vec::new())];
        while let Some((idx, context)) = stack.pop() {
            let node = &self.nodes[idx];
            for (&tok, &p) in &node.probs {
                let mut ngram = context.clone();
                ngram.push(tok);
                if ngram.len() <= self.order {
                    by_order[ngram.len() - 1].push((ngram, p));
                }
            }
            for (&tok, &child) in &node.children {
                let mut longer = Vec::with_capacity(context.len() + 1);
                longer.push(tok);
                longer.extend_from_slice(&context);
                stack.push((child, longer));
            }
        }
        let ngrams = by_order
            .into_iter()
            .enumerate()
            .map(|(i, mut entries)| {
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                entries
                    .into_iter()
                    .map(|(ids, p)| {
                        let log10_backoff = if i + 1 < self.order {
                            self.backoff_of(&ids).filter(|&b| b != 0.0)
                        } else {
                            None
                        };
                        ArpaEntry {
                            log10_prob: p,
                            tokens: ids.iter().map(|&id| self.vocab.token(id).into()).collect(),
                            log10_backoff,
                        }
                    })
                    .collect()
            })
            .collect();
        ArpaDocument { ngrams }
    }

    fn backoff_of(&self, ngram: &[TokenId]) -> Option<f64> {
        let mut idx = 0;
        for tok in ngram.iter().rev() {
            idx = *self.nodes[idx].children.get(tok)?;
        }
        Some(self.nodes[idx].backoff)
    }

    /// Total probability mass over every predictable token after `context`.
    pub fn total_mass(&self, context: &[TokenId]) -> f64 {
        self.vocab
            .predictable()
            .map(|t| libm::pow(10.0, self.score_id(t, context)))
            .sum()
    }
}
