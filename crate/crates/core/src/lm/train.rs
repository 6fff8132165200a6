//! Interpolated Kneser–Ney estimation with one discount per order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{LmError, NGramModel, TokenId, TokenMode, BOS_ID, BOS_LOG10_PROB, EOS_ID, UNK_ID};

/// Discount used when count-of-counts cannot determine one.
const FALLBACK_DISCOUNT: f64 = 0.5;

type Counts = BTreeMap<Vec<TokenId>, u64>;

/// `n1 / (n1 + 2 n2)` over the adjusted counts of one order.
fn estimate_discount(order: usize, counts: &Counts) -> f64 {
    let n1 = counts.values().filter(|&&c| c == 1).count() as f64;
    let n2 = counts.values().filter(|&&c| c == 2).count() as f64;
    if n1 == 0.0 {
        // with no singletons the estimate is 0 (or undefined), which would give
        // unseen continuations zero probability
        log::warn!("order {order}: no n-grams seen once, using discount {FALLBACK_DISCOUNT}");
        return FALLBACK_DISCOUNT;
    }
    n1 / (n1 + 2.0 * n2)
}

/// Trains an interpolated Kneser–Ney model.
///
/// Sentences are wrapped in `<s>` … `</s>`. The highest order and n-grams
/// starting with `<s>` use raw counts; other lower-order n-grams use
/// continuation counts (number of distinct left neighbours). Each order has a
/// single discount `D = n1 / (n1 + 2 n2)` from its own count-of-counts unless
/// `discount_override` fixes it. Unigrams interpolate with a uniform
/// distribution over the vocabulary (without `<s>`), which is where `<unk>`
/// gets its mass.
pub fn train_lm<S: AsRef<str>>(
    transcripts: &[S],
    order: usize,
    mode: TokenMode,
    discount_override: Option<f64>,
) -> Result<NGramModel, LmError> {
    if order == 0 {
        return Err(LmError::ZeroOrder);
    }
    if let Some(d) = discount_override {
        if !(0.0..=1.0).contains(&d) {
            return Err(LmError::DiscountOutOfRange(d));
        }
    }

    let mut model = NGramModel::empty(order, mode);
    let mut words: BTreeSet<&str> = BTreeSet::new();
    let tokenized: Vec<Vec<alloc::string::String>> = transcripts
        .iter()
        .map(|t| mode.tokenize(t.as_ref()))
        .filter(|t| !t.is_empty())
        .collect();
    if tokenized.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    for sentence in &tokenized {
        words.extend(sentence.iter().map(|s| s.as_str()));
    }
    for w in words {
        model.vocab.intern(w);
    }

    // raw[n - 1]: counts of every n-gram window
    let mut raw: Vec<Counts> = alloc::vec![Counts::new(); order];
    for sentence in &tokenized {
        let mut ids = Vec::with_capacity(sentence.len() + 2);
        ids.push(BOS_ID);
        ids.extend(sentence.iter().map(|t| model.vocab.id(t)));
        ids.push(EOS_ID);
        for n in 1..=order {
            for window in ids.windows(n) {
                if n == 1 && window[0] == BOS_ID {
                    continue;
                }
                *raw[n - 1].entry(window.to_vec()).or_default() += 1;
            }
        }
    }

    // adjusted counts
    let mut adjusted: Vec<Counts> = alloc::vec![Counts::new(); order];
    adjusted[order - 1] = raw[order - 1].clone();
    for n in (1..order).rev() {
        let mut left_extensions: Counts = Counts::new();
        for ngram in raw[n].keys() {
            *left_extensions.entry(ngram[1..].to_vec()).or_default() += 1;
        }
        for (ngram, &count) in &raw[n - 1] {
            let value = if ngram[0] == BOS_ID {
                count
            } else {
                left_extensions.get(ngram).copied().unwrap_or(count)
            };
            adjusted[n - 1].insert(ngram.clone(), value);
        }
    }

    let discounts: Vec<f64> = (1..=order)
        .map(|n| discount_override.unwrap_or_else(|| estimate_discount(n, &adjusted[n - 1])))
        .collect();

    // unigrams
    let d1 = discounts[0];
    let total: u64 = adjusted[0].values().sum();
    let types = adjusted[0].len() as f64;
    let predictable = (model.vocab.len() - 1) as f64;
    let uniform = d1 * types / total as f64 / predictable;
    let mut unigram_prob: BTreeMap<TokenId, f64> = BTreeMap::new();
    for id in model.vocab.predictable() {
        let count = adjusted[0].get(&alloc::vec![id]).copied().unwrap_or(0) as f64;
        let p = (count - d1).max(0.0) / total as f64 + uniform;
        unigram_prob.insert(id, p);
    }
    debug_assert!(unigram_prob.contains_key(&UNK_ID));
    for (&id, &p) in &unigram_prob {
        model.set_prob(&[id], libm::log10(p));
    }
    model.set_prob(&[BOS_ID], BOS_LOG10_PROB);

    // higher orders, each interpolated with the already stored lower order
    for n in 2..=order {
        let d = discounts[n - 1];
        let mut by_context: BTreeMap<&[TokenId], Vec<(TokenId, u64)>> = BTreeMap::new();
        for (ngram, &count) in &adjusted[n - 1] {
            by_context
                .entry(&ngram[..n - 1])
                .or_default()
                .push((ngram[n - 1], count));
        }
        let mut pending = Vec::new();
        for (context, continuations) in &by_context {
            let context_total: u64 = continuations.iter().map(|(_, c)| c).sum();
            let gamma = d * continuations.len() as f64 / context_total as f64;
            for &(token, count) in continuations {
                let lower = libm::pow(10.0, model.score_id(token, &context[1..]));
                let p = (count as f64 - d) / context_total as f64 + gamma * lower;
                let mut ngram = context.to_vec();
                ngram.push(token);
                pending.push((ngram, libm::log10(p)));
            }
            pending_backoffs_push(&mut model, context, gamma);
        }
        for (ngram, lp) in pending {
            model.set_prob(&ngram, lp);
        }
    }
    Ok(model)
}

fn pending_backoffs_push(model: &mut NGramModel, context: &[TokenId], gamma: f64) {
    // gamma is 0 only when the discount is 0, in which case the n-gram
    // estimates already sum to one and back-off is never reached with mass
    let bo = if gamma > 0.0 {
        libm::log10(gamma)
    } else {
        BOS_LOG10_PROB
    };
    model.set_backoff(context, bo);
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    fn p(model: &NGramModel, token: &str, context: &[&str]) -> f64 {
        10f64.powf(model.score_token(token, context))
    }

    /// Corpus {"a b", "a b", "a c"}, order 2, word mode, worked by hand:
    ///
    /// bigram counts: <s> a = 3, a b = 2, a c = 1, b </s> = 2, c </s> = 1
    ///   n1 = 2, n2 = 2, D2 = 2 / (2 + 4) = 1/3
    /// unigram continuation counts: a = 1, b = 1, c = 1, </s> = 2
    ///   n1 = 3, n2 = 1, D1 = 3 / 5; total 5; 4 types
    ///   uniform share = D1 * 4 / 5 / |{<unk>, </s>, a, b, c}| = 12/125
    ///   P(a) = P(b) = P(c) = (1 - 3/5) / 5 + 12/125 = 22/125
    ///   P(</s>) = (2 - 3/5) / 5 + 12/125 = 47/125,  P(<unk>) = 12/125
    /// context a: total 3, two continuations, gamma = (1/3)(2/3) = 2/9
    ///   P(b|a) = (2 - 1/3)/3 + 2/9 * 22/125 = 5/9 + 44/1125
    ///   P(c|a) = (1 - 1/3)/3 + 2/9 * 22/125 = 2/9 + 44/1125
    ///   P(</s>|a) = 2/9 * 47/125,  P(<unk>|a) = 2/9 * 12/125,  P(a|a) = 2/9 * 22/125
    #[test]
    fn hand_checked_kneser_ney_fixture() {
        let model = train_lm(&["a b", "a b", "a c"], 2, TokenMode::Word, None).unwrap();
        let close = |got: f64, want: f64| assert!((got - want).abs() < 1e-9, "{got} vs {want}");

        close(p(&model, "a", &[]), 22.0 / 125.0);
        close(p(&model, "b", &[]), 22.0 / 125.0);
        close(p(&model, "</s>", &[]), 47.0 / 125.0);
        close(p(&model, "<unk>", &[]), 12.0 / 125.0);

        close(p(&model, "b", &["a"]), 5.0 / 9.0 + 44.0 / 1125.0);
        close(p(&model, "c", &["a"]), 2.0 / 9.0 + 44.0 / 1125.0);
        close(p(&model, "</s>", &["a"]), 2.0 / 9.0 * 47.0 / 125.0);
        close(p(&model, "<unk>", &["a"]), 2.0 / 9.0 * 12.0 / 125.0);
        close(p(&model, "a", &["a"]), 2.0 / 9.0 * 22.0 / 125.0);

        let mass: f64 = ["a", "b", "c", "</s>", "<unk>"]
            .iter()
            .map(|t| p(&model, t, &["a"]))
            .sum();
        close(mass, 1.0);

        // back-off weights: <s> has one continuation out of 3 -> (1/3)(1/3)
        let doc = model.to_arpa();
        let bos = doc.ngrams[0].iter().find(|e| e.tokens == ["<s>"]).unwrap();
        close(bos.log10_backoff.unwrap(), (1.0f64 / 9.0).log10());
        assert_eq!(bos.log10_prob, BOS_LOG10_PROB);
    }

    #[test]
    fn single_sentence_unigram_normalizes() {
        let model = train_lm(&["a"], 1, TokenMode::Word, None).unwrap();
        let mass = p(&model, "a", &[]) + p(&model, "<unk>", &[]) + p(&model, "</s>", &[]);
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distinct_unigram_corpus_perplexity() {
        // V one-word sentences, order 1: counts w_i = 1, </s> = V
        // n1 = V, n2 = 0 (V > 2) -> D = 1; total 2V; types V + 1
        // uniform share = (V + 1) / (2V) / (V + 2)
        // P(w_i) = share, P(</s>) = (V - 1) / (2V) + share
        let v = 8usize;
        let corpus: Vec<String> = (0..v).map(|i| alloc::format!("w{i}")).collect();
        let model = train_lm(&corpus, 1, TokenMode::Word, None).unwrap();
        let vf = v as f64;
        let share = (vf + 1.0) / (2.0 * vf) / (vf + 2.0);
        let p_eos = (vf - 1.0) / (2.0 * vf) + share;
        let expected = (share * p_eos).powf(-0.5);
        let got = model.perplexity(&corpus).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn trained_model_beats_uniform() {
        let corpus = ["মাথা ব্যথা", "জ্বর আছে", "মাথা ঘোরা", "পেট ব্যথা", "জ্বর জ্বর লাগে"];
        let model = train_lm(&corpus, 3, TokenMode::Word, None).unwrap();
        let uniform = (model.vocab().len() - 1) as f64;
        assert!(model.perplexity(&corpus).unwrap() < uniform);
    }

    #[test]
    fn perplexity_ignores_order_of_transcripts() {
        let corpus = ["a b c", "b c", "c a b a"];
        let model = train_lm(&corpus, 2, TokenMode::Char, None).unwrap();
        let reversed = ["c a b a", "b c", "a b c"];
        let a = model.perplexity(&corpus).unwrap();
        let b = model.perplexity(&reversed).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn training_errors() {
        assert_eq!(
            train_lm::<&str>(&[], 2, TokenMode::Word, None),
            Err(LmError::EmptyCorpus)
        );
        assert_eq!(
            train_lm(&["", " "], 2, TokenMode::Word, None),
            Err(LmError::EmptyCorpus)
        );
        assert_eq!(train_lm(&["a"], 0, TokenMode::Word, None), Err(LmError::ZeroOrder));
        assert_eq!(
            train_lm(&["a"], 2, TokenMode::Word, Some(1.5)),
            Err(LmError::DiscountOutOfRange(1.5))
        );
    }

    #[test]
    fn no_singletons_falls_back() {
        // every count is 2, so n1 = 0 at all orders
        let model = train_lm(&["a b", "a b"], 2, TokenMode::Word, None).unwrap();
        assert!(model.score_token("<unk>", &["a"]).is_finite());
        assert!((model.total_mass(&[model.vocab().id("a")]) - 1.0).abs() < 1e-9);
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(
            proptest::collection::vec(prop_oneof![Just("a"), Just("b"), Just("c"), Just("d"), Just("e")], 1..6)
                .prop_map(|w| w.join(" ")),
            1..8,
        )
    }

    proptest! {
        #[test]
        fn trained_models_normalize(
            corpus in corpus_strategy(),
            order in 1usize..5,
            char_mode in any::<bool>(),
            contexts in proptest::collection::vec(proptest::collection::vec(0u32..9, 0..5), 5),
        ) {
            let mode = if char_mode { TokenMode::Char } else { TokenMode::Word };
            let model = train_lm(&corpus, order, mode, None).unwrap();
            let v = model.vocab().len() as u32;
            for ctx in contexts {
                let ctx: Vec<TokenId> = ctx.into_iter().map(|t| t % v).collect();
                let mass = model.total_mass(&ctx);
                prop_assert!((mass - 1.0).abs() < 1e-6, "mass {} for {:?}", mass, ctx);
            }
        }

        #[test]
        fn dropping_top_order_only_touches_its_ngrams(
            corpus in corpus_strategy(),
            queries in proptest::collection::vec(proptest::collection::vec(0u32..9, 3), 30),
        ) {
            let model = train_lm(&corpus, 3, TokenMode::Word, None).unwrap();
            let smaller = model.without_highest_order();
            let v = model.vocab().len() as u32;
            let top: BTreeSet<Vec<TokenId>> = model.to_arpa().ngrams[2]
                .iter()
                .map(|e| e.tokens.iter().map(|t| model.vocab().id(t)).collect())
                .collect();
            for q in queries {
                let q: Vec<TokenId> = q.into_iter().map(|t| t % v).collect();
                let before = model.score_id(q[2], &q[..2]);
                let after = smaller.score_id(q[2], &q[..2]);
                if !top.contains(&q) {
                    prop_assert_eq!(before, after);
                }
            }
        }

        #[test]
        fn unterminated_prefix_score_decreases(corpus in corpus_strategy(), extra in prop_oneof![Just("a"), Just("e"), Just("zz")]) {
            let model = train_lm(&corpus, 2, TokenMode::Word, None).unwrap();
            let tokens = TokenMode::Word.tokenize(&corpus[0]);
            let mut refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let before = model.prefix_logprob(&refs);
            refs.push(extra);
            prop_assert!(model.prefix_logprob(&refs) < before);
        }
    }

    #[test]
    fn override_sets_every_discount() {
        let model = train_lm(&["a b", "a b", "a c"], 2, TokenMode::Word, Some(0.5)).unwrap();
        // context a: gamma = 0.5 * 2 / 3
        let bo = model.to_arpa().ngrams[0]
            .iter()
            .find(|e| e.tokens == ["a"])
            .unwrap()
            .log10_backoff
            .unwrap();
        assert!((bo - (1.0f64 / 3.0).log10()).abs() < 1e-12);
        let _ = vec![0];
    }
}
