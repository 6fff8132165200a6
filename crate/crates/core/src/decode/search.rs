use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{ctc_label_logprob, log_add, DecodeError, LogitMatrix};
use crate::corpus::Alphabet;
use crate::lm::{NGramModel, TokenId, TokenMode, Vocab};

/// Upper bound on the labels [`brute_force_decode`] will enumerate.
pub const MAX_BRUTE_FORCE_CANDIDATES: u128 = 1_000_000;

/// Scores within this relative distance of the best count as tied for first
/// place. The beam and the forward recursion add the same terms in different
/// orders, so bitwise equality cannot be relied on.
const TIE_TOLERANCE: f64 = 1e-9;

/// Shallow fusion: `score = ln P_ctc + alpha · ln P_lm + beta · units`, where
/// units are characters (char mode) or words (word mode) scored by the LM.
#[derive(Debug, Clone, Copy)]
pub struct LmFusion<'a> {
    pub model: &'a NGramModel,
    pub alpha: f64,
    pub beta: f64,
}

impl LmFusion<'_> {
    fn check(&self, alphabet: &Alphabet) -> Result<(), DecodeError> {
        let mode = self.model.token_mode();
        for token in self.model.vocab().tokens() {
            if Vocab::is_sentinel(token) {
                continue;
            }
            let ok = match mode {
                TokenMode::Char => {
                    let mut chars = token.chars();
                    matches!((chars.next(), chars.next()), (Some(c), None) if alphabet.contains(c))
                }
                TokenMode::Word => !token.is_empty() && token.chars().all(|c| c != ' ' && alphabet.contains(c)),
            };
            if !ok {
                return Err(DecodeError::IncompatibleLm(token.clone()));
            }
        }
        Ok(())
    }

    fn ln_score(&self, token: TokenId, history: &[TokenId]) -> f64 {
        self.model.score_id(token, history) * core::f64::consts::LN_10
    }

    /// LM term and unit count for appending `c` to `prefix`.
    fn extend(&self, prefix: &[char], c: char) -> (f64, u32) {
        let vocab = self.model.vocab();
        match self.model.token_mode() {
            TokenMode::Char => {
                let keep = self.model.order().saturating_sub(1);
                let start = prefix.len().saturating_sub(keep);
                let mut history = Vec::with_capacity(keep + 1);
                if start == 0 {
                    history.push(self.model.bos());
                }
                let mut buf = [0u8; 4];
                history.extend(prefix[start..].iter().map(|ch| vocab.id(ch.encode_utf8(&mut buf))));
                (self.ln_score(vocab.id(c.encode_utf8(&mut buf)), &history), 1)
            }
            TokenMode::Word if c == ' ' => self.word_term(prefix),
            TokenMode::Word => (0.0, 0),
        }
    }

    /// Word mode scores the trailing word once the sequence ends.
    fn finish(&self, prefix: &[char]) -> (f64, u32) {
        match self.model.token_mode() {
            TokenMode::Char => (0.0, 0),
            TokenMode::Word => self.word_term(prefix),
        }
    }

    /// Scores the last word of `prefix` given the words before it.
    fn word_term(&self, prefix: &[char]) -> (f64, u32) {
        let words: Vec<String> = prefix
            .split(|&ch| ch == ' ')
            .map(|w| w.iter().collect::<String>())
            .collect();
        let Some((last, before)) = words.split_last() else {
            return (0.0, 0);
        };
        if last.is_empty() {
            return (0.0, 0);
        }
        let vocab = self.model.vocab();
        let mut history = vec![self.model.bos()];
        history.extend(before.iter().filter(|w| !w.is_empty()).map(|w| vocab.id(w)));
        (self.ln_score(vocab.id(last), &history), 1)
    }

    fn combine(&self, acoustic: f64, lm: f64, units: u32) -> f64 {
        acoustic + self.alpha * lm + self.beta * f64::from(units)
    }
}

/// A decoded text with its combined score and the terms that make it up.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub text: String,
    /// Natural log; equals `acoustic_logp` when no LM is attached.
    pub log_score: f64,
    pub acoustic_logp: f64,
    /// Natural-log LM probability of the scored units.
    pub lm_logp: f64,
    pub length_bonus_count: u32,
}

impl Hypothesis {
    fn new(text: String, acoustic: f64, lm: f64, units: u32, fusion: Option<&LmFusion<'_>>) -> Self {
        let log_score = fusion.map_or(acoustic, |f| f.combine(acoustic, lm, units));
        Self {
            text,
            log_score,
            acoustic_logp: acoustic,
            lm_logp: lm,
            length_bonus_count: units,
        }
    }
}

/// Best score first, then text order. The first place then goes to the
/// smallest text among hypotheses tied with the best within tolerance.
fn rank(mut hyps: Vec<Hypothesis>) -> Vec<Hypothesis> {
    hyps.sort_by(|a, b| b.log_score.total_cmp(&a.log_score).then_with(|| a.text.cmp(&b.text)));
    if let Some(best) = hyps.first().map(|h| h.log_score) {
        let floor = best - TIE_TOLERANCE * (1.0 + libm::fabs(best));
        let winner = hyps
            .iter()
            .enumerate()
            .take_while(|(_, h)| h.log_score >= floor || h.log_score == best)
            .min_by(|(_, a), (_, b)| a.text.cmp(&b.text))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let top = hyps.remove(winner);
        hyps.insert(0, top);
    }
    hyps
}

/// Exhaustive argmax over every label of length `0..=max_label_len`. The test
/// oracle for [`beam_search`].
pub fn brute_force_decode(
    logits: &LogitMatrix,
    alphabet: &Alphabet,
    max_label_len: usize,
    fusion: Option<LmFusion<'_>>,
) -> Result<Hypothesis, DecodeError> {
    logits.check_alphabet(alphabet)?;
    if let Some(f) = &fusion {
        f.check(alphabet)?;
    }
    let symbols = alphabet.len() as u128;
    let mut candidates: u128 = 0;
    let mut layer: u128 = 1;
    for _ in 0..=max_label_len {
        candidates = candidates.saturating_add(layer);
        layer = layer.saturating_mul(symbols);
    }
    if candidates > MAX_BRUTE_FORCE_CANDIDATES {
        return Err(DecodeError::TooManyCandidates(candidates));
    }

    let mut hyps = Vec::with_capacity(candidates as usize);
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for len in 0..=max_label_len {
        for label in &frontier {
            let acoustic = ctc_label_logprob(logits, label)?;
            let chars: Vec<char> = label.iter().filter_map(|&l| alphabet.char_at(l)).collect();
            let (mut lm, mut units) = (0.0, 0);
            if let Some(f) = &fusion {
                for i in 0..chars.len() {
                    let (d, n) = f.extend(&chars[..i], chars[i]);
                    lm += d;
                    units += n;
                }
                let (d, n) = f.finish(&chars);
                lm += d;
                units += n;
            }
            hyps.push(Hypothesis::new(
                chars.into_iter().collect(),
                acoustic,
                lm,
                units,
                fusion.as_ref(),
            ));
        }
        if len < max_label_len {
            frontier = frontier
                .iter()
                .flat_map(|l| {
                    (0..alphabet.len()).map(move |c| {
                        let mut next = l.clone();
                        next.push(c);
                        next
                    })
                })
                .collect();
        }
    }
    Ok(rank(hyps).swap_remove(0))
}

#[derive(Debug, Clone, Copy)]
struct Beam {
    /// ln mass of alignments ending in blank
    blank: f64,
    /// ln mass of alignments ending in the last character
    non_blank: f64,
    lm: f64,
    units: u32,
}

impl Beam {
    fn with_lm(lm: f64, units: u32) -> Self {
        Self {
            blank: f64::NEG_INFINITY,
            non_blank: f64::NEG_INFINITY,
            lm,
            units,
        }
    }

    fn acoustic(&self) -> f64 {
        log_add(self.blank, self.non_blank)
    }

    fn score(&self, fusion: Option<&LmFusion<'_>>) -> f64 {
        let acoustic = self.acoustic();
        fusion.map_or(acoustic, |f| f.combine(acoustic, self.lm, self.units))
    }
}

fn text_cmp(alphabet: &Alphabet, a: &[usize], b: &[usize]) -> Ordering {
    a.iter()
        .map(|&l| alphabet.char_at(l))
        .cmp(b.iter().map(|&l| alphabet.char_at(l)))
}

/// CTC prefix beam search with optional LM shallow fusion.
///
/// Prefixes are merged by collapsed text and carry separate blank-ending and
/// character-ending mass. A new prefix picks up its LM term when it is first
/// created, so the LM factor is shared by every alignment of that prefix.
/// After each frame the `beam_width` best prefixes by combined score survive
/// (ties go to the smaller text). Prefixes with zero probability are never
/// created. Returns the surviving hypotheses ranked.
pub fn beam_search(
    logits: &LogitMatrix,
    alphabet: &Alphabet,
    beam_width: usize,
    fusion: Option<LmFusion<'_>>,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if beam_width == 0 {
        return Err(DecodeError::ZeroBeamWidth);
    }
    logits.check_alphabet(alphabet)?;
    if let Some(f) = &fusion {
        f.check(alphabet)?;
    }
    let blank = logits.blank();
    let fusion_ref = fusion.as_ref();

    let mut beams: Vec<(Vec<usize>, Beam)> = vec![(
        Vec::new(),
        Beam {
            blank: 0.0,
            ..Beam::with_lm(0.0, 0)
        },
    )];
    let mut chars: Vec<char> = Vec::new();

    for t in 0..logits.frames() {
        let row = logits.row(t);
        let mut next: BTreeMap<Vec<usize>, Beam> = BTreeMap::new();
        for (prefix, beam) in &beams {
            let total = beam.acoustic();
            let last = prefix.last().copied();
            let stay_blank = total + row[blank];
            let stay_char = last.map_or(f64::NEG_INFINITY, |l| beam.non_blank + row[l]);
            // zero-probability mass can never recover, so it creates no prefixes
            if stay_blank > f64::NEG_INFINITY || stay_char > f64::NEG_INFINITY {
                let entry = next.entry(prefix.clone()).or_insert(Beam::with_lm(beam.lm, beam.units));
                entry.blank = log_add(entry.blank, stay_blank);
                entry.non_blank = log_add(entry.non_blank, stay_char);
            }

            chars.clear();
            chars.extend(prefix.iter().filter_map(|&l| alphabet.char_at(l)));
            for (c, &lp) in row.iter().enumerate().take(blank) {
                // a repeated character only starts a new symbol after a blank
                let mass = if Some(c) == last { beam.blank } else { total } + lp;
                if mass == f64::NEG_INFINITY {
                    continue;
                }
                let mut extended = Vec::with_capacity(prefix.len() + 1);
                extended.extend_from_slice(prefix);
                extended.push(c);
                let entry = next.entry(extended).or_insert_with(|| match fusion_ref {
                    Some(f) => {
                        let ch = alphabet.char_at(c).expect("class below blank");
                        let (d, n) = f.extend(&chars, ch);
                        Beam::with_lm(beam.lm + d, beam.units + n)
                    }
                    None => Beam::with_lm(0.0, 0),
                });
                entry.non_blank = log_add(entry.non_blank, mass);
            }
        }

        let mut ranked: Vec<(Vec<usize>, Beam, f64)> = next
            .into_iter()
            .map(|(p, b)| {
                let s = b.score(fusion_ref);
                (p, b, s)
            })
            .collect();
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| text_cmp(alphabet, &a.0, &b.0)));
        ranked.truncate(beam_width);
        beams = ranked.into_iter().map(|(p, b, _)| (p, b)).collect();
    }

    let hyps = beams
        .into_iter()
        .map(|(prefix, beam)| {
            let chars: Vec<char> = prefix.iter().filter_map(|&l| alphabet.char_at(l)).collect();
            let (mut lm, mut units) = (beam.lm, beam.units);
            if let Some(f) = fusion_ref {
                let (d, n) = f.finish(&chars);
                lm += d;
                units += n;
            }
            Hypothesis::new(chars.into_iter().collect(), beam.acoustic(), lm, units, fusion_ref)
        })
        .collect();
    Ok(rank(hyps))
}
