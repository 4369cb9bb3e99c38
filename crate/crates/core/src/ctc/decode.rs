use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{collapse, ctc_loss, log_add, Codec, CtcError, LogitsMatrix, BLANK};

/// Lexicons up to this size are scored exactly; larger ones snap the beam
/// output to the nearest word by edit distance.
pub const EXACT_LEXICON_LIMIT: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconMode {
    Strong,
    Weak,
    Generic,
}

/// Collapse of the per-frame argmax (lowest class wins ties).
pub fn greedy_decode(logp: &LogitsMatrix) -> Vec<usize> {
    let path: Vec<usize> = (0..logp.frames())
        .map(|t| {
            let row = logp.row(t);
            (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
        })
        .collect();
    collapse(&path)
}

/// Prefix beam search keeping the `width` most probable collapsed prefixes,
/// each scored by the merged probability of its blank- and symbol-ending
/// paths. A width of 1 is the greedy decode.
pub fn beam_decode(logp: &LogitsMatrix, width: usize) -> Vec<usize> {
    if width <= 1 {
        return greedy_decode(logp);
    }
    let neg = f64::NEG_INFINITY;
    // prefix → (log p ending in blank, log p ending in its last symbol)
    let mut beams: Vec<(Vec<usize>, (f64, f64))> = vec![(Vec::new(), (0.0, neg))];
    for t in 0..logp.frames() {
        let mut next: HashMap<Vec<usize>, (f64, f64)> = HashMap::new();
        for (prefix, (pb, pnb)) in &beams {
            let total = log_add(*pb, *pnb);
            let entry = next.entry(prefix.clone()).or_insert((neg, neg));
            entry.0 = log_add(entry.0, total + logp.get(t, BLANK));
            for c in 1..logp.classes() {
                let y = logp.get(t, c);
                let mut extended = prefix.clone();
                extended.push(c);
                if prefix.last() == Some(&c) {
                    let same = next.entry(prefix.clone()).or_insert((neg, neg));
                    same.1 = log_add(same.1, pnb + y);
                    let e = next.entry(extended).or_insert((neg, neg));
                    e.1 = log_add(e.1, pb + y);
                } else {
                    let e = next.entry(extended).or_insert((neg, neg));
                    e.1 = log_add(e.1, total + y);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, (f64, f64))> = next.into_iter().collect();
        ranked.sort_by(|a, b| {
            let (sa, sb) = (log_add(a.1 .0, a.1 .1), log_add(b.1 .0, b.1 .1));
            sb.total_cmp(&sa).then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(width);
        beams = ranked;
    }
    beams.into_iter().next().map(|(p, _)| p).unwrap_or_default()
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Picks a word for `logp`.
///
/// `Generic` returns the unconstrained beam decode. `Strong` and `Weak`
/// (which differ only in the lexicon the caller supplies) return the word of
/// highest CTC posterior, or for lexicons above [`EXACT_LEXICON_LIMIT`] the
/// word nearest the beam output by edit distance, ties broken by posterior.
/// Remaining ties go to the lexicographically smallest word.
pub fn lexicon_decode(
    logp: &LogitsMatrix,
    codec: &Codec,
    lexicon: &[String],
    mode: LexiconMode,
    beam_width: usize,
) -> Result<String, CtcError> {
    if mode == LexiconMode::Generic {
        return Ok(codec.decode(&beam_decode(logp, beam_width)));
    }
    if lexicon.is_empty() {
        return Err(CtcError::EmptyLexicon);
    }
    let score = |word: &str| -> f64 {
        codec
            .encode(word)
            .ok()
            .and_then(|l| ctc_loss(logp, &l).ok())
            .map_or(f64::NEG_INFINITY, |o| -o.loss)
    };
    let better = |a: &(f64, &String), b: &(f64, &String)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    if lexicon.len() <= EXACT_LEXICON_LIMIT {
        let mut best: Option<(f64, &String)> = None;
        for word in lexicon {
            let cand = (score(word), word);
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        let (s, word) = best.expect("lexicon is non-empty");
        if s > f64::NEG_INFINITY {
            return Ok(word.clone());
        }
    }
    let decoded: Vec<char> = codec.decode(&beam_decode(logp, beam_width)).chars().collect();
    let ranked = lexicon.iter().map(|word| {
        let d = edit_distance(&decoded, &word.chars().collect::<Vec<_>>());
        (d, score(word), word)
    });
    let best = ranked
        .reduce(|a, b| {
            let b_wins = b.0 < a.0 || (b.0 == a.0 && better(&(b.1, b.2), &(a.1, a.2)));
            if b_wins {
                b
            } else {
                a
            }
        })
        .expect("lexicon is non-empty");
    Ok(best.2.clone())
}
