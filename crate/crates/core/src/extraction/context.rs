//! Trigger-phrase contextual judge for medical and confidential spans.

use std::collections::{HashMap, HashSet};

use once_cell::sync::Lazy;

use super::{Candidate, SpanSource};
use crate::category::PrivacyCategory;

static TRIGGERS_TSV: &str = include_str!("../../data/lexicons/context_triggers.tsv");
static HEADS_TSV: &str = include_str!("../../data/lexicons/context_heads.tsv");
static STOPWORDS_TXT: &str = include_str!("../../data/lexicons/stopwords.txt");
static MODIFIERS_TXT: &str = include_str!("../../data/lexicons/context_modifiers.txt");

static LEXICON: Lazy<ContextLexicon> = Lazy::new(|| {
    ContextLexicon::parse(TRIGGERS_TSV, HEADS_TSV, STOPWORDS_TXT, MODIFIERS_TXT)
});

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', ')', '"', '\''];

#[derive(Debug, Clone, Default)]
pub struct ContextLexicon {
    triggers: Vec<(Vec<char>, PrivacyCategory)>,
    heads: HashMap<String, PrivacyCategory>,
    stopwords: HashSet<String>,
    modifiers: HashSet<String>,
}

fn word_set(src: &str) -> HashSet<String> {
    src.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn tsv_pairs(src: &str) -> impl Iterator<Item = (String, PrivacyCategory)> + '_ {
    src.lines().filter_map(|l| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            return None;
        }
        let (k, v) = l.split_once('\t')?;
        Some((k.trim().to_lowercase(), v.trim().parse().ok()?))
    })
}

impl ContextLexicon {
    pub fn parse(triggers: &str, heads: &str, stopwords: &str, modifiers: &str) -> Self {
        let mut t: Vec<(Vec<char>, PrivacyCategory)> =
            tsv_pairs(triggers).map(|(k, c)| (k.chars().collect(), c)).collect();
        t.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        ContextLexicon {
            triggers: t,
            heads: tsv_pairs(heads).collect(),
            stopwords: word_set(stopwords),
            modifiers: word_set(modifiers),
        }
    }

    pub fn shipped() -> &'static ContextLexicon {
        &LEXICON
    }

    pub fn head_category(&self, word: &str) -> Option<PrivacyCategory> {
        self.heads.get(&word.to_lowercase()).copied()
    }

    pub fn triggers(&self) -> impl Iterator<Item = (String, PrivacyCategory)> + '_ {
        self.triggers.iter().map(|(t, c)| (t.iter().collect(), *c))
    }
}

#[derive(Debug, Clone, Copy)]
struct Token {
    start: usize,
    end: usize,
    punct_after: bool,
}

fn tokenize(chars: &[char]) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut end = i;
        while end > start && TRAILING_PUNCT.contains(&chars[end - 1]) {
            end -= 1;
        }
        let mut s = start;
        while s < end && (chars[s] == '(' || chars[s] == '"') {
            s += 1;
        }
        out.push(Token { start: s, end, punct_after: end < i || s > start });
    }
    out
}

/// Window-bounded contextual judge.
#[derive(Debug, Clone)]
pub struct ContextJudge {
    pub window: usize,
    pub second_pass: bool,
    lexicon: &'static ContextLexicon,
}

impl ContextJudge {
    pub fn new(window: usize, second_pass: bool) -> Self {
        ContextJudge { window, second_pass, lexicon: ContextLexicon::shipped() }
    }

    fn word(chars: &[char], t: &Token) -> String {
        chars[t.start..t.end].iter().collect::<String>().to_lowercase()
    }

    pub fn find(&self, text: &str, confidence: f64) -> Vec<Candidate> {
        let chars: Vec<char> = text.chars().collect();
        let lower: Vec<char> = chars
            .iter()
            .map(|c| {
                let mut l = c.to_lowercase();
                match (l.next(), l.next()) {
                    (Some(x), None) => x,
                    _ => *c,
                }
            })
            .collect();
        let tokens = tokenize(&chars);
        let words: Vec<String> = tokens.iter().map(|t| Self::word(&chars, t)).collect();
        let mut out = Vec::new();
        let mut covered = vec![false; tokens.len()];

        for (trig, category) in &self.lexicon.triggers {
            let n = trig.len();
            if n == 0 || n > lower.len() {
                continue;
            }
            for pos in 0..=lower.len() - n {
                if lower[pos..pos + n] != trig[..] {
                    continue;
                }
                let before_ok = pos == 0 || !lower[pos - 1].is_alphanumeric();
                let after_ok = pos + n == lower.len() || !lower[pos + n].is_alphanumeric();
                if !before_ok || !after_ok {
                    continue;
                }
                let first = tokens.partition_point(|t| t.start < pos + n);
                let mut last_head = None;
                for (k, tok) in tokens.iter().enumerate().skip(first).take(self.window) {
                    if tok.start == tok.end || self.lexicon.stopwords.contains(&words[k]) {
                        break;
                    }
                    if self.lexicon.heads.contains_key(&words[k]) {
                        last_head = Some(k);
                    }
                    if tok.punct_after {
                        break;
                    }
                }
                if let Some(h) = last_head {
                    for c in covered.iter_mut().take(h + 1).skip(first) {
                        *c = true;
                    }
                    out.push(Candidate {
                        start: tokens[first].start,
                        end: tokens[h].end,
                        category: *category,
                        confidence,
                        source: SpanSource::Context,
                    });
                }
            }
        }

        if self.second_pass {
            for k in 0..tokens.len() {
                if covered[k] {
                    continue;
                }
                let Some(&category) = self.lexicon.heads.get(&words[k]) else {
                    continue;
                };
                let mut right = k;
                while right + 1 < tokens.len()
                    && !tokens[right].punct_after
                    && self.lexicon.heads.contains_key(&words[right + 1])
                {
                    right += 1;
                }
                let mut left = k;
                while left > 0 && right - left + 1 < self.window {
                    let prev = &tokens[left - 1];
                    if prev.punct_after || !self.lexicon.modifiers.contains(&words[left - 1]) {
                        break;
                    }
                    left -= 1;
                }
                for c in covered.iter_mut().take(right + 1).skip(left) {
                    *c = true;
                }
                out.push(Candidate {
                    start: tokens[left].start,
                    end: tokens[right].end,
                    category,
                    confidence,
                    source: SpanSource::Context,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(text: &str, window: usize, second: bool) -> Vec<(String, PrivacyCategory)> {
        let chars: Vec<char> = text.chars().collect();
        ContextJudge::new(window, second)
            .find(text, 0.5)
            .into_iter()
            .map(|c| (chars[c.start..c.end].iter().collect(), c.category))
            .collect()
    }

    #[test]
    fn trigger_then_head_produces_span() {
        let got = spans("Summarise notes for a patient with stage III pancreatic cancer and adjust the plan.", 6, false);
        assert_eq!(got, vec![("stage III pancreatic cancer".to_string(), PrivacyCategory::Medical)]);
    }

    #[test]
    fn window_limit_is_enforced() {
        let t = "patient with a b c d e f g cancer";
        assert!(spans(t, 6, false).is_empty());
        assert_eq!(spans(t, 10, false).len(), 1);
    }

    #[test]
    fn trigger_at_text_end_is_clipped() {
        assert!(spans("She was diagnosed with", 6, false).is_empty());
        assert_eq!(spans("She was diagnosed with diabetes", 6, false)[0].0, "diabetes");
    }

    #[test]
    fn no_head_no_span() {
        assert!(spans("a patient with the billing team", 6, false).is_empty());
    }

    #[test]
    fn punctuation_stops_window() {
        let got = spans("I need advice about my divorce, and my visa.", 6, false);
        assert_eq!(got, vec![("divorce".to_string(), PrivacyCategory::ContextSensitive)]);
    }

    #[test]
    fn second_pass_finds_untriggered_heads() {
        assert!(spans("Notes mention chronic kidney disease here", 6, false).is_empty());
        let got = spans("Notes mention chronic kidney disease here", 10, true);
        assert_eq!(got, vec![("chronic kidney disease".to_string(), PrivacyCategory::Medical)]);
    }
}
