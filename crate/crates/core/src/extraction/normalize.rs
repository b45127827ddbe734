//! Unicode confusable folding and whitespace collapsing.

use std::collections::HashMap;

use once_cell::sync::Lazy;

static CONFUSABLES_TSV: &str = include_str!("../../data/confusables.tsv");

static CONFUSABLES: Lazy<HashMap<char, char>> = Lazy::new(|| parse_table(CONFUSABLES_TSV));

fn parse_table(src: &str) -> HashMap<char, char> {
    let mut out = HashMap::new();
    for line in src.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(cp), Some(target)) = (cols.next(), cols.next()) else {
            continue;
        };
        let Some(from) = u32::from_str_radix(cp, 16).ok().and_then(char::from_u32) else {
            continue;
        };
        if let Some(to) = target.chars().next() {
            out.insert(from, to);
        }
    }
    out
}

/// Folds one character to its ASCII skeleton, or returns it unchanged.
pub fn fold_char(c: char) -> char {
    if let Some(&t) = CONFUSABLES.get(&c) {
        return t;
    }
    let cp = c as u32;
    if (0xFF01..=0xFF5E).contains(&cp) {
        return char::from_u32(cp - 0xFF01 + 0x21).unwrap_or(c);
    }
    c
}

/// Characters that fold to `target`. Used by probe generation and tests.
pub fn confusables_for(target: char) -> Vec<char> {
    let mut out: Vec<char> = CONFUSABLES
        .iter()
        .filter(|(_, &t)| t == target)
        .map(|(&c, _)| c)
        .collect();
    if ('\u{21}'..='\u{7E}').contains(&target) {
        out.push(char::from_u32(target as u32 - 0x21 + 0xFF01).unwrap());
    }
    out.sort_unstable();
    out
}

pub fn table_len() -> usize {
    CONFUSABLES.len()
}

/// Normalized text plus, for every normalized char, the original char offset
/// it came from. `map` has one trailing entry for the end of the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub text: String,
    pub map: Vec<usize>,
}

impl Normalized {
    /// Maps a normalized half-open range back to original offsets.
    pub fn to_original(&self, start: usize, end: usize) -> (usize, usize) {
        let s = self.map[start];
        let e = if end == 0 { 0 } else { self.map[end - 1] + 1 };
        (s, e.max(s))
    }

    /// Identity-mapped when normalization changed no lengths.
    pub fn is_length_preserving(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }
}

/// Folds confusables and collapses whitespace runs to a single space.
pub fn normalize(text: &str) -> Normalized {
    let mut out = String::with_capacity(text.len());
    let mut map = Vec::with_capacity(text.len() + 1);
    let mut prev_space = false;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        let f = fold_char(c);
        if f.is_whitespace() {
            if prev_space {
                continue;
            }
            prev_space = true;
            out.push(' ');
        } else {
            prev_space = false;
            out.push(f);
        }
        map.push(i);
    }
    map.push(n);
    Normalized { text: out, map }
}

pub fn normalize_surface(text: &str) -> String {
    normalize(text).text
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_is_loaded_and_ascii_targeted() {
        assert!(table_len() >= 60);
        for (&from, &to) in CONFUSABLES.iter() {
            assert!(!from.is_ascii(), "{from:?} is ascii");
            assert!(to.is_ascii_graphic(), "{to:?} is not printable ascii");
        }
    }

    #[test]
    fn folds_cyrillic_and_fullwidth() {
        assert_eq!(normalize_surface("\u{0440}\u{0430}y\u{0440}\u{0430}l"), "paypal");
        assert_eq!(normalize_surface("\u{FF10}21-555"), "021-555");
        assert_eq!(normalize_surface("a  \t b"), "a b");
    }

    #[test]
    fn every_fold_target_is_recovered_by_brute_force() {
        // Independent check: scan the BMP plus the bold digit block and make
        // sure the inverse lookup agrees with fold_char.
        let mut scanned: HashMap<char, Vec<char>> = HashMap::new();
        for cp in (0x80u32..0x10000).chain(0x1D7CE..0x1D7D8) {
            if let Some(c) = char::from_u32(cp) {
                let f = fold_char(c);
                if f != c {
                    scanned.entry(f).or_default().push(c);
                }
            }
        }
        for (target, mut sources) in scanned {
            sources.sort_unstable();
            assert_eq!(confusables_for(target), sources, "target {target:?}");
        }
    }

    #[test]
    fn offsets_map_back_through_collapsed_whitespace() {
        let n = normalize("a   b\u{0441}d");
        assert_eq!(n.text, "a bcd");
        assert_eq!(n.to_original(2, 5), (4, 7));
        assert!(!n.is_length_preserving());
        assert!(normalize("plain text").is_length_preserving());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_surface(&s);
            prop_assert_eq!(normalize_surface(&once), once.clone());
        }

        #[test]
        fn map_is_monotone(s in "[a-z \u{0430}\u{FF21}\t]{0,30}") {
            let n = normalize(&s);
            prop_assert_eq!(n.map.len(), n.text.chars().count() + 1);
            prop_assert!(n.map.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
