//! OCR-aware recovery pass for image-derived text.

use super::gazetteer::Gazetteer;

const AMBIGUOUS: &[char] = &['0', '1', '5', '8', 'O', 'l', 'I', 'S', 'B'];

fn to_digit(c: char) -> char {
    match c {
        'O' => '0',
        'l' | 'I' => '1',
        'S' => '5',
        'B' => '8',
        _ => c,
    }
}

fn to_letter(c: char, upper_ctx: bool, next_lower: bool, at_start: bool) -> char {
    match c {
        '0' => 'O',
        '1' if at_start && next_lower => 'I',
        '1' if upper_ctx => 'I',
        '1' => 'l',
        '5' => 'S',
        '8' => 'B',
        _ => c,
    }
}

/// OCR-corrected text plus a map from corrected char offsets to original
/// char offsets (one trailing entry for the end).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deconfused {
    pub text: String,
    pub map: Vec<usize>,
}

impl Deconfused {
    pub fn to_original(&self, start: usize, end: usize) -> (usize, usize) {
        let s = self.map[start];
        let e = if end == 0 { 0 } else { self.map[end - 1] + 1 };
        (s, e.max(s))
    }
}

fn fix_segment(seg: &[char], gaz: &Gazetteer) -> Vec<(char, usize)> {
    let digits = seg.iter().filter(|c| c.is_ascii_digit() && !AMBIGUOUS.contains(c)).count();
    let letters = seg.iter().filter(|c| c.is_alphabetic() && !AMBIGUOUS.contains(c)).count();
    let uppers = seg.iter().filter(|c| c.is_uppercase() && !AMBIGUOUS.contains(c)).count();
    let any_digit = seg.iter().any(|c| c.is_ascii_digit());
    let digit_mode = digits > letters || (digits == letters && letters == 0 && any_digit);
    let upper_ctx = letters > 0 && uppers * 2 > letters;
    let mut out: Vec<(char, usize)> = seg
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let fixed = if digit_mode {
                to_digit(c)
            } else {
                let next_lower = seg.get(i + 1).is_some_and(|n| n.is_lowercase());
                to_letter(c, upper_ctx, next_lower, i == 0)
            };
            (fixed, i)
        })
        .collect();
    if !digit_mode {
        let word: String = out.iter().map(|p| p.0).collect();
        if let Some(b) = word.find("rn") {
            if !gaz.knows_token(&word) && gaz.knows_token(&word.replacen("rn", "m", 1)) {
                let at = word[..b].chars().count();
                out.splice(at..at + 2, [('m', at)]);
            }
        }
    }
    out
}

/// Applies digit/letter heuristics to each alphanumeric segment and merges
/// split `rn` back to `m` where that yields a lexicon token.
pub fn deconfuse(text: &str, gaz: &Gazetteer) -> Deconfused {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut map = Vec::with_capacity(chars.len() + 1);
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            out.push(chars[i]);
            map.push(i);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_alphanumeric() {
            i += 1;
        }
        for (c, off) in fix_segment(&chars[start..i], gaz) {
            out.push(c);
            map.push(start + off);
        }
    }
    map.push(chars.len());
    Deconfused { text: out, map }
}

/// Uncategorized ID-like token on corrected text: at least eight characters
/// drawn from upper-case letters, digits and hyphens, with both letters and
/// at least two digits.
pub fn id_like_tokens(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ok = |c: char| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-';
        if !ok(chars[i]) || (i > 0 && chars[i - 1].is_alphanumeric()) {
            i += 1;
            continue;
        }
        let s = i;
        while i < chars.len() && ok(chars[i]) {
            i += 1;
        }
        let mut e = i;
        while e > s && chars[e - 1] == '-' {
            e -= 1;
        }
        if i < chars.len() && chars[i].is_alphanumeric() {
            continue;
        }
        let tok = &chars[s..e];
        let nd = tok.iter().filter(|c| c.is_ascii_digit()).count();
        let nl = tok.iter().filter(|c| c.is_ascii_uppercase()).count();
        if tok.len() >= 8 && nd >= 2 && nl >= 1 {
            out.push((s, e));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(s: &str) -> String {
        deconfuse(s, Gazetteer::shipped()).text
    }

    #[test]
    fn digit_segments_recover_digits() {
        assert_eq!(fix("call O21-S55-Ol47"), "call 021-555-0147");
        assert_eq!(fix("NZ38l2745"), "NZ3812745");
    }

    #[test]
    fn letter_segments_recover_letters() {
        assert_eq!(fix("5arah Chen"), "Sarah Chen");
        assert_eq!(fix("1ngrid 5olberg"), "Ingrid Solberg");
        assert_eq!(fix("1NV-2041-77"), "INV-2041-77");
        assert_eq!(fix("vendor.examp1e"), "vendor.example");
    }

    #[test]
    fn split_m_is_merged_only_for_lexicon_tokens() {
        let d = deconfuse("Herni Tawhiri and Bernard", Gazetteer::shipped());
        assert_eq!(d.text, "Hemi Tawhiri and Bernard");
        assert_eq!(d.to_original(0, 4), (0, 5));
        assert_eq!(d.to_original(5, 12), (6, 13));
    }

    #[test]
    fn clean_text_is_unchanged() {
        let t = "Send INV-2041-77 to Sarah Chen at 17 Anzac Avenue, Auckland.";
        let d = deconfuse(t, Gazetteer::shipped());
        assert_eq!(d.text, t);
        assert!(d.map.iter().enumerate().all(|(i, &m)| i == m));
    }

    #[test]
    fn id_like_shape() {
        assert_eq!(id_like_tokens("ref AB12-CD34X ok"), vec![(4, 14)]);
        assert!(id_like_tokens("ref ABCDEFGH1 ok").is_empty());
        assert!(id_like_tokens("Auckland 2041").is_empty());
    }
}
