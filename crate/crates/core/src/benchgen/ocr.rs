//! Synthetic OCR noise channel.

use rand::Rng;

/// Result of passing text through the noise channel. `map[i]` is the char
/// offset in `text` of input char `i`; `map[len]` is the output length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisyText {
    pub text: String,
    pub map: Vec<usize>,
    pub substitutions: usize,
}

impl NoisyText {
    pub fn remap(&self, start: usize, end: usize) -> (usize, usize) {
        (self.map[start], self.map[end])
    }
}

/// Substitutes characters per the confusion table. Each character with at
/// least one table entry is replaced with probability `rate` by one of its
/// targets, chosen uniformly.
pub fn apply_ocr_noise<R: Rng + ?Sized>(text: &str, table: &[(String, String)], rate: f64, rng: &mut R) -> NoisyText {
    let rate = rate.clamp(0.0, 1.0);
    let mut out = String::with_capacity(text.len());
    let mut map = Vec::with_capacity(text.len() + 1);
    let mut pos = 0;
    let mut substitutions = 0;
    for c in text.chars() {
        map.push(pos);
        let options: Vec<&str> = table
            .iter()
            .filter(|(from, _)| from.chars().eq(std::iter::once(c)))
            .map(|(_, to)| to.as_str())
            .collect();
        if !options.is_empty() && rng.gen_bool(rate) {
            let to = options[rng.gen_range(0..options.len())];
            out.push_str(to);
            pos += to.chars().count();
            substitutions += 1;
        } else {
            out.push(c);
            pos += 1;
        }
    }
    map.push(pos);
    NoisyText { text: out, map, substitutions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::slice_chars;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> Vec<(String, String)> {
        [("O", "0"), ("0", "O"), ("l", "1"), ("m", "rn")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = apply_ocr_noise("Order 0042 for Tom", &table(), 0.0, &mut rng);
        assert_eq!(n.text, "Order 0042 for Tom");
        assert_eq!(n.substitutions, 0);
    }

    #[test]
    fn rate_one_forces_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = vec![("O".to_string(), "0".to_string())];
        assert_eq!(apply_ocr_noise("O0O0", &t, 1.0, &mut rng).text, "0000");
    }

    #[test]
    fn expansion_remaps_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = vec![("m".to_string(), "rn".to_string())];
        let n = apply_ocr_noise("a mom b", &t, 1.0, &mut rng);
        assert_eq!(n.text, "a rnorn b");
        assert_eq!(n.remap(2, 5), (2, 7));
    }

    proptest! {
        #[test]
        fn unchanged_slices_survive(s in "[a-zA-Z0-9 ]{0,40}", seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = apply_ocr_noise(&s, &table(), 0.3, &mut rng);
            let len = s.chars().count();
            prop_assert_eq!(n.map[len], n.text.chars().count());
            for i in 0..len {
                let piece = slice_chars(&n.text, n.map[i], n.map[i + 1]).unwrap();
                let orig = slice_chars(&s, i, i + 1).unwrap();
                if piece == orig {
                    continue;
                }
                prop_assert!(table().iter().any(|(a, b)| a == orig && b == piece));
            }
        }
    }
}
