//! Byte-level tokenizer: ids `0..256` are raw UTF-8 bytes, followed by five specials.

use crate::error::{invalid, Result};

pub const BOS: usize = 256;
pub const EOS: usize = 257;
pub const PAD: usize = 258;
pub const IMG: usize = 259;
pub const PTR: usize = 260;
pub const VOCAB_SIZE: usize = 261;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tokenizer;

impl Tokenizer {
    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.bytes().map(usize::from).collect()
    }

    /// Non-empty text only; questions and answers must carry at least one token.
    pub fn encode_nonempty(&self, text: &str) -> Result<Vec<usize>> {
        if text.is_empty() {
            return Err(invalid("text must not be empty"));
        }
        Ok(self.encode(text))
    }

    /// Byte tokens back to text; special ids are skipped and invalid UTF-8 is replaced.
    pub fn decode(&self, ids: &[usize]) -> String {
        let bytes: Vec<u8> = ids.iter().filter(|&&t| t < 256).map(|&t| t as u8).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    pub fn is_special(&self, id: usize) -> bool {
        (256..VOCAB_SIZE).contains(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_count_and_specials() {
        let t = Tokenizer;
        assert_eq!(t.encode("héllo").len(), "héllo".len());
        assert!(t.encode_nonempty("").is_err());
        assert_eq!(t.decode(&[BOS, 104, 105, EOS]), "hi");
        assert!(t.is_special(PTR) && !t.is_special(255));
    }

    proptest! {
        #[test]
        fn round_trip(s in "\\PC*") {
            let t = Tokenizer;
            let ids = t.encode(&s);
            prop_assert!(ids.iter().all(|&i| !t.is_special(i)));
            prop_assert_eq!(t.decode(&ids), s);
        }
    }
}
