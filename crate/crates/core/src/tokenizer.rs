//! Word-level caption tokenisation and vocabulary.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const PUNCT: [char; 6] = ['.', ',', ';', ':', '(', ')'];

/// Lowercases, splits on whitespace and splits off `. , ; : ( )` as
/// standalone tokens. A `.` or `,` between two digits stays inside the
/// number, so `3.5` and `1,000` are single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.to_lowercase().chars().collect();
        let mut current = String::new();
        for (i, &ch) in chars.iter().enumerate() {
            let numeric_sep = (ch == '.' || ch == ',')
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(char::is_ascii_digit);
            if PUNCT.contains(&ch) && !numeric_sep {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, ids })
    }

    /// Builds a vocabulary from raw caption texts. Tokens seen at least
    /// `min_count` times follow the reserved ids, ordered by descending
    /// frequency then ascending token.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for t in tokenize(text.as_ref()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !RESERVED.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::Index(format!("token id {id} out of range for vocabulary of {}", self.len())))
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < RESERVED.len() || tokens[..4].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::Format("vocabulary must start with the four reserved tokens".into()));
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Vocabulary ids framed by BOS and (when not cut short) EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub max_len: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.ids.last() == Some(&EOS)
    }
}

/// `[BOS, ids.., EOS]`, truncated to `max_len` with EOS kept last.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    if max_len < 2 {
        return Err(Error::Config(format!("max_len must be at least 2, got {max_len}")));
    }
    let mut ids = Vec::with_capacity(max_len.min(tokens.len() + 2));
    ids.push(BOS);
    ids.extend(tokens.iter().take(max_len - 2).map(|t| vocab.id(t.as_ref())));
    ids.push(EOS);
    Ok(TokenSequence { ids, max_len })
}

/// Drops PAD/BOS/EOS and joins the remaining tokens with single spaces.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> Result<String> {
    let mut words = Vec::with_capacity(seq.ids.len());
    for &id in &seq.ids {
        let tok = vocab.token(id)?;
        if !matches!(id, PAD | BOS | EOS) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}
