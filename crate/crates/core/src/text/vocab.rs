use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::tokenize;

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

/// Caption ids framed by `<sos>` … `<eos>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<usize>);

impl TokenSeq {
    /// Wraps ids that already carry the `<sos>`/`<eos>` frame.
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if ids.len() < 2 || ids[0] != SOS || ids[ids.len() - 1] != EOS {
            return Err(Error::Input(format!("token sequence {ids:?} lacks <sos>/<eos>")));
        }
        if ids[1..ids.len() - 1].iter().any(|&i| i == PAD || i == SOS || i == EOS) {
            return Err(Error::Input(format!("token sequence {ids:?} has reserved ids inside")));
        }
        Ok(TokenSeq(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Decoder input under teacher forcing: everything but the final `<eos>`.
    pub fn inputs(&self) -> &[usize] {
        &self.0[..self.0.len() - 1]
    }

    /// Next-token targets: everything but the leading `<sos>`.
    pub fn targets(&self) -> &[usize] {
        &self.0[1..]
    }

    /// Caption words without the frame.
    pub fn words(&self) -> &[usize] {
        &self.0[1..self.0.len() - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved ids first, then corpus tokens by descending frequency with
    /// lexicographic tie-breaking. Captions must already be normalized.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for caption in corpus {
            for tok in tokenize(caption.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count.max(1) && !RESERVED.contains(&t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_corpus_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Vocabulary with the reserved tokens followed by `tokens` in order.
    pub fn from_corpus_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of non-reserved tokens.
    pub fn corpus_len(&self) -> usize {
        self.tokens.len() - RESERVED.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Words of an already-normalized caption to ids; unknown words map to `<unk>`.
    pub fn word_ids(&self, caption: &str) -> Vec<usize> {
        tokenize(caption)
            .into_iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    pub fn encode(&self, caption: &str) -> TokenSeq {
        let mut ids = Vec::with_capacity(caption.len() / 4 + 2);
        ids.push(SOS);
        ids.extend(self.word_ids(caption));
        ids.push(EOS);
        TokenSeq(ids)
    }

    /// Joins tokens with single spaces, dropping `<pad>`, `<sos>` and
    /// `<eos>`. `<unk>` is kept so unknown words stay visible.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD && i != SOS && i != EOS)
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# cl4ac vocabulary v1\n");
        let _ = writeln!(
            s,
            "# reserved ids (not listed): 0={} 1={} 2={} 3={}",
            RESERVED[0], RESERVED[1], RESERVED[2], RESERVED[3]
        );
        s.push_str("# the k-th token line below (counting from 0) has id k + 4\n");
        for t in &self.tokens[RESERVED.len()..] {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let t = l.trim_end_matches('\r');
                if t.is_empty() || t.contains(char::is_whitespace) {
                    Err(Error::Format(format!("invalid vocabulary line {l:?}")))
                } else {
                    Ok(t.to_string())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_corpus_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
