use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};
use crate::igsm::{GenConfig, Problem, LETTERS, MODULUS};

pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";
pub const SOLUTION: &str = "Solution:";
pub const ANSWER: &str = "Answer:";

const FRAGMENTS: &[&str] = &[
    "The number of each",
    "Find the number of",
    "equals",
    "each",
    "the sum of",
    "the difference of",
    "times as much as",
    "more than",
    "and",
    "Define",
    "as",
    "so",
    "=",
    "+",
    "-",
    "×",
    ".",
    ";",
    "'s",
    ANSWER,
];

/// Tokens written without a preceding space.
const ATTACHED: &[&str] = &[".", ";", "'s"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Closed word-and-phrase vocabulary of a problem corpus.
    Text,
    /// Random-sequence values, one token per value; token `i` is written `i`.
    Ids,
}

/// Closed vocabulary; every symbol outside it is an error.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// Multi-word tokens keyed by first word, longest first.
    #[serde(skip)]
    phrases: HashMap<String, Vec<(Vec<String>, usize)>>,
}

impl Tokenizer {
    fn from_tokens(mode: TokenizerMode, tokens: Vec<String>) -> Result<Self> {
        let mut t = Tokenizer {
            mode,
            tokens,
            index: HashMap::new(),
            phrases: HashMap::new(),
        };
        t.rebuild()?;
        Ok(t)
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuild(&mut self) -> Result<()> {
        self.index.clear();
        self.phrases.clear();
        for (id, tok) in self.tokens.iter().enumerate() {
            if self.index.insert(tok.clone(), id).is_some() {
                return Err(data_err!("token {tok:?} appears twice in the vocabulary"));
            }
            let words: Vec<String> = tok.split(' ').map(String::from).collect();
            self.phrases.entry(words[0].clone()).or_default().push((words, id));
        }
        for list in self.phrases.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        Ok(())
    }

    /// Vocabulary for problems drawn from `config`.
    pub fn for_igsm(config: &GenConfig) -> Result<Self> {
        config.validate()?;
        let mut tokens: Vec<String> = [PAD, EOS, SOLUTION].map(String::from).to_vec();
        tokens.extend(FRAGMENTS.iter().map(|s| s.to_string()));
        tokens.extend((0..MODULUS).map(|v| v.to_string()));
        tokens.extend(LETTERS.iter().map(|&b| char::from(b).to_string()));
        tokens.extend(config.locations.iter().cloned());
        tokens.extend(config.items.iter().cloned());
        tokens.push(config.category.clone());
        Self::from_tokens(TokenizerMode::Text, tokens)
    }

    /// Identity vocabulary over values `0..n`.
    pub fn for_ids(n: usize) -> Result<Self> {
        Self::from_tokens(TokenizerMode::Ids, (0..n).map(|v| v.to_string()).collect())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| data_err!("symbol {token:?} is not in the vocabulary"))
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| data_err!("token id {id} outside vocabulary of {}", self.tokens.len()))
    }

    pub fn pad(&self) -> usize {
        self.index.get(PAD).copied().unwrap_or(0)
    }

    pub fn eos(&self) -> Option<usize> {
        self.index.get(EOS).copied()
    }

    fn atoms(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let mut suffix = Vec::new();
            let mut w = word;
            loop {
                if let Some(rest) = w.strip_suffix('.').or_else(|| w.strip_suffix(';')) {
                    suffix.push(w[rest.len()..].to_string());
                    w = rest;
                } else if let Some(rest) = w.strip_suffix("'s") {
                    suffix.push("'s".to_string());
                    w = rest;
                } else {
                    break;
                }
            }
            if !w.is_empty() {
                out.push(w.to_string());
            }
            out.extend(suffix.into_iter().rev());
        }
        out
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let atoms = Self::atoms(text);
        let mut ids = Vec::with_capacity(atoms.len());
        let mut i = 0;
        'outer: while i < atoms.len() {
            if let Some(candidates) = self.phrases.get(&atoms[i]) {
                for (words, id) in candidates {
                    if atoms[i..].starts_with(words) {
                        ids.push(*id);
                        i += words.len();
                        continue 'outer;
                    }
                }
            }
            return Err(data_err!("symbol {:?} is not in the vocabulary", atoms[i]));
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id)?;
            if !out.is_empty() && !ATTACHED.contains(&tok) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        Ok(out)
    }

    /// Question followed by the solution marker; the decoding prompt.
    pub fn encode_prompt(&self, problem: &Problem) -> Result<Vec<usize>> {
        let mut ids = self.encode(&problem.question)?;
        ids.push(self.id(SOLUTION)?);
        Ok(ids)
    }

    /// Prompt, solution and end-of-text; a training document.
    pub fn encode_document(&self, problem: &Problem) -> Result<Vec<usize>> {
        let mut ids = self.encode_prompt(problem)?;
        ids.extend(self.encode(&problem.solution)?);
        ids.push(self.id(EOS)?);
        Ok(ids)
    }

    /// Ids of the answer tokens `0..23`, in value order.
    pub fn answer_ids(&self) -> Result<Vec<usize>> {
        (0..MODULUS).map(|v| self.id(&v.to_string())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::igsm::{fixture_graph, render_with, FIXTURE_LETTERS};

    #[test]
    fn worked_example_round_trips() {
        let tok = Tokenizer::for_igsm(&GenConfig::default()).unwrap();
        let (g, s) = fixture_graph();
        let p = render_with(&g, &FIXTURE_LETTERS, &s).unwrap();
        for text in [&p.question, &p.solution] {
            let ids = tok.encode(text).unwrap();
            assert_eq!(&tok.decode(&ids).unwrap(), text);
        }
        let doc = tok.encode_document(&p).unwrap();
        assert_eq!(doc.last().copied(), tok.eos());
        let first = tok
            .encode("The number of each Music Room's Clear Backpack equals 20.")
            .unwrap();
        assert_eq!(first.len(), 7);
    }

    #[test]
    fn unknown_symbols_are_errors() {
        let tok = Tokenizer::for_igsm(&GenConfig::default()).unwrap();
        assert!(tok.encode("The number of each Kitchen").is_err());
        assert!(tok.encode("23").is_err());
        assert!(tok.decode(&[tok.vocab_size()]).is_err());
    }

    #[test]
    fn id_mode_is_identity() {
        let tok = Tokenizer::for_ids(64).unwrap();
        assert_eq!(tok.vocab_size(), 64);
        assert_eq!(tok.encode("3 17 63").unwrap(), vec![3, 17, 63]);
        assert_eq!(tok.decode(&[0, 5]).unwrap(), "0 5");
        assert!(tok.encode("64").is_err());
    }

    #[test]
    fn serde_round_trip_restores_lookup() {
        let tok = Tokenizer::for_igsm(&GenConfig::default()).unwrap();
        let json = serde_json::to_string(&tok).unwrap();
        let mut back: Tokenizer = serde_json::from_str(&json).unwrap();
        back.rebuild().unwrap();
        assert_eq!(back, tok);
        assert_eq!(back.encode("so C = 2.").unwrap(), tok.encode("so C = 2.").unwrap());
    }
}
