use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::igsm::Problem;
use crate::rng::Rng;

use super::tokenizer::Tokenizer;
use super::trainer::{Batch, BatchSource};

/// Which next-token targets of a document are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTargets {
    /// Question and solution tokens alike.
    #[default]
    All,
    /// Only tokens after the solution marker.
    Solution,
}

/// Tokenized problems served as padded rows in shuffled epochs.
pub struct DocumentSource {
    docs: Vec<Vec<usize>>,
    prompt_lens: Vec<usize>,
    targets: LossTargets,
    pad: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl DocumentSource {
    /// Fails when a document does not fit `context` input tokens.
    pub fn new(tok: &Tokenizer, problems: &[Problem], context: usize, targets: LossTargets) -> Result<Self> {
        if problems.is_empty() {
            return Err(config_err!("training corpus is empty"));
        }
        let mut docs = Vec::with_capacity(problems.len());
        let mut prompt_lens = Vec::with_capacity(problems.len());
        for (i, p) in problems.iter().enumerate() {
            let doc = tok.encode_document(p)?;
            if doc.len() > context + 1 {
                return Err(config_err!(
                    "document {i} has {} tokens; context {context} holds at most {}",
                    doc.len(),
                    context + 1
                ));
            }
            prompt_lens.push(tok.encode_prompt(p)?.len());
            docs.push(doc);
        }
        Ok(DocumentSource {
            order: (0..docs.len()).collect(),
            docs,
            prompt_lens,
            targets,
            pad: tok.pad(),
            cursor: usize::MAX,
        })
    }

    pub fn longest(&self) -> usize {
        self.docs.iter().map(Vec::len).max().unwrap_or(0)
    }
}

impl BatchSource for DocumentSource {
    fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Batch {
        let mut picked = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            if self.cursor >= self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            picked.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        let rows: Vec<(&[usize], &[usize])> = picked
            .iter()
            .map(|&d| (&self.docs[d][..self.docs[d].len() - 1], &self.docs[d][1..]))
            .collect();
        let mut batch = Batch::from_rows(&rows, self.pad);
        if self.targets == LossTargets::Solution {
            for (r, &d) in picked.iter().enumerate() {
                // target j predicts token j + 1; the solution starts at prompt_len
                let skip = self.prompt_lens[d] - 1;
                for t in &mut batch.targets[r * batch.seq..r * batch.seq + skip] {
                    *t = None;
                }
            }
        }
        batch
    }
}
