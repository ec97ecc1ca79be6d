use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};
use crate::igsm::Problem;
use crate::model::{Decoder, TransformerModel};
use crate::numerics::Real;

use super::tokenizer::{Tokenizer, ANSWER};

fn argmax<T: Real>(logits: &[T], among: Option<&[usize]>) -> usize {
    let mut best = (usize::MAX, T::neg_infinity());
    let mut consider = |i: usize| {
        if best.0 == usize::MAX || logits[i] > best.1 {
            best = (i, logits[i]);
        }
    };
    match among {
        Some(ids) => ids.iter().copied().for_each(&mut consider),
        None => (0..logits.len()).for_each(&mut consider),
    }
    best.0
}

/// Greedy continuation state; keeps the decoder so an answer can be forced.
struct Greedy<'m, T> {
    decoder: Decoder<'m, T>,
    /// Last generated token not yet fed to the decoder.
    pending: Option<usize>,
    logits: Vec<T>,
}

impl<'m, T: Real> Greedy<'m, T> {
    fn run(
        model: &'m TransformerModel<T>,
        prompt: &[usize],
        max_new_tokens: usize,
        eos: Option<usize>,
    ) -> Result<(Self, Vec<usize>)> {
        let context = model.config().context_length;
        if prompt.is_empty() || prompt.len() > context {
            return Err(data_err!(
                "prompt of {} tokens does not fit context {context}",
                prompt.len()
            ));
        }
        let mut decoder = Decoder::new(model);
        let mut logits = Vec::new();
        for &t in prompt {
            logits = decoder.push(t)?;
        }
        let budget = max_new_tokens.min(context - prompt.len() + 1);
        let mut out = Vec::with_capacity(budget);
        let mut pending = None;
        while out.len() < budget {
            if let Some(p) = pending.take() {
                logits = decoder.push(p)?;
            }
            let next = argmax(&logits, None);
            if Some(next) == eos {
                break;
            }
            out.push(next);
            pending = Some(next);
            if decoder.len() == context {
                break;
            }
        }
        Ok((
            Greedy {
                decoder,
                pending,
                logits,
            },
            out,
        ))
    }

    /// Feeds `token` after the continuation and returns the argmax among `among`.
    fn force(mut self, token: usize, among: &[usize]) -> Result<Option<usize>> {
        let context = self.decoder.model_context();
        let needed = usize::from(self.pending.is_some()) + 1;
        if self.decoder.len() + needed > context {
            return Ok(None);
        }
        if let Some(p) = self.pending.take() {
            self.decoder.push(p)?;
        }
        self.logits = self.decoder.push(token)?;
        Ok(Some(argmax(&self.logits, Some(among))))
    }
}

/// Argmax decoding until `eos` or `max_new_tokens` or a full context. The
/// end-of-text token is not included in the result.
pub fn greedy_decode<T: Real>(
    model: &TransformerModel<T>,
    prompt: &[usize],
    max_new_tokens: usize,
    eos: Option<usize>,
) -> Result<Vec<usize>> {
    Greedy::run(model, prompt, max_new_tokens, eos).map(|(_, out)| out)
}

/// Integer after the last `Answer:` marker; `None` when absent or malformed.
pub fn extract_answer(text: &str) -> Option<u32> {
    let idx = text.rfind(ANSWER)?;
    let rest = text[idx + ANSWER.len()..].trim_start();
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Generation cap; `None` fills the context.
    #[serde(default)]
    pub max_new_tokens: Option<usize>,
    /// When a continuation has no answer, append the answer marker and take
    /// the argmax over the answer tokens. Such items are flagged `forced`.
    #[serde(default = "yes")]
    pub force_answer: bool,
    #[serde(default)]
    pub limit: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_new_tokens: None,
            force_answer: true,
            limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Index within the evaluated problem list.
    pub problem: usize,
    pub seed: u64,
    pub predicted: Option<u32>,
    pub gold: u32,
    pub decoded_tokens: usize,
    pub correct: bool,
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_eval: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Items whose answer was forced.
    pub n_forced: usize,
    /// Correct items that produced their own answer marker.
    pub n_correct_unforced: usize,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        let n_eval = records.len();
        let n_correct = records.iter().filter(|r| r.correct).count();
        EvalReport {
            n_eval,
            n_correct,
            accuracy: if n_eval == 0 {
                0.0
            } else {
                n_correct as f64 / n_eval as f64
            },
            n_forced: records.iter().filter(|r| r.forced).count(),
            n_correct_unforced: records.iter().filter(|r| r.correct && !r.forced).count(),
            records,
        }
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "n_eval,n_correct,accuracy,n_forced,n_correct_unforced\n{},{},{},{},{}\n",
            self.n_eval, self.n_correct, self.accuracy, self.n_forced, self.n_correct_unforced
        )
    }

    /// One JSON record per line, in problem order.
    pub fn records_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| crate::Error::Serde(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn eval_one<T: Real>(
    model: &TransformerModel<T>,
    tok: &Tokenizer,
    config: &EvalConfig,
    answers: &[usize],
    index: usize,
    problem: &Problem,
) -> EvalRecord {
    let mut record = EvalRecord {
        problem: index,
        seed: problem.seed,
        predicted: None,
        gold: problem.answer,
        decoded_tokens: 0,
        correct: false,
        forced: false,
    };
    let Ok(prompt) = tok.encode_prompt(problem) else {
        return record;
    };
    let context = model.config().context_length;
    let room = context.saturating_sub(prompt.len() + 1);
    let max_new = config.max_new_tokens.map_or(room, |m| m.min(room));
    let Ok((state, out)) = Greedy::run(model, &prompt, max_new, tok.eos()) else {
        return record;
    };
    record.decoded_tokens = out.len();
    record.predicted = tok.decode(&out).ok().as_deref().and_then(extract_answer);
    if record.predicted.is_none() && config.force_answer {
        if let Ok(marker) = tok.id(ANSWER) {
            if let Ok(Some(id)) = state.force(marker, answers) {
                record.predicted = answers.iter().position(|&a| a == id).map(|v| v as u32);
                record.forced = true;
            }
        }
    }
    record.correct = record.predicted == Some(problem.answer);
    record
}

/// Greedy-decodes every problem from its question prompt and scores the final
/// answer. Malformed continuations are scored incorrect, never errors. With
/// `threads > 1` items are split across scoped threads; records stay in
/// problem order.
pub fn evaluate_accuracy<T: Real>(
    model: &TransformerModel<T>,
    tok: &Tokenizer,
    problems: &[Problem],
    config: &EvalConfig,
    threads: usize,
) -> Result<EvalReport> {
    if tok.vocab_size() != model.config().vocab_size {
        return Err(crate::error::config_err!(
            "tokenizer has {} tokens, model vocabulary is {}",
            tok.vocab_size(),
            model.config().vocab_size
        ));
    }
    let answers = tok.answer_ids()?;
    let problems = &problems[..config.limit.map_or(problems.len(), |l| l.min(problems.len()))];
    let threads = threads.clamp(1, problems.len().max(1));
    let chunk = problems.len().div_ceil(threads).max(1);
    let records: Vec<EvalRecord> = std::thread::scope(|s| {
        let handles: Vec<_> = problems
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let answers = &answers;
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, p)| eval_one(model, tok, config, answers, c * chunk + i, p))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    Ok(EvalReport::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_extraction_rules() {
        assert_eq!(extract_answer("so F = r = 8. Answer: 8"), Some(8));
        assert_eq!(extract_answer("so F = r = 8."), None);
        assert_eq!(extract_answer("Answer: 3 Answer: 12"), Some(12));
        assert_eq!(extract_answer("Answer: 3 Answer: x"), None);
        assert_eq!(extract_answer("Answer:"), None);
        assert_eq!(extract_answer("Answer: 99999999999999999999"), None);
    }

    #[test]
    fn accuracy_is_exact_ratio() {
        let rec = |correct| EvalRecord {
            problem: 0,
            seed: 0,
            predicted: None,
            gold: 1,
            decoded_tokens: 0,
            correct,
            forced: false,
        };
        let r = EvalReport::from_records(vec![rec(true), rec(false), rec(false)]);
        assert_eq!(r.accuracy, 1.0 / 3.0);
        assert_eq!(EvalReport::from_records(vec![]).accuracy, 0.0);
    }
}
