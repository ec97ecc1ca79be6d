//! Training, checkpointing and greedy evaluation on tiny problem sets.

use proptest::prelude::*;
use vld_core::igsm::{generate_problem, GenConfig, Problem};
use vld_core::model::{checkpoint, ModelConfig, TransformerModel, VldPattern};
use vld_core::numerics::Tape;
use vld_core::train::{
    evaluate_accuracy, greedy_decode, train, BatchSource, DocumentSource, EvalConfig, LossTargets, StopReason,
    Tokenizer, TrainConfig,
};

fn problems(n: usize, ops: usize, first_seed: u64) -> (GenConfig, Vec<Problem>) {
    let cfg = GenConfig::with_max_ops(ops);
    let ps = (0..n as u64)
        .map(|s| generate_problem(&cfg, ops, first_seed + s).unwrap())
        .collect();
    (cfg, ps)
}

fn model_config(vocab: usize, context: usize, pattern: VldPattern, factor: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        context_length: context,
        embed_dim: 48,
        head_count: 4,
        mlp_hidden_dim: 96,
        base_depth: 2,
        pattern,
        factor,
        seed: 7,
    }
}

fn train_config(context: usize, batch: usize, steps: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: batch,
        context_length: context,
        max_steps: steps,
        eval_interval: 50,
        convergence_threshold: 0.0,
        convergence_patience: 1_000_000,
        warmup_steps: 0,
        seed: 5,
    }
}

fn fit(
    ps: &[Problem],
    cfg: &GenConfig,
    pattern: VldPattern,
    factor: usize,
    steps: usize,
) -> (Tokenizer, TransformerModel<f32>, vld_core::train::TrainOutcome) {
    let tok = Tokenizer::for_igsm(cfg).unwrap();
    let longest = ps.iter().map(|p| tok.encode_document(p).unwrap().len()).max().unwrap();
    let context = longest + 8;
    let mut src = DocumentSource::new(&tok, ps, context, LossTargets::All).unwrap();
    let mut model = TransformerModel::<f32>::build(&model_config(tok.vocab_size(), context, pattern, factor)).unwrap();
    let out = train(
        &mut model,
        &mut src,
        &train_config(context, ps.len().min(10), steps, 3e-3),
        |_, _, _| Ok(()),
    )
    .unwrap();
    (tok, model, out)
}

#[test]
fn one_document_is_memorized() {
    let (cfg, ps) = problems(1, 2, 3);
    let (tok, model, out) = fit(&ps, &cfg, VldPattern::Cycle, 2, 300);
    let last = *out.losses.last().unwrap();
    assert!(last < 0.01, "final loss {last}");
    let prompt = tok.encode_prompt(&ps[0]).unwrap();
    let doc = tok.encode_document(&ps[0]).unwrap();
    let cont = greedy_decode(&model, &prompt, 500, tok.eos()).unwrap();
    assert_eq!(cont, doc[prompt.len()..doc.len() - 1]);
}

#[test]
fn ten_problems_are_memorized_and_scored() {
    let (cfg, ps) = problems(10, 2, 100);
    let (tok, model, out) = fit(&ps, &cfg, VldPattern::None, 1, 1200);
    assert_eq!(out.stop, StopReason::MaxSteps);
    let report = evaluate_accuracy(&model, &tok, &ps, &EvalConfig::default(), 1).unwrap();
    assert_eq!(report.n_eval, 10);
    assert_eq!(report.n_forced, 0);
    assert_eq!(report.accuracy, 1.0, "{:?}", report.records);
    let threaded = evaluate_accuracy(&model, &tok, &ps, &EvalConfig::default(), 3).unwrap();
    assert_eq!(threaded, report);
}

#[test]
fn smoothed_loss_falls_and_runs_repeat_exactly() {
    let (cfg, ps) = problems(20, 3, 40);
    let (_, a, out_a) = fit(&ps, &cfg, VldPattern::Sequence, 2, 150);
    let (_, b, out_b) = fit(&ps, &cfg, VldPattern::Sequence, 2, 150);
    assert_eq!(out_a, out_b);
    assert_eq!(checkpoint::encode(&a), checkpoint::encode(&b));
    let means = &out_a.interval_means;
    assert_eq!(means.len(), 3);
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn checkpoint_reproduces_loss() {
    let (cfg, ps) = problems(6, 2, 9);
    let (tok, model, _) = fit(&ps, &cfg, VldPattern::InverseCycle, 3, 60);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let loaded = checkpoint::load::<f32>(&path).unwrap();
    assert_eq!(loaded.schedule(), model.schedule());

    let context = model.config().context_length;
    let mut src = DocumentSource::new(&tok, &ps, context, LossTargets::All).unwrap();
    let batch = src.next_batch(4, &mut vld_core::rng::rng_from(0));
    let loss = |m: &TransformerModel<f32>| {
        let mut tape = Tape::new();
        let l = m
            .loss(&mut tape, &batch.tokens, &batch.targets, batch.rows, batch.seq)
            .unwrap();
        tape.value(l).item() as f64
    };
    assert!((loss(&model) - loss(&loaded)).abs() <= 1e-5);
}

#[test]
fn decoding_is_repeatable_and_bounded() {
    let (cfg, ps) = problems(1, 3, 1);
    let tok = Tokenizer::for_igsm(&cfg).unwrap();
    let prompt = tok.encode_prompt(&ps[0]).unwrap();
    let context = prompt.len() + 20;
    let model = TransformerModel::<f32>::build(&model_config(tok.vocab_size(), context, VldPattern::Cycle, 2)).unwrap();
    assert!(greedy_decode(&model, &prompt, 0, tok.eos()).unwrap().is_empty());
    let a = greedy_decode(&model, &prompt, 1000, None).unwrap();
    assert_eq!(a, greedy_decode(&model, &prompt, 1000, None).unwrap());
    assert!(prompt.len() + a.len() <= context + 1);
    let short = greedy_decode(&model, &prompt, 5, None).unwrap();
    assert_eq!(short, a[..5]);
}

#[test]
fn forced_answer_reports_the_numeral_value() {
    let (cfg, ps) = problems(4, 2, 11);
    let tok = Tokenizer::for_igsm(&cfg).unwrap();
    let context = ps.iter().map(|p| tok.encode_prompt(p).unwrap().len()).max().unwrap() + 6;
    let mut model =
        TransformerModel::<f32>::build(&model_config(tok.vocab_size(), context, VldPattern::None, 1)).unwrap();
    let seven = tok.id("7").unwrap();
    for p in model.params.iter_mut().filter(|p| p.name.starts_with("head.")) {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        if p.name == "head.b" {
            p.value.data_mut()[seven] = 5.0;
        }
    }
    let report = evaluate_accuracy(&model, &tok, &ps, &EvalConfig::default(), 1).unwrap();
    for (r, p) in report.records.iter().zip(&ps) {
        assert!(r.forced);
        assert_eq!(r.predicted, Some(7));
        assert_eq!(r.correct, p.answer == 7);
    }
    let strict = EvalConfig {
        force_answer: false,
        ..EvalConfig::default()
    };
    let report = evaluate_accuracy(&model, &tok, &ps, &strict, 1).unwrap();
    assert!(report.records.iter().all(|r| r.predicted.is_none() && !r.forced));
}

#[test]
fn solution_targets_mask_the_question() {
    let (cfg, ps) = problems(1, 2, 0);
    let tok = Tokenizer::for_igsm(&cfg).unwrap();
    let doc = tok.encode_document(&ps[0]).unwrap();
    let prompt_len = tok.encode_prompt(&ps[0]).unwrap().len();
    let mut src = DocumentSource::new(&tok, &ps, 300, LossTargets::Solution).unwrap();
    let b = src.next_batch(1, &mut vld_core::rng::rng_from(1));
    assert_eq!(b.tokens, doc[..doc.len() - 1]);
    assert!(b.targets[..prompt_len - 1].iter().all(Option::is_none));
    let scored: Vec<usize> = b.targets.iter().flatten().copied().collect();
    assert_eq!(scored, doc[prompt_len..]);
}

#[test]
fn oversized_document_is_a_config_error() {
    let (cfg, ps) = problems(1, 4, 0);
    let tok = Tokenizer::for_igsm(&cfg).unwrap();
    assert!(DocumentSource::new(&tok, &ps, 20, LossTargets::All)
        .err()
        .unwrap()
        .is_config());
    assert!(DocumentSource::new(&tok, &[], 20, LossTargets::All)
        .err()
        .unwrap()
        .is_config());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tokenizer_round_trips_generated_text(ops in 1usize..=10, seed in any::<u64>()) {
        let cfg = GenConfig::with_max_ops(10);
        let p = generate_problem(&cfg, ops, seed).unwrap();
        let tok = Tokenizer::for_igsm(&cfg).unwrap();
        let q = tok.encode(&p.question).unwrap();
        prop_assert_eq!(tok.decode(&q).unwrap(), p.question.clone());
        let s = tok.encode(&p.solution).unwrap();
        prop_assert_eq!(tok.decode(&s).unwrap(), p.solution.clone());
        prop_assert!(q.iter().chain(&s).all(|&i| i < tok.vocab_size()));
    }
}
