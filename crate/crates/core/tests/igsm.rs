//! Generated problems against oracles that read only the rendered text.

use proptest::prelude::*;
use vld_core::igsm::{generate_problem, verify_problem, GenConfig, Problem};

/// Binary operations counted from the printed solution: each one appears
/// once symbolically and once with numbers.
fn printed_ops(solution: &str) -> usize {
    let n = solution.matches(" + ").count() + solution.matches(" - ").count() + solution.matches(" × ").count();
    assert_eq!(n % 2, 0, "odd operator count in {solution}");
    n / 2
}

/// Every printed `a op b = c` with numbers, recomputed mod 23.
fn numeric_steps_hold(solution: &str) -> usize {
    let words: Vec<&str> = solution.split_whitespace().collect();
    let num = |w: &str| w.trim_end_matches(['.', ';']).parse::<i64>().ok();
    let mut checked = 0;
    for w in words.windows(5) {
        let (Some(a), Some(b), Some(c)) = (num(w[0]), num(w[2]), num(w[4])) else {
            continue;
        };
        if w[3] != "=" {
            continue;
        }
        let v = match w[1] {
            "+" => a + b,
            "-" => a - b,
            "×" => a * b,
            _ => continue,
        };
        assert_eq!(v.rem_euclid(23), c, "{} {} {} = {}", w[0], w[1], w[2], w[4]);
        checked += 1;
    }
    checked
}

fn answer_in_text(p: &Problem) -> u32 {
    p.solution.rsplit("Answer: ").next().unwrap().parse().unwrap()
}

#[test]
fn thousand_problems_at_five_ops() {
    let cfg = GenConfig::with_max_ops(5);
    for seed in 0..1000u64 {
        let p = generate_problem(&cfg, 5, seed).unwrap();
        assert_eq!(p.op_count, 5, "seed {seed}");
        assert_eq!(printed_ops(&p.solution), 5, "seed {seed}: {}", p.solution);
        assert_eq!(numeric_steps_hold(&p.solution), 5);
        assert_eq!(answer_in_text(&p), p.answer);
        assert!(p.answer < 23);
        verify_problem(&p).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn same_seed_same_problem() {
    let cfg = GenConfig::with_max_ops(8);
    assert_eq!(
        generate_problem(&cfg, 7, 42).unwrap(),
        generate_problem(&cfg, 7, 42).unwrap()
    );
    assert_ne!(
        generate_problem(&cfg, 7, 42).unwrap(),
        generate_problem(&cfg, 7, 43).unwrap()
    );
}

#[test]
fn ops_above_max_is_a_config_error() {
    let cfg = GenConfig::with_max_ops(4);
    assert!(generate_problem(&cfg, 5, 0).unwrap_err().is_config());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_seed_and_op_count_verifies(ops in 1usize..=15, seed in any::<u64>()) {
        let cfg = GenConfig::with_max_ops(15);
        let p = generate_problem(&cfg, ops, seed).unwrap();
        prop_assert_eq!(p.op_count, ops);
        prop_assert_eq!(printed_ops(&p.solution), ops);
        prop_assert_eq!(numeric_steps_hold(&p.solution), ops);
        prop_assert!(p.template_hash < 32);
        prop_assert!(verify_problem(&p).is_ok());
    }

    #[test]
    fn tampered_answer_is_rejected(ops in 1usize..=6, seed in any::<u64>(), delta in 1u32..23) {
        let cfg = GenConfig::with_max_ops(6);
        let mut p = generate_problem(&cfg, ops, seed).unwrap();
        let wrong = (p.answer + delta) % 23;
        let cut = p.solution.rfind("Answer: ").unwrap();
        p.solution = format!("{}Answer: {wrong}", &p.solution[..cut]);
        prop_assert!(verify_problem(&p).is_err());
    }
}
