//! Independent checker: rebuilds the problem from its question text alone and
//! replays the printed solution against it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::render::Problem;
use super::MODULUS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operand {
    Var(char),
    Lit(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "×",
        }
    }

    fn apply(self, a: u32, b: u32) -> u32 {
        let (a, b, m) = (i64::from(a), i64::from(b), i64::from(MODULUS));
        let r = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
        };
        r.rem_euclid(m) as u32
    }
}

/// Right-hand side of one solution clause, with the printed numbers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Lit(u32),
    Copy {
        src: char,
        value: u32,
    },
    Bin {
        op: BinOp,
        a: Operand,
        b: Operand,
        va: u32,
        vb: u32,
        result: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub lhs: char,
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolutionStep {
    pub name: String,
    pub var: char,
    pub clauses: Vec<Clause>,
}

/// Where and why verification failed; `step` indexes solution steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyFailure {
    pub step: Option<usize>,
    pub reason: String,
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(s) => write!(f, "step {s}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

impl std::error::Error for VerifyFailure {}

fn fail<T>(step: Option<usize>, reason: impl Into<String>) -> Result<T, VerifyFailure> {
    Err(VerifyFailure {
        step,
        reason: reason.into(),
    })
}

fn parse_num(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.len() > 9 {
        return None;
    }
    s.parse().ok()
}

fn parse_letter(s: &str) -> Option<char> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
        _ => None,
    }
}

fn parse_operand(s: &str) -> Option<Operand> {
    parse_letter(s)
        .map(Operand::Var)
        .or_else(|| parse_num(s).map(Operand::Lit))
}

fn parse_binary(s: &str) -> Option<(BinOp, &str, &str)> {
    for op in [BinOp::Add, BinOp::Sub, BinOp::Mul] {
        if let Some((a, b)) = s.split_once(&format!(" {} ", op.symbol())) {
            return Some((op, a, b));
        }
    }
    None
}

fn parse_clause(text: &str) -> Option<Clause> {
    let parts: Vec<&str> = text.split(" = ").collect();
    let lhs = parse_letter(parts[0])?;
    let expr = match parts.as_slice() {
        [_, c] => Expr::Lit(parse_num(c)?),
        [_, src, value] => Expr::Copy {
            src: parse_letter(src)?,
            value: parse_num(value)?,
        },
        [_, sym, num, result] => {
            let (op, a, b) = parse_binary(sym)?;
            let (op2, va, vb) = parse_binary(num)?;
            if op != op2 {
                return None;
            }
            Expr::Bin {
                op,
                a: parse_operand(a)?,
                b: parse_operand(b)?,
                va: parse_num(va)?,
                vb: parse_num(vb)?,
                result: parse_num(result)?,
            }
        }
        _ => return None,
    };
    Some(Clause { lhs, expr })
}

/// Parses solution text into steps and the final answer.
pub fn parse_solution(text: &str) -> Result<(Vec<SolutionStep>, u32), VerifyFailure> {
    let Some(idx) = text.rfind("Answer: ") else {
        return fail(None, "solution has no final answer");
    };
    let Some(answer) = parse_num(text[idx + "Answer: ".len()..].trim_end_matches('.')) else {
        return fail(None, "final answer is not a number");
    };
    let body = text[..idx].trim();
    let mut steps = Vec::new();
    for (i, chunk) in body.split("Define ").skip(1).enumerate() {
        let step = Some(i);
        let chunk = chunk.trim();
        let Some(chunk) = chunk.strip_suffix('.') else {
            return fail(step, "step does not end with a period");
        };
        let Some((head, rest)) = chunk.split_once("; ") else {
            return fail(step, "step has no definition body");
        };
        let Some((name, var)) = head.rsplit_once(" as ") else {
            return fail(step, "step does not name its variable");
        };
        let Some(var) = parse_letter(var) else {
            return fail(step, format!("{var:?} is not a single letter"));
        };
        let mut clauses = Vec::new();
        let raw: Vec<&str> = rest.split("; ").collect();
        for (j, c) in raw.iter().enumerate() {
            let last = j + 1 == raw.len();
            let c = match (c.strip_prefix("so "), last) {
                (Some(c), true) => c,
                (None, false) => c,
                _ => return fail(step, format!("clause {c:?} misplaces `so`")),
            };
            match parse_clause(c) {
                Some(clause) => clauses.push(clause),
                None => return fail(step, format!("unparseable clause {c:?}")),
            }
        }
        steps.push(SolutionStep {
            name: name.to_string(),
            var,
            clauses,
        });
    }
    if steps.is_empty() {
        return fail(None, "solution has no steps");
    }
    Ok((steps, answer))
}

#[derive(Clone, Debug)]
enum Stated {
    Const(u32),
    Copy(String),
    Bin(BinOp, String, String),
    Scaled(u32, String),
    ScaledSum(u32, String, String),
    OffsetDiff(u32, String, String),
}

struct Question {
    defs: BTreeMap<String, Stated>,
    target: String,
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let s = s.strip_prefix("each ")?;
    let (a, b) = s.split_once(" and each ")?;
    Some((a.to_string(), b.to_string()))
}

fn parse_rhs(rhs: &str) -> Option<Stated> {
    if let Some(c) = parse_num(rhs) {
        return Some(Stated::Const(c));
    }
    if let Some(rest) = rhs.strip_prefix("the sum of ") {
        let (a, b) = split_pair(rest)?;
        return Some(Stated::Bin(BinOp::Add, a, b));
    }
    if let Some(rest) = rhs.strip_prefix("the difference of ") {
        let (a, b) = split_pair(rest)?;
        return Some(Stated::Bin(BinOp::Sub, a, b));
    }
    if let Some(rest) = rhs.strip_prefix("each ") {
        return Some(Stated::Copy(rest.to_string()));
    }
    let (num, rest) = rhs.split_once(' ')?;
    let k = parse_num(num)?;
    if let Some(rest) = rest.strip_prefix("times as much as the sum of ") {
        let (a, b) = split_pair(rest)?;
        return Some(Stated::ScaledSum(k, a, b));
    }
    if let Some(rest) = rest.strip_prefix("times as much as each ") {
        return Some(Stated::Scaled(k, rest.to_string()));
    }
    if let Some(rest) = rest.strip_prefix("more than the difference of ") {
        let (a, b) = split_pair(rest)?;
        return Some(Stated::OffsetDiff(k, a, b));
    }
    None
}

fn parse_question(text: &str) -> Result<Question, VerifyFailure> {
    let mut defs = BTreeMap::new();
    let mut target = None;
    for s in text.split('.').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(name) = s.strip_prefix("Find the number of ") {
            target = Some(name.to_string());
            continue;
        }
        let parsed = s
            .strip_prefix("The number of each ")
            .and_then(|r| r.split_once(" equals "))
            .and_then(|(name, rhs)| Some((name, parse_rhs(rhs)?)));
        let Some((name, def)) = parsed else {
            return fail(None, format!("unparseable question sentence {s:?}"));
        };
        if defs.insert(name.to_string(), def).is_some() {
            return fail(None, format!("{name} is stated twice"));
        }
    }
    match target {
        Some(target) => Ok(Question { defs, target }),
        None => fail(None, "question asks for nothing"),
    }
}

fn location(name: &str) -> &str {
    name.split_once("'s ").map_or(name, |(l, _)| l)
}

/// Values and op counts derived from the question text alone.
struct Oracle<'q> {
    q: &'q Question,
    memo: HashMap<String, u32>,
    active: Vec<String>,
}

impl<'q> Oracle<'q> {
    fn children(&self, name: &str) -> Vec<&'q String> {
        let loc = location(name);
        self.q.defs.keys().filter(|k| location(k) == loc).collect()
    }

    fn value(&mut self, name: &str) -> Result<u32, VerifyFailure> {
        if let Some(&v) = self.memo.get(name) {
            return Ok(v);
        }
        if self.active.iter().any(|a| a == name) {
            return fail(None, format!("question is cyclic through {name}"));
        }
        self.active.push(name.to_string());
        let v = match self.q.defs.get(name).cloned() {
            Some(Stated::Const(c)) => c % MODULUS,
            Some(Stated::Copy(a)) => self.value(&a)?,
            Some(Stated::Bin(op, a, b)) => op.apply(self.value(&a)?, self.value(&b)?),
            Some(Stated::Scaled(k, a)) => BinOp::Mul.apply(k, self.value(&a)?),
            Some(Stated::ScaledSum(k, a, b)) => {
                let s = BinOp::Add.apply(self.value(&a)?, self.value(&b)?);
                BinOp::Mul.apply(k, s)
            }
            Some(Stated::OffsetDiff(k, a, b)) => {
                let d = BinOp::Sub.apply(self.value(&a)?, self.value(&b)?);
                BinOp::Add.apply(k, d)
            }
            None => {
                let children = self.children(name);
                if children.is_empty() {
                    return fail(None, format!("{name} is never defined"));
                }
                let mut total = 0;
                for c in children {
                    total = BinOp::Add.apply(total, self.value(c)?);
                }
                total
            }
        };
        self.active.pop();
        self.memo.insert(name.to_string(), v);
        Ok(v)
    }

    /// Binary operations needed to derive `name`, each quantity counted once.
    fn ops(&self, name: &str, seen: &mut Vec<String>) -> usize {
        if seen.iter().any(|s| s == name) {
            return 0;
        }
        seen.push(name.to_string());
        let (own, deps): (usize, Vec<String>) = match self.q.defs.get(name) {
            Some(Stated::Const(_)) => (0, vec![]),
            Some(Stated::Copy(a)) => (0, vec![a.clone()]),
            Some(Stated::Bin(_, a, b)) => (1, vec![a.clone(), b.clone()]),
            Some(Stated::Scaled(_, a)) => (1, vec![a.clone()]),
            Some(Stated::ScaledSum(_, a, b)) | Some(Stated::OffsetDiff(_, a, b)) => (2, vec![a.clone(), b.clone()]),
            None => {
                let c: Vec<String> = self.children(name).into_iter().cloned().collect();
                (c.len().saturating_sub(1), c)
            }
        };
        own + deps.iter().map(|d| self.ops(d, seen)).sum::<usize>()
    }
}

/// Replays every solution step mod 23 and checks it against the question.
pub fn verify_problem(problem: &Problem) -> Result<(), VerifyFailure> {
    let question = parse_question(&problem.question)?;
    let mut oracle = Oracle {
        q: &question,
        memo: HashMap::new(),
        active: Vec::new(),
    };
    let gold = oracle.value(&question.target)?;
    let gold_ops = oracle.ops(&question.target, &mut Vec::new());

    let (steps, answer) = parse_solution(&problem.solution)?;
    let mut env: HashMap<char, u32> = HashMap::new();
    let mut ops = 0;
    for (i, step) in steps.iter().enumerate() {
        let at = Some(i);
        let lookup = |env: &HashMap<char, u32>, c: char| {
            env.get(&c).copied().ok_or_else(|| VerifyFailure {
                step: at,
                reason: format!("variable {c} used before definition"),
            })
        };
        let resolve = |env: &HashMap<char, u32>, o: Operand| match o {
            Operand::Var(c) => lookup(env, c),
            Operand::Lit(k) if k < MODULUS => Ok(k),
            Operand::Lit(k) => fail(at, format!("literal {k} outside [0, {MODULUS})")),
        };
        for (j, clause) in step.clauses.iter().enumerate() {
            let last = j + 1 == step.clauses.len();
            if (clause.lhs == step.var) != last {
                return fail(at, format!("clause {j} assigns {} out of place", clause.lhs));
            }
            if env.contains_key(&clause.lhs) {
                return fail(at, format!("variable {} defined twice", clause.lhs));
            }
            let value = match clause.expr {
                Expr::Lit(k) => {
                    if k >= MODULUS {
                        return fail(at, format!("constant {k} outside [0, {MODULUS})"));
                    }
                    k
                }
                Expr::Copy { src, value } => {
                    let actual = lookup(&env, src)?;
                    if actual != value {
                        return fail(at, format!("{src} printed as {value}, is {actual}"));
                    }
                    value
                }
                Expr::Bin {
                    op,
                    a,
                    b,
                    va,
                    vb,
                    result,
                } => {
                    let (ra, rb) = (resolve(&env, a)?, resolve(&env, b)?);
                    if (ra, rb) != (va, vb) {
                        return fail(at, format!("operands printed as {va}, {vb}, are {ra}, {rb}"));
                    }
                    let expect = op.apply(va, vb);
                    if expect != result {
                        return fail(
                            at,
                            format!("{va} {} {vb} is {expect} mod {MODULUS}, printed {result}", op.symbol()),
                        );
                    }
                    ops += 1;
                    result
                }
            };
            env.insert(clause.lhs, value);
        }
        let derived = env[&step.var];
        let expected = oracle.value(&step.name).map_err(|e| VerifyFailure { step: at, ..e })?;
        if derived != expected {
            return fail(
                at,
                format!("{} derived as {derived}, question implies {expected}", step.name),
            );
        }
    }

    let last = steps.last().expect("parse_solution rejects empty solutions");
    if last.name != question.target {
        return fail(
            None,
            format!(
                "solution ends with {}, question asks for {}",
                last.name, question.target
            ),
        );
    }
    if answer != gold || problem.answer != gold {
        return fail(
            None,
            format!(
                "answer printed {answer}, recorded {}, question implies {gold}",
                problem.answer
            ),
        );
    }
    if ops != gold_ops || problem.op_count != gold_ops {
        return fail(
            None,
            format!(
                "solution performs {ops} operations, recorded {}, question needs {gold_ops}",
                problem.op_count
            ),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::render::{fixture_graph, render_with, FIXTURE_LETTERS};
    use super::*;

    fn fixture() -> Problem {
        let (g, s) = fixture_graph();
        render_with(&g, &FIXTURE_LETTERS, &s).unwrap()
    }

    #[test]
    fn worked_example_verifies() {
        assert_eq!(verify_problem(&fixture()), Ok(()));
        let (steps, answer) = parse_solution(&fixture().solution).unwrap();
        assert_eq!(answer, 8);
        assert_eq!(steps.len(), 12);
        assert_eq!(steps[2].clauses.len(), 2);
    }

    #[test]
    fn corrupted_intermediate_fails_at_its_step() {
        let mut p = fixture();
        p.solution = p.solution.replace("d = x - h = 21 - 9 = 12", "d = x - h = 21 - 9 = 13");
        let err = verify_problem(&p).unwrap_err();
        assert_eq!(err.step, Some(8));
    }

    #[test]
    fn wrong_answer_and_op_count_fail() {
        let mut p = fixture();
        p.answer = 9;
        assert!(verify_problem(&p).is_err());
        let mut p = fixture();
        p.op_count = 8;
        assert!(verify_problem(&p).is_err());
        let mut p = fixture();
        p.question = p.question.replace("equals 20.", "equals 21.");
        assert!(verify_problem(&p).is_err());
    }

    #[test]
    fn garbage_is_rejected_without_panicking() {
        for s in [
            "",
            "Answer: x",
            "Define as; so = . Answer: 3",
            "Define A's B as Q; so Q = Z = 1. Answer: 1",
        ] {
            let mut p = fixture();
            p.solution = s.to_string();
            assert!(verify_problem(&p).is_err(), "{s:?}");
        }
    }
}
