use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::render::Problem;
use super::verify::{parse_solution, Expr, Operand};

/// Range of [`template_hash`]; `hash_filter_max` keeps values below its bound.
pub const HASH_BUCKETS: u32 = 32;

/// Structure-only rendering of a solution: operation kinds and which earlier
/// variables each clause reads. Names, letters and constants are erased.
/// Unparseable solutions map to a single sentinel skeleton.
pub fn skeleton(problem: &Problem) -> String {
    let Ok((steps, _)) = parse_solution(&problem.solution) else {
        return "?".into();
    };
    // variables are numbered by definition order
    let mut index: HashMap<char, usize> = HashMap::new();
    let mut out = String::new();
    for (i, step) in steps.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        for (j, clause) in step.clauses.iter().enumerate() {
            if j > 0 {
                out.push(';');
            }
            let operand = |o: Operand| match o {
                Operand::Var(c) => index.get(&c).map_or("?".to_string(), |k| k.to_string()),
                Operand::Lit(_) => "k".into(),
            };
            match clause.expr {
                Expr::Lit(_) => out.push('k'),
                Expr::Copy { src, .. } => {
                    let _ = write!(out, "={}", operand(Operand::Var(src)));
                }
                Expr::Bin { op, a, b, .. } => {
                    let sym = match op {
                        super::verify::BinOp::Add => '+',
                        super::verify::BinOp::Sub => '-',
                        super::verify::BinOp::Mul => '*',
                    };
                    let (a, b) = (operand(a), operand(b));
                    let _ = write!(out, "{a}{sym}{b}");
                }
            }
            let next = index.len();
            index.insert(clause.lhs, next);
        }
    }
    out
}

/// First eight bytes of the SHA-256 of the skeleton.
pub fn skeleton_digest(problem: &Problem) -> u64 {
    let digest = Sha256::digest(skeleton(problem).as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Skeleton digest reduced into `[0, HASH_BUCKETS)`.
pub fn template_hash(problem: &Problem) -> u32 {
    (skeleton_digest(problem) % u64::from(HASH_BUCKETS)) as u32
}
