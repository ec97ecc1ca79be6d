use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::graph::{evaluate_graph, Def, DependencyGraph, GraphNode, NodeId, Quantity, LETTERS};
use super::hash::{skeleton_digest, template_hash};
use super::GenConfig;

/// A rendered problem with its gold answer and structural fingerprints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub question: String,
    pub solution: String,
    pub answer: u32,
    pub op_count: usize,
    pub template_hash: u32,
    /// Full-width skeleton digest, hex; used for train/validation disjointness.
    pub skeleton: String,
    pub seed: u64,
}

impl Problem {
    /// Solution with its final `Answer:` clause removed.
    pub fn solution_steps(&self) -> &str {
        self.solution
            .rfind(" Answer:")
            .map_or(self.solution.as_str(), |i| &self.solution[..i])
    }
}

/// Renders with random letters and a shuffled sentence order.
pub fn render_problem(graph: &DependencyGraph, config: &GenConfig, rng: &mut Rng) -> Result<Problem> {
    let order = graph.solution_order()?;
    let needed: usize = order.iter().map(|&n| 1 + graph.nodes[n].def.temp_count()).sum();
    if needed > LETTERS.len() {
        return Err(Error::Generation(format!(
            "solution needs {needed} variables, only {} letters exist",
            LETTERS.len()
        )));
    }
    let mut letters: Vec<char> = LETTERS.iter().map(|&b| char::from(b)).collect();
    letters.shuffle(rng);
    letters.truncate(needed);

    let mut sentences: Vec<NodeId> = order
        .iter()
        .copied()
        .filter(|&n| !graph.nodes[n].quantity.is_total())
        .collect();
    for _ in 0..config.permutation_level {
        for i in 0..sentences.len().saturating_sub(1) {
            if rng.random_bool(0.5) {
                sentences.swap(i, i + 1);
            }
        }
    }
    render_with(graph, &letters, &sentences)
}

/// Renders with explicit letters (consumed in solution order, each node's
/// letter before its temporaries) and an explicit sentence order.
pub fn render_with(graph: &DependencyGraph, letters: &[char], sentences: &[NodeId]) -> Result<Problem> {
    let order = graph.solution_order()?;
    let values = evaluate_graph(graph)?;
    let mut var: Vec<Option<char>> = vec![None; graph.nodes.len()];
    let mut pool = letters.iter().copied();
    let mut next_letter = || {
        pool.next()
            .ok_or_else(|| Error::Generation("ran out of variable letters".into()))
    };

    let mut steps = Vec::with_capacity(order.len());
    for &id in &order {
        let letter = next_letter()?;
        var[id] = Some(letter);
        let v = |n: NodeId| values[n];
        let l = |n: NodeId| var[n].expect("dependencies are named first");
        let body = match &graph.nodes[id].def {
            &Def::Const(c) => format!("so {letter} = {c}"),
            &Def::Copy(a) => format!("so {letter} = {} = {}", l(a), v(a)),
            &Def::Sum(a, b) => {
                format!(
                    "so {letter} = {} + {} = {} + {} = {}",
                    l(a),
                    l(b),
                    v(a),
                    v(b),
                    values[id]
                )
            }
            &Def::Diff(a, b) => {
                format!(
                    "so {letter} = {} - {} = {} - {} = {}",
                    l(a),
                    l(b),
                    v(a),
                    v(b),
                    values[id]
                )
            }
            &Def::Scale(s, a) => {
                format!("so {letter} = {s} × {} = {s} × {} = {}", l(a), v(a), values[id])
            }
            &Def::ScaleSum(s, a, b) => {
                let t = next_letter()?;
                let tv = super::mod_add(v(a), v(b));
                format!(
                    "{t} = {} + {} = {} + {} = {tv}; so {letter} = {s} × {t} = {s} × {tv} = {}",
                    l(a),
                    l(b),
                    v(a),
                    v(b),
                    values[id]
                )
            }
            &Def::OffsetDiff(c, a, b) => {
                let t = next_letter()?;
                let tv = super::mod_sub(v(a), v(b));
                format!(
                    "{t} = {} - {} = {} - {} = {tv}; so {letter} = {c} + {t} = {c} + {tv} = {}",
                    l(a),
                    l(b),
                    v(a),
                    v(b),
                    values[id]
                )
            }
            Def::Aggregate(children) => match children.as_slice() {
                [] => format!("so {letter} = 0"),
                [only] => format!("so {letter} = {} = {}", l(*only), v(*only)),
                [first, rest @ ..] => {
                    let mut clauses = Vec::new();
                    let (mut acc, mut acc_v) = (l(*first), v(*first));
                    for (i, &c) in rest.iter().enumerate() {
                        let sum = super::mod_add(acc_v, v(c));
                        let lhs = if i + 1 == rest.len() { letter } else { next_letter()? };
                        let prefix = if lhs == letter { "so " } else { "" };
                        clauses.push(format!("{prefix}{lhs} = {acc} + {} = {acc_v} + {} = {sum}", l(c), v(c)));
                        acc = lhs;
                        acc_v = sum;
                    }
                    clauses.join("; ")
                }
            },
        };
        steps.push(format!("Define {} as {letter}; {body}.", graph.name(id)));
    }
    let answer = values[graph.target];
    let solution = format!("{} Answer: {answer}", steps.join(" "));

    let mut question: Vec<String> = Vec::with_capacity(sentences.len() + 1);
    for &id in sentences {
        question.push(sentence(graph, id)?);
    }
    question.push(format!("Find the number of {}.", graph.name(graph.target)));

    let mut problem = Problem {
        question: question.join(" "),
        solution,
        answer,
        op_count: graph.op_count(),
        template_hash: 0,
        skeleton: String::new(),
        seed: 0,
    };
    problem.template_hash = template_hash(&problem);
    problem.skeleton = format!("{:016x}", skeleton_digest(&problem));
    Ok(problem)
}

fn sentence(graph: &DependencyGraph, id: NodeId) -> Result<String> {
    let n = |x: NodeId| graph.name(x);
    let rhs = match &graph.nodes[id].def {
        Def::Const(c) => c.to_string(),
        &Def::Copy(a) => format!("each {}", n(a)),
        &Def::Sum(a, b) => format!("the sum of each {} and each {}", n(a), n(b)),
        &Def::Diff(a, b) => format!("the difference of each {} and each {}", n(a), n(b)),
        &Def::Scale(s, a) => format!("{s} times as much as each {}", n(a)),
        &Def::ScaleSum(s, a, b) => {
            format!("{s} times as much as the sum of each {} and each {}", n(a), n(b))
        }
        &Def::OffsetDiff(c, a, b) => {
            format!("{c} more than the difference of each {} and each {}", n(a), n(b))
        }
        Def::Aggregate(_) => {
            return Err(Error::Generation(format!(
                "location total {} has no sentence form",
                n(id)
            )))
        }
    };
    Ok(format!("The number of each {} equals {rhs}.", n(id)))
}

/// Letters of the reference worked example, in solution order.
pub const FIXTURE_LETTERS: [char; 15] = [
    'C', 'X', 'M', 'N', 'R', 's', 'A', 'n', 'h', 'x', 't', 'd', 'q', 'r', 'F',
];

/// The reference worked example (answer 8) and its question sentence order.
pub fn fixture_graph() -> (DependencyGraph, Vec<NodeId>) {
    let item = |location: &str, item: &str| Quantity::Item {
        location: location.into(),
        item: item.into(),
    };
    let total = |location: &str| Quantity::Total {
        location: location.into(),
    };
    let node = |quantity, def| GraphNode { quantity, def };
    // ids: 0 C, 1 X, 2 M, 3 R, 4 s, 5 n, 6 h, 7 x, 8 t, 9 q, 10 r, 11 F
    let nodes = vec![
        node(item("Anthropology Classroom", "Toy Backpack"), Def::Const(2)),
        node(item("Music Room", "Musical Instrument Backpack"), Def::Copy(0)),
        node(item("Music Room", "Toy Backpack"), Def::ScaleSum(9, 0, 1)),
        node(item("Music Room", "Clear Backpack"), Def::Const(20)),
        node(total("Music Room"), Def::Aggregate(vec![2, 1, 3])),
        node(
            item("Literature Classroom", "Musical Instrument Backpack"),
            Def::Copy(4),
        ),
        node(item("Literature Classroom", "Diaper Backpack"), Def::Scale(20, 3)),
        node(total("Literature Classroom"), Def::Aggregate(vec![5, 6])),
        node(item("Photography Studio", "Toy Backpack"), Def::OffsetDiff(21, 7, 6)),
        node(item("Photography Studio", "Clear Backpack"), Def::Copy(7)),
        node(total("Photography Studio"), Def::Aggregate(vec![8, 9])),
        node(item("Anthropology Classroom", "Clear Backpack"), Def::Copy(10)),
    ];
    let graph = DependencyGraph {
        nodes,
        target: 11,
        category: "Backpack".into(),
    };
    (graph, vec![3, 1, 8, 5, 2, 11, 6, 0, 9])
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUESTION: &str = "The number of each Music Room's Clear Backpack equals 20. The number of each Music Room's Musical Instrument Backpack equals each Anthropology Classroom's Toy Backpack. The number of each Photography Studio's Toy Backpack equals 21 more than the difference of each Literature Classroom's Backpack and each Literature Classroom's Diaper Backpack. The number of each Literature Classroom's Musical Instrument Backpack equals each Music Room's Backpack. The number of each Music Room's Toy Backpack equals 9 times as much as the sum of each Anthropology Classroom's Toy Backpack and each Music Room's Musical Instrument Backpack. The number of each Anthropology Classroom's Clear Backpack equals each Photography Studio's Backpack. The number of each Literature Classroom's Diaper Backpack equals 20 times as much as each Music Room's Clear Backpack. The number of each Anthropology Classroom's Toy Backpack equals 2. The number of each Photography Studio's Clear Backpack equals each Literature Classroom's Backpack. Find the number of Anthropology Classroom's Clear Backpack.";

    const SOLUTION: &str = "Define Anthropology Classroom's Toy Backpack as C; so C = 2. Define Music Room's Musical Instrument Backpack as X; so X = C = 2. Define Music Room's Toy Backpack as M; N = C + X = 2 + 2 = 4; so M = 9 × N = 9 × 4 = 13. Define Music Room's Clear Backpack as R; so R = 20. Define Music Room's Backpack as s; A = M + X = 13 + 2 = 15; so s = A + R = 15 + 20 = 12. Define Literature Classroom's Musical Instrument Backpack as n; so n = s = 12. Define Literature Classroom's Diaper Backpack as h; so h = 20 × R = 20 × 20 = 9. Define Literature Classroom's Backpack as x; so x = n + h = 12 + 9 = 21. Define Photography Studio's Toy Backpack as t; d = x - h = 21 - 9 = 12; so t = 21 + d = 21 + 12 = 10. Define Photography Studio's Clear Backpack as q; so q = x = 21. Define Photography Studio's Backpack as r; so r = t + q = 10 + 21 = 8. Define Anthropology Classroom's Clear Backpack as F; so F = r = 8. Answer: 8";

    #[test]
    fn worked_example_renders_verbatim() {
        let (graph, sentences) = fixture_graph();
        let p = render_with(&graph, &FIXTURE_LETTERS, &sentences).unwrap();
        assert_eq!(p.question, QUESTION);
        assert_eq!(p.solution, SOLUTION);
        assert_eq!(p.answer, 8);
        assert_eq!(p.op_count, 9);
        assert_eq!(graph.edge_count(), 16);
    }

    #[test]
    fn const_sentence_form() {
        let (graph, _) = fixture_graph();
        assert_eq!(
            sentence(&graph, 3).unwrap(),
            "The number of each Music Room's Clear Backpack equals 20."
        );
        assert!(sentence(&graph, 4).is_err());
    }

    #[test]
    fn zero_permutation_keeps_solution_order() {
        let cfg = GenConfig {
            permutation_level: 0,
            ..GenConfig::default()
        };
        let (graph, _) = fixture_graph();
        let a = render_problem(&graph, &cfg, &mut crate::rng::rng_from(9)).unwrap();
        let b = render_problem(&graph, &cfg, &mut crate::rng::rng_from(9)).unwrap();
        assert_eq!(a, b);
        let canonical: Vec<NodeId> = graph
            .solution_order()
            .unwrap()
            .into_iter()
            .filter(|&n| !graph.nodes[n].quantity.is_total())
            .collect();
        let expected = render_with(&graph, &FIXTURE_LETTERS, &canonical).unwrap();
        assert_eq!(a.question, expected.question);
    }

    #[test]
    fn solution_steps_drop_answer() {
        let (graph, sentences) = fixture_graph();
        let p = render_with(&graph, &FIXTURE_LETTERS, &sentences).unwrap();
        assert!(p.solution_steps().ends_with("so F = r = 8."));
    }
}
