use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err, Error, Result};
use crate::rng::Rng;

use super::GenConfig;

pub const MODULUS: u32 = 23;

pub type NodeId = usize;

/// A quantity in a problem: one item type at one location, or the total of
/// every item type present at a location.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quantity {
    Item { location: String, item: String },
    Total { location: String },
}

impl Quantity {
    pub fn location(&self) -> &str {
        match self {
            Quantity::Item { location, .. } | Quantity::Total { location } => location,
        }
    }

    pub fn is_total(&self) -> bool {
        matches!(self, Quantity::Total { .. })
    }

    /// Surface name, e.g. `Music Room's Clear Backpack`.
    pub fn name(&self, category: &str) -> String {
        match self {
            Quantity::Item { location, item } => format!("{location}'s {item}"),
            Quantity::Total { location } => format!("{location}'s {category}"),
        }
    }
}

/// How a quantity is defined. Scalars and constants lie in `[0, 23)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Def {
    Const(u32),
    Copy(NodeId),
    Sum(NodeId, NodeId),
    Diff(NodeId, NodeId),
    Scale(u32, NodeId),
    ScaleSum(u32, NodeId, NodeId),
    OffsetDiff(u32, NodeId, NodeId),
    /// Implicit total of a location's item quantities, never stated as a sentence.
    Aggregate(Vec<NodeId>),
}

impl Def {
    /// Binary arithmetic operations this definition contributes to a solution.
    pub fn op_count(&self) -> usize {
        match self {
            Def::Const(_) | Def::Copy(_) => 0,
            Def::Sum(..) | Def::Diff(..) | Def::Scale(..) => 1,
            Def::ScaleSum(..) | Def::OffsetDiff(..) => 2,
            Def::Aggregate(children) => children.len().saturating_sub(1),
        }
    }

    /// Intermediate variables the rendered solution step introduces.
    pub fn temp_count(&self) -> usize {
        match self {
            Def::ScaleSum(..) | Def::OffsetDiff(..) => 1,
            Def::Aggregate(children) => children.len().saturating_sub(2),
            _ => 0,
        }
    }

    pub fn deps(&self) -> Vec<NodeId> {
        match self {
            Def::Const(_) => vec![],
            Def::Copy(a) | Def::Scale(_, a) => vec![*a],
            Def::Sum(a, b) | Def::Diff(a, b) | Def::ScaleSum(_, a, b) | Def::OffsetDiff(_, a, b) => {
                vec![*a, *b]
            }
            Def::Aggregate(children) => children.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub quantity: Quantity,
    pub def: Def,
}

/// Quantities with modular definitions; ground truth for one problem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: Vec<GraphNode>,
    pub target: NodeId,
    pub category: String,
}

impl DependencyGraph {
    pub fn op_count(&self) -> usize {
        self.nodes.iter().map(|n| n.def.op_count()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.def.deps().len()).sum()
    }

    /// Letters a rendered solution needs: one per quantity plus temporaries.
    pub fn letter_count(&self) -> usize {
        self.nodes.iter().map(|n| 1 + n.def.temp_count()).sum()
    }

    pub fn name(&self, id: NodeId) -> String {
        self.nodes[id].quantity.name(&self.category)
    }

    /// Depth-first post-order from the target, dependencies in operand order.
    /// This is both the evaluation order and the solution order.
    pub fn solution_order(&self) -> Result<Vec<NodeId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark = vec![Mark::New; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        // explicit stack: (node, next dependency index)
        let mut stack = vec![(self.target, 0usize)];
        if self.target >= self.nodes.len() {
            return Err(data_err!("target {} out of range", self.target));
        }
        mark[self.target] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let deps = self.nodes[node].def.deps();
            if *next < deps.len() {
                let d = deps[*next];
                *next += 1;
                match mark.get(d) {
                    None => return Err(data_err!("node {node} depends on missing node {d}")),
                    Some(Mark::Active) => return Err(data_err!("dependency cycle through {}", self.name(d))),
                    Some(Mark::Done) => {}
                    Some(Mark::New) => {
                        mark[d] = Mark::Active;
                        stack.push((d, 0));
                    }
                }
            } else {
                mark[node] = Mark::Done;
                order.push(node);
                stack.pop();
            }
        }
        Ok(order)
    }

    /// Does `from` depend on `to`, directly or transitively (or equal it)?
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.nodes[n].def.deps());
        }
        false
    }
}

fn m(v: i64) -> u32 {
    v.rem_euclid(i64::from(MODULUS)) as u32
}

pub fn mod_add(a: u32, b: u32) -> u32 {
    m(i64::from(a) + i64::from(b))
}

pub fn mod_sub(a: u32, b: u32) -> u32 {
    m(i64::from(a) - i64::from(b))
}

pub fn mod_mul(a: u32, b: u32) -> u32 {
    m(i64::from(a) * i64::from(b))
}

/// Value of every node, each binary operation reduced mod 23 as it happens.
pub fn evaluate_graph(graph: &DependencyGraph) -> Result<Vec<u32>> {
    let order = graph.solution_order()?;
    let mut values: Vec<Option<u32>> = vec![None; graph.nodes.len()];
    for &id in &order {
        let v = |n: NodeId| values[n].expect("dependency evaluated first");
        let value = match &graph.nodes[id].def {
            &Def::Const(c) => m(i64::from(c)),
            &Def::Copy(a) => v(a),
            &Def::Sum(a, b) => mod_add(v(a), v(b)),
            &Def::Diff(a, b) => mod_sub(v(a), v(b)),
            &Def::Scale(s, a) => mod_mul(s, v(a)),
            &Def::ScaleSum(s, a, b) => mod_mul(s, mod_add(v(a), v(b))),
            &Def::OffsetDiff(c, a, b) => mod_add(c, mod_sub(v(a), v(b))),
            Def::Aggregate(children) => children.iter().fold(0, |acc, &c| mod_add(acc, v(c))),
        };
        values[id] = Some(value);
    }
    // nodes unreachable from the target are evaluated too
    for id in 0..graph.nodes.len() {
        if values[id].is_none() {
            let sub = DependencyGraph {
                nodes: graph.nodes.clone(),
                target: id,
                category: graph.category.clone(),
            };
            values[id] = Some(evaluate_graph(&sub)?[id]);
        }
    }
    Ok(values.into_iter().map(|v| v.expect("evaluated")).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Copy,
    Sum,
    Diff,
    Scale,
    ScaleSum,
    OffsetDiff,
}

impl Kind {
    const ALL: [Kind; 6] = [
        Kind::Copy,
        Kind::Sum,
        Kind::Diff,
        Kind::Scale,
        Kind::ScaleSum,
        Kind::OffsetDiff,
    ];

    fn cost(self) -> usize {
        match self {
            Kind::Copy => 0,
            Kind::Sum | Kind::Diff | Kind::Scale => 1,
            Kind::ScaleSum | Kind::OffsetDiff => 2,
        }
    }

    fn arity(self) -> usize {
        match self {
            Kind::Copy | Kind::Scale => 1,
            _ => 2,
        }
    }

    fn weight(self) -> u32 {
        match self {
            Kind::Copy => 2,
            _ => 3,
        }
    }
}

/// Graph under construction; every node is reachable from the target.
struct Builder<'c> {
    cfg: &'c GenConfig,
    graph: DependencyGraph,
    totals: BTreeMap<String, NodeId>,
}

impl<'c> Builder<'c> {
    fn new(cfg: &'c GenConfig, rng: &mut Rng) -> Self {
        let mut b = Builder {
            cfg,
            graph: DependencyGraph {
                nodes: Vec::new(),
                target: 0,
                category: cfg.category.clone(),
            },
            totals: BTreeMap::new(),
        };
        let q = b.fresh_item(rng, None).expect("vocabulary holds at least one item");
        b.add_node(q, rng);
        b
    }

    fn used_items(&self) -> Vec<&Quantity> {
        self.graph.nodes.iter().map(|n| &n.quantity).collect()
    }

    fn fresh_item(&self, rng: &mut Rng, location: Option<&str>) -> Option<Quantity> {
        let used = self.used_items();
        let mut free: Vec<Quantity> = Vec::new();
        for loc in &self.cfg.locations {
            if location.is_some_and(|l| l != loc) {
                continue;
            }
            for item in &self.cfg.items {
                let q = Quantity::Item {
                    location: loc.clone(),
                    item: item.clone(),
                };
                if !used.contains(&&q) {
                    free.push(q);
                }
            }
        }
        free.choose(rng).cloned()
    }

    /// Adds a constant item node, attaching it to its location total if any.
    fn add_node(&mut self, q: Quantity, rng: &mut Rng) -> NodeId {
        let loc = q.location().to_string();
        let id = self.graph.nodes.len();
        self.graph.nodes.push(GraphNode {
            quantity: q,
            def: Def::Const(rng.random_range(0..MODULUS)),
        });
        if let Some(&total) = self.totals.get(&loc) {
            if let Def::Aggregate(children) = &mut self.graph.nodes[total].def {
                children.push(id);
            }
        }
        id
    }

    fn items_at(&self, loc: &str) -> Vec<NodeId> {
        self.graph
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.quantity.is_total() && n.quantity.location() == loc)
            .map(|(i, _)| i)
            .collect()
    }

    /// Picks an operand for `owner`: an existing node that does not depend on
    /// it, a fresh constant item, or a location total.
    fn operand(&mut self, owner: NodeId, avoid: &[NodeId], rng: &mut Rng) -> Option<NodeId> {
        let roll: f64 = rng.random();
        if roll < 0.35 {
            let candidates: Vec<NodeId> = (0..self.graph.nodes.len())
                .filter(|&n| n != owner && !avoid.contains(&n) && !self.graph.reaches(n, owner))
                .collect();
            if let Some(&n) = candidates.choose(rng) {
                return Some(n);
            }
        }
        if roll < 0.55 {
            if let Some(t) = self.total_operand(owner, avoid, rng) {
                return Some(t);
            }
        }
        let q = self.fresh_item(rng, None)?;
        Some(self.add_node(q, rng))
    }

    fn total_operand(&mut self, owner: NodeId, avoid: &[NodeId], rng: &mut Rng) -> Option<NodeId> {
        let loc = self.cfg.locations.choose(rng)?.clone();
        if let Some(&t) = self.totals.get(&loc) {
            return (t != owner && !avoid.contains(&t) && !self.graph.reaches(t, owner)).then_some(t);
        }
        let existing = self.items_at(&loc);
        if existing.iter().any(|&n| self.graph.reaches(n, owner)) {
            return None;
        }
        let mut children = existing;
        while children.len() < 2 {
            let q = self.fresh_item(rng, Some(&loc))?;
            children.push(self.add_node(q, rng));
        }
        children.shuffle(rng);
        let id = self.graph.nodes.len();
        self.graph.nodes.push(GraphNode {
            quantity: Quantity::Total { location: loc.clone() },
            def: Def::Aggregate(children),
        });
        self.totals.insert(loc, id);
        Some(id)
    }

    /// Redefines constant item `owner` with an operation of `kind`.
    fn expand(&mut self, owner: NodeId, kind: Kind, rng: &mut Rng) -> Option<()> {
        let a = self.operand(owner, &[], rng)?;
        let b = if kind.arity() == 2 {
            Some(self.operand(owner, &[a], rng)?)
        } else {
            None
        };
        let scalar = rng.random_range(2..MODULUS);
        let def = match (kind, b) {
            (Kind::Copy, _) => Def::Copy(a),
            (Kind::Scale, _) => Def::Scale(scalar, a),
            (Kind::Sum, Some(b)) => Def::Sum(a, b),
            (Kind::Diff, Some(b)) => Def::Diff(a, b),
            (Kind::ScaleSum, Some(b)) => Def::ScaleSum(scalar, a, b),
            (Kind::OffsetDiff, Some(b)) => Def::OffsetDiff(scalar, a, b),
            _ => unreachable!("binary kinds always draw two operands"),
        };
        self.graph.nodes[owner].def = def;
        Some(())
    }
}

/// Samples a graph whose solution needs exactly `target_ops` binary
/// operations, within the configured edge budget.
pub fn generate_graph(cfg: &GenConfig, target_ops: usize, rng: &mut Rng) -> Result<DependencyGraph> {
    const RESTARTS: usize = 200;
    const PROPOSALS: usize = 64;
    cfg.validate()?;
    if target_ops > cfg.max_ops {
        return Err(config_err!("target_ops {target_ops} exceeds max_ops {}", cfg.max_ops));
    }
    for _ in 0..RESTARTS {
        let mut b = Builder::new(cfg, rng);
        let mut copies = 0;
        let mut stuck = false;
        while b.graph.op_count() < target_ops && !stuck {
            stuck = true;
            for _ in 0..PROPOSALS {
                let remaining = target_ops - b.graph.op_count();
                let leaves: Vec<NodeId> = (0..b.graph.nodes.len())
                    .filter(|&n| matches!(b.graph.nodes[n].def, Def::Const(_)) && !b.graph.nodes[n].quantity.is_total())
                    .collect();
                let Some(&owner) = leaves.choose(rng) else { break };
                let kinds: Vec<Kind> = Kind::ALL
                    .into_iter()
                    .filter(|k| k.cost() <= remaining && (*k != Kind::Copy || copies < 3))
                    .collect();
                let Ok(&kind) = kinds.choose_weighted(rng, |k| k.weight()) else {
                    break;
                };
                let snapshot = (b.graph.clone(), b.totals.clone());
                let ok = b.expand(owner, kind, rng).is_some()
                    && b.graph.op_count() <= target_ops
                    && b.graph.edge_count() <= cfg.max_edges
                    && b.graph.letter_count() <= LETTERS.len();
                if ok {
                    copies += usize::from(kind == Kind::Copy);
                    stuck = false;
                    break;
                }
                b.graph = snapshot.0;
                b.totals = snapshot.1;
            }
        }
        if b.graph.op_count() == target_ops {
            debug_assert!(b.graph.solution_order().is_ok());
            return Ok(b.graph);
        }
    }
    Err(Error::Generation(format!(
        "no graph with {target_ops} operations within {} edges after {RESTARTS} restarts",
        cfg.max_edges
    )))
}

/// Upper- then lower-case alphabet used for solution variables.
pub const LETTERS: &[u8; 52] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modular_examples() {
        assert_eq!(mod_add(10, 21), 8);
        assert_eq!(mod_mul(20, 20), 9);
        assert_eq!(mod_sub(21, 9), 12);
        assert_eq!(mod_add(0, 0), 0);
        assert_eq!(mod_sub(3, 9), 17);
    }

    #[test]
    fn single_constant_graph() {
        let g = DependencyGraph {
            nodes: vec![GraphNode {
                quantity: Quantity::Item {
                    location: "Music Room".into(),
                    item: "Clear Backpack".into(),
                },
                def: Def::Const(20),
            }],
            target: 0,
            category: "Backpack".into(),
        };
        assert_eq!(evaluate_graph(&g).unwrap(), vec![20]);
        assert_eq!(g.op_count(), 0);
    }

    #[test]
    fn cycles_are_data_errors() {
        let item = |i: &str| Quantity::Item {
            location: "L".into(),
            item: i.into(),
        };
        let g = DependencyGraph {
            nodes: vec![
                GraphNode {
                    quantity: item("a"),
                    def: Def::Copy(1),
                },
                GraphNode {
                    quantity: item("b"),
                    def: Def::Sum(0, 0),
                },
            ],
            target: 0,
            category: "C".into(),
        };
        assert!(matches!(evaluate_graph(&g), Err(Error::Data(_))));
    }

    #[test]
    fn generated_graphs_hit_exact_op_counts() {
        let cfg = GenConfig::default();
        let mut rng = crate::rng::rng_from(4);
        for ops in 0..=cfg.max_ops {
            for _ in 0..20 {
                let g = generate_graph(&cfg, ops, &mut rng).unwrap();
                assert_eq!(g.op_count(), ops);
                assert!(g.edge_count() <= cfg.max_edges);
                let order = g.solution_order().unwrap();
                assert_eq!(order.len(), g.nodes.len(), "every node feeds the target");
                assert_eq!(*order.last().unwrap(), g.target);
                assert!(!g.nodes[g.target].quantity.is_total());
            }
        }
    }
}
