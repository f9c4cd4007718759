//! Max flow with lower bounds.
//!
//! Two networks are built on top of [`max_flow_lb`]:
//!
//! * the laminar reduction: when every school's constraint family is
//!   laminar and all quotas are integral, the type-level relaxation is a
//!   flow problem, so an integral optimum exists and is found exactly;
//! * the rounding network: an integral member of a [`RoundingPolytope`]
//!   restricted to a support, used as the vertex oracle of the lottery.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::lottery::RoundingPolytope;
use crate::model::{Allocation, Instance};
use crate::rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Sink,
    /// Auxiliary node feeding one type's students into the schools.
    Type(usize),
    /// Node `u_{R,s}` of a constraint; `None` is the synthetic whole-type-set
    /// node of a school.
    Constraint { school: usize, constraint: Option<usize> },
    Student(usize),
    /// (type, regular school) cell of the rounding network.
    Cell { ty: usize, school: usize },
    Outside,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    /// `None` means unbounded.
    pub upper: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowNetwork {
    pub nodes: Vec<NodeKind>,
    pub arcs: Vec<Arc>,
    pub source: usize,
    pub sink: usize,
}

impl Default for FlowNetwork {
    fn default() -> Self {
        FlowNetwork::new()
    }
}

impl FlowNetwork {
    pub fn new() -> Self {
        FlowNetwork { nodes: vec![NodeKind::Source, NodeKind::Sink], arcs: Vec::new(), source: 0, sink: 1 }
    }

    pub fn add_node(&mut self, kind: NodeKind) -> usize {
        self.nodes.push(kind);
        self.nodes.len() - 1
    }

    pub fn add_arc(&mut self, from: usize, to: usize, lower: i64, upper: Option<i64>) -> usize {
        self.arcs.push(Arc { from, to, lower, upper });
        self.arcs.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        for (k, a) in self.arcs.iter().enumerate() {
            if a.from >= self.nodes.len() || a.to >= self.nodes.len() {
                return Err(Error::Structure(format!("arc {k} references a missing node")));
            }
            if a.lower < 0 || a.upper.is_some_and(|u| u < a.lower) {
                return Err(Error::Structure(format!("arc {k} has bounds [{}, {:?}]", a.lower, a.upper)));
            }
            if a.to == self.source || a.from == self.sink {
                return Err(Error::Structure(format!("arc {k} enters the source or leaves the sink")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flow {
    /// Per arc, indexed like [`FlowNetwork::arcs`].
    pub values: Vec<i64>,
    /// Net flow out of the source.
    pub value: i64,
}

impl Flow {
    /// Checks bounds on every arc and conservation at every internal node.
    pub fn verify(&self, net: &FlowNetwork) -> Result<()> {
        if self.values.len() != net.arcs.len() {
            return Err(Error::Invariant("flow does not cover every arc".into()));
        }
        let mut balance = vec![0i64; net.nodes.len()];
        for (a, &f) in net.arcs.iter().zip(&self.values) {
            if f < a.lower || a.upper.is_some_and(|u| f > u) {
                return Err(Error::Invariant(format!("arc {}->{} carries {f} outside its bounds", a.from, a.to)));
            }
            balance[a.from] -= f;
            balance[a.to] += f;
        }
        for (v, &b) in balance.iter().enumerate() {
            if v != net.source && v != net.sink && b != 0 {
                return Err(Error::Invariant(format!("flow not conserved at node {v}")));
            }
        }
        if -balance[net.source] != self.value || balance[net.sink] != self.value {
            return Err(Error::Invariant("flow value mismatch".into()));
        }
        Ok(())
    }
}

struct Residual {
    to: Vec<usize>,
    cap: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Residual { to: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: i64) -> usize {
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(cap);
        self.adj[u].push(e);
        self.to.push(u);
        self.cap.push(0);
        self.adj[v].push(e + 1);
        e
    }

    /// Shortest augmenting paths (Edmonds-Karp).
    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        loop {
            let mut parent: Vec<Option<usize>> = vec![None; self.adj.len()];
            let mut visited = vec![false; self.adj.len()];
            visited[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && !visited[v] {
                        visited[v] = true;
                        parent[v] = Some(e);
                        queue.push_back(v);
                    }
                }
            }
            if !visited[t] {
                return total;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while let Some(e) = parent[v] {
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while let Some(e) = parent[v] {
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            total += push;
        }
    }
}

/// Maximum source-to-sink flow respecting every lower bound, or
/// [`Error::FlowInfeasible`] when no feasible flow exists.
pub fn max_flow_lb(net: &FlowNetwork) -> Result<Flow> {
    net.validate()?;
    let n = net.nodes.len();
    let finite: i64 = net.arcs.iter().map(|a| a.upper.unwrap_or(a.lower)).sum();
    let big = finite + 1;

    // Lower-bound elimination: circulate sink -> source and route the forced
    // lower-bound mass through a super source/sink pair.
    let (super_s, super_t) = (n, n + 1);
    let mut res = Residual::new(n + 2);
    let mut balance = vec![0i64; n];
    let mut edge_of = Vec::with_capacity(net.arcs.len());
    for a in &net.arcs {
        let cap = a.upper.map_or(big, |u| u - a.lower);
        edge_of.push(res.add_edge(a.from, a.to, cap));
        balance[a.to] += a.lower;
        balance[a.from] -= a.lower;
    }
    let back = res.add_edge(net.sink, net.source, big);
    let mut demand = 0;
    let mut super_edges = Vec::new();
    for (v, &b) in balance.iter().enumerate() {
        if b > 0 {
            super_edges.push(res.add_edge(super_s, v, b));
            demand += b;
        } else if b < 0 {
            super_edges.push(res.add_edge(v, super_t, -b));
        }
    }
    if res.max_flow(super_s, super_t) < demand {
        return Err(Error::FlowInfeasible);
    }
    let circulated = res.cap[back ^ 1];
    res.cap[back] = 0;
    res.cap[back ^ 1] = 0;
    for e in super_edges {
        res.cap[e] = 0;
        res.cap[e ^ 1] = 0;
    }
    let extra = res.max_flow(net.source, net.sink);
    let value = circulated + extra;
    if value >= big {
        return Err(Error::Structure("flow network has an unbounded source-sink path".into()));
    }

    let values = net
        .arcs
        .iter()
        .zip(&edge_of)
        .map(|(a, &e)| {
            let cap = a.upper.map_or(big, |u| u - a.lower);
            a.lower + (cap - res.cap[e])
        })
        .collect();
    let flow = Flow { values, value };
    flow.verify(net)?;
    Ok(flow)
}

/// True iff at every school any two intersecting constraint type-sets are nested.
pub fn is_laminar(inst: &Instance) -> bool {
    (0..inst.num_schools()).all(|s| {
        let family: Vec<&Vec<usize>> = inst.constraints_at(s).map(|k| &inst.constraints()[k].types).collect();
        family.iter().enumerate().all(|(a, r)| {
            family[a + 1..].iter().all(|q| {
                let meets = r.iter().any(|t| q.contains(t));
                !meets || r.iter().all(|t| q.contains(t)) || q.iter().all(|t| r.contains(t))
            })
        })
    })
}

/// The laminar reduction together with the arcs carrying each (type, school) mass.
#[derive(Clone, Debug)]
pub struct LaminarNetwork {
    pub net: FlowNetwork,
    /// `(type, regular school, arc)`; at most one arc per pair.
    pub type_arcs: Vec<(usize, usize, usize)>,
}

fn integral_quota(v: &rational::Rational) -> Result<i64> {
    rational::as_i64(v).ok_or_else(|| Error::Contract(format!("quota {} is not integral", rational::to_text(v))))
}

/// Builds the flow network of a laminar instance.
///
/// Each constraint gets a node; a constraint's arc (carrying its quotas)
/// leads to the smallest strictly larger constraint of the same school, or
/// to the sink if there is none. Each type feeds the smallest constraint
/// containing it. A school where some type is in no constraint (including
/// schools with no constraints at all) gets a synthetic node for the whole
/// type set, bounded by `[0, total students]`, which collects the top-level
/// arcs and those uncovered types.
pub fn build_laminar_network(inst: &Instance) -> Result<LaminarNetwork> {
    if !is_laminar(inst) {
        return Err(Error::NotLaminar);
    }
    let mut net = FlowNetwork::new();
    let (source, sink) = (net.source, net.sink);
    let type_nodes: Vec<usize> = (0..inst.num_types()).map(|t| net.add_node(NodeKind::Type(t))).collect();
    for (t, &node) in type_nodes.iter().enumerate() {
        net.add_arc(source, node, 0, Some(inst.type_count(t) as i64));
    }
    let total = inst.total_students() as i64;
    let mut type_arcs = Vec::new();

    for s in 0..inst.num_schools() {
        let family: Vec<usize> = inst.constraints_at(s).collect();
        let nodes: Vec<usize> = family
            .iter()
            .map(|&k| net.add_node(NodeKind::Constraint { school: s, constraint: Some(k) }))
            .collect();
        let types_of = |a: usize| &inst.constraints()[family[a]].types;
        let strictly_inside = |a: usize, b: usize| {
            types_of(a).len() < types_of(b).len() && types_of(a).iter().all(|t| types_of(b).contains(t))
        };
        let smallest = |candidates: &mut dyn Iterator<Item = usize>| candidates.min_by_key(|&b| types_of(b).len());

        let covered = |t: usize| (0..family.len()).any(|a| types_of(a).contains(&t));
        let root = if (0..inst.num_types()).all(covered) {
            None
        } else {
            let root = net.add_node(NodeKind::Constraint { school: s, constraint: None });
            net.add_arc(root, sink, 0, Some(total));
            Some(root)
        };

        for a in 0..family.len() {
            let c = &inst.constraints()[family[a]];
            let (lower, upper) = (integral_quota(&c.lower)?, integral_quota(&c.upper)?);
            let parent = smallest(&mut (0..family.len()).filter(|&b| strictly_inside(a, b)));
            let head = match parent {
                Some(b) => nodes[b],
                None => root.unwrap_or(sink),
            };
            net.add_arc(nodes[a], head, lower, Some(upper));
        }
        for (t, &tn) in type_nodes.iter().enumerate() {
            let home = smallest(&mut (0..family.len()).filter(|&a| types_of(a).contains(&t)));
            let head = match (home, root) {
                (Some(a), _) => nodes[a],
                (None, Some(r)) => r,
                (None, None) => unreachable!("uncovered type implies a root"),
            };
            let arc = net.add_arc(tn, head, 0, None);
            type_arcs.push((t, s, arc));
        }
    }
    Ok(LaminarNetwork { net, type_arcs })
}

/// Exactly feasible integral allocation placing OPT students at regular
/// schools on a laminar instance with integral quotas.
///
/// The flow fixes how many seats of each school go to each type; students of
/// a type then take those seats in instance order, each picking her
/// highest-ranked school that still has a seat for her type.
pub fn integral_opt_laminar(inst: &Instance) -> Result<Allocation> {
    let lam = build_laminar_network(inst)?;
    let flow = match max_flow_lb(&lam.net) {
        Ok(f) => f,
        Err(Error::FlowInfeasible) => return Err(Error::InfeasibleInstance),
        Err(e) => return Err(e),
    };
    let mut seats = vec![vec![0i64; inst.num_columns()]; inst.num_types()];
    for &(t, s, arc) in &lam.type_arcs {
        seats[t][s] = flow.values[arc];
    }
    for (t, row) in seats.iter_mut().enumerate() {
        let placed: i64 = row.iter().sum();
        row[inst.outside()] = inst.type_count(t) as i64 - placed;
    }
    let mut allocation = vec![0; inst.num_students()];
    for (i, slot) in allocation.iter_mut().enumerate() {
        let t = inst.student(i).ty;
        let s = inst
            .ranking(i)
            .into_iter()
            .find(|&s| seats[t][s] > 0)
            .ok_or_else(|| Error::Invariant("type seats do not cover its students".into()))?;
        seats[t][s] -= 1;
        *slot = s;
    }
    Ok(Allocation(allocation))
}

/// An integral point of `polytope` using only cells where `allowed(i, s)`.
pub fn integral_point_in_polytope(
    inst: &Instance,
    polytope: &RoundingPolytope,
    allowed: impl Fn(usize, usize) -> bool,
) -> Result<Allocation> {
    let mut net = FlowNetwork::new();
    let (source, sink) = (net.source, net.sink);
    let m = inst.num_schools();
    let mut cells = vec![vec![0usize; m]; inst.num_types()];
    for (t, row) in cells.iter_mut().enumerate() {
        for (s, cell) in row.iter_mut().enumerate() {
            *cell = net.add_node(NodeKind::Cell { ty: t, school: s });
            let (lo, hi) = polytope.type_bounds[t][s];
            net.add_arc(*cell, sink, lo, Some(hi));
        }
    }
    let outside = net.add_node(NodeKind::Outside);
    let (lo, hi) = polytope.outside_bounds;
    net.add_arc(outside, sink, lo, Some(hi));

    let mut choice_arcs = Vec::new();
    for i in 0..inst.num_students() {
        let node = net.add_node(NodeKind::Student(i));
        net.add_arc(source, node, 1, Some(1));
        let t = inst.student(i).ty;
        for s in 0..inst.num_columns() {
            if !allowed(i, s) {
                continue;
            }
            let head = if s == inst.outside() { outside } else { cells[t][s] };
            choice_arcs.push((i, s, net.add_arc(node, head, 0, Some(1))));
        }
    }
    let flow = max_flow_lb(&net)?;
    let mut allocation = vec![usize::MAX; inst.num_students()];
    for (i, s, arc) in choice_arcs {
        if flow.values[arc] == 1 {
            allocation[i] = s;
        }
    }
    if allocation.contains(&usize::MAX) {
        return Err(Error::Invariant("rounding flow left a student unassigned".into()));
    }
    let alloc = Allocation(allocation);
    if !polytope.contains(inst, &alloc.to_matrix(inst)) {
        return Err(Error::Invariant("rounding flow produced a point outside the polytope".into()));
    }
    Ok(alloc)
}
