//! The linkage of a network: its node set with oscillator edges (o-edges) and
//! coupler edges (c-edges), plus the bipartite / bilayer tests with certificates.

use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::graph::is_connected;
use crate::model::{unordered, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    O,
    C,
}

/// Node set `0..n` with unordered o-edges and c-edges, each stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linkage {
    pub n: usize,
    pub o_edges: Vec<(usize, usize)>,
    pub c_edges: Vec<(usize, usize)>,
}

impl Linkage {
    /// Normalizes and deduplicates the edge lists.
    pub fn new(n: usize, o_edges: &[(usize, usize)], c_edges: &[(usize, usize)]) -> Self {
        let norm = |edges: &[(usize, usize)]| {
            let mut v: Vec<_> = edges.iter().map(|&(a, b)| unordered(a, b)).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        Linkage {
            n,
            o_edges: norm(o_edges),
            c_edges: norm(c_edges),
        }
    }

    pub fn has_edge(&self, a: usize, b: usize, kind: EdgeKind) -> bool {
        let e = unordered(a, b);
        match kind {
            EdgeKind::O => self.o_edges.binary_search(&e).is_ok(),
            EdgeKind::C => self.c_edges.binary_search(&e).is_ok(),
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, EdgeKind)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (edges, kind) in [(&self.o_edges, EdgeKind::O), (&self.c_edges, EdgeKind::C)] {
            for &(a, b) in edges.iter() {
                adj[a].push((b, kind));
                adj[b].push((a, kind));
            }
        }
        adj
    }
}

/// Two-colouring of the node set; `true` marks the first part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    in_first: Vec<bool>,
}

impl Bipartition {
    pub fn new(in_first: Vec<bool>) -> Self {
        Self { in_first }
    }

    pub fn from_first(n: usize, first: &[usize]) -> Self {
        let mut in_first = vec![false; n];
        for &i in first {
            in_first[i] = true;
        }
        Self { in_first }
    }

    pub fn len(&self) -> usize {
        self.in_first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_first.is_empty()
    }

    pub fn in_first(&self, node: usize) -> bool {
        self.in_first[node]
    }

    pub fn first(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.in_first[i]).collect()
    }

    pub fn second(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.in_first[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    Bipartition { v1: Vec<usize>, v2: Vec<usize> },
    /// Closed walk `e0.from -> e0.to = e1.from -> ... -> e_last.to = e0.from`.
    OddCycle { edges: Vec<WitnessEdge> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    pub e1: Vec<(usize, usize)>,
    pub e2: Vec<(usize, usize)>,
    pub connected: (bool, bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageVerdict {
    pub bipartite: bool,
    pub certificate: Certificate,
    pub layers: Option<Layers>,
}

impl LinkageVerdict {
    pub fn bipartition(&self, n: usize) -> Option<Bipartition> {
        match &self.certificate {
            Certificate::Bipartition { v1, .. } => Some(Bipartition::from_first(n, v1)),
            Certificate::OddCycle { .. } => None,
        }
    }

    pub fn layers_connected(&self) -> Option<(bool, bool)> {
        self.layers.as_ref().map(|l| l.connected)
    }
}

/// o-edges from the oscillators (polarity dropped), c-edges from every pair carrying
/// a resistor or an inductor.
pub fn build_linkage(net: &Network) -> Linkage {
    let o: Vec<_> = net.oscillators().iter().map(|o| (o.pos, o.neg)).collect();
    let c: Vec<_> = net
        .resistors()
        .iter()
        .chain(net.inductors())
        .map(|c| (c.a, c.b))
        .collect();
    Linkage::new(net.n(), &o, &c)
}

/// Parity walk over `(V, E_o ∪ E_c)`: o-edges flip the parity, c-edges keep it.
///
/// Each component is rooted at its lowest-index node, which lands in `V1`.
/// A conflict yields the tree-path cycle through the offending edge; a pair in
/// both edge sets yields the two-edge cycle on that pair.
pub fn check_bipartite_cycle_parity(lk: &Linkage) -> LinkageVerdict {
    for &(a, b) in &lk.o_edges {
        if lk.has_edge(a, b, EdgeKind::C) {
            return odd(vec![
                WitnessEdge { from: a, to: b, kind: EdgeKind::O },
                WitnessEdge { from: b, to: a, kind: EdgeKind::C },
            ]);
        }
    }

    let adj = lk.adjacency();
    let n = lk.n;
    let mut parity: Vec<Option<bool>> = vec![None; n];
    let mut parent: Vec<Option<(usize, EdgeKind)>> = vec![None; n];
    let mut depth = vec![0usize; n];
    let mut queue = std::collections::VecDeque::new();

    for root in 0..n {
        if parity[root].is_some() {
            continue;
        }
        parity[root] = Some(false);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let pu = parity[u].unwrap();
            for &(w, kind) in &adj[u] {
                let expected = pu ^ (kind == EdgeKind::O);
                match parity[w] {
                    None => {
                        parity[w] = Some(expected);
                        parent[w] = Some((u, kind));
                        depth[w] = depth[u] + 1;
                        queue.push_back(w);
                    }
                    Some(pw) if pw != expected => {
                        return odd(tree_cycle(u, w, kind, &parent, &depth));
                    }
                    Some(_) => {}
                }
            }
        }
    }

    let in_first: Vec<bool> = parity.iter().map(|p| !p.unwrap()).collect();
    let bip = Bipartition::new(in_first);
    let layers = layers_of(lk, &bip);
    LinkageVerdict {
        bipartite: true,
        certificate: Certificate::Bipartition {
            v1: bip.first(),
            v2: bip.second(),
        },
        layers: Some(layers),
    }
}

fn odd(edges: Vec<WitnessEdge>) -> LinkageVerdict {
    LinkageVerdict {
        bipartite: false,
        certificate: Certificate::OddCycle { edges },
        layers: None,
    }
}

/// Cycle `u -> .. -> lca -> .. -> w -> u` closing the BFS tree with edge `(u, w)`.
fn tree_cycle(
    u: usize,
    w: usize,
    closing: EdgeKind,
    parent: &[Option<(usize, EdgeKind)>],
    depth: &[usize],
) -> Vec<WitnessEdge> {
    let step = |x: usize| parent[x].expect("non-root node has a parent");
    let (mut x, mut y) = (u, w);
    let mut up_from_u = Vec::new();
    let mut up_from_w = Vec::new();
    while depth[x] > depth[y] {
        let (p, k) = step(x);
        up_from_u.push(WitnessEdge { from: x, to: p, kind: k });
        x = p;
    }
    while depth[y] > depth[x] {
        let (p, k) = step(y);
        up_from_w.push(WitnessEdge { from: y, to: p, kind: k });
        y = p;
    }
    while x != y {
        let (px, kx) = step(x);
        up_from_u.push(WitnessEdge { from: x, to: px, kind: kx });
        x = px;
        let (py, ky) = step(y);
        up_from_w.push(WitnessEdge { from: y, to: py, kind: ky });
        y = py;
    }
    let mut cycle = up_from_u;
    cycle.extend(up_from_w.into_iter().rev().map(|e| WitnessEdge {
        from: e.to,
        to: e.from,
        kind: e.kind,
    }));
    cycle.push(WitnessEdge { from: w, to: u, kind: closing });
    cycle
}

/// Checks that `edges` is a simple cycle of the linkage with an odd o-edge count.
pub fn replay_odd_cycle(lk: &Linkage, edges: &[WitnessEdge]) -> bool {
    if edges.len() < 2 {
        return false;
    }
    let closed = edges
        .iter()
        .zip(edges.iter().cycle().skip(1))
        .all(|(e, next)| e.to == next.from);
    let present = edges.iter().all(|e| e.from != e.to && lk.has_edge(e.from, e.to, e.kind));
    let mut visited: Vec<usize> = edges.iter().map(|e| e.from).collect();
    visited.sort_unstable();
    let simple = visited.windows(2).all(|w| w[0] != w[1]);
    // a two-edge cycle is only a cycle when the two edges differ
    let distinct = edges.len() > 2 || edges[0].kind != edges[1].kind;
    let o_count = edges.iter().filter(|e| e.kind == EdgeKind::O).count();
    closed && present && simple && distinct && o_count % 2 == 1
}

/// Direct test of the bilayer definition: every o-edge crosses the parts, no c-edge does.
pub fn check_bilayer_constructive(lk: &Linkage, bip: &Bipartition) -> bool {
    if bip.len() != lk.n {
        return false;
    }
    let crosses = |&(a, b): &(usize, usize)| bip.in_first(a) != bip.in_first(b);
    lk.o_edges.iter().all(crosses) && !lk.c_edges.iter().any(crosses)
}

fn layers_of(lk: &Linkage, bip: &Bipartition) -> Layers {
    let (e1, e2): (Vec<_>, Vec<_>) = lk
        .c_edges
        .iter()
        .copied()
        .partition(|&(a, _)| bip.in_first(a));
    let connected = (
        is_connected(lk.n, &bip.first(), &e1),
        is_connected(lk.n, &bip.second(), &e2),
    );
    Layers { e1, e2, connected }
}

/// Connectivity of the two layers `(V1, E1)` and `(V2, E2)`.
pub fn layer_connectivity(lk: &Linkage, bip: &Bipartition) -> Result<(bool, bool)> {
    if !check_bilayer_constructive(lk, bip) {
        return Err(OscError::NotBilayer(
            "an o-edge stays inside a part or a c-edge crosses".into(),
        ));
    }
    Ok(layers_of(lk, bip).connected)
}
