//! Oscillator networks: netlist parsing, validation, matrix assembly and
//! canonical (bilayer) block layout.
//!
//! Capacitance is normalized to one, so a network is fully described by its
//! oscillator incidence, its coupler conductances `g` and reciprocal
//! inductances `b`, and the natural frequency `omega0` of the tanks.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::graph::UnionFind;
use crate::linkage::Bipartition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub name: String,
    /// Index of the node carrying the positive terminal.
    pub pos: usize,
    pub neg: usize,
}

/// A resistor (value = conductance) or inductor (value = reciprocal inductance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupler {
    pub name: String,
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

impl Coupler {
    fn pair(&self) -> (usize, usize) {
        unordered(self.a, self.b)
    }
}

pub(crate) fn unordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A validated network of identical LC oscillators with resistive and inductive couplers.
///
/// Immutable once built; construct through [`NetworkBuilder`], [`parse_netlist`]
/// or [`Network::from_matrices`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    nodes: Vec<String>,
    oscillators: Vec<Oscillator>,
    resistors: Vec<Coupler>,
    inductors: Vec<Coupler>,
    omega0: f64,
}

impl Network {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }
    pub fn oscillators(&self) -> &[Oscillator] {
        &self.oscillators
    }
    pub fn resistors(&self) -> &[Coupler] {
        &self.resistors
    }
    pub fn inductors(&self) -> &[Coupler] {
        &self.inductors
    }
    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn n(&self) -> usize {
        self.nodes.len()
    }
    pub fn q(&self) -> usize {
        self.oscillators.len()
    }
    pub fn has_inductors(&self) -> bool {
        !self.inductors.is_empty()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Same network with a different natural frequency.
    pub fn with_omega0(&self, omega0: f64) -> Result<Network> {
        check_omega0(omega0)?;
        let mut out = self.clone();
        out.omega0 = omega0;
        Ok(out)
    }

    /// Same network with the polarity of the listed oscillators reversed.
    pub fn with_flipped(&self, which: &[usize]) -> Network {
        let mut out = self.clone();
        for &k in which {
            let o = &mut out.oscillators[k];
            std::mem::swap(&mut o.pos, &mut o.neg);
        }
        out
    }

    /// Same network with nodes reordered: node `perm[i]` of `self` becomes node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Network {
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let remap = |c: &Coupler| Coupler {
            name: c.name.clone(),
            a: inv[c.a],
            b: inv[c.b],
            value: c.value,
        };
        Network {
            nodes: perm.iter().map(|&p| self.nodes[p].clone()).collect(),
            oscillators: self
                .oscillators
                .iter()
                .map(|o| Oscillator {
                    name: o.name.clone(),
                    pos: inv[o.pos],
                    neg: inv[o.neg],
                })
                .collect(),
            resistors: self.resistors.iter().map(remap).collect(),
            inductors: self.inductors.iter().map(remap).collect(),
            omega0: self.omega0,
        }
    }

    /// Reads a network off its incidence and Laplacian matrices.
    ///
    /// Nodes are named `n1..nn`, oscillators `o1..oq`, couplers `r<i>_<j>` / `l<i>_<j>`.
    pub fn from_matrices(
        a: &DMatrix<f64>,
        g: &DMatrix<f64>,
        b: &DMatrix<f64>,
        omega0: f64,
    ) -> Result<Network> {
        let n = a.nrows();
        if g.shape() != (n, n) || b.shape() != (n, n) {
            return Err(OscError::SizeMismatch(format!(
                "A is {}x{}, G is {}x{}, B is {}x{}",
                n,
                a.ncols(),
                g.nrows(),
                g.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let mut nb = NetworkBuilder::new();
        nb.omega0(omega0);
        for i in 0..n {
            nb.node(&format!("n{}", i + 1));
        }
        for k in 0..a.ncols() {
            let col = a.column(k);
            let pos = (0..n).find(|&r| col[r] == 1.0);
            let neg = (0..n).find(|&r| col[r] == -1.0);
            let nnz = col.iter().filter(|v| **v != 0.0).count();
            match (pos, neg, nnz) {
                (Some(p), Some(m), 2) => {
                    nb.osc(&format!("o{}", k + 1), &format!("n{}", p + 1), &format!("n{}", m + 1))
                }
                _ => {
                    return Err(OscError::Invalid(format!(
                        "column {} of A is not of the form e_r - e_s",
                        k + 1
                    )))
                }
            };
        }
        for (mat, prefix) in [(g, "r"), (b, "l")] {
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = -mat[(i, j)];
                    if w != 0.0 {
                        let name = format!("{prefix}{}_{}", i + 1, j + 1);
                        let (ni, nj) = (format!("n{}", i + 1), format!("n{}", j + 1));
                        if prefix == "r" {
                            nb.res(&name, &ni, &nj, w);
                        } else {
                            nb.ind(&name, &ni, &nj, w);
                        }
                    }
                }
            }
        }
        nb.build()
    }
}

fn check_omega0(omega0: f64) -> Result<()> {
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(OscError::Invalid(format!("omega0 must be positive, got {omega0}")));
    }
    Ok(())
}

/// Collects elements by node name and validates them into a [`Network`].
///
/// Couplers of the same kind on one node pair are merged by summing their values
/// (parallel connection); the merged element keeps the first name.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    oscillators: Vec<(String, usize, usize)>,
    resistors: Vec<(String, usize, usize, f64)>,
    inductors: Vec<(String, usize, usize, f64)>,
    omega0: f64,
}

impl Default for NetworkBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            index: HashMap::new(),
            oscillators: Vec::new(),
            resistors: Vec::new(),
            inductors: Vec::new(),
            omega0: 1.0,
        }
    }

    pub fn omega0(&mut self, w: f64) -> &mut Self {
        self.omega0 = w;
        self
    }

    /// Declares a node (idempotent) and returns its index.
    pub fn node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn osc(&mut self, name: &str, pos: &str, neg: &str) -> &mut Self {
        let (p, m) = (self.node(pos), self.node(neg));
        self.oscillators.push((name.to_string(), p, m));
        self
    }

    pub fn res(&mut self, name: &str, a: &str, b: &str, g: f64) -> &mut Self {
        let (i, j) = (self.node(a), self.node(b));
        self.resistors.push((name.to_string(), i, j, g));
        self
    }

    pub fn ind(&mut self, name: &str, a: &str, b: &str, b_value: f64) -> &mut Self {
        let (i, j) = (self.node(a), self.node(b));
        self.inductors.push((name.to_string(), i, j, b_value));
        self
    }

    pub fn build(&self) -> Result<Network> {
        check_omega0(self.omega0)?;
        let mut names: HashMap<&str, ()> = HashMap::new();
        let all_names = self
            .oscillators
            .iter()
            .map(|o| o.0.as_str())
            .chain(self.resistors.iter().map(|r| r.0.as_str()))
            .chain(self.inductors.iter().map(|r| r.0.as_str()));
        for name in all_names {
            if names.insert(name, ()).is_some() {
                return Err(OscError::Invalid(format!("duplicate element name `{name}`")));
            }
        }

        let mut oscillators = Vec::with_capacity(self.oscillators.len());
        let mut osc_pairs: HashMap<(usize, usize), &str> = HashMap::new();
        for (name, p, m) in &self.oscillators {
            if p == m {
                return Err(OscError::Invalid(format!(
                    "oscillator `{name}` connects node `{}` to itself",
                    self.nodes[*p]
                )));
            }
            if let Some(other) = osc_pairs.insert(unordered(*p, *m), name) {
                return Err(OscError::Invalid(format!(
                    "oscillators `{other}` and `{name}` are parallel"
                )));
            }
            oscillators.push(Oscillator {
                name: name.clone(),
                pos: *p,
                neg: *m,
            });
        }
        if oscillators.len() < 2 {
            return Err(OscError::Invalid(format!(
                "q >= 2 required, found {} oscillator(s)",
                oscillators.len()
            )));
        }

        let resistors = self.merge(&self.resistors, "resistor")?;
        let inductors = self.merge(&self.inductors, "inductor")?;

        let mut touched = vec![false; self.nodes.len()];
        for o in &oscillators {
            touched[o.pos] = true;
            touched[o.neg] = true;
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(OscError::Invalid(format!(
                "node `{}` not incident to any oscillator",
                self.nodes[i]
            )));
        }

        Ok(Network {
            nodes: self.nodes.clone(),
            oscillators,
            resistors,
            inductors,
            omega0: self.omega0,
        })
    }

    fn merge(&self, raw: &[(String, usize, usize, f64)], kind: &str) -> Result<Vec<Coupler>> {
        let mut out: Vec<Coupler> = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (name, a, b, v) in raw {
            if a == b {
                return Err(OscError::Invalid(format!(
                    "{kind} `{name}` connects node `{}` to itself",
                    self.nodes[*a]
                )));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(OscError::Invalid(format!(
                    "{kind} `{name}` must have a positive value, got {v}"
                )));
            }
            let c = Coupler {
                name: name.clone(),
                a: *a,
                b: *b,
                value: *v,
            };
            match seen.get(&c.pair()) {
                Some(&idx) => out[idx].value += v,
                None => {
                    seen.insert(c.pair(), out.len());
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Parses the line-oriented netlist format.
///
/// ```text
/// param omega0 <float>
/// node <id>
/// osc <name> <node+> <node->
/// res <name> <nodeA> <nodeB> <g>
/// ind <name> <nodeA> <nodeB> <b>
/// ```
///
/// With `strict`, every node must be declared by a `node` line before use.
pub fn parse_netlist(text: &str, strict: bool) -> Result<Network> {
    let mut nb = NetworkBuilder::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let syntax = |msg: String| OscError::Syntax { line, msg };
        let expect = |n: usize, usage: &str| {
            if tokens.len() != n {
                Err(syntax(format!("expected `{usage}`")))
            } else {
                Ok(())
            }
        };
        let value = |tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .map_err(|_| syntax(format!("invalid number `{tok}`")))
        };
        let known = |nb: &NetworkBuilder, node: &str| -> Result<()> {
            if strict && !nb.has_node(node) {
                Err(OscError::UndeclaredNode {
                    line,
                    node: node.to_string(),
                })
            } else {
                Ok(())
            }
        };

        match tokens[0].to_ascii_lowercase().as_str() {
            "param" => {
                expect(3, "param omega0 <float>")?;
                if tokens[1] != "omega0" {
                    return Err(syntax(format!("unknown parameter `{}`", tokens[1])));
                }
                nb.omega0(value(tokens[2])?);
            }
            "node" => {
                expect(2, "node <id>")?;
                nb.node(tokens[1]);
            }
            "osc" => {
                expect(4, "osc <name> <node+> <node->")?;
                known(&nb, tokens[2])?;
                known(&nb, tokens[3])?;
                nb.osc(tokens[1], tokens[2], tokens[3]);
            }
            "res" | "ind" => {
                let usage = format!("{} <name> <nodeA> <nodeB> <value>", tokens[0]);
                expect(5, &usage)?;
                known(&nb, tokens[2])?;
                known(&nb, tokens[3])?;
                let v = value(tokens[4])?;
                if tokens[0].eq_ignore_ascii_case("res") {
                    nb.res(tokens[1], tokens[2], tokens[3], v);
                } else {
                    nb.ind(tokens[1], tokens[2], tokens[3], v);
                }
            }
            other => return Err(syntax(format!("unknown directive `{other}`"))),
        }
    }
    nb.build()
}

/// Canonical netlist text; `parse_netlist(&render_netlist(net), true)` reproduces `net`.
pub fn render_netlist(net: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "param omega0 {:?}", net.omega0);
    for node in &net.nodes {
        let _ = writeln!(s, "node {node}");
    }
    for o in &net.oscillators {
        let _ = writeln!(s, "osc {} {} {}", o.name, net.nodes[o.pos], net.nodes[o.neg]);
    }
    for (kind, list) in [("res", &net.resistors), ("ind", &net.inductors)] {
        for c in list {
            let _ = writeln!(
                s,
                "{kind} {} {} {} {:?}",
                c.name, net.nodes[c.a], net.nodes[c.b], c.value
            );
        }
    }
    s
}

/// Incidence matrix `A` (n x q) and the conductance / susceptance Laplacians `G`, `B` (n x n).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBundle {
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl MatrixBundle {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn q(&self) -> usize {
        self.a.ncols()
    }
    pub fn b_is_zero(&self) -> bool {
        self.b.iter().all(|v| *v == 0.0)
    }
    /// `A * A^T`, the (singular) leading coefficient of the node dynamics.
    pub fn aat(&self) -> DMatrix<f64> {
        &self.a * self.a.transpose()
    }
}

fn laplacian(n: usize, couplers: &[Coupler]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for c in couplers {
        l[(c.a, c.a)] += c.value;
        l[(c.b, c.b)] += c.value;
        l[(c.a, c.b)] -= c.value;
        l[(c.b, c.a)] -= c.value;
    }
    l
}

/// Assembles `A`, `G`, `B` in declaration order.
pub fn build_matrices(net: &Network) -> MatrixBundle {
    let (n, q) = (net.n(), net.q());
    let mut a = DMatrix::zeros(n, q);
    for (k, o) in net.oscillators.iter().enumerate() {
        a[(o.pos, k)] = 1.0;
        a[(o.neg, k)] = -1.0;
    }
    MatrixBundle {
        a,
        g: laplacian(n, &net.resistors),
        b: laplacian(n, &net.inductors),
    }
}

/// True iff the oscillator graph is acyclic, i.e. `rank(A) = q`.
pub fn oscillator_forest_check(net: &Network) -> bool {
    let mut uf = UnionFind::new(net.n());
    net.oscillators.iter().all(|o| uf.union(o.pos, o.neg))
}

/// A network laid out in bilayer block form: nodes of `V1` first, every oscillator
/// oriented with its positive terminal in `V1`, so that
/// `G = diag(G1, G2)`, `B = diag(B1, B2)` and `A = [F1; -F2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredNetwork {
    /// Original node indices of the first part, in declaration order.
    pub v1: Vec<usize>,
    pub v2: Vec<usize>,
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// `permutation[i]` is the original index of canonical node `i`.
    pub permutation: Vec<usize>,
    /// Per-oscillator sign applied to its incidence column.
    pub flips: Vec<i8>,
}

impl LayeredNetwork {
    pub fn n1(&self) -> usize {
        self.v1.len()
    }
    pub fn n2(&self) -> usize {
        self.v2.len()
    }
    pub fn q(&self) -> usize {
        self.f1.ncols()
    }

    /// Builds the layout straight from its blocks; node order is the identity and no
    /// polarity flips are recorded.
    pub fn from_blocks(
        f1: DMatrix<f64>,
        f2: DMatrix<f64>,
        g1: DMatrix<f64>,
        b1: DMatrix<f64>,
        g2: DMatrix<f64>,
        b2: DMatrix<f64>,
    ) -> Result<LayeredNetwork> {
        let (n1, n2, q) = (f1.nrows(), f2.nrows(), f1.ncols());
        if f2.ncols() != q {
            return Err(OscError::SizeMismatch("F1 and F2 column counts differ".into()));
        }
        for (name, m, k) in [("G1", &g1, n1), ("B1", &b1, n1), ("G2", &g2, n2), ("B2", &b2, n2)] {
            if m.shape() != (k, k) {
                return Err(OscError::SizeMismatch(format!("{name} must be {k}x{k}")));
            }
            if !is_laplacian(m) {
                return Err(OscError::Invalid(format!("{name} is not a Laplacian")));
            }
        }
        for (name, f) in [("F1", &f1), ("F2", &f2)] {
            if !is_class_f(f) {
                return Err(OscError::Invalid(format!("{name} is not a class-F matrix")));
            }
        }
        Ok(LayeredNetwork {
            v1: (0..n1).collect(),
            v2: (n1..n1 + n2).collect(),
            f1,
            f2,
            g1,
            b1,
            g2,
            b2,
            permutation: (0..n1 + n2).collect(),
            flips: vec![1; q],
        })
    }

    /// Reassembled `(A, G, B)` in canonical node order and polarity.
    pub fn bundle(&self) -> MatrixBundle {
        let (n1, n2, q) = (self.n1(), self.n2(), self.q());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, q);
        a.view_mut((0, 0), (n1, q)).copy_from(&self.f1);
        a.view_mut((n1, 0), (n2, q)).copy_from(&(-&self.f2));
        let blockdiag = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(n, n);
            m.view_mut((0, 0), (n1, n1)).copy_from(x);
            m.view_mut((n1, n1), (n2, n2)).copy_from(y);
            m
        };
        MatrixBundle {
            a,
            g: blockdiag(&self.g1, &self.g2),
            b: blockdiag(&self.b1, &self.b2),
        }
    }
}

fn is_laplacian(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let scale = 1.0 + m.abs().max();
    (0..n).all(|i| {
        let row_sum: f64 = m.row(i).iter().sum();
        row_sum.abs() <= 1e-12 * scale
            && (0..n).all(|j| i == j || (m[(i, j)] <= 0.0 && m[(i, j)] == m[(j, i)]))
    })
}

fn is_class_f(f: &DMatrix<f64>) -> bool {
    let zero_one = f.iter().all(|v| *v == 0.0 || *v == 1.0);
    let cols = f.column_iter().all(|c| c.iter().filter(|v| **v != 0.0).count() == 1);
    let rows = f.row_iter().all(|r| r.iter().any(|v| *v != 0.0));
    zero_one && cols && rows
}

/// Permutes nodes `V1`-first and orients every oscillator into `V1`.
pub fn canonicalize(net: &Network, bip: &Bipartition) -> Result<LayeredNetwork> {
    let n = net.n();
    if bip.len() != n {
        return Err(OscError::SizeMismatch(format!(
            "bipartition covers {} nodes, network has {n}",
            bip.len()
        )));
    }
    for o in net.oscillators() {
        if bip.in_first(o.pos) == bip.in_first(o.neg) {
            return Err(OscError::NotBilayer(format!(
                "oscillator `{}` has both terminals in one part",
                o.name
            )));
        }
    }
    for c in net.resistors().iter().chain(net.inductors()) {
        if bip.in_first(c.a) != bip.in_first(c.b) {
            return Err(OscError::NotBilayer(format!("coupler `{}` crosses the parts", c.name)));
        }
    }

    let v1 = bip.first();
    let v2 = bip.second();
    let permutation: Vec<usize> = v1.iter().chain(v2.iter()).copied().collect();
    let flips: Vec<i8> = net
        .oscillators()
        .iter()
        .map(|o| if bip.in_first(o.pos) { 1 } else { -1 })
        .collect();

    let mb = build_matrices(&net.permuted(&permutation));
    let (n1, n2, q) = (v1.len(), v2.len(), net.q());
    let mut a = mb.a;
    for (k, &s) in flips.iter().enumerate() {
        if s < 0 {
            a.column_mut(k).neg_mut();
        }
    }
    Ok(LayeredNetwork {
        f1: a.view((0, 0), (n1, q)).into_owned(),
        f2: -a.view((n1, 0), (n2, q)).into_owned(),
        g1: mb.g.view((0, 0), (n1, n1)).into_owned(),
        g2: mb.g.view((n1, n1), (n2, n2)).into_owned(),
        b1: mb.b.view((0, 0), (n1, n1)).into_owned(),
        b2: mb.b.view((n1, n1), (n2, n2)).into_owned(),
        v1,
        v2,
        permutation,
        flips,
    })
}
