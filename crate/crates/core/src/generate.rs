//! Seeded random networks and linkages for property tests and batch checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::UnionFind;
use crate::linkage::Linkage;
use crate::model::{Network, NetworkBuilder};

#[derive(Debug, Clone, Copy)]
pub struct BilayerSpec {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability that a pair inside a layer carries a coupler.
    pub coupler_density: f64,
    pub resistive_only: bool,
    pub value_range: (f64, f64),
    /// Shuffle node declaration order and flip oscillator polarities at random.
    pub scramble: bool,
}

impl Default for BilayerSpec {
    fn default() -> Self {
        BilayerSpec {
            min_nodes: 3,
            max_nodes: 12,
            coupler_density: 0.5,
            resistive_only: false,
            value_range: (0.1, 10.0),
            scramble: true,
        }
    }
}

/// Random bilayer network whose oscillator graph is a forest covering every node.
pub fn random_bilayer_forest<R: Rng>(rng: &mut R, spec: &BilayerSpec) -> Network {
    let n = rng.random_range(spec.min_nodes.max(3)..=spec.max_nodes.max(3));
    let n1 = rng.random_range(1..n);
    let layer = |i: usize| usize::from(i >= n1);

    let mut cross: Vec<(usize, usize)> = (0..n1).flat_map(|i| (n1..n).map(move |j| (i, j))).collect();
    cross.shuffle(rng);
    let mut uf = UnionFind::new(n);
    let mut tree: Vec<(usize, usize)> = cross.into_iter().filter(|&(i, j)| uf.union(i, j)).collect();
    // thin the spanning tree while every node stays covered and q >= 2
    tree.shuffle(rng);
    let mut degree = vec![0usize; n];
    for &(i, j) in &tree {
        degree[i] += 1;
        degree[j] += 1;
    }
    let mut osc = Vec::new();
    for (i, j) in tree {
        let removable = degree[i] > 1 && degree[j] > 1 && rng.random_bool(0.3);
        if removable {
            degree[i] -= 1;
            degree[j] -= 1;
        } else {
            osc.push((i, j));
        }
    }

    let mut couplers = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if layer(i) == layer(j) && rng.random_bool(spec.coupler_density) {
                couplers.push((i, j));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    if spec.scramble {
        order.shuffle(rng);
    }
    let name = |i: usize| format!("n{i}");
    let mut nb = NetworkBuilder::new();
    for &i in &order {
        nb.node(&name(i));
    }
    let (lo, hi) = spec.value_range;
    for (k, &(i, j)) in osc.iter().enumerate() {
        let (p, m) = if spec.scramble && rng.random_bool(0.5) { (j, i) } else { (i, j) };
        nb.osc(&format!("o{k}"), &name(p), &name(m));
    }
    for (k, &(i, j)) in couplers.iter().enumerate() {
        let kind = if spec.resistive_only { 0 } else { rng.random_range(0..3) };
        if kind != 1 {
            nb.res(&format!("r{k}"), &name(i), &name(j), rng.random_range(lo..hi));
        }
        if kind != 0 {
            nb.ind(&format!("l{k}"), &name(i), &name(j), rng.random_range(lo..hi));
        }
    }
    nb.build().expect("generated bilayer network is valid")
}

/// Random network without structural guarantees: oscillators on random distinct pairs
/// (cycles allowed) covering every node, couplers anywhere.
pub fn random_network<R: Rng>(rng: &mut R, max_nodes: usize, resistive_only: bool) -> Network {
    let n = rng.random_range(3..=max_nodes.max(3));
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    pairs.shuffle(rng);
    let mut covered = vec![false; n];
    let mut osc = Vec::new();
    for &(i, j) in &pairs {
        let need = !covered[i] || !covered[j];
        if need || rng.random_bool(0.15) {
            covered[i] = true;
            covered[j] = true;
            osc.push((i, j));
        }
    }
    let mut nb = NetworkBuilder::new();
    for i in 0..n {
        nb.node(&format!("n{i}"));
    }
    for (k, &(i, j)) in osc.iter().enumerate() {
        nb.osc(&format!("o{k}"), &format!("n{i}"), &format!("n{j}"));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if rng.random_bool(0.25) {
            let g = rng.random_range(0.1..10.0);
            if resistive_only || rng.random_bool(0.5) {
                nb.res(&format!("r{k}"), &format!("n{i}"), &format!("n{j}"), g);
            } else {
                nb.ind(&format!("l{k}"), &format!("n{i}"), &format!("n{j}"), g);
            }
        }
    }
    nb.build().expect("generated network is valid")
}

/// Random linkage on `n` nodes; every node touches an o-edge, and o- and c-edges may
/// share a pair.
pub fn random_linkage<R: Rng>(rng: &mut R, n: usize) -> Linkage {
    let n = n.max(2);
    let mut o = Vec::new();
    let mut c = Vec::new();
    let p_o = rng.random_range(0.1..0.5);
    let p_c = rng.random_range(0.05..0.4);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p_o) {
                o.push((i, j));
            }
            if rng.random_bool(p_c) {
                c.push((i, j));
            }
        }
    }
    let mut touched = vec![false; n];
    for &(i, j) in &o {
        touched[i] = true;
        touched[j] = true;
    }
    for i in 0..n {
        if !touched[i] {
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            o.push((i, j));
            touched[j] = true;
        }
    }
    Linkage::new(n, &o, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::{build_linkage, check_bipartite_cycle_parity};
    use crate::model::oscillator_forest_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bilayer_generator_meets_its_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let net = random_bilayer_forest(&mut rng, &BilayerSpec::default());
            assert!(oscillator_forest_check(&net));
            assert!(check_bipartite_cycle_parity(&build_linkage(&net)).bipartite);
            assert!(net.q() >= 2 && net.n() <= 12);
        }
    }

    #[test]
    fn linkage_generator_touches_every_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..10 {
            let lk = random_linkage(&mut rng, n);
            let mut seen = vec![false; n];
            for &(a, b) in &lk.o_edges {
                seen[a] = true;
                seen[b] = true;
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }
}
