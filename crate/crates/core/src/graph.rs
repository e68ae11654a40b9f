//! Small graph helpers shared by the model and linkage modules.

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut u: usize) -> usize {
        while self.parent[u] != u {
            self.parent[u] = self.parent[self.parent[u]];
            u = self.parent[u];
        }
        u
    }

    /// Returns false when `a` and `b` were already in the same set.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Component label per element, numbered in order of first appearance.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = Vec::with_capacity(n);
        for u in 0..n {
            let r = self.find(u);
            if map[r] == usize::MAX {
                map[r] = next;
                next += 1;
            }
            out.push(map[r]);
        }
        out
    }
}

/// Whether the subgraph induced on `nodes` by `edges` is connected.
/// Edges with an endpoint outside `nodes` are ignored. An empty node set counts as connected.
pub fn is_connected(n: usize, nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    if nodes.len() <= 1 {
        return true;
    }
    let mut member = vec![false; n];
    for &u in nodes {
        member[u] = true;
    }
    let mut uf = UnionFind::new(n);
    for &(a, b) in edges {
        if member[a] && member[b] {
            uf.union(a, b);
        }
    }
    let root = uf.find(nodes[0]);
    nodes.iter().all(|&u| uf.find(u) == root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(3, 4));
        assert!(!uf.union(1, 0));
        assert!(uf.same(0, 1));
        assert!(!uf.same(1, 3));
        assert_eq!(uf.labels(), vec![0, 0, 1, 2, 2]);
    }

    #[test]
    fn connectivity_of_induced_subgraph() {
        let edges = [(0, 1), (2, 3), (1, 3)];
        assert!(is_connected(4, &[0, 1, 3], &edges));
        assert!(!is_connected(4, &[0, 2], &edges));
        assert!(is_connected(4, &[2], &edges));
    }
}
