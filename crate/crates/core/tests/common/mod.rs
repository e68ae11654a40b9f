#![allow(dead_code)]

use oscnet::linalg::{self, CMat};
use oscnet::linkage::{check_bilayer_constructive, Bipartition, Linkage};
use oscnet::model::{build_matrices, Network};
use num_complex::Complex64;

/// Bilayer test by brute force over all bipartitions with node 0 in the first part.
pub fn exhaustive_bilayer(lk: &Linkage) -> bool {
    let n = lk.n;
    if n == 0 {
        return true;
    }
    (0u64..(1u64 << (n - 1))).any(|mask| {
        let in_first: Vec<bool> = (0..n).map(|i| i == 0 || mask & (1 << (i - 1)) == 0).collect();
        check_bilayer_constructive(lk, &Bipartition::new(in_first))
    })
}

/// `(G + jB, A A^T)` of the declared network.
pub fn reig_pencil(net: &Network) -> (CMat, CMat) {
    let mb = build_matrices(net);
    (linalg::combine(&mb.g, &mb.b), linalg::to_complex(&mb.aat()))
}

pub fn spectra_match(a: &[Complex64], b: &[Complex64], rel: f64) -> (bool, f64) {
    let scale = 1.0 + a.iter().chain(b).map(|z| z.norm()).fold(0.0, f64::max);
    let d = linalg::multiset_distance(a, b);
    (d <= rel * scale, d)
}
