//! The effective Laplacian `Y`: the `Y` block of the minimum-norm solution of
//!
//! ```text
//! [ G + jB  -A ] [ E ]   [ 0 ]
//! [  A^T     0 ] [ Y ] = [ I ]
//! ```
//!
//! together with checks of the properties it must have for bilayer networks whose
//! oscillator graph is a forest: `Y = Y^T`, `Y s = 0` for the layer orientation `s`,
//! spectrum in the closed first quadrant, and `Y` real positive semidefinite when `B = 0`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::graph::UnionFind;
use crate::linalg::{self, combine, fro, to_complex, CMat};
use crate::linkage::{check_bipartite_cycle_parity, Bipartition, Linkage};
use crate::model::{build_matrices, canonicalize, oscillator_forest_check, LayeredNetwork, MatrixBundle, Network};

const ALG_REL: f64 = 1e-10;
const EIG_REL: f64 = 1e-8;
/// Absolute floor added to the relative tolerances.
const ABS_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub m: CMat,
    pub rhs: CMat,
    pub n: usize,
    pub q: usize,
    /// Orientation of each oscillator relative to the layers: +1 when its positive
    /// terminal sits in the first layer.
    pub orientation: Vec<f64>,
}

fn linkage_of_bundle(mb: &MatrixBundle) -> Linkage {
    let (n, q) = (mb.n(), mb.q());
    let o: Vec<(usize, usize)> = (0..q)
        .filter_map(|k| {
            let col = mb.a.column(k);
            let p = (0..n).find(|&r| col[r] > 0.0)?;
            let m = (0..n).find(|&r| col[r] < 0.0)?;
            Some((p, m))
        })
        .collect();
    let mut c = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if mb.g[(i, j)] != 0.0 || mb.b[(i, j)] != 0.0 {
                c.push((i, j));
            }
        }
    }
    Linkage::new(n, &o, &c)
}

/// Assembles `M` and `N`; refuses networks whose linkage is not bilayer or whose
/// oscillator graph has a cycle.
pub fn assemble_block_system(mb: &MatrixBundle) -> Result<BlockSystem> {
    let (n, q) = (mb.n(), mb.q());
    let lk = linkage_of_bundle(mb);
    let verdict = check_bipartite_cycle_parity(&lk);
    let bip: Bipartition = verdict
        .bipartition(n)
        .ok_or_else(|| OscError::AssumptionViolated("linkage is not bilayer".into()))?;
    let mut uf = UnionFind::new(n);
    if !lk.o_edges.iter().all(|&(a, b)| uf.union(a, b)) {
        return Err(OscError::AssumptionViolated(
            "oscillator graph has a cycle (rank(A) < q)".into(),
        ));
    }
    let orientation = (0..q)
        .map(|k| {
            let pos = (0..n).find(|&r| mb.a[(r, k)] > 0.0).unwrap_or(0);
            if bip.in_first(pos) {
                1.0
            } else {
                -1.0
            }
        })
        .collect();

    let mut m = CMat::zeros(n + q, n + q);
    m.view_mut((0, 0), (n, n)).copy_from(&combine(&mb.g, &mb.b));
    m.view_mut((0, n), (n, q)).copy_from(&to_complex(&(-&mb.a)));
    m.view_mut((n, 0), (q, n)).copy_from(&to_complex(&mb.a.transpose()));
    let mut rhs = CMat::zeros(n + q, q);
    rhs.view_mut((n, 0), (q, q)).fill_with_identity();
    Ok(BlockSystem { m, rhs, n, q, orientation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub y_norm: f64,
    /// `||Y - Y^T||_F`
    pub symmetry_defect: f64,
    /// `||Y s||` with `s` the layer orientation (all ones in canonical polarity).
    pub null_defect: f64,
    pub min_real_part: f64,
    pub min_imag_part: f64,
    /// Tolerance the quadrant margins are held to.
    pub quadrant_tol: f64,
    pub b_zero: bool,
    /// `||Im Y||_F`, meaningful when `b_zero`.
    pub imag_norm: f64,
    /// Smallest eigenvalue of `Re Y` (symmetrized), meaningful when `b_zero`.
    pub min_real_eig: f64,
}

#[derive(Debug, Clone)]
pub struct EffectiveLaplacian {
    pub y: CMat,
    pub e: CMat,
    pub residual: f64,
    pub eigenvalues: Vec<Complex64>,
    pub report: PropertyReport,
}

/// Minimum-norm solve of the block system followed by the property checks; any
/// violated property is returned as an error.
pub fn effective_laplacian(bs: &BlockSystem) -> Result<EffectiveLaplacian> {
    let (n, q) = (bs.n, bs.q);
    let svals = linalg::singular_values(&bs.m);
    let smax = svals.iter().copied().fold(0.0, f64::max);
    let cutoff = smax * (n + q) as f64 * f64::EPSILON * 16.0;
    let x = linalg::min_norm_solve(&bs.m, &bs.rhs, cutoff);
    let residual = fro(&(&bs.m * &x - &bs.rhs));
    let tol = 1e-9 * (1.0 + fro(&bs.m));
    if !(residual <= tol) {
        return Err(OscError::InconsistentSystem { residual, tol });
    }
    let e = x.view((0, 0), (n, q)).into_owned();
    // components below the backward-error floor of the solve are indistinguishable from 0
    let floor = (n + q) as f64 * f64::EPSILON * fro(&bs.m) * fro(&x);
    let chop = |v: f64| if v.abs() <= floor { 0.0 } else { v };
    let y = x.view((n, 0), (q, q)).map(|z| Complex64::new(chop(z.re), chop(z.im)));

    let eigenvalues = linalg::eigenvalues(&y)?;
    let b_zero = bs.m.view((0, 0), (n, n)).iter().all(|z| z.im == 0.0);
    let report = property_report(&y, &eigenvalues, &bs.orientation, b_zero);
    check_properties(&report)?;
    Ok(EffectiveLaplacian { y, e, residual, eigenvalues, report })
}

fn property_report(y: &CMat, eig: &[Complex64], orientation: &[f64], b_zero: bool) -> PropertyReport {
    let q = y.nrows();
    let y_norm = fro(y);
    let s = CMat::from_fn(q, 1, |i, _| Complex64::new(orientation[i], 0.0));
    let max_abs = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let re = y.map(|z| z.re);
    let sym = (&re + re.transpose()) * 0.5;
    let min_real_eig = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    PropertyReport {
        y_norm,
        symmetry_defect: fro(&(y - y.transpose())),
        null_defect: fro(&(y * s)),
        min_real_part: eig.iter().map(|l| l.re).fold(f64::INFINITY, f64::min),
        min_imag_part: eig.iter().map(|l| l.im).fold(f64::INFINITY, f64::min),
        quadrant_tol: EIG_REL * (1.0 + max_abs),
        b_zero,
        imag_norm: y.iter().map(|z| z.im * z.im).sum::<f64>().sqrt(),
        min_real_eig,
    }
}

fn check_properties(r: &PropertyReport) -> Result<()> {
    let alg = ALG_REL * r.y_norm + ABS_FLOOR;
    let fail = |what: String| Err(OscError::PropertyViolated(what));
    if r.symmetry_defect > alg {
        return fail(format!("Y is not symmetric (defect {:.3e})", r.symmetry_defect));
    }
    if r.null_defect > alg {
        return fail(format!("Y does not annihilate the layer orientation ({:.3e})", r.null_defect));
    }
    if r.min_real_part < -r.quadrant_tol || r.min_imag_part < -r.quadrant_tol {
        return fail(format!(
            "eigenvalue outside the closed first quadrant (min Re {:.3e}, min Im {:.3e})",
            r.min_real_part, r.min_imag_part
        ));
    }
    if r.b_zero {
        if r.imag_norm > alg {
            return fail(format!("Y not real for B = 0 (||Im Y|| = {:.3e})", r.imag_norm));
        }
        if r.min_real_eig < -(EIG_REL * r.y_norm + ABS_FLOOR) {
            return fail(format!("Y not positive semidefinite (min eig {:.3e})", r.min_real_eig));
        }
    }
    Ok(())
}

/// `Y1 (Y1 + Y2)^+ Y2`.
pub fn parallel_sum(y1: &CMat, y2: &CMat) -> Result<CMat> {
    if y1.shape() != y2.shape() || y1.nrows() != y1.ncols() {
        return Err(OscError::SizeMismatch(format!(
            "parallel sum of {:?} and {:?}",
            y1.shape(),
            y2.shape()
        )));
    }
    let sum_pinv = linalg::pinv(&(y1 + y2), 1e-12);
    Ok(y1 * sum_pinv * y2)
}

/// Real-valued convenience wrapper around [`parallel_sum`].
pub fn parallel_sum_real(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<CMat> {
    parallel_sum(&to_complex(y1), &to_complex(y2))
}

/// Checks the bilayer and forest assumptions on `net`, lays it out canonically and
/// computes its effective Laplacian in canonical polarity.
pub fn effective_laplacian_of(net: &Network) -> Result<(LayeredNetwork, EffectiveLaplacian)> {
    let lk = crate::linkage::build_linkage(net);
    let verdict = check_bipartite_cycle_parity(&lk);
    let bip = verdict
        .bipartition(net.n())
        .ok_or_else(|| OscError::AssumptionViolated("linkage is not bilayer".into()))?;
    if !oscillator_forest_check(net) {
        return Err(OscError::AssumptionViolated(
            "oscillator graph has a cycle (rank(A) < q)".into(),
        ));
    }
    let lay = canonicalize(net, &bip)?;
    let bs = assemble_block_system(&lay.bundle())?;
    let el = effective_laplacian(&bs)?;
    Ok((lay, el))
}

/// Effective Laplacian of the network as declared, in its original polarity:
/// `D Y D` with `D = diag(flips)`.
pub fn effective_laplacian_declared(net: &Network) -> Result<EffectiveLaplacian> {
    let bs = assemble_block_system(&build_matrices(net))?;
    effective_laplacian(&bs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linalg::c;
    use crate::model::parse_netlist;
    use nalgebra::dmatrix;

    fn laplacian2(g: f64) -> DMatrix<f64> {
        dmatrix![g, -g; -g, g]
    }

    #[test]
    fn net_a_effective_laplacian_is_series_conductance() {
        let net = parse_netlist(fixtures::NET_A, false).unwrap();
        let (_, el) = effective_laplacian_of(&net).unwrap();
        let expected = to_complex(&laplacian2(0.75));
        assert!(fro(&(&el.y - &expected)) < 1e-10, "{}", el.y);
    }

    #[test]
    fn net_b_effective_laplacian_vanishes() {
        let net = parse_netlist(fixtures::NET_B, false).unwrap();
        let (_, el) = effective_laplacian_of(&net).unwrap();
        assert!(fro(&el.y) < 1e-12);
    }

    #[test]
    fn block_layout() {
        let mb = build_matrices(&parse_netlist(fixtures::NET_A, false).unwrap());
        let bs = assemble_block_system(&mb).unwrap();
        assert_eq!(bs.m.shape(), (6, 6));
        assert!(bs.m.iter().all(|z| z.im == 0.0));
        assert_eq!(bs.m[(0, 4)], c(-1.0, 0.0));
        assert_eq!(bs.m[(4, 0)], c(1.0, 0.0));
        assert_eq!(bs.rhs[(4, 0)], c(1.0, 0.0));

        let s8 = assemble_block_system(&fixtures::four_tank_layers(1.0).bundle()).unwrap();
        assert_eq!(s8.m.shape(), (10, 10));
        assert!(s8.m.view((0, 0), (6, 6)).iter().any(|z| z.im != 0.0));
    }

    #[test]
    fn uncoupled_block_system() {
        let net = parse_netlist("osc o1 a b\nosc o2 c d\n", false).unwrap();
        let bs = assemble_block_system(&build_matrices(&net)).unwrap();
        assert!(bs.m.view((0, 0), (4, 4)).iter().all(|z| *z == c(0.0, 0.0)));
        assert!(bs.m.view((4, 4), (2, 2)).iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn assumption_violations_refused() {
        let net_c = parse_netlist(fixtures::NET_C, false).unwrap();
        assert!(matches!(
            assemble_block_system(&build_matrices(&net_c)),
            Err(OscError::AssumptionViolated(_))
        ));
        let square = parse_netlist("osc o1 a b\nosc o2 c b\nosc o3 c d\nosc o4 a d\n", false).unwrap();
        assert!(matches!(
            effective_laplacian_of(&square),
            Err(OscError::AssumptionViolated(_))
        ));
    }

    #[test]
    fn parallel_sum_examples() {
        let l = laplacian2(1.0);
        let ps = parallel_sum_real(&l, &(&l * 3.0)).unwrap();
        assert!(fro(&(ps - to_complex(&(&l * 0.75)))) < 1e-12);

        let y1 = to_complex(&dmatrix![2.0, -1.0; 0.5, 3.0]);
        assert!(fro(&parallel_sum(&y1, &CMat::zeros(2, 2)).unwrap()) < 1e-14);

        let id = CMat::identity(3, 3);
        assert!(fro(&(parallel_sum(&id, &id).unwrap() - &id * c(0.5, 0.0))) < 1e-14);

        assert!(parallel_sum(&id, &CMat::identity(2, 2)).is_err());
    }

    #[test]
    fn declared_polarity_gives_conjugated_y() {
        let net = parse_netlist(fixtures::NET_A, false).unwrap().with_flipped(&[1]);
        let el = effective_laplacian_declared(&net).unwrap();
        let (lay, canon) = effective_laplacian_of(&net).unwrap();
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            lay.flips.iter().map(|&s| c(s as f64, 0.0)),
        ));
        assert!(fro(&(&el.y - &d * &canon.y * &d)) < 1e-12);
    }
}
