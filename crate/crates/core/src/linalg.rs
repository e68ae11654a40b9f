//! Dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, Schur, SVD};
use num_complex::Complex64;

use crate::error::{OscError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|v| c(v, 0.0))
}

/// `re + j*im`, elementwise.
pub fn combine(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMat {
    re.zip_map(im, c)
}

pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn fro_real(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// SVD checked against its own reconstruction. Several convergence thresholds are
/// tried in turn; the first factorization that reproduces `m` to near machine
/// precision is returned, else the most accurate one.
pub fn svd<T: ComplexField<RealField = f64>>(m: DMatrix<T>, u: bool, v: bool) -> SVD<T, Dyn, Dyn> {
    let dim = m.nrows().max(m.ncols()).max(1);
    let accept = 64.0 * f64::EPSILON * dim as f64 * m.norm();
    let iters = 200 * dim;
    let mut best: Option<(f64, SVD<T, Dyn, Dyn>)> = None;
    for eps in [5.0, 1.0, 2.0, 16.0, 128.0].map(|k| k * f64::EPSILON) {
        let Some(s) = SVD::try_new(m.clone(), true, true, eps, iters) else { continue };
        let err = match s.clone().recompose() {
            Ok(r) => (r - &m).norm(),
            Err(_) => continue,
        };
        let better = best.as_ref().is_none_or(|(e, _)| err < *e);
        if better {
            best = Some((err, s));
        }
        if err <= accept {
            break;
        }
    }
    let mut s = best.map_or_else(|| SVD::new(m, true, true), |(_, s)| s);
    if !u {
        s.u = None;
    }
    if !v {
        s.v_t = None;
    }
    s
}

/// Orthonormal basis (columns) of the numerical null space of `m`; singular values
/// at or below `tol` count as zero.
pub fn null_space(m: &CMat, tol: f64) -> CMat {
    let (rows, cols) = m.shape();
    // pad wide input to square
    let padded = if rows < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = svd(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let mut out = CMat::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &v_t.row(i).adjoint());
    }
    out
}

/// Smallest singular value and its right singular vector.
pub fn smallest_singular(m: &CMat) -> (f64, CVec) {
    let svd = svd(m.clone(), false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.len() - 1;
    (svd.singular_values[k], v_t.row(k).adjoint())
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    svd(m.clone(), false, false).singular_values.iter().copied().collect()
}

/// Minimum-norm least-squares solution of `m * x = rhs`, treating singular values
/// at or below `cutoff` as zero.
/// A few steps of iterative refinement against the residual `rhs - m x` follow the
/// first solve; they stop once the residual no longer decreases.
pub fn min_norm_solve(m: &CMat, rhs: &CMat, cutoff: f64) -> CMat {
    let svd = svd(m.clone(), true, true);
    let solve = |b: &CMat| svd.solve(b, cutoff).expect("singular vectors requested");
    let mut x = solve(rhs);
    let mut res = rhs - m * &x;
    let mut norm = fro(&res);
    for _ in 0..3 {
        let candidate = &x + solve(&res);
        let next = rhs - m * &candidate;
        let next_norm = fro(&next);
        if !(next_norm < norm) {
            break;
        }
        x = candidate;
        res = next;
        norm = next_norm;
    }
    x
}

/// Moore-Penrose pseudoinverse with a relative cutoff `rel * sigma_max`.
pub fn pinv(m: &CMat, rel: f64) -> CMat {
    let svd = svd(m.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.pseudo_inverse(rel * smax).expect("singular vectors requested")
}

/// All eigenvalues of a dense complex matrix from its Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(OscError::Other("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| OscError::NoConvergence(format!("Schur iteration on {n}x{n} matrix")))?;
    let (_, t) = schur.unpack();
    let scale = fro(&t).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].norm() > 64.0 * f64::EPSILON * scale {
            let (l1, l2) = eig2x2(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            out.push(l1);
            out.push(l2);
            i += 2;
        } else {
            out.push(t[(i, i)]);
            i += 1;
        }
    }
    Ok(out)
}

fn eig2x2(a: Complex64, b: Complex64, cc: Complex64, d: Complex64) -> (Complex64, Complex64) {
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * cc;
    let s = disc.sqrt();
    (half_tr + s, half_tr - s)
}

/// Distance between two multisets of complex numbers: the larger of the worst pair
/// under greedy nearest-neighbour matching and the Hausdorff distance.
/// Returns infinity for multisets of different sizes.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    let directed = |xs: &[Complex64], ys: &[Complex64]| {
        xs.iter()
            .map(|x| ys.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    worst.max(directed(a, b)).max(directed(b, a))
}
