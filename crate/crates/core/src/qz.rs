//! Single-shift complex QZ iteration for the eigenvalues of a dense pencil `(A, B)`,
//! i.e. the pairs `(alpha, beta)` with `det(beta*A - alpha*B) = 0`.
//!
//! Only eigenvalues are produced. Each rotation is therefore applied to the active
//! diagonal window alone, which leaves the off-diagonal blocks stale but does not
//! change the spectrum of any diagonal block.

use std::ops::RangeInclusive;

use num_complex::Complex64;

use crate::error::{OscError, Result};
use crate::linalg::{fro, CMat};

/// One generalized eigenvalue as the ratio `alpha / beta`; `beta = 0` is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilEigenvalue {
    pub alpha: Complex64,
    pub beta: Complex64,
}

#[derive(Clone, Copy)]
struct Rot {
    c: f64,
    s: Complex64,
}

/// Row rotation with `[c s; -conj(s) c] * [f; g] = [r; 0]`.
fn zeroing_second(f: Complex64, g: Complex64) -> Rot {
    let (af, ag) = (f.norm(), g.norm());
    let nrm = af.hypot(ag);
    if nrm == 0.0 {
        Rot { c: 1.0, s: Complex64::new(0.0, 0.0) }
    } else if af == 0.0 {
        Rot { c: 0.0, s: Complex64::new(1.0, 0.0) }
    } else {
        Rot { c: af / nrm, s: (f / af) * g.conj() / nrm }
    }
}

/// Column rotation with `[x y] * [c s; -conj(s) c] = [0 r]`.
fn zeroing_first(x: Complex64, y: Complex64) -> Rot {
    let (ax, ay) = (x.norm(), y.norm());
    let nrm = ax.hypot(ay);
    if nrm == 0.0 {
        Rot { c: 1.0, s: Complex64::new(0.0, 0.0) }
    } else if ay == 0.0 {
        Rot { c: 0.0, s: Complex64::new(1.0, 0.0) }
    } else {
        Rot { c: ay / nrm, s: (y / ay) * x.conj() / nrm }
    }
}

fn rows(m: &mut CMat, r: Rot, p: usize, q: usize, cols: RangeInclusive<usize>) {
    for j in cols {
        let (x, y) = (m[(p, j)], m[(q, j)]);
        m[(p, j)] = x * r.c + r.s * y;
        m[(q, j)] = -r.s.conj() * x + y * r.c;
    }
}

fn cols(m: &mut CMat, r: Rot, p: usize, q: usize, rows: RangeInclusive<usize>) {
    for i in rows {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = x * r.c - r.s.conj() * y;
        m[(i, q)] = r.s * x + y * r.c;
    }
}

struct Pencil {
    a: CMat,
    b: CMat,
    atol: f64,
    btol: f64,
}

impl Pencil {
    fn row_rot(&mut self, r: Rot, p: usize, q: usize, w: RangeInclusive<usize>) {
        rows(&mut self.a, r, p, q, w.clone());
        rows(&mut self.b, r, p, q, w);
    }

    fn col_rot(&mut self, r: Rot, p: usize, q: usize, w: RangeInclusive<usize>) {
        cols(&mut self.a, r, p, q, w.clone());
        cols(&mut self.b, r, p, q, w);
    }

    /// Upper triangular `B`, then upper Hessenberg `A`, by Givens rotations.
    fn reduce(&mut self) {
        let n = self.a.nrows();
        if n < 2 {
            return;
        }
        let all = 0..=n - 1;
        for j in 0..n {
            for i in (j + 1..n).rev() {
                let r = zeroing_second(self.b[(i - 1, j)], self.b[(i, j)]);
                self.row_rot(r, i - 1, i, all.clone());
                self.b[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        for j in 0..n.saturating_sub(2) {
            for i in (j + 2..n).rev() {
                let r = zeroing_second(self.a[(i - 1, j)], self.a[(i, j)]);
                self.row_rot(r, i - 1, i, all.clone());
                self.a[(i, j)] = Complex64::new(0.0, 0.0);
                let r = zeroing_first(self.b[(i, i - 1)], self.b[(i, i)]);
                self.col_rot(r, i - 1, i, all.clone());
                self.b[(i, i - 1)] = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `B[k,k] = 0` inside the unreduced window `lo..=hi`: split off an infinite eigenvalue.
    fn deflate_infinite(&mut self, lo: usize, hi: usize, k: usize) {
        let w = lo..=hi;
        let zero = Complex64::new(0.0, 0.0);
        if k == lo {
            let r = zeroing_second(self.a[(lo, lo)], self.a[(lo + 1, lo)]);
            self.row_rot(r, lo, lo + 1, w);
            self.a[(lo + 1, lo)] = zero;
            self.b[(lo + 1, lo)] = zero;
            return;
        }
        for j in k..hi {
            let r = zeroing_second(self.b[(j, j + 1)], self.b[(j + 1, j + 1)]);
            self.row_rot(r, j, j + 1, w.clone());
            self.b[(j + 1, j + 1)] = zero;
            self.b[(j + 1, j)] = zero;
            if j > lo {
                let r = zeroing_first(self.a[(j + 1, j - 1)], self.a[(j + 1, j)]);
                self.col_rot(r, j - 1, j, w.clone());
                self.a[(j + 1, j - 1)] = zero;
                self.b[(j, j - 1)] = zero;
            }
        }
        let r = zeroing_first(self.a[(hi, hi - 1)], self.a[(hi, hi)]);
        self.col_rot(r, hi - 1, hi, w);
        self.a[(hi, hi - 1)] = zero;
        self.b[(hi, hi - 1)] = zero;
    }

    /// Eigenvalue of the trailing 2x2 pencil closest to `A[hi,hi] / B[hi,hi]`.
    fn wilkinson_shift(&self, hi: usize) -> Complex64 {
        let (a, b) = (&self.a, &self.b);
        let p = hi - 1;
        let (h00, h01, h10, h11) = (a[(p, p)], a[(p, hi)], a[(hi, p)], a[(hi, hi)]);
        let (t00, t01, t11) = (b[(p, p)], b[(p, hi)], b[(hi, hi)]);
        let qa = t00 * t11;
        let qb = -(h00 * t11 + h11 * t00 - h10 * t01);
        let qc = h00 * h11 - h10 * h01;
        let target = h11 / t11;
        let sq = (qb * qb - qa * qc * 4.0).sqrt();
        let big = if (qb + sq).norm() >= (qb - sq).norm() { qb + sq } else { qb - sq };
        if big.norm() == 0.0 {
            return -qb / (qa * 2.0);
        }
        let q = big * -0.5;
        let (r1, r2) = (q / qa, qc / q);
        let finite = |z: Complex64| z.re.is_finite() && z.im.is_finite();
        match (finite(r1), finite(r2)) {
            (true, true) if (r1 - target).norm() <= (r2 - target).norm() => r1,
            (true, true) => r2,
            (true, false) => r1,
            (false, true) => r2,
            _ => target,
        }
    }

    fn sweep(&mut self, lo: usize, hi: usize, mu: Complex64) {
        let w = lo..=hi;
        let zero = Complex64::new(0.0, 0.0);
        let r = zeroing_second(self.a[(lo, lo)] - mu * self.b[(lo, lo)], self.a[(lo + 1, lo)]);
        self.row_rot(r, lo, lo + 1, w.clone());
        for k in lo..hi {
            let r = zeroing_first(self.b[(k + 1, k)], self.b[(k + 1, k + 1)]);
            self.col_rot(r, k, k + 1, w.clone());
            self.b[(k + 1, k)] = zero;
            if k + 2 <= hi {
                let r = zeroing_second(self.a[(k + 1, k)], self.a[(k + 2, k)]);
                self.row_rot(r, k + 1, k + 2, w.clone());
                self.a[(k + 2, k)] = zero;
            }
        }
    }
}

/// Generalized eigenvalues of the square pencil `(a, b)` in generalized Schur order.
pub fn qz_eigenvalues(a: &CMat, b: &CMat) -> Result<Vec<PencilEigenvalue>> {
    let n = a.nrows();
    if a.shape() != (n, n) || b.shape() != (n, n) {
        return Err(OscError::SizeMismatch("QZ needs two square matrices of equal size".into()));
    }
    let mut p = Pencil {
        a: a.clone(),
        b: b.clone(),
        atol: 0.0,
        btol: 0.0,
    };
    p.reduce();
    p.atol = f64::EPSILON * fro(&p.a).max(f64::MIN_POSITIVE);
    p.btol = f64::EPSILON * fro(&p.b).max(f64::MIN_POSITIVE);

    let max_iter = 60 * n.max(1);
    let mut iter = 0;
    let mut stalled = 0;
    let mut hi = n.saturating_sub(1);
    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            if p.a[(lo, lo - 1)].norm() <= p.atol {
                p.a[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            stalled = 0;
            continue;
        }
        if let Some(k) = (lo..=hi).find(|&k| p.b[(k, k)].norm() <= p.btol) {
            p.b[(k, k)] = Complex64::new(0.0, 0.0);
            p.deflate_infinite(lo, hi, k);
            continue;
        }
        iter += 1;
        stalled += 1;
        if iter > max_iter {
            return Err(OscError::NoConvergence(format!(
                "QZ on {n}x{n} pencil after {max_iter} sweeps"
            )));
        }
        let mu = if stalled % 11 == 10 {
            // exceptional shift to break cycling
            p.a[(hi, hi)] / p.b[(hi, hi)] + p.a[(hi, hi - 1)] / p.b[(hi - 1, hi - 1)] * 1.5
        } else {
            p.wilkinson_shift(hi)
        };
        p.sweep(lo, hi, mu);
    }
    Ok((0..n)
        .map(|i| PencilEigenvalue {
            alpha: p.a[(i, i)],
            beta: p.b[(i, i)],
        })
        .collect())
}

/// Finite eigenvalues of `(a, b)` and the number of infinite ones. An eigenvalue is
/// infinite when `|beta| <= rel_tol * ||b||`.
pub fn finite_eigenvalues(a: &CMat, b: &CMat, rel_tol: f64) -> Result<(Vec<Complex64>, usize)> {
    let bnorm = fro(b);
    let pairs = qz_eigenvalues(a, b)?;
    let mut finite = Vec::new();
    let mut infinite = 0;
    for pe in pairs {
        if pe.beta.norm() <= rel_tol * bnorm {
            infinite += 1;
        } else {
            finite.push(pe.alpha / pe.beta);
        }
    }
    Ok((finite, infinite))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, eigenvalues, multiset_distance, smallest_singular};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(n, m, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn residual(a: &CMat, b: &CMat, lambda: Complex64) -> f64 {
        let m = a - b * lambda;
        smallest_singular(&m).0 / (fro(a) + lambda.norm() * fro(b))
    }

    #[test]
    fn identity_b_matches_schur_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..9 {
            let a = random(n, n, &mut rng);
            let (fin, inf) = finite_eigenvalues(&a, &CMat::identity(n, n), 1e-13).unwrap();
            assert_eq!(inf, 0);
            let reference = eigenvalues(&a).unwrap();
            assert!(multiset_distance(&fin, &reference) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn regular_pencils_have_small_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..12 {
            let a = random(n, n, &mut rng);
            let b = random(n, n, &mut rng);
            let (fin, inf) = finite_eigenvalues(&a, &b, 1e-13).unwrap();
            assert_eq!(inf, 0);
            for l in fin {
                assert!(residual(&a, &b, l) < 1e-12, "n={n} lambda={l}");
            }
        }
    }

    #[test]
    fn rank_deficient_b_gives_infinite_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 3..10 {
            let a = random(n, n, &mut rng);
            let b = random(n, n - 2, &mut rng) * random(n - 2, n, &mut rng);
            let (fin, inf) = finite_eigenvalues(&a, &b, 1e-10).unwrap();
            assert_eq!((fin.len(), inf), (n - 2, 2), "n={n}");
            for l in fin {
                assert!(residual(&a, &b, l) < 1e-10, "n={n} lambda={l}");
            }
        }
    }

    #[test]
    fn diagonal_and_nilpotent_pencils() {
        let a = CMat::from_diagonal(&nalgebra::dvector![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let b = CMat::from_diagonal(&nalgebra::dvector![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let (mut fin, inf) = finite_eigenvalues(&a, &b, 1e-12).unwrap();
        fin.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert_eq!(inf, 1);
        assert!((fin[0] - c(1.0, 0.0)).norm() < 1e-14 && (fin[1] - c(2.0, 0.0)).norm() < 1e-14);

        // index-two block: (I, N) with N nilpotent has no finite eigenvalues
        let a = CMat::identity(2, 2);
        let mut b = CMat::zeros(2, 2);
        b[(0, 1)] = c(1.0, 0.0);
        let (fin, inf) = finite_eigenvalues(&a, &b, 1e-12).unwrap();
        assert!(fin.is_empty());
        assert_eq!(inf, 2);
    }

    #[test]
    fn infinite_eigenvalue_in_the_middle_of_a_hessenberg_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 4..9 {
            let a = random(n, n, &mut rng);
            let mut b = random(n, n, &mut rng);
            // zero one row: rank n-1, the QZ chase must move the zero to the bottom
            let k = rng.random_range(1..n - 1);
            b.row_mut(k).fill(c(0.0, 0.0));
            let (fin, inf) = finite_eigenvalues(&a, &b, 1e-10).unwrap();
            assert_eq!(inf, 1);
            for l in fin {
                assert!(residual(&a, &b, l) < 1e-10);
            }
        }
    }
}
