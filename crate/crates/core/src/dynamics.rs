//! Exact simulation of `A A^T (e'' + w0^2 e) + G e' + B e = 0`, `v = A^T e`.
//!
//! Node voltages are only defined up to a constant on every connected component of
//! the oscillator-plus-coupler graph, so one reference node per component is grounded
//! before the pencil is formed. The primary solver superposes the finite modes of the
//! grounded quadratic pencil; a trapezoidal stepper on the first-order descriptor form
//! serves as an independent check.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OscError, Result};
use crate::graph::UnionFind;
use crate::linalg::{self, c, fro, to_complex, CMat, CVec};
use crate::model::MatrixBundle;
use crate::qz;

/// Reference nodes (one per component, the lowest index) and the remaining nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grounding {
    pub reference: Vec<usize>,
    pub keep: Vec<usize>,
}

pub fn grounding(mb: &MatrixBundle) -> Grounding {
    let n = mb.n();
    let mut uf = UnionFind::new(n);
    for k in 0..mb.q() {
        let ends: Vec<usize> = (0..n).filter(|&r| mb.a[(r, k)] != 0.0).collect();
        for w in ends.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if mb.g[(i, j)] != 0.0 || mb.b[(i, j)] != 0.0 {
                uf.union(i, j);
            }
        }
    }
    let mut reference = Vec::new();
    let mut keep = Vec::new();
    let mut seen = vec![false; n];
    for i in 0..n {
        let root = uf.find(i);
        if seen[root] {
            keep.push(i);
        } else {
            seen[root] = true;
            reference.push(i);
        }
    }
    Grounding { reference, keep }
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `lambda^2 M2 + lambda M1 + M0` on grounded node voltages, with
/// `M2 = A A^T`, `M1 = G`, `M0 = w0^2 A A^T + B`, and its linearization
/// `E_lin z' = A_lin z` on `z = (e', e)`.
#[derive(Debug, Clone)]
pub struct QuadraticPencil {
    pub omega0: f64,
    pub grounding: Grounding,
    pub n: usize,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Grounded incidence matrix (reference rows removed).
    pub a_r: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m0: DMatrix<f64>,
    pub e_lin: DMatrix<f64>,
    pub a_lin: DMatrix<f64>,
}

impl QuadraticPencil {
    pub fn n_r(&self) -> usize {
        self.m2.nrows()
    }

    pub fn q(&self) -> usize {
        self.a.ncols()
    }

    pub fn eval(&self, lambda: Complex64) -> CMat {
        to_complex(&self.m2) * (lambda * lambda) + to_complex(&self.m1) * lambda + to_complex(&self.m0)
    }

    fn eval_real(&self, lambda: f64) -> DMatrix<f64> {
        &self.m2 * (lambda * lambda) + &self.m1 * lambda + &self.m0
    }

    /// Size of the polynomial at `lambda`, used to scale residual tolerances.
    pub fn scale_at(&self, lambda: Complex64) -> f64 {
        let l = lambda.norm();
        l * l * self.m2.norm() + l * self.m1.norm() + self.m0.norm()
    }

    /// Expands a grounded vector to all `n` nodes (zero at the references).
    pub fn expand(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (i, &k) in self.grounding.keep.iter().enumerate() {
            out[k] = x[i];
        }
        out
    }
}

fn cvec(v: &DVector<f64>) -> CVec {
    v.map(|x| c(x, 0.0))
}

/// Grounds the network, forms the pencil and probes regularity at random shifts.
pub fn linearize_pencil(mb: &MatrixBundle, omega0: f64, seed: u64) -> Result<QuadraticPencil> {
    let gr = grounding(mb);
    let keep = &gr.keep;
    let q = mb.q();
    let all_q: Vec<usize> = (0..q).collect();
    let a_r = select(&mb.a, keep, &all_q);
    let m2 = &a_r * a_r.transpose();
    let m1 = select(&mb.g, keep, keep);
    let m0 = &m2 * (omega0 * omega0) + select(&mb.b, keep, keep);
    let nr = keep.len();
    let mut e_lin = DMatrix::zeros(2 * nr, 2 * nr);
    e_lin.view_mut((0, 0), (nr, nr)).copy_from(&m2);
    e_lin.view_mut((nr, nr), (nr, nr)).fill_with_identity();
    let mut a_lin = DMatrix::zeros(2 * nr, 2 * nr);
    a_lin.view_mut((0, 0), (nr, nr)).copy_from(&(-&m1));
    a_lin.view_mut((0, nr), (nr, nr)).copy_from(&(-&m0));
    a_lin.view_mut((nr, 0), (nr, nr)).fill_with_identity();

    let pencil = QuadraticPencil {
        omega0,
        n: mb.n(),
        a: mb.a.clone(),
        g: mb.g.clone(),
        b: mb.b.clone(),
        grounding: gr,
        a_r,
        m2,
        m1,
        m0,
        e_lin,
        a_lin,
    };
    if nr > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regular = (0..3).any(|_| {
            let s = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let sv = linalg::singular_values(&(to_complex(&pencil.e_lin) * s - to_complex(&pencil.a_lin)));
            let smax = sv.iter().copied().fold(0.0, f64::max);
            sv.iter().copied().fold(f64::INFINITY, f64::min) > 1e-13 * smax
        });
        if !regular {
            return Err(OscError::IrregularPencil("det(s E - A) vanishes at random shifts".into()));
        }
    }
    Ok(pencil)
}

/// One finite mode: `e(t) = Re(c x e^{lambda t})` on grounded nodes. Complex modes stand
/// for their conjugate pair (`Im lambda > 0`); real modes carry a real `x`.
#[derive(Debug, Clone)]
pub struct Mode {
    pub lambda: Complex64,
    pub x: CVec,
    pub real: bool,
    /// `||Q(lambda) x||` relative to the size of `Q(lambda)`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub pencil: QuadraticPencil,
    pub modes: Vec<Mode>,
    /// All finite eigenvalues of the linearized pencil, with multiplicity.
    pub finite: Vec<Complex64>,
    pub infinite: usize,
}

const INFINITE_REL: f64 = 1e-7;
const MODE_REL: f64 = 1e-8;

fn cluster(values: &[Complex64]) -> Vec<Vec<Complex64>> {
    let mut used = vec![false; values.len()];
    let mut out = Vec::new();
    for i in 0..values.len() {
        if used[i] {
            continue;
        }
        let tol = 1e-6 * (1.0 + values[i].norm());
        let members: Vec<usize> = (i..values.len())
            .filter(|&j| !used[j] && (values[j] - values[i]).norm() <= tol)
            .collect();
        for &j in &members {
            used[j] = true;
        }
        out.push(members.iter().map(|&j| values[j]).collect());
    }
    out
}

fn normalize_visible(x: CVec, a_r: &DMatrix<f64>) -> CVec {
    let v = to_complex(&a_r.transpose()) * &x;
    let s = if v.norm() > 1e-8 * x.norm() { v.norm() } else { x.norm() };
    x / c(s, 0.0)
}

/// Finite eigenvalues by QZ on `(A_lin, E_lin)`, eigenvectors from the null space of
/// `Q(lambda)` per cluster of equal eigenvalues.
pub fn modal_solve(pencil: &QuadraticPencil) -> Result<ModalBasis> {
    let nr = pencil.n_r();
    let (finite, infinite) = if nr == 0 {
        (Vec::new(), 0)
    } else {
        qz::finite_eigenvalues(
            &to_complex(&pencil.a_lin),
            &to_complex(&pencil.e_lin),
            INFINITE_REL,
        )?
    };
    let max_abs = finite.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if let Some(bad) = finite.iter().find(|l| l.re > MODE_REL * (1.0 + max_abs)) {
        return Err(OscError::NonPassive(format!("{bad}")));
    }

    let mut modes = Vec::new();
    let mut covered = 0;
    for group in cluster(&finite) {
        let m = group.len();
        let center = group.iter().sum::<Complex64>() / c(m as f64, 0.0);
        let pair_tol = 1e-8 * (1.0 + center.norm());
        if center.im < -pair_tol {
            continue;
        }
        let real = center.im.abs() <= pair_tol;
        let scale = pencil.scale_at(center).max(f64::MIN_POSITIVE);
        let (svals, vecs): (Vec<f64>, Vec<CVec>) = if real {
            let svd = linalg::svd(pencil.eval_real(center.re), false, true);
            let v_t = svd.v_t.expect("right singular vectors requested");
            let mut idx: Vec<usize> = (0..nr).collect();
            idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
            idx.iter()
                .take(m)
                .map(|&i| (svd.singular_values[i], cvec(&v_t.row(i).transpose())))
                .unzip()
        } else {
            let svd = linalg::svd(pencil.eval(center), false, true);
            let v_t = svd.v_t.expect("right singular vectors requested");
            let mut idx: Vec<usize> = (0..nr).collect();
            idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
            idx.iter()
                .take(m)
                .map(|&i| (svd.singular_values[i], v_t.row(i).adjoint()))
                .unzip()
        };
        if svals.len() < m || svals.iter().any(|&s| s > MODE_REL * scale) {
            return Err(OscError::DefectiveMode(format!(
                "{center} (multiplicity {m}, null space {})",
                svals.iter().filter(|&&s| s <= MODE_REL * scale).count()
            )));
        }
        let lambda = if real { c(center.re, 0.0) } else { center };
        for (s, x) in svals.into_iter().zip(vecs) {
            modes.push(Mode { lambda, x: normalize_visible(x, &pencil.a_r), real, residual: s / scale });
        }
        covered += if real { m } else { 2 * m };
    }
    if covered != finite.len() {
        return Err(OscError::Other(format!(
            "finite spectrum is not closed under conjugation ({covered} of {} covered)",
            finite.len()
        )));
    }
    modes.sort_by(|a, b| {
        b.lambda.re.total_cmp(&a.lambda.re).then(a.lambda.im.total_cmp(&b.lambda.im))
    });
    Ok(ModalBasis { pencil: pencil.clone(), modes, finite, infinite })
}

#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// Oscillator voltages and their derivatives at `t = 0`.
    Oscillator { v0: DVector<f64>, vdot0: DVector<f64> },
    /// One coefficient per entry of [`ModalBasis::modes`]; real modes use the real part.
    Modal(Vec<Complex64>),
}

/// Uniform random `(v0, v0')` in `[-1, 1]`.
pub fn random_initial_condition(q: usize, seed: u64) -> InitialCondition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
    let vdot0 = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
    InitialCondition::Oscillator { v0, vdot0 }
}

/// Initial data of `e(t) = 1_{V1} sin(w0 t)`, i.e. `v(t) = A^T 1_{V1} sin(w0 t)`.
pub fn sync_initial_condition(mb: &MatrixBundle, in_first: &[bool], omega0: f64) -> InitialCondition {
    let ind = DVector::from_fn(mb.n(), |i, _| if in_first[i] { 1.0 } else { 0.0 });
    InitialCondition::Oscillator {
        v0: DVector::zeros(mb.q()),
        vdot0: mb.a.transpose() * ind * omega0,
    }
}

/// Sampled trajectory; matrices have one row per time point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub e: DMatrix<f64>,
    pub edot: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub vdot: DMatrix<f64>,
    /// Second derivatives, available from the modal solver only.
    pub eddot: Option<DMatrix<f64>>,
    pub vddot: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct ModalSolution {
    pub basis: ModalBasis,
    pub coefficients: Vec<Complex64>,
    pub fit_residual: f64,
    /// Largest residual of the equations of motion over the grid, relative to `scale`.
    pub dynamics_residual: f64,
    pub trajectory: Trajectory,
}

impl ModalSolution {
    /// Grounded `(e, e', e'')` at time `t`.
    pub fn state(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        modal_state(&self.basis, &self.coefficients, t)
    }
}

fn modal_state(basis: &ModalBasis, coeffs: &[Complex64], t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let nr = basis.pencil.n_r();
    let (mut e, mut ed, mut edd) = (DVector::zeros(nr), DVector::zeros(nr), DVector::zeros(nr));
    for (mode, &ck) in basis.modes.iter().zip(coeffs) {
        let ck = if mode.real { c(ck.re, 0.0) } else { ck };
        if ck == c(0.0, 0.0) {
            continue;
        }
        let w = ck * (mode.lambda * t).exp();
        for i in 0..nr {
            let z = w * mode.x[i];
            e[i] += z.re;
            ed[i] += (z * mode.lambda).re;
            edd[i] += (z * mode.lambda * mode.lambda).re;
        }
    }
    (e, ed, edd)
}

pub fn time_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && t_end > 0.0 && t_end.is_finite()) {
        return Err(OscError::Invalid(format!("need dt > 0 and t_end > 0 (dt={dt}, t_end={t_end})")));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

fn fit_coefficients(basis: &ModalBasis, v0: &DVector<f64>, vdot0: &DVector<f64>) -> Result<(Vec<Complex64>, f64)> {
    let q = basis.pencil.q();
    if v0.len() != q || vdot0.len() != q {
        return Err(OscError::SizeMismatch(format!("initial condition needs {q} values per vector")));
    }
    let at = to_complex(&basis.pencil.a_r.transpose());
    let mut cols: Vec<(usize, bool, DVector<f64>)> = Vec::new();
    for (k, mode) in basis.modes.iter().enumerate() {
        let v = &at * &mode.x;
        let vd = &v * mode.lambda;
        let stack = |f: fn(&Complex64) -> f64, sign: f64| {
            DVector::from_iterator(2 * q, v.iter().chain(vd.iter()).map(|z| sign * f(z)))
        };
        cols.push((k, false, stack(|z| z.re, 1.0)));
        if !mode.real {
            cols.push((k, true, stack(|z| z.im, -1.0)));
        }
    }
    let rhs = DVector::from_iterator(2 * q, v0.iter().chain(vdot0.iter()).copied());
    let mut coeffs = vec![c(0.0, 0.0); basis.modes.len()];
    if cols.is_empty() {
        return Ok((coeffs, rhs.norm()));
    }
    let phi = DMatrix::from_columns(&cols.iter().map(|c| c.2.clone()).collect::<Vec<_>>());
    let svd = linalg::svd(phi.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let p = svd
        .solve(&rhs, 1e-12 * smax)
        .map_err(|e| OscError::Other(e.to_string()))?;
    for (j, (k, imag, _)) in cols.iter().enumerate() {
        if *imag {
            coeffs[*k].im = p[j];
        } else {
            coeffs[*k].re = p[j];
        }
    }
    Ok((coeffs, (phi * p - rhs).norm()))
}

fn rows_to_matrix(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Evaluates the modal solution on `times`. An oscillator initial condition is matched
/// by least squares; a fit residual above `1e-8 (1 + |data|)` is an error.
pub fn trajectory(basis: &ModalBasis, init: &InitialCondition, times: &[f64]) -> Result<ModalSolution> {
    let (coefficients, fit_residual) = match init {
        InitialCondition::Oscillator { v0, vdot0 } => {
            let (cf, res) = fit_coefficients(basis, v0, vdot0)?;
            let tol = 1e-8 * (1.0 + v0.norm() + vdot0.norm());
            if res > tol {
                return Err(OscError::InconsistentInitialCondition { residual: res });
            }
            (cf, res)
        }
        InitialCondition::Modal(cf) => {
            if cf.len() != basis.modes.len() {
                return Err(OscError::SizeMismatch(format!(
                    "{} modal coefficients for {} modes",
                    cf.len(),
                    basis.modes.len()
                )));
            }
            (cf.clone(), 0.0)
        }
    };
    let p = &basis.pencil;
    let (mut es, mut eds, mut edds) = (Vec::new(), Vec::new(), Vec::new());
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &t in times {
        let (e, ed, edd) = modal_state(basis, &coefficients, t);
        let r = &p.m2 * &edd + &p.m1 * &ed + &p.m0 * &e;
        worst = worst.max(r.norm());
        scale = scale.max(p.m2.norm() * edd.norm() + p.m1.norm() * ed.norm() + p.m0.norm() * e.norm());
        es.push(p.expand(&e));
        eds.push(p.expand(&ed));
        edds.push(p.expand(&edd));
    }
    let tol = 1e-7 * scale.max(f64::MIN_POSITIVE);
    if worst > tol {
        return Err(OscError::DynamicsResidual { residual: worst, tol });
    }
    let e = rows_to_matrix(&es);
    let edot = rows_to_matrix(&eds);
    let eddot = rows_to_matrix(&edds);
    let trajectory = Trajectory {
        times: times.to_vec(),
        v: &e * &p.a,
        vdot: &edot * &p.a,
        vddot: Some(&eddot * &p.a),
        e,
        edot,
        eddot: Some(eddot),
    };
    Ok(ModalSolution {
        basis: basis.clone(),
        coefficients,
        fit_residual,
        dynamics_residual: if scale > 0.0 { worst / scale } else { 0.0 },
        trajectory,
    })
}

/// Trapezoidal rule on `E_lin z' = A_lin z` from the grounded state `(e'(0), e(0))`.
pub fn simulate_timestep(
    pencil: &QuadraticPencil,
    edot0: &DVector<f64>,
    e0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    let nr = pencil.n_r();
    if edot0.len() != nr || e0.len() != nr {
        return Err(OscError::SizeMismatch(format!("grounded state must have {nr} entries")));
    }
    let times = time_grid(t_end, dt)?;
    let h = times.get(1).copied().unwrap_or(dt);
    let lhs = &pencil.e_lin - &pencil.a_lin * (h / 2.0);
    let rhs = &pencil.e_lin + &pencil.a_lin * (h / 2.0);
    if nr > 0 {
        let sv = linalg::svd(lhs.clone(), false, false).singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smin > 1e-14 * smax) {
            return Err(OscError::SingularStep(format!("dt = {dt}")));
        }
    }
    let lu = lhs.lu();
    let mut z = DVector::zeros(2 * nr);
    z.rows_mut(0, nr).copy_from(edot0);
    z.rows_mut(nr, nr).copy_from(e0);
    let (mut es, mut eds) = (Vec::with_capacity(times.len()), Vec::with_capacity(times.len()));
    for k in 0..times.len() {
        if k > 0 {
            z = lu
                .solve(&(&rhs * &z))
                .ok_or_else(|| OscError::SingularStep(format!("dt = {dt}")))?;
        }
        eds.push(pencil.expand(&z.rows(0, nr).into_owned()));
        es.push(pencil.expand(&z.rows(nr, nr).into_owned()));
    }
    let e = rows_to_matrix(&es);
    let edot = rows_to_matrix(&eds);
    Ok(Trajectory {
        times,
        v: &e * &pencil.a,
        vdot: &edot * &pencil.a,
        e,
        edot,
        eddot: None,
        vddot: None,
    })
}

#[derive(Debug, Clone)]
pub struct EnergyTrace {
    pub w: Vec<f64>,
    /// `-e'^T G e'` at each sample.
    pub wdot: Vec<f64>,
    /// Largest increase `W[k+1] - W[k]` (zero when monotone).
    pub max_increase: f64,
}

impl EnergyTrace {
    pub fn nonincreasing(&self, tol: f64) -> bool {
        self.max_increase <= tol
    }

    /// Largest gap between the finite difference of `W` and the trapezoidal average
    /// of `W'` over the samples.
    pub fn derivative_mismatch(&self, times: &[f64]) -> f64 {
        (1..self.w.len())
            .map(|k| {
                let h = times[k] - times[k - 1];
                ((self.w[k] - self.w[k - 1]) / h - 0.5 * (self.wdot[k] + self.wdot[k - 1])).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `W = e^T B e / 2 + w0^2 v^T v / 2 + v'^T v' / 2` and `W' = -e'^T G e'`.
pub fn energy_trace(traj: &Trajectory, mb: &MatrixBundle, omega0: f64) -> EnergyTrace {
    let rows = traj.times.len();
    let mut w = Vec::with_capacity(rows);
    let mut wdot = Vec::with_capacity(rows);
    for k in 0..rows {
        let e = traj.e.row(k).transpose();
        let ed = traj.edot.row(k).transpose();
        let v = traj.v.row(k);
        let vd = traj.vdot.row(k);
        w.push(0.5 * (e.dot(&(&mb.b * &e)) + omega0 * omega0 * v.norm_squared() + vd.norm_squared()));
        wdot.push(-ed.dot(&(&mb.g * &ed)));
    }
    let max_increase = w.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    EnergyTrace { w, wdot, max_increase }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMetric {
    pub metric: f64,
    pub amplitudes: Vec<f64>,
    pub nontrivial: bool,
    pub window: (f64, f64),
}

/// Amplitudes as `sqrt(2)` times the RMS over the trailing `window` (at least five
/// periods of `w0`); the metric is the largest pairwise amplitude gap.
pub fn sync_metric(times: &[f64], v: &DMatrix<f64>, omega0: f64, window: f64) -> Result<SyncMetric> {
    let end = times.last().copied().unwrap_or(0.0);
    sync_metric_at(times, v, omega0, window, end)
}

fn sync_metric_at(times: &[f64], v: &DMatrix<f64>, omega0: f64, window: f64, end: f64) -> Result<SyncMetric> {
    let period = 2.0 * std::f64::consts::PI / omega0;
    let start = end - window;
    let t0 = times.first().copied().unwrap_or(0.0);
    if window < 5.0 * period * (1.0 - 1e-9) || start < t0 - 1e-9 * window.max(1.0) {
        return Err(OscError::WindowTooShort(format!(
            "window {window:.4} must cover 5 periods ({:.4}) inside [{t0}, {end}]",
            5.0 * period
        )));
    }
    let idx: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= start - 1e-12 * end.abs().max(1.0) && times[k] <= end)
        .collect();
    if idx.len() < 10 {
        return Err(OscError::WindowTooShort(format!("only {} samples in window", idx.len())));
    }
    let span = times[*idx.last().expect("non-empty")] - times[idx[0]];
    let amplitudes: Vec<f64> = (0..v.ncols())
        .map(|j| {
            let integral: f64 = idx
                .windows(2)
                .map(|p| 0.5 * (times[p[1]] - times[p[0]]) * (v[(p[0], j)].powi(2) + v[(p[1], j)].powi(2)))
                .sum();
            (2.0 * integral / span).sqrt()
        })
        .collect();
    let hi = amplitudes.iter().copied().fold(0.0, f64::max);
    let lo = amplitudes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SyncMetric {
        metric: if amplitudes.is_empty() { 0.0 } else { hi - lo },
        nontrivial: hi >= 1e-6,
        amplitudes,
        window: (times[idx[0]], end),
    })
}

/// Metric over sliding windows ending at every `stride`-th sample once a full window
/// is available.
pub fn sync_metric_profile(
    times: &[f64],
    v: &DMatrix<f64>,
    omega0: f64,
    window: f64,
    stride: usize,
) -> Result<Vec<(f64, f64)>> {
    let t0 = times.first().copied().unwrap_or(0.0);
    let mut out = Vec::new();
    for k in (0..times.len()).step_by(stride.max(1)) {
        if times[k] - t0 + 1e-9 < window {
            continue;
        }
        let m = sync_metric_at(&times[..=k], &v.rows(0, k + 1).into_owned(), omega0, window, times[k])?;
        out.push((times[k], m.metric));
    }
    if out.is_empty() {
        return Err(OscError::WindowTooShort("trajectory shorter than one window".into()));
    }
    Ok(out)
}

/// Five periods of `w0`.
pub fn default_window(omega0: f64) -> f64 {
    5.0 * 2.0 * std::f64::consts::PI / omega0
}

/// `40 / (smallest positive Re lambda of Y)`, but never less than ten periods of `w0`;
/// `200 / w0` when no eigenvalue of `Y` has positive real part beyond `tol_re`.
pub fn default_horizon(y_eigs: &[Complex64], omega0: f64, tol_re: f64) -> f64 {
    let slowest = y_eigs
        .iter()
        .map(|l| l.re)
        .filter(|&r| r > tol_re)
        .fold(f64::INFINITY, f64::min);
    if slowest.is_finite() {
        (40.0 / slowest).max(2.0 * default_window(omega0))
    } else {
        200.0 / omega0
    }
}

/// CSV with header `t,v1..vq,W`, numbers at 17 significant digits.
pub fn write_csv(traj: &Trajectory, energy: &EnergyTrace) -> String {
    let q = traj.v.ncols();
    let mut out = String::from("t");
    for k in 1..=q {
        let _ = write!(out, ",v{k}");
    }
    out.push_str(",W\n");
    for (i, t) in traj.times.iter().enumerate() {
        let _ = write!(out, "{t:.16e}");
        for j in 0..q {
            let _ = write!(out, ",{:.16e}", traj.v[(i, j)]);
        }
        let _ = writeln!(out, ",{:.16e}", energy.w[i]);
    }
    out
}

/// Largest deviation in `v` between two trajectories sampled on the same grid.
pub fn max_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    let rows = a.times.len().min(b.times.len());
    (0..rows)
        .map(|k| (a.v.row(k) - b.v.row(k)).abs().max())
        .fold(0.0, f64::max)
}

/// Residual of `v'' + w0^2 v + Y v' = 0` along a modal trajectory, relative to the
/// largest term.
pub fn reduced_residual(traj: &Trajectory, y: &CMat, omega0: f64) -> Result<f64> {
    let vdd = traj
        .vddot
        .as_ref()
        .ok_or_else(|| OscError::Other("second derivatives unavailable".into()))?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..traj.times.len() {
        let v = cvec(&traj.v.row(k).transpose());
        let vd = cvec(&traj.vdot.row(k).transpose());
        let a = cvec(&vdd.row(k).transpose());
        let r = &a + &v * c(omega0 * omega0, 0.0) + y * &vd;
        worst = worst.max(r.norm());
        scale = scale.max(a.norm() + omega0 * omega0 * v.norm() + fro(y) * vd.norm());
    }
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{build_matrices, parse_netlist};

    fn net_a() -> MatrixBundle {
        build_matrices(&parse_netlist(fixtures::NET_A, false).unwrap())
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        linalg::multiset_distance(a, b) <= tol
    }

    #[test]
    fn grounding_one_reference_per_component() {
        let g = grounding(&net_a());
        assert_eq!(g.reference, vec![0]);
        let two = build_matrices(&parse_netlist("osc o1 a b\nosc o2 c d\n", false).unwrap());
        assert_eq!(grounding(&two).reference, vec![0, 2]);
    }

    #[test]
    fn net_a_modes() {
        let p = linearize_pencil(&net_a(), 1.0, 1).unwrap();
        assert_eq!(p.e_lin.nrows(), 6);
        let basis = modal_solve(&p).unwrap();
        let d = (1.0f64 - 0.75 * 0.75).sqrt();
        let expect = [c(0.0, 1.0), c(0.0, -1.0), c(-0.75, d), c(-0.75, -d), c(0.0, 0.0)];
        assert!(close(&basis.finite, &expect, 1e-8), "{:?}", basis.finite);
        assert_eq!(basis.infinite, 1);
        assert!(basis.modes.iter().all(|m| m.residual < 1e-10));
    }

    #[test]
    fn uncoupled_tanks() {
        let single = build_matrices(&parse_netlist("osc o1 a b\nosc o2 c d\n", false).unwrap());
        let basis = modal_solve(&linearize_pencil(&single, 2.0, 1).unwrap()).unwrap();
        let expect = [c(0.0, 2.0), c(0.0, 2.0), c(0.0, -2.0), c(0.0, -2.0)];
        assert!(close(&basis.finite, &expect, 1e-8));
        assert_eq!(basis.modes.len(), 2);
    }

    #[test]
    fn four_tank_modes() {
        let mb = fixtures::four_tank_layers(4.0).bundle();
        let basis = modal_solve(&linearize_pencil(&mb, 1.0, 1).unwrap()).unwrap();
        let w = 7f64.sqrt();
        assert!(basis.finite.iter().any(|l| (l - c(0.0, w)).norm() < 1e-8));
        assert!(basis.finite.iter().any(|l| (l - c(0.0, -w)).norm() < 1e-8));
        for l in &basis.finite {
            assert!(basis.finite.iter().any(|m| (m - l.conj()).norm() < 1e-8));
        }
    }

    #[test]
    fn sync_initial_condition_is_exact() {
        let mb = net_a();
        let basis = modal_solve(&linearize_pencil(&mb, 1.0, 1).unwrap()).unwrap();
        let ic = sync_initial_condition(&mb, &[true, true, false, false], 1.0);
        let times = time_grid(20.0, 0.01).unwrap();
        let sol = trajectory(&basis, &ic, &times).unwrap();
        for (k, t) in times.iter().enumerate() {
            for j in 0..2 {
                assert!((sol.trajectory.v[(k, j)] - t.sin()).abs() < 1e-10);
            }
        }
        let en = energy_trace(&sol.trajectory, &mb, 1.0);
        let w0 = en.w[0];
        assert!(en.w.iter().all(|w| (w - w0).abs() < 1e-9 * w0));
    }

    #[test]
    fn net_a_random_start_synchronizes() {
        let mb = net_a();
        let basis = modal_solve(&linearize_pencil(&mb, 1.0, 1).unwrap()).unwrap();
        let times = time_grid(40.0, 0.01).unwrap();
        let sol = trajectory(&basis, &random_initial_condition(2, 5), &times).unwrap();
        let m = sync_metric(&times, &sol.trajectory.v, 1.0, default_window(1.0)).unwrap();
        assert!(m.metric < 1e-3 && m.nontrivial, "{m:?}");
        let en = energy_trace(&sol.trajectory, &mb, 1.0);
        assert!(en.nonincreasing(1e-12 * en.w[0]));
    }

    #[test]
    fn sync_metric_examples() {
        let times = time_grid(40.0, 0.01).unwrap();
        let v = DMatrix::from_fn(times.len(), 4, |k, j| if j < 3 { times[k].sin() } else { 0.0 });
        let m = sync_metric(&times, &v, 1.0, default_window(1.0)).unwrap();
        assert!((m.metric - 1.0).abs() < 1e-3);
        let v = DMatrix::from_fn(times.len(), 3, |k, _| times[k].sin());
        let m = sync_metric(&times, &v, 1.0, default_window(1.0)).unwrap();
        assert!(m.metric < 1e-12 && m.nontrivial);
        assert!(sync_metric(&times, &v, 1.0, 10.0).is_err());
    }

    #[test]
    fn inconsistent_modal_coefficients_refused() {
        let basis = modal_solve(&linearize_pencil(&net_a(), 1.0, 1).unwrap()).unwrap();
        assert!(trajectory(&basis, &InitialCondition::Modal(vec![c(1.0, 0.0)]), &[0.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let mb = net_a();
        let basis = modal_solve(&linearize_pencil(&mb, 1.0, 1).unwrap()).unwrap();
        let times = time_grid(1.0, 0.5).unwrap();
        let sol = trajectory(&basis, &random_initial_condition(2, 1), &times).unwrap();
        let csv = write_csv(&sol.trajectory, &energy_trace(&sol.trajectory, &mb, 1.0));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,v1,v2,W");
        assert_eq!(lines.len(), 4);
        let first: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
        assert_eq!(first, 0.5);
        assert_eq!(lines[1].split(',').nth(1).unwrap().split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
    }
}
