//! Spectrum of the effective Laplacian, the shift-invert oracle for restricted
//! generalized eigenvalues, the synchronization verdict and the non-sync witness.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::efflap::{effective_laplacian_of, EffectiveLaplacian};
use crate::error::{OscError, Result};
use crate::linalg::{self, c, fro, to_complex, CMat, CVec};
use crate::linkage::{build_linkage, check_bipartite_cycle_parity, LinkageVerdict};
use crate::model::{build_matrices, oscillator_forest_check, LayeredNetwork, MatrixBundle, Network};

pub const DEFAULT_SEED: u64 = 0x05c1_11a7;

/// All eigenvalues, ordered by real part and then imaginary part.
pub fn eig_complex_dense(y: &CMat) -> Result<Vec<Complex64>> {
    let mut ev = linalg::eigenvalues(y)?;
    sort_spectrum(&mut ev);
    Ok(ev)
}

pub fn sort_spectrum(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

#[derive(Debug, Clone)]
pub struct ReigResult {
    pub eigenvalues: Vec<Complex64>,
    pub shift: Complex64,
    pub attempts: usize,
    /// Dimension of the common null space of `P` and `Q` that was split off.
    pub deflated: usize,
}

/// Orthonormal basis of the orthogonal complement of `null(P) ∩ null(Q)`.
fn common_range_basis(p: &CMat, q: &CMat) -> CMat {
    let n = p.ncols();
    let mut stacked = CMat::zeros(2 * p.nrows(), n);
    stacked.view_mut((0, 0), p.shape()).copy_from(p);
    stacked.view_mut((p.nrows(), 0), q.shape()).copy_from(q);
    let svd = linalg::svd(stacked, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * n as f64 * f64::EPSILON * 64.0;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    let mut out = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &v_t.row(i).adjoint());
    }
    out
}

/// Restricted generalized eigenvalues of `(P, Q)`: `lambda` with `(P - lambda Q) x = 0`
/// and `Q x != 0`, as `sigma + 1/eta` over the nonzero eigenvalues `eta` of
/// `(P - sigma Q)^{-1} Q`. The common null space of `P` and `Q` is split off first.
pub fn reig_shift_invert(p: &CMat, q: &CMat, seed: u64) -> Result<ReigResult> {
    if p.shape() != q.shape() || p.nrows() != p.ncols() {
        return Err(OscError::SizeMismatch(format!("pencil {:?} vs {:?}", p.shape(), q.shape())));
    }
    let n = p.nrows();
    let u = common_range_basis(p, q);
    let w = common_range_basis(&p.adjoint(), &q.adjoint());
    if u.ncols() != w.ncols() {
        return Err(OscError::IrregularPencil(format!(
            "left and right common null spaces differ ({} vs {})",
            n - w.ncols(),
            n - u.ncols()
        )));
    }
    let (pr, qr) = (w.adjoint() * p * &u, w.adjoint() * q * &u);
    let m = pr.nrows();
    if m == 0 {
        return Ok(ReigResult { eigenvalues: Vec::new(), shift: c(0.0, 0.0), attempts: 0, deflated: n });
    }
    let ratio = fro(&pr) / fro(&qr);
    let scale = if ratio.is_finite() && ratio > 1e-12 { ratio } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=5 {
        let sigma = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        let shifted = &pr - &qr * sigma;
        let sv = linalg::singular_values(&shifted);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smin > 1e-12 * smax) {
            continue;
        }
        let Some(k) = shifted.clone().lu().solve(&qr) else {
            continue;
        };
        let eta = linalg::eigenvalues(&k)?;
        let eta_max = eta.iter().map(|e| e.norm()).fold(0.0, f64::max);
        let tol_eta = 1e-6 * eta_max;
        let mut eigenvalues: Vec<Complex64> = eta
            .iter()
            .filter(|e| e.norm() > tol_eta)
            .map(|e| sigma + e.inv())
            .collect();
        sort_spectrum(&mut eigenvalues);
        return Ok(ReigResult { eigenvalues, shift: sigma, attempts: attempt, deflated: n - m });
    }
    Err(OscError::IrregularPencil(
        "P - sigma Q singular for five random shifts".into(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex64>,
    pub imag_axis_count: usize,
    pub tol_re: f64,
    /// Indices into `eigenvalues` counted as on the imaginary axis.
    pub on_axis: Vec<usize>,
    /// Indices whose real part lies within a factor 10 of `tol_re` on either side.
    pub marginal: Vec<usize>,
}

pub fn default_tol_re(eigs: &[Complex64]) -> f64 {
    1e-7 * (1.0 + eigs.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

pub fn classify_imaginary_axis(eigs: &[Complex64], tol_re: Option<f64>) -> SpectralReport {
    let tol_re = tol_re.unwrap_or_else(|| default_tol_re(eigs));
    let on_axis: Vec<usize> = (0..eigs.len()).filter(|&i| eigs[i].re.abs() <= tol_re).collect();
    let marginal = (0..eigs.len())
        .filter(|&i| {
            let r = eigs[i].re.abs();
            r > tol_re / 10.0 && r <= tol_re * 10.0
        })
        .collect();
    SpectralReport {
        eigenvalues: eigs.to_vec(),
        imag_axis_count: on_axis.len(),
        tol_re,
        on_axis,
        marginal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessResiduals {
    /// `||((w0^2 - w^2) A A^T + B) e||`
    pub pencil: f64,
    /// `||G e||`
    pub conductance: f64,
    /// `||A^T e - v||`
    pub voltage: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct NonSyncMode {
    pub mu: f64,
    pub omega: f64,
    pub vbar: CVec,
    pub ebar: CVec,
    /// Distance of the normalized `vbar` from `span{1}`.
    pub spread: f64,
    pub residuals: WitnessResiduals,
}

/// Unit eigenvector of `y` for `lambda`; orthogonal to `1` whenever the eigenspace
/// has room for it.
fn eigvec_off_ones(y: &CMat, lambda: Complex64) -> CVec {
    let q = y.nrows();
    let shifted = y - CMat::identity(q, q) * lambda;
    let tol = 1e-8 * (1.0 + fro(y));
    let mut basis = linalg::null_space(&shifted, tol);
    if basis.ncols() == 0 {
        let (_, v) = linalg::smallest_singular(&shifted);
        basis = CMat::from_columns(&[v]);
    }
    let candidate: CVec = if basis.ncols() > 1 {
        let ones = CMat::from_element(1, q, c(1.0, 0.0));
        let coeff = linalg::null_space(&(ones * &basis), 1e-12 * (q as f64).sqrt());
        &basis * coeff.column(0)
    } else {
        basis.column(0).into_owned()
    };
    let nrm = candidate.norm();
    if nrm > 0.0 {
        candidate / c(nrm, 0.0)
    } else {
        candidate
    }
}

/// Builds and checks the non-sync witness for the imaginary-axis eigenvalue `lambda2`
/// of `Y`. `mb` must be in the same polarity as `el`.
pub fn nonsync_mode(
    el: &EffectiveLaplacian,
    mb: &MatrixBundle,
    lambda2: Complex64,
    omega0: f64,
) -> Result<NonSyncMode> {
    let tol_re = default_tol_re(&el.eigenvalues);
    if lambda2.re.abs() > tol_re {
        return Err(OscError::NotOnImaginaryAxis(format!("{lambda2}")));
    }
    let q = el.y.nrows();
    let vbar = eigvec_off_ones(&el.y, lambda2);
    let mean = vbar.sum() / c(q as f64, 0.0);
    let spread = vbar.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>().sqrt();
    if spread < 1e-6 {
        return Err(OscError::TrivialEigenvector(format!("lambda = {lambda2}")));
    }
    let mu = lambda2.im.max(0.0);
    let omega = (omega0 * omega0 + mu).sqrt();
    let ebar = &el.e * &vbar;

    let aat = to_complex(&mb.aat());
    let at = to_complex(&mb.a.transpose());
    let k = to_complex(&mb.b) - &aat * c(mu, 0.0);
    let residuals = WitnessResiduals {
        pencil: (&k * &ebar).norm(),
        conductance: (to_complex(&mb.g) * &ebar).norm(),
        voltage: (&at * &ebar - &vbar).norm(),
        tol: 1e-8 * (1.0 + ebar.norm()) * (1.0 + fro(&k) + mb.g.norm()),
    };
    let worst = residuals.pencil.max(residuals.conductance).max(residuals.voltage);
    if !(worst <= residuals.tol) {
        return Err(OscError::WitnessResidual(format!(
            "largest residual {worst:.3e} exceeds {:.3e}",
            residuals.tol
        )));
    }
    Ok(NonSyncMode { mu, omega, vbar, ebar, spread, residuals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Synchronous,
    NotSynchronous,
    OutsideTheory,
}

impl Decision {
    pub fn exit_code(self) -> i32 {
        match self {
            Decision::Synchronous => 0,
            Decision::NotSynchronous => 1,
            Decision::OutsideTheory => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Structural,
    Spectral,
    None,
}

#[derive(Debug, Clone)]
pub struct SyncVerdict {
    pub decision: Decision,
    pub method: Method,
    pub explanation: String,
    pub linkage: LinkageVerdict,
    pub forest: bool,
    pub b_zero: bool,
    pub spectral: Option<SpectralReport>,
    /// Verdict of the spectral path when it ran alongside the structural one.
    pub spectral_decision: Option<Decision>,
    pub witness: Option<NonSyncMode>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SyncOptions {
    pub seed: u64,
    pub tol_imag: Option<f64>,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions { seed: DEFAULT_SEED, tol_imag: None }
    }
}

/// A verdict together with the canonical layout and effective Laplacian it used.
#[derive(Debug, Clone)]
pub struct Decided {
    pub verdict: SyncVerdict,
    pub layered: Option<LayeredNetwork>,
    pub effective: Option<EffectiveLaplacian>,
}

struct SpectralPath {
    layered: LayeredNetwork,
    effective: EffectiveLaplacian,
    report: SpectralReport,
    decision: Decision,
    witness: Option<NonSyncMode>,
}

fn spectral_path(net: &Network, opts: &SyncOptions) -> Result<SpectralPath> {
    let (layered, effective) = effective_laplacian_of(net)?;
    let mut eigs = effective.eigenvalues.clone();
    sort_spectrum(&mut eigs);
    let report = classify_imaginary_axis(&eigs, opts.tol_imag);
    let (decision, witness) = if report.imag_axis_count == 1 {
        (Decision::Synchronous, None)
    } else {
        let mut axis: Vec<Complex64> = report.on_axis.iter().map(|&i| eigs[i]).collect();
        axis.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let lambda2 = axis.get(1).copied().unwrap_or(c(0.0, 0.0));
        let w = nonsync_mode(&effective, &layered.bundle(), lambda2, net.omega0())?;
        (Decision::NotSynchronous, Some(w))
    };
    Ok(SpectralPath { layered, effective, report, decision, witness })
}

/// Full decision procedure; see [`Decision`] for the outcomes.
pub fn decide(net: &Network, opts: &SyncOptions) -> Result<Decided> {
    let linkage = check_bipartite_cycle_parity(&build_linkage(net));
    let forest = oscillator_forest_check(net);
    let b_zero = build_matrices(net).b_is_zero();
    let mut verdict = SyncVerdict {
        decision: Decision::OutsideTheory,
        method: Method::None,
        explanation: String::new(),
        linkage: linkage.clone(),
        forest,
        b_zero,
        spectral: None,
        spectral_decision: None,
        witness: None,
        seed: opts.seed,
    };
    let (mut layered, mut effective) = (None, None);

    if b_zero {
        verdict.method = Method::Structural;
        match linkage.layers_connected() {
            None => {
                verdict.decision = Decision::NotSynchronous;
                verdict.explanation = "resistive coupling with a non-bipartite linkage".into();
            }
            Some((c1, c2)) => {
                verdict.decision = if c1 && c2 {
                    Decision::Synchronous
                } else {
                    Decision::NotSynchronous
                };
                verdict.explanation = format!(
                    "resistive coupling, bilayer linkage, layers connected: ({c1}, {c2})"
                );
                if forest {
                    let sp = spectral_path(net, opts)?;
                    if sp.decision != verdict.decision {
                        return Err(OscError::VerdictMismatch(format!(
                            "structural {:?} vs spectral {:?}",
                            verdict.decision, sp.decision
                        )));
                    }
                    verdict.spectral_decision = Some(sp.decision);
                    verdict.spectral = Some(sp.report);
                    verdict.witness = sp.witness;
                    layered = Some(sp.layered);
                    effective = Some(sp.effective);
                }
            }
        }
    } else if linkage.bipartite && forest {
        let sp = spectral_path(net, opts)?;
        verdict.method = Method::Spectral;
        verdict.decision = sp.decision;
        verdict.explanation = format!(
            "{} eigenvalue(s) of the effective Laplacian on the imaginary axis",
            sp.report.imag_axis_count
        );
        verdict.spectral_decision = Some(sp.decision);
        verdict.spectral = Some(sp.report);
        verdict.witness = sp.witness;
        layered = Some(sp.layered);
        effective = Some(sp.effective);
    } else if !linkage.bipartite {
        verdict.explanation = "inductive coupling with a non-bipartite linkage".into();
    } else {
        verdict.explanation = "oscillator graph has a cycle (rank(A) < q) and B != 0".into();
    }
    Ok(Decided { verdict, layered, effective })
}

pub fn sync_decision(net: &Network, opts: &SyncOptions) -> Result<SyncVerdict> {
    decide(net, opts).map(|d| d.verdict)
}
