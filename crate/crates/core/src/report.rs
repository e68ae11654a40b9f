//! End-to-end pipelines (analysis and simulation) and their serializable reports.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, InitialCondition, ModalSolution, Trajectory, EnergyTrace};
use crate::efflap::PropertyReport;
use crate::error::{OscError, Result};
use crate::linalg::{c, CMat, CVec};
use crate::linkage::LinkageVerdict;
use crate::model::{build_matrices, Network};
use crate::spectral::{self, Decided, Decision, Method, SyncOptions, WitnessResiduals};

pub const TOOL: &str = "oscnet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A complex number as `{re, im}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Cx {
    fn from(z: Complex64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

impl From<Cx> for Complex64 {
    fn from(z: Cx) -> Self {
        c(z.re, z.im)
    }
}

fn cx_vec<'a>(it: impl IntoIterator<Item = &'a Complex64>) -> Vec<Cx> {
    it.into_iter().map(|&z| z.into()).collect()
}

fn cx_rows(m: &CMat) -> Vec<Vec<Cx>> {
    m.row_iter().map(|r| r.iter().map(|&z| z.into()).collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<Cx>]) -> CMat {
    let (r, cols) = (rows.len(), rows.first().map_or(0, |x| x.len()));
    CMat::from_fn(r, cols, |i, j| rows[i][j].into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub n: usize,
    pub q: usize,
    pub omega0: f64,
    pub nodes: Vec<String>,
    pub oscillators: Vec<String>,
}

impl NetworkSummary {
    pub fn of(net: &Network) -> Self {
        NetworkSummary {
            n: net.n(),
            q: net.q(),
            omega0: net.omega0(),
            nodes: net.nodes().to_vec(),
            oscillators: net.oscillators().iter().map(|o| o.name.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    pub bilayer: bool,
    pub forest: bool,
    pub b_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveLaplacianReport {
    /// Rows of `Y` in canonical polarity and oscillator order.
    pub y: Vec<Vec<Cx>>,
    pub residual: f64,
    pub properties: PropertyReport,
    /// Original node indices in canonical order (first layer first).
    pub permutation: Vec<usize>,
    /// Sign applied to each oscillator to reach canonical polarity.
    pub flips: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Cx>,
    pub imag_axis_count: usize,
    pub tol_re: f64,
    pub on_axis: Vec<usize>,
    pub marginal: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub decision: Decision,
    pub method: Method,
    pub explanation: String,
    pub spectral_decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub mu: f64,
    pub omega: f64,
    /// Oscillator amplitudes in canonical polarity.
    pub vbar: Vec<Cx>,
    /// Node voltages in canonical node order.
    pub ebar: Vec<Cx>,
    pub spread: f64,
    pub residuals: WitnessResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub network: NetworkSummary,
    pub linkage: LinkageVerdict,
    pub assumptions: Assumptions,
    pub effective_laplacian: Option<EffectiveLaplacianReport>,
    pub spectrum: Option<SpectrumReport>,
    pub verdict: VerdictReport,
    pub witness: Option<WitnessReport>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OscError::Other(format!("report JSON: {e}")))
    }

    pub fn exit_code(&self) -> i32 {
        self.verdict.decision.exit_code()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.spectrum
            .as_ref()
            .map(|s| s.eigenvalues.iter().map(|&z| z.into()).collect())
            .unwrap_or_default()
    }
}

fn witness_report(w: &spectral::NonSyncMode) -> WitnessReport {
    WitnessReport {
        mu: w.mu,
        omega: w.omega,
        vbar: cx_vec(w.vbar.iter()),
        ebar: cx_vec(w.ebar.iter()),
        spread: w.spread,
        residuals: w.residuals.clone(),
    }
}

fn build_report(net: &Network, decided: &Decided) -> AnalysisReport {
    let v = &decided.verdict;
    let effective_laplacian = match (&decided.layered, &decided.effective) {
        (Some(lay), Some(el)) => Some(EffectiveLaplacianReport {
            y: cx_rows(&el.y),
            residual: el.residual,
            properties: el.report.clone(),
            permutation: lay.permutation.clone(),
            flips: lay.flips.clone(),
        }),
        _ => None,
    };
    AnalysisReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: v.seed,
        network: NetworkSummary::of(net),
        linkage: v.linkage.clone(),
        assumptions: Assumptions { bilayer: v.linkage.bipartite, forest: v.forest, b_zero: v.b_zero },
        effective_laplacian,
        spectrum: v.spectral.as_ref().map(|s| SpectrumReport {
            eigenvalues: cx_vec(s.eigenvalues.iter()),
            imag_axis_count: s.imag_axis_count,
            tol_re: s.tol_re,
            on_axis: s.on_axis.clone(),
            marginal: s.marginal.clone(),
        }),
        verdict: VerdictReport {
            decision: v.decision,
            method: v.method,
            explanation: v.explanation.clone(),
            spectral_decision: v.spectral_decision,
        },
        witness: v.witness.as_ref().map(witness_report),
    }
}

/// Linkage, effective Laplacian, spectrum and verdict in one report.
pub fn analyze(net: &Network, opts: &SyncOptions) -> Result<AnalysisReport> {
    let decided = spectral::decide(net, opts)?;
    Ok(build_report(net, &decided))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcSpec {
    Random,
    /// Unit coefficient on one entry of the mode list.
    Mode(usize),
    /// `e(t) = 1_{V1} sin(w0 t)`.
    Sync,
}

impl std::str::FromStr for IcSpec {
    type Err = OscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(IcSpec::Random),
            "sync" => Ok(IcSpec::Sync),
            _ => s
                .strip_prefix("mode:")
                .and_then(|k| k.parse().ok())
                .map(IcSpec::Mode)
                .ok_or_else(|| OscError::Invalid(format!("--ic must be random, sync or mode:<k>, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for IcSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IcSpec::Random => write!(f, "random"),
            IcSpec::Sync => write!(f, "sync"),
            IcSpec::Mode(k) => write!(f, "mode:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub ic: IcSpec,
    pub seed: u64,
    pub tol_imag: Option<f64>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions { t_end: None, dt: None, ic: IcSpec::Random, seed: spectral::DEFAULT_SEED, tol_imag: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub index: usize,
    pub lambda: Cx,
    pub real: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub ic: String,
    pub t_end: f64,
    pub dt: f64,
    pub samples: usize,
    pub modes: Vec<ModeSummary>,
    pub infinite_eigenvalues: usize,
    pub fit_residual: f64,
    pub dynamics_residual: f64,
    /// Absent when the horizon is shorter than the metric window.
    pub sync: Option<SyncSummary>,
    pub energy_nonincreasing: bool,
    pub energy_max_increase: f64,
    /// The spectral or structural verdict, which simulation can only corroborate.
    pub verdict: Decision,
}

impl SimulationSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncSummary {
    pub metric: f64,
    pub amplitudes: Vec<f64>,
    pub nontrivial: bool,
    pub window: (f64, f64),
    pub corroborates: bool,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub summary: SimulationSummary,
    pub solution: ModalSolution,
    pub energy: EnergyTrace,
}

impl Simulation {
    pub fn trajectory(&self) -> &Trajectory {
        &self.solution.trajectory
    }

    pub fn csv(&self) -> String {
        dynamics::write_csv(self.trajectory(), &self.energy)
    }
}

/// Default output step: a hundredth of a period, coarsened so the grid has at most
/// a million rows.
pub fn default_dt(omega0: f64, t_end: f64) -> f64 {
    (2.0 * std::f64::consts::PI / omega0 / 100.0).max(t_end / 1e6)
}

/// Modal simulation of the declared network plus the synchronization metric and
/// energy check.
pub fn simulate(net: &Network, opts: &SimulateOptions) -> Result<Simulation> {
    let sync_opts = SyncOptions { seed: opts.seed, tol_imag: opts.tol_imag };
    let decided = spectral::decide(net, &sync_opts)?;
    let omega0 = net.omega0();
    let t_end = match opts.t_end {
        Some(t) => t,
        None => match &decided.effective {
            Some(el) => dynamics::default_horizon(&el.eigenvalues, omega0, spectral::default_tol_re(&el.eigenvalues)),
            None => 200.0 / omega0,
        },
    };
    let dt = opts.dt.unwrap_or_else(|| default_dt(omega0, t_end));
    let times = dynamics::time_grid(t_end, dt)?;

    let mb = build_matrices(net);
    let pencil = dynamics::linearize_pencil(&mb, omega0, opts.seed)?;
    let basis = dynamics::modal_solve(&pencil)?;
    let init = match opts.ic {
        IcSpec::Random => dynamics::random_initial_condition(net.q(), opts.seed),
        IcSpec::Mode(k) => {
            if k >= basis.modes.len() {
                return Err(OscError::Invalid(format!(
                    "mode {k} requested, network has {} modes (0-based)",
                    basis.modes.len()
                )));
            }
            let mut cf = vec![c(0.0, 0.0); basis.modes.len()];
            cf[k] = c(1.0, 0.0);
            InitialCondition::Modal(cf)
        }
        IcSpec::Sync => {
            let bip = decided
                .verdict
                .linkage
                .bipartition(net.n())
                .ok_or_else(|| OscError::Invalid("--ic sync needs a bilayer linkage".into()))?;
            let in_first: Vec<bool> = (0..net.n()).map(|i| bip.in_first(i)).collect();
            dynamics::sync_initial_condition(&mb, &in_first, omega0)
        }
    };
    let solution = dynamics::trajectory(&basis, &init, &times)?;
    let traj = &solution.trajectory;
    let window = dynamics::default_window(omega0);
    let verdict = decided.verdict.decision;
    let sync = if t_end >= window {
        let m = dynamics::sync_metric(&times, &traj.v, omega0, window)?;
        let synced = m.metric < 1e-3 && m.nontrivial;
        let corroborates = match verdict {
            Decision::Synchronous => synced,
            Decision::NotSynchronous => !synced,
            Decision::OutsideTheory => false,
        };
        Some(SyncSummary { metric: m.metric, amplitudes: m.amplitudes, nontrivial: m.nontrivial, window: m.window, corroborates })
    } else {
        None
    };
    let energy = dynamics::energy_trace(traj, &mb, omega0);
    let w_scale = energy.w.iter().copied().fold(0.0, f64::max);
    let energy_nonincreasing = energy.nonincreasing(1e-10 * w_scale.max(f64::MIN_POSITIVE));

    let summary = SimulationSummary {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: opts.seed,
        ic: opts.ic.to_string(),
        t_end,
        dt,
        samples: times.len(),
        modes: basis
            .modes
            .iter()
            .enumerate()
            .map(|(index, m)| ModeSummary { index, lambda: m.lambda.into(), real: m.real })
            .collect(),
        infinite_eigenvalues: basis.infinite,
        fit_residual: solution.fit_residual,
        dynamics_residual: solution.dynamics_residual,
        sync,
        energy_nonincreasing,
        energy_max_increase: energy.max_increase,
        verdict,
    };
    Ok(Simulation { summary, solution, energy })
}

/// Grounded state `(e'(0), e(0))` of a modal solution, for seeding the time stepper.
pub fn initial_state(sol: &ModalSolution) -> (DVector<f64>, DVector<f64>) {
    let (e, ed, _) = sol.state(0.0);
    (ed, e)
}

pub fn cvec_from(values: &[Cx]) -> CVec {
    CVec::from_iterator(values.len(), values.iter().map(|&z| z.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::parse_netlist;

    #[test]
    fn report_round_trips_through_json() {
        let rep = analyze(&fixtures::four_tank(4.0), &SyncOptions::default()).unwrap();
        let json = rep.to_json();
        assert!(json.contains("\"re\"") && json.contains("\"decision\": \"not_synchronous\""));
        assert_eq!(AnalysisReport::from_json(&json).unwrap(), rep);
        assert_eq!(rep.exit_code(), 1);
    }

    #[test]
    fn identical_inputs_give_identical_json() {
        let net = parse_netlist(fixtures::NET_A, false).unwrap();
        let a = analyze(&net, &SyncOptions::default()).unwrap().to_json();
        let b = analyze(&net, &SyncOptions::default()).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn ic_spec_parsing() {
        assert_eq!("random".parse::<IcSpec>().unwrap(), IcSpec::Random);
        assert_eq!("mode:3".parse::<IcSpec>().unwrap(), IcSpec::Mode(3));
        assert_eq!("sync".parse::<IcSpec>().unwrap(), IcSpec::Sync);
        assert!("mode:x".parse::<IcSpec>().is_err());
        assert_eq!(IcSpec::Mode(2).to_string(), "mode:2");
    }

    #[test]
    fn simulate_net_a_defaults() {
        let net = parse_netlist(fixtures::NET_A, false).unwrap();
        let sim = simulate(&net, &SimulateOptions::default()).unwrap();
        assert!(sim.summary.sync.as_ref().is_some_and(|m| m.corroborates), "{:?}", sim.summary);
        assert!(sim.summary.energy_nonincreasing);
        assert!(sim.csv().starts_with("t,v1,v2,W\n"));
    }
}
