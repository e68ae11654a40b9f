//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oscnet::dynamics::{self, default_window, sync_metric_profile};
use oscnet::efflap::{effective_laplacian_of, parallel_sum};
use oscnet::fixtures;
use oscnet::generate::{random_bilayer_forest, random_linkage, BilayerSpec};
use oscnet::linalg::{c, combine, fro, CMat};
use oscnet::linkage::{build_linkage, check_bilayer_constructive, check_bipartite_cycle_parity};
use oscnet::model::{build_matrices, parse_netlist, Network};
use oscnet::report::{self, IcSpec, SimulateOptions};
use oscnet::spectral::{self, classify_imaginary_axis, reig_shift_invert, Decision, SyncOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn net(src: &str) -> Network {
    parse_netlist(src, false).expect("fixture parses")
}

fn within(actual: &[Complex64], expected: &[Complex64], tol: f64) -> (bool, f64) {
    let d = oscnet::linalg::multiset_distance(actual, expected);
    (d <= tol, d)
}

fn four_tank_spectrum(alpha: f64) -> (Vec<Complex64>, spectral::SpectralReport, Duration) {
    let start = Instant::now();
    let rep = report::analyze(&fixtures::four_tank(alpha), &SyncOptions::default()).expect("analysis");
    let elapsed = start.elapsed();
    let eigs = rep.eigenvalues();
    let sr = classify_imaginary_axis(&eigs, None);
    (eigs, sr, elapsed)
}

fn criterion_1() -> Outcome {
    let (eigs, _, elapsed) = four_tank_spectrum(1.0);
    let expected = [c(0.0, 0.0), c(0.5795, 1.8886), c(0.6283, 4.1990), c(1.4393, 11.3242)];
    let (ok, d) = within(&eigs, &expected, 1e-3);
    let fast = elapsed < Duration::from_secs(1);
    outcome(ok && fast, format!("max eigenvalue error {d:.2e}, runtime {elapsed:?}"))
}

fn criterion_2() -> Outcome {
    let (eigs, sr, _) = four_tank_spectrum(4.0);
    let expected = [c(0.0, 0.0), c(0.0, 6.0), c(1.1989, 11.3818), c(1.3931, 2.3622)];
    let (ok, d) = within(&eigs, &expected, 1e-3);
    let lambda2 = eigs
        .iter()
        .min_by(|a, b| (*a - c(0.0, 6.0)).norm().total_cmp(&(*b - c(0.0, 6.0)).norm()))
        .copied()
        .unwrap_or(c(f64::NAN, f64::NAN));
    let re_ok = lambda2.re.abs() < 1e-6;
    outcome(
        ok && re_ok && sr.imag_axis_count == 2,
        format!(
            "max eigenvalue error {d:.2e}, Re(lambda2) = {:.2e}, imaginary-axis count {}",
            lambda2.re, sr.imag_axis_count
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..100 {
        let net = random_bilayer_forest(&mut rng, &BilayerSpec::default());
        let (_, el) = match effective_laplacian_of(&net) {
            Ok(x) => x,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let (p, q) = common::reig_pencil(&net);
        let Ok(r) = reig_shift_invert(&p, &q, 1000 + i) else {
            failures += 1;
            continue;
        };
        let (ok, d) = common::spectra_match(&el.eigenvalues, &r.eigenvalues, 1e-6);
        let scale = 1.0 + el.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(d / scale);
        if !ok {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(30),
        format!("{failures}/100 mismatches, worst relative distance {worst:.2e}, runtime {elapsed:?}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut disagreements = 0;
    let mut bipartite = 0;
    for k in 0..1000 {
        let lk = random_linkage(&mut rng, 2 + k % 9);
        let verdict = check_bipartite_cycle_parity(&lk);
        let brute = common::exhaustive_bilayer(&lk);
        let own_ok = verdict
            .bipartition(lk.n)
            .is_none_or(|b| check_bilayer_constructive(&lk, &b));
        if verdict.bipartite != brute || !own_ok {
            disagreements += 1;
        }
        bipartite += usize::from(brute);
    }
    let elapsed = start.elapsed();
    outcome(
        disagreements == 0 && elapsed < Duration::from_secs(10),
        format!("{disagreements}/1000 disagreements ({bipartite} bilayer), runtime {elapsed:?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut disagreements = 0;
    let mut synced = 0;
    for k in 0..100 {
        let spec = BilayerSpec {
            resistive_only: true,
            coupler_density: 0.15 + 0.6 * (k as f64 / 100.0),
            ..BilayerSpec::default()
        };
        let net = random_bilayer_forest(&mut rng, &spec);
        let verdict = check_bipartite_cycle_parity(&build_linkage(&net));
        let structural = matches!(verdict.layers_connected(), Some((true, true)));
        let spectral = match effective_laplacian_of(&net) {
            Ok((_, el)) => classify_imaginary_axis(&el.eigenvalues, None).imag_axis_count == 1,
            Err(_) => !structural,
        };
        disagreements += usize::from(structural != spectral);
        synced += usize::from(structural);
    }
    outcome(disagreements == 0, format!("{disagreements}/100 disagreements ({synced} synchronous)"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut b_zero_cases = 0;
    for k in 0..200 {
        let spec = BilayerSpec { resistive_only: k % 4 == 0, ..BilayerSpec::default() };
        let net = random_bilayer_forest(&mut rng, &spec);
        let (_, el) = match effective_laplacian_of(&net) {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("#{k}: {e}"));
                continue;
            }
        };
        let r = &el.report;
        let max_abs = el.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let quad = -1e-8 * (1.0 + max_abs);
        let mut ok = r.symmetry_defect <= 1e-10 * r.y_norm
            && r.null_defect <= 1e-10 * r.y_norm
            && r.min_real_part >= quad
            && r.min_imag_part >= quad;
        if r.b_zero {
            b_zero_cases += 1;
            ok &= r.imag_norm <= 1e-10 * r.y_norm && r.min_real_eig >= -1e-8 * r.y_norm;
        }
        if !ok {
            failures.push(format!("#{k}: {r:?}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{}/200 violations ({b_zero_cases} with B = 0){}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let random = SimulateOptions::default();
    for (name, network) in [("NET-A", net(fixtures::NET_A)), ("four-tank alpha=1", fixtures::four_tank(1.0))] {
        match report::simulate(&network, &random) {
            Ok(sim) => {
                let s = &sim.summary;
                let metric = s.sync.as_ref().map_or(f64::INFINITY, |m| m.metric);
                let ok = s.sync.as_ref().is_some_and(|m| m.nontrivial) && metric < 1e-3 && s.energy_nonincreasing;
                pass &= ok;
                notes.push(format!("{name}: metric {metric:.1e} at t={:.1}", s.t_end));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }

    let four = fixtures::four_tank(4.0);
    let verdict = spectral::sync_decision(&four, &SyncOptions::default());
    match verdict {
        Ok(v) if v.decision == Decision::NotSynchronous => {
            let w = v.witness.expect("not-synchronous verdict carries a witness");
            let r = &w.residuals;
            let worst = r.pencil.max(r.conductance).max(r.voltage);
            pass &= worst <= 1e-8;
            notes.push(format!("witness residual {worst:.1e}"));

            let basis = dynamics::modal_solve(
                &dynamics::linearize_pencil(&build_matrices(&four), 1.0, 1).expect("pencil"),
            )
            .expect("modes");
            let k = basis
                .modes
                .iter()
                .position(|m| (m.lambda - c(0.0, w.omega)).norm() < 1e-8)
                .expect("witness frequency among the modes");
            let opts = SimulateOptions { ic: IcSpec::Mode(k), ..SimulateOptions::default() };
            match report::simulate(&four, &opts) {
                Ok(sim) => {
                    let tr = sim.trajectory();
                    let profile = sync_metric_profile(&tr.times, &tr.v, 1.0, default_window(1.0), 10)
                        .expect("profile");
                    let min_metric = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                    let ok = min_metric > 0.1 && sim.summary.energy_nonincreasing;
                    pass &= ok;
                    notes.push(format!("four-tank alpha=4 mode:{k}: min metric {min_metric:.3}"));
                }
                Err(e) => {
                    pass = false;
                    notes.push(format!("alpha=4: {e}"));
                }
            }
        }
        other => {
            pass = false;
            notes.push(format!("alpha=4 verdict {other:?}"));
        }
    }
    outcome(pass, notes.join("; "))
}

fn criterion_8() -> Outcome {
    let network = net(fixtures::NET_A);
    let (_, el) = effective_laplacian_of(&network).expect("Y");
    let sim = report::simulate(&network, &SimulateOptions::default()).expect("simulation");
    let rel = dynamics::reduced_residual(sim.trajectory(), &el.y, 1.0).expect("residual");
    outcome(rel <= 1e-6, format!("relative residual {rel:.2e}"))
}

fn criterion_9() -> Outcome {
    let network = net(fixtures::NET_A);
    let (lay, el) = effective_laplacian_of(&network).expect("Y");
    let hand = CMat::from_row_slice(2, 2, &[c(0.75, 0.0), c(-0.75, 0.0), c(-0.75, 0.0), c(0.75, 0.0)]);
    let d_hand = fro(&(&el.y - &hand));
    let ps = parallel_sum(&combine(&lay.g1, &lay.b1), &combine(&lay.g2, &lay.b2)).expect("parallel sum");
    let d_ps = fro(&(&el.y - &ps));
    let identity_layers = lay.f1 == nalgebra::DMatrix::identity(2, 2) && lay.f2 == lay.f1;
    outcome(
        d_hand <= 1e-10 && d_ps <= 1e-10 && identity_layers,
        format!("|Y - hand| = {d_hand:.1e}, |Y - parallel sum| = {d_ps:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let network = net(fixtures::NET_A);
    let mb = build_matrices(&network);
    let pencil = dynamics::linearize_pencil(&mb, 1.0, 1).expect("pencil");
    let basis = dynamics::modal_solve(&pencil).expect("modes");
    let init = dynamics::random_initial_condition(2, 10);
    let t_end = 20.0;
    let mut errors = Vec::new();
    for dt in [0.02, 0.01, 0.005, 0.0025] {
        let times = dynamics::time_grid(t_end, dt).expect("grid");
        let modal = dynamics::trajectory(&basis, &init, &times).expect("modal");
        let (ed0, e0) = report::initial_state(&modal);
        let stepped = dynamics::simulate_timestep(&pencil, &ed0, &e0, dt, t_end).expect("stepper");
        errors.push(dynamics::max_deviation(&modal.trajectory, &stepped));
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = ratios.iter().all(|r| (3.2..=4.8).contains(r));
    outcome(
        ok,
        format!(
            "errors {:?}, ratios {:?}",
            errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1  four-tank spectrum, alpha = 1", criterion_1),
        ("2  four-tank spectrum, alpha = 4", criterion_2),
        ("3  eig(Y) equals reig(G + jB, AA^T)", criterion_3),
        ("4  cycle parity equals exhaustive bilayer search", criterion_4),
        ("5  structural and spectral verdicts agree (B = 0)", criterion_5),
        ("6  effective Laplacian properties", criterion_6),
        ("7  simulation corroborates verdicts", criterion_7),
        ("8  reduced resistive dynamics", criterion_8),
        ("9  NET-A effective Laplacian and parallel sum", criterion_9),
        ("10 trapezoidal second-order convergence", criterion_10),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let result = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {name}: {tag} ({})", result.detail);
        failed += usize::from(!result.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
