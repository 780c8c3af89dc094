//! One PASS/FAIL line per acceptance criterion, with timings.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bayesmet::bound::{
    analyze, classical_matrix_error, local_imaging_f, symmetric_eigenvalues, Analysis, BoundOptions,
};
use bayesmet::measurement::{common_eigenbasis_povm, two_phase_povm, Completion, Povm};
use bayesmet::models::{
    preset_global_imaging, preset_local_imaging, preset_qubit_network, preset_two_phase_imaging,
    EstimationModel,
};
use bayesmet::moments::{averaged_states, DEFAULT_NODES};
use bayesmet::operators::{c64, gell_mann, kron, pauli, random_orthonormal_basis, CMatrix};
use bayesmet::parallel::with_workers;
use bayesmet::simulate::{
    improvement, mse_curve, repeated_mse, sample_rng, Method, SimulationConfig,
};

type Checks = Vec<(String, bool)>;

struct Outcome {
    id: u32,
    title: &'static str,
    checks: Checks,
    elapsed: Duration,
}

fn criterion(
    id: u32,
    title: &'static str,
    budget: Duration,
    body: impl FnOnce(&mut Checks),
) -> Outcome {
    let start = Instant::now();
    let mut checks = Vec::new();
    body(&mut checks);
    let elapsed = start.elapsed();
    checks.push((
        format!(
            "runtime {:.2} s < {:.0} s",
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        ),
        elapsed < budget,
    ));
    Outcome {
        id,
        title,
        checks,
        elapsed,
    }
}

fn check(checks: &mut Checks, ok: bool, label: String) {
    checks.push((label, ok));
}

fn run(model: &EstimationModel) -> Analysis {
    analyze(model, &BoundOptions::default()).unwrap()
}

fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn qubit_closed_form(g: f64) -> f64 {
    PI * PI / 48.0
        - 2.0 * (4.0 - PI).powi(2) * (2.0 - (4.0 - PI * PI) * g * g + 2.0 * g.powi(4))
            / (PI.powi(4) * (1.0 + g * g).powi(2))
}

fn global_closed_form(d: usize, nbar: u32, alpha: f64) -> f64 {
    let nb = f64::from(nbar);
    (PI * PI / 3.0 - 4.0 * alpha * alpha / ((1.0 + alpha * alpha) * (d as f64 + alpha * alpha)))
        / (nb * nb)
}

fn f_closed_form(n: f64, nbar: f64, d: f64) -> f64 {
    let a = n * PI * (n * PI / nbar).cos() - nbar * (n * PI / nbar).sin();
    4.0 * nbar.powi(3) * ((1.0 + d) * n - nbar) * a * a / (PI * PI * n.powi(6) * (1.0 + d).powi(2))
}

fn c1_qubit_bound() -> Outcome {
    criterion(1, "qubit single-shot bound", Duration::from_secs(1), |c| {
        let out = Command::new(env!("CARGO_BIN_EXE_bayesmet"))
            .args(["bound", "--preset", "qubit", "--gamma", "1"])
            .env_remove("BAYESMET_THREADS")
            .output()
            .expect("binary runs");
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
        let got = v["report"]["scalar_bound"].as_f64().unwrap_or(f64::NAN);
        let expected = PI * PI / 48.0 - (4.0 - PI).powi(2) / (2.0 * PI * PI);
        check(
            c,
            out.status.success() && (got - expected).abs() < 1e-9,
            format!("CLI bound {got:.12} vs π²/48 − (4−π)²/(2π²) = {expected:.12}"),
        );
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let g = 0.1 + 0.15 * f64::from(k);
            let a = run(&preset_qubit_network(g).unwrap());
            worst = worst.max((a.bound.value - qubit_closed_form(g)).abs());
        }
        check(
            c,
            worst < 1e-9,
            format!("general-γ formula on 20 γ, max |Δ| = {worst:.2e}"),
        );
    })
}

fn c2_estimators() -> Outcome {
    criterion(
        2,
        "closed-form estimator recovery",
        Duration::from_secs(1),
        |c| {
            let (x, y, id) = (pauli::x(), pauli::y(), pauli::identity());
            for g in [0.5, 1.0, 2.0] {
                let a = run(&preset_qubit_network(g).unwrap());
                let pre = 2.0 * (4.0 - PI) / (PI * (1.0 + g * g));
                let c1 = c64(pre * g / 2f64.sqrt(), 0.0);
                let c2 = c64(pre * (1.0 - g * g) / PI, 0.0);
                let s1 = kron(&y, &id) * c1 + kron(&x, &y) * c2;
                let s2 = kron(&id, &y) * c1 + kron(&y, &x) * c2;
                let e1 = max_entry_diff(a.estimators.estimators[0].matrix(), &s1);
                let e2 = max_entry_diff(a.estimators.estimators[1].matrix(), &s2);
                check(
                    c,
                    e1.max(e2) < 1e-9,
                    format!("qubit γ={g}: Pauli forms, max |Δ| = {:.2e}", e1.max(e2)),
                );
            }
            for (d, nbar, alpha) in [(1usize, 4u32, 1.0), (2, 4, 0.8), (3, 5, 1.3), (4, 6, 2.0)] {
                let a = run(&preset_global_imaging(d, nbar, alpha, false).unwrap());
                let mut worst: f64 = 0.0;
                for k in 1..=d {
                    let mut s = CMatrix::zeros(d + 1, d + 1);
                    let v = c64(
                        0.0,
                        -2.0 * alpha / (f64::from(nbar) * (1.0 + alpha * alpha)),
                    );
                    s[(k, 0)] = v;
                    s[(0, k)] = -v;
                    worst = worst.max(max_entry_diff(a.estimators.estimators[k - 1].matrix(), &s));
                }
                check(
                    c,
                    worst < 1e-9,
                    format!("imaging d={d} n̄={nbar} α={alpha}: S_k, max |Δ| = {worst:.2e}"),
                );
            }
        },
    )
}

fn c3_saturation() -> Outcome {
    criterion(3, "saturation at μ = 1", Duration::from_secs(10), |c| {
        let model = preset_qubit_network(1.0).unwrap();
        let a = run(&model);
        let povm = common_eigenbasis_povm(&a.estimators).unwrap();
        let score = a.classical_score(&povm).unwrap();
        check(
            c,
            (score - a.bound.value).abs() < 1e-8,
            format!("Tr(𝒲Σc) = {score:.12}, bound = {:.12}", a.bound.value),
        );
        let est = repeated_mse(&model, &povm, 1, &SimulationConfig::default()).unwrap();
        check(
            c,
            est.method == Method::Enumerate && (est.value - a.bound.value).abs() <= 2e-3,
            format!(
                "repeated_mse(μ=1) = {:.6} via {}, grid bias {:.2e}",
                est.value,
                est.method.as_str(),
                (est.value - a.bound.value).abs()
            ),
        );
    })
}

fn c4_curve() -> Outcome {
    criterion(
        4,
        "repeated-shot curve of the qubit network",
        Duration::from_secs(600),
        |c| {
            let model = preset_qubit_network(1.0).unwrap();
            let a = run(&model);
            let povm = common_eigenbasis_povm(&a.estimators).unwrap();
            let cfg = SimulationConfig {
                mc_samples: 20_000,
                workers: Some(1),
                ..SimulationConfig::default()
            };
            let mu = [1, 2, 5, 10, 20, 50, 100, 200, 500];
            let curve = mse_curve(&model, &povm, &mu, &cfg).unwrap();
            let mut monotone = true;
            for w in curve.windows(2) {
                let (p, q) = (&w[0].estimate, &w[1].estimate);
                let tol = 2.0 * (p.std_error.powi(2) + q.std_error.powi(2)).sqrt();
                if q.value > p.value + tol {
                    monotone = false;
                }
            }
            check(c, monotone, "non-increasing within 2·std_error".into());
            let below: Vec<String> = curve
                .iter()
                .filter(|p| p.estimate.value < p.crb.unwrap_or(0.0))
                .map(|p| {
                    format!(
                        "μ={}: {:.5} < {:.5}",
                        p.estimate.mu,
                        p.estimate.value,
                        p.crb.unwrap()
                    )
                })
                .collect();
            check(
                c,
                below.is_empty(),
                if below.is_empty() {
                    "above ε̄_cr = 1/μ at every μ".into()
                } else {
                    format!("above ε̄_cr = 1/μ; violated at {}", below.join(", "))
                },
            );
            let last = &curve.last().unwrap().estimate;
            let scaled = last.value * 500.0;
            check(
                c,
                (scaled - 1.0).abs() < 0.05,
                format!(
                    "|ε̄·μ − 1| at μ=500: ε̄·μ = {scaled:.4} ± {:.4} ({})",
                    last.std_error * 500.0,
                    last.method.as_str()
                ),
            );
        },
    )
}

fn c5_improvement() -> Outcome {
    criterion(
        5,
        "single-shot improvement over the prior",
        Duration::from_secs(60),
        |c| {
            let model = preset_qubit_network(1.0).unwrap();
            let a = run(&model);
            let povm = common_eigenbasis_povm(&a.estimators).unwrap();
            let prior = a.moments.weighted_variance(&a.weights);
            let est = repeated_mse(&model, &povm, 1, &SimulationConfig::default()).unwrap();
            let pct = improvement(prior, est.value).unwrap();
            check(
                c,
                (pct - 18.0).abs() <= 1.0,
                format!("improvement {pct:.3}% vs 18 ± 1"),
            );
        },
    )
}

fn c6_imaging() -> Outcome {
    criterion(6, "imaging bounds", Duration::from_secs(5), |c| {
        let mut worst: f64 = 0.0;
        for d in 1..=4 {
            for nbar in [4u32, 6] {
                for alpha in [0.3, 0.7, 1.0, 1.5, 2.5] {
                    let a = run(&preset_global_imaging(d, nbar, alpha, false).unwrap());
                    worst = worst.max((a.bound.value - global_closed_form(d, nbar, alpha)).abs());
                }
            }
        }
        check(
            c,
            worst < 1e-9,
            format!("global bound vs closed form on 40 (d, n̄, α), max |Δ| = {worst:.2e}"),
        );

        let step = 0.02;
        for d in [2usize, 3, 4] {
            let mut best = (f64::NAN, f64::INFINITY);
            for k in 0..=140 {
                let alpha = 0.2 + step * f64::from(k);
                let b = run(&preset_global_imaging(d, 4, alpha, false).unwrap())
                    .bound
                    .value;
                if b < best.1 {
                    best = (alpha, b);
                }
            }
            let target = (d as f64).powf(0.25);
            check(
                c,
                (best.0 - target).abs() <= step,
                format!(
                    "d={d}: α scan argmin {:.2} vs d^(1/4) = {target:.4}",
                    best.0
                ),
            );
        }

        let mut worst: f64 = 0.0;
        for (d, nbar, n) in [
            (1usize, 4u32, 4u32),
            (2, 4, 4),
            (2, 4, 7),
            (3, 4, 9),
            (2, 6, 13),
        ] {
            let a = run(&preset_local_imaging(d, nbar, n, false).unwrap());
            let nb = f64::from(nbar);
            let f = f_closed_form(f64::from(n), nb, d as f64);
            worst = worst.max((a.bound.value - (PI * PI / 3.0 - f) / (nb * nb)).abs());
            worst = worst.max((local_imaging_f(f64::from(n), nb, d as f64) - f).abs());
        }
        check(
            c,
            worst < 1e-9,
            format!("local bound vs (π²/3 − f)/n̄², max |Δ| = {worst:.2e}"),
        );
        let mut worst: f64 = 0.0;
        for d in 1..=6 {
            for nbar in [4.0, 5.0, 8.0] {
                let dd = f64::from(d);
                worst = worst
                    .max((local_imaging_f(nbar, nbar, dd) - 4.0 * dd / (1.0 + dd).powi(2)).abs());
            }
        }
        check(
            c,
            worst <= 1e-15,
            format!("f(n̄, n̄, d) = 4d/(1+d)², max |Δ| = {worst:.1e}"),
        );
        let tail = local_imaging_f(1e6, 4.0, 2.0);
        check(c, tail < 1e-9, format!("f(10⁶, 4, 2) = {tail:.2e}"));
    })
}

fn c7_two_phase() -> Outcome {
    criterion(
        7,
        "two-phase imaging with trial projectors",
        Duration::from_secs(5),
        |c| {
            let a = run(&preset_two_phase_imaging().unwrap());
            let expected = PI * PI / 48.0
                - 2.0 * (4.0 + 3.0 * PI * PI + PI.powi(4)) / (3.0 * PI.powi(4) * (2.0 + PI * PI));
            check(
                c,
                (a.bound.value - expected).abs() < 1e-9,
                format!("bound {:.12} vs closed form {expected:.12}", a.bound.value),
            );
            for convention in [Completion::Residual, Completion::Renormalize] {
                let (povm, record) = two_phase_povm(convention).unwrap();
                let score = a.classical_score(&povm).unwrap();
                check(
                c,
                (score - 0.142).abs() <= 0.003,
                format!(
                    "{convention} completion (input defect {:.1e}): Tr(𝒲Σc) = {score:.6} vs 0.142 ± 0.003",
                    record.input_defect
                ),
            );
            }
        },
    )
}

fn c8_properties() -> Outcome {
    criterion(8, "property suite", Duration::from_secs(300), |c| {
        let presets = [
            ("qubit γ=1", preset_qubit_network(1.0).unwrap()),
            ("qubit γ=2", preset_qubit_network(2.0).unwrap()),
            (
                "global d=2",
                preset_global_imaging(2, 4, 1.0, false).unwrap(),
            ),
            (
                "global d=3",
                preset_global_imaging(3, 4, 1.3, false).unwrap(),
            ),
            ("two-phase", preset_two_phase_imaging().unwrap()),
            ("local d=2", preset_local_imaging(2, 4, 6, false).unwrap()),
        ];
        let mut psd = true;
        let mut means: f64 = 0.0;
        let mut ordering: f64 = f64::INFINITY;
        for (idx, (_, model)) in presets.iter().enumerate() {
            let a = run(model);
            let ev = symmetric_eigenvalues(&a.sigma_q);
            psd &= ev[0] >= -1e-10 * ev.last().unwrap().abs().max(1.0);
            for (m, c0) in a.bound.estimator_means.iter().zip(model.prior().center()) {
                means = means.max((m - c0).abs());
            }
            let mut rng = sample_rng(2024, idx as u64);
            for _ in 0..100 {
                let povm =
                    Povm::from_basis(&random_orthonormal_basis(model.dim(), &mut rng)).unwrap();
                let sc = classical_matrix_error(&a.moments, &a.averaged, &povm).unwrap();
                let score = bayesmet::bound::weighted_trace(&a.weights, &sc);
                ordering = ordering.min(score - a.bound.value);
            }
        }
        check(c, psd, "Σq ⪰ 0 on every preset".into());
        check(
            c,
            ordering >= -1e-9,
            format!("Tr(𝒲Σc) − Tr(𝒲Σq) over 600 random projective POVMs, min {ordering:.3e}"),
        );
        check(
            c,
            means < 1e-9,
            format!("Tr(ρSᵢ) = prior mean, max |Δ| = {means:.2e}"),
        );

        let quad = quadrature_defect();
        check(
            c,
            quad < 1e-10,
            format!("quadrature vs analytic ρ, ρ̄ᵢ, max |Δ| = {quad:.2e}"),
        );

        let model = preset_qubit_network(1.0).unwrap();
        let a = run(&model);
        let povm = common_eigenbasis_povm(&a.estimators).unwrap();
        for mu in [2usize, 5] {
            let exact = repeated_mse(&model, &povm, mu, &SimulationConfig::default()).unwrap();
            let mc = repeated_mse(
                &model,
                &povm,
                mu,
                &SimulationConfig {
                    enumeration_cap: 0,
                    mc_samples: 20_000,
                    seed: 3,
                    ..SimulationConfig::default()
                },
            )
            .unwrap();
            let z = (mc.value - exact.value).abs() / mc.std_error;
            check(
                c,
                exact.method == Method::Enumerate && z < 3.0,
                format!(
                    "μ={mu}: enumeration {:.6} vs Monte Carlo {:.6} ({z:.2} std_error)",
                    exact.value, mc.value
                ),
            );
        }

        let cfg = |workers| SimulationConfig {
            enumeration_cap: 0,
            mc_samples: 4000,
            seed: 17,
            workers: Some(workers),
            ..SimulationConfig::default()
        };
        let reference = repeated_mse(&model, &povm, 10, &cfg(1)).unwrap();
        let mut identical = true;
        for w in [2, 8] {
            let other = repeated_mse(&model, &povm, 10, &cfg(w)).unwrap();
            identical &= other.value.to_bits() == reference.value.to_bits()
                && other.std_error.to_bits() == reference.std_error.to_bits();
        }
        let bound_bits: Vec<u64> = [1, 2, 8]
            .into_iter()
            .map(|w| {
                with_workers(Some(w), || {
                    run(&preset_global_imaging(3, 4, 1.1, false).unwrap())
                })
                .bound
                .value
                .to_bits()
            })
            .collect();
        identical &= bound_bits.windows(2).all(|w| w[0] == w[1]);
        check(
            c,
            identical,
            "bit-identical outputs under 1, 2 and 8 workers".into(),
        );
    })
}

/// Largest entry deviation of the averaged states from their hand-derived forms.
fn quadrature_defect() -> f64 {
    let mut worst: f64 = 0.0;
    for g in [0.0, 0.5, 1.0, 2.0] {
        let avg = averaged_states(&preset_qubit_network(g).unwrap(), DEFAULT_NODES).unwrap();
        let (rho, b1, b2) = qubit_analytic(g);
        worst = worst
            .max(max_entry_diff(avg.rho.matrix(), &rho))
            .max(max_entry_diff(avg.rho_bar[0].matrix(), &b1))
            .max(max_entry_diff(avg.rho_bar[1].matrix(), &b2));
    }
    for (d, nbar, alpha) in [(1usize, 4u32, 1.0), (2, 4, 0.7), (3, 6, 1.4)] {
        let avg = averaged_states(
            &preset_global_imaging(d, nbar, alpha, false).unwrap(),
            DEFAULT_NODES,
        )
        .unwrap();
        let norm = d as f64 + alpha * alpha;
        let mut rho = CMatrix::identity(d + 1, d + 1) * c64(1.0 / norm, 0.0);
        rho[(0, 0)] = c64(alpha * alpha / norm, 0.0);
        worst = worst.max(max_entry_diff(avg.rho.matrix(), &rho));
        for k in 1..=d {
            let mut bar = CMatrix::zeros(d + 1, d + 1);
            let v = c64(0.0, -alpha / (f64::from(nbar) * norm));
            bar[(k, 0)] = v;
            bar[(0, k)] = -v;
            worst = worst.max(max_entry_diff(avg.rho_bar[k - 1].matrix(), &bar));
        }
    }
    let avg = averaged_states(&preset_two_phase_imaging().unwrap(), DEFAULT_NODES).unwrap();
    let gm = gell_mann();
    let rho = (CMatrix::identity(3, 3)
        + (&gm[0] + &gm[3]) * c64(2.0 / PI, 0.0)
        + &gm[5] * c64(4.0 / (PI * PI), 0.0))
        * c64(1.0 / 3.0, 0.0);
    let bar1 = (&gm[6] * c64(2.0 / PI, 0.0) - &gm[1]) * c64(1.0 / (3.0 * PI), 0.0);
    let bar2 = (&gm[6] * c64(2.0 / PI, 0.0) + &gm[4]) * c64(-1.0 / (3.0 * PI), 0.0);
    worst
        .max(max_entry_diff(avg.rho.matrix(), &rho))
        .max(max_entry_diff(avg.rho_bar[0].matrix(), &bar1))
        .max(max_entry_diff(avg.rho_bar[1].matrix(), &bar2))
}

/// ρ, ρ̄₁, ρ̄₂ of the qubit network written out entry by entry.
fn qubit_analytic(g: f64) -> (CMatrix, CMatrix, CMatrix) {
    let r2 = 2f64.sqrt();
    let pre = 1.0 / (2.0 * PI * PI * (1.0 + g * g));
    let a = 2.0 * r2 * PI * g;
    let (p2, g2) = (PI * PI, PI * PI * g * g);
    let e = 8.0 * g * g;
    #[rustfmt::skip]
    let rho = [
        p2, a, a, 8.0,
        a, g2, e, a,
        a, e, g2, a,
        8.0, a, a, p2,
    ];
    let w = c64(0.0, (4.0 - PI) / (2.0 * r2 * PI * PI * (1.0 + g * g)));
    let (pg, q, t) = (PI * g, 2.0 * r2 * g * g, 2.0 * r2);
    #[rustfmt::skip]
    let bar1 = [
        0.0, 0.0, -pg, -t,
        0.0, 0.0, -q, -pg,
        pg, q, 0.0, 0.0,
        t, pg, 0.0, 0.0,
    ];
    #[rustfmt::skip]
    let bar2 = [
        0.0, -pg, 0.0, -t,
        pg, 0.0, q, 0.0,
        0.0, -q, 0.0, -pg,
        t, 0.0, pg, 0.0,
    ];
    (
        CMatrix::from_row_slice(4, 4, &rho.map(|x| c64(x * pre, 0.0))),
        CMatrix::from_row_slice(4, 4, &bar1.map(|x| w * x)),
        CMatrix::from_row_slice(4, 4, &bar2.map(|x| w * x)),
    )
}

fn main() -> ExitCode {
    let suite: [fn() -> Outcome; 8] = [
        c1_qubit_bound,
        c2_estimators,
        c3_saturation,
        c4_curve,
        c5_improvement,
        c6_imaging,
        c7_two_phase,
        c8_properties,
    ];
    let mut failed = 0;
    for f in suite {
        let o = f();
        let ok = o.checks.iter().all(|(_, pass)| *pass);
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {}: {} ({:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            o.id,
            o.title,
            o.elapsed.as_secs_f64()
        );
        for (label, pass) in &o.checks {
            println!("    [{}] {label}", if *pass { "ok" } else { "x " });
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
