use std::fmt::Write as _;
use std::path::Path;

use bayesmet::bound::{analyze, classical_matrix_error, rows, Analysis, BoundOptions};
use bayesmet::measurement::{
    common_eigenbasis_povm, load_povm, two_phase_povm, validate_povm, Completion, CompletionRecord,
    Povm,
};
use bayesmet::models::{
    load_model, local_imaging_mode, preset_global_imaging, preset_local_imaging,
    preset_qubit_network, preset_two_phase_imaging, EstimationModel,
};
use bayesmet::simulate::{
    improvement, log_spaced_mu, mse_curve, mse_curve_product, CurvePoint, ProductMode,
    SimulationConfig,
};
use bayesmet::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    Command, Format, ModelArgs, ModelSource, OutputArgs, PovmArgs, PovmSource, Preset, RunConfig,
    ScanArgs, ScanParam, ScanSettings, SimulateArgs, SimulationSettings,
};

pub fn run(command: Command, threads: Option<usize>) -> Result<()> {
    match command {
        Command::Bound(a) => bound(&a.model, &a.output, threads),
        Command::Simulate(a) => simulate(&a, threads),
        Command::Scan(a) => scan(&a, threads),
        Command::PovmCheck(a) => povm_check(&a.model, &a.povm, &a.output, threads),
        Command::Presets(o) => presets(&o, threads),
    }
}

fn base_config(
    command: &'static str,
    model: ModelSource,
    margs: Option<&ModelArgs>,
    out: &OutputArgs,
    threads: Option<usize>,
) -> RunConfig {
    RunConfig {
        command,
        model,
        povm: None,
        nodes: margs.map_or(bayesmet::moments::DEFAULT_NODES, |m| m.nodes),
        null_tol: margs.map_or(bayesmet::operators::DEFAULT_NULL_TOL, |m| m.null_tol),
        simulation: None,
        scan: None,
        output: out.output.clone(),
        format: out.format,
        allow_wide_prior: margs.is_some_and(|m| m.allow_wide_prior),
        threads,
        version: env!("CARGO_PKG_VERSION"),
    }
}

fn options(m: &ModelArgs) -> BoundOptions {
    BoundOptions {
        nodes: m.nodes,
        null_tol: m.null_tol,
        ..BoundOptions::default()
    }
}

pub fn build_model(source: &ModelSource, allow_wide_prior: bool) -> Result<EstimationModel> {
    match source {
        ModelSource::File { path } => load_model(path),
        ModelSource::Preset {
            name,
            gamma,
            d,
            nbar,
            alpha,
            big_n,
        } => match name {
            Preset::Qubit => preset_qubit_network(gamma.unwrap_or(1.0)),
            Preset::GlobalImaging => preset_global_imaging(
                d.unwrap_or(2),
                nbar.unwrap_or(4),
                alpha.unwrap_or(1.0),
                allow_wide_prior,
            ),
            Preset::LocalImaging => {
                let nbar = nbar.unwrap_or(4);
                preset_local_imaging(
                    d.unwrap_or(2),
                    nbar,
                    big_n.unwrap_or(nbar),
                    allow_wide_prior,
                )
            }
            Preset::TwoPhase => preset_two_phase_imaging(),
        },
        ModelSource::None => Err(Error::Precondition("no model given".into())),
    }
}

fn emit(cfg: &RunConfig, json_body: Value, csv_body: impl FnOnce() -> String) -> Result<()> {
    let text = match cfg.format {
        Format::Json => {
            let mut doc = json!({ "config": cfg });
            if let (Value::Object(doc), Value::Object(body)) = (&mut doc, json_body) {
                doc.extend(body);
            }
            serde_json::to_string_pretty(&doc).expect("artifact serializes") + "\n"
        }
        Format::Csv => {
            let header = serde_json::to_string(cfg).expect("config serializes");
            format!("# config: {header}\n{}", csv_body())
        }
    };
    match &cfg.output {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn bound(m: &ModelArgs, out: &OutputArgs, threads: Option<usize>) -> Result<()> {
    let cfg = base_config("bound", m.source(), Some(m), out, threads);
    let model = build_model(&cfg.model, m.allow_wide_prior)?;
    let a = analyze(&model, &options(m))?;
    let report = a.report();
    let body = json!({ "model": model_summary(&model), "report": report });
    emit(&cfg, body, || {
        let mut s = String::from("quantity,value\n");
        let b = &a.bound;
        let _ = writeln!(s, "scalar_bound,{}", b.value);
        let _ = writeln!(s, "uncertainty_relation,{}", b.uncertainty_relation);
        let _ = writeln!(s, "prior_term,{}", b.prior_term);
        let _ = writeln!(s, "estimator_term,{}", b.estimator_term);
        let _ = writeln!(s, "crb_per_shot,{}", opt(a.crb_per_shot));
        let _ = writeln!(s, "compatible,{}", a.compatibility.compatible);
        let _ = writeln!(s, "support_rank,{}", a.estimators.support_rank);
        matrix_rows(&mut s, "k", &a.k_matrix);
        matrix_rows(&mut s, "sigma_q", &a.sigma_q);
        s
    })
}

fn matrix_rows(s: &mut String, name: &str, m: &nalgebra::DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let _ = writeln!(s, "{name}_{}{},{}", i + 1, j + 1, m[(i, j)]);
        }
    }
}

fn model_summary(model: &EstimationModel) -> Value {
    json!({
        "dim": model.dim(),
        "num_params": model.num_params(),
        "labels": model.labels(),
        "weights": model.weights(),
        "prior": { "center": model.prior().center(), "halfwidth": model.prior().halfwidth() },
    })
}

#[derive(Serialize)]
struct PovmSummary<'a> {
    labels: &'a [String],
    completion: Option<CompletionRecord>,
}

/// Resolves `--povm` against the analysed model.
fn resolve_povm(
    povm_args: &PovmArgs,
    analysis: &Analysis,
) -> Result<(Povm, Option<CompletionRecord>)> {
    let convention: Completion = povm_args.completion.into();
    match povm_args.povm.as_str() {
        "auto" => Ok((common_eigenbasis_povm(&analysis.estimators)?, None)),
        "two-phase" => {
            let (p, r) = two_phase_povm(convention)?;
            Ok((p, Some(r)))
        }
        path => {
            let (p, r) = load_povm(Path::new(path), convention)?;
            Ok((p, Some(r)))
        }
    }
}

fn povm_source(povm_args: &PovmArgs) -> PovmSource {
    PovmSource {
        source: povm_args.povm.clone(),
        completion: povm_args.completion.into(),
    }
}

fn simulate(a: &SimulateArgs, threads: Option<usize>) -> Result<()> {
    let mu_list = a.mu.clone().unwrap_or_else(|| log_spaced_mu(1000));
    let mut cfg = base_config(
        "simulate",
        a.model.source(),
        Some(&a.model),
        &a.output,
        threads,
    );
    cfg.povm = Some(povm_source(&a.povm));
    cfg.simulation = Some(SimulationSettings {
        grid_nodes: a.grid_nodes,
        mc_samples: a.mc_samples,
        enumeration_cap: a.enumeration_cap,
        seed: a.seed,
        mu: mu_list.clone(),
    });
    let sim = SimulationConfig {
        enumeration_cap: a.enumeration_cap,
        mc_samples: a.mc_samples,
        seed: a.seed,
        grid_nodes: a.grid_nodes,
        workers: None,
    };
    let model = build_model(&cfg.model, a.model.allow_wide_prior)?;
    let analysis = analyze(&model, &options(&a.model))?;

    let local_product = matches!(
        cfg.model,
        ModelSource::Preset {
            name: Preset::LocalImaging,
            ..
        }
    ) && a.povm.povm == "auto";
    let (points, labels, completion): (Vec<CurvePoint>, Vec<String>, Option<CompletionRecord>) =
        if local_product {
            let ModelSource::Preset { d, nbar, big_n, .. } = &cfg.model else {
                unreachable!()
            };
            let (d, nbar) = (d.unwrap_or(2), nbar.unwrap_or(4));
            let mode =
                local_imaging_mode(d, nbar, big_n.unwrap_or(nbar), a.model.allow_wide_prior)?;
            let mode_analysis = analyze(&mode, &options(&a.model))?;
            let povm = common_eigenbasis_povm(&mode_analysis.estimators)?;
            let labels = povm.labels().to_vec();
            let modes: Vec<ProductMode> = (0..d)
                .map(|_| ProductMode {
                    model: mode.clone(),
                    povm: povm.clone(),
                })
                .collect();
            let pts = mse_curve_product(
                &modes,
                model.weights(),
                analysis.crb_per_shot,
                &mu_list,
                &sim,
            )?;
            (pts, labels, None)
        } else {
            let (povm, rec) = resolve_povm(&a.povm, &analysis)?;
            let pts = mse_curve(&model, &povm, &mu_list, &sim)?;
            (pts, povm.labels().to_vec(), rec)
        };

    let prior_uncertainty = analysis.moments.weighted_variance(model.weights());
    let single_shot = points
        .iter()
        .find(|p| p.estimate.mu == 1)
        .map(|p| improvement(prior_uncertainty, p.estimate.value))
        .transpose()?;
    for p in &points {
        if let Some(w) = &p.estimate.warning {
            eprintln!("warning: μ = {}: {w}", p.estimate.mu);
        }
    }
    let body = json!({
        "model": model_summary(&model),
        "povm": PovmSummary { labels: &labels, completion },
        "prior_uncertainty": prior_uncertainty,
        "scalar_bound": analysis.bound.value,
        "crb_per_shot": analysis.crb_per_shot,
        "single_shot_improvement_percent": single_shot,
        "points": points,
    });
    emit(&cfg, body, || {
        let mut s = String::from("mu,mse,std_error,method,samples,crb\n");
        for p in &points {
            let e = &p.estimate;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.mu,
                e.value,
                e.std_error,
                e.method.as_str(),
                e.samples,
                opt(p.crb)
            );
        }
        s
    })
}

fn default_range(param: ScanParam, nbar: f64) -> (f64, f64, f64) {
    match param {
        ScanParam::Gamma => (0.1, 3.0, 0.05),
        ScanParam::Alpha => (0.2, 3.0, 0.02),
        ScanParam::BigN => (nbar, 10.0 * nbar, nbar),
        ScanParam::D => (1.0, 6.0, 1.0),
    }
}

fn sweep(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(to >= from) {
        return Err(Error::Precondition(format!(
            "invalid sweep from {from} to {to} with step {step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(Error::Resource(format!(
            "sweep of {} points is too long",
            n + 1
        )));
    }
    // round away the accumulation noise of `from + k·step`
    Ok((0..=n)
        .map(|k| ((from + k as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

fn integer_value(v: f64, what: &str) -> Result<u32> {
    if v.fract() != 0.0 || v < 1.0 {
        return Err(Error::Precondition(format!(
            "{what} must be a positive integer, got {v}"
        )));
    }
    Ok(v as u32)
}

#[derive(Serialize)]
struct ScanRow {
    value: f64,
    scalar_bound: f64,
    uncertainty_relation: f64,
    crb_per_shot: Option<f64>,
    compatible: bool,
}

fn scan(a: &ScanArgs, threads: Option<usize>) -> Result<()> {
    let source = a.model.source();
    let ModelSource::Preset { name, .. } = &source else {
        return Err(Error::Precondition(
            "scan needs a preset model (--preset)".into(),
        ));
    };
    let allowed: &[ScanParam] = match name {
        Preset::Qubit => &[ScanParam::Gamma],
        Preset::GlobalImaging => &[ScanParam::Alpha, ScanParam::D],
        Preset::LocalImaging => &[ScanParam::BigN, ScanParam::D],
        Preset::TwoPhase => &[],
    };
    if !allowed.contains(&a.param) {
        return Err(Error::Precondition(format!(
            "preset {} cannot be scanned over {:?}; allowed: {:?}",
            name.name(),
            a.param,
            allowed
        )));
    }
    let (from, to, step) = default_range(a.param, f64::from(a.model.nbar));
    let values = sweep(
        a.from.unwrap_or(from),
        a.to.unwrap_or(to),
        a.step.unwrap_or(step),
    )?;
    let mut cfg = base_config("scan", source.clone(), Some(&a.model), &a.output, threads);
    cfg.scan = Some(ScanSettings {
        param: a.param,
        values: values.clone(),
    });
    let mut table = Vec::with_capacity(values.len());
    for &v in &values {
        let mut src = source.clone();
        if let ModelSource::Preset {
            gamma,
            d,
            alpha,
            big_n,
            ..
        } = &mut src
        {
            match a.param {
                ScanParam::Gamma => *gamma = Some(v),
                ScanParam::Alpha => *alpha = Some(v),
                ScanParam::BigN => *big_n = Some(integer_value(v, "N")?),
                ScanParam::D => *d = Some(integer_value(v, "d")? as usize),
            }
        }
        let model = build_model(&src, a.model.allow_wide_prior)?;
        let an = analyze(&model, &options(&a.model))?;
        table.push(ScanRow {
            value: v,
            scalar_bound: an.bound.value,
            uncertainty_relation: an.bound.uncertainty_relation,
            crb_per_shot: an.crb_per_shot,
            compatible: an.compatibility.compatible,
        });
    }
    let best = table
        .iter()
        .min_by(|x, y| x.scalar_bound.total_cmp(&y.scalar_bound))
        .expect("non-empty sweep");
    let body = json!({
        "param": a.param,
        "argmin": { "value": best.value, "scalar_bound": best.scalar_bound },
        "rows": table,
    });
    let pname = serde_json::to_value(a.param).expect("param serializes");
    let pname = pname.as_str().unwrap_or("value").to_string();
    emit(&cfg, body, || {
        let mut s = format!("{pname},scalar_bound,crb_per_shot,compatible\n");
        for r in &table {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.value,
                r.scalar_bound,
                opt(r.crb_per_shot),
                r.compatible
            );
        }
        s
    })
}

fn povm_check(
    m: &ModelArgs,
    povm_args: &PovmArgs,
    out: &OutputArgs,
    threads: Option<usize>,
) -> Result<()> {
    let mut cfg = base_config("povm-check", m.source(), Some(m), out, threads);
    cfg.povm = Some(povm_source(povm_args));
    let model = build_model(&cfg.model, m.allow_wide_prior)?;
    let a = analyze(&model, &options(m))?;
    let (povm, record) = resolve_povm(povm_args, &a)?;
    let validation = validate_povm(povm.elements(), model.dim());
    let sigma_c = classical_matrix_error(&a.moments, &a.averaged, &povm)?;
    let score = a.classical_score(&povm)?;

    // score under the other completion convention when one was needed
    let alternative = match &record {
        Some(r) if r.applied => {
            let other = match r.convention {
                Completion::Residual => Completion::Renormalize,
                Completion::Renormalize => Completion::Residual,
            };
            let mut other_args = povm_args.clone();
            other_args.completion = match other {
                Completion::Residual => crate::args::CompletionArg::Residual,
                Completion::Renormalize => crate::args::CompletionArg::Renormalize,
            };
            let (p, _) = resolve_povm(&other_args, &a)?;
            Some(json!({ "convention": other, "score": a.classical_score(&p)? }))
        }
        _ => None,
    };
    let body = json!({
        "model": model_summary(&model),
        "povm": {
            "labels": povm.labels(),
            "validation": validation,
            "completion": record,
            "elements": povm.elements().iter().map(|e| grid(e.matrix())).collect::<Vec<_>>(),
        },
        "score": score,
        "scalar_bound": a.bound.value,
        "gap": score - a.bound.value,
        "sigma_c": rows(&sigma_c),
        "alternative_completion": alternative,
    });
    emit(&cfg, body, || {
        let mut s = String::from("quantity,value\n");
        let _ = writeln!(s, "score,{score}");
        let _ = writeln!(s, "scalar_bound,{}", a.bound.value);
        let _ = writeln!(s, "gap,{}", score - a.bound.value);
        let _ = writeln!(s, "outcomes,{}", povm.len());
        let _ = writeln!(s, "valid,{}", validation.valid);
        if let Some(alt) = &alternative {
            let _ = writeln!(s, "alternative_score,{}", alt["score"]);
        }
        matrix_rows(&mut s, "sigma_c", &sigma_c);
        s
    })
}

fn grid(m: &bayesmet::operators::CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

#[derive(Serialize)]
struct PresetInfo {
    name: &'static str,
    parameters: &'static str,
    description: &'static str,
}

const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "qubit",
        parameters: "--gamma",
        description: "two-qubit sensing network; probe [|00>+γ(|01>+|10>)+|11>]/√(2(1+γ²)), \
                      phases encoded by σz⊗I/2 and I⊗σz/2, flat prior on [−π/4, π/4]², equal weights",
    },
    PresetInfo {
        name: "global-imaging",
        parameters: "--d --nbar --alpha [--allow-wide-prior]",
        description: "d-phase imaging with the entangled probe (α|n̄,0,…> + Σₖ|…,n̄ₖ,…>)/√(d+α²), \
                      generators n̄|n̄ₖ><n̄ₖ|, flat prior of width 2π/n̄ per phase, weights 1/d",
    },
    PresetInfo {
        name: "local-imaging",
        parameters: "--d --nbar --big-n [--allow-wide-prior]",
        description: "d-phase imaging with the product probe ⊗ₖ[√(1−q)|0> + √q|N>], q = n̄/(N(d+1)), \
                      reference mode omitted, flat prior of width 2π/n̄ per phase, weights 1/d",
    },
    PresetInfo {
        name: "two-phase",
        parameters: "(none)",
        description: "balanced two-phase global imaging with n̄ = 2, α = 1 and the qubit prior \
                      [−π/4, π/4]²; pairs with --povm two-phase for the three trial projectors",
    },
];

fn presets(out: &OutputArgs, threads: Option<usize>) -> Result<()> {
    let cfg = base_config("presets", ModelSource::None, None, out, threads);
    emit(&cfg, json!({ "presets": PRESETS }), || {
        let mut s = String::from("name,parameters,description\n");
        for p in PRESETS {
            let _ = writeln!(s, "{},\"{}\",\"{}\"", p.name, p.parameters, p.description);
        }
        s
    })
}
