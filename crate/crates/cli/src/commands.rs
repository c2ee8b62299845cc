use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ntpqpt::channels::BasisLabel;
use ntpqpt::linalg::CMatrix;
use ntpqpt::mle::fidelity_ready;
use ntpqpt::schema::{admit_chi, MatrixJson};
use ntpqpt::simulator::{simulate_counts_stream, DEFAULT_EXPOSURE};
use ntpqpt::states::parse_labels;
use ntpqpt::{
    change_basis, pauli_basis, ppbs_chi, probability_operator, process_fidelity_ntp, ChiMatrix,
    CountTable, FitOptions, FitReport, Method, Noise, OperatorBasis, PpbsParams, ProbabilityClass, Protocol,
    ReportJson, RunManifest, SimConfig, UnphysicalPolicy, ZeroCountPolicy,
};
use serde::Serialize;

use crate::config::{parse_with, resolve_seed, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::{AnalyzeArgs, OptimizerArgs, ReconstructArgs, SimulateArgs, SweepArgs};

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(CliError::io(path))
}

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

fn write_manifest(
    command: &str,
    config: &impl Serialize,
    seed: u64,
    inputs: &[&Path],
    outputs: &[&Path],
) -> CliResult<()> {
    let manifest = RunManifest {
        schema: 1,
        command: command.to_string(),
        config: serde_json::to_value(config).map_err(ntpqpt::Error::from)?,
        seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    write_file(&manifest_path(outputs[0]), &manifest.to_json()?)
}

fn parse_flag<T: std::str::FromStr<Err = ntpqpt::Error>>(value: Option<String>) -> CliResult<Option<T>> {
    Ok(value.map(|v| v.parse::<T>()).transpose()?)
}

pub fn simulate(args: SimulateArgs, file: &ConfigFile) -> CliResult<()> {
    let cfg = &file.simulate;
    let seed = resolve_seed(args.seed, cfg.seed, file)?;
    let gamma = args.gamma.or(cfg.gamma);
    let (t_h, t_v) = (args.t_h.or(cfg.t_h), args.t_v.or(cfg.t_v));
    let params = match (gamma, t_h, t_v) {
        (Some(g), None, None) => PpbsParams::from_gamma(g)?,
        (None, Some(h), Some(v)) => PpbsParams::new(h, v)?,
        (None, None, None) => return Err(CliError::Usage("give --gamma or both --t-h and --t-v".into())),
        (Some(_), _, _) => return Err(CliError::Usage("--gamma conflicts with --t-h/--t-v".into())),
        _ => return Err(CliError::Usage("--t-h and --t-v must be given together".into())),
    };
    let noise = match parse_flag::<Noise>(args.noise)? {
        Some(n) => n,
        None => parse_with::<Noise>(cfg.noise.clone(), "noise")?.unwrap_or(Noise::Poisson),
    };
    let sim = SimConfig {
        params,
        exposure: args.exposure.or(cfg.exposure).unwrap_or(DEFAULT_EXPOSURE),
        seed,
        noise,
        dark_counts: args.dark_counts.or(cfg.dark_counts).unwrap_or(0.0),
        efficiency: args.efficiency.or(cfg.efficiency).unwrap_or(1.0),
    };
    sim.validate()?;
    let mut table = ntpqpt::simulate_counts(&sim)?;
    table.manifest = Some(manifest_path(&args.out).display().to_string());
    write_file(&args.out, &table.to_json()?)?;
    write_manifest("simulate", &sim, seed, &[], &[&args.out])?;
    println!("wrote {} ({} inputs x {} analyzers)", args.out.display(), table.inputs.len(), table.projectors.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct FitSettings {
    restarts: usize,
    max_evals: usize,
    tol: f64,
    zero_counts: ZeroCountPolicy,
    penalty_start: f64,
    residual_target: f64,
}

struct OptimizerSources<'a> {
    restarts: Option<usize>,
    max_evals: Option<usize>,
    tol: Option<f64>,
    zero_counts: Option<&'a String>,
    penalty_start: Option<f64>,
    residual_target: Option<f64>,
}

/// Merge optimizer flags over config values; `tp_allowed` is false when no
/// requested method uses the penalty settings.
fn fit_settings(args: OptimizerArgs, cfg: OptimizerSources<'_>, tp_allowed: bool) -> CliResult<FitSettings> {
    let defaults = FitOptions::default();
    let penalty_start = args.penalty_start.or(cfg.penalty_start);
    let residual_target = args.residual_target.or(cfg.residual_target);
    if !tp_allowed && (penalty_start.is_some() || residual_target.is_some()) {
        return Err(CliError::Usage(
            "--penalty-start/--residual-target only apply to method mle-tp".into(),
        ));
    }
    let zero_counts = match args.zero_counts.as_deref().or(cfg.zero_counts.map(String::as_str)) {
        None | Some("floor") => ZeroCountPolicy::Floor,
        Some("drop") => ZeroCountPolicy::Drop,
        Some(other) => return Err(CliError::Usage(format!("unknown zero-count policy {other:?}"))),
    };
    let s = FitSettings {
        restarts: args.restarts.or(cfg.restarts).unwrap_or(defaults.restarts),
        max_evals: args.max_evals.or(cfg.max_evals).unwrap_or(defaults.optimizer.max_evals),
        tol: args.tol.or(cfg.tol).unwrap_or(defaults.optimizer.diameter_tol),
        zero_counts,
        penalty_start: penalty_start.unwrap_or(defaults.penalty_start),
        residual_target: residual_target.unwrap_or(defaults.residual_target),
    };
    if s.restarts == 0 || s.max_evals == 0 || !(s.tol > 0.0) || !(s.penalty_start > 0.0) || !(s.residual_target > 0.0) {
        return Err(CliError::Usage("optimizer settings must be positive".into()));
    }
    Ok(s)
}

impl FitSettings {
    fn options(&self, seed: u64) -> FitOptions {
        let defaults = FitOptions::default();
        FitOptions {
            restarts: self.restarts,
            optimizer: ntpqpt::optim::NelderMead {
                diameter_tol: self.tol,
                max_evals: self.max_evals,
                ..defaults.optimizer
            },
            seed,
            zero_counts: self.zero_counts,
            penalty_start: self.penalty_start,
            residual_target: self.residual_target,
            ..defaults
        }
    }
}

fn protocol_of(table: &CountTable) -> CliResult<Protocol> {
    let labels = |l: &[String]| parse_labels(l).map_err(|e| CliError::Data(format!("count table: {e}")));
    Ok(Protocol {
        inputs: labels(&table.inputs)?,
        analyzers: labels(&table.projectors)?,
    })
}

fn parse_basis(name: Option<&str>, dim: usize) -> CliResult<OperatorBasis> {
    let label = match name.unwrap_or("pauli") {
        "pauli" => BasisLabel::Pauli,
        "elementary-scaled" | "elementary" => BasisLabel::ElementaryScaled,
        other => return Err(CliError::Usage(format!("unknown basis {other:?}"))),
    };
    Ok(OperatorBasis::from_label(&label, dim)?)
}

fn load_chi(path: &Path, policy: UnphysicalPolicy) -> CliResult<ChiMatrix> {
    let doc = MatrixJson::from_json(&read_file(path)?)?;
    let (chi, _) = admit_chi(doc.to_chi()?, policy)?;
    Ok(chi)
}

fn policy_of(flag: Option<String>, cfg: Option<&String>) -> CliResult<UnphysicalPolicy> {
    match flag.or(cfg.cloned()) {
        None => Ok(UnphysicalPolicy::Warn),
        Some(s) => Ok(s.parse()?),
    }
}

#[derive(Debug, Serialize)]
struct ReconstructSettings {
    counts: String,
    method: Method,
    basis: String,
    reference: Option<String>,
    unphysical: UnphysicalPolicy,
    fit: FitSettings,
}

pub fn reconstruct(args: ReconstructArgs, file: &ConfigFile) -> CliResult<()> {
    let cfg = &file.reconstruct;
    let seed = resolve_seed(args.seed, cfg.seed, file)?;
    let method: Method = match parse_flag(args.method)? {
        Some(m) => m,
        None => parse_with(cfg.method.clone(), "method")?
            .ok_or_else(|| CliError::Usage("--method is required".into()))?,
    };
    let fit = fit_settings(
        args.optimizer,
        OptimizerSources {
            restarts: cfg.restarts,
            max_evals: cfg.max_evals,
            tol: cfg.tol,
            zero_counts: cfg.zero_counts.as_ref(),
            penalty_start: cfg.penalty_start,
            residual_target: cfg.residual_target,
        },
        method == Method::MleTp,
    )?;
    let policy = policy_of(args.unphysical, cfg.unphysical.as_ref())?;

    let table = CountTable::from_json(&read_file(&args.counts)?)?;
    let protocol = protocol_of(&table)?;
    let basis = parse_basis(args.basis.as_deref().or(cfg.basis.as_deref()), table.dim)?;
    let reference = args.reference.as_deref().map(|p| load_chi(p, policy)).transpose()?;

    let report = ntpqpt::reconstruct(method, &table, &protocol, &basis, &fit.options(seed))?;
    let mut doc = ReportJson::new(&report)?;
    if let Some(r) = &reference {
        doc.fidelity = Some(fidelity_against(&report, r)?);
        doc.reference = args.reference.as_ref().map(|p| p.display().to_string());
    }
    doc.manifest = Some(manifest_path(&args.out).display().to_string());
    write_file(&args.out, &doc.to_json()?)?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(path) = &args.chi_out {
        let mut chi = MatrixJson::from_chi(&report.chi);
        chi.manifest = doc.manifest.clone();
        write_file(path, &chi.to_json()?)?;
        outputs.push(path);
    }
    let settings = ReconstructSettings {
        counts: args.counts.display().to_string(),
        method,
        basis: basis.label().to_string(),
        reference: doc.reference.clone(),
        unphysical: policy,
        fit,
    };
    let mut inputs = vec![args.counts.as_path()];
    inputs.extend(args.reference.as_deref());
    write_manifest("reconstruct", &settings, seed, &inputs, &outputs)?;

    print!("{}", summarize(&doc));
    Ok(())
}

fn fidelity_against(report: &FitReport, reference: &ChiMatrix) -> CliResult<f64> {
    let reference = if reference.basis().same_as(report.chi.basis()) {
        reference.clone()
    } else {
        change_basis(reference, report.chi.basis())?
    };
    Ok(process_fidelity_ntp(&fidelity_ready(&report.chi)?, &reference)?)
}

fn summarize(doc: &ReportJson) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "method: {}", doc.method);
    let eig: Vec<String> = doc.p_eigenvalues.iter().map(|e| format!("{e:.6}")).collect();
    let _ = writeln!(s, "P eigenvalues: {} ({})", eig.join(", "), doc.p_class);
    let _ = writeln!(s, "objective: {:.6e}", doc.objective);
    let _ = writeln!(s, "min chi eigenvalue: {:.3e}", doc.min_chi_eigenvalue);
    if let Some(r) = doc.constraint_residual {
        let _ = writeln!(s, "constraint residual: {r:.3e}");
    }
    if let Some(f) = doc.fidelity {
        let _ = writeln!(s, "process fidelity: {f:.6}");
    }
    s
}

/// "0.1,0.5" or inclusive "start:stop:step".
fn parse_gammas(list: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("cannot parse gamma list {list:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = if list.contains(':') {
        let parts: Vec<&str> = list.split(':').collect();
        let [a, b, step] = parts[..] else { return Err(bad()) };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        list.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<CliResult<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("empty method set".into()));
    }
    Ok(methods)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    gamma: f64,
    method: Method,
    fidelity: f64,
    p_eig_1: f64,
    p_eig_2: f64,
    objective: f64,
    min_chi_eigenvalue: f64,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SweepSettings {
    gammas: Vec<f64>,
    methods: Vec<Method>,
    repeats: usize,
    exposure: f64,
    noise: Noise,
    fit: FitSettings,
}

pub fn sweep(args: SweepArgs, file: &ConfigFile) -> CliResult<()> {
    let cfg = &file.sweep;
    let seed = resolve_seed(args.seed, cfg.seed, file)?;
    let gammas = parse_gammas(
        args.gammas
            .as_deref()
            .or(cfg.gammas.as_deref())
            .ok_or_else(|| CliError::Usage("--gammas is required".into()))?,
    )?;
    let methods = parse_methods(args.methods.as_deref().or(cfg.methods.as_deref()).unwrap_or("mle"))?;
    let repeats = args.repeats.or(cfg.repeats).unwrap_or(1);
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let noise = match parse_flag::<Noise>(args.noise)? {
        Some(n) => n,
        None => parse_with::<Noise>(cfg.noise.clone(), "noise")?.unwrap_or(Noise::Poisson),
    };
    let fit = fit_settings(
        args.optimizer,
        OptimizerSources {
            restarts: cfg.restarts,
            max_evals: cfg.max_evals,
            tol: cfg.tol,
            zero_counts: cfg.zero_counts.as_ref(),
            penalty_start: cfg.penalty_start,
            residual_target: cfg.residual_target,
        },
        methods.contains(&Method::MleTp),
    )?;
    let exposure = args.exposure.or(cfg.exposure).unwrap_or(DEFAULT_EXPOSURE);
    let params = gammas.iter().map(|&g| PpbsParams::from_gamma(g)).collect::<ntpqpt::Result<Vec<_>>>()?;
    SimConfig::new(params[0], exposure, seed, noise)?;
    let jobs = args
        .jobs
        .or(cfg.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);

    let basis = pauli_basis();
    let protocol = Protocol::six_state();
    let tasks: Vec<(usize, usize)> = (0..gammas.len()).flat_map(|g| (0..repeats).map(move |r| (g, r))).collect();
    let run_task = |(gi, rep): (usize, usize)| -> CliResult<Vec<SweepRow>> {
        let data_seed = seed.wrapping_add(rep as u64);
        let sim = SimConfig::new(params[gi], exposure, data_seed, noise)?;
        let table = simulate_counts_stream(&sim, gi as u64)?;
        let truth = ppbs_chi(&params[gi], &basis)?;
        methods
            .iter()
            .map(|&m| {
                let report = ntpqpt::reconstruct(m, &table, &protocol, &basis, &fit.options(data_seed))?;
                let p = probability_operator(&report.chi)?;
                let ev = p.eigenvalues();
                Ok(SweepRow {
                    gamma: gammas[gi],
                    method: m,
                    fidelity: process_fidelity_ntp(&fidelity_ready(&report.chi)?, &truth)?,
                    p_eig_1: ev[ev.len() - 1],
                    p_eig_2: ev[0],
                    objective: report.objective,
                    min_chi_eigenvalue: report.min_chi_eigenvalue,
                    seed: data_seed,
                })
            })
            .collect()
    };

    let results: Vec<Mutex<Option<CliResult<Vec<SweepRow>>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let out = run_task(tasks[i]);
                *results[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    let mut grid: Vec<Vec<SweepRow>> = Vec::with_capacity(tasks.len());
    for slot in results {
        grid.push(slot.into_inner().expect("result slot").expect("task ran")?);
    }

    let mut writer = csv::Writer::from_path(&args.out).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: args.out.clone(),
            source,
        },
        kind => CliError::Data(format!("{kind:?}")),
    })?;
    let mut rows = 0;
    for gi in 0..gammas.len() {
        for mi in 0..methods.len() {
            for rep in 0..repeats {
                writer.serialize(&grid[gi * repeats + rep][mi])?;
                rows += 1;
            }
        }
    }
    writer.flush().map_err(CliError::io(&args.out))?;
    let settings = SweepSettings {
        gammas,
        methods,
        repeats,
        exposure,
        noise,
        fit,
    };
    write_manifest("sweep", &settings, seed, &[], &[&args.out])?;
    println!("wrote {} ({rows} rows)", args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalysisJson {
    schema: u32,
    chi: String,
    probability_operator: MatrixJson,
    /// Largest first.
    eigenvalues: Vec<f64>,
    eigenprojectors: Vec<Vec<Vec<[f64; 2]>>>,
    class: ProbabilityClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    success_probability: Option<f64>,
    trace_chi: f64,
    trace_p_over_d: f64,
    consistent: bool,
    manifest: String,
}

fn format_matrix(m: &CMatrix, indent: &str) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let cells: Vec<String> = m.row(r).iter().map(|z| format!("{:+.6}{:+.6}i", z.re, z.im)).collect();
        let _ = writeln!(s, "{indent}[ {} ]", cells.join("  "));
    }
    s
}

pub fn analyze_p(args: AnalyzeArgs, file: &ConfigFile) -> CliResult<()> {
    let policy = policy_of(args.unphysical, file.analyze_p.unphysical.as_ref())?;
    let chi = load_chi(&args.chi, policy)?;
    let p = probability_operator(&chi)?;
    let d = chi.dim() as f64;
    let trace_chi = chi.trace();
    let trace_p_over_d = p.mat().trace().re / d;
    let consistent = (trace_chi - trace_p_over_d).abs() <= 1e-9 * trace_chi.abs().max(1.0);
    let class = p.classify();

    let mut s = String::new();
    let _ = writeln!(s, "P =");
    s += &format_matrix(p.mat(), "  ");
    let n = p.eigenvalues().len();
    let order: Vec<usize> = (0..n).rev().collect();
    let eig: Vec<String> = order.iter().map(|&k| format!("{:.6}", p.eigenvalues()[k])).collect();
    let _ = writeln!(s, "eigenvalues: {}", eig.join(", "));
    for (rank, &k) in order.iter().enumerate() {
        let _ = writeln!(s, "eigenstate {} (p = {:.6}):", rank + 1, p.eigenvalues()[k]);
        s += &format_matrix(&p.spectrum().projector(k), "  ");
    }
    let _ = writeln!(s, "class: {class}");
    let success = (class != ProbabilityClass::StateDependent).then(|| p.max_eigenvalue());
    if let Some(q) = success {
        let _ = writeln!(s, "success probability: {q:.6}");
    }
    let _ = writeln!(
        s,
        "Tr chi = {trace_chi:.9}, Tr P / d = {trace_p_over_d:.9}: {}",
        if consistent { "consistent" } else { "INCONSISTENT" }
    );
    print!("{s}");

    if let Some(out) = &args.out {
        let doc = AnalysisJson {
            schema: 1,
            chi: args.chi.display().to_string(),
            probability_operator: MatrixJson::from_probability_operator(&p),
            eigenvalues: order.iter().map(|&k| p.eigenvalues()[k]).collect(),
            eigenprojectors: order
                .iter()
                .map(|&k| {
                    let m = p.spectrum().projector(k);
                    (0..m.rows()).map(|r| m.row(r).iter().map(|z| [z.re, z.im]).collect()).collect()
                })
                .collect(),
            class,
            success_probability: success,
            trace_chi,
            trace_p_over_d,
            consistent,
            manifest: manifest_path(out).display().to_string(),
        };
        write_file(out, &serde_json::to_string_pretty(&doc).map_err(ntpqpt::Error::from)?)?;
        write_manifest("analyze-p", &policy, 0, &[&args.chi], &[out])?;
    }
    if !consistent {
        return Err(CliError::Core(ntpqpt::Error::Representation(
            "Tr chi disagrees with Tr P / d".into(),
        )));
    }
    Ok(())
}
