//! Runs the two stages over source files with a bounded worker pool.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ceiscan_frontend::{collect_sources, compile_sources, ContractModel, FunctionId, Span, StmtId};
use ceiscan_pdg::{dot, run_stage_one, Confidence, Icfg, Warning};
use ceiscan_symexec::{ppt_filter, verify_warning, Deployment, PptDecision, StageTwoConfig, Status, Verdict, Z3};
use thiserror::Error;
use walkdir::WalkDir;

use crate::config::AnalysisConfig;
use crate::report::{Finding, FindingStatus, FindingTimings, Location, Report, UnitReport, UnitTimings};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("{0}: no such file or directory")]
    Missing(PathBuf),
    #[error("cannot write {0}: {1}")]
    Write(PathBuf, std::io::Error),
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub emit_dot: Option<PathBuf>,
}

/// `.sol` files named directly or found under directories, in a stable
/// order and without duplicates.
pub fn source_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, AnalyzeError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for p in paths {
        if p.is_file() {
            if seen.insert(p.clone()) {
                out.push(p.clone());
            }
        } else if p.is_dir() {
            let mut found: Vec<PathBuf> = WalkDir::new(p)
                .into_iter()
                .filter_map(Result::ok)
                .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "sol"))
                .map(|e| e.into_path())
                .collect();
            found.sort();
            out.extend(found.into_iter().filter(|f| seen.insert(f.clone())));
        } else {
            return Err(AnalyzeError::Missing(p.clone()));
        }
    }
    Ok(out)
}

pub fn analyze(paths: &[PathBuf], config: &AnalysisConfig, options: &Options) -> Result<Report, AnalyzeError> {
    let started = Instant::now();
    let files = source_files(paths)?;
    if let Some(dir) = &options.emit_dot {
        std::fs::create_dir_all(dir).map_err(|e| AnalyzeError::Write(dir.clone(), e))?;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<UnitReport>>> = Mutex::new(vec![None; files.len()]);
    let workers = config.jobs.clamp(1, files.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(file) = files.get(i) else { break };
                let unit = analyze_file(file, config, options);
                results.lock().expect("results lock")[i] = Some(unit);
            });
        }
    });
    let mut report = Report::new(config.fingerprint(), config.stages);
    report.units = results.into_inner().expect("results lock").into_iter().map(|u| u.expect("analyzed")).collect();
    report.total_ms = millis(started.elapsed());
    Ok(report)
}

fn millis(d: Duration) -> u64 {
    d.as_millis() as u64
}

pub fn analyze_file(path: &Path, config: &AnalysisConfig, options: &Options) -> UnitReport {
    let started = Instant::now();
    let deadline = started + Duration::from_secs(config.time_budget);
    let mut unit = UnitReport {
        path: path.display().to_string(),
        compiler: None,
        contracts: Vec::new(),
        findings: Vec::new(),
        error: None,
        timings: UnitTimings::default(),
    };
    let compiled = collect_sources(&[path.to_path_buf()])
        .and_then(|sources| compile_sources(&sources, &config.compiler(config.stages.runs_stage_two())));
    unit.timings.compile_ms = millis(started.elapsed());
    let model = match compiled {
        Ok(m) => m,
        Err(e) => {
            unit.error = Some(e.to_string());
            unit.timings.total_ms = millis(started.elapsed());
            return unit;
        }
    };
    unit.compiler = Some(model.compiler.clone());
    let unit_name = path_key(path);
    let own_file = model.files.iter().find(|f| f.path == unit_name).map(|f| f.index);
    unit.contracts = model
        .contracts
        .iter()
        .filter(|c| own_file.is_none_or(|i| c.file == i))
        .map(|c| c.name.clone())
        .collect();

    let t1 = Instant::now();
    let stage_one = run_stage_one(&model, &config.slicer);
    let warnings = if config.stages.runs_stage_one() {
        stage_one.warnings.clone()
    } else {
        candidate_warnings(&model, &stage_one.icfg, &stage_one.criteria)
    };
    unit.timings.stage1_ms = millis(t1.elapsed());

    if let Some(dir) = &options.emit_dot {
        if let Err(e) = emit_dot(dir, path, &model, &stage_one) {
            unit.error = Some(e.to_string());
        }
    }

    let mut findings: Vec<Finding> = warnings.iter().map(|w| finding(&model, w)).collect();
    if config.stages.runs_stage_two() && !warnings.is_empty() {
        let t2 = Instant::now();
        if let Err(e) = stage_two(&model, &stage_one.icfg, &warnings, &mut findings, &config.symexec, deadline) {
            unit.error = Some(e);
        }
        unit.timings.stage2_ms = millis(t2.elapsed());
    }
    unit.findings = findings;
    unit.timings.total_ms = millis(started.elapsed());
    unit
}

/// The unit name the compiler uses for a path given on the command line.
fn path_key(path: &Path) -> String {
    let parts: Vec<String> = path
        .components()
        .filter(|c| !matches!(c, std::path::Component::CurDir))
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    parts.join("/")
}

/// Stage-II-only mode: every matching call, reachable from any entry
/// point, without the ordering check.
fn candidate_warnings(model: &ContractModel, icfg: &Icfg, criteria: &[ceiscan_pdg::SliceCriterion]) -> Vec<Warning> {
    criteria
        .iter()
        .filter_map(|c| {
            let stmt = model.stmt(c.entry_node);
            let call = stmt.call.as_ref()?;
            let entry_points: Vec<FunctionId> = icfg
                .entry_points
                .iter()
                .copied()
                .filter(|e| model.reachable_functions(*e).contains(&stmt.function))
                .collect();
            if entry_points.is_empty() {
                return None;
            }
            Some(Warning {
                function: stmt.function,
                entry_points,
                span: stmt.span,
                rule: c.rule,
                checks: Vec::new(),
                interaction: c.entry_node,
                effect: None,
                guard_state: BTreeSet::new(),
                violated: BTreeSet::new(),
                confidence: if call.unlimited_gas { Confidence::High } else { Confidence::GasLimited },
                path_cap_hit: false,
            })
        })
        .collect()
}

fn stage_two(
    model: &ContractModel,
    icfg: &Icfg,
    warnings: &[Warning],
    findings: &mut [Finding],
    config: &StageTwoConfig,
    deadline: Instant,
) -> Result<(), String> {
    let deployment = Deployment::new(model).map_err(|e| e.to_string())?;
    let mut z3: Option<Z3> = None;
    for (w, f) in warnings.iter().zip(findings.iter_mut()) {
        let started = Instant::now();
        if let PptDecision::Drop(reason) = ppt_filter(model, icfg, w) {
            f.status = FindingStatus::Dropped;
            f.ppt = Some(reason.as_str().to_string());
        } else {
            let remaining = deadline.saturating_duration_since(started);
            let verdict = if remaining.is_zero() {
                Verdict::without_paths(Status::UnknownTimeout)
            } else {
                let solver = match z3.as_mut() {
                    Some(s) => s,
                    None => z3.insert(Z3::start(&config.solver).map_err(|e| e.to_string())?),
                };
                let mut bounded = config.clone();
                bounded.budget.time_budget_ms = bounded.budget.time_budget_ms.min(millis(remaining).max(1));
                verify_warning(model, &deployment, w, &bounded, solver)
            };
            apply_verdict(f, &verdict);
        }
        f.reported = f.status.reported();
        f.tags = tags(f);
        f.timings.stage2_ms = millis(started.elapsed());
    }
    Ok(())
}

fn apply_verdict(f: &mut Finding, v: &Verdict) {
    f.status = match v.status {
        Status::Confirmed => FindingStatus::Confirmed,
        Status::Unreachable => FindingStatus::Unreachable,
        Status::UnknownTimeout => FindingStatus::UnknownTimeout,
        Status::UnknownBudget => FindingStatus::UnknownBudget,
    };
    f.stage2 = Some(serde_json::to_value(v).expect("verdict serializes"));
}

fn tags(f: &Finding) -> Vec<String> {
    let mut out = Vec::new();
    match f.confidence {
        Confidence::High => {}
        Confidence::GasLimited => out.push("gas-limited".to_string()),
        Confidence::Unchecked => out.push("unchecked".to_string()),
    }
    if f.status.is_unknown() {
        out.push(f.status.as_str().to_string());
    }
    if f.path_cap_hit {
        out.push("path-cap".to_string());
    }
    out
}

fn location(model: &ContractModel, span: &Span) -> Location {
    let file = model.file(span.file);
    Location {
        file: file.map(|f| f.path.clone()).unwrap_or_default(),
        line: span.line,
        end_line: span.end_line,
        column: file.map_or(0, |f| f.column_of(span.start)),
        start: span.start,
        length: span.length,
    }
}

fn line_of(model: &ContractModel, s: StmtId) -> u32 {
    model.stmt(s).span.line
}

fn finding(model: &ContractModel, w: &Warning) -> Finding {
    let func = model.function(w.function);
    let mut f = Finding {
        contract: model.contract(func.contract).name.clone(),
        function: model.qualified_name(w.function),
        entry_points: w.entry_points.iter().map(|e| model.qualified_name(*e)).collect(),
        location: location(model, &w.span),
        rule: w.rule,
        confidence: w.confidence,
        check_lines: w.checks.iter().map(|c| line_of(model, *c)).collect::<BTreeSet<_>>().into_iter().collect(),
        effect_line: w.effect.map(|e| line_of(model, e)),
        violated: w.violated.iter().map(|v| model.state_var(*v).name.clone()).collect(),
        path_cap_hit: w.path_cap_hit,
        status: FindingStatus::Warning,
        reported: true,
        tags: Vec::new(),
        ppt: None,
        stage2: None,
        timings: FindingTimings::default(),
    };
    f.tags = tags(&f);
    f
}

fn emit_dot(dir: &Path, path: &Path, model: &ContractModel, stage_one: &ceiscan_pdg::StageOne) -> Result<(), AnalyzeError> {
    let stem = path.file_stem().map_or_else(|| "unit".to_string(), |s| s.to_string_lossy().into_owned());
    let mut files: BTreeMap<PathBuf, String> = BTreeMap::new();
    files.insert(dir.join(format!("{stem}.icfg.dot")), dot::icfg_dot(model, &stage_one.icfg));
    files.insert(dir.join(format!("{stem}.ipdg.dot")), dot::ipdg_dot(model, &stage_one.ipdg));
    for (name, bc) in &model.bytecode {
        let Ok(code) = ceiscan_evm::decode_hex(&bc.deployed) else { continue };
        if code.is_empty() {
            continue;
        }
        let cfg = ceiscan_evm::build_cfg(&code);
        files.insert(dir.join(format!("{stem}.{name}.cfg.dot")), cfg.to_dot(name));
    }
    for (p, text) in files {
        std::fs::write(&p, text).map_err(|e| AnalyzeError::Write(p.clone(), e))?;
    }
    Ok(())
}
