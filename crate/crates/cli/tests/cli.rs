use std::path::{Path, PathBuf};
use std::process::Command;

use ceiscan::*;

fn fixture(name: &str) -> PathBuf {
    Path::new("../../fixtures").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ceiscan"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn exit_codes() {
    let (code, out, _) = run(&["analyze", "../../fixtures/fig1_withdraw.sol"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("fig1_withdraw.sol:6:9: confirmed ContractA.withdraw eth-call-value"), "{out}");
    let (code, out, _) = run(&["analyze", "../../fixtures/fig1_withdraw_fixed.sol"]);
    assert_eq!(code, 0, "{out}");
    let (code, _, err) = run(&["analyze", "../../fixtures/no_such_file.sol"]);
    assert_eq!(code, 2);
    assert!(err.contains("no such file"), "{err}");
    let (code, _, _) = run(&["analyze", "x.sol", "--stage", "3"]);
    assert_eq!(code, 2);
}

#[test]
fn empty_source_set_is_clean() {
    let dir = tempfile::tempdir().expect("tempdir");
    let (code, out, _) = run(&["analyze", dir.path().to_str().expect("utf8"), "--format", "json"]);
    assert_eq!(code, 0);
    let report: Report = serde_json::from_str(&out).expect("json report");
    assert!(report.units.is_empty());
    let report = analyze(&[], &AnalysisConfig::default(), &Options::default()).expect("analyzes");
    assert!(report.units.is_empty());
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn compile_errors_are_unit_errors() {
    let dir = tempfile::tempdir().expect("tempdir");
    let p = dir.path().join("broken.sol");
    std::fs::write(&p, "pragma solidity ^0.8.0;\ncontract C { function f( }\n").expect("write");
    let (code, out, _) = run(&["analyze", p.to_str().expect("utf8"), "--format", "json"]);
    assert_eq!(code, 2);
    let report: Report = serde_json::from_str(&out).expect("json report");
    assert!(report.units[0].error.is_some());
    assert!(report.units[0].findings.is_empty());
}

#[test]
fn stage_one_only_never_touches_the_solver() {
    let mut config = AnalysisConfig::from_toml("stages = \"stage1-only\"\n[symexec.solver]\nz3_path = \"/nonexistent/z3\"\n")
        .expect("config");
    config.jobs = 2;
    let report = analyze(&[fixture("fig1_withdraw.sol"), fixture("cream_borrow.sol")], &config, &Options::default())
        .expect("analyzes");
    assert!(report.units.iter().all(|u| u.error.is_none()));
    let findings: Vec<_> = report.findings().collect();
    assert_eq!(findings.len(), 2);
    for f in findings {
        assert_eq!(f.status, FindingStatus::Warning);
        assert!(f.stage2.is_none() && f.reported);
    }
    assert!(report.units.iter().all(|u| u.timings.stage2_ms == 0));

    // the same solver path fails as soon as the bytecode stage needs it
    config.stages = Stages::Both;
    let report = analyze(&[fixture("fig1_withdraw.sol")], &config, &Options::default()).expect("analyzes");
    assert!(report.units[0].error.as_deref().is_some_and(|e| e.contains("z3")), "{:?}", report.units[0].error);
}

#[test]
fn runs_are_deterministic_up_to_timings() {
    let paths = [fixture("cream_borrow.sol"), fixture("fig8_withdraw_all.sol"), fixture("mutex_bank.sol")];
    let a = AnalysisConfig { jobs: 3, ..Default::default() };
    let b = AnalysisConfig { jobs: 1, ..Default::default() };
    let ra = analyze(&paths, &a, &Options::default()).expect("analyzes");
    let rb = analyze(&paths, &b, &Options::default()).expect("analyzes");
    assert_eq!(ra.without_timings().to_json(), rb.without_timings().to_json());
    let statuses: Vec<_> = ra.findings().map(|f| f.status).collect();
    assert_eq!(statuses, vec![FindingStatus::Confirmed, FindingStatus::Confirmed, FindingStatus::Dropped]);
}

#[test]
fn fig1_report_matches_golden() {
    let report = analyze(&[fixture("fig1_withdraw.sol")], &AnalysisConfig::default(), &Options::default())
        .expect("analyzes")
        .without_timings();
    let json = report.to_json() + "\n";
    let golden = Path::new("tests/golden/fig1_withdraw.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden, &json).expect("write golden");
    }
    let expected = std::fs::read_to_string(golden).expect("golden file");
    assert_eq!(json, expected);
    let back: Report = serde_json::from_str(&expected).expect("golden parses");
    assert_eq!(back, report);
    let text = report.render_text();
    assert_eq!(
        text,
        "../../fixtures/fig1_withdraw.sol:6:9: confirmed ContractA.withdraw eth-call-value\n\
         1 file(s), 1 reported of 1 candidate(s), 0 error(s), 0 ms\n"
    );
}

#[test]
fn finding_fields_for_fig1() {
    let report = analyze(&[fixture("fig1_withdraw.sol")], &AnalysisConfig::default(), &Options::default()).expect("ok");
    let u = &report.units[0];
    assert_eq!(u.contracts, vec!["ContractA".to_string(), "ContractB".to_string()]);
    assert!(u.compiler.as_deref().is_some_and(|c| c.starts_with("0.8.")));
    let f = &u.findings[0];
    assert_eq!(f.function, "ContractA.withdraw");
    assert_eq!(f.entry_points, vec!["ContractA.withdraw".to_string()]);
    assert_eq!((f.location.line, f.location.end_line), (6, 6));
    assert_eq!(f.check_lines, vec![5]);
    assert_eq!(f.effect_line, Some(7));
    assert_eq!(f.confidence, ceiscan_pdg::Confidence::High);
    let s2 = f.stage2.as_ref().expect("verdict");
    assert_eq!(s2["status"], "confirmed");
    assert!(s2["witness"]["transaction"]["data"].is_string());
    assert_eq!(report.config_fingerprint, AnalysisConfig::default().fingerprint());
}

#[test]
fn stage_two_only_skips_the_ordering_check() {
    let config = AnalysisConfig { stages: Stages::Stage2Only, ..Default::default() };
    let report = analyze(&[fixture("fig1_withdraw_fixed.sol")], &config, &Options::default()).expect("ok");
    let f: Vec<_> = report.findings().collect();
    // both external calls are candidates; without the guard analysis any
    // reachable call counts
    assert_eq!(f.len(), 2);
    for f in f {
        assert!(f.check_lines.is_empty() && f.stage2.is_some());
        assert_eq!(f.status, FindingStatus::Confirmed);
    }
}

#[test]
fn emits_dot_graphs() {
    let dir = tempfile::tempdir().expect("tempdir");
    let (code, _, _) = run(&[
        "analyze",
        "../../fixtures/fig1_withdraw.sol",
        "--stage",
        "1",
        "--emit-dot",
        dir.path().to_str().expect("utf8"),
    ]);
    assert_eq!(code, 1);
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .expect("dir")
        .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.contains(&"fig1_withdraw.icfg.dot".to_string()), "{names:?}");
    assert!(names.contains(&"fig1_withdraw.ipdg.dot".to_string()), "{names:?}");
    let icfg = std::fs::read_to_string(dir.path().join("fig1_withdraw.icfg.dot")).expect("read");
    assert!(icfg.starts_with("digraph"));
}

#[test]
fn output_file_and_config_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "stages = \"stage1-only\"\ntime_budget = 120\n").expect("write");
    let out = dir.path().join("r.json");
    let (code, stdout, _) = run(&[
        "analyze",
        "../../fixtures/simple_dao_fixed.sol",
        "--config",
        cfg.to_str().expect("utf8"),
        "--format",
        "json",
        "-o",
        out.to_str().expect("utf8"),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let report: Report = serde_json::from_str(&std::fs::read_to_string(&out).expect("read")).expect("parses");
    assert_eq!(report.stages, Stages::Stage1Only);
    let mut bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "time_budget = 0\n").expect("write");
    let (code, _, err) = run(&["analyze", "../../fixtures/view_only.sol", "--config", bad.to_str().expect("utf8")]);
    assert_eq!(code, 2);
    assert!(err.contains("time_budget"), "{err}");
    bad.set_extension("missing");
    let (code, _, _) = run(&["analyze", "--config", bad.to_str().expect("utf8")]);
    assert_eq!(code, 2);
}
