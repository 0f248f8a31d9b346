use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nbrevive_core::backport::{Release, ReleaseIndex};
use nbrevive_core::exec::{CannedCellError, CannedReport, CannedSubmission, ExecStatus, MockFixture};
use nbrevive_core::llm::{MockScript, ScriptRule, ScriptedReply};
use nbrevive_core::notebook::{render_cell_delimited, Cell, Notebook};

const TRUTH: &str = "Id,label\n0,a\n1,b\n2,a\n3,c\n";

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        for d in ["competitions", "notebooks", "index"] {
            std::fs::create_dir_all(root.join(d)).unwrap();
        }
        std::fs::write(root.join("competitions/truth.csv"), TRUTH).unwrap();
        std::fs::write(
            root.join("competitions/toy.toml"),
            "id = \"toy\"\nmetric = \"accuracy\"\nground_truth = \"truth.csv\"\ntarget_score = 1.0\n\
             [schema]\nid_column = \"Id\"\ncolumns = [\"Id\", \"label\"]\n",
        )
        .unwrap();
        Workspace { _tmp: tmp, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn add_notebook(&self, id: &str, nb: &Notebook, meta: &str) {
        std::fs::write(self.path(&format!("notebooks/{id}.ipynb")), nb.to_ipynb()).unwrap();
        std::fs::write(self.path(&format!("notebooks/{id}.meta.json")), meta).unwrap();
    }

    fn write_json<T: serde::Serialize>(&self, rel: &str, value: &T) -> PathBuf {
        let p = self.path(rel);
        std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        let out = Command::new(env!("CARGO_BIN_EXE_nbrevive"))
            .args(args)
            .current_dir(&self.root)
            .env_remove("NBREVIVE_API_KEY")
            .output()
            .unwrap();
        if !out.status.success() {
            eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
        }
        out
    }

    fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }
}

const META: &str = r#"{"competition": "toy", "submitted_at": "2019-06-01T00:00:00Z"}"#;

fn buggy(tag: &str) -> Notebook {
    Notebook::from_cells([
        Cell::markdown(format!("# {tag}")),
        Cell::code(format!("import pandas as pd\n{tag} = pd.read_csv('/kaggle/input/toy/train.csv')")),
        Cell::code("pred = np.where(x > 0, 'a', 'b')"),
        Cell::code("pd.DataFrame({'Id': ids, 'label': pred}).to_csv('submission.csv', index=False)"),
    ])
}

fn fixed(tag: &str) -> Notebook {
    let mut nb = buggy(tag);
    nb.cells[2].source = "import numpy as np\npred = np.where(x > 0, 'a', 'b')".into();
    nb
}

fn submission(correct: bool) -> CannedSubmission {
    CannedSubmission {
        path: "submission.csv".into(),
        content: if correct { TRUTH.into() } else { "Id,label\n0,b\n1,b\n2,b\n3,b\n".into() },
    }
}

fn completed(correct: bool) -> CannedReport {
    CannedReport {
        status: ExecStatus::Completed,
        runtime: 4.0,
        errors: vec![],
        submission: Some(submission(correct)),
        env: "python 3.11".into(),
    }
}

fn name_error() -> CannedReport {
    CannedReport {
        status: ExecStatus::Completed,
        runtime: 1.0,
        errors: vec![CannedCellError {
            index: 2,
            traceback: "Traceback (most recent call last):\nNameError: name 'np' is not defined".into(),
        }],
        submission: None,
        env: "python 3.11".into(),
    }
}

/// Three seeded NameError notebooks, their fixes, and a script that
/// answers each notebook's prompt with its fix.
fn seeded_corpus(ws: &Workspace) -> (PathBuf, PathBuf) {
    let mut fixture = MockFixture::default();
    let mut script = MockScript::default();
    for tag in ["alpha", "beta", "gamma"] {
        let nb = buggy(tag);
        ws.add_notebook(tag, &nb, META);
        fixture.reports.insert(nb.content_hash(), name_error());
        fixture.reports.insert(fixed(tag).content_hash(), completed(true));
        script.rules.push(ScriptRule {
            contains: format!("{tag} = pd.read_csv"),
            replies: vec![ScriptedReply::text(format!(
                "1. import numpy\n\n```\n{}```\n",
                render_cell_delimited(&fixed(tag), false)
            ))],
        });
    }
    (ws.write_json("fixture.json", &fixture), ws.write_json("script.json", &script))
}

fn csv_lines(text: &str) -> usize {
    text.lines().count()
}

fn common(run: &str) -> Vec<&str> {
    vec![
        "--competitions",
        "competitions",
        "--notebooks",
        "notebooks",
        "--output",
        "runs",
        "--run-name",
        run,
        "--workers",
        "2",
    ]
}

#[test]
fn baseline_grades_each_notebook() {
    let ws = Workspace::new();
    let mut fixture = MockFixture::default();
    let ok = fixed("ok");
    ws.add_notebook("ok", &ok, META);
    fixture.reports.insert(ok.content_hash(), completed(true));
    let off = fixed("off");
    ws.add_notebook("off", &off, META);
    fixture.reports.insert(off.content_hash(), completed(false));
    let err = buggy("err");
    ws.add_notebook("err", &err, META);
    fixture.reports.insert(err.content_hash(), name_error());
    ws.write_json("fixture.json", &fixture);

    let mut args = vec!["baseline"];
    args.extend(common("b1"));
    args.extend(["--mock-fixture", "fixture.json"]);
    let out = ws.run(&args);
    assert!(out.status.success());

    let summary: serde_json::Value = serde_json::from_str(&ws.read("runs/b1/baseline/summary.json")).unwrap();
    assert_eq!(summary["notebooks"], 3);
    assert_eq!(summary["reproducible"], 1);
    let rows = ws.read("runs/b1/baseline/outcomes.csv");
    assert_eq!(csv_lines(&rows), 4);
    assert!(rows.lines().any(|l| l.starts_with("err,toy,error,NonReproducible,false")), "{rows}");
    assert!(rows.lines().any(|l| l.starts_with("off,toy,error_free,NonReproducible,true,0.75")), "{rows}");
    let ok: serde_json::Value = serde_json::from_str(&ws.read("runs/b1/baseline/outcomes/ok.json")).unwrap();
    assert_eq!(ok["score"], 1.0);
    assert_eq!(ok["outcome"]["label"], "Reproducible");
    let table = ws.read("runs/b1/baseline/outcome_table.csv");
    assert_eq!(csv_lines(&table), 11);
}

#[test]
fn one_broken_notebook_does_not_stop_the_batch() {
    let ws = Workspace::new();
    let mut fixture = MockFixture::default();
    let ok = fixed("ok");
    ws.add_notebook("ok", &ok, META);
    fixture.reports.insert(ok.content_hash(), completed(true));
    std::fs::write(ws.path("notebooks/broken.ipynb"), "{ not json").unwrap();
    ws.add_notebook("orphan", &fixed("orphan"), r#"{"competition": "nope"}"#);
    ws.write_json("fixture.json", &fixture);

    let mut args = vec!["baseline"];
    args.extend(common("b2"));
    args.extend(["--mock-fixture", "fixture.json"]);
    assert!(ws.run(&args).status.success());
    let summary: serde_json::Value = serde_json::from_str(&ws.read("runs/b2/baseline/summary.json")).unwrap();
    assert_eq!(summary["notebooks"], 3);
    assert_eq!(summary["load_failures"], 2);
    assert_eq!(summary["reproducible"], 1);
    let rows = ws.read("runs/b2/baseline/outcomes.csv");
    assert!(rows.contains("unknown competition `nope`"));
    assert!(rows.contains("unreadable notebook"));
}

#[test]
fn empty_corpus_gives_empty_report() {
    let ws = Workspace::new();
    let mut args = vec!["baseline"];
    args.extend(common("empty"));
    let out = ws.run(&args);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(&ws.read("runs/empty/baseline/summary.json")).unwrap();
    assert_eq!(summary["notebooks"], 0);
    assert_eq!(ws.read("runs/empty/baseline/outcomes.csv"), "");
}

#[test]
fn config_errors_exit_with_code_two() {
    let ws = Workspace::new();
    let cases: Vec<Vec<&str>> = vec![
        vec!["baseline", "--competitions", "missing", "--notebooks", "notebooks"],
        vec!["baseline", "--competitions", "competitions", "--notebooks", "notebooks", "--tau", "1.5"],
        vec!["modernize", "--competitions", "competitions", "--notebooks", "notebooks", "--max-iterations", "0"],
        vec!["baseline", "--competitions", "competitions", "--notebooks", "notebooks", "--price-output=-1"],
        vec!["baseline", "--competitions", "competitions", "--notebooks", "notebooks", "--mock-fixture", "nope.json"],
        vec!["backport", "--notebooks", "notebooks"],
        vec!["baseline", "--config", "missing.toml"],
    ];
    for args in cases {
        let out = ws.run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"), "{args:?}");
    }
    assert!(!ws.path("runs").exists());
}

#[test]
fn flags_override_the_config_file() {
    let ws = Workspace::new();
    std::fs::write(
        ws.path("nbrevive.toml"),
        "competitions = \"competitions\"\nnotebooks = \"notebooks\"\noutput = \"out\"\ntau = 0.5\n\
         run_name = \"from-file\"\n[limits]\nwall_clock = 30.0\n",
    )
    .unwrap();
    let nb = fixed("near");
    ws.add_notebook("near", &nb, r#"{"competition": "toy", "target_score": 0.6}"#);
    let mut fixture = MockFixture::default();
    fixture.reports.insert(nb.content_hash(), completed(false));
    ws.write_json("fixture.json", &fixture);

    // accuracy 0.25 against 0.6: delta 0.583, reproducible only when tau is loose
    let out = ws.run(&["baseline", "-c", "nbrevive.toml", "--mock-fixture", "fixture.json"]);
    assert!(out.status.success());
    assert!(ws.read("out/from-file/baseline/outcomes.csv").contains("NonReproducible"));
    let out = ws.run(&["baseline", "-c", "nbrevive.toml", "--tau", "0.9", "--run-name", "loose", "--mock-fixture", "fixture.json"]);
    assert!(out.status.success());
    let rows = ws.read("out/loose/baseline/outcomes.csv");
    assert!(rows.contains(",Reproducible,"), "{rows}");

    std::fs::write(ws.path("bad.toml"), "tau = 0.1\nbogus = 1\n").unwrap();
    assert_eq!(ws.run(&["baseline", "-c", "bad.toml"]).status.code(), Some(2));
}

#[test]
fn modernize_repairs_seeded_bugs_and_is_idempotent() {
    let ws = Workspace::new();
    let (fixture, script) = seeded_corpus(&ws);
    let run = |name: &str| {
        let mut args = vec!["modernize"];
        args.extend(common(name));
        args.extend(["--mock-fixture", fixture.to_str().unwrap(), "--llm-script", script.to_str().unwrap()]);
        ws.run(&args)
    };
    assert!(run("m1").status.success());
    let summary = ws.read("runs/m1/modernize/summary.csv");
    assert_eq!(csv_lines(&summary), 4);
    for tag in ["alpha", "beta", "gamma"] {
        let line = summary.lines().find(|l| l.starts_with(tag)).unwrap();
        assert!(line.starts_with(&format!("{tag},error,NonReproducible,error_free,Reproducible,1,1.0,")), "{line}");
        let final_nb = ws.read(&format!("runs/m1/modernize/notebooks/{tag}.ipynb"));
        assert!(final_nb.contains("import numpy as np"));
        assert!(ws.path(&format!("runs/m1/modernize/logs/{tag}.jsonl")).is_file());
    }

    let before: Vec<(PathBuf, Vec<u8>)> = files_under(&ws.path("runs/m1"));
    assert!(run("m1").status.success());
    assert_eq!(before, files_under(&ws.path("runs/m1")));
}

#[test]
fn reproducible_corpus_needs_no_fixes() {
    let ws = Workspace::new();
    let mut fixture = MockFixture::default();
    for tag in ["a", "b"] {
        let nb = fixed(tag);
        ws.add_notebook(tag, &nb, META);
        fixture.reports.insert(nb.content_hash(), completed(true));
    }
    ws.write_json("fixture.json", &fixture);
    let mut args = vec!["modernize"];
    args.extend(common("r"));
    args.extend(["--mock-fixture", "fixture.json"]);
    assert!(ws.run(&args).status.success());
    let summary = ws.read("runs/r/modernize/summary.csv");
    assert!(summary.lines().skip(1).all(|l| l.contains(",Reproducible,0,")), "{summary}");
}

#[test]
fn misconfigured_gateway_ends_in_llm_failed() {
    let ws = Workspace::new();
    let (fixture, _) = seeded_corpus(&ws);
    let mut args = vec!["modernize"];
    args.extend(common("gw"));
    args.extend(["--mock-fixture", fixture.to_str().unwrap(), "--gateway", "remote"]);
    let out = ws.run(&args);
    assert!(out.status.success());
    let summary = ws.read("runs/gw/modernize/summary.csv");
    for line in summary.lines().skip(1) {
        assert!(line.contains(",llm_failed,Failed,"), "{line}");
        assert!(line.contains("NBREVIVE_API_KEY"), "{line}");
    }
}

#[test]
fn backport_writes_requirements_and_flags_missing_packages() {
    let ws = Workspace::new();
    let t = |y, m, d| chrono::NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc();
    let pandas = [Release::new("0.24.2", t(2019, 3, 12)), Release::new("0.25.0", t(2019, 7, 18))];
    std::fs::write(ws.path("index/pandas.json"), ReleaseIndex::package_json("pandas", &pandas)).unwrap();

    let pandas_only = Notebook::from_cells([Cell::code("import pandas as pd\ndf = pd.DataFrame()")]);
    ws.add_notebook("old", &pandas_only, META);
    ws.add_notebook("numpy_user", &fixed("numpy_user"), META);
    ws.add_notebook("undated", &fixed("undated"), r#"{"competition": "toy"}"#);

    let out = ws.run(&["backport", "--notebooks", "notebooks", "--index-dir", "index", "-o", "runs", "--run-name", "bp"]);
    assert!(out.status.success());
    let reqs = ws.read("runs/bp/backport/old/requirements.txt");
    assert_eq!(reqs, "pandas<=0.24.2\n");
    assert_eq!(ws.read("runs/bp/backport/old/python-version.txt").trim().split('.').count(), 3);
    let summary = ws.read("runs/bp/backport/summary.csv");
    let line = |id: &str| summary.lines().find(|l| l.starts_with(&format!("{id},"))).unwrap().to_string();
    assert!(line("old").starts_with("old,ok,3."));
    assert!(line("numpy_user").starts_with("numpy_user,backport_failed,"), "{summary}");
    assert!(line("numpy_user").contains("numpy"));
    assert!(!ws.path("runs/bp/backport/numpy_user/requirements.txt").exists());
    assert!(line("undated").contains("submitted_at"));

    let empty = Workspace::new();
    let out = empty.run(&["backport", "--notebooks", "notebooks", "--index-dir", "index", "-o", "runs", "--run-name", "e"]);
    assert!(out.status.success());
    assert!(!empty.path("runs/e").exists());
}

#[test]
fn report_from_modernize_logs() {
    let ws = Workspace::new();
    let (fixture, script) = seeded_corpus(&ws);
    let mut args = vec!["modernize"];
    args.extend(common("m"));
    args.extend(["--mock-fixture", fixture.to_str().unwrap(), "--llm-script", script.to_str().unwrap()]);
    assert!(ws.run(&args).status.success());

    let out = ws.run(&["report", "--logs", "runs/m/modernize/logs", "-o", "runs", "--run-name", "rep"]);
    assert!(out.status.success());
    for f in [
        "baseline_outcomes.csv",
        "terminal_outcomes.csv",
        "transitions.csv",
        "error_types.csv",
        "similarity_curve.csv",
        "similarity_per_fix.csv",
        "fix_counts.csv",
        "fix_histogram.csv",
        "correlations.csv",
        "cost.csv",
        "report.json",
    ] {
        assert!(ws.path(&format!("runs/rep/report/{f}")).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&ws.read("runs/rep/report/report.json")).unwrap();
    assert_eq!(report["sessions"], 3);
    assert_eq!(report["skipped_lines"], 0);

    let mut log = ws.read("runs/m/modernize/logs/alpha.jsonl");
    log.insert_str(0, "{corrupt\n");
    std::fs::write(ws.path("runs/m/modernize/logs/alpha.jsonl"), log).unwrap();
    let out = ws.run(&["report", "--logs", "runs/m/modernize/logs", "-o", "runs", "--run-name", "rep2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 1 corrupt log lines"));
    let report: serde_json::Value = serde_json::from_str(&ws.read("runs/rep2/report/report.json")).unwrap();
    assert_eq!(report["sessions"], 3);
    assert_eq!(report["skipped_lines"], 1);
}

#[test]
fn report_edge_cases() {
    let ws = Workspace::new();
    let out = ws.run(&["report", "--logs", "no-such-dir", "-o", "runs", "--run-name", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-dir"));

    std::fs::create_dir_all(ws.path("logs")).unwrap();
    let out = ws.run(&["report", "--logs", "logs", "-o", "runs", "--run-name", "empty"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&ws.read("runs/empty/report/report.json")).unwrap();
    assert_eq!(report["sessions"], 0);
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
