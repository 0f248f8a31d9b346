//! OCI container backend.
//!
//! Each run gets a host scratch directory with two subdirectories:
//! `working/` is mounted at `/kaggle/working/` and `io/` at `/nbrevive/`.
//! The container runs a generated `run.sh` that performs the pre-execution
//! installs and then hands over to the runner shim:
//!
//! ```text
//! runner --notebook /nbrevive/in.ipynb --out /nbrevive/out.ipynb --timeout S
//! ```
//!
//! The shim prints `RUNTIME_SECONDS=<float>` on stdout and exits 0 once the
//! executed notebook has been written; anything else is "not saved".

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde_json::Value;

use super::{
    cell_results_from, collect_submission, finalize_report, ExecError, ExecLimits, ExecStatus,
    ExecutionReport, Executor, INPUT_DIR, WORKING_DIR,
};
use crate::backport::EnvironmentSpec;
use crate::grader::CompetitionSpec;
use crate::notebook::{extract_pip_installs, parse_notebook, Notebook};

pub const RUNTIME_LINE_PREFIX: &str = "RUNTIME_SECONDS=";
/// Key under the `nbrevive` notebook metadata namespace set by the shim
/// when the budget expired.
pub const TIMEOUT_METADATA_KEY: &str = "timed_out";

const IO_MOUNT: &str = "/nbrevive";
const VENV_DIR: &str = "/opt/nbrevive-venv";
/// Exit codes of `run.sh` when the backported environment cannot be built.
const EXIT_VENV_FAILED: i32 = 97;
const EXIT_REQUIREMENTS_FAILED: i32 = 98;

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ContainerExecutor {
    /// Container CLI (`docker`, `podman`, ...).
    pub runtime: PathBuf,
    pub image: String,
    /// Host directory under which per-run scratch directories are created.
    pub scratch_root: PathBuf,
    /// Runner shim command inside the image.
    pub runner: String,
    /// Extra time allowed for installs and container start before the
    /// harness kills the container.
    pub grace: Duration,
    pub keep_scratch: bool,
}

impl ContainerExecutor {
    pub fn new(runtime: impl Into<PathBuf>, image: impl Into<String>, scratch_root: impl Into<PathBuf>) -> Self {
        ContainerExecutor {
            runtime: runtime.into(),
            image: image.into(),
            scratch_root: scratch_root.into(),
            runner: "runner".into(),
            grace: Duration::from_secs(300),
            keep_scratch: false,
        }
    }

    /// Shell script executed inside the container.
    pub fn run_script(&self, nb: &Notebook, limits: &ExecLimits, env: &EnvironmentSpec) -> String {
        let mut s = String::from("#!/bin/sh\ncd /kaggle/working\n");
        let mut python = "python".to_string();
        if let Some(interp) = &env.interpreter {
            let minor_line = interp.split('.').take(2).collect::<Vec<_>>().join(".");
            s.push_str(&format!(
                "virtualenv -p python{minor_line} {VENV_DIR} > {IO_MOUNT}/venv.log 2>&1 || exit {EXIT_VENV_FAILED}\n"
            ));
            s.push_str(&format!(
                "{VENV_DIR}/bin/python -m pip install -r {IO_MOUNT}/requirements.txt > {IO_MOUNT}/requirements.log 2>&1 || exit {EXIT_REQUIREMENTS_FAILED}\n"
            ));
            s.push_str(&format!(". {VENV_DIR}/bin/activate\n"));
            python = format!("{VENV_DIR}/bin/python");
        }
        for (i, req) in extract_pip_installs(nb).iter().enumerate() {
            let spec = shell_quote(&req.to_string());
            s.push_str(&format!(
                "{python} -m pip install --quiet {spec} > {IO_MOUNT}/pip-{i}.log 2>&1 || echo {spec} >> {IO_MOUNT}/pip_failed.txt\n"
            ));
        }
        s.push_str(&format!(
            "{python} -c 'import sys; print(\"python \" + sys.version.split()[0])' > {IO_MOUNT}/env.txt 2>&1\n"
        ));
        s.push_str(&format!("{python} -m pip freeze >> {IO_MOUNT}/env.txt 2>/dev/null\n"));
        s.push_str(&format!(
            "exec {} --notebook {IO_MOUNT}/in.ipynb --out {IO_MOUNT}/out.ipynb --timeout {}\n",
            self.runner, limits.wall_clock
        ));
        s
    }

    /// Arguments passed to the container CLI.
    pub fn container_args(
        &self,
        comp: &CompetitionSpec,
        limits: &ExecLimits,
        working: &Path,
        io: &Path,
    ) -> Vec<String> {
        let mut args = vec!["run".to_string(), "--rm".into()];
        if let Some(name) = container_name(io) {
            args.push(format!("--name={name}"));
        }
        args.extend([
            format!("--cpus={}", limits.cpu_cores),
            format!("--memory={}b", limits.memory),
        ]);
        if limits.gpu_count > 0 {
            args.push(format!("--gpus={}", limits.gpu_count));
        }
        if let Some(data) = &comp.dataset_dir {
            args.push("-v".into());
            args.push(format!("{}:{}:ro", data.display(), INPUT_DIR.trim_end_matches('/')));
        }
        args.push("-v".into());
        args.push(format!("{}:{}", working.display(), WORKING_DIR.trim_end_matches('/')));
        args.push("-v".into());
        args.push(format!("{}:{IO_MOUNT}", io.display()));
        args.push(self.image.clone());
        args.push("sh".into());
        args.push(format!("{IO_MOUNT}/run.sh"));
        args
    }

    fn scratch_dir(&self, nb: &Notebook) -> PathBuf {
        let n = RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
        let hash = nb.content_hash();
        self.scratch_root
            .join(format!("run-{}-{}-{n}", &hash[..12], std::process::id()))
    }
}

/// Container name for a run, taken from its scratch directory.
fn container_name(io: &Path) -> Option<String> {
    let run = io.parent()?.file_name()?.to_str()?;
    Some(format!("nbrevive-{run}"))
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Runtime reported by the shim on stdout, if any.
pub(crate) fn parse_runtime_line(stdout: &str) -> Option<f64> {
    stdout
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix(RUNTIME_LINE_PREFIX))
        .and_then(|v| v.trim().parse().ok())
}

fn timed_out_marker(nb: &Notebook) -> bool {
    nb.metadata
        .get("nbrevive")
        .and_then(|n| n.get(TIMEOUT_METADATA_KEY))
        .and_then(Value::as_bool)
        .unwrap_or(false)
}

struct Finished {
    exit_code: Option<i32>,
    stdout: String,
    killed: bool,
    elapsed: f64,
}

fn run_with_deadline(
    mut cmd: Command,
    deadline: Duration,
    on_kill: impl FnOnce(),
) -> Result<Finished, ExecError> {
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| ExecError::ExecutorUnavailable(format!("cannot start container runtime: {e}")))?;
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout.read_to_string(&mut buf);
        let _ = tx.send(buf);
    });
    let start = Instant::now();
    let mut killed = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= deadline {
            let _ = child.kill();
            on_kill();
            killed = true;
            break child.wait()?;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let elapsed = start.elapsed().as_secs_f64();
    // processes left behind by a killed CLI may hold the pipe open
    let stdout = if killed {
        rx.recv_timeout(Duration::from_secs(2)).unwrap_or_default()
    } else {
        rx.recv().unwrap_or_default()
    };
    Ok(Finished {
        exit_code: status.code(),
        stdout,
        killed,
        elapsed,
    })
}

impl Executor for ContainerExecutor {
    fn execute(
        &self,
        nb: &Notebook,
        comp: &CompetitionSpec,
        limits: &ExecLimits,
        env: &EnvironmentSpec,
    ) -> Result<ExecutionReport, ExecError> {
        limits.validate()?;
        let scratch = self.scratch_dir(nb);
        let working = scratch.join("working");
        let io = scratch.join("io");
        std::fs::create_dir_all(&working)?;
        std::fs::create_dir_all(&io)?;
        let result = self.execute_in(nb, comp, limits, env, &working, &io);
        if !self.keep_scratch {
            let _ = std::fs::remove_dir_all(&scratch);
        }
        result
    }
}

impl ContainerExecutor {
    fn execute_in(
        &self,
        nb: &Notebook,
        comp: &CompetitionSpec,
        limits: &ExecLimits,
        env: &EnvironmentSpec,
        working: &Path,
        io: &Path,
    ) -> Result<ExecutionReport, ExecError> {
        std::fs::write(io.join("in.ipynb"), nb.to_ipynb())?;
        std::fs::write(io.join("run.sh"), self.run_script(nb, limits, env))?;
        if env.interpreter.is_some() {
            std::fs::write(io.join("requirements.txt"), env.requirements_text())?;
        }

        let mut cmd = Command::new(&self.runtime);
        cmd.args(self.container_args(comp, limits, working, io));
        let deadline = Duration::from_secs_f64(limits.wall_clock) + self.grace;
        let finished = run_with_deadline(cmd, deadline, || {
            if let Some(name) = container_name(io) {
                let _ = Command::new(&self.runtime)
                    .args(["kill", &name])
                    .stdin(Stdio::null())
                    .stdout(Stdio::null())
                    .stderr(Stdio::null())
                    .status();
            }
        })?;

        match finished.exit_code {
            Some(EXIT_VENV_FAILED) => {
                let log = std::fs::read_to_string(io.join("venv.log")).unwrap_or_default();
                return Err(ExecError::EnvironmentInstall(format!("virtualenv failed: {log}")));
            }
            Some(EXIT_REQUIREMENTS_FAILED) => {
                let log = std::fs::read_to_string(io.join("requirements.log")).unwrap_or_default();
                return Err(ExecError::EnvironmentInstall(format!(
                    "requirements install failed: {log}"
                )));
            }
            _ => {}
        }

        let install_failures: Vec<String> = std::fs::read_to_string(io.join("pip_failed.txt"))
            .unwrap_or_default()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|spec| format!("InstallError: pre-execution install of {} failed", spec.trim()))
            .collect();
        let env_fingerprint = std::fs::read_to_string(io.join("env.txt"))
            .unwrap_or_default()
            .trim_end()
            .to_string();
        let runtime = parse_runtime_line(&finished.stdout);

        let executed = (finished.exit_code == Some(0))
            .then(|| std::fs::read(io.join("out.ipynb")).ok())
            .flatten()
            .and_then(|bytes| match parse_notebook(&bytes) {
                Ok(nb) => Some(nb),
                Err(e) => {
                    log::warn!("runner wrote an unreadable notebook: {e}");
                    None
                }
            });

        let report = match executed {
            Some(executed) => {
                let timed_out = finished.killed || timed_out_marker(&executed);
                ExecutionReport {
                    status: if timed_out {
                        ExecStatus::Timeout
                    } else {
                        ExecStatus::Completed
                    },
                    runtime: runtime.unwrap_or(finished.elapsed),
                    cell_results: cell_results_from(&executed, &install_failures),
                    submission: collect_submission(working, &comp.submission_filename),
                    executed_notebook: executed,
                    env_fingerprint,
                    partial: timed_out,
                }
            }
            None if finished.killed => ExecutionReport {
                status: ExecStatus::Timeout,
                runtime: limits.wall_clock,
                cell_results: cell_results_from(&nb.without_outputs(), &install_failures),
                submission: None,
                executed_notebook: nb.without_outputs(),
                env_fingerprint,
                partial: true,
            },
            None => ExecutionReport {
                status: ExecStatus::NotSaved,
                runtime: runtime.unwrap_or(finished.elapsed),
                cell_results: cell_results_from(&nb.without_outputs(), &install_failures),
                submission: None,
                executed_notebook: nb.without_outputs(),
                env_fingerprint,
                partial: false,
            },
        };
        Ok(finalize_report(report, limits))
    }
}
