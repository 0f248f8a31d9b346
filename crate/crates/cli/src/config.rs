use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use nbrevive_core::agent::{Mode, DEFAULT_TOKEN_CUTOFF};
use nbrevive_core::exec::ExecLimits;
use nbrevive_core::grader::DEFAULT_TAU;
use nbrevive_core::llm::{PriceTable, RemoteConfig, DEFAULT_API_KEY_ENV};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorKind {
    Mock,
    Container,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GatewayKind {
    Mock,
    Remote,
}

/// Options shared by every subcommand. Each one overrides the matching
/// key of the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Directory of competition specs (`*.toml` or `*.json`).
    #[arg(long)]
    pub competitions: Option<PathBuf>,
    /// Directory of `*.ipynb` files with `<stem>.meta.json` sidecars.
    #[arg(long)]
    pub notebooks: Option<PathBuf>,
    /// Root under which run directories are created.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Run directory name; defaults to a UTC timestamp.
    #[arg(long)]
    pub run_name: Option<String>,
    /// Parallel notebooks; defaults to the CPU count.
    #[arg(long, short = 'j')]
    pub workers: Option<usize>,

    #[arg(long, value_enum)]
    pub executor: Option<ExecutorKind>,
    /// Canned reports for the mock executor.
    #[arg(long)]
    pub mock_fixture: Option<PathBuf>,
    /// Container CLI (docker, podman, ...).
    #[arg(long)]
    pub container_runtime: Option<PathBuf>,
    #[arg(long)]
    pub container_image: Option<String>,
    #[arg(long)]
    pub scratch_dir: Option<PathBuf>,
    /// Wall-clock limit per execution, seconds.
    #[arg(long)]
    pub wall_clock: Option<f64>,
    #[arg(long)]
    pub cpu_cores: Option<u32>,
    #[arg(long)]
    pub memory_gb: Option<f64>,
    #[arg(long)]
    pub gpus: Option<u32>,

    /// Relative score deviation threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fix-iteration cap per notebook.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Prompt scope for error repair: `file` or `cell`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Prompt token cutoff.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub retry_budget: Option<usize>,

    #[arg(long, value_enum)]
    pub gateway: Option<GatewayKind>,
    /// Scripted replies for the mock gateway.
    #[arg(long)]
    pub llm_script: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub base_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,

    /// USD per million uncached input tokens.
    #[arg(long)]
    pub price_input: Option<f64>,
    #[arg(long)]
    pub price_cached: Option<f64>,
    #[arg(long)]
    pub price_output: Option<f64>,

    /// Package release index (one JSON file per package).
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    #[arg(long)]
    pub interpreter_table: Option<PathBuf>,
    /// Import-name to package-name aliases.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// Run notebooks in backported environments (needs an index).
    #[arg(long)]
    pub backported: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    competitions: Option<PathBuf>,
    notebooks: Option<PathBuf>,
    output: Option<PathBuf>,
    run_name: Option<String>,
    workers: Option<usize>,
    executor: Option<ExecutorKind>,
    mock_fixture: Option<PathBuf>,
    container_runtime: Option<PathBuf>,
    container_image: Option<String>,
    scratch_dir: Option<PathBuf>,
    limits: Option<ExecLimits>,
    tau: Option<f64>,
    max_iterations: Option<usize>,
    mode: Option<Mode>,
    cutoff: Option<usize>,
    retry_budget: Option<usize>,
    gateway: Option<GatewayKind>,
    llm_script: Option<PathBuf>,
    model: Option<String>,
    base_url: Option<String>,
    api_key_env: Option<String>,
    prices: Option<PriceTable>,
    index_dir: Option<PathBuf>,
    interpreter_table: Option<PathBuf>,
    aliases: Option<PathBuf>,
    backported: Option<bool>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.competitions,
            &mut cfg.notebooks,
            &mut cfg.output,
            &mut cfg.mock_fixture,
            &mut cfg.scratch_dir,
            &mut cfg.llm_script,
            &mut cfg.index_dir,
            &mut cfg.interpreter_table,
            &mut cfg.aliases,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub competitions: Option<PathBuf>,
    pub notebooks: Option<PathBuf>,
    pub output: PathBuf,
    pub run_name: Option<String>,
    pub workers: usize,
    pub executor: ExecutorKind,
    pub mock_fixture: Option<PathBuf>,
    pub container_runtime: PathBuf,
    pub container_image: String,
    pub scratch_dir: PathBuf,
    pub limits: ExecLimits,
    pub tau: f64,
    pub max_iterations: usize,
    pub mode: Mode,
    pub cutoff: usize,
    pub retry_budget: usize,
    pub gateway: GatewayKind,
    pub llm_script: Option<PathBuf>,
    pub remote: RemoteConfig,
    pub prices: PriceTable,
    pub index_dir: Option<PathBuf>,
    pub interpreter_table: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub backported: bool,
}

impl RunConfig {
    /// Layers flags over the config file over defaults, then validates.
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut limits = file.limits.unwrap_or_default();
        if let Some(v) = args.wall_clock {
            limits.wall_clock = v;
        }
        if let Some(v) = args.cpu_cores {
            limits.cpu_cores = v;
        }
        if let Some(v) = args.memory_gb {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("memory must be positive, got {v} GB")));
            }
            limits.memory = (v * (1u64 << 30) as f64) as u64;
        }
        if let Some(v) = args.gpus {
            limits.gpu_count = v;
        }
        let mut prices = file.prices.unwrap_or(PriceTable::REFERENCE);
        prices.input_uncached = args.price_input.unwrap_or(prices.input_uncached);
        prices.input_cached = args.price_cached.unwrap_or(prices.input_cached);
        prices.output = args.price_output.unwrap_or(prices.output);

        let mut remote = RemoteConfig::default();
        if let Some(m) = args.model.clone().or(file.model) {
            remote.model = m;
        }
        if let Some(u) = args.base_url.clone().or(file.base_url) {
            remote.base_url = u;
        }
        remote.api_key_env = args
            .api_key_env
            .clone()
            .or(file.api_key_env)
            .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string());

        let cfg = RunConfig {
            competitions: args.competitions.clone().or(file.competitions),
            notebooks: args.notebooks.clone().or(file.notebooks),
            output: args.output.clone().or(file.output).unwrap_or_else(|| "runs".into()),
            run_name: args.run_name.clone().or(file.run_name),
            workers: args.workers.or(file.workers).unwrap_or_else(default_workers),
            executor: args.executor.or(file.executor).unwrap_or(ExecutorKind::Mock),
            mock_fixture: args.mock_fixture.clone().or(file.mock_fixture),
            container_runtime: args
                .container_runtime
                .clone()
                .or(file.container_runtime)
                .unwrap_or_else(|| "docker".into()),
            container_image: args
                .container_image
                .clone()
                .or(file.container_image)
                .unwrap_or_else(|| "nbrevive/runner:latest".into()),
            scratch_dir: args
                .scratch_dir
                .clone()
                .or(file.scratch_dir)
                .unwrap_or_else(|| std::env::temp_dir().join("nbrevive")),
            limits,
            tau: args.tau.or(file.tau).unwrap_or(DEFAULT_TAU),
            max_iterations: args.max_iterations.or(file.max_iterations).unwrap_or(16),
            mode: args.mode.or(file.mode).unwrap_or_default(),
            cutoff: args.cutoff.or(file.cutoff).unwrap_or(DEFAULT_TOKEN_CUTOFF),
            retry_budget: args.retry_budget.or(file.retry_budget).unwrap_or(1),
            gateway: args.gateway.or(file.gateway).unwrap_or(GatewayKind::Mock),
            llm_script: args.llm_script.clone().or(file.llm_script),
            remote,
            prices,
            index_dir: args.index_dir.clone().or(file.index_dir),
            interpreter_table: args.interpreter_table.clone().or(file.interpreter_table),
            aliases: args.aliases.clone().or(file.aliases),
            backported: args.backported || file.backported.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if self.cutoff == 0 {
            return bad("cutoff must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.limits.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.prices.validate().map_err(CliError::Config)?;
        for (name, path) in [
            ("mock fixture", &self.mock_fixture),
            ("LLM script", &self.llm_script),
            ("interpreter table", &self.interpreter_table),
            ("alias table", &self.aliases),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return bad(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        if self.backported && self.index_dir.is_none() {
            return bad("--backported needs an index directory".into());
        }
        Ok(())
    }

    /// Errors unless the directory setting is present and exists.
    pub fn require_dir<'a>(&self, name: &str, dir: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        match dir {
            Some(d) if d.is_dir() => Ok(d),
            Some(d) => Err(CliError::Config(format!("{name} directory {} does not exist", d.display()))),
            None => Err(CliError::Config(format!("no {name} directory configured"))),
        }
    }

    /// `<output>/<run name>`; the name defaults to the current UTC time.
    pub fn run_dir(&self) -> PathBuf {
        let name = self
            .run_name
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
        self.output.join(name)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("conf");
        std::fs::create_dir_all(&sub).unwrap();
        let path = sub.join("run.toml");
        std::fs::write(&path, "notebooks = \"nbs\"\noutput = \"/abs/out\"\nmode = \"cell\"\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            memory_gb: Some(2.0),
            ..RunArgs::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.notebooks.as_deref(), Some(sub.join("nbs").as_path()));
        assert_eq!(cfg.output, PathBuf::from("/abs/out"));
        assert_eq!(cfg.mode, Mode::CellLevel);
        assert_eq!(cfg.limits.memory, 2 << 30);
        assert!(cfg.run_dir().starts_with("/abs/out"));
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::resolve(&RunArgs::default()).unwrap();
        assert_eq!(cfg.tau, DEFAULT_TAU);
        assert_eq!(cfg.max_iterations, 16);
        assert_eq!(cfg.cutoff, 13_485);
        assert_eq!(cfg.prices, PriceTable::REFERENCE);
        assert!(cfg.workers >= 1);
    }
}
