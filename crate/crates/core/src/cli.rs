//! Command-line front end. The binary only forwards `std::env::args` here.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, DatasetConfig, RunConfig};
use crate::data::{write_csv, write_dataset_cache, AnomalyLabel, DatasetCache, EncodedBatch};
use crate::error::{Error, Result};
use crate::eval::{summarize, SummaryTable};
use crate::report::{emit_reports, replot};
use crate::sim::{self, run_on_dataset};

#[derive(Debug, Parser)]
#[command(name = "fedledger", version, about = "Federated continual learning simulator for journal-entry anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulation and write metrics, summary, run log and charts.
    Run(ConfigArgs),
    /// Write the configured synthetic dataset as CSV.
    SynthData(ConfigArgs),
    /// Encode the configured dataset into a binary cache file.
    Encode(ConfigArgs),
    /// Validate a config and print its canonical form.
    ValidateConfig(ConfigArgs),
    /// Rebuild summary and charts from a run directory's metrics.csv.
    Replot {
        /// Run directory containing metrics.csv.
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config file; all defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set fl=scaffold` or `--set yogi.lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (run) or file (synth-data, encode).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Divide T, R, eta and rho (ceiling) for quick runs.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

impl ConfigArgs {
    /// File config plus `--set`, then the dedicated flags.
    pub fn load(&self, out_is_dir: bool) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.scale {
            overrides.push(format!("scale={s}"));
        }
        if let Some(seeds) = &self.seeds {
            overrides.push(format!("seeds={}", serde_json::to_string(seeds).expect("seed list serializes")));
        }
        if let (true, Some(out)) = (out_is_dir, &self.out) {
            overrides.push(format!("out_dir={}", serde_json::to_string(&out.to_string_lossy()).expect("path serializes")));
        }
        parse_config(self.config.as_deref(), &overrides)
    }

    fn out_file(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn write(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Run one simulation and write its artifacts under `out_dir/<run-id>/`.
pub fn run_to_dir(cfg: &RunConfig) -> Result<(PathBuf, SummaryTable)> {
    let dir = cfg.out_dir.join(cfg.run_id());
    let ds = sim::prepare_dataset(cfg)?;
    let out = run_on_dataset(cfg, &ds)?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut canonical = serde_json::to_string_pretty(&cfg.to_json()).expect("config serializes");
    canonical.push('\n');
    write(&dir.join("config.json"), &canonical)?;
    let mut log = String::new();
    for t in &out.transcripts {
        log.push_str(&serde_json::to_string(t).expect("transcript serializes"));
        log.push('\n');
    }
    write(&dir.join("run_log.jsonl"), &log)?;
    let table = summarize(&out.records);
    emit_reports(&table, &out.records, &dir)?;
    Ok((dir, table))
}

fn execute(cmd: &Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut so = stdout.lock();
    match cmd {
        Command::Run(args) => {
            let cfg = args.load(true)?;
            let (dir, table) = run_to_dir(&cfg)?;
            let _ = write!(so, "{}", table.render());
            let _ = writeln!(so, "run {} written to {}", cfg.run_id(), dir.display());
        }
        Command::SynthData(args) => {
            let cfg = args.load(false)?;
            let DatasetConfig::Synthetic(spec) = &cfg.dataset else {
                return Err(Error::config("/dataset/kind", "synth-data needs a synthetic dataset"));
            };
            let (table, _) = crate::data::synthesize_dataset(spec)?;
            let path = args.out_file("synthetic.csv");
            write_csv(&table, &path)?;
            let _ = writeln!(so, "{} rows written to {}", table.entries.len(), path.display());
        }
        Command::Encode(args) => {
            let cfg = args.load(false)?;
            let ds = sim::prepare_dataset(&cfg)?;
            let entries: Vec<_> = ds.table.entries.iter().map(|e| (e.clone(), AnomalyLabel::None)).collect();
            let batch = EncodedBatch::encode(&ds.schema, &entries)?;
            let path = args.out_file("dataset.flds");
            write_dataset_cache(&path, &DatasetCache { schema: ds.schema, batch })?;
            let _ = writeln!(so, "{} rows encoded to {}", entries.len(), path.display());
        }
        Command::ValidateConfig(args) => {
            let cfg = args.load(true)?;
            let _ = writeln!(so, "{}", cfg.canonical_json());
        }
        Command::Replot { dir } => {
            for p in replot(dir)? {
                let _ = writeln!(so, "{}", p.display());
            }
        }
    }
    Ok(())
}

/// Exit code: 0 ok, 1 config, 2 data, 3 runtime.
pub fn run_command(cmd: &Command) -> i32 {
    match execute(cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parse arguments and run. Usage errors count as configuration errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_command(&cli.command),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_are_config_errors() {
        assert_eq!(main_with_args(["fedledger", "frobnicate"]), 1);
        assert_eq!(main_with_args(["fedledger", "--help"]), 0);
    }

    #[test]
    fn validate_config_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"T": 2}"#).unwrap();
        let ps = p.to_str().unwrap();
        assert_eq!(main_with_args(["fedledger", "validate-config", "--config", ps]), 0);
        assert_eq!(main_with_args(["fedledger", "validate-config", "--config", ps, "--set", "T=0"]), 1);
        assert_eq!(main_with_args(["fedledger", "validate-config", "--config", "/nonexistent/c.json"]), 2);
    }

    #[test]
    fn missing_csv_is_a_data_error() {
        let code = main_with_args([
            "fedledger",
            "run",
            "--set",
            r#"dataset={"kind":"chicago","path":"/nonexistent/payments.csv"}"#,
        ]);
        assert_eq!(code, 2);
    }
}
