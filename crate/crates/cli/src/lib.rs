//! The `sdc` command line: `scan`, `simulate`, `shrink` and `report`.
//!
//! Exit codes: 0 pass, 1 usage or config error, 2 corruption detected.

mod report_cmd;
mod scan;
mod shrink_cmd;
mod simulate;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sdc_core::faultsim::{bundled_spec, load_fault_specs, FaultSpec};

pub use scan::{parse_core_list, parse_targeted};
pub use shrink_cmd::ReproducerFile;

#[derive(Debug, Parser)]
#[command(name = "sdc", version, about = "Silent data corruption screening")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan cores of one host against reference results.
    Scan(scan::ScanArgs),
    /// Run the fleet simulator.
    Simulate(simulate::SimulateArgs),
    /// Minimize the mismatches of a scan report into reproducers.
    Shrink(shrink_cmd::ShrinkArgs),
    /// Validate reports and aggregate host status through the collector.
    Report(report_cmd::ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, env = "SDC_SEED")]
    pub seed: Option<u64>,
    /// Fault spec file, or the name of a bundled spec (e.g. `core59.spec`).
    #[arg(long)]
    pub specs: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Zero wall-clock fields so reruns are byte-identical.
    #[arg(long)]
    pub canonical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Corruption,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Corruption => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Scan(a) => scan::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Shrink(a) => shrink_cmd::run(a),
        Command::Report(a) => report_cmd::run(a),
    }
}

/// Parses arguments and runs, mapping errors to exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(v) => v.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Loads specs from a file path, falling back to a bundled spec name.
/// `base` is tried for relative paths that do not exist as given.
pub fn resolve_specs(name: &str, base: Option<&Path>) -> Result<Vec<FaultSpec>> {
    let direct = Path::new(name);
    let candidates = std::iter::once(direct.to_path_buf())
        .chain(base.filter(|_| direct.is_relative()).map(|b| b.join(name)));
    for path in candidates {
        if path.is_file() {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading spec file {}", path.display()))?;
            return load_fault_specs(&text).with_context(|| format!("in {}", path.display()));
        }
    }
    match bundled_spec(name) {
        Some(text) => Ok(load_fault_specs(text)?),
        None => bail!("no spec file or bundled spec named {name:?}"),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to `out`, or to stdout when absent.
pub(crate) fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Summary text goes to stdout unless stdout carries the main output.
pub(crate) fn summary(out: Option<&Path>, text: &str) {
    if out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

pub(crate) fn no_config_expected(common: &Common, command: &str) -> Result<()> {
    if common.config.is_some() {
        return Err(anyhow!("{command} does not take --config"));
    }
    Ok(())
}
