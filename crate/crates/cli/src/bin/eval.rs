use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

/// Statistics for repair-study session logs and questionnaires.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Task completion times from an action log export.
    Tct { log: PathBuf },
    /// Paired t-test over two columns.
    Ttest { csv: PathBuf },
    /// Effect size from two paired columns or one column of differences.
    Dz { csv: PathBuf },
    /// Raw TLX scores from six subscale columns.
    Rtlx { csv: PathBuf },
    /// UMUX-LITE scores from PU and PEU columns.
    Umux { csv: PathBuf },
    /// Within-subject confidence intervals, subjects × conditions.
    Wsci {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    use bladeassist_cli as ev;
    let report = match Args::parse().cmd {
        Cmd::Tct { log } => ev::tct(&read(&log)?)?,
        Cmd::Ttest { csv } => ev::ttest(&read(&csv)?)?,
        Cmd::Dz { csv } => ev::dz(&read(&csv)?)?,
        Cmd::Rtlx { csv } => ev::rtlx(&read(&csv)?)?,
        Cmd::Umux { csv } => ev::umux(&read(&csv)?)?,
        Cmd::Wsci { csv, level } => ev::wsci(&read(&csv)?, level)?,
    };
    print!("{report}");
    Ok(())
}
