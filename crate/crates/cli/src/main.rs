use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use retention_cli::{run, CliError, Command, RunConfig, Sinks};

#[derive(Parser)]
#[command(
    name = "retention",
    version,
    about = "Policy value and optimal retention under rare loss events"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Premium, certain equivalents and value of the configured retention.
    Value(Common),
    /// Loading at which the configured retention breaks even.
    Breakeven(Common),
    /// Optimal retention by closed form, per-cell optimum and projected descent.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Also write the step levels of both grid methods.
        #[arg(long)]
        levels: Option<PathBuf>,
    },
    /// Monte Carlo yearly totals with analytic values alongside.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Summary table destination (defaults to `<output>.summary.csv`,
        /// or after the per-year rows on stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// One row per value of the `[sweep]` parameter.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set terms.loading_c=0.2`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let (command, common, levels, summary) = match cli.command {
        Sub::Value(c) => (Command::Value, c, None, None),
        Sub::Breakeven(c) => (Command::Breakeven, c, None, None),
        Sub::Optimize { common, levels } => (Command::Optimize, common, levels, None),
        Sub::Simulate { common, summary } => {
            let summary = summary.or_else(|| {
                common.output.as_ref().map(|o| {
                    let mut p = o.clone().into_os_string();
                    p.push(".summary.csv");
                    PathBuf::from(p)
                })
            });
            (Command::Simulate, common, None, summary)
        }
        Sub::Sweep(c) => (Command::Sweep, c, None, None),
    };
    let cfg = RunConfig::load(&common.config, &common.overrides)?;

    let stdout = std::io::stdout();
    let mut main_out: Box<dyn Write> = match &common.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(stdout.lock()),
    };
    let mut summary_out = summary.as_deref().map(create).transpose()?;
    let mut levels_out = levels.as_deref().map(create).transpose()?;
    let note = run(
        command,
        &cfg,
        Sinks {
            main: &mut main_out,
            summary: summary_out.as_mut().map(|w| w as &mut dyn Write),
            levels: levels_out.as_mut().map(|w| w as &mut dyn Write),
        },
    )?;
    let flush = |w: &mut dyn Write, p: Option<&Path>| {
        w.flush().map_err(|source| CliError::Io {
            path: p.map(Path::to_path_buf).unwrap_or_else(|| "<stdout>".into()),
            source,
        })
    };
    flush(&mut main_out, common.output.as_deref())?;
    if let Some(w) = summary_out.as_mut() {
        flush(w, summary.as_deref())?;
    }
    if let Some(w) = levels_out.as_mut() {
        flush(w, levels.as_deref())?;
    }
    Ok(note)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(note) => {
            eprintln!("{note}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
