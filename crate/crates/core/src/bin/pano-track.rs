use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pano_track::scenario::{self, parse_modes, RunOptions};
use pano_track::Result;

#[derive(Parser)]
#[command(name = "pano-track", version, about = "UAV tracking on LiDAR panoramic scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render scans to binary dumps plus ground truth.
    Gen(Common),
    /// Track a scenario and write trajectories, reports and a comparison.
    Track {
        #[command(flatten)]
        common: Common,
        /// Also write every rendered scan under OUT/scans.
        #[arg(long)]
        dump_scans: bool,
    },
    /// Time tracker steps on pre-rendered scans.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
    },
    /// Recompute reports and the comparison from CSVs in OUT.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated subset of fused,pcd_only,image_only.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Dotted-path override such as `detector.dropout_prob=0.3`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn options(&self, dump_scans: bool) -> Result<RunOptions> {
        Ok(RunOptions {
            overrides: self.overrides.clone(),
            seed: self.seed,
            modes: self.modes.as_deref().map(parse_modes).transpose()?,
            frames: self.frames,
            dump_scans,
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    scenario::configure_threads()?;
    match cli.command {
        Command::Gen(c) => {
            let n = scenario::generate_scans(&c.scenario, &c.out, &c.options(false)?)?;
            println!("wrote {n} scans to {}", c.out.join("scans").display());
        }
        Command::Track { common: c, dump_scans } => {
            let art = scenario::run_scenario(&c.scenario, &c.out, &c.options(dump_scans)?)?;
            for path in art.trajectories.values() {
                println!("wrote {}", path.display());
            }
            if let Some(cmp) = art.comparison_result {
                print!("{}", cmp.to_text());
            }
        }
        Command::Bench { common: c, repetitions } => {
            let report = scenario::run_benchmark(&c.scenario, &c.out, &c.options(false)?, repetitions)?;
            for (mode, t) in &report.aggregate {
                println!(
                    "{mode}: {} frames, mean {:.3} ms, p95 {:.3} ms, {:.1} fps",
                    t.n_frames, t.mean_frame_ms, t.p95_frame_ms, t.effective_fps
                );
            }
        }
        Command::Report(c) => {
            let cmp = scenario::report_from_dir(&c.scenario, &c.out, &c.options(false)?)?;
            print!("{}", cmp.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
