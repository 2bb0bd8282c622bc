use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use perchsim::log::{self, EpisodeSummary};
use perchsim::rigid_body_sim::{run_episode, EpisodeError, GRAVITY};
use perchsim::rotor_allocation::{AllocationError, WrenchAllocator, WrenchVector};
use perchsim::scenario::{ScenarioConfig, ScenarioError};
use perchsim::tendon_hand::{self, HandError, HandParams, DOUBLE_CONTACT_ALPHA};
use perchsim::{EpisodeLog, RotorGeometry};

/// Exit codes are a stable contract for scripts.
mod exit {
    pub const CONFIG: u8 = 1;
    pub const SATURATION: u8 = 2;
    pub const RANK: u8 = 3;
    pub const DIVERGENCE: u8 = 4;
}

#[derive(Parser, Debug)]
#[command(
    name = "perchsim",
    version,
    about = "Perching hand and tilt-rotor analyses and episodes"
)]
struct Cli {
    /// Directory searched for `<name>.json` scenarios before the bundled ones.
    #[arg(long, global = true, env = "PERCHSIM_CONFIG_DIR")]
    config_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file path or scenario name.
    #[arg(long)]
    config: Option<String>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grip capacity over opening angles; prints the single/double pair.
    GripCapacity {
        #[command(flatten)]
        common: Common,
        /// Number of opening angles spread over [0, π/10].
        #[arg(long, default_value_t = 11)]
        grid: usize,
    },
    /// Allocate a body wrench to per-rotor thrust and gimbal angle.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// fx,fy,fz,tx,ty,tz in N and N·m; defaults to the hover wrench.
        #[arg(long, allow_hyphen_values = true)]
        wrench: Option<String>,
    },
    /// Run a scenario and write its log and summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run N episodes with the payload stepped by the scenario increment.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Close the hand on three contact angles (`none` for a free finger).
    HandClose {
        #[command(flatten)]
        common: Common,
        /// Per-finger contact angles in rad; defaults to the scenario beam.
        #[arg(long)]
        profile: Option<String>,
        /// Actuator tendon travel (m); defaults to full closure.
        #[arg(long)]
        travel: Option<f64>,
    },
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: exit::CONFIG,
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::config(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::config(format!("csv error: {e}"))
    }
}

impl From<HandError> for CliError {
    fn from(e: HandError) -> Self {
        let code = match e {
            HandError::PlateSaturation { .. } => exit::SATURATION,
            _ => exit::CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<AllocationError> for CliError {
    fn from(e: AllocationError) -> Self {
        let code = match e {
            AllocationError::RankDeficient { .. } => exit::RANK,
            _ => exit::CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EpisodeError> for CliError {
    fn from(e: EpisodeError) -> Self {
        match e {
            EpisodeError::Allocation(a) => a.into(),
            EpisodeError::Hand(h) => h.into(),
            other => Self::config(other.to_string()),
        }
    }
}

fn load(common: &Common, config_dir: Option<&Path>) -> Result<Option<ScenarioConfig>, CliError> {
    common
        .config
        .as_deref()
        .map(|name_or_path| ScenarioConfig::resolve(name_or_path, config_dir))
        .transpose()
        .map_err(Into::into)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::config(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_list(text: &str, expected: usize, what: &str) -> Result<Vec<Option<f64>>, CliError> {
    let items: Vec<&str> = text.split(',').map(str::trim).collect();
    if items.len() != expected {
        return Err(CliError::config(format!(
            "{what} needs {expected} comma-separated values, got {}",
            items.len()
        )));
    }
    items
        .iter()
        .map(|s| match s.to_ascii_lowercase().as_str() {
            "none" | "-" => Ok(None),
            _ => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CliError::config(format!("bad number `{s}` in {what}"))),
        })
        .collect()
}

fn grip_capacity(common: &Common, grid: usize, dir: Option<&Path>) -> Result<(), CliError> {
    let hand = load(common, dir)?.map_or_else(HandParams::default, |c| c.hand);
    hand.validate()?;
    let rows = tendon_hand::capacity_curve(&hand, &tendon_hand::default_alpha_grid(grid))?;
    let single = tendon_hand::max_load_single(&hand, 0.0)?;
    let double = tendon_hand::max_load_double(&hand, DOUBLE_CONTACT_ALPHA)?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("grip_capacity.csv"));
    log::write_capacity_csv(&rows, output(Some(&out))?)?;
    println!("{},{}", log::fmt_sig(single), log::fmt_sig(double));
    Ok(())
}

fn allocate(common: &Common, wrench: Option<&str>, dir: Option<&Path>) -> Result<(), CliError> {
    let config = load(common, dir)?;
    let (geometry, mass) = match &config {
        Some(c) => (c.rotors.geometry()?, c.inertial.mass),
        None => (
            RotorGeometry::default(),
            perchsim::InertialParams::default().mass,
        ),
    };
    let wrench = match wrench {
        Some(text) => {
            let v: Vec<f64> = parse_list(text, 6, "wrench")?
                .into_iter()
                .map(|x| x.ok_or_else(|| CliError::config("wrench entries must be numbers")))
                .collect::<Result<_, _>>()?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::config("wrench entries must be finite"));
            }
            WrenchVector::from_vector(&nalgebra_vector(&v))
        }
        None => {
            WrenchVector::from_vector(&nalgebra_vector(&[0.0, 0.0, mass * GRAVITY, 0.0, 0.0, 0.0]))
        }
    };
    let allocation = WrenchAllocator::new(geometry)?.allocate(&wrench)?;
    log::write_allocation_csv(&allocation.command, output(common.out.as_deref())?)?;
    if allocation.saturated {
        return Err(CliError {
            code: exit::SATURATION,
            message: "requested wrench saturates at least one rotor".into(),
        });
    }
    Ok(())
}

fn nalgebra_vector(v: &[f64]) -> perchsim::nalgebra::Vector6<f64> {
    perchsim::nalgebra::Vector6::from_column_slice(v)
}

fn hand_close(
    common: &Common,
    profile: Option<&str>,
    travel: Option<f64>,
    dir: Option<&Path>,
) -> Result<(), CliError> {
    let config = load(common, dir)?;
    let hand = config.as_ref().map_or_else(HandParams::default, |c| c.hand);
    hand.validate()?;
    let profile: [Option<f64>; 3] = match profile {
        Some(text) => {
            let v = parse_list(text, 3, "profile")?;
            [v[0], v[1], v[2]]
        }
        None => {
            let angle = match &config {
                Some(c) => c.finger_contact_angle()?,
                None => tendon_hand::contact_angle_for_diameter(&hand, 2.0 * hand.beam_radius)?,
            };
            [Some(angle); 3]
        }
    };
    let travel = travel.unwrap_or_else(|| tendon_hand::full_closure_travel(&hand));
    let result = tendon_hand::close_on_profile(&hand, profile, travel)?;
    log::write_hand_close_csv(&result, output(common.out.as_deref())?)?;
    Ok(())
}

fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn indexed_path(out: &Path, k: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("episode");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}_{k}.{ext}"))
}

fn write_episode(log: &EpisodeLog, out: Option<&Path>) -> Result<(), CliError> {
    log.write_csv(output(out)?)?;
    match out {
        Some(p) => std::fs::write(summary_path(p), log.summary_json() + "\n")?,
        None => eprintln!("{}", log.summary_json()),
    }
    Ok(())
}

fn simulate(common: &Common, sweep: Option<usize>, dir: Option<&Path>) -> Result<(), CliError> {
    let config = load(common, dir)?.ok_or_else(|| CliError::config("simulate needs --config"))?;
    let Some(n) = sweep else {
        return match run_episode(&config) {
            Ok(log) => write_episode(&log, common.out.as_deref()),
            Err(EpisodeError::Diverged { time, reason, log }) => {
                write_episode(&log, common.out.as_deref())?;
                Err(CliError {
                    code: exit::DIVERGENCE,
                    message: format!("episode diverged at t = {time} s: {reason}"),
                })
            }
            Err(e) => Err(e.into()),
        };
    };

    let results: Vec<Result<EpisodeLog, EpisodeError>> = (0..n)
        .into_par_iter()
        .map(|k| run_episode(&config.with_sweep_payload(k)))
        .collect();
    let mut summaries: Vec<EpisodeSummary> = Vec::with_capacity(n);
    let mut failure: Option<CliError> = None;
    for (k, result) in results.into_iter().enumerate() {
        let log = match result {
            Ok(log) => log,
            Err(EpisodeError::Diverged { time, reason, log }) => {
                failure.get_or_insert(CliError {
                    code: exit::DIVERGENCE,
                    message: format!("sweep episode {k} diverged at t = {time} s: {reason}"),
                });
                *log
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(out) = common.out.as_deref() {
            log.write_csv(output(Some(&indexed_path(out, k)))?)?;
        }
        summaries.push(log.summary);
    }
    let doc = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
    match common.out.as_deref() {
        Some(out) => std::fs::write(summary_path(out), doc + "\n")?,
        None => println!("{doc}"),
    }
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let dir = cli.config_dir.as_deref();
    let result = match &cli.command {
        Command::GripCapacity { common, grid } => grip_capacity(common, *grid, dir),
        Command::Allocate { common, wrench } => allocate(common, wrench.as_deref(), dir),
        Command::Simulate { common, sweep } => simulate(common, *sweep, dir),
        Command::HandClose {
            common,
            profile,
            travel,
        } => hand_close(common, profile.as_deref(), *travel, dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("perchsim: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
