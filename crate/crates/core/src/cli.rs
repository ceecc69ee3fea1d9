//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::report::fmt6;
use crate::servo::{
    bus_transaction, decode_frame, parse_hex, sim_bus_step, to_hex, ServoFrame, SimBus, REG_PRESENT_POSITION,
};
use crate::tasks::{
    compare_conditions, comparison_json, events_jsonl, report_csv, report_json, report_svg, run_rotation_task,
    run_stacking_task, trajectory_csv, ReportFormat, TaskKind, TaskReport,
};
use crate::transmission::{wrist_command, ServoRole};
use crate::wrist::{palm_workspace, workspace_csv, workspace_svg, WristState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_ABORT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "softwrist",
    version,
    about = "Wrist kinematics, arm task simulation and servo bus tools",
    after_help = "Exit codes: 0 success, 2 usage or configuration error, 3 partial task success, 4 task aborted."
)]
pub struct Cli {
    /// Run configuration file (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Extra output format written next to the default files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Random seed for the IK seed jitter; overrides the config file.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Svg => ReportFormat::Svg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Rotate,
    Stack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the palm-centre workspace over the wrist range of motion.
    Workspace {
        /// Grid step in degrees, in (0, 10].
        #[arg(long, value_name = "DEG", default_value_t = 5.0)]
        step_deg: f64,
    },
    /// Run the disc rotation or cube stacking task.
    Task {
        /// Which task to run.
        #[arg(value_enum)]
        kind: TaskArg,
        /// Whether the wrist joints may move.
        #[arg(long, value_enum)]
        wrist: OnOff,
    },
    /// Compare two task reports (JSON written by `task`).
    Compare {
        /// Report of the wrist-on run.
        report_a: PathBuf,
        /// Report of the wrist-off run.
        report_b: PathBuf,
    },
    /// Replay a script against four simulated servos.
    ///
    /// Each script line is a hex frame such as `FF FF 01 02 01 FB` or one of
    /// `ping ID`, `goal ID TICKS`, `read ID`, `step SECONDS`,
    /// `wrist DEVIATION_DEG FLEXION_DEG`. Blank lines and `#` comments are skipped.
    ServoSim {
        /// Script file.
        script: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::usage(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// printing to stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::shipped(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    match &cli.command {
        Command::Workspace { step_deg } => cmd_workspace(*step_deg, cli.format, &cli.out),
        Command::Task { kind, wrist } => {
            let cfg = load_config(cli)?;
            let kind = match kind {
                TaskArg::Rotate => TaskKind::Rotation,
                TaskArg::Stack => TaskKind::Stacking,
            };
            cmd_task(kind, *wrist == OnOff::On, &cfg, cli.format, &cli.out)
        }
        Command::Compare { report_a, report_b } => cmd_compare(report_a, report_b, &cli.out),
        Command::ServoSim { script } => {
            let cfg = load_config(cli)?;
            cmd_servo_sim(script, &cfg, &cli.out)
        }
    }
}

fn cmd_workspace(step_deg: f64, format: Format, out: &Path) -> Result<i32, Failure> {
    if !(step_deg > 0.0 && step_deg <= 10.0) {
        return Err(Failure::usage(format!("--step-deg {step_deg} must be in (0, 10]")));
    }
    let points = palm_workspace(step_deg)?;
    write(out, "workspace.csv", &workspace_csv(&points))?;
    match format {
        Format::Svg => write(out, "workspace.svg", &workspace_svg(&points))?,
        Format::Json => {
            let rows: Vec<String> = points
                .iter()
                .map(|p| {
                    format!(
                        "  [{}, {}, {}, {}, {}]",
                        fmt6(p.theta1_deg),
                        fmt6(p.theta2_deg),
                        fmt6(p.x),
                        fmt6(p.y),
                        fmt6(p.z)
                    )
                })
                .collect();
            write(out, "workspace.json", &format!("[\n{}\n]\n", rows.join(",\n")))?;
        }
        Format::Csv => {}
    }
    let reach = points.iter().map(|p| (p.x * p.x + p.y * p.y + p.z * p.z).sqrt()).fold(0.0, f64::max);
    let z_min = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let z_max = points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    println!("points {}", points.len());
    println!("max_reach_mm {}", fmt6(reach));
    println!("z_min_mm {}", fmt6(z_min));
    println!("z_max_mm {}", fmt6(z_max));
    Ok(EXIT_OK)
}

fn cmd_task(kind: TaskKind, wrist: bool, cfg: &RunConfig, format: Format, out: &Path) -> Result<i32, Failure> {
    let setup = cfg.task_setup(kind)?;
    let report = match kind {
        TaskKind::Rotation => run_rotation_task(wrist, &setup),
        TaskKind::Stacking => run_stacking_task(wrist, &setup),
    }
    .map_err(|e| Failure {
        code: EXIT_ABORT,
        message: e.to_string(),
    })?;
    let stem = format!(
        "{}_{}",
        match kind {
            TaskKind::Rotation => "rotate",
            TaskKind::Stacking => "stack",
        },
        if wrist { "on" } else { "off" }
    );
    write(out, &format!("{stem}.json"), &report_json(&report)?)?;
    write(out, &format!("{stem}_events.jsonl"), &events_jsonl(&report)?)?;
    write(out, &format!("{stem}_trajectory.csv"), &trajectory_csv(&report))?;
    match ReportFormat::from(format) {
        ReportFormat::Csv => write(out, &format!("{stem}.csv"), &report_csv(&report))?,
        ReportFormat::Svg => write(out, &format!("{stem}.svg"), &report_svg(&report))?,
        ReportFormat::Json => {}
    }
    print_task_summary(&report);
    Ok(if report.aborted {
        EXIT_ABORT
    } else if report.success {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

fn print_task_summary(r: &TaskReport) {
    println!("task {} wrist {}", r.kind.as_str(), if r.wrist_enabled { "on" } else { "off" });
    println!("config_changes {}", r.config_change_count);
    for e in &r.events {
        match e.joint_index {
            Some(j) => println!("  step {} {} joint {} value {}", e.step, e.cause, j, fmt6(e.value)),
            None => println!("  step {} {} value {}", e.step, e.cause, fmt6(e.value)),
        }
    }
    if !r.cubes.is_empty() {
        println!("reoriented {}/{}", r.reoriented_count(), r.cubes.len());
        println!("stacked {}/{}", r.stacked_count(), r.cubes.len());
    }
    if let Some(a) = r.rotation_achieved_deg {
        println!("rotation_achieved_deg {}", fmt6(a));
    }
    println!("time_proxy_s {}", fmt6(r.time_proxy_s));
    println!("success {}", r.success);
}

fn read_report(path: &Path) -> Result<TaskReport, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(TaskReport::from_json(&text, &path.display().to_string())?)
}

fn cmd_compare(a: &Path, b: &Path, out: &Path) -> Result<i32, Failure> {
    let ra = read_report(a)?;
    let rb = read_report(b)?;
    let c = compare_conditions(&ra, &rb)?;
    write(out, "compare.json", &comparison_json(&c)?)?;
    let opt = |v: Option<f64>| v.map_or("none".to_string(), fmt6);
    println!("task {}", c.kind.as_str());
    println!("config_change_diff {}", c.config_change_diff);
    println!("joint4_max_ratio {}", opt(c.joint4_max_ratio));
    println!("time_proxy_ratio {}", opt(c.time_proxy_ratio));
    println!("time_proxy_diff_s {}", fmt6(c.time_proxy_diff_s));
    Ok(EXIT_OK)
}

fn script_frame(words: &[&str], cfg: &RunConfig) -> Result<Option<Vec<ServoFrame>>, String> {
    let num = |i: usize| -> Result<f64, String> {
        let w = words.get(i).ok_or_else(|| format!("{} needs more arguments", words[0]))?;
        w.parse::<f64>().map_err(|_| format!("bad number '{w}'"))
    };
    let id = |i: usize| -> Result<u8, String> {
        let w = words.get(i).ok_or_else(|| format!("{} needs a servo id", words[0]))?;
        w.parse::<u8>().map_err(|_| format!("bad servo id '{w}'"))
    };
    let frames = match words[0] {
        "ping" => vec![ServoFrame::ping(id(1)?)],
        "read" => vec![ServoFrame::read(id(1)?, REG_PRESENT_POSITION, 2)],
        "goal" => {
            let t = num(2)?;
            if !(0.0..=4095.0).contains(&t) || t.fract() != 0.0 {
                return Err(format!("goal {t} is not a tick in [0, 4095]"));
            }
            vec![ServoFrame::write_goal(id(1)?, t as u16)]
        }
        "wrist" => {
            let ticks = wrist_command(&WristState::from_degrees(num(1)?, num(2)?), &cfg.calibration)
                .map_err(|e| e.to_string())?;
            let dev = cfg.calibration.get(ServoRole::WristDev).id;
            let flex = cfg.calibration.get(ServoRole::WristFlex).id;
            let frame = ServoFrame::sync_write_goals(&[(dev, ticks.deviation as u16), (flex, ticks.flexion as u16)])
                .map_err(|e| e.to_string())?;
            vec![frame]
        }
        _ => return Ok(None),
    };
    Ok(Some(frames))
}

fn cmd_servo_sim(script: &Path, cfg: &RunConfig, out: &Path) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(script).map_err(|e| Failure::usage(format!("{}: {e}", script.display())))?;
    let center = cfg.calibration.get(ServoRole::WristDev).center_ticks.clamp(0, 4095) as u16;
    let mut bus = SimBus::four(center);
    let mut transcript = String::new();
    let mut replies = 0usize;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let fail = |msg: String| Failure::usage(format!("{}:{line_no}: {msg}", script.display()));
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let frames = if words[0] == "step" {
            let dt: f64 = words
                .get(1)
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| fail("step needs a duration in seconds".into()))?;
            sim_bus_step(&mut bus, dt).map_err(fail)?;
            transcript.push_str(&format!("# step {}\n", fmt6(dt)));
            continue;
        } else if let Some(frames) = script_frame(&words, cfg).map_err(fail)? {
            frames
        } else {
            let bytes = parse_hex(line).map_err(|e| fail(format!("hex_error: {e}")))?;
            vec![decode_frame(&bytes).map_err(|e| fail(e.to_string()))?]
        };
        for frame in frames {
            transcript.push_str(&format!("> {}\n", to_hex(&frame.encode())));
            if let Some(reply) = bus_transaction(&mut bus, &frame) {
                transcript.push_str(&format!("< {}\n", to_hex(&reply.encode())));
                replies += 1;
            }
        }
    }
    write(out, "transcript.txt", &transcript)?;
    println!("replies {replies}");
    for s in &bus.servos {
        println!("servo {} {} position {}", s.id, s.role, s.position());
    }
    Ok(EXIT_OK)
}
