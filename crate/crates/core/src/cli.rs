//! Command-line front end. Exit codes: 0 success, 2 usage, 3 parse, 4 runtime.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::circuit::{CircuitGraph, DeinterleaverSpec, FrequencyGrid, TuningVector};
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, ExperimentConfig, ExperimentOutput};
use crate::netlist::csv::{format_number, optical_csv, rf_csv, table_csv, write_text};
use crate::netlist::{load_experiment_config, load_netlist, preset_netlist, NetlistDocument};
use crate::rf::{LinkSpec, ModulationFormat};
use crate::transfer::{h_tunable_coupler, heater_power_from_phase, DEFAULT_P_PI_MW};
use crate::tuner::{optimize, Objective, OptimizerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

fn parse_range(s: &str) -> std::result::Result<SweepRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("expected lo:hi:step, {e}"))?;
    match nums[..] {
        [lo, hi, step] if step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite() => {
            Ok(SweepRange { lo, hi, step })
        }
        [_, _, _] => Err("need hi >= lo and step > 0".into()),
        _ => Err("expected lo:hi:step".into()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mwp-shaper", version, about = "Microwave-photonic spectral shaper simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optical response of a single building block.
    Block {
        /// waveguide, phase_shifter, coupler_3db, tunable_coupler, ring_allpass or ring_adddrop
        kind: String,
        /// Block attributes as key=value.
        params: Vec<String>,
        /// Optical offset sweep in GHz, lo:hi:step.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        sweep: Option<SweepRange>,
        /// Heater phase sweep in rad (phase blocks): writes a power/phase table.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        phase_sweep: Option<SweepRange>,
        /// Input port driven with unit field.
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optical response of a netlist (file or preset:<name>).
    Sweep {
        netlist: String,
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        sweep: SweepRange,
        /// Output port; all ports when omitted.
        #[arg(long)]
        port: Option<String>,
        /// Heater override name=phase_rad.
        #[arg(long = "heater")]
        heaters: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a preset experiment from a config file (or preset:<name>).
    Experiment {
        config: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tune heaters of a netlist against an objective.
    Optimize {
        netlist: String,
        #[arg(long, value_enum)]
        objective: ObjectiveKind,
        /// Comma-separated heater names; defaults depend on the objective.
        #[arg(long, value_delimiter = ',')]
        heaters: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_evals: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        /// Output port the objective reads.
        #[arg(long)]
        port: Option<String>,
        /// Input modulation for RF objectives.
        #[arg(long, value_enum, default_value_t = Format::Im)]
        format: Format,
        /// Notch or resonance frequency, GHz.
        #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
        at_ghz: f64,
        /// Notch reference distance, GHz.
        #[arg(long, default_value_t = 10.0)]
        window_ghz: f64,
        /// Conversion band, lo:hi:step in GHz.
        #[arg(long, value_parser = parse_range, default_value = "15:25:0.5")]
        band: SweepRange,
        /// Heater advanced by pi for the conversion objective.
        #[arg(long, default_value = "bar_ps")]
        toggle: String,
        /// De-interleaver crossover offset, GHz.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        crossover_ghz: f64,
        /// Tuned netlist destination.
        #[arg(long)]
        out: PathBuf,
        /// Summary destination (also printed).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveKind {
    DeinterleaverExtinction,
    NotchDepth,
    ConversionExtinction,
    CriticalCoupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Im,
    Pm,
    SsbUpper,
    SsbLower,
}

impl Format {
    fn modulation(self) -> ModulationFormat<f64> {
        let m = 0.1;
        match self {
            Format::Im => ModulationFormat::im(m),
            Format::Pm => ModulationFormat::pm(m),
            Format::SsbUpper => ModulationFormat::ssb_upper(m),
            Format::SsbLower => ModulationFormat::ssb_lower(m),
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => EXIT_PARSE,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn read_source(source: &str) -> Result<String> {
    match source.strip_prefix("preset:") {
        Some(name) => preset_netlist(name),
        None => fs::read_to_string(source).map_err(|e| Error::io(source, e)),
    }
}

fn parse_assignments(items: &[String]) -> Result<TuningVector<f64>> {
    let mut v = TuningVector::new();
    for item in items {
        let (k, val) = item
            .split_once('=')
            .ok_or_else(|| Error::config(format!("expected name=value, got '{item}'")))?;
        let x: f64 = val
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| Error::config(format!("'{val}' is not a finite number")))?;
        v.set(k, x);
    }
    Ok(v)
}

/// `<out>` itself for a single port, `<stem>_<port>.csv` beside it otherwise.
fn port_path(out: &Path, port: &str, single: bool) -> PathBuf {
    if single {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("response");
    out.with_file_name(format!("{stem}_{port}.csv"))
}

fn write_ports(
    graph: &CircuitGraph<f64>,
    grid: &FrequencyGrid<f64>,
    drive: &str,
    port: Option<&str>,
    out: &Path,
) -> Result<String> {
    let resp = graph.evaluate_driven(grid, &[(drive, num_complex::Complex::new(1.0, 0.0))])?;
    let ports: Vec<String> = match port {
        Some(p) => {
            resp.port(p)?;
            vec![p.to_string()]
        }
        None => resp.ports.iter().map(|(n, _)| n.clone()).collect(),
    };
    let mut log = String::new();
    for p in &ports {
        let path = port_path(out, p, ports.len() == 1);
        write_text(&path, &optical_csv(&resp, p)?)?;
        let _ = writeln!(log, "wrote {}", path.display());
    }
    Ok(log)
}

fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::Block {
            kind,
            params,
            sweep,
            phase_sweep,
            input,
            out,
        } => cmd_block(&kind, &params, sweep, phase_sweep, input.as_deref(), &out),
        Command::Sweep {
            netlist,
            sweep,
            port,
            heaters,
            out,
        } => {
            let (_, graph) = load_netlist(&read_source(&netlist)?)?;
            let graph = graph.with_heaters(&parse_assignments(&heaters)?)?;
            let grid = FrequencyGrid::sweep(sweep.lo, sweep.hi, sweep.step)?;
            let drive = graph
                .inputs()
                .first()
                .map(|(n, _)| n.clone())
                .ok_or_else(|| Error::config("netlist declares no input"))?;
            write_ports(&graph, &grid, &drive, port.as_deref(), &out)
        }
        Command::Experiment {
            config,
            out_dir,
            seed,
        } => {
            let mut cfg = match config.strip_prefix("preset:") {
                Some(name) => ExperimentConfig::new(name),
                None => {
                    let text = fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
                    load_experiment_config(&text).map_err(Error::Parse)?
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out_dir
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::config("no output directory (--out-dir or 'output' key)"))?;
            let out = run_experiment(&cfg)?;
            write_experiment(&out, &dir)?;
            Ok(summary_text(&out))
        }
        Command::Optimize {
            netlist,
            objective,
            heaters,
            seed,
            max_evals,
            restarts,
            port,
            format,
            at_ghz,
            window_ghz,
            band,
            toggle,
            crossover_ghz,
            out,
            summary,
        } => {
            let (doc, graph) = load_netlist(&read_source(&netlist)?)?;
            let port = |default: &str| port.clone().unwrap_or_else(|| default.to_string());
            let (objective, default_heaters): (Objective<f64>, Vec<String>) = match objective {
                ObjectiveKind::DeinterleaverExtinction => (
                    Objective::DeinterleaverExtinction {
                        spec: DeinterleaverSpec::default().with_crossover(crossover_ghz),
                        step_ghz: 0.25,
                    },
                    DeinterleaverSpec::<f64>::tuning_heaters(),
                ),
                ObjectiveKind::NotchDepth => (
                    Objective::NotchDepth {
                        link: LinkSpec::new(format.modulation(), port("detector")),
                        notch_ghz: at_ghz,
                        reference_ghz: vec![at_ghz - window_ghz, at_ghz + window_ghz],
                    },
                    vec!["bar_ps".into(), "bar_tc".into()],
                ),
                ObjectiveKind::ConversionExtinction => (
                    Objective::ConversionExtinction {
                        link: LinkSpec::new(format.modulation(), port("detector")),
                        freqs_ghz: crate::circuit::sweep_points(band.lo, band.hi, band.step)?,
                        toggle_heater: toggle.clone(),
                    },
                    vec!["bar_ps".into(), "bar_tc".into()],
                ),
                ObjectiveKind::CriticalCoupling => (
                    Objective::CriticalCoupling {
                        port: port("out"),
                        resonance_offset_ghz: at_ghz,
                    },
                    Vec::new(),
                ),
            };
            let names = if !heaters.is_empty() {
                heaters
            } else if default_heaters.iter().all(|h| graph.heater(h).is_some()) {
                default_heaters
            } else {
                Vec::new()
            };
            let config = OptimizerConfig {
                seed,
                max_evals,
                restarts,
                ..OptimizerConfig::default()
            };
            let result = optimize(&graph, &names, &objective, &config)?;
            let tuned = result.apply(&graph)?;
            let mut tuned_doc = NetlistDocument::from_graph(&tuned);
            tuned_doc.params = doc.params.clone();
            write_text(&out, &tuned_doc.to_string())?;

            let mut text = String::new();
            let _ = writeln!(text, "objective {}", objective.name());
            let _ = writeln!(text, "best_value_db {}", result.best_value);
            let _ = writeln!(text, "converged {}", result.converged);
            let _ = writeln!(text, "evals {}", result.evals);
            let _ = writeln!(text, "restarts {}", result.restarts.len());
            let _ = writeln!(text, "seed {seed}");
            let p_pi = doc.p_pi_mw();
            for (name, phase) in result.best.iter() {
                let _ = writeln!(text, "heater.{name} {phase}");
                let _ = writeln!(text, "heater_mw.{name} {}", heater_power_from_phase(phase, p_pi)?);
            }
            if let Some(path) = summary {
                write_text(&path, &text)?;
            }
            Ok(text)
        }
    }
}

fn cmd_block(
    kind: &str,
    params: &[String],
    sweep: Option<SweepRange>,
    phase_sweep: Option<SweepRange>,
    input: Option<&str>,
    out: &Path,
) -> Result<String> {
    let kind: crate::circuit::BlockKind = kind.parse()?;
    let mut text = format!("block b {kind} {}\n", params.join(" "));
    let inputs = kind.inputs();
    let drive = input.unwrap_or(inputs[0]);
    if !inputs.contains(&drive) {
        return Err(Error::config(format!(
            "{kind} has no input port '{drive}' (inputs: {})",
            inputs.join(", ")
        )));
    }
    for p in inputs {
        let _ = writeln!(text, "input {p} b.{p}");
    }
    for p in kind.outputs() {
        let _ = writeln!(text, "output {p} b.{p}");
    }
    let (_, graph) = load_netlist(&text)?;
    match (sweep, phase_sweep) {
        (Some(s), None) => {
            let grid = FrequencyGrid::sweep(s.lo, s.hi, s.step)?;
            write_ports(&graph, &grid, drive, None, out)
        }
        (None, Some(s)) => {
            let mut csv = String::new();
            match kind {
                crate::circuit::BlockKind::TunableCoupler => {
                    csv.push_str("phase_rad,heater_power_mw,bar_power,bar_phase_rad,cross_power,cross_phase_rad\n");
                    for phi in crate::circuit::sweep_points(s.lo, s.hi, s.step)? {
                        let m = h_tunable_coupler(phi)?;
                        let (b, c) = (m.bar(), m.cross());
                        let row = [
                            phi,
                            heater_power_from_phase(phi, DEFAULT_P_PI_MW)?,
                            b.norm_sqr(),
                            if b.norm() > 0.0 { b.arg() } else { 0.0 },
                            c.norm_sqr(),
                            if c.norm() > 0.0 { c.arg() } else { 0.0 },
                        ];
                        let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
                        csv.push_str(&cells.join(","));
                        csv.push('\n');
                    }
                }
                crate::circuit::BlockKind::PhaseShifter => {
                    csv.push_str("phase_rad,heater_power_mw,re,im\n");
                    for phi in crate::circuit::sweep_points(s.lo, s.hi, s.step)? {
                        let h = crate::transfer::h_phase_shifter(phi)?;
                        let row = [phi, heater_power_from_phase(phi, DEFAULT_P_PI_MW)?, h.re, h.im];
                        let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
                        csv.push_str(&cells.join(","));
                        csv.push('\n');
                    }
                }
                _ => return Err(Error::config("--phase-sweep applies to phase_shifter and tunable_coupler")),
            }
            write_text(out, &csv)?;
            Ok(format!("wrote {}\n", out.display()))
        }
        _ => Err(Error::config("give exactly one of --sweep or --phase-sweep")),
    }
}

/// Writes `<trace>.csv`, `<table>.csv` and `summary.txt` into `dir`.
pub fn write_experiment(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    for (name, trace) in &out.traces {
        write_text(&dir.join(format!("{name}.csv")), &rf_csv(trace))?;
    }
    for t in &out.tables {
        write_text(&dir.join(format!("{}.csv", t.name)), &table_csv(t))?;
    }
    write_text(&dir.join("summary.txt"), &summary_text(out))
}

pub fn summary_text(out: &ExperimentOutput) -> String {
    let mut s = format!("experiment {}\n", out.name);
    for (k, v) in &out.summary {
        let _ = writeln!(s, "{k} {v}");
    }
    s
}
