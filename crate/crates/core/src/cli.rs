//! `lbvt` command line: config validation, single solves, sweeps and
//! calibration. Angles are degrees on the command line and in config files.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{self, Column, SweepTable};
use crate::chain;
use crate::config_file::{self, Provenance};
use crate::equilibrium::{solve_equilibrium, triggering_force};
use crate::error::{Error, Result};
use crate::linkage;
use crate::model::{per_joint_stiffness, MechanismConfig};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for validation and solver failures.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for malformed invocations.
pub const EXIT_USAGE: i32 = 2;

const TRIGGER_SWEEP_TO: f64 = 50.0;
const FORCE_SWEEP_TO: f64 = 200.0;
const RATIO_SWEEP_TO: f64 = 300.0;

#[derive(Debug, Parser)]
#[command(
    name = "lbvt",
    version,
    about = "Quasi-static analysis of an LBVT knee linkage",
    long_about = "Quasi-static analysis of an LBVT knee linkage.\n\nAngles are in degrees (deg), \
                  forces in newtons (N), lengths in metres (m) and torques in N·m. Set \
                  LBVT_THREADS to cap sweep parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a config file; prints nothing when it is valid
    Validate {
        /// Config file (JSON, angles in deg)
        config: PathBuf,
        #[command(flatten)]
        plot: PlotArgs,
    },
    /// Solve the chain equilibrium at one angle and force
    Solve {
        /// Config file (JSON, angles in deg)
        config: PathBuf,
        /// KFE angle (deg, negative in flexion)
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// Actuator force F_cyl (N)
        #[arg(long)]
        force: f64,
        #[command(flatten)]
        plot: PlotArgs,
    },
    /// KFE torque with and without the LBVT chain across the angle range
    SweepAngle {
        /// Config file (JSON, angles in deg)
        config: PathBuf,
        /// Actuator force F_cyl (N)
        #[arg(long)]
        force: f64,
        /// First angle (deg) [default: theta_min of the config]
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        /// Last angle (deg) [default: theta_max of the config]
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        /// Angle step (deg)
        #[arg(long, default_value_t = 10.0)]
        step: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Chain diameter and l4 against actuator force at one angle
    Trigger {
        #[command(flatten)]
        sweep: ForceSweepArgs,
    },
    /// KFE torque with and without the LBVT chain against actuator force
    SweepForce {
        #[command(flatten)]
        sweep: ForceSweepArgs,
    },
    /// Transmission ratio T/F_cyl against actuator force, with the ratio step
    Ratio {
        #[command(flatten)]
        sweep: ForceSweepArgs,
    },
    /// Fit preload and opening limits to a trigger force and ratio step
    Calibrate {
        /// Base config file (JSON, angles in deg)
        config: PathBuf,
        /// Target triggering force (N)
        #[arg(long)]
        trigger: f64,
        /// Target ratio step J_open/J_closed - 1 (fraction)
        #[arg(long = "ratio-step")]
        ratio_step: f64,
        /// KFE angle at which both targets apply (deg)
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// Calibrated config file to write (JSON)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        plot: PlotArgs,
    },
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Also write an SVG plot to this path
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Comma-separated y columns for the plot [default: per subcommand]
    #[arg(long, value_delimiter = ',')]
    plot_columns: Vec<String>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// CSV output path, `-` for standard output
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    plot: PlotArgs,
}

#[derive(Debug, Args)]
struct ForceSweepArgs {
    /// Config file (JSON, angles in deg)
    config: PathBuf,
    /// KFE angle (deg, negative in flexion)
    #[arg(long, allow_negative_numbers = true)]
    theta: f64,
    /// First force (N)
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    /// Last force (N) [default: 50 for trigger, 200 for sweep-force, 300 for ratio]
    #[arg(long)]
    to: Option<f64>,
    /// Force step (N)
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    #[command(flatten)]
    output: OutputArgs,
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code, writing data to `out` and diagnostics to `err`.
pub fn run_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let name = subcommand_name(&cli.command);
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "lbvt {name}: {e}");
            if let Error::InvalidConfig(v) = &e {
                for violation in v {
                    let _ = writeln!(err, "  {violation}");
                }
            }
            match e {
                Error::Usage(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Solve { .. } => "solve",
        Command::SweepAngle { .. } => "sweep-angle",
        Command::Trigger { .. } => "trigger",
        Command::SweepForce { .. } => "sweep-force",
        Command::Ratio { .. } => "ratio",
        Command::Calibrate { .. } => "calibrate",
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    let stdout = Path::new("<stdout>");
    match command {
        Command::Validate { config, plot } => {
            let c = config_file::load_config(&config)?;
            if let Some(path) = &plot.plot {
                let table = jacobian_table(&c)?;
                write_plot(&table, &plot, path)?;
            }
        }
        Command::Solve {
            config,
            theta,
            force,
            plot,
        } => {
            let c = config_file::load_config(&config)?;
            let r = solve_equilibrium(&c, theta.to_radians(), force)?;
            out.write_all(solve_report(&c, &r).as_bytes()).map_err(io_err(stdout))?;
            if let Some(path) = &plot.plot {
                write_plot(&joint_table(&c, &r), &plot, path)?;
            }
        }
        Command::SweepAngle {
            config,
            force,
            from,
            to,
            step,
            output,
        } => {
            let c = config_file::load_config(&config)?;
            let from = from.map_or(c.theta_min, f64::to_radians);
            let to = to.map_or(c.theta_max, f64::to_radians);
            let table = analysis::sweep_torque_vs_angle(&c, force, from, to, step.to_radians())?;
            write_outputs(&table, &output, out)?;
        }
        Command::Trigger { sweep } => {
            let (c, theta) = sweep.load()?;
            let to = sweep.to.unwrap_or(TRIGGER_SWEEP_TO);
            let table = analysis::sweep_trigger(&c, theta, sweep.from, to, sweep.step)?;
            write_outputs(&table, &sweep.output, out)?;
        }
        Command::SweepForce { sweep } => {
            let (c, theta) = sweep.load()?;
            let to = sweep.to.unwrap_or(FORCE_SWEEP_TO);
            let table = analysis::sweep_torque_vs_force(&c, theta, sweep.from, to, sweep.step)?;
            write_outputs(&table, &sweep.output, out)?;
        }
        Command::Ratio { sweep } => {
            let (c, theta) = sweep.load()?;
            let to = sweep.to.unwrap_or(RATIO_SWEEP_TO);
            let table = analysis::sweep_ratio_vs_force(&c, theta, sweep.from, to, sweep.step)?;
            write_outputs(&table, &sweep.output, out)?;
            if !is_stdout(&sweep.output.out) {
                let line = match table.ratio_step {
                    Some(s) => format!("ratio_step {}\n", analysis::format_value(s)),
                    None => "ratio_step none (no record reached every end stop)\n".to_string(),
                };
                out.write_all(line.as_bytes()).map_err(io_err(stdout))?;
            }
        }
        Command::Calibrate {
            config,
            trigger,
            ratio_step,
            theta,
            out: target,
            plot,
        } => {
            let base = config_file::load_config(&config)?;
            let calibrated = analysis::calibrate(&base, trigger, ratio_step, theta.to_radians())?;
            let (achieved_trigger, achieved_step) = analysis::measure(&calibrated, theta.to_radians())?;
            let provenance = Provenance {
                generated_by: "lbvt calibrate".into(),
                note: "alpha_preload fitted to the trigger force, joint_open_limit scaled uniformly \
                       to the ratio step; other fields copied from the base config"
                    .into(),
                theta_deg: theta,
                target_trigger_n: trigger,
                trigger_tolerance_n: analysis::TRIGGER_TOLERANCE,
                target_ratio_step: ratio_step,
                ratio_step_tolerance: analysis::RATIO_STEP_TOLERANCE,
                achieved_trigger_n: round9(achieved_trigger),
                achieved_ratio_step: round9(achieved_step),
            };
            config_file::save_config(&calibrated, Some(provenance), &target)?;
            let summary = format!(
                "alpha_preload {} deg\njoint_open_limit {} deg\ntrigger {} N\nratio_step {}\n",
                analysis::format_value(calibrated.alpha_preload.to_degrees()),
                analysis::format_value(calibrated.joint_open_limit[0].to_degrees()),
                analysis::format_value(achieved_trigger),
                analysis::format_value(achieved_step),
            );
            out.write_all(summary.as_bytes()).map_err(io_err(stdout))?;
            if let Some(path) = &plot.plot {
                let table = analysis::sweep_ratio_vs_force(&calibrated, theta.to_radians(), 0.0, RATIO_SWEEP_TO, 0.5)?;
                write_plot(&table, &plot, path)?;
            }
        }
    }
    Ok(())
}

impl ForceSweepArgs {
    fn load(&self) -> Result<(MechanismConfig, f64)> {
        Ok((config_file::load_config(&self.config)?, self.theta.to_radians()))
    }
}

fn round9(v: f64) -> f64 {
    analysis::format_value(v).parse().unwrap_or(v)
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn write_outputs(table: &SweepTable, output: &OutputArgs, out: &mut dyn Write) -> Result<()> {
    if is_stdout(&output.out) {
        out.write_all(analysis::csv_string(table).as_bytes())
            .map_err(io_err(Path::new("<stdout>")))?;
    } else {
        analysis::emit_csv(table, &output.out)?;
    }
    if let Some(path) = &output.plot.plot {
        write_plot(table, &output.plot, path)?;
    }
    Ok(())
}

fn write_plot(table: &SweepTable, args: &PlotArgs, path: &Path) -> Result<()> {
    let ys: Vec<&str> = if args.plot_columns.is_empty() {
        table.y_columns.iter().map(String::as_str).collect()
    } else {
        args.plot_columns.iter().map(String::as_str).collect()
    };
    analysis::emit_svg_plot(table, &table.x_column, &ys, path)?;
    Ok(())
}

fn solve_report(config: &MechanismConfig, r: &crate::model::EquilibriumResult) -> String {
    let f = analysis::format_value;
    let threshold = per_joint_stiffness(config) * config.alpha_preload;
    let mut s = String::new();
    s.push_str(&format!("theta {} deg\n", f(r.theta.to_degrees())));
    s.push_str(&format!("force {} N\n", f(r.input_force)));
    s.push_str(&format!("regimes {}\n", r.regime_summary()));
    s.push_str(&format!("kfe_torque {} N·m\n", f(r.kfe_torque)));
    s.push_str(&format!("transmission_ratio {} m\n", f(r.transmission_ratio)));
    s.push_str(&format!("tip_force {} N\n", f(r.tip_force)));
    s.push_str(&format!("coupler_force {} N\n", f(r.coupler_force)));
    s.push_str(&format!("l4 {} m\n", f(r.chain.l4)));
    s.push_str(&format!("diameter {} m\n", f(r.chain.diameter)));
    s.push_str(&format!("actuator_length {} m\n", f(r.linkage.actuator_length)));
    s.push_str(&format!("preload_threshold {} N·m\n", f(threshold)));
    s.push_str("joint regime deflection_deg torque_nm\n");
    for (i, ((d, g), t)) in r
        .chain
        .deflection
        .iter()
        .zip(&r.chain.regime)
        .zip(&r.joint_torques)
        .enumerate()
    {
        s.push_str(&format!("{} {} {} {}\n", i + 1, g.symbol(), f(d.to_degrees()), f(*t)));
    }
    s.push_str(&format!("converged {}\n", r.converged));
    s.push_str(&format!("residual {} N·m\n", f(r.residual)));
    s
}

fn joint_table(config: &MechanismConfig, r: &crate::model::EquilibriumResult) -> SweepTable {
    let n = r.joint_torques.len();
    let threshold = per_joint_stiffness(config) * config.alpha_preload;
    SweepTable::new(
        &format!(
            "Joint torques at theta = {:.2} deg, F_cyl = {} N",
            r.theta.to_degrees(),
            analysis::format_value(r.input_force)
        ),
        vec![
            Column::number("joint", "-", (1..=n).map(|i| i as f64).collect()),
            Column::number("joint_torque", "N·m", r.joint_torques.clone()),
            Column::number("preload_threshold", "N·m", vec![threshold; n]),
            Column::number(
                "deflection",
                "deg",
                r.chain.deflection.iter().map(|d| d.to_degrees()).collect(),
            ),
        ],
        "joint",
        &["joint_torque", "preload_threshold"],
    )
}

/// Closed- and open-chain Jacobians across the configured angle range, the
/// plot written by `validate --plot`.
fn jacobian_table(config: &MechanismConfig) -> Result<SweepTable> {
    let closed = chain::chain_tip(config, &config.closed_deflection())?;
    let open = chain::chain_tip(config, &config.open_deflection())?;
    let grid = analysis::sample_grid(config.theta_min, config.theta_max, 1f64.to_radians())?;
    let mut jc = Vec::with_capacity(grid.len());
    let mut jo = Vec::with_capacity(grid.len());
    let mut trig = Vec::with_capacity(grid.len());
    for &th in &grid {
        jc.push(linkage::closure_at_tip(config, th, closed)?.jacobian);
        jo.push(linkage::closure_at_tip(config, th, open)?.jacobian);
        trig.push(triggering_force(config, th).unwrap_or(f64::NAN));
    }
    Ok(SweepTable::new(
        "Transmission ratio of the closed and fully open chain",
        vec![
            Column::number("theta", "deg", grid.iter().map(|t| t.to_degrees()).collect()),
            Column::number("closed_ratio", "m", jc),
            Column::number("open_ratio", "m", jo),
            Column::number("trigger_force", "N", trig),
        ],
        "theta",
        &["closed_ratio", "open_ratio"],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("lbvt").chain(args.iter().copied()).map(String::from).collect();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_lists_units() {
        let (code, out, _) = run_capture(&["solve", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("(deg") && out.contains("(N)"), "{out}");
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, out, err) = run_capture(&["frobnicate"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(out.is_empty());
        assert!(err.contains("frobnicate"), "{err}");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_capture(&["solve", "x.json", "--theta", "-88", "--force", "1", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--bogus"), "{err}");
    }

    #[test]
    fn missing_config_names_subcommand() {
        let (code, _, err) = run_capture(&["validate", "/nonexistent/config.json"]);
        assert_eq!(code, EXIT_FAILURE);
        assert!(err.starts_with("lbvt validate:"), "{err}");
    }
}
