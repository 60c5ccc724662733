use rayon::prelude::*;

use super::table::{sample_grid, Column, SweepTable};
use crate::chain;
use crate::equilibrium::solve_equilibrium;
use crate::error::{Error, Result};
use crate::linkage;
use crate::model::{EquilibriumResult, MechanismConfig, Regime};

/// Environment variable capping sweep parallelism; unset or 0 keeps the
/// rayon default.
pub const THREADS_ENV: &str = "LBVT_THREADS";

const RANGE_SLACK: f64 = 1e-9;

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
}

/// Maps `f` over `items` in parallel; output order follows input order.
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        },
        None => items.par_iter().map(f).collect(),
    }
}

/// Outcome of one sample; geometric failures are kept as flagged records.
type Sample<T> = std::result::Result<T, String>;

fn flag<T>(r: Result<T>) -> Result<Sample<T>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ (Error::Infeasible { .. } | Error::Singular { .. })) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

fn status(r: &EquilibriumResult) -> String {
    if r.converged {
        "ok".into()
    } else {
        format!("not converged (residual {:.3e})", r.residual)
    }
}

fn closed_jacobian(config: &MechanismConfig, theta: f64) -> Result<f64> {
    let tip = chain::chain_tip(config, &config.closed_deflection())?;
    Ok(linkage::closure_at_tip(config, theta, tip)?.jacobian)
}

fn check_force_range(from: f64, to: f64) -> Result<()> {
    if !(from >= 0.0) || !(to >= from) {
        return Err(Error::Domain(format!(
            "force range must be non-negative and increasing, got [{from}, {to}]"
        )));
    }
    Ok(())
}

/// KFE torque across a range of flexion angles, with the LBVT chain free and
/// with the chain held closed (rigid baseline).
///
/// Angles are in radians; the `theta` column is in degrees.
pub fn sweep_torque_vs_angle(
    config: &MechanismConfig,
    f_cyl: f64,
    theta_from: f64,
    theta_to: f64,
    step: f64,
) -> Result<SweepTable> {
    if theta_from < config.theta_min - RANGE_SLACK || theta_to > config.theta_max + RANGE_SLACK {
        return Err(Error::Domain(format!(
            "angle sweep [{:.3}, {:.3}] deg leaves the configured range [{:.3}, {:.3}] deg",
            theta_from.to_degrees(),
            theta_to.to_degrees(),
            config.theta_min.to_degrees(),
            config.theta_max.to_degrees()
        )));
    }
    let grid = sample_grid(theta_from, theta_to, step)?;
    let outcomes = par_map(&grid, |&th| -> Result<Sample<(EquilibriumResult, f64)>> {
        let solved = match flag(solve_equilibrium(config, th, f_cyl))? {
            Ok(r) => r,
            Err(msg) => return Ok(Err(msg)),
        };
        Ok(flag(closed_jacobian(config, th))?.map(|j| (solved, j)))
    });

    let n = grid.len();
    let mut lbvt = Vec::with_capacity(n);
    let mut base = Vec::with_capacity(n);
    let mut amp = Vec::with_capacity(n);
    let mut l4 = Vec::with_capacity(n);
    let mut ratio = Vec::with_capacity(n);
    let mut regimes = Vec::with_capacity(n);
    let mut stat = Vec::with_capacity(n);
    for outcome in outcomes {
        match outcome? {
            Ok((r, j)) => {
                let b = j * f_cyl;
                lbvt.push(r.kfe_torque);
                base.push(b);
                amp.push(if b != 0.0 { r.kfe_torque / b } else { f64::NAN });
                l4.push(r.chain.l4);
                ratio.push(r.transmission_ratio);
                regimes.push(r.regime_summary());
                stat.push(status(&r));
            }
            Err(msg) => {
                for c in [&mut lbvt, &mut base, &mut amp, &mut l4, &mut ratio] {
                    c.push(f64::NAN);
                }
                regimes.push(String::new());
                stat.push(format!("infeasible: {msg}"));
            }
        }
    }
    Ok(SweepTable::new(
        &format!("KFE torque vs angle at F_cyl = {f_cyl} N"),
        vec![
            Column::number("theta", "deg", grid.iter().map(|t| t.to_degrees()).collect()),
            Column::number("lbvt_torque", "N·m", lbvt),
            Column::number("baseline_torque", "N·m", base),
            Column::number("amplification", "-", amp),
            Column::number("l4", "m", l4),
            Column::number("transmission_ratio", "m", ratio),
            Column::text("regimes", regimes),
            Column::text("status", stat),
        ],
        "theta",
        &["lbvt_torque", "baseline_torque"],
    ))
}

struct ForceSweep {
    grid: Vec<f64>,
    outcomes: Vec<Sample<EquilibriumResult>>,
    closed_jacobian: Option<f64>,
}

fn force_sweep(config: &MechanismConfig, theta: f64, f_from: f64, f_to: f64, step: f64) -> Result<ForceSweep> {
    check_force_range(f_from, f_to)?;
    let grid = sample_grid(f_from, f_to, step)?;
    let outcomes = par_map(&grid, |&f| flag(solve_equilibrium(config, theta, f)));
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let closed_jacobian = flag(closed_jacobian(config, theta))?.ok();
    Ok(ForceSweep {
        grid,
        outcomes,
        closed_jacobian,
    })
}

impl ForceSweep {
    fn column(&self, f: impl Fn(&EquilibriumResult) -> f64) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| o.as_ref().map_or(f64::NAN, &f))
            .collect()
    }

    fn regimes(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| o.as_ref().map_or(String::new(), |r| r.regime_summary()))
            .collect()
    }

    fn status(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| match o {
                Ok(r) => status(r),
                Err(msg) => format!("infeasible: {msg}"),
            })
            .collect()
    }

    fn baseline(&self, per_newton: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.grid
            .iter()
            .map(|&f| self.closed_jacobian.map_or(f64::NAN, |j| per_newton(j, f)))
            .collect()
    }
}

/// Chain opening against actuator force at a locked angle. The diameter
/// stays on its closed value until the triggering force.
pub fn sweep_trigger(config: &MechanismConfig, theta: f64, f_from: f64, f_to: f64, step: f64) -> Result<SweepTable> {
    let s = force_sweep(config, theta, f_from, f_to, step)?;
    Ok(SweepTable::new(
        &format!("Chain opening vs force at theta = {:.2} deg", theta.to_degrees()),
        vec![
            Column::number("force", "N", s.grid.clone()),
            Column::number("diameter", "m", s.column(|r| r.chain.diameter)),
            Column::number("l4", "m", s.column(|r| r.chain.l4)),
            Column::text("regimes", s.regimes()),
            Column::text("status", s.status()),
        ],
        "force",
        &["diameter"],
    ))
}

/// KFE torque against actuator force, with and without the LBVT chain.
pub fn sweep_torque_vs_force(
    config: &MechanismConfig,
    theta: f64,
    f_from: f64,
    f_to: f64,
    step: f64,
) -> Result<SweepTable> {
    let s = force_sweep(config, theta, f_from, f_to, step)?;
    let lbvt = s.column(|r| r.kfe_torque);
    let base = s.baseline(|j, f| j * f);
    let gain = lbvt.iter().zip(&base).map(|(a, b)| a - b).collect();
    Ok(SweepTable::new(
        &format!("KFE torque vs force at theta = {:.2} deg", theta.to_degrees()),
        vec![
            Column::number("force", "N", s.grid.clone()),
            Column::number("lbvt_torque", "N·m", lbvt),
            Column::number("baseline_torque", "N·m", base),
            Column::number("torque_gain", "N·m", gain),
            Column::text("regimes", s.regimes()),
            Column::text("status", s.status()),
        ],
        "force",
        &["lbvt_torque", "baseline_torque"],
    ))
}

/// Transmission ratio `T / F_cyl` against actuator force. At zero force the
/// ratio is the closed-chain Jacobian. The table's `ratio_step` is read off
/// the first record with every joint at its end stop.
pub fn sweep_ratio_vs_force(
    config: &MechanismConfig,
    theta: f64,
    f_from: f64,
    f_to: f64,
    step: f64,
) -> Result<SweepTable> {
    let s = force_sweep(config, theta, f_from, f_to, step)?;
    let ratio = s.column(|r| r.transmission_ratio);
    let base = s.baseline(|j, _| j);
    let gain = ratio.iter().zip(&base).map(|(r, b)| r / b - 1.0).collect();
    let saturated = s.outcomes.iter().find_map(|o| {
        let r = o.as_ref().ok()?;
        let open = config.joint_open_limit.iter().any(|&l| l > 0.0)
            && r.chain.regime.iter().all(|&g| g == Regime::EndStop);
        open.then_some(r.transmission_ratio)
    });
    let mut table = SweepTable::new(
        &format!("Transmission ratio vs force at theta = {:.2} deg", theta.to_degrees()),
        vec![
            Column::number("force", "N", s.grid.clone()),
            Column::number("transmission_ratio", "m", ratio),
            Column::number("baseline_ratio", "m", base),
            Column::number("ratio_gain", "-", gain),
            Column::text("regimes", s.regimes()),
            Column::text("status", s.status()),
        ],
        "force",
        &["transmission_ratio", "baseline_ratio"],
    );
    table.ratio_step = match (saturated, s.closed_jacobian) {
        (Some(open), Some(closed)) => Some(open / closed - 1.0),
        _ => None,
    };
    Ok(table)
}

/// `J(theta, fully open) / J(theta, closed) - 1` straight from the linkage.
pub fn ratio_step(config: &MechanismConfig, theta: f64) -> Result<f64> {
    let open = chain::chain_tip(config, &config.open_deflection())?;
    let j_open = linkage::closure_at_tip(config, theta, open)?.jacobian;
    Ok(j_open / closed_jacobian(config, theta)? - 1.0)
}

/// Relative change in chain diameter that counts as leaving the plateau.
/// Opening the anchor joint alone moves the diameter only by rounding.
pub const PLATEAU_TOLERANCE: f64 = 1e-9;

/// Force of the last trigger-sweep record whose diameter is still on the
/// first record's value, provided a later record departs from it.
pub fn plateau_end(table: &SweepTable) -> Result<Option<f64>> {
    let force = table.values("force")?;
    let diameter = table.values("diameter")?;
    let Some(&d0) = diameter.first() else {
        return Ok(None);
    };
    Ok(diameter
        .iter()
        .position(|&d| !((d - d0).abs() <= PLATEAU_TOLERANCE * d0.abs()))
        .filter(|&i| i > 0)
        .map(|i| force[i - 1]))
}
