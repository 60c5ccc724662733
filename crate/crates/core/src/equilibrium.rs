//! Quasi-static equilibrium of the spring chain at a locked KFE angle.
//!
//! With the knee locked the chain deflections are the only degrees of
//! freedom. The actuator force `F` does work `F * (d(x) - d(0))` where `d` is
//! the actuator length, and joint `k` stores `k_j/2 ((a_p + x_k)^2 - a_p^2)`.
//! Equilibrium is a stationary point of spring energy minus actuator work
//! subject to `0 <= x_k <= limit_k`; per joint this is the complementarity
//! between the Closed, Active and EndStop regimes.
//!
//! The generalised force on joint `k` is the moment, about that joint, of the
//! coupler load on the tip, which is what [`chain::joint_torques`] returns for
//! the load `F * grad_tip(d)`.

use rayon::prelude::*;

use crate::chain::{self, ChainPose};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::linkage;
use crate::model::{per_joint_stiffness, ChainState, EquilibriumResult, MechanismConfig, Regime};

pub const MAX_OUTER_ITERATIONS: usize = 200;
pub const MAX_INNER_ITERATIONS: usize = 50;
pub const DAMPING_FLOOR: f64 = 1e-6;
/// Converged results have a complementarity residual below this (N·m).
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Target for the Newton iterations on the active set (N·m).
const NEWTON_TOLERANCE: f64 = 1e-12;
/// A bound joint is released only when its multiplier is below `-RELEASE_SLACK`.
/// Torque exactly at the preload threshold keeps a joint closed.
const RELEASE_SLACK: f64 = 1e-12;
const HESSIAN_STEP: f64 = 1e-6;
pub const MAX_GRID_NODES: f64 = 1e8;
const THETA_SLACK: f64 = 1e-9;

/// `F_end = T / l4`.
pub fn tip_force(kfe_torque: f64, l4: f64) -> Result<f64> {
    if !(l4 > 0.0) {
        return Err(Error::Domain(format!("l4 must be positive, got {l4}")));
    }
    Ok(kfe_torque / l4)
}

/// Spring energy relative to the closed (pre-tensioned) state.
pub fn potential_energy(config: &MechanismConfig, deflection: &[f64]) -> Result<f64> {
    chain::pose(config, deflection)?;
    Ok(spring_energy(config, deflection))
}

fn spring_energy(config: &MechanismConfig, x: &[f64]) -> f64 {
    let k = per_joint_stiffness(config);
    let a = config.alpha_preload;
    x.iter()
        .map(|&d| 0.5 * k * ((a + d) * (a + d) - a * a))
        .sum()
}

/// Smallest actuator force at which any joint of the closed chain reaches its
/// preload threshold.
pub fn triggering_force(config: &MechanismConfig, theta: f64) -> Result<f64> {
    let closed = config.closed_deflection();
    let pose = chain::pose(config, &closed)?;
    let link = linkage::closure_at_tip(config, theta, pose.tip)?;
    let per_newton = chain::joint_torques(config, &closed, link.tip_gradient.rotate(-theta))?;
    let threshold = per_joint_stiffness(config) * config.alpha_preload;
    per_newton
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| threshold / q)
        .min_by(f64::total_cmp)
        .ok_or(Error::NoTrigger)
}

/// One evaluation of the chain/linkage model at a deflection vector.
struct Sample {
    pose: ChainPose,
    actuator_length: f64,
    jacobian: f64,
    /// Gradient of the actuator length w.r.t. the tip, lower-leg frame.
    tip_gradient: Vec2,
    /// Energy gradient `k (a_p + x_k) - F dd/dx_k`.
    gradient: Vec<f64>,
    energy: f64,
}

struct Problem<'a> {
    config: &'a MechanismConfig,
    theta: f64,
    force: f64,
    stiffness: f64,
    reference_length: f64,
}

impl<'a> Problem<'a> {
    fn new(config: &'a MechanismConfig, theta: f64, force: f64) -> Result<Self> {
        let closed = chain::pose(config, &config.closed_deflection())?;
        let reference = linkage::closure_at_tip(config, theta, closed.tip)?;
        Ok(Problem {
            config,
            theta,
            force,
            stiffness: per_joint_stiffness(config),
            reference_length: reference.actuator_length,
        })
    }

    fn sample(&self, x: &[f64]) -> Result<Sample> {
        let pose = chain::pose_unchecked(self.config, x);
        let link = linkage::closure_at_tip(self.config, self.theta, pose.tip)?;
        let g = link.tip_gradient.rotate(-self.theta);
        let a = self.config.alpha_preload;
        let gradient = pose
            .joints
            .iter()
            .zip(x)
            .map(|(&p, &xk)| self.stiffness * (a + xk) - self.force * (pose.tip - p).cross(g))
            .collect();
        let energy = spring_energy(self.config, x)
            - self.force * (link.actuator_length - self.reference_length);
        Ok(Sample {
            pose,
            actuator_length: link.actuator_length,
            jacobian: link.jacobian,
            tip_gradient: g,
            gradient,
            energy,
        })
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.sample(x)?.gradient)
    }

    /// Central-difference Hessian of the energy restricted to `free`.
    fn hessian(&self, x: &[f64], free: &[usize]) -> Result<Vec<Vec<f64>>> {
        let m = free.len();
        let mut h = vec![vec![0.0; m]; m];
        let mut xp = x.to_vec();
        for (col, &j) in free.iter().enumerate() {
            xp[j] = x[j] + HESSIAN_STEP;
            let gp = self.gradient(&xp)?;
            xp[j] = x[j] - HESSIAN_STEP;
            let gm = self.gradient(&xp)?;
            xp[j] = x[j];
            for (row, &i) in free.iter().enumerate() {
                h[row][col] = (gp[i] - gm[i]) / (2.0 * HESSIAN_STEP);
            }
        }
        for r in 0..m {
            for c in 0..r {
                let s = 0.5 * (h[r][c] + h[c][r]);
                h[r][c] = s;
                h[c][r] = s;
            }
        }
        Ok(h)
    }
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Newton direction `-H^-1 g`, shifting `H` until it is positive definite.
fn descent_direction(h: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let scale = h
        .iter()
        .enumerate()
        .map(|(i, row)| row[i].abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut shift = 0.0;
    loop {
        let shifted: Vec<Vec<f64>> = h
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r[i] += shift;
                r
            })
            .collect();
        if let Some(step) = cholesky_solve(&shifted, g) {
            return step.into_iter().map(|s| -s).collect();
        }
        shift = if shift == 0.0 { 1e-8 * scale } else { shift * 4.0 };
    }
}

fn complementarity_residual(x: &[f64], regime: &[Regime], gradient: &[f64]) -> f64 {
    x.iter()
        .zip(regime)
        .zip(gradient)
        .map(|((_, r), &g)| match r {
            Regime::Active => g.abs(),
            Regime::Closed => (-g).max(0.0),
            Regime::EndStop => g.max(0.0),
        })
        .fold(0.0, f64::max)
}

fn check_inputs(config: &MechanismConfig, theta: f64, f_cyl: f64) -> Result<()> {
    if !(f_cyl >= 0.0 && f_cyl.is_finite()) {
        return Err(Error::Domain(format!("actuator force must be >= 0, got {f_cyl}")));
    }
    if !(theta >= config.theta_min - THETA_SLACK && theta <= config.theta_max + THETA_SLACK) {
        return Err(Error::Domain(format!(
            "theta = {theta} outside [{}, {}]",
            config.theta_min, config.theta_max
        )));
    }
    Ok(())
}

/// Active-set solve of the chain equilibrium under actuator force `f_cyl`.
///
/// Starts from the closed chain, i.e. follows the mechanism as it is loaded
/// from rest. Each outer iteration runs damped Newton on the Active joints and
/// then changes the regime of at most one joint.
pub fn solve_equilibrium(config: &MechanismConfig, theta: f64, f_cyl: f64) -> Result<EquilibriumResult> {
    check_inputs(config, theta, f_cyl)?;
    let problem = Problem::new(config, theta, f_cyl)?;
    let limits = &config.joint_open_limit;
    let n = config.joint_count();
    let mut x = vec![0.0; n];
    let mut regime = vec![Regime::Closed; n];
    let mut iterations = 0;
    let mut converged = false;

    for _outer in 0..MAX_OUTER_ITERATIONS {
        iterations += 1;
        let mut bound_hit = false;
        for _inner in 0..MAX_INNER_ITERATIONS {
            let free: Vec<usize> = (0..n).filter(|&i| regime[i] == Regime::Active).collect();
            if free.is_empty() {
                break;
            }
            let current = problem.sample(&x)?;
            let g_free: Vec<f64> = free.iter().map(|&i| current.gradient[i]).collect();
            let res = g_free.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if res < NEWTON_TOLERANCE {
                break;
            }
            let h = problem.hessian(&x, &free)?;
            let step = descent_direction(&h, &g_free);
            let slope: f64 = step.iter().zip(&g_free).map(|(s, g)| s * g).sum();

            let mut damping = 1.0;
            let mut accepted = false;
            while damping >= DAMPING_FLOOR {
                // Largest fraction of the damped step that stays in bounds.
                let mut tau = damping;
                let mut blocking = None;
                for (&i, &s) in free.iter().zip(&step) {
                    let room = if s > 0.0 {
                        (limits[i] - x[i]) / s
                    } else if s < 0.0 {
                        -x[i] / s
                    } else {
                        f64::INFINITY
                    };
                    if room < tau {
                        tau = room.max(0.0);
                        blocking = Some((i, s > 0.0));
                    }
                }
                let mut trial = x.clone();
                for (&i, &s) in free.iter().zip(&step) {
                    trial[i] = (x[i] + tau * s).clamp(0.0, limits[i]);
                }
                if let Some((i, upper)) = blocking {
                    trial[i] = if upper { limits[i] } else { 0.0 };
                }
                let candidate = problem.sample(&trial)?;
                let cand_res = free
                    .iter()
                    .map(|&i| candidate.gradient[i].abs())
                    .fold(0.0, f64::max);
                let armijo = candidate.energy <= current.energy + 1e-4 * tau * slope;
                if armijo || (blocking.is_none() && cand_res < res) || (blocking.is_some() && candidate.energy <= current.energy) {
                    x = trial;
                    if let Some((i, upper)) = blocking {
                        regime[i] = if upper { Regime::EndStop } else { Regime::Closed };
                        bound_hit = true;
                    }
                    accepted = true;
                    break;
                }
                damping *= 0.5;
            }
            if !accepted || bound_hit {
                break;
            }
        }
        if bound_hit {
            continue;
        }

        let sample = problem.sample(&x)?;
        // Release the bound joint with the largest multiplier violation.
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let violation = match regime[i] {
                Regime::Closed => -sample.gradient[i],
                Regime::EndStop => sample.gradient[i],
                Regime::Active => continue,
            };
            if violation > RELEASE_SLACK && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        match worst {
            Some((i, _)) if limits[i] > 0.0 => regime[i] = Regime::Active,
            Some(_) => {
                // Zero-travel joint: it can neither open nor leave the stop.
                let res = complementarity_residual(&x, &regime, &sample.gradient);
                converged = res < RESIDUAL_TOLERANCE;
                break;
            }
            None => {
                let res = complementarity_residual(&x, &regime, &sample.gradient);
                if res < RESIDUAL_TOLERANCE {
                    converged = true;
                    break;
                }
            }
        }
    }

    let mut result = build_result(config, &problem, &x, iterations)?;
    // Zero-travel joints are simultaneously closed and at the stop.
    for (i, r) in result.chain.regime.iter_mut().enumerate() {
        if limits[i] == 0.0 {
            *r = Regime::Closed;
        }
    }
    result.converged = converged && result.residual < RESIDUAL_TOLERANCE;
    Ok(result)
}

fn build_result(
    config: &MechanismConfig,
    problem: &Problem<'_>,
    x: &[f64],
    iterations: usize,
) -> Result<EquilibriumResult> {
    let sample = problem.sample(x)?;
    let regime: Vec<Regime> = x
        .iter()
        .zip(&config.joint_open_limit)
        .map(|(&d, &lim)| Regime::classify(d, lim))
        .collect();
    let residual = complementarity_residual(x, &regime, &sample.gradient);
    let direction = if sample.tip_gradient.norm() > 0.0 {
        sample.tip_gradient
    } else {
        sample.pose.tip.perp()
    };
    let chain = ChainState::with_load_direction(config, x, direction)?;
    let tip_lower = sample.pose.tip;
    let linkage = linkage::closure_at_tip(config, problem.theta, tip_lower)?;
    let force = problem.force;
    let ratio = sample.jacobian;
    let torque = ratio * force;
    let load = sample.tip_gradient * force;
    let joint_torques = sample
        .pose
        .joints
        .iter()
        .map(|&p| (tip_lower - p).cross(load))
        .collect();
    debug_assert!((linkage.actuator_length - sample.actuator_length).abs() == 0.0);
    Ok(EquilibriumResult {
        theta: problem.theta,
        tip_force: tip_force(torque, chain.l4)?,
        coupler_force: load.norm(),
        chain,
        linkage,
        input_force: force,
        kfe_torque: torque,
        transmission_ratio: ratio,
        joint_torques,
        energy: sample.energy,
        converged: residual < RESIDUAL_TOLERANCE,
        residual,
        iterations,
    })
}

/// Exhaustive grid minimisation of spring energy minus actuator work.
///
/// Reduced chains only (at most three joints). Each axis is sampled from 0 to
/// the joint limit at `grid_step`, with the limit itself always included. The
/// actuator work at a node is the integral of `F dd` along the uniform ray from
/// the closed chain to that node; with a constant force this integral is
/// `F (d(x) - d(0))`.
pub fn brute_force_equilibrium(
    config: &MechanismConfig,
    theta: f64,
    f_cyl: f64,
    grid_step: f64,
) -> Result<EquilibriumResult> {
    check_inputs(config, theta, f_cyl)?;
    let n = config.joint_count();
    if n > 3 {
        return Err(Error::Domain(format!(
            "brute force supports at most 3 joints, config has {n}"
        )));
    }
    if !(grid_step > 0.0) {
        return Err(Error::Domain(format!("grid step must be positive, got {grid_step}")));
    }
    let axes: Vec<Vec<f64>> = config
        .joint_open_limit
        .iter()
        .map(|&lim| grid_axis(lim, grid_step))
        .collect();
    let nodes: f64 = axes.iter().map(|a| a.len() as f64).product();
    if nodes > MAX_GRID_NODES {
        return Err(Error::GridTooLarge { nodes });
    }
    let problem = Problem::new(config, theta, f_cyl)?;
    let total = nodes as usize;
    let node = |mut idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (k, axis) in axes.iter().enumerate().rev() {
            x[k] = axis[idx % axis.len()];
            idx /= axis.len();
        }
        x
    };
    let energy_at = |x: &[f64]| -> f64 {
        let tip = chain::pose_unchecked(config, x).tip;
        match linkage::closure_at_tip(config, theta, tip) {
            Ok(link) => {
                spring_energy(config, x) - f_cyl * (link.actuator_length - problem.reference_length)
            }
            Err(_) => f64::INFINITY,
        }
    };
    let (best, _) = (0..total)
        .into_par_iter()
        .map(|i| (i, energy_at(&node(i))))
        .reduce(
            || (usize::MAX, f64::INFINITY),
            |a, b| match a.1.total_cmp(&b.1) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    if best == usize::MAX {
        return Err(Error::Infeasible {
            theta,
            constraint: "no grid node closes the four-bar".into(),
        });
    }
    build_result(config, &problem, &node(best), 1)
}

fn grid_axis(limit: f64, step: f64) -> Vec<f64> {
    let count = (limit / step).floor() as usize;
    let mut axis: Vec<f64> = (0..=count).map(|i| (i as f64 * step).min(limit)).collect();
    if *axis.last().unwrap() < limit {
        axis.push(limit);
    }
    axis
}
