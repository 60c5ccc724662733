//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lbvt::analysis;
use lbvt::equilibrium::{brute_force_equilibrium, solve_equilibrium, triggering_force};
use lbvt::model::{per_joint_stiffness, MechanismConfig, Regime};
use lbvt::{chain, cli, linkage, total_stiffness, validate_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn deg(d: f64) -> f64 {
    d.to_radians()
}

fn shipped_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/default_config.json")
}

fn check(cond: bool, what: String) -> Outcome {
    if cond {
        Ok(what)
    } else {
        Err(what)
    }
}

fn stiffness_identity() -> Outcome {
    let c = MechanismConfig::shipped();
    assert_eq!((c.joint_count(), c.springs_per_joint, c.k_spring), (6, 4, 1.17));
    let k = total_stiffness(&c).map_err(|e| e.to_string())?;
    check((k - 0.78).abs() <= 1e-6, format!("total stiffness {k:.9} N·m/rad"))
}

fn jacobian_correctness() -> Outcome {
    let c = MechanismConfig::shipped();
    let l4_closed = chain::l4_length(&c, &c.closed_deflection()).map_err(|e| e.to_string())?;
    let l4_open = chain::l4_length(&c, &c.open_deflection()).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0.0_f64;
    let mut points = 0;
    for i in 0..12 {
        let theta = c.theta_min + h + (c.theta_max - c.theta_min - 2.0 * h) * i as f64 / 11.0;
        for j in 0..10 {
            let l4 = l4_closed + (l4_open - l4_closed) * j as f64 / 9.0;
            let analytic = linkage::jacobian(&c, theta, l4).map_err(|e| e.to_string())?;
            let plus = linkage::actuator_length(&c, theta + h, l4).map_err(|e| e.to_string())?;
            let minus = linkage::actuator_length(&c, theta - h, l4).map_err(|e| e.to_string())?;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max((analytic - fd).abs() / analytic.abs().max(1e-12));
            points += 1;
        }
    }
    check(
        points >= 100 && worst <= 1e-6,
        format!("{points} grid points, worst relative error {worst:.2e}"),
    )
}

/// `n`-joint chain spanning the same arc as the shipped chain.
fn reduced_chain(n: usize, limit: f64) -> MechanismConfig {
    let mut c = MechanismConfig::shipped();
    let scale = 6.0 / n as f64;
    c.segments = vec![c.segments[0] * scale; n];
    c.phi = vec![c.phi[0] * scale; n];
    c.joint_open_limit = vec![limit; n];
    c
}

fn oracle_equivalence() -> Outcome {
    let grid_step = 1e-3;
    let theta = deg(-88.0);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for (n, limit) in [(1, 0.15), (2, 0.1), (3, 0.05)] {
        let c = reduced_chain(n, limit);
        let violations = validate_config(&c);
        if !violations.is_empty() {
            return Err(format!("{n}-joint chain invalid: {violations:?}"));
        }
        let trigger = triggering_force(&c, theta).map_err(|e| e.to_string())?;
        let mut f_max = 2.0 * trigger;
        // Reach past full opening so all three regimes are exercised.
        while solve_equilibrium(&c, theta, f_max)
            .map_err(|e| e.to_string())?
            .chain
            .regime
            .iter()
            .any(|&r| r != Regime::EndStop)
        {
            f_max *= 1.5;
        }
        for k in 0..50 {
            let f = f_max * k as f64 / 49.0;
            let solved = solve_equilibrium(&c, theta, f).map_err(|e| e.to_string())?;
            let brute = brute_force_equilibrium(&c, theta, f, grid_step).map_err(|e| e.to_string())?;
            for (a, b) in solved.chain.deflection.iter().zip(&brute.chain.deflection) {
                worst = worst.max((a - b).abs());
            }
            cases += 1;
        }
    }
    check(
        worst <= 2.0 * grid_step,
        format!("{cases} solves on 1-, 2-, 3-joint chains, worst deflection gap {worst:.2e} rad"),
    )
}

fn triggering_window() -> Outcome {
    let c = MechanismConfig::shipped();
    let table = analysis::sweep_trigger(&c, deg(-88.0), 0.0, 50.0, 0.5).map_err(|e| e.to_string())?;
    match analysis::plateau_end(&table).map_err(|e| e.to_string())? {
        Some(f) => check((17.0..=21.0).contains(&f), format!("diameter plateau ends at {f} N")),
        None => Err("diameter never leaves its plateau in 0-50 N".into()),
    }
}

fn ratio_step() -> Outcome {
    let c = MechanismConfig::shipped();
    let theta = deg(-88.0);
    let table = analysis::sweep_ratio_vs_force(&c, theta, 0.0, 300.0, 0.5).map_err(|e| e.to_string())?;
    let direct = analysis::ratio_step(&c, theta).map_err(|e| e.to_string())?;
    let Some(swept) = table.ratio_step else {
        return Err("ratio sweep never reached full opening".into());
    };
    check(
        (swept - 0.40).abs() <= 0.05 && (swept - direct).abs() <= 1e-9,
        format!("sweep step {swept:.6}, direct step {direct:.6}, gap {:.1e}", (swept - direct).abs()),
    )
}

fn torque_profile() -> Outcome {
    let c = MechanismConfig::shipped();
    let t = analysis::sweep_torque_vs_angle(&c, 165.0, c.theta_min, c.theta_max, deg(10.0))
        .map_err(|e| e.to_string())?;
    let theta = t.values("theta").unwrap();
    let lbvt = t.values("lbvt_torque").unwrap();
    let base = t.values("baseline_torque").unwrap();
    let amp = t.values("amplification").unwrap();
    if lbvt.iter().chain(base).any(|v| !v.is_finite()) {
        return Err("infeasible samples in the angle sweep".into());
    }
    let low: Vec<usize> = (0..t.len()).filter(|&i| theta[i] <= -55.0).collect();
    let high: Vec<usize> = (0..t.len()).filter(|&i| theta[i] > -55.0).collect();
    let a = low.iter().all(|&i| lbvt[i] >= base[i]);
    let nearest = (0..t.len())
        .min_by(|&i, &j| (theta[i] + 88.0).abs().total_cmp(&(theta[j] + 88.0).abs()))
        .unwrap();
    let peak = (0..t.len()).max_by(|&i, &j| lbvt[i].total_cmp(&lbvt[j])).unwrap();
    let b = peak == nearest;
    let max_low = low.iter().map(|&i| amp[i]).fold(f64::NEG_INFINITY, f64::max);
    let c_ok = !high.is_empty()
        && high.iter().all(|&i| amp[i] < max_low)
        && high.windows(2).all(|w| amp[w[1]] <= amp[w[0]]);
    check(
        a && b && c_ok,
        format!(
            "(a) {} (b) peak {:.3} N·m at {:.1} deg, nearest to -88 is {:.1} deg (c) {}",
            if a { "ok" } else { "LBVT below baseline" },
            lbvt[peak],
            theta[peak],
            theta[nearest],
            if c_ok { "ok" } else { "amplification does not diminish" }
        ),
    )
}

fn invariant_suites() -> Outcome {
    let base = MechanismConfig::shipped();
    let k = per_joint_stiffness(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b57);
    let tol = 1e-9;
    let mut inputs = 0;
    let mut immobile_checked = 0;
    while inputs < 10_000 {
        let mut c = base.clone();
        c.alpha_preload *= rng.gen_range(0.5..1.5);
        let s = rng.gen_range(0.5..1.0);
        c.joint_open_limit.iter_mut().for_each(|l| *l *= s);
        if !validate_config(&c).is_empty() {
            continue;
        }
        let theta = rng.gen_range(c.theta_min..c.theta_max);
        let f1 = rng.gen_range(0.0..250.0);
        let f2 = f1 + rng.gen_range(0.0..20.0);
        let r1 = solve_equilibrium(&c, theta, f1).map_err(|e| format!("input {inputs}: {e}"))?;
        let r2 = solve_equilibrium(&c, theta, f2).map_err(|e| format!("input {inputs}: {e}"))?;
        for r in [&r1, &r2] {
            if !r.converged {
                return Err(format!("input {inputs}: no convergence at F = {}", r.input_force));
            }
            for i in 0..c.joint_count() {
                let x = r.chain.deflection[i];
                let lim = c.joint_open_limit[i];
                let balance = k * (c.alpha_preload + x);
                let torque = r.joint_torques[i];
                let ok = match r.chain.regime[i] {
                    Regime::Closed => x == 0.0 && torque <= balance + tol,
                    Regime::Active => x > 0.0 && x < lim && (torque - balance).abs() <= tol,
                    Regime::EndStop => x == lim && torque >= balance - tol,
                };
                if !ok {
                    return Err(format!(
                        "input {inputs}: joint {} regime {:?} x {x} torque {torque} balance {balance}",
                        i + 1,
                        r.chain.regime[i]
                    ));
                }
            }
        }
        let trigger = triggering_force(&c, theta).map_err(|e| e.to_string())?;
        if f1 < trigger {
            immobile_checked += 1;
            if r1.chain.deflection.iter().any(|&x| x != 0.0) {
                return Err(format!("input {inputs}: moved below the trigger force"));
            }
        }
        if r2.chain.l4 < r1.chain.l4 || r2.kfe_torque < r1.kfe_torque {
            return Err(format!(
                "input {inputs}: theta {theta} F {f1} -> {f2} gives l4 {} -> {}, T {} -> {}",
                r1.chain.l4, r2.chain.l4, r1.kfe_torque, r2.kfe_torque
            ));
        }
        inputs += 1;
    }
    Ok(format!(
        "{inputs} randomized inputs, {immobile_checked} below trigger, complementarity and monotonicity hold"
    ))
}

fn run_cli(args: &[String]) -> (i32, Vec<u8>) {
    let argv: Vec<String> = std::iter::once("lbvt".to_string()).chain(args.iter().cloned()).collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run_with(&argv, &mut out, &mut err);
    (code, out)
}

/// Runs every subcommand into `dir` and returns the exit codes, stdout bytes
/// and output files in a fixed order.
fn cli_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = shipped_path().display().to_string();
    let p = |name: &str| dir.join(name).display().to_string();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("validate", vec!["validate".into(), cfg.clone(), "--plot".into(), p("validate.svg")]),
        (
            "solve",
            ["solve", &cfg, "--theta", "-88", "--force", "120", "--plot", &p("solve.svg")]
                .map(String::from)
                .to_vec(),
        ),
        (
            "sweep-angle",
            ["sweep-angle", &cfg, "--force", "165", "--out", &p("angle.csv"), "--plot", &p("angle.svg")]
                .map(String::from)
                .to_vec(),
        ),
        (
            "trigger",
            ["trigger", &cfg, "--theta", "-88", "--out", &p("trigger.csv"), "--plot", &p("trigger.svg")]
                .map(String::from)
                .to_vec(),
        ),
        (
            "sweep-force",
            ["sweep-force", &cfg, "--theta", "-88", "--out", &p("force.csv"), "--plot", &p("force.svg")]
                .map(String::from)
                .to_vec(),
        ),
        (
            "ratio",
            ["ratio", &cfg, "--theta", "-88", "--out", &p("ratio.csv"), "--plot", &p("ratio.svg")]
                .map(String::from)
                .to_vec(),
        ),
        (
            "calibrate",
            [
                "calibrate", &cfg, "--trigger", "20", "--ratio-step", "0.4", "--theta", "-88", "--out",
                &p("calibrated.json"), "--plot", &p("calibrated.svg"),
            ]
            .map(String::from)
            .to_vec(),
        ),
    ];
    let mut collected = Vec::new();
    for (name, args) in runs {
        let (code, stdout) = run_cli(&args);
        if code != 0 {
            return Err(format!("`{name}` exited with {code}"));
        }
        collected.push((format!("{name} stdout"), stdout));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.path()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    files.sort();
    for f in files {
        let bytes = std::fs::read(&f).map_err(|e| e.to_string())?;
        collected.push((f.file_name().unwrap().to_string_lossy().into_owned(), bytes));
    }
    Ok(collected)
}

fn determinism() -> Outcome {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = cli_outputs(first.path())?;
    let b = cli_outputs(second.path())?;
    let csv = a.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let svg = a.iter().filter(|(n, _)| n.ends_with(".svg")).count();
    if a.len() != b.len() {
        return Err("runs produced different file sets".into());
    }
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        if na != nb || ba != bb {
            return Err(format!("`{na}` differs between runs"));
        }
    }
    check(
        csv == 4 && svg == 7,
        format!("7 subcommands twice, {csv} CSV and {svg} SVG files byte-identical"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("stiffness identity", stiffness_identity, Duration::from_millis(1)),
        ("Jacobian correctness", jacobian_correctness, Duration::from_secs(1)),
        ("oracle equivalence", oracle_equivalence, Duration::from_secs(60)),
        ("triggering window", triggering_window, Duration::from_secs(10)),
        ("ratio step", ratio_step, Duration::from_secs(10)),
        ("torque-profile shape", torque_profile, Duration::from_secs(30)),
        ("complementarity and monotonicity", invariant_suites, Duration::from_secs(120)),
        ("CLI determinism", determinism, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (elapsed <= budget, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.3} s of {:.3} s", elapsed.as_secs_f64(), budget.as_secs_f64());
        println!("{} [{}] {name}: {detail} ({timing})", if ok { "PASS" } else { "FAIL" }, i + 1);
        if !ok {
            failed += 1;
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
