//! Four-bar closure, actuator length, scalar Jacobian and KFE torque map.
//!
//! Pivots, upper-leg frame: knee `O` at the origin, ground pivot `A` at
//! `l1` along `frame_angle`, input/coupler pivot `B`, and the spring-chain tip
//! `C`, which rides on the lower leg and therefore rotates with the KFE angle.
//! With the tip known, `B` is the intersection of the circles `|B - A| = l2`
//! and `|B - C| = l3`; the configured branch picks the side of line `AC`.
//! The actuator runs from `actuator_base` to a point on the input bar.

use crate::chain;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::{LinkageState, MechanismConfig};

/// Below this |sin| between input bar and coupler the Jacobian is unbounded.
pub const SINGULARITY_SIN: f64 = 1e-8;

/// Closes the four-bar for a tip given in the lower-leg frame.
pub fn closure_at_tip(config: &MechanismConfig, theta: f64, tip_lower: Vec2) -> Result<LinkageState> {
    let ground = Vec2::polar(config.l1, config.frame_angle);
    let tip = tip_lower.rotate(theta);
    let span = tip - ground;
    let dist = span.norm();
    let (l2, l3) = (config.l2, config.l3);
    if dist > l2 + l3 {
        return Err(Error::Infeasible {
            theta,
            constraint: format!(
                "ground-to-tip span {dist:.6} m exceeds l2 + l3 = {:.6} m",
                l2 + l3
            ),
        });
    }
    if dist < (l2 - l3).abs() || dist == 0.0 {
        return Err(Error::Infeasible {
            theta,
            constraint: format!(
                "ground-to-tip span {dist:.6} m below |l2 - l3| = {:.6} m",
                (l2 - l3).abs()
            ),
        });
    }
    let along = (l2 * l2 - l3 * l3 + dist * dist) / (2.0 * dist);
    let height = (l2 * l2 - along * along).max(0.0).sqrt();
    let ex = span * (1.0 / dist);
    let input_pivot = ground + ex * along + ex.perp() * (height * config.branch.sign());

    let input = input_pivot - ground;
    let coupler = input_pivot - tip;
    let cross = input.cross(coupler);
    let sin_transmission = cross / (l2 * l3);
    if sin_transmission.abs() < SINGULARITY_SIN {
        return Err(Error::Singular {
            theta,
            sin: sin_transmission.abs(),
        });
    }

    let attach = ground + input * config.actuator_attach_ratio;
    let stroke = attach - config.actuator_base;
    let actuator_length = stroke.norm();
    if actuator_length == 0.0 {
        return Err(Error::Infeasible {
            theta,
            constraint: "actuator attachment coincides with its base".into(),
        });
    }
    // A tip displacement dC turns the input bar about A by (w . dC) / (u x w);
    // the attachment then moves along perp(u).
    let along_stroke = stroke * (1.0 / actuator_length);
    let tip_gradient =
        coupler * (config.actuator_attach_ratio * along_stroke.dot(input.perp()) / cross);
    let jacobian = tip_gradient.dot(tip.perp());

    Ok(LinkageState {
        theta,
        knee: Vec2::ZERO,
        ground,
        input_pivot,
        tip,
        actuator_base: config.actuator_base,
        actuator_attach: attach,
        actuator_length,
        jacobian,
        tip_gradient,
        branch: config.branch,
        sin_transmission,
    })
}

/// Closes the four-bar at `theta` for a chain of knee distance `l4`.
///
/// `l4` is resolved to a tip on the uniform opening path of the chain.
pub fn solve_closure(config: &MechanismConfig, theta: f64, l4: f64) -> Result<LinkageState> {
    let (_, tip) = chain::tip_for_l4(config, l4)?;
    closure_at_tip(config, theta, tip)
}

pub fn actuator_length(config: &MechanismConfig, theta: f64, l4: f64) -> Result<f64> {
    Ok(solve_closure(config, theta, l4)?.actuator_length)
}

/// `J = d(actuator length)/d(theta)` at fixed `l4` (m/rad).
pub fn jacobian(config: &MechanismConfig, theta: f64, l4: f64) -> Result<f64> {
    Ok(solve_closure(config, theta, l4)?.jacobian)
}

/// `T = J(theta, l4) * F_cyl`.
pub fn kfe_torque(config: &MechanismConfig, theta: f64, l4: f64, f_cyl: f64) -> Result<f64> {
    Ok(jacobian(config, theta, l4)? * f_cyl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, MechanismConfig};

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn l4_closed(c: &MechanismConfig) -> f64 {
        chain::l4_length(c, &c.closed_deflection()).unwrap()
    }

    fn l4_open(c: &MechanismConfig) -> f64 {
        chain::l4_length(c, &c.open_deflection()).unwrap()
    }

    #[test]
    fn closure_residual_is_tiny() {
        let c = MechanismConfig::shipped();
        let s = solve_closure(&c, deg(-88.0), l4_closed(&c)).unwrap();
        assert!(s.closure_residual(&c) < 1e-10, "{}", s.closure_residual(&c));
    }

    #[test]
    fn range_endpoints_close() {
        let c = MechanismConfig::shipped();
        for theta in [deg(-141.0), deg(-39.5)] {
            for l4 in [l4_closed(&c), l4_open(&c)] {
                let s = solve_closure(&c, theta, l4).unwrap();
                assert!(s.closure_residual(&c) < 1e-10);
            }
        }
    }

    #[test]
    fn unreachable_closure_is_infeasible() {
        let mut c = MechanismConfig::shipped();
        c.l2 = 0.002;
        c.l3 = 0.002;
        let err = solve_closure(&c, deg(-88.0), l4_closed(&c)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err}");
        assert!(err.to_string().contains("l2 + l3"));
    }

    #[test]
    fn attachment_at_ground_pivot_gives_constant_length() {
        let mut c = MechanismConfig::shipped();
        c.actuator_attach_ratio = 0.0;
        let expected = c.actuator_base.distance(Vec2::polar(c.l1, c.frame_angle));
        let l4 = l4_closed(&c);
        for t in [-140.0, -100.0, -60.0] {
            let s = solve_closure(&c, deg(t), l4).unwrap();
            assert!((s.actuator_length - expected).abs() < 1e-15);
            assert_eq!(s.jacobian, 0.0);
        }
    }

    #[test]
    fn actuator_length_is_deterministic_and_lipschitz() {
        let c = MechanismConfig::shipped();
        let l4 = l4_closed(&c);
        let a = actuator_length(&c, deg(-88.0), l4).unwrap();
        assert!(a > 0.0 && a.is_finite());
        assert_eq!(a.to_bits(), actuator_length(&c, deg(-88.0), l4).unwrap().to_bits());
        let b = actuator_length(&c, deg(-78.0), l4).unwrap();
        assert!((b - a).abs() < c.l2 * deg(10.0) + 1e-12);
    }

    #[test]
    fn open_chain_has_larger_ratio_at_operating_point() {
        let c = MechanismConfig::shipped();
        let jc = jacobian(&c, deg(-88.0), l4_closed(&c)).unwrap();
        let jo = jacobian(&c, deg(-88.0), l4_open(&c)).unwrap();
        assert!(jo > jc && jc > 0.0, "{jo} vs {jc}");
        let tc = kfe_torque(&c, deg(-88.0), l4_closed(&c), 165.0).unwrap();
        let to = kfe_torque(&c, deg(-88.0), l4_open(&c), 165.0).unwrap();
        assert!(to > tc);
    }

    #[test]
    fn torque_is_linear_in_force() {
        let c = MechanismConfig::shipped();
        let l4 = l4_closed(&c);
        assert_eq!(kfe_torque(&c, deg(-88.0), l4, 0.0).unwrap(), 0.0);
        let one = kfe_torque(&c, deg(-88.0), l4, 50.0).unwrap();
        let two = kfe_torque(&c, deg(-88.0), l4, 100.0).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn flipping_branch_mirrors_the_coupler_pivot() {
        let c = MechanismConfig::shipped();
        let mut m = c.clone();
        m.branch = match c.branch {
            Branch::Positive => Branch::Negative,
            Branch::Negative => Branch::Positive,
        };
        let tip = chain::chain_tip(&c, &c.closed_deflection()).unwrap();
        if let (Ok(a), Ok(b)) = (closure_at_tip(&c, deg(-88.0), tip), closure_at_tip(&m, deg(-88.0), tip)) {
            let line = a.tip - a.ground;
            let sa = line.cross(a.input_pivot - a.ground);
            let sb = line.cross(b.input_pivot - b.ground);
            assert!(sa * sb < 0.0);
        }
    }
}
