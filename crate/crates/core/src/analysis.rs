//! Scalar summaries of simulated states used by scenarios and plots.

use crate::robot::SoftRobot;
use crate::vector::{node_pos, Vec3};

/// Largest nodal z coordinate.
pub fn max_height(robot: &SoftRobot, q: &[f64]) -> f64 {
    (0..robot.n_nodes()).map(|n| q[3 * n + 2]).fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest nodal z coordinate.
pub fn min_height(robot: &SoftRobot, q: &[f64]) -> f64 {
    (0..robot.n_nodes()).map(|n| q[3 * n + 2]).fold(f64::INFINITY, f64::min)
}

/// Largest nodal speed (m/s).
pub fn max_speed(robot: &SoftRobot, u: &[f64]) -> f64 {
    (0..robot.n_nodes()).map(|n| node_pos(u, n).norm()).fold(0.0, f64::max)
}

/// Mass-weighted centre of the nodes.
pub fn center_of_mass(robot: &SoftRobot, q: &[f64]) -> Vec3 {
    let mut c = Vec3::zero();
    let mut m = 0.0;
    for n in 0..robot.n_nodes() {
        let mn = robot.mass.node_mass(n);
        c = c + node_pos(q, n) * mn;
        m += mn;
    }
    c * (1.0 / m)
}

/// Distance from the z axis of each listed node.
pub fn radial_profile(q: &[f64], nodes: impl IntoIterator<Item = usize>) -> Vec<f64> {
    nodes
        .into_iter()
        .map(|n| {
            let p = node_pos(q, n);
            (p.x * p.x + p.y * p.y).sqrt()
        })
        .collect()
}

/// Number of peaks of a periodic signal, counting a peak only once the
/// signal has risen and then fallen by at least `tol` (hysteresis), so
/// ripples smaller than `tol` are ignored.
pub fn count_lobes(values: &[f64], tol: f64) -> usize {
    let n = values.len();
    if n == 0 {
        return 0;
    }
    let start = (0..n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let (mut lo, mut hi) = (values[start], values[start]);
    let mut rising = true;
    let mut count = 0;
    for k in 1..=n {
        let x = values[(start + k) % n];
        if rising {
            if x > hi {
                hi = x;
            } else if hi - x >= tol && hi - lo >= tol {
                count += 1;
                rising = false;
                lo = x;
            }
        } else if x < lo {
            lo = x;
        } else if x - lo >= tol {
            rising = true;
            hi = x;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lobes_of_a_cosine() {
        for k in 1..7 {
            let v: Vec<f64> = (0..96)
                .map(|i| 1.0 + 0.1 * (k as f64 * i as f64 * std::f64::consts::TAU / 96.0).cos())
                .collect();
            assert_eq!(count_lobes(&v, 0.05), k);
        }
    }

    #[test]
    fn ripples_below_tolerance_ignored() {
        let v: Vec<f64> = (0..60)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 60.0;
                (2.0 * a).cos() + 0.01 * (17.0 * a).sin()
            })
            .collect();
        assert_eq!(count_lobes(&v, 0.2), 2);
        assert_eq!(count_lobes(&[1.0; 10], 0.1), 0);
        assert_eq!(count_lobes(&[], 0.1), 0);
    }
}
