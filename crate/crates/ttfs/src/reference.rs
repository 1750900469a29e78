//! Brute-force reference engines and seeded generators used to validate the
//! event-driven simulators. Everything here favours obviousness over speed:
//! dense time grids, no event bookkeeping, no shared code with the engines
//! under test.

use crate::model::{init_network, Matrix, NetworkModel};
use crate::rng::Rng;

/// Dense forward-Euler integration of one layer.
///
/// Steps the membrane ODE on a fixed grid of width `dt` and reports, per
/// neuron, the first grid time where the potential reaches `v_th` (`None`
/// if it never does within the horizon). Optional floor clamps the state
/// after every step.
pub fn euler_layer(
    weights: &Matrix,
    input_times: &[Option<f64>],
    v_th: f64,
    horizon: f64,
    dt: f64,
    v_min: Option<f64>,
) -> Vec<Option<f64>> {
    let n_out = weights.rows;
    let steps = (horizon / dt).ceil() as usize;
    let mut v = vec![0.0f64; n_out];
    let mut out = vec![None; n_out];
    let mut fired = vec![false; n_out];
    for step in 0..=steps {
        let t = step as f64 * dt;
        for i in 0..n_out {
            if fired[i] {
                continue;
            }
            if v[i] >= v_th {
                fired[i] = true;
                out[i] = Some(t - dt);
                continue;
            }
            let row = weights.row(i);
            let mut slope = 0.0;
            for (j, t_j) in input_times.iter().enumerate() {
                if let Some(t_j) = t_j {
                    if t >= *t_j {
                        slope += row[j];
                    }
                }
            }
            v[i] += slope * dt;
            if let Some(vm) = v_min {
                v[i] = v[i].max(vm);
            }
        }
    }
    for i in 0..n_out {
        if !fired[i] && v[i] >= v_th {
            out[i] = Some(steps as f64 * dt);
        }
    }
    out
}

/// Dense sampled-firing reference: exact potential evaluated directly from
/// the sum formula at every clock tick, firing at the first tick where it
/// reaches `v_th`. Used to cross-check the tick engines without sharing
/// their incremental state.
pub fn sampled_firing_reference(
    weights: &Matrix,
    input_times: &[Option<f64>],
    v_th: f64,
    t_clock: f64,
    horizon: f64,
) -> Vec<Option<u32>> {
    let n_out = weights.rows;
    let last = (horizon / t_clock).ceil() as u32;
    (0..n_out)
        .map(|i| {
            let row = weights.row(i);
            (0..=last).find(|&p| {
                let tp = p as f64 * t_clock;
                let v: f64 = input_times
                    .iter()
                    .enumerate()
                    .filter_map(|(j, t_j)| t_j.map(|t_j| (j, t_j)))
                    .map(|(j, t_j)| row[j] * (tp - t_j).max(0.0))
                    .sum();
                v >= v_th
            })
        })
        .collect()
}

/// Seeded random layer: weights roughly unit-scale with mixed signs.
pub fn random_layer(n_out: usize, n_in: usize, seed: u64) -> Matrix {
    let mut rng = Rng::derive(seed, &[0x4C41_5945]);
    let mut m = Matrix::zeros(n_out, n_in);
    for v in m.as_mut_slice() {
        *v = rng.normal() * 0.8 + 0.3;
    }
    m
}

/// Seeded random input spike times in `[0, tau)`, with roughly one in six
/// inputs silent.
pub fn random_inputs(n: usize, tau: f64, seed: u64) -> Vec<Option<f64>> {
    let mut rng = Rng::derive(seed, &[0x494E_5054]);
    (0..n)
        .map(|_| {
            if rng.next_f64() < 1.0 / 6.0 {
                None
            } else {
                Some(rng.next_f64() * tau)
            }
        })
        .collect()
}

/// Seeded random small network with the standard initialization.
pub fn random_net(layer_sizes: &[usize], seed: u64) -> NetworkModel {
    init_network(layer_sizes, 5.0, 1.0, seed).expect("valid sizes")
}

/// Seeded random pixel vector in [0, 1] with some exact zeros.
pub fn random_pixels(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::derive(seed, &[0x5049_5845]);
    (0..n)
        .map(|_| {
            if rng.next_f64() < 0.2 {
                0.0
            } else {
                rng.next_f64()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_single_slope() {
        // slope 2, threshold 1: crossing at 0.5 ms, grid resolution 1e-4.
        let w = Matrix::from_rows(vec![vec![2.0]]).unwrap();
        let t = euler_layer(&w, &[Some(0.0)], 1.0, 5.0, 1e-4, None)[0].unwrap();
        assert!((t - 0.5).abs() < 2e-4, "euler crossing at {t}");
    }

    #[test]
    fn sampled_reference_matches_hand_arithmetic() {
        // v(t) = 2t, T = 0.4: first tick with v >= 1 is p=2.
        let w = Matrix::from_rows(vec![vec![2.0]]).unwrap();
        let ticks = sampled_firing_reference(&w, &[Some(0.0)], 1.0, 0.4, 5.0);
        assert_eq!(ticks[0], Some(2));
    }
}
