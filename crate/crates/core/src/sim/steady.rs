//! Stationary solution of the slow environment at a frozen detuning: the
//! six-state chain of pathway × shelf, solved directly.

use nalgebra::{DMatrix, DVector};

use super::drive::LaserDrive;
use super::model::{DetectionModel, EmitterModel};
use super::rates::{emission_rate, slow_rates, Transition};
use super::state::{EnvState, Pathway, Shelf};

const STATES: [(Pathway, Shelf); 6] = [
    (Pathway::P1, Shelf::None),
    (Pathway::P1, Shelf::SUp),
    (Pathway::P1, Shelf::SDown),
    (Pathway::P2, Shelf::None),
    (Pathway::P2, Shelf::SUp),
    (Pathway::P2, Shelf::SDown),
];

fn index(p: Pathway, s: Shelf) -> usize {
    STATES.iter().position(|&x| x == (p, s)).unwrap()
}

/// Occupation probabilities of the six (pathway, shelf) states, in the
/// order P1/P2 × none/up/down. Reducible chains (e.g. no pathway
/// switching) are resolved by starting in `start`.
pub fn stationary_occupancy(
    model: &EmitterModel,
    drive: &LaserDrive,
    detuning_ghz: f64,
    start: Pathway,
) -> [f64; 6] {
    let n = STATES.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (i, &(p, s)) in STATES.iter().enumerate() {
        let env = EnvState {
            shelf: s,
            ..EnvState::new(p, detuning_ghz)
        };
        for (tr, rate) in slow_rates(model, drive, &env, false) {
            if rate <= 0.0 {
                continue;
            }
            let j = match tr {
                Transition::ShelveUp => index(p, Shelf::SUp),
                Transition::ShelveDown => index(p, Shelf::SDown),
                Transition::Deshelve => index(p, Shelf::None),
                Transition::SpinMix | Transition::MwFlip => match s {
                    Shelf::SUp => index(p, Shelf::SDown),
                    Shelf::SDown => index(p, Shelf::SUp),
                    Shelf::None => continue,
                },
                Transition::SwitchPathway => index(p.other(), s),
                Transition::DetuningJump => continue,
            };
            q[(i, j)] += rate;
            q[(i, i)] -= rate;
        }
    }
    // absorbing classes: without switching only the start pathway is reachable
    let reachable: Vec<bool> = {
        let mut seen = vec![false; n];
        let mut stack = vec![index(start, Shelf::None)];
        while let Some(i) = stack.pop() {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            for j in 0..n {
                if i != j && q[(i, j)] > 0.0 {
                    stack.push(j);
                }
            }
        }
        seen
    };
    let idx: Vec<usize> = (0..n).filter(|&i| reachable[i]).collect();
    let m = idx.len();
    // πQ = 0 with Σπ = 1: replace one balance equation by normalization
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            a[(c, r)] = q[(i, j)];
        }
    }
    let mut b = DVector::<f64>::zeros(m);
    for c in 0..m {
        a[(m - 1, c)] = 1.0;
    }
    b[m - 1] = 1.0;
    let pi = a.lu().solve(&b).expect("stationary chain is irreducible on its class");
    let mut out = [0.0; 6];
    for (r, &i) in idx.iter().enumerate() {
        out[i] = pi[r].max(0.0);
    }
    out
}

/// Long-time mean detected emitter rate at a frozen detuning.
pub fn stationary_rate(
    model: &EmitterModel,
    detection: &DetectionModel,
    drive: &LaserDrive,
    detuning_ghz: f64,
    start: Pathway,
) -> f64 {
    let occ = stationary_occupancy(model, drive, detuning_ghz, start);
    STATES
        .iter()
        .zip(occ)
        .map(|(&(p, s), w)| {
            let env = EnvState {
                shelf: s,
                ..EnvState::new(p, detuning_ghz)
            };
            w * emission_rate(model, detection, drive, &env)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_shelf_balance() {
        let mut m = EmitterModel::default();
        m.pathway_switch.k12_hz = 0.0;
        m.pathway_switch.k21_hz = 0.0;
        m.shelving.kappa_down_hz = 0.0;
        m.shelving.m_zero_hz = 0.0;
        let drive = LaserDrive::resonant(m.p_sat_uw);
        let occ = stationary_occupancy(&m, &drive, 0.0, Pathway::P1);
        // N ⇄ S_up with rates κ·e and d_up, e = 1/2 at s = 1
        let k = 0.5 * m.shelving.kappa_up_hz;
        let expect = m.shelving.d_up_hz / (k + m.shelving.d_up_hz);
        assert!((occ[0] - expect).abs() < 1e-12);
        assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(occ[3], 0.0);
    }

    #[test]
    fn pathway_telegraph_weights() {
        let mut m = EmitterModel::default();
        m.shelving.kappa_up_hz = 0.0;
        let occ = stationary_occupancy(&m, &LaserDrive::resonant(5.0), 0.0, Pathway::P1);
        let ps = &m.pathway_switch;
        assert!((occ[0] - ps.k21_hz / (ps.k12_hz + ps.k21_hz)).abs() < 1e-12);
    }
}
