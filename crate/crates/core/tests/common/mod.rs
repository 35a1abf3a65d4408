//! Oracles shared by the regular tests and the acceptance target.
#![allow(dead_code)]

use loadgait::loads::{load_coupling, CarryPoleParams, LoadSpec, LoadState, TorsoKinematics, WaterJugParams};
use loadgait::policy::{gaussian_log_prob, BpttStep, NetShape, RecurrentActorCritic};
use loadgait::seed;
use loadgait::sim::{build_biped, ModelParams, PDGains, DT_INNER, N_INNER};
use rand::Rng;

const G: f64 = 9.81;

pub fn shape() -> NetShape {
    NetShape { obs_dim: 6, act_dim: 3, width: 8, layers: 2 }
}

pub fn episode(rng: &mut seed::Rng, len: usize) -> Vec<BpttStep<f64>> {
    (0..len)
        .map(|_| BpttStep {
            obs: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..3).map(|_| rng.random_range(-0.5..0.5)).collect(),
            logp_weight: rng.random_range(-1.0..1.0),
            value_weight: rng.random_range(0.0..1.0),
            value_target: rng.random_range(-2.0..2.0),
        })
        .collect()
}

pub fn loss(net: &RecurrentActorCritic<f64>, ep: &[BpttStep<f64>]) -> f64 {
    let obs: Vec<Vec<f64>> = ep.iter().map(|s| s.obs.clone()).collect();
    let trace = net.forward_sequence(&obs).unwrap();
    ep.iter()
        .enumerate()
        .map(|(t, s)| s.logp_weight * gaussian_log_prob(&trace.means[t], net.log_std(), &s.action) + s.value_weight * 0.5 * (trace.values[t] - s.value_target).powi(2))
        .sum()
}

/// Largest relative error between BPTT and central differences over all parameters.
pub fn max_fd_error(master: u64) -> f64 {
    let mut rng = seed::rng(master, &[]);
    let mut net = RecurrentActorCritic::<f64>::new(shape(), &[0.1, -0.2, 0.3], 0.3, &mut rng).unwrap();
    // non-trivial heads so every path carries gradient
    for p in net.params_mut().iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let ep = episode(&mut rng, 20);
    let grad = net.bptt_gradients(&ep).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(&net, &ep);
        net.params_mut()[i] = orig - h;
        let down = loss(&net, &ep);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-3);
        worst = worst.max(err);
    }
    worst
}

/// Largest relative energy change of an undamped, weightless biped tumbling
/// through the air for 10 s.
pub fn free_flight_energy_drift() -> f64 {
    let params = ModelParams { gravity: 0.0, joint_damping: [0.0; 4], ..ModelParams::default() };
    let (_, model) = build_biped(params, LoadSpec::Unloaded).unwrap();
    let mut s = model.standing_state(&[0.5, -0.9, -0.3, -0.2]);
    s.q[1] += 2.0;
    s.qd = [0.3, 0.1, 1.5, -2.0, 3.0, 2.5, -1.0];
    let e0 = model.mechanical_energy(&s);
    let gains = PDGains { kp: [0.0; 4], kd: [0.0; 4] };
    let mut worst: f64 = 0.0;
    for _ in 0..400 {
        s = model.step(&s, &[0.0; 4], &gains, DT_INNER, N_INNER).unwrap();
        worst = worst.max((model.mechanical_energy(&s) - e0).abs());
    }
    worst / e0
}

/// Mean spacing of upward zero crossings, linearly interpolated.
pub fn zero_crossing_period(samples: &[f64], dt: f64) -> f64 {
    let mut ups = Vec::new();
    for i in 1..samples.len() {
        if samples[i - 1] < 0.0 && samples[i] >= 0.0 {
            let frac = -samples[i - 1] / (samples[i] - samples[i - 1]);
            ups.push((i as f64 - 1.0 + frac) * dt);
        }
    }
    assert!(ups.len() >= 3, "too few oscillations");
    (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64
}

/// Series of load coordinate `coord` on a fixed torso after displacing it by `x0`.
fn free_oscillation(spec: &LoadSpec<f64>, coord: usize, x0: f64, seconds: f64) -> Vec<f64> {
    let torso = TorsoKinematics::stationary([0.0, 0.9], 0.0);
    let mut state = LoadState::at_rest(spec, torso.pos, 0.0).unwrap();
    state.q[coord] = x0;
    let dt = 5e-4;
    (0..(seconds / dt) as usize)
        .map(|_| {
            state = load_coupling(&state, spec, &torso, G, dt).unwrap().0;
            state.q[coord]
        })
        .collect()
}

/// Relative error of the carry-pole weight's small-swing period against 2π√(L/g).
pub fn pendulum_period_error(rope_length: f64) -> f64 {
    let spec = LoadSpec::CarryPole(CarryPoleParams { rope_length, ..Default::default() });
    let xs = free_oscillation(&spec, 0, 0.05, 8.0);
    let expected = 2.0 * std::f64::consts::PI * (rope_length / G).sqrt();
    (zero_crossing_period(&xs, 5e-4) - expected).abs() / expected
}

/// Relative error of the undamped slosh frequency against √(k/m)/2π.
pub fn slosh_frequency_error(k: f64, m: f64) -> f64 {
    let spec = LoadSpec::WaterJug(WaterJugParams { slosh_mass: m, stiffness: [k, k], damping: [0.0, 0.0], travel_limit: 10.0, ..Default::default() });
    let xs = free_oscillation(&spec, 0, 0.02, 5.0);
    let expected = (k / m).sqrt() / (2.0 * std::f64::consts::PI);
    (1.0 / zero_crossing_period(&xs, 5e-4) - expected).abs() / expected
}
