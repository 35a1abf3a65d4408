use loadgait::gait::{gait_params_for_speed, ClockState};
use loadgait::loads::{LoadKind, LoadParams};
use loadgait::reward::{check_termination, compute_reward, RewardBreakdown, RewardConfig, RewardInputs, RewardMode, TerminationReason};
use loadgait::sim::{build_biped, Biped, ModelParams, SimState, NOMINAL_JOINTS};
use proptest::prelude::*;

fn model(kind: LoadKind) -> (SimState<f64>, Biped<f64>) {
    build_biped(ModelParams::default(), LoadParams::default().spec(kind)).unwrap()
}

fn reward(model: &Biped<f64>, state: &SimState<f64>, command: f64, mode: RewardMode) -> RewardBreakdown<f64> {
    let gait = gait_params_for_speed(command);
    let clock = ClockState::new(gait.cycle_time);
    let inp = RewardInputs { model, state, action: &NOMINAL_JOINTS, prev_action: &NOMINAL_JOINTS, command, clock: &clock, gait: &gait };
    compute_reward(&inp, &RewardConfig::default(), mode).unwrap()
}

#[test]
fn max_reward_is_the_sum_of_weights() {
    let cfg = RewardConfig::default();
    let w = cfg.weights;
    assert!((cfg.max_reward(false) - (w.velocity + w.orientation + w.smoothing + w.foot)).abs() < 1e-12);
    assert!((cfg.max_reward(true) - cfg.max_reward(false) - w.box_distance).abs() < 1e-12);
    let perfect = RewardBreakdown { velocity: 1.0, orientation: 1.0, pelvis_accel: 1.0, torque: 1.0, action_diff: 1.0, foot: 1.0, box_distance: Some(1.0), total: 0.0 };
    assert!((perfect.weighted_sum(&w) - cfg.max_reward(true)).abs() < 1e-12);
    let no_box = RewardBreakdown { box_distance: None, ..perfect };
    assert!((no_box.weighted_sum(&w) - cfg.max_reward(false)).abs() < 1e-12);
}

#[test]
fn perfect_tracking_earns_the_maximum() {
    // A fresh standing state has zero velocity, pitch, torque, acceleration and
    // foot force, so every kernel is at its peak when commanded to stand.
    let cfg = RewardConfig::default();
    let (s, m) = model(LoadKind::Unloaded);
    assert!((reward(&m, &s, 0.0, RewardMode::Specialized).total - cfg.max_reward(false)).abs() < 1e-12);
    let (s, m) = model(LoadKind::TrayBox);
    assert!((reward(&m, &s, 0.0, RewardMode::Specialized).total - cfg.max_reward(true)).abs() < 1e-12);
}

#[test]
fn box_term_only_in_specialized_tray_box() {
    let (s, m) = model(LoadKind::TrayBox);
    assert!(reward(&m, &s, 0.0, RewardMode::Specialized).box_distance.is_some());
    assert!(reward(&m, &s, 0.0, RewardMode::General).box_distance.is_none());
    for kind in [LoadKind::Unloaded, LoadKind::Cart, LoadKind::CarryPole, LoadKind::WaterJug] {
        let (s, m) = model(kind);
        assert!(reward(&m, &s, 0.0, RewardMode::Specialized).box_distance.is_none(), "{kind}");
    }
}

#[test]
fn box_at_rest_on_tray_scores_one() {
    let (s, m) = model(LoadKind::TrayBox);
    assert_eq!(reward(&m, &s, 0.0, RewardMode::Specialized).box_distance, Some(1.0));
}

#[test]
fn velocity_kernel_peaks_at_command() {
    let (mut s, m) = model(LoadKind::Unloaded);
    let mut last = f64::INFINITY;
    for v in [1.0, 1.2, 1.5, 2.0, 3.0] {
        s.qd[0] = v;
        let r = reward(&m, &s, 1.0, RewardMode::General).velocity;
        assert!(r < last || v == 1.0);
        last = r;
    }
    s.qd[0] = 1.0;
    assert_eq!(reward(&m, &s, 1.0, RewardMode::General).velocity, 1.0);
    s.qd[0] = 1.5;
    let expected = (-RewardConfig::default().scales.velocity * 0.25f64).exp();
    assert!((reward(&m, &s, 1.0, RewardMode::General).velocity - expected).abs() < 1e-12);
}

#[test]
fn weightless_model_has_finite_reward() {
    let params = ModelParams { gravity: 0.0, ..ModelParams::default() };
    let (s, m) = build_biped(params, LoadParams::default().spec(LoadKind::Unloaded)).unwrap();
    assert!(reward(&m, &s, 0.5, RewardMode::General).total.is_finite());
}

#[test]
fn low_torso_counts_as_fell() {
    let (mut s, m) = model(LoadKind::Unloaded);
    let cfg = RewardConfig::default();
    let r = reward(&m, &s, 0.0, RewardMode::General);
    assert_eq!(check_termination(&s, &r, &m.load_spec, &cfg), TerminationReason::None);
    s.q[1] = cfg.height_floor - 1e-6;
    assert_eq!(check_termination(&s, &r, &m.load_spec, &cfg), TerminationReason::Fell);
    // A fall outranks a low reward.
    let poor = RewardBreakdown { total: 0.0, ..r };
    assert_eq!(check_termination(&s, &poor, &m.load_spec, &cfg), TerminationReason::Fell);
    s.q[1] = cfg.height_floor + 0.1;
    assert_eq!(check_termination(&s, &poor, &m.load_spec, &cfg), TerminationReason::RewardFloor);
}

#[test]
fn box_below_threshold_is_dropped() {
    let (mut s, m) = model(LoadKind::TrayBox);
    let cfg = RewardConfig::default();
    let r = reward(&m, &s, 0.0, RewardMode::Specialized);
    let threshold = LoadParams::<f64>::default().tray_box.drop_threshold;
    s.load.as_mut().unwrap().q[1] = -threshold + 1e-3;
    assert_eq!(check_termination(&s, &r, &m.load_spec, &cfg), TerminationReason::None);
    s.load.as_mut().unwrap().q[1] = -threshold - 1e-3;
    assert_eq!(check_termination(&s, &r, &m.load_spec, &cfg), TerminationReason::BoxDropped);
}

#[test]
fn only_physical_failures_count_in_evaluation() {
    assert!(TerminationReason::Fell.is_failure());
    assert!(TerminationReason::BoxDropped.is_failure());
    assert!(TerminationReason::Divergence.is_failure());
    assert!(!TerminationReason::RewardFloor.is_failure());
    assert!(TerminationReason::RewardFloor.is_terminal());
    assert!(!TerminationReason::None.is_terminal());
}

proptest! {
    #[test]
    fn reward_is_bounded(
        vx in -5.0f64..5.0,
        pitch in -1.5f64..1.5,
        rate in -10.0f64..10.0,
        command in 0.0f64..4.0,
        force in -1000.0f64..3000.0,
        torque in -150.0f64..150.0,
    ) {
        let (mut s, m) = model(LoadKind::TrayBox);
        s.qd[0] = vx;
        s.q[2] = pitch;
        s.qd[2] = rate;
        s.diag.foot_forces = [[0.0, force], [0.0, 0.5 * force]];
        s.diag.torques = [torque; 4];
        let cfg = RewardConfig::default();
        for mode in [RewardMode::Specialized, RewardMode::General] {
            let r = reward(&m, &s, command, mode);
            prop_assert!(r.total >= 0.0);
            prop_assert!(r.total <= cfg.max_reward(r.box_distance.is_some()) + 1e-12);
            prop_assert!((r.total - r.weighted_sum(&cfg.weights)).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn box_term_ignores_where_the_robot_stands(dx in -50.0f64..50.0, dz in -0.2f64..0.5, slide in -0.1f64..0.1, lift in 0.0f64..0.05) {
        let (mut s, m) = model(LoadKind::TrayBox);
        s.load.as_mut().unwrap().q = vec![slide, lift];
        let here = reward(&m, &s, 0.0, RewardMode::Specialized).box_distance.unwrap();
        s.q[0] += dx;
        s.q[1] += dz;
        let there = reward(&m, &s, 0.0, RewardMode::Specialized).box_distance.unwrap();
        prop_assert!((here - there).abs() < 1e-12);
        prop_assert!(here < 1.0 || (slide == 0.0 && lift == 0.0));
    }
}
