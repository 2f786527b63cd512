use maser_core::ode::{integrate, integrate_observed, IntegratorConfig, OdeError};

/// Classical fixed-step RK4, used as an independent reference.
fn rk4(f: impl Fn(f64, f64) -> f64, y0: f64, t_end: f64, steps: usize) -> f64 {
    let h = t_end / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, y + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, y + h / 2.0 * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[test]
fn mildly_stiff_relaxation_matches_fine_rk4() {
    let f = |t: f64, y: f64| -50.0 * (y - t.cos());
    let reference = rk4(f, 0.0, 1.5, 1_000_000);
    let cfg = IntegratorConfig::default().with_tolerances(1e-10, 1e-12).with_initial_dt(1e-4);
    let traj = integrate(|t, y, dy| dy[0] = f(t, y[0]), &[0.0], (0.0, 1.5), &cfg).unwrap();
    assert!((traj.last_state()[0] - reference).abs() < 1e-8, "{} vs {reference}", traj.last_state()[0]);
}

#[test]
fn outputs_land_exactly_on_requested_times() {
    let times = vec![0.0, 0.1, 0.25, 0.7, 1.0];
    let cfg = IntegratorConfig::default().with_output_times(times.clone()).with_initial_dt(1e-3);
    let traj = integrate(|_t, y, dy| dy[0] = -y[0], &[1.0], (0.0, 1.0), &cfg).unwrap();
    assert_eq!(traj.times, times);
    for (t, y) in traj.times.iter().zip(&traj.states) {
        assert!((y[0] - (-t).exp()).abs() < 1e-9);
    }
}

/// Seed-and-depletion pulse: x grows while s > 1, then burns out.
fn pulse(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = 400.0 * y[0] * (y[1] - 1.0);
    dy[1] = -400.0 * y[0] * y[1];
}

#[test]
fn observer_maximum_catches_narrow_peak() {
    let y0 = [1e-6, 2.0];
    let dense = IntegratorConfig::default().with_uniform_outputs(0.0, 1.0, 100_001);
    let reference = integrate(pulse, &y0, (0.0, 1.0), &dense).unwrap().states.iter().map(|y| y[0]).fold(0.0, f64::max);
    let coarse = IntegratorConfig::default().with_uniform_outputs(0.0, 1.0, 11);
    let sampled = integrate(pulse, &y0, (0.0, 1.0), &coarse).unwrap().states.iter().map(|y| y[0]).fold(0.0, f64::max);
    let mut observed: f64 = 0.0;
    integrate_observed(pulse, &y0, (0.0, 1.0), &IntegratorConfig::default(), |_t, y| observed = observed.max(y[0])).unwrap();
    assert!(sampled < 0.5 * reference, "coarse sampling should miss the pulse: {sampled} vs {reference}");
    assert!(observed > 0.99 * reference, "{observed} vs {reference}");
}

#[test]
fn divergence_is_reported() {
    let cfg = IntegratorConfig::default();
    let err = integrate(|_t, y, dy| dy[0] = y[0] * y[0], &[1.0], (0.0, 2.0), &cfg).unwrap_err();
    assert!(matches!(err, OdeError::Divergence { .. } | OdeError::StepSizeUnderflow { .. } | OdeError::MaxStepsExceeded { .. }), "{err}");
}
