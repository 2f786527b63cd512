//! Adaptive explicit Runge-Kutta 5(4) integration with the Tsitouras pair.
//!
//! The fifth-order solution is propagated (local extrapolation) and the
//! embedded fourth-order solution only drives step-size control. Steps are
//! clipped so that every requested output time is hit exactly; there is no
//! dense output.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid time span [{start}, {end}]")]
    InvalidSpan { start: f64, end: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state contains non-finite values")]
    NonFiniteInitialState,
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64, state: Vec<f64> },
    #[error("derivative became non-finite at t = {t}")]
    Divergence { t: f64 },
    #[error("step size underflow (dt = {dt}) at t = {t}")]
    StepSizeUnderflow { t: f64, dt: f64 },
}

/// Tolerances, limits and output sampling for [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Limit on attempted (accepted + rejected) steps.
    pub max_steps: usize,
    /// First trial step (s).
    pub initial_dt: f64,
    /// Largest allowed step; `None` for unbounded.
    pub max_dt: Option<f64>,
    /// Sorted sample times. Empty means "only the end of the span".
    pub output_times: Vec<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 50_000_000,
            initial_dt: 1e-9,
            max_dt: None,
            output_times: Vec::new(),
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    pub fn with_initial_dt(mut self, dt: f64) -> Self {
        self.initial_dt = dt;
        self
    }

    /// `points` evenly spaced samples covering `[start, end]` inclusive.
    pub fn with_uniform_outputs(mut self, start: f64, end: f64, points: usize) -> Self {
        self.output_times = linspace(start, end, points);
        self
    }

    fn validate(&self, start: f64, end: f64) -> Result<(), OdeError> {
        let bad = |msg: &str| Err(OdeError::InvalidConfig(msg.to_string()));
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return bad("rtol and atol must be positive");
        }
        if !(self.initial_dt > 0.0) {
            return bad("initial_dt must be positive");
        }
        if let Some(max_dt) = self.max_dt {
            if !(max_dt > 0.0) {
                return bad("max_dt must be positive");
            }
        }
        if self.output_times.windows(2).any(|w| !(w[1] >= w[0])) {
            return bad("output_times must be nondecreasing");
        }
        if let (Some(&first), Some(&last)) = (self.output_times.first(), self.output_times.last()) {
            if first < start || last > end {
                return bad("output_times must lie inside the integration span");
            }
        }
        Ok(())
    }
}

/// `points` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![end],
        _ => {
            let step = (end - start) / (points - 1) as f64;
            let mut v: Vec<f64> = (0..points).map(|i| start + step * i as f64).collect();
            v[points - 1] = end;
            v
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Sampled solution: one state per requested output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Butcher tableau of the Tsitouras 5(4) pair.
pub mod tableau {
    pub const STAGES: usize = 7;

    pub const C: [f64; STAGES] = [0.0, 0.161, 0.327, 0.9, 0.980_025_540_904_509_7, 1.0, 1.0];

    pub const A: [[f64; STAGES]; STAGES] = [
        [0.0; STAGES],
        [0.161, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [-0.008_480_655_492_356_989, 0.335_480_655_492_357, 0.0, 0.0, 0.0, 0.0, 0.0],
        [2.897_153_057_105_493, -6.359_448_489_975_075, 4.362_295_432_869_581_5, 0.0, 0.0, 0.0, 0.0],
        [
            5.325_864_828_439_257,
            -11.748_883_564_062_828,
            7.495_539_342_889_836_5,
            -0.092_495_066_361_755_25,
            0.0,
            0.0,
            0.0,
        ],
        [
            5.861_455_442_946_42,
            -12.920_969_317_847_11,
            8.159_367_898_576_159,
            -0.071_584_973_281_401,
            -0.028_269_050_394_068_383,
            0.0,
            0.0,
        ],
        [
            0.096_460_766_818_065_23,
            0.01,
            0.479_889_650_414_499_6,
            1.379_008_574_103_742,
            -3.290_069_515_436_081,
            2.324_710_524_099_774,
            0.0,
        ],
    ];

    /// Fifth-order weights; equal to the last row of `A` (first same as last).
    pub const B: [f64; STAGES] = [
        0.096_460_766_818_065_23,
        0.01,
        0.479_889_650_414_499_6,
        1.379_008_574_103_742,
        -3.290_069_515_436_081,
        2.324_710_524_099_774,
        0.0,
    ];

    /// Difference between the fifth- and fourth-order weights.
    pub const B_ERR: [f64; STAGES] = [
        -0.001_780_011_052_225_777,
        -0.000_816_434_459_656_746_9,
        0.007_880_878_010_261_995,
        -0.144_711_007_173_262_9,
        0.582_357_165_452_555_2,
        -0.458_082_105_929_186_97,
        1.0 / 66.0,
    ];
}

struct Workspace {
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: vec![vec![0.0; n]; tableau::STAGES],
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }
}

/// One Tsitouras step from `(t, y)` with `ws.k[0]` already holding f(t, y).
/// Leaves the new state in `ws.y_new`, f(t+dt, y_new) in `ws.k[6]`, and
/// returns the weighted RMS error norm.
fn attempt_step<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    dt: f64,
    ws: &mut Workspace,
    rtol: f64,
    atol: f64,
    stats: &mut StepStats,
) -> Result<f64, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    use tableau::{A, B, B_ERR, C, STAGES};
    let n = y.len();
    for s in 1..STAGES {
        {
            let (done, rest) = ws.k.split_at_mut(s);
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in done.iter().enumerate() {
                    acc += A[s][j] * kj[i];
                }
                ws.stage[i] = y[i] + dt * acc;
            }
            rhs(t + C[s] * dt, &ws.stage, &mut rest[0]);
        }
        stats.rhs_evals += 1;
        if ws.k[s].iter().any(|v| !v.is_finite()) {
            return Err(OdeError::Divergence { t: t + C[s] * dt });
        }
    }
    // Stage 7 is evaluated at y + dt * sum(B * k), i.e. the new state.
    ws.y_new.copy_from_slice(&ws.stage);
    let mut sum = 0.0;
    for i in 0..n {
        let mut err = 0.0;
        for s in 0..STAGES {
            err += B_ERR[s] * ws.k[s][i];
        }
        let scale = atol + rtol * y[i].abs().max(ws.y_new[i].abs());
        let r = dt * err / scale;
        sum += r * r;
    }
    debug_assert!(B.iter().zip(A[6].iter()).all(|(b, a)| b == a));
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

/// Integrates `dy/dt = rhs(t, y)` over `t_span` and samples the solution at
/// `config.output_times` (or at the span end when none are given).
pub fn integrate<F>(rhs: F, y0: &[f64], t_span: (f64, f64), config: &IntegratorConfig) -> Result<Trajectory, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_observed(rhs, y0, t_span, config, |_, _| {})
}

/// Like [`integrate`], and also calls `observer(t, y)` after every accepted step.
pub fn integrate_observed<F, O>(
    mut rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    config: &IntegratorConfig,
    mut observer: O,
) -> Result<Trajectory, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    let (start, end) = t_span;
    if !(start.is_finite() && end.is_finite() && start < end) {
        return Err(OdeError::InvalidSpan { start, end });
    }
    config.validate(start, end)?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteInitialState);
    }
    let outputs: Vec<f64> =
        if config.output_times.is_empty() { vec![end] } else { config.output_times.clone() };

    let n = y0.len();
    let mut ws = Workspace::new(n);
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut t = start;
    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t {
        times.push(outputs[next_out]);
        states.push(y.clone());
        next_out += 1;
    }

    rhs(t, &y, &mut ws.k[0]);
    stats.rhs_evals += 1;
    if ws.k[0].iter().any(|v| !v.is_finite()) {
        return Err(OdeError::Divergence { t });
    }

    let mut dt_natural = config.initial_dt;
    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;
    while t < end {
        if stats.accepted + stats.rejected >= config.max_steps {
            return Err(OdeError::MaxStepsExceeded { max_steps: config.max_steps, t, state: y });
        }
        if let Some(max_dt) = config.max_dt {
            dt_natural = dt_natural.min(max_dt);
        }
        let target = if next_out < outputs.len() { outputs[next_out] } else { end };
        let remaining = target - t;
        let clipped = dt_natural >= remaining;
        let dt = if clipped { remaining } else { dt_natural };
        if dt <= 1e-15 * t.abs().max(end.abs()) && !clipped {
            return Err(OdeError::StepSizeUnderflow { t, dt });
        }

        let err = attempt_step(&mut rhs, t, &y, dt, &mut ws, config.rtol, config.atol, &mut stats)?;
        if err <= 1.0 {
            stats.accepted += 1;
            t = if clipped { target } else { t + dt };
            std::mem::swap(&mut y, &mut ws.y_new);
            ws.k.swap(0, tableau::STAGES - 1);
            let err = err.max(1e-10);
            let mut factor = SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                factor = factor.min(1.0);
            }
            let proposal = dt * factor;
            dt_natural = if clipped { proposal.max(dt_natural) } else { proposal };
            err_prev = err;
            last_rejected = false;
            observer(t, &y);
            while next_out < outputs.len() && outputs[next_out] <= t {
                times.push(outputs[next_out]);
                states.push(y.clone());
                next_out += 1;
            }
        } else {
            stats.rejected += 1;
            let factor = (SAFETY * err.powf(-PI_ALPHA)).clamp(MIN_FACTOR, 1.0);
            dt_natural = dt * factor;
            last_rejected = true;
        }
    }
    Ok(Trajectory { times, states, stats })
}

/// Integrates with `steps` equal steps of the fifth-order formula and no
/// error control. Used for convergence studies.
pub fn integrate_fixed<F>(mut rhs: F, y0: &[f64], t_span: (f64, f64), steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (start, end) = t_span;
    let dt = (end - start) / steps as f64;
    let mut ws = Workspace::new(y0.len());
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    rhs(start, &y, &mut ws.k[0]);
    for i in 0..steps {
        let t = start + dt * i as f64;
        // Error norm is irrelevant here; any finite tolerance works.
        let _ = attempt_step(&mut rhs, t, &y, dt, &mut ws, 1.0, 1.0, &mut stats);
        std::mem::swap(&mut y, &mut ws.y_new);
        ws.k.swap(0, tableau::STAGES - 1);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::tableau::*;
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn a_times(v: &[f64]) -> Vec<f64> {
        (0..STAGES).map(|i| dot(&A[i], v)).collect()
    }

    fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x * y).collect()
    }

    /// (weights . tree, expected) for all rooted trees up to `order`.
    fn order_conditions(b: &[f64], order: usize) -> Vec<(f64, f64)> {
        let c = C.to_vec();
        let one = vec![1.0; STAGES];
        let c2 = hadamard(&c, &c);
        let c3 = hadamard(&c2, &c);
        let ac = a_times(&c);
        let ac2 = a_times(&c2);
        let aac = a_times(&ac);
        let mut out = vec![(dot(b, &one), 1.0), (dot(b, &c), 0.5)];
        if order >= 3 {
            out.push((dot(b, &c2), 1.0 / 3.0));
            out.push((dot(b, &ac), 1.0 / 6.0));
        }
        if order >= 4 {
            out.push((dot(b, &c3), 0.25));
            out.push((dot(b, &hadamard(&c, &ac)), 1.0 / 8.0));
            out.push((dot(b, &ac2), 1.0 / 12.0));
            out.push((dot(b, &aac), 1.0 / 24.0));
        }
        if order >= 5 {
            out.push((dot(b, &hadamard(&c3, &c)), 0.2));
            out.push((dot(b, &hadamard(&c2, &ac)), 0.1));
            out.push((dot(b, &hadamard(&ac, &ac)), 1.0 / 20.0));
            out.push((dot(b, &hadamard(&c, &ac2)), 1.0 / 15.0));
            out.push((dot(b, &hadamard(&c, &aac)), 1.0 / 30.0));
            out.push((dot(b, &a_times(&c3)), 1.0 / 20.0));
            out.push((dot(b, &a_times(&hadamard(&c, &ac))), 1.0 / 40.0));
            out.push((dot(b, &a_times(&ac2)), 1.0 / 60.0));
            out.push((dot(b, &a_times(&aac)), 1.0 / 120.0));
        }
        out
    }

    #[test]
    fn tableau_row_sums_match_nodes() {
        for i in 0..STAGES {
            let sum: f64 = A[i].iter().sum();
            assert!((sum - C[i]).abs() < 1e-14, "row {i}: {sum} vs {}", C[i]);
        }
        assert_eq!(B, A[6]);
    }

    #[test]
    fn fifth_order_conditions_hold() {
        for (k, (value, expected)) in order_conditions(&B, 5).into_iter().enumerate() {
            assert!((value - expected).abs() < 1e-14, "condition {k}: {value} vs {expected}");
        }
    }

    #[test]
    fn embedded_pair_is_fourth_order() {
        let b_hat: Vec<f64> = B.iter().zip(B_ERR.iter()).map(|(b, e)| b - e).collect();
        for (k, (value, expected)) in order_conditions(&b_hat, 4).into_iter().enumerate() {
            assert!((value - expected).abs() < 1e-14, "condition {k}: {value} vs {expected}");
        }
        assert!(B_ERR.iter().sum::<f64>().abs() < 1e-14);
        // ...and genuinely not fifth order, otherwise the estimate would be useless.
        let fifth = order_conditions(&b_hat, 5);
        assert!(fifth.iter().any(|(v, e)| (v - e).abs() > 1e-6));
    }

    fn decay(_: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0];
    }

    fn oscillator(_: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn exponential_decay() {
        let cfg = IntegratorConfig::default().with_initial_dt(1e-3);
        let traj = integrate(decay, &[1.0], (0.0, 1.0), &cfg).unwrap();
        assert_eq!(traj.times, vec![1.0]);
        let y = traj.last_state()[0];
        assert!((y - (-1.0f64).exp()).abs() < 10.0 * cfg.rtol, "{y}");
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let cfg = IntegratorConfig::default();
        let tau = std::f64::consts::TAU;
        let traj = integrate(oscillator, &[1.0, 0.0], (0.0, tau), &cfg).unwrap();
        let y = traj.last_state();
        assert!((y[0] - 1.0).abs() < 100.0 * cfg.rtol);
        assert!(y[1].abs() < 100.0 * cfg.rtol);
    }

    #[test]
    fn outputs_land_exactly_on_requested_times() {
        let times = vec![0.0, 0.1, 0.1, 0.25, 0.7, 1.0];
        let cfg = IntegratorConfig::default().with_output_times(times.clone());
        let traj = integrate(decay, &[2.0], (0.0, 1.0), &cfg).unwrap();
        assert_eq!(traj.times, times);
        assert_eq!(traj.states.len(), times.len());
        assert_eq!(traj.states[0], vec![2.0]);
        for (t, y) in traj.times.iter().zip(&traj.states) {
            assert!((y[0] - 2.0 * (-t).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn fixed_step_order_is_five() {
        let exact = [1.0f64.cos(), -1.0f64.sin()];
        let err = |steps| {
            let y = integrate_fixed(oscillator, &[1.0, 0.0], (0.0, 1.0), steps);
            ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt()
        };
        let order = (err(10) / err(20)).log2();
        assert!(order > 4.8 && order < 5.5, "observed order {order}");
    }

    #[test]
    fn divergence_is_reported_with_time() {
        let blowup = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let cfg = IntegratorConfig::default().with_initial_dt(1e-3);
        match integrate(blowup, &[1.0], (0.0, 2.0), &cfg) {
            Err(OdeError::Divergence { t }) | Err(OdeError::StepSizeUnderflow { t, .. }) => {
                assert!(t > 0.9 && t < 1.1, "{t}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_steps_carries_last_state() {
        let cfg = IntegratorConfig { max_steps: 3, ..IntegratorConfig::default() };
        match integrate(decay, &[1.0], (0.0, 10.0), &cfg) {
            Err(OdeError::MaxStepsExceeded { state, t, .. }) => {
                assert_eq!(state.len(), 1);
                assert!(t > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = IntegratorConfig::default();
        assert!(matches!(
            integrate(decay, &[1.0], (1.0, 1.0), &cfg),
            Err(OdeError::InvalidSpan { .. })
        ));
        assert_eq!(
            integrate(decay, &[f64::NAN], (0.0, 1.0), &cfg),
            Err(OdeError::NonFiniteInitialState)
        );
        let cfg = cfg.with_output_times(vec![0.5, 0.2]);
        assert!(matches!(integrate(decay, &[1.0], (0.0, 1.0), &cfg), Err(OdeError::InvalidConfig(_))));
    }

    #[test]
    fn rejected_steps_do_not_advance_time() {
        // A huge first step forces rejections; results must still be accurate.
        let cfg = IntegratorConfig::default().with_initial_dt(10.0);
        let traj = integrate(decay, &[1.0], (0.0, 5.0), &cfg).unwrap();
        assert!(traj.stats.rejected > 0);
        assert!((traj.last_state()[0] - (-5.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let cfg = IntegratorConfig::default().with_uniform_outputs(0.0, 3.0, 31);
        let a = integrate(oscillator, &[1.0, 0.3], (0.0, 3.0), &cfg).unwrap();
        let b = integrate(oscillator, &[1.0, 0.3], (0.0, 3.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observer_sees_every_accepted_step_in_order() {
        let cfg = IntegratorConfig::default().with_initial_dt(10.0);
        let mut seen = Vec::new();
        let traj = integrate_observed(decay, &[1.0], (0.0, 5.0), &cfg, |t, y| seen.push((t, y[0]))).unwrap();
        assert_eq!(seen.len(), traj.stats.accepted);
        assert!(seen.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(seen.last().unwrap().0, 5.0);
        assert_eq!(seen.last().unwrap().1, traj.last_state()[0]);
    }
}
