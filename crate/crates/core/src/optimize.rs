//! Bounded Nelder-Mead simplex search with seeded random restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when the spread of objective values across the simplex drops below this.
    pub f_tolerance: f64,
    /// Stop when every vertex lies within this distance of the best one (per coordinate).
    pub x_tolerance: f64,
    /// Initial simplex edge as a fraction of each bound width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evaluations: 400, f_tolerance: 1e-10, x_tolerance: 1e-6, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Minimises `f` inside the box `[lower, upper]` starting from `x0`.
///
/// Trial points outside the box are projected back onto it. Non-finite
/// objective values are treated as +inf.
pub fn nelder_mead<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    assert!(dim > 0 && lower.len() == dim && upper.len() == dim, "bounds must match the start point");
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start, lower, upper);
    let mut simplex = vec![start.clone()];
    for i in 0..dim {
        let width = upper[i] - lower[i];
        let mut v = start.clone();
        let step = opts.initial_step * width;
        v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    let mut converged = false;
    while evaluations.get() < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.f_tolerance) || size <= opts.x_tolerance {
            converged = true;
            break;
        }

        let centroid: Vec<f64> =
            (0..dim).map(|i| simplex[..dim].iter().map(|v| v[i]).sum::<f64>() / dim as f64).collect();
        let towards = |coef: f64| {
            let mut p: Vec<f64> = (0..dim).map(|i| centroid[i] + coef * (simplex[dim][i] - centroid[i])).collect();
            clamp(&mut p, lower, upper);
            p
        };

        let reflected = towards(-1.0);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = towards(-2.0);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let p = towards(-0.5);
            let v = eval(&p);
            (p, v)
        } else {
            let p = towards(0.5);
            let v = eval(&p);
            (p, v)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        for k in 1..=dim {
            let shrunk: Vec<f64> = (0..dim).map(|i| simplex[0][i] + 0.5 * (simplex[k][i] - simplex[0][i])).collect();
            values[k] = eval(&shrunk);
            simplex[k] = shrunk;
        }
    }

    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("simplex is not empty");
    Minimum { x: simplex[best].clone(), value: values[best], evaluations: evaluations.get(), converged }
}

/// Runs [`nelder_mead`] from the box centre and from `restarts` uniformly
/// drawn points, in parallel, and returns the best result.
///
/// Start points depend only on `seed`, so results are reproducible.
/// The returned evaluation count is the total over all starts, and
/// `converged` is true when the winning start converged.
pub fn minimize_with_restarts<F>(
    f: F,
    lower: &[f64],
    upper: &[f64],
    restarts: usize,
    seed: u64,
    opts: &NelderMeadOptions,
) -> Minimum
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>()];
    for _ in 0..restarts {
        starts.push(lower.iter().zip(upper).map(|(a, b)| rng.random_range(*a..=*b)).collect());
    }
    let results: Vec<Minimum> = starts.par_iter().map(|x0| nelder_mead(&f, x0, lower, upper, opts)).collect();
    let total: usize = results.iter().map(|r| r.evaluations).sum();
    let mut best = results
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    best.evaluations = total;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions { max_evaluations: 5000, f_tolerance: 1e-14, x_tolerance: 1e-10, ..Default::default() };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let m = nelder_mead(|x| (x[0] - 5.0).powi(2), &[0.0], &[-1.0], &[1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.3).powi(2) };
        let m = nelder_mead(f, &[0.5], &[-1.0], &[1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 0.3).abs() < 1e-5);
    }

    #[test]
    fn restarts_escape_local_minimum() {
        // Local minimum near x = -1, global near x = 2.
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) * (x[0] - 2.0).powi(2) - 0.5 * x[0];
        let a = minimize_with_restarts(f, &[-3.0], &[3.0], 3, 7, &NelderMeadOptions::default());
        let b = minimize_with_restarts(f, &[-3.0], &[3.0], 3, 7, &NelderMeadOptions::default());
        assert!(a.x[0] > 1.5);
        assert_eq!(a, b);
    }
}
