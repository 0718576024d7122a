//! Variational representation of the risk-sensitive criterion.
//!
//! The stage-`l` value `-eps log E exp(-theta_l tau_l / eps)` equals an
//! infimum over adapted disturbances of `E[ (1/2)∫|v|^2 + theta_l tau ]`
//! along the disturbance-shifted dynamics, with the shifted control reading
//! the translated noise prefix. We minimize over deterministic
//! piecewise-constant `v` only, so the minimized right side is a certified
//! upper bound of the left side; the reported gap measures how much the
//! restriction loses.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate_exits, NoiseMode, SimOptions, Trajectory};
use crate::error::{Error, Result};
use crate::law::{shift_strategy, ControlLaw, DisturbanceLaw};
use crate::model::CascadeSpec;
use crate::optimize::{maximize, CrossEntropy, SearchSpace};
use crate::risk::{estimate_risk_sensitive, Estimate};
use crate::rng::{derive_seed, path_rng, TAG_FRESH_EVAL, TAG_OPTIMIZER};

/// Discrete Girsanov exponent of the measure shift `W -> W + eps^{-1/2} ∫ v`
/// along a stored path: `Σ_k [ eps^{-1/2} v(t_k)·ΔW_k - |v(t_k)|^2 dt / (2 eps) ]`
/// with left-point evaluation matching the Euler grid.
pub fn girsanov_log_density(traj: &Trajectory, v: &DisturbanceLaw, epsilon: f64) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let noise = traj
        .noise
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("trajectory carries no noise increments".into()))?;
    let inv_sqrt_eps = epsilon.powf(-0.5);
    let mut acc = 0.0;
    for k in 0..noise.len() {
        let t = traj.times[k];
        let dt = traj.times[k + 1] - t;
        let vk = v.value_at(t);
        let dw = noise.row(k);
        let mut dot = 0.0;
        let mut sq = 0.0;
        for (a, b) in vk.iter().zip(dw) {
            dot += a * b;
            sq += a * a;
        }
        acc += inv_sqrt_eps * dot - sq * dt / (2.0 * epsilon);
    }
    Ok(acc)
}

/// Monte Carlo check of the relative-entropy bound for a deterministic
/// disturbance at unit Wiener scale: the law of `W + ∫ v` has
/// `KL = (1/2)∫|v|^2`, estimated as the mean log-density under the shifted
/// measure, and is bounded by `∫|v|^2`.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyCheck {
    pub kl_estimate: f64,
    pub std_error: f64,
    /// `∫_0^T |v|^2 dt` (the bound).
    pub bound: f64,
    /// Exact KL of the shifted Wiener law, `(1/2)∫|v|^2`, for reference.
    pub exact_kl: f64,
    pub ok: bool,
}

pub fn relative_entropy_check(
    v: &DisturbanceLaw,
    t_max: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EntropyCheck> {
    if n_samples < 2 || dt <= 0.0 || t_max < dt {
        return Err(Error::InvalidArgument(
            "need n >= 2, dt > 0 and t_max >= dt".into(),
        ));
    }
    let m = v.dim();
    let steps = (t_max / dt).round() as usize;
    let sqrt_dt = dt.sqrt();
    let samples: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(seed, path);
            let mut z = 0.0;
            for k in 0..steps {
                let t = k as f64 * dt;
                let vk = v.value_at(t);
                for j in 0..m {
                    use rand::Rng;
                    let dw: f64 = sqrt_dt * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    // increment under the shifted measure
                    let shifted = dw + vk[j] * dt;
                    z += vk[j] * shifted - 0.5 * vk[j] * vk[j] * dt;
                }
            }
            z
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let bound = v.table.integral_sq_to(t_max);
    Ok(EntropyCheck {
        kl_estimate: mean,
        std_error,
        bound,
        exact_kl: 0.5 * bound,
        ok: mean <= bound + 3.0 * std_error,
    })
}

/// Left-Riemann quadrature of `|v|^2` on `[0, tau]` on the integration grid,
/// with the partial final cell weighted by the exit interpolation fraction.
pub fn running_cost_quadrature(v: &DisturbanceLaw, tau: f64, fraction: f64, crossing_index: usize, dt: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..crossing_index {
        let vk = v.value_at(k as f64 * dt);
        let sq: f64 = vk.iter().map(|x| x * x).sum();
        acc += sq * dt;
    }
    // partial cell (zero-width when the exit sits on a grid point)
    if tau > crossing_index as f64 * dt {
        let vk = v.value_at(crossing_index as f64 * dt);
        let sq: f64 = vk.iter().map(|x| x * x).sum();
        acc += sq * dt * fraction;
    }
    acc
}

/// Both sides of the variational representation on a restricted disturbance
/// class.
#[derive(Debug, Clone, Serialize)]
pub struct VariationalResult {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub best_v: DisturbanceLaw,
    pub gap: f64,
    pub gap_std_error: f64,
    pub class: String,
    pub censored_any: bool,
}

#[derive(Debug, Clone)]
pub struct VariationalConfig {
    /// Pieces of the deterministic disturbance class.
    pub pieces: usize,
    /// Horizon covered by the pieces (hold-last afterwards); defaults to the
    /// scenario horizon.
    pub horizon: Option<f64>,
    pub ce: CrossEntropy,
    pub inner_samples: usize,
    pub n_samples: usize,
    /// Standard deviation for the optimizer's initial population.
    pub init_std: f64,
    /// Warm-start disturbances injected into the first population.
    pub warm_starts: Vec<DisturbanceLaw>,
}

impl VariationalConfig {
    pub fn new(pieces: usize, inner_samples: usize, n_samples: usize) -> Self {
        VariationalConfig {
            pieces,
            horizon: None,
            ce: CrossEntropy::default(),
            inner_samples,
            n_samples,
            init_std: 1.5,
            warm_starts: Vec::new(),
        }
    }
}

fn disturbance_from_params(params: &[f64], pieces: usize, m: usize, horizon: f64) -> DisturbanceLaw {
    let breakpoints: Vec<f64> = (0..=pieces)
        .map(|i| horizon * i as f64 / pieces as f64)
        .collect();
    let values: Vec<Vec<f64>> = (0..pieces)
        .map(|p| params[p * m..(p + 1) * m].to_vec())
        .collect();
    DisturbanceLaw::new(breakpoints, values)
}

/// Lift a disturbance onto a finer uniform class (same function of time) so
/// warm starts from coarser classes evaluate identically under common random
/// numbers.
pub fn lift_disturbance(v: &DisturbanceLaw, pieces: usize, m: usize, horizon: f64) -> Vec<f64> {
    let mut params = Vec::with_capacity(pieces * m);
    for p in 0..pieces {
        let t = horizon * p as f64 / pieces as f64;
        params.extend_from_slice(v.value_at(t));
    }
    params
}

/// Mean shifted-system cost `(1/2)∫_0^tau |v|^2 + theta tau` over
/// common-random-number paths.
fn mean_shifted_cost(
    spec: &CascadeSpec,
    shifted_controls: &[ControlLaw],
    v: &DisturbanceLaw,
    l: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let theta = spec.subsystems[l].theta;
    let dt = spec.dt;
    let costs: Vec<(f64, bool)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|path| -> Result<(f64, bool)> {
            let exits = simulate_exits(
                spec,
                shifted_controls,
                NoiseMode::Stochastic {
                    seed,
                    path_index: path,
                },
                SimOptions {
                    shift: Some(v),
                    stop_at_exit: Some(l),
                    ..SimOptions::default()
                },
            )?;
            let rec = exits[l];
            let run = running_cost_quadrature(v, rec.tau, rec.fraction, rec.crossing_index, dt);
            Ok((0.5 * run + theta * rec.tau, rec.censored))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = costs.len() as f64;
    let mean = costs.iter().map(|(c, _)| c).sum::<f64>() / n;
    let var = costs
        .iter()
        .map(|(c, _)| (c - mean) * (c - mean))
        .sum::<f64>()
        / (n - 1.0);
    let censored = costs.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((mean, (var / n).sqrt(), censored))
}

/// Minimize the variational right side over the deterministic
/// piecewise-constant class; the left side is the plain risk-sensitive
/// estimate of the unshifted system. The zero disturbance always competes,
/// so the minimized cost never exceeds the risk-neutral bound
/// `E[theta tau]` on the common samples.
pub fn solve_variational_rhs(
    spec: &CascadeSpec,
    gamma: &ControlLaw,
    l: usize,
    cfg: &VariationalConfig,
    seed: u64,
) -> Result<VariationalResult> {
    if spec.epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if cfg.pieces == 0 {
        return Err(Error::InvalidArgument("need at least one piece".into()));
    }
    let m = spec.noise_dim();
    let horizon = cfg.horizon.unwrap_or(spec.t_max);
    let base: Vec<ControlLaw> = spec
        .subsystems
        .iter()
        .map(|s| ControlLaw::constant(s.fixed_control_value(), spec.t_max, Some(&s.control_box)))
        .collect();
    let mut unshifted = base.clone();
    unshifted[l] = gamma.clone();

    let lhs = estimate_risk_sensitive(spec, &unshifted, l, cfg.n_samples, seed)?;

    let shifted_controls = |v: &DisturbanceLaw| -> Vec<ControlLaw> {
        unshifted
            .iter()
            .map(|c| shift_strategy(c, v, spec.epsilon))
            .collect()
    };

    let dim = cfg.pieces * m;
    let mut space = SearchSpace::unconstrained(vec![0.0; dim], vec![cfg.init_std; dim]);
    space.seeds.push(vec![0.0; dim]);
    for w in &cfg.warm_starts {
        space.seeds.push(lift_disturbance(w, cfg.pieces, m, horizon));
    }

    let objective_seed = seed;
    let outcome = maximize(
        &space,
        &cfg.ce,
        derive_seed(seed, TAG_OPTIMIZER),
        |params| {
            let v = disturbance_from_params(params, cfg.pieces, m, horizon);
            let controls = shifted_controls(&v);
            match mean_shifted_cost(spec, &controls, &v, l, cfg.inner_samples, objective_seed) {
                Ok((mean, _, _)) => -mean,
                Err(_) => f64::NEG_INFINITY,
            }
        },
    );
    let best_v = disturbance_from_params(&outcome.best_params, cfg.pieces, m, horizon);

    // fresh-seed re-evaluation of the minimizer
    let fresh = derive_seed(seed, TAG_FRESH_EVAL);
    let controls = shifted_controls(&best_v);
    let (mean, se, censored) =
        mean_shifted_cost(spec, &controls, &best_v, l, cfg.n_samples, fresh)?;
    let rhs = Estimate {
        value: mean,
        std_error: se,
        n_samples: cfg.n_samples,
        ess: cfg.n_samples as f64,
        censored_fraction: censored,
    };
    let gap = rhs.value - lhs.value;
    let gap_std_error = (rhs.std_error.powi(2) + lhs.std_error.powi(2)).sqrt();
    Ok(VariationalResult {
        lhs,
        rhs,
        best_v,
        gap,
        gap_std_error,
        class: format!("pwc-K{}-h{}", cfg.pieces, horizon),
        censored_any: censored > 0.0,
    })
}

/// CRN cost of an explicit disturbance on the shifted system (used by tests
/// and the nesting study).
pub fn shifted_cost_crn(
    spec: &CascadeSpec,
    gamma: &ControlLaw,
    l: usize,
    v: &DisturbanceLaw,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut controls: Vec<ControlLaw> = spec
        .subsystems
        .iter()
        .map(|s| ControlLaw::constant(s.fixed_control_value(), spec.t_max, Some(&s.control_box)))
        .collect();
    controls[l] = gamma.clone();
    let controls: Vec<ControlLaw> = controls
        .iter()
        .map(|c| shift_strategy(c, v, spec.epsilon))
        .collect();
    let (mean, se, _) = mean_shifted_cost(spec, &controls, v, l, n_samples, seed)?;
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate_path;
    use crate::model::CascadeSpec;

    fn ou_spec() -> CascadeSpec {
        let json = r#"{
            "system": {"n": 1, "epsilon": 0.25, "dt": 0.002, "t_max": 6.0, "lambda_floor": 0.5},
            "subsystem": [
                {"dim": 1, "drift": ["-x1_1 + u1_1"], "control_box": [[-0.2, 0.2]], "domain": [[-1.0, 1.0]], "theta": 1.0, "control": [0.0]}
            ],
            "sigma": [["1"]],
            "initial": [[0.0]]
        }"#;
        CascadeSpec::from_json_str(json).unwrap()
    }

    fn controls(spec: &CascadeSpec) -> Vec<ControlLaw> {
        spec.subsystems
            .iter()
            .map(|s| ControlLaw::constant(s.fixed_control_value(), spec.t_max, Some(&s.control_box)))
            .collect()
    }

    #[test]
    fn zero_shift_zero_density() {
        let spec = ou_spec();
        let (traj, _) = simulate_path(
            &spec,
            &controls(&spec),
            NoiseMode::Stochastic { seed: 1, path_index: 0 },
            SimOptions::default(),
        )
        .unwrap();
        let v = DisturbanceLaw::zero(1, spec.t_max);
        assert_eq!(girsanov_log_density(&traj, &v, spec.epsilon).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_trajectory_rejected() {
        let spec = ou_spec();
        let (traj, _) = simulate_path(
            &spec,
            &controls(&spec),
            NoiseMode::Deterministic,
            SimOptions::default(),
        )
        .unwrap();
        let v = DisturbanceLaw::constant(vec![1.0], spec.t_max);
        assert!(girsanov_log_density(&traj, &v, spec.epsilon).is_err());
    }

    #[test]
    fn shifted_mean_of_log_density() {
        // under the shifted measure the expected exponent is +|v|^2 T / (2 eps)
        let eps: f64 = 0.5;
        let c: f64 = 0.8;
        let t_max = 1.0;
        let dt: f64 = 1e-3;
        let steps = (t_max / dt) as usize;
        let sqrt_dt = dt.sqrt();
        let v = DisturbanceLaw::constant(vec![c], t_max);
        let n = 10_000u64;
        let mut zs = Vec::with_capacity(n as usize);
        for path in 0..n {
            let mut rng = path_rng(404, path);
            // build a shifted trajectory's noise increments directly
            let mut rows = Vec::with_capacity(steps);
            for _ in 0..steps {
                use rand::Rng;
                let dw: f64 = sqrt_dt * rng.sample::<f64, _>(rand_distr::StandardNormal);
                rows.push(vec![dw + eps.powf(-0.5) * c * dt]);
            }
            let traj = Trajectory {
                times: (0..=steps).map(|k| k as f64 * dt).collect(),
                states: vec![],
                controls: vec![],
                shift: None,
                noise: Some(crate::dynamics::Series::from_rows(&rows)),
            };
            zs.push(girsanov_log_density(&traj, &v, eps).unwrap());
        }
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (zs.len() - 1) as f64;
        let se = (var / zs.len() as f64).sqrt();
        let expect = c * c * t_max / (2.0 * eps);
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} expect {expect} se {se}"
        );
    }

    #[test]
    fn entropy_check_zero_disturbance() {
        let v = DisturbanceLaw::zero(1, 1.0);
        let chk = relative_entropy_check(&v, 1.0, 1e-3, 200, 8).unwrap();
        assert_eq!(chk.kl_estimate, 0.0);
        assert_eq!(chk.bound, 0.0);
        assert!(chk.ok);
    }

    #[test]
    fn entropy_check_constant_disturbance() {
        let c: f64 = 0.9;
        let t = 2.0;
        let v = DisturbanceLaw::constant(vec![c], t);
        let chk = relative_entropy_check(&v, t, 1e-3, 4000, 21).unwrap();
        let exact = 0.5 * c * c * t;
        assert!((chk.kl_estimate - exact).abs() <= 3.0 * chk.std_error);
        assert!(chk.ok);
        assert!((chk.bound - c * c * t).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form_on_grid_aligned_exit() {
        let v = DisturbanceLaw::new(vec![0.0, 1.0, 2.0], vec![vec![2.0], vec![1.0]]);
        let dt = 0.25;
        // tau = 1.5 => crossing index 6, fraction 0
        let q = running_cost_quadrature(&v, 1.5, 0.0, 6, dt);
        assert!((q - v.table.integral_sq_to(1.5)).abs() < 1e-12);
        // partial cell: tau = 1.625 within step 6
        let q = running_cost_quadrature(&v, 1.625, 0.5, 6, dt);
        assert!((q - v.table.integral_sq_to(1.625)).abs() < 1e-12);
    }

    #[test]
    fn rhs_bounded_by_risk_neutral_cost_with_zero_candidate() {
        let spec = ou_spec();
        let gamma = controls(&spec)[0].clone();
        let cfg = VariationalConfig {
            ce: CrossEntropy {
                population: 10,
                iterations: 6,
                ..CrossEntropy::default()
            },
            ..VariationalConfig::new(1, 200, 800)
        };
        let res = solve_variational_rhs(&spec, &gamma, 0, &cfg, 33).unwrap();
        // one-sidedness: restricted inf dominates the true inf
        assert!(
            res.gap >= -3.0 * res.gap_std_error,
            "gap {} se {}",
            res.gap,
            res.gap_std_error
        );
        // zero-candidate bound: rhs <= E[theta tau] + 3 SE, checked on the
        // CRN samples through the zero disturbance itself
        let zero = DisturbanceLaw::zero(1, spec.t_max);
        let (zero_cost, zse) = shifted_cost_crn(&spec, &gamma, 0, &zero, 800, 33).unwrap();
        assert!(res.rhs.value <= zero_cost + 3.0 * (zse + res.rhs.std_error));
    }
}
