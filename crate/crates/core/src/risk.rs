//! Risk-sensitive escape-time estimation.
//!
//! The criterion for stage `l` is `-eps * log E exp(-theta_l tau_l / eps)`.
//! With `theta tau / eps` routinely in the hundreds, raw weights underflow,
//! so the estimator reduces through a max-subtracted log-mean-exp. Censored
//! paths enter with `tau = t_max`, which biases the value downward
//! (conservative) and is flagged through `censored_fraction`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate_exits, NoiseMode, SimOptions};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarRef};
use crate::law::{ControlLaw, PiecewiseConstant};
use crate::model::{CascadeSpec, Interval};
use crate::optimize::{maximize, CeOutcome, CrossEntropy, SearchSpace};
use crate::rng::{derive_seed, TAG_FRESH_EVAL, TAG_OPTIMIZER};

/// Scalar Monte Carlo result with sampling metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Effective sample size of the exponential weights.
    pub ess: f64,
    pub censored_fraction: f64,
}

/// Pure reduction from exit-time samples to the risk-sensitive value.
/// Exposed separately so estimator invariants can be checked on stored
/// sample sets.
pub fn risk_value_from_taus(taus: &[f64], n_censored: usize, theta: f64, epsilon: f64) -> Estimate {
    assert!(!taus.is_empty(), "need at least one sample");
    assert!(epsilon > 0.0);
    let n = taus.len();
    let m = taus
        .iter()
        .map(|&t| -theta * t / epsilon)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &t in taus {
        let w = ((-theta * t / epsilon) - m).exp();
        sum += w;
        sum_sq += w * w;
    }
    let mean = sum / n as f64;
    let value = -epsilon * (m + mean.ln());
    let var = if n > 1 {
        let mut acc = 0.0;
        for &t in taus {
            let w = ((-theta * t / epsilon) - m).exp();
            acc += (w - mean) * (w - mean);
        }
        acc / (n as f64 - 1.0)
    } else {
        0.0
    };
    let std_error = epsilon * var.sqrt() / (mean * (n as f64).sqrt());
    let ess = sum * sum / sum_sq;
    Estimate {
        value,
        std_error,
        n_samples: n,
        ess,
        censored_fraction: n_censored as f64 / n as f64,
    }
}

/// Draw `n_samples` paths of the controlled diffusion cascade and estimate
/// the stage-`l` criterion. Paths stop integrating at the stage-`l` exit.
/// Reduction is in fixed path order, so the result does not depend on the
/// worker count.
pub fn estimate_risk_sensitive(
    spec: &CascadeSpec,
    controls: &[ControlLaw],
    l: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if l >= spec.n() {
        return Err(Error::InvalidArgument(format!(
            "subsystem index {l} out of range for n = {}",
            spec.n()
        )));
    }
    let samples: Vec<(f64, bool)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|path| -> Result<(f64, bool)> {
            let exits = simulate_exits(
                spec,
                controls,
                NoiseMode::Stochastic {
                    seed,
                    path_index: path,
                },
                SimOptions {
                    stop_at_exit: Some(l),
                    ..SimOptions::default()
                },
            )?;
            Ok((exits[l].tau, exits[l].censored))
        })
        .collect::<Result<Vec<_>>>()?;

    let theta = spec.subsystems[l].theta;
    let n_censored = samples.iter().filter(|(_, c)| *c).count();
    if n_censored == n_samples {
        let floor = (-theta * spec.t_max / spec.epsilon).exp();
        if floor == 0.0 {
            return Err(Error::Degenerate(format!(
                "all {n_samples} paths censored and theta*t_max/epsilon = {} underflows the stabilized sum",
                theta * spec.t_max / spec.epsilon
            )));
        }
    }
    let taus: Vec<f64> = samples.iter().map(|(t, _)| *t).collect();
    Ok(risk_value_from_taus(
        &taus,
        n_censored,
        theta,
        spec.epsilon,
    ))
}

// ---------------------------------------------------------------------------
// 1-D boundary-value oracle
// ---------------------------------------------------------------------------

/// Independent verification of the stage criterion for a 1-D autonomous
/// scenario with constant noise coefficient: the Feynman–Kac characterization
/// of `E_x exp(-theta tau / eps)` solves
///
/// ```text
/// (eps sigma^2 / 2) u'' + m(x) u' - (theta/eps) u = 0  on D,   u = 1 on dD
/// ```
///
/// by central finite differences with one Richardson refinement.
#[derive(Debug, Clone, Serialize)]
pub struct BvpOracle {
    /// `-eps log u(x0)` after Richardson extrapolation.
    pub value: f64,
    pub u_x0: f64,
    pub grid_points: usize,
    /// Relative movement of `u(x0)` under one grid doubling.
    pub refinement_delta: f64,
    /// Set when the movement exceeds `1e-4` (grid too coarse).
    pub grid_warning: bool,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

impl BvpOracle {
    /// Piecewise-linear evaluation of the solution on the fine grid.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.us[0];
        }
        if x >= self.xs[n - 1] {
            return self.us[n - 1];
        }
        let h = self.xs[1] - self.xs[0];
        let j = (((x - self.xs[0]) / h).floor() as usize).min(n - 2);
        let f = (x - self.xs[j]) / h;
        self.us[j] * (1.0 - f) + self.us[j + 1] * f
    }
}

pub fn bvp_oracle_1d(
    drift: &Expr,
    sigma_const: f64,
    domain: Interval,
    theta: f64,
    epsilon: f64,
    x0: f64,
    grid_points: usize,
) -> Result<BvpOracle> {
    if grid_points < 51 {
        return Err(Error::InvalidArgument(
            "oracle grid needs at least 51 points".into(),
        ));
    }
    if !(domain.lo < domain.hi) || !(epsilon > 0.0) || sigma_const == 0.0 || theta < 0.0 {
        return Err(Error::InvalidArgument(
            "oracle needs an ordered domain, positive epsilon, nonzero sigma and theta >= 0".into(),
        ));
    }
    if !(domain.lo <= x0 && x0 <= domain.hi) {
        return Err(Error::InvalidArgument("x0 outside the closed domain".into()));
    }
    let ok_vars = drift
        .variables()
        .iter()
        .all(|v| matches!(v, VarRef::State { sub: 0, coord: 0 }));
    if !ok_vars {
        return Err(Error::InvalidArgument(
            "oracle drift must be autonomous in x1_1 only".into(),
        ));
    }

    let xs: Vec<f64> = grid(domain, grid_points);
    if theta == 0.0 {
        // u == 1 solves the homogeneous problem exactly
        return Ok(BvpOracle {
            value: 0.0,
            u_x0: 1.0,
            grid_points,
            refinement_delta: 0.0,
            grid_warning: false,
            us: vec![1.0; xs.len()],
            xs,
        });
    }

    let coarse = solve_grid(drift, sigma_const, domain, theta, epsilon, grid_points)?;
    let fine_n = 2 * grid_points - 1;
    let fine = solve_grid(drift, sigma_const, domain, theta, epsilon, fine_n)?;
    let u0_coarse = interp(&coarse, domain, x0);
    let u0_fine = interp(&fine, domain, x0);
    let refinement_delta = ((u0_fine - u0_coarse) / u0_fine).abs();
    let mut u0 = (4.0 * u0_fine - u0_coarse) / 3.0;
    if !(u0 > 0.0) {
        u0 = u0_fine;
    }
    Ok(BvpOracle {
        value: -epsilon * u0.ln(),
        u_x0: u0,
        grid_points,
        refinement_delta,
        grid_warning: refinement_delta > 1e-4,
        xs: grid(domain, fine_n),
        us: fine,
    })
}

fn grid(domain: Interval, n: usize) -> Vec<f64> {
    let h = domain.width() / (n - 1) as f64;
    (0..n).map(|j| domain.lo + j as f64 * h).collect()
}

fn interp(us: &[f64], domain: Interval, x: f64) -> f64 {
    let n = us.len();
    let h = domain.width() / (n - 1) as f64;
    let pos = (x - domain.lo) / h;
    let j = (pos.floor() as usize).min(n - 2);
    let f = pos - j as f64;
    us[j] * (1.0 - f) + us[j + 1] * f
}

/// Tridiagonal (Thomas) solve of the finite-difference system on `n` nodes.
fn solve_grid(
    drift: &Expr,
    sigma_const: f64,
    domain: Interval,
    theta: f64,
    epsilon: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let h = domain.width() / (n - 1) as f64;
    let k = epsilon * sigma_const * sigma_const / 2.0;
    let kill = theta / epsilon;
    let xs = grid(domain, n);

    let mut env = std::collections::BTreeMap::new();
    let mut sub = vec![0.0; n - 2];
    let mut diag = vec![0.0; n - 2];
    let mut sup = vec![0.0; n - 2];
    let mut rhs = vec![0.0; n - 2];
    for j in 1..n - 1 {
        env.insert("x1_1".to_string(), xs[j]);
        let m_j = drift.eval(&env)?;
        let a = k / (h * h) - m_j / (2.0 * h);
        let b = -2.0 * k / (h * h) - kill;
        let c = k / (h * h) + m_j / (2.0 * h);
        sub[j - 1] = a;
        diag[j - 1] = b;
        sup[j - 1] = c;
        if j == 1 {
            rhs[j - 1] -= a; // u(lo) = 1
        }
        if j == n - 2 {
            rhs[j - 1] -= c; // u(hi) = 1
        }
    }
    // forward elimination
    for j in 1..n - 2 {
        let w = sub[j] / diag[j - 1];
        diag[j] -= w * sup[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    let mut u = vec![0.0; n];
    u[0] = 1.0;
    u[n - 1] = 1.0;
    u[n - 2] = rhs[n - 3] / diag[n - 3];
    for j in (1..n - 2).rev() {
        u[j] = (rhs[j - 1] - sup[j - 1] * u[j + 1]) / diag[j - 1];
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Supremum over a finite-dimensional control class
// ---------------------------------------------------------------------------

/// Finite-dimensional control classes for the stage-`l` supremum.
#[derive(Debug, Clone)]
pub enum ControlClass {
    /// Open-loop, `pieces` uniform pieces on `[0, t_max]`, values in the
    /// control box.
    PiecewiseConstant { pieces: usize },
    /// Nonanticipative feature strategy: affine in `(t, W(t))`, clamped.
    Feature,
    /// Explicit candidate list (exhaustive evaluation, no search).
    Candidates(Vec<ControlLaw>),
}

#[derive(Debug, Clone)]
pub struct SupConfig {
    pub class: ControlClass,
    pub ce: CrossEntropy,
    /// Samples per candidate evaluation inside the optimizer (common random
    /// numbers across candidates).
    pub inner_samples: usize,
    /// Samples for the fresh-seed re-evaluation of the winner.
    pub final_samples: usize,
}

fn pwc_from_params(params: &[f64], pieces: usize, sub_box: &[Interval], t_max: f64) -> ControlLaw {
    let r = sub_box.len();
    let breakpoints: Vec<f64> = (0..=pieces)
        .map(|i| t_max * i as f64 / pieces as f64)
        .collect();
    let values: Vec<Vec<f64>> = (0..pieces)
        .map(|p| params[p * r..(p + 1) * r].to_vec())
        .collect();
    ControlLaw::PiecewiseConstant(PiecewiseConstant::new(breakpoints, values, Some(sub_box)))
}

fn feature_from_params(params: &[f64], sub_box: &[Interval], m: usize) -> ControlLaw {
    let width = 2 + m;
    let coeffs: Vec<Vec<f64>> = (0..sub_box.len())
        .map(|r| params[r * width..(r + 1) * width].to_vec())
        .collect();
    ControlLaw::PathStrategy(crate::law::PathStrategy::new(coeffs, sub_box.to_vec()))
}

/// Maximize the stage-`l` criterion over a control class with a
/// cross-entropy search under common random numbers, then re-evaluate the
/// winner on a fresh seed.
pub fn estimate_value_sup(
    spec: &CascadeSpec,
    l: usize,
    cfg: &SupConfig,
    seed: u64,
) -> Result<(Estimate, ControlLaw)> {
    if l >= spec.n() {
        return Err(Error::InvalidArgument(format!(
            "subsystem index {l} out of range"
        )));
    }
    let sub = &spec.subsystems[l];
    let r = sub.control_dim();
    let m = spec.noise_dim();
    let base: Vec<ControlLaw> = spec
        .subsystems
        .iter()
        .map(|s| ControlLaw::constant(s.fixed_control_value(), spec.t_max, Some(&s.control_box)))
        .collect();
    let eval_candidate = |law: &ControlLaw, n: usize, s: u64| -> Result<Estimate> {
        let mut controls = base.clone();
        controls[l] = law.clone();
        estimate_risk_sensitive(spec, &controls, l, n, s)
    };

    let fresh_seed = derive_seed(seed, TAG_FRESH_EVAL);
    let best_law = match &cfg.class {
        ControlClass::Candidates(cands) => {
            if cands.is_empty() {
                return Err(Error::InvalidArgument("empty candidate class".into()));
            }
            let mut best: Option<(usize, f64, f64)> = None;
            for (i, law) in cands.iter().enumerate() {
                if law.dim() != r {
                    return Err(Error::InvalidArgument(format!(
                        "candidate {i} has arity {} for control dimension {r}",
                        law.dim()
                    )));
                }
                let est = eval_candidate(law, cfg.inner_samples, seed)?;
                let norm = law.param_norm();
                let replace = match best {
                    Some((_, s, n)) => match est.value.total_cmp(&s) {
                        std::cmp::Ordering::Greater => true,
                        std::cmp::Ordering::Less => false,
                        std::cmp::Ordering::Equal => norm < n,
                    },
                    None => true,
                };
                if replace {
                    best = Some((i, est.value, norm));
                }
            }
            cands[best.unwrap().0].clone()
        }
        ControlClass::PiecewiseConstant { pieces } => {
            let pieces = *pieces;
            if pieces == 0 || r == 0 {
                return Err(Error::InvalidArgument(
                    "piecewise-constant class needs pieces >= 1 and a control dimension".into(),
                ));
            }
            let mut lower = Vec::with_capacity(pieces * r);
            let mut upper = Vec::with_capacity(pieces * r);
            for _ in 0..pieces {
                for b in &sub.control_box {
                    lower.push(b.lo);
                    upper.push(b.hi);
                }
            }
            let space = SearchSpace::boxed(lower, upper);
            let out = run_ce(&space, cfg, seed, |params| {
                pwc_from_params(params, pieces, &sub.control_box, spec.t_max)
            }, &eval_candidate);
            pwc_from_params(&out.best_params, pieces, &sub.control_box, spec.t_max)
        }
        ControlClass::Feature => {
            if r == 0 {
                return Err(Error::InvalidArgument(
                    "feature class needs a control dimension".into(),
                ));
            }
            let dim = r * (2 + m);
            let space =
                SearchSpace::unconstrained(vec![0.0; dim], vec![1.0; dim]);
            let out = run_ce(&space, cfg, seed, |params| {
                feature_from_params(params, &sub.control_box, m)
            }, &eval_candidate);
            feature_from_params(&out.best_params, &sub.control_box, m)
        }
    };

    let estimate = eval_candidate(&best_law, cfg.final_samples, fresh_seed)?;
    Ok((estimate, best_law))
}

fn run_ce(
    space: &SearchSpace,
    cfg: &SupConfig,
    seed: u64,
    build: impl Fn(&[f64]) -> ControlLaw,
    eval_candidate: &impl Fn(&ControlLaw, usize, u64) -> Result<Estimate>,
) -> CeOutcome {
    maximize(space, &cfg.ce, derive_seed(seed, TAG_OPTIMIZER), |params| {
        let law = build(params);
        match eval_candidate(&law, cfg.inner_samples, seed) {
            Ok(est) => est.value,
            Err(_) => f64::NEG_INFINITY,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CascadeSpec;

    fn ou_spec(theta: f64, epsilon: f64, dt: f64, t_max: f64) -> CascadeSpec {
        let json = format!(
            r#"{{
                "system": {{"n": 1, "epsilon": {epsilon}, "dt": {dt}, "t_max": {t_max}, "lambda_floor": 0.5}},
                "subsystem": [
                    {{"dim": 1, "drift": ["-x1_1 + u1_1"], "control_box": [[-0.5, 0.5]], "domain": [[-1.0, 1.0]], "theta": {theta}, "control": [0.0]}}
                ],
                "sigma": [["1"]],
                "initial": [[0.0]]
            }}"#
        );
        CascadeSpec::from_json_str(&json).unwrap()
    }

    fn fixed_controls(spec: &CascadeSpec) -> Vec<ControlLaw> {
        spec.subsystems
            .iter()
            .map(|s| ControlLaw::constant(s.fixed_control_value(), spec.t_max, Some(&s.control_box)))
            .collect()
    }

    #[test]
    fn zero_theta_gives_zero_exactly() {
        let est = risk_value_from_taus(&[1.0, 2.0, 7.0], 0, 0.0, 0.25);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn zero_taus_give_zero_exactly() {
        let est = risk_value_from_taus(&[0.0, 0.0, 0.0], 0, 0.3, 0.25);
        assert_eq!(est.value, 0.0);
        assert_eq!(est.ess, 3.0);
    }

    #[test]
    fn immediate_exit_scenario_value_zero() {
        // x0 on the boundary exits at tau = 0 on every path
        let json = r#"{
            "system": {"n": 1, "epsilon": 0.25, "dt": 0.01, "t_max": 1.0, "lambda_floor": 0.5},
            "subsystem": [
                {"dim": 1, "drift": ["0"], "control_box": [[-0.5, 0.5]], "domain": [[-1.0, 1.0]], "theta": 0.3}
            ],
            "sigma": [["1"]],
            "initial": [[1.5]]
        }"#;
        let spec = CascadeSpec::from_json_str(json).unwrap();
        let est = estimate_risk_sensitive(&spec, &fixed_controls(&spec), 0, 16, 3).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.censored_fraction, 0.0);
    }

    #[test]
    fn estimator_invariants_on_samples() {
        let taus = [0.3, 1.7, 2.2, 0.9, 5.0];
        let theta = 0.7;
        let eps = 0.25;
        let est = risk_value_from_taus(&taus, 0, theta, eps);
        let max_tau = taus.iter().cloned().fold(0.0, f64::max);
        let mean_tau: f64 = taus.iter().sum::<f64>() / taus.len() as f64;
        assert!(est.value >= 0.0);
        assert!(est.value <= theta * max_tau + 1e-12);
        assert!(est.value <= theta * mean_tau + 1e-12);
        // monotone in theta on fixed samples
        let est2 = risk_value_from_taus(&taus, 0, theta * 1.5, eps);
        assert!(est2.value >= est.value - 1e-12);
        assert!(est.ess <= taus.len() as f64 + 1e-12);
    }

    #[test]
    fn degenerate_all_censored_overflow() {
        // theta * t_max / eps = 2000: exp underflows and every path censors
        let json = r#"{
            "system": {"n": 1, "epsilon": 0.01, "dt": 0.05, "t_max": 10.0, "lambda_floor": 0.5},
            "subsystem": [
                {"dim": 1, "drift": ["0"], "control_box": [[-0.1, 0.1]], "domain": [[-50.0, 50.0]], "theta": 2.0}
            ],
            "sigma": [["1"]],
            "initial": [[0.0]]
        }"#;
        let spec = CascadeSpec::from_json_str(json).unwrap();
        let err = estimate_risk_sensitive(&spec, &fixed_controls(&spec), 0, 8, 1).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn bvp_theta_zero_is_exactly_one() {
        let drift = crate::expr::parse_expr("-x1_1").unwrap();
        let o = bvp_oracle_1d(&drift, 1.0, Interval::new(-1.0, 1.0), 0.0, 0.25, 0.0, 101).unwrap();
        assert_eq!(o.value, 0.0);
        assert!(o.us.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn bvp_boundary_value_tends_to_one() {
        let drift = crate::expr::parse_expr("-x1_1").unwrap();
        let o = bvp_oracle_1d(&drift, 1.0, Interval::new(-1.0, 1.0), 0.1, 0.25, 0.999, 2001).unwrap();
        assert!(o.u_x0 > 0.95, "u near boundary = {}", o.u_x0);
        assert!(o.value < 0.02);
    }

    #[test]
    fn bvp_rejects_non_autonomous_drift() {
        let drift = crate::expr::parse_expr("-x1_1 + t").unwrap();
        assert!(bvp_oracle_1d(&drift, 1.0, Interval::new(-1.0, 1.0), 0.1, 0.25, 0.0, 101).is_err());
        let drift2 = crate::expr::parse_expr("-x2_1").unwrap();
        assert!(bvp_oracle_1d(&drift2, 1.0, Interval::new(-1.0, 1.0), 0.1, 0.25, 0.0, 101).is_err());
    }

    #[test]
    fn bvp_refinement_is_tight_on_fine_grids() {
        let drift = crate::expr::parse_expr("-x1_1").unwrap();
        let o = bvp_oracle_1d(&drift, 1.0, Interval::new(-1.0, 1.0), 0.1, 0.25, 0.0, 2001).unwrap();
        assert!(!o.grid_warning, "delta = {}", o.refinement_delta);
    }

    #[test]
    fn singleton_candidate_class_equals_plain_estimate() {
        let spec = ou_spec(0.5, 0.25, 0.01, 3.0);
        let fixed = fixed_controls(&spec);
        let cfg = SupConfig {
            class: ControlClass::Candidates(vec![fixed[0].clone()]),
            ce: CrossEntropy::default(),
            inner_samples: 64,
            final_samples: 256,
        };
        let (est, law) = estimate_value_sup(&spec, 0, &cfg, 42).unwrap();
        let reference =
            estimate_risk_sensitive(&spec, &fixed, 0, 256, derive_seed(42, TAG_FRESH_EVAL))
                .unwrap();
        assert_eq!(est, reference);
        assert_eq!(law, fixed[0]);
    }

    #[test]
    fn two_candidate_argmax_under_crn() {
        let spec = ou_spec(0.5, 0.25, 0.01, 3.0);
        let lo = ControlLaw::constant(vec![-0.5], spec.t_max, None);
        let hi = ControlLaw::constant(vec![0.5], spec.t_max, None);
        let base = fixed_controls(&spec);
        let seed = 7;
        let eval = |law: &ControlLaw| {
            let mut c = base.clone();
            c[0] = law.clone();
            estimate_risk_sensitive(&spec, &c, 0, 128, seed).unwrap().value
        };
        let expect = if eval(&lo) >= eval(&hi) { lo.clone() } else { hi.clone() };
        let cfg = SupConfig {
            class: ControlClass::Candidates(vec![lo, hi]),
            ce: CrossEntropy::default(),
            inner_samples: 128,
            final_samples: 128,
        };
        let (_, law) = estimate_value_sup(&spec, 0, &cfg, seed).unwrap();
        assert_eq!(law, expect);
    }

    #[test]
    fn nested_candidate_classes_monotone_under_crn() {
        // a 2-point grid per piece: the K=2 class contains both K=1 grids
        let spec = ou_spec(0.5, 0.25, 0.01, 3.0);
        let seed = 11;
        let to_law = |vals: Vec<Vec<f64>>| {
            let k = vals.len();
            let bps = (0..=k).map(|i| spec.t_max * i as f64 / k as f64).collect();
            ControlLaw::PiecewiseConstant(PiecewiseConstant::new(bps, vals, None))
        };
        let k1: Vec<ControlLaw> = [-0.5, 0.5].iter().map(|&v| to_law(vec![vec![v]])).collect();
        let mut k2 = Vec::new();
        for a in [-0.5, 0.5] {
            for b in [-0.5, 0.5] {
                k2.push(to_law(vec![vec![a], vec![b]]));
            }
        }
        let sup = |cands: Vec<ControlLaw>| {
            let cfg = SupConfig {
                class: ControlClass::Candidates(cands),
                ce: CrossEntropy::default(),
                inner_samples: 128,
                final_samples: 2,
            };
            estimate_value_sup(&spec, 0, &cfg, seed).unwrap()
        };
        // compare CRN inner values by re-evaluating the winners on the
        // common seed: the richer class can only win
        let (_, law1) = sup(k1);
        let (_, law2) = sup(k2);
        let base = fixed_controls(&spec);
        let value_of = |law: &ControlLaw| {
            let mut c = base.clone();
            c[0] = law.clone();
            estimate_risk_sensitive(&spec, &c, 0, 128, seed).unwrap().value
        };
        assert!(value_of(&law2) >= value_of(&law1));
    }

    #[test]
    fn domain_monotonicity_statistical() {
        // enlarging the domain cannot decrease the value beyond noise
        let spec_small = ou_spec(0.5, 0.25, 0.005, 6.0);
        let mut spec_large = spec_small.clone();
        spec_large.subsystems[0].domain = vec![Interval::new(-1.3, 1.3)];
        let c = fixed_controls(&spec_small);
        let a = estimate_risk_sensitive(&spec_small, &c, 0, 2000, 5).unwrap();
        let b = estimate_risk_sensitive(&spec_large, &c, 0, 2000, 5).unwrap();
        let slack = 3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(
            b.value >= a.value - slack,
            "large {} small {} slack {slack}",
            b.value,
            a.value
        );
    }
}
