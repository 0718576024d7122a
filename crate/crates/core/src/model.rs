//! Scenario representation, loading and validation.
//!
//! A scenario describes a cascade of subsystems: noise enters subsystem 1
//! through the map `sigma` scaled by `sqrt(epsilon)`, and each downstream
//! subsystem is an ODE driven by upstream states and its own control. Domains
//! and control sets are axis-aligned boxes, so exit detection and control
//! clamping are exact.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{affine_form, parse_expr, Expr, VarRef};

/// Closed interval given as `[lo, hi]` in scenario files; used as an open
/// interval for domains and a closed one for control boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(v: Interval) -> Self {
        [v.lo, v.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Strict interior membership (domains are open boxes).
    pub fn contains_open(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

/// One subsystem of the cascade.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub dim: usize,
    pub drift: Vec<Expr>,
    pub control_box: Vec<Interval>,
    pub domain: Vec<Interval>,
    pub theta: f64,
    /// Fixed control value used when this subsystem is not the optimized
    /// stage (the scenario's `control` entry; defaults to the box midpoint).
    pub fixed_control: Option<Vec<f64>>,
}

impl SubsystemSpec {
    pub fn control_dim(&self) -> usize {
        self.control_box.len()
    }

    pub fn fixed_control_value(&self) -> Vec<f64> {
        match &self.fixed_control {
            Some(v) => v.clone(),
            None => self.control_box.iter().map(Interval::midpoint).collect(),
        }
    }
}

/// Full scenario: subsystems, noise map, perturbation level and integration
/// parameters.
#[derive(Debug, Clone)]
pub struct CascadeSpec {
    pub subsystems: Vec<SubsystemSpec>,
    /// Noise map of subsystem 1: `d_1 x m` matrix of expressions over the
    /// subsystem-1 state.
    pub sigma: Vec<Vec<Expr>>,
    pub epsilon: f64,
    pub initial: Vec<Vec<f64>>,
    pub dt: f64,
    pub t_max: f64,
    pub lambda_floor: f64,
}

impl CascadeSpec {
    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    /// Noise dimension `m` (columns of sigma).
    pub fn noise_dim(&self) -> usize {
        self.sigma.first().map_or(0, Vec::len)
    }

    pub fn state_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim).sum()
    }

    /// Prefix-sum offsets into the flat state vector, length `n + 1`.
    pub fn state_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.n() + 1);
        let mut acc = 0;
        off.push(0);
        for s in &self.subsystems {
            acc += s.dim;
            off.push(acc);
        }
        off
    }

    pub fn control_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.n() + 1);
        let mut acc = 0;
        off.push(0);
        for s in &self.subsystems {
            acc += s.control_dim();
            off.push(acc);
        }
        off
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s
    }

    /// Steps of the uniform integration grid.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round().max(1.0) as usize
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        file.compile()
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

// ---------------------------------------------------------------------------
// Scenario file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    system: SystemSection,
    subsystem: Vec<SubsystemSection>,
    sigma: Vec<Vec<String>>,
    initial: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    n: usize,
    epsilon: f64,
    dt: f64,
    t_max: f64,
    lambda_floor: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsystemSection {
    dim: usize,
    drift: Vec<String>,
    control_box: Vec<[f64; 2]>,
    domain: Vec<[f64; 2]>,
    theta: f64,
    #[serde(default)]
    control: Option<Vec<f64>>,
}

impl ScenarioFile {
    fn compile(self) -> Result<CascadeSpec> {
        if self.system.n != self.subsystem.len() {
            return Err(Error::Scenario(format!(
                "system.n = {} but {} subsystems declared",
                self.system.n,
                self.subsystem.len()
            )));
        }
        let mut subsystems = Vec::with_capacity(self.subsystem.len());
        for (i, s) in self.subsystem.into_iter().enumerate() {
            let drift = s
                .drift
                .iter()
                .map(|d| {
                    parse_expr(d).map_err(|e| {
                        Error::Scenario(format!("subsystem {} drift `{d}`: {e}", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            subsystems.push(SubsystemSpec {
                dim: s.dim,
                drift,
                control_box: s.control_box.into_iter().map(Interval::from).collect(),
                domain: s.domain.into_iter().map(Interval::from).collect(),
                theta: s.theta,
                fixed_control: s.control,
            });
        }
        let sigma = self
            .sigma
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        parse_expr(e)
                            .map_err(|err| Error::Scenario(format!("sigma `{e}`: {err}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CascadeSpec {
            subsystems,
            sigma,
            epsilon: self.system.epsilon,
            initial: self.initial,
            dt: self.system.dt,
            t_max: self.system.t_max,
            lambda_floor: self.system.lambda_floor,
        })
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Blocking,
    Advisory,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

impl Diagnostic {
    fn blocking(code: &'static str, message: String) -> Self {
        Diagnostic {
            severity: Severity::Blocking,
            code,
            message,
        }
    }

    fn advisory(code: &'static str, message: String) -> Self {
        Diagnostic {
            severity: Severity::Advisory,
            code,
            message,
        }
    }
}

/// Advisory finite-difference slope report for one drift component
/// (a Lipschitz-constant proxy; the global condition is not machine-checkable
/// for arbitrary expressions).
#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub subsystem: usize,
    pub component: usize,
    pub variable: String,
    pub max_abs_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    pub drift_slopes: Vec<SlopeReport>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.diagnostics
            .iter()
            .all(|d| d.severity != Severity::Blocking)
    }
}

/// Validate a parsed scenario. The returned diagnostics list is empty exactly
/// when dimensions are consistent, the cascade dependency rule holds, the
/// initial point is interior, sampled ellipticity holds on the probe grid and
/// drift values are finite at all probes. Drift slopes are reported
/// separately as advisory data.
pub fn validate_scenario(spec: &CascadeSpec) -> ValidationReport {
    let mut diags = Vec::new();
    let mut slopes = Vec::new();

    structural_checks(spec, &mut diags);
    if !diags.is_empty() {
        // probing needs consistent shapes
        return ValidationReport {
            diagnostics: diags,
            drift_slopes: slopes,
        };
    }
    cascade_rule(spec, &mut diags);
    initial_interior(spec, &mut diags);
    ellipticity_at_probes(spec, &mut diags);
    drift_probes(spec, &mut diags, &mut slopes);

    ValidationReport {
        diagnostics: diags,
        drift_slopes: slopes,
    }
}

fn structural_checks(spec: &CascadeSpec, diags: &mut Vec<Diagnostic>) {
    if spec.n() == 0 {
        diags.push(Diagnostic::blocking("no-subsystems", "scenario declares no subsystems".into()));
        return;
    }
    if !(spec.dt > 0.0) {
        diags.push(Diagnostic::blocking("bad-dt", format!("dt must be positive, got {}", spec.dt)));
    }
    if !(spec.t_max >= spec.dt) {
        diags.push(Diagnostic::blocking(
            "bad-horizon",
            format!("t_max ({}) must be at least dt ({})", spec.t_max, spec.dt),
        ));
    }
    if !(spec.epsilon > 0.0) {
        diags.push(Diagnostic::blocking(
            "bad-epsilon",
            format!("epsilon must be positive, got {}", spec.epsilon),
        ));
    }
    if !(spec.lambda_floor > 0.0) {
        diags.push(Diagnostic::blocking(
            "bad-lambda",
            format!("lambda_floor must be positive, got {}", spec.lambda_floor),
        ));
    }
    let d1 = spec.subsystems[0].dim;
    if spec.sigma.len() != d1 {
        diags.push(Diagnostic::blocking(
            "sigma-shape",
            format!("sigma has {} rows, subsystem 1 has dimension {d1}", spec.sigma.len()),
        ));
    }
    let m = spec.noise_dim();
    if m == 0 || spec.sigma.iter().any(|row| row.len() != m) {
        diags.push(Diagnostic::blocking(
            "sigma-shape",
            "sigma rows must be non-empty and of equal length".into(),
        ));
    }
    if spec.initial.len() != spec.n() {
        diags.push(Diagnostic::blocking(
            "initial-shape",
            format!("initial has {} blocks for {} subsystems", spec.initial.len(), spec.n()),
        ));
    }
    for (i, s) in spec.subsystems.iter().enumerate() {
        if s.dim == 0 {
            diags.push(Diagnostic::blocking(
                "bad-dimension",
                format!("subsystem {} has dimension 0", i + 1),
            ));
        }
        if s.drift.len() != s.dim {
            diags.push(Diagnostic::blocking(
                "drift-shape",
                format!("subsystem {} declares {} drift components for dimension {}", i + 1, s.drift.len(), s.dim),
            ));
        }
        if s.domain.len() != s.dim {
            diags.push(Diagnostic::blocking(
                "domain-shape",
                format!("subsystem {} domain has {} intervals for dimension {}", i + 1, s.domain.len(), s.dim),
            ));
        }
        if !(s.theta > 0.0) {
            diags.push(Diagnostic::blocking(
                "bad-theta",
                format!("subsystem {} theta must be positive, got {}", i + 1, s.theta),
            ));
        }
        for (j, b) in s.domain.iter().enumerate() {
            if !(b.lo < b.hi) {
                diags.push(Diagnostic::blocking(
                    "bad-domain",
                    format!("subsystem {} domain axis {} has non-ordered bounds [{}, {}]", i + 1, j + 1, b.lo, b.hi),
                ));
            }
        }
        for (j, b) in s.control_box.iter().enumerate() {
            if !(b.lo < b.hi) {
                diags.push(Diagnostic::blocking(
                    "bad-control-box",
                    format!("subsystem {} control box axis {} has non-ordered bounds [{}, {}]", i + 1, j + 1, b.lo, b.hi),
                ));
            }
        }
        if let Some(init) = spec.initial.get(i) {
            if init.len() != s.dim {
                diags.push(Diagnostic::blocking(
                    "initial-shape",
                    format!("initial block {} has length {} for dimension {}", i + 1, init.len(), s.dim),
                ));
            }
        }
        if let Some(fc) = &s.fixed_control {
            if fc.len() != s.control_dim() {
                diags.push(Diagnostic::blocking(
                    "control-shape",
                    format!("subsystem {} fixed control has length {} for control dimension {}", i + 1, fc.len(), s.control_dim()),
                ));
            }
        }
    }
}

/// Drift of subsystem `l` may reference `t`, states of subsystems `1..=l`
/// (within their dimensions) and its own controls only. Sigma may reference
/// subsystem-1 states only.
fn cascade_rule(spec: &CascadeSpec, diags: &mut Vec<Diagnostic>) {
    for (l, s) in spec.subsystems.iter().enumerate() {
        for (c, drift) in s.drift.iter().enumerate() {
            for var in drift.variables() {
                let bad = match var {
                    VarRef::Time => None,
                    VarRef::State { sub, coord } => {
                        if sub > l {
                            Some(format!("upstream-only rule: drift of subsystem {} references x{}_{}", l + 1, sub + 1, coord + 1))
                        } else if sub >= spec.n() || coord >= spec.subsystems[sub].dim {
                            Some(format!("undeclared coordinate x{}_{}", sub + 1, coord + 1))
                        } else {
                            None
                        }
                    }
                    VarRef::Control { sub, coord } => {
                        if sub != l {
                            Some(format!("drift of subsystem {} references foreign control u{}_{}", l + 1, sub + 1, coord + 1))
                        } else if coord >= s.control_dim() {
                            Some(format!("undeclared control coordinate u{}_{}", sub + 1, coord + 1))
                        } else {
                            None
                        }
                    }
                };
                if let Some(msg) = bad {
                    diags.push(Diagnostic::blocking(
                        "cascade-violation",
                        format!("{msg} (drift component {})", c + 1),
                    ));
                }
            }
        }
    }
    for row in &spec.sigma {
        for e in row {
            for var in e.variables() {
                let ok = matches!(var, VarRef::State { sub: 0, coord } if coord < spec.subsystems[0].dim);
                if !ok {
                    diags.push(Diagnostic::blocking(
                        "sigma-dependency",
                        format!("sigma may reference subsystem-1 states only, found {var}"),
                    ));
                }
            }
        }
    }
}

fn initial_interior(spec: &CascadeSpec, diags: &mut Vec<Diagnostic>) {
    for (i, s) in spec.subsystems.iter().enumerate() {
        for (j, (&x, b)) in spec.initial[i].iter().zip(&s.domain).enumerate() {
            if !b.contains_open(x) {
                diags.push(Diagnostic::blocking(
                    "initial-not-interior",
                    format!("initial x{}_{} = {} is not interior to ({}, {})", i + 1, j + 1, x, b.lo, b.hi),
                ));
            }
        }
    }
}

/// Per-axis probe points: quarter, mid and three-quarter of the box width.
fn axis_probes(b: Interval) -> [f64; 3] {
    let w = b.width();
    [b.lo + 0.25 * w, b.midpoint(), b.hi - 0.25 * w]
}

/// Deterministic cartesian probe grid over a set of intervals, capped.
const PROBE_CAP: usize = 19_683; // 3^9

fn probe_grid(axes: &[Interval], extra: Option<&[f64]>) -> (Vec<Vec<f64>>, bool) {
    let combos: usize = axes.iter().fold(1usize, |acc, _| acc.saturating_mul(3));
    let truncated = combos > PROBE_CAP;
    let count = combos.min(PROBE_CAP);
    let mut points = Vec::with_capacity(count + 1);
    for mut idx in 0..count {
        let mut p = Vec::with_capacity(axes.len());
        for b in axes {
            let choice = idx % 3;
            idx /= 3;
            p.push(axis_probes(*b)[choice]);
        }
        points.push(p);
    }
    if let Some(x) = extra {
        points.push(x.to_vec());
    }
    (points, truncated)
}

fn ellipticity_at_probes(spec: &CascadeSpec, diags: &mut Vec<Diagnostic>) {
    let s1 = &spec.subsystems[0];
    let (points, truncated) = probe_grid(&s1.domain, Some(&spec.initial[0]));
    if truncated {
        diags.push(Diagnostic::advisory(
            "probe-grid-truncated",
            format!("ellipticity probe grid capped at {PROBE_CAP} points"),
        ));
    }
    let m = spec.noise_dim();
    let d1 = s1.dim;
    for p in &points {
        let mut env: BTreeMap<String, f64> = BTreeMap::new();
        for (j, &x) in p.iter().enumerate() {
            env.insert(format!("x1_{}", j + 1), x);
        }
        let mut sig = DMatrix::<f64>::zeros(d1, m);
        let mut failed = false;
        'rows: for (r, row) in spec.sigma.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                match e.eval(&env) {
                    Ok(v) => sig[(r, c)] = v,
                    Err(err) => {
                        diags.push(Diagnostic::blocking(
                            "sigma-eval",
                            format!("sigma evaluation failed at probe {p:?}: {err}"),
                        ));
                        failed = true;
                        break 'rows;
                    }
                }
            }
        }
        if failed {
            continue;
        }
        let a = &sig * sig.transpose();
        let eig = a.symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < spec.lambda_floor - 1e-12 {
            diags.push(Diagnostic::blocking(
                "ellipticity",
                format!(
                    "min eigenvalue of sigma sigma^T at probe {p:?} is {min_eig:.6e}, below lambda_floor {}",
                    spec.lambda_floor
                ),
            ));
        }
    }
}

fn drift_probes(spec: &CascadeSpec, diags: &mut Vec<Diagnostic>, slopes: &mut Vec<SlopeReport>) {
    for (l, s) in spec.subsystems.iter().enumerate() {
        for (c, drift) in s.drift.iter().enumerate() {
            // probe only over axes the expression references
            let vars = drift.variables();
            let mut axes: Vec<(VarRef, Interval)> = Vec::new();
            for var in &vars {
                match *var {
                    VarRef::Time => axes.push((*var, Interval::new(0.0, spec.t_max))),
                    VarRef::State { sub, coord } => {
                        if sub < spec.n() && coord < spec.subsystems[sub].dim {
                            axes.push((*var, spec.subsystems[sub].domain[coord]));
                        }
                    }
                    VarRef::Control { sub, coord } => {
                        if sub < spec.n() && coord < spec.subsystems[sub].control_dim() {
                            axes.push((*var, spec.subsystems[sub].control_box[coord]));
                        }
                    }
                }
            }
            let intervals: Vec<Interval> = axes.iter().map(|(_, b)| *b).collect();
            let (points, truncated) = probe_grid(&intervals, None);
            if truncated {
                diags.push(Diagnostic::advisory(
                    "probe-grid-truncated",
                    format!("drift probe grid capped for subsystem {} component {}", l + 1, c + 1),
                ));
            }
            let mut max_slope: BTreeMap<VarRef, f64> = BTreeMap::new();
            for p in &points {
                let mut env: BTreeMap<String, f64> = BTreeMap::new();
                for ((var, _), &v) in axes.iter().zip(p) {
                    env.insert(var.to_string(), v);
                }
                match drift.eval(&env) {
                    Ok(v) if v.is_finite() => {
                        // finite-difference slope along each referenced axis
                        for (var, b) in &axes {
                            let h = (b.width() * 1e-4).max(1e-9);
                            let name = var.to_string();
                            let x0 = env[&name];
                            let bump = |x: f64| -> Option<f64> {
                                let mut e2 = env.clone();
                                e2.insert(name.clone(), x);
                                drift.eval(&e2).ok()
                            };
                            if let (Some(up), Some(dn)) = (bump(x0 + h), bump(x0 - h)) {
                                let slope = ((up - dn) / (2.0 * h)).abs();
                                let entry = max_slope.entry(*var).or_insert(0.0);
                                if slope > *entry {
                                    *entry = slope;
                                }
                            }
                        }
                    }
                    Ok(_) => unreachable!("eval reports non-finite values as errors"),
                    Err(err) => {
                        diags.push(Diagnostic::blocking(
                            "drift-eval",
                            format!("drift of subsystem {} component {} failed at probe {p:?}: {err}", l + 1, c + 1),
                        ));
                    }
                }
            }
            for (var, slope) in max_slope {
                slopes.push(SlopeReport {
                    subsystem: l + 1,
                    component: c + 1,
                    variable: var.to_string(),
                    max_abs_slope: slope,
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Hypoellipticity rank diagnostic for affine cascades
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HormanderReport {
    /// True when every drift is affine in states and controls with constant
    /// coefficients and sigma is constant; the rank test only applies then.
    pub applicable: bool,
    pub rank: usize,
    pub full: bool,
}

/// Kalman-style noise-reachability rank of the stacked linear cascade: with
/// drift coefficients `A` and constant noise injection `B` into subsystem 1,
/// computes `rank [B, AB, ..., A^{k-1}B]` for `k` the total state dimension.
pub fn hormander_rank_check(spec: &CascadeSpec) -> HormanderReport {
    let not_applicable = HormanderReport {
        applicable: false,
        rank: 0,
        full: false,
    };
    let offsets = spec.state_offsets();
    let k = spec.state_dim();
    let m = spec.noise_dim();
    if k == 0 || m == 0 {
        return not_applicable;
    }

    let mut a = DMatrix::<f64>::zeros(k, k);
    for (i, s) in spec.subsystems.iter().enumerate() {
        for (c, drift) in s.drift.iter().enumerate() {
            let Some(form) = affine_form(drift) else {
                return not_applicable;
            };
            let row = offsets[i] + c;
            for (var, coeff) in form.coeffs {
                match var {
                    VarRef::State { sub, coord } => {
                        if sub >= spec.n() || coord >= spec.subsystems[sub].dim {
                            return not_applicable;
                        }
                        a[(row, offsets[sub] + coord)] = coeff;
                    }
                    // control and additive time terms do not affect noise
                    // reachability
                    VarRef::Control { .. } | VarRef::Time => {}
                }
            }
        }
    }

    let d1 = spec.subsystems[0].dim;
    let mut b = DMatrix::<f64>::zeros(k, m);
    for (r, row) in spec.sigma.iter().enumerate() {
        if r >= d1 {
            return not_applicable;
        }
        for (c, e) in row.iter().enumerate() {
            match affine_form(e).and_then(|f| if f.coeffs.is_empty() { Some(f.constant) } else { None }) {
                Some(v) => b[(r, c)] = v,
                None => return not_applicable,
            }
        }
    }

    // reachability matrix [B, AB, ..., A^{k-1} B]
    let mut reach = DMatrix::<f64>::zeros(k, k * m);
    let mut block = b.clone();
    for p in 0..k {
        reach.view_mut((0, p * m), (k, m)).copy_from(&block);
        block = &a * block;
    }
    let svd = reach.svd(false, false);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_sv * 1e-9;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();

    HormanderReport {
        applicable: true,
        rank,
        full: rank == k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_subsystem_json() -> String {
        r#"{
            "system": {"n": 2, "epsilon": 0.25, "dt": 0.01, "t_max": 5.0, "lambda_floor": 0.5},
            "subsystem": [
                {"dim": 1, "drift": ["u1_1"], "control_box": [[-1.0, 1.0]], "domain": [[-1.0, 1.0]], "theta": 0.5},
                {"dim": 1, "drift": ["x1_1"], "control_box": [[-0.5, 0.5]], "domain": [[-2.0, 2.0]], "theta": 0.5}
            ],
            "sigma": [["1"]],
            "initial": [[0.0], [0.0]]
        }"#
        .to_string()
    }

    #[test]
    fn well_formed_scenario_validates_clean() {
        let spec = CascadeSpec::from_json_str(&two_subsystem_json()).unwrap();
        let report = validate_scenario(&spec);
        assert!(report.diagnostics.is_empty(), "{:?}", report.diagnostics);
        assert!(report.is_valid());
        // advisory slope report is data, not a diagnostic
        assert!(!report.drift_slopes.is_empty());
    }

    #[test]
    fn cascade_violation_detected() {
        let json = two_subsystem_json().replace("\"drift\": [\"u1_1\"]", "\"drift\": [\"x2_1\"]");
        let spec = CascadeSpec::from_json_str(&json).unwrap();
        let report = validate_scenario(&spec);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.code == "cascade-violation"));
    }

    #[test]
    fn boundary_initial_point_flagged() {
        let json = two_subsystem_json().replace("\"initial\": [[0.0], [0.0]]", "\"initial\": [[-1.0], [0.0]]");
        let spec = CascadeSpec::from_json_str(&json).unwrap();
        let report = validate_scenario(&spec);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.code == "initial-not-interior"));
    }

    #[test]
    fn ellipticity_floor_enforced() {
        let json = two_subsystem_json().replace("\"sigma\": [[\"1\"]]", "\"sigma\": [[\"0.1\"]]");
        let spec = CascadeSpec::from_json_str(&json).unwrap();
        let report = validate_scenario(&spec);
        assert!(report.diagnostics.iter().any(|d| d.code == "ellipticity"));
    }

    #[test]
    fn state_dependent_sigma_is_probed() {
        let json = two_subsystem_json()
            .replace("\"sigma\": [[\"1\"]]", "\"sigma\": [[\"1 + x1_1^2\"]]");
        let spec = CascadeSpec::from_json_str(&json).unwrap();
        let report = validate_scenario(&spec);
        assert!(report.is_valid());
    }

    #[test]
    fn integrator_chain_has_full_rank() {
        // dx1 = u dt + sqrt(eps) dW, dx2 = x1 dt
        let spec = CascadeSpec::from_json_str(&two_subsystem_json()).unwrap();
        let rep = hormander_rank_check(&spec);
        assert!(rep.applicable);
        assert_eq!(rep.rank, 2);
        assert!(rep.full);
    }

    #[test]
    fn decoupled_second_subsystem_is_unreachable() {
        let json = two_subsystem_json()
            .replace("\"drift\": [\"u1_1\"]", "\"drift\": [\"-x1_1\"]")
            .replace("\"drift\": [\"x1_1\"]", "\"drift\": [\"-x2_1\"]");
        let spec = CascadeSpec::from_json_str(&json).unwrap();
        let rep = hormander_rank_check(&spec);
        assert!(rep.applicable);
        assert_eq!(rep.rank, 1);
        assert!(!rep.full);
    }

    #[test]
    fn single_elliptic_subsystem() {
        let json = r#"{
            "system": {"n": 1, "epsilon": 0.25, "dt": 0.01, "t_max": 5.0, "lambda_floor": 0.5},
            "subsystem": [
                {"dim": 1, "drift": ["-x1_1"], "control_box": [[-1.0, 1.0]], "domain": [[-1.0, 1.0]], "theta": 0.5}
            ],
            "sigma": [["1"]],
            "initial": [[0.0]]
        }"#;
        let spec = CascadeSpec::from_json_str(json).unwrap();
        let rep = hormander_rank_check(&spec);
        assert!(rep.applicable && rep.full);
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn nonaffine_drift_not_applicable() {
        let json = two_subsystem_json().replace("\"drift\": [\"x1_1\"]", "\"drift\": [\"tanh(x1_1)\"]");
        let spec = CascadeSpec::from_json_str(&json).unwrap();
        let rep = hormander_rank_check(&spec);
        assert!(!rep.applicable);
    }

    #[test]
    fn unknown_scenario_field_rejected() {
        let json = two_subsystem_json().replace("\"sigma\"", "\"extra\": 1, \"sigma\"");
        assert!(CascadeSpec::from_json_str(&json).is_err());
    }
}
