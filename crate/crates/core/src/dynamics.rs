//! Cascade integration and exit detection.
//!
//! One Euler–Maruyama stepper covers all four dynamical regimes:
//!
//! * stochastic, no shift — the controlled diffusion cascade;
//! * stochastic with shift — subsystem 1 gains a `sigma(x^1) v(t) dt` drift
//!   term alongside the `sqrt(eps) sigma dW` diffusion;
//! * deterministic, no shift — the noise-free cascade;
//! * deterministic with shift — the differential-game / modeling-error
//!   dynamics.
//!
//! The grid is uniform with step `dt`; exits are detected on grid points and
//! refined by linear interpolation of the first violated coordinate.
//! Continuous-time overshoot inside a step is not corrected for.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Env;
use crate::law::{ControlLaw, DisturbanceLaw};
use crate::model::{CascadeSpec, Interval};
use crate::rng::path_rng;

/// Dense row-major series: `len` rows of `dim` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub dim: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn new(dim: usize) -> Self {
        Series {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Series {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut s = Series::with_capacity(dim, rows.len());
        for r in rows {
            s.push_row(r);
        }
        s
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Realized sample path on the integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Grid times, `K + 1` entries.
    pub times: Vec<f64>,
    /// Per-subsystem state series, each with `K + 1` rows.
    pub states: Vec<Series>,
    /// Per-subsystem applied controls at left endpoints, `K` rows.
    pub controls: Vec<Series>,
    /// Applied shift values `v(t_k)`, `K` rows (absent without a shift).
    pub shift: Option<Series>,
    /// Wiener increments, `K` rows (absent in deterministic mode).
    pub noise: Option<Series>,
}

impl Trajectory {
    /// CSV export with header `t, x<i>_<j>..., u<i>_<j>..., v_1..v_m,
    /// dW_1..dW_m`. Control, shift and noise columns are written as 0 on the
    /// terminal row, which has no outgoing step.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        for (i, s) in self.states.iter().enumerate() {
            for j in 0..s.dim {
                header.push(format!("x{}_{}", i + 1, j + 1));
            }
        }
        for (i, c) in self.controls.iter().enumerate() {
            for j in 0..c.dim {
                header.push(format!("u{}_{}", i + 1, j + 1));
            }
        }
        if let Some(v) = &self.shift {
            for j in 0..v.dim {
                header.push(format!("v_{}", j + 1));
            }
        }
        if let Some(n) = &self.noise {
            for j in 0..n.dim {
                header.push(format!("dW_{}", j + 1));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        let steps = self.times.len().saturating_sub(1);
        for k in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[k])];
            for s in &self.states {
                for v in s.row(k) {
                    row.push(format!("{v}"));
                }
            }
            let emit = |series: &Series, row: &mut Vec<String>| {
                if k < steps {
                    for v in series.row(k) {
                        row.push(format!("{v}"));
                    }
                } else {
                    for _ in 0..series.dim {
                        row.push("0".to_string());
                    }
                }
            };
            for c in &self.controls {
                emit(c, &mut row);
            }
            if let Some(v) = &self.shift {
                emit(v, &mut row);
            }
            if let Some(n) = &self.noise {
                emit(n, &mut row);
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// First exit of one subsystem from its domain box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    /// Zero-based subsystem index.
    pub subsystem: usize,
    pub tau: f64,
    /// No exit observed before the horizon (or before integration stopped).
    pub censored: bool,
    /// Grid index `k` such that the crossing lies in `[t_k, t_{k+1}]`.
    pub crossing_index: usize,
    /// Position of the interpolated crossing inside that step, in `[0, 1]`.
    pub fraction: f64,
}

impl ExitRecord {
    fn censored_at(subsystem: usize, t_max: f64, last_index: usize) -> Self {
        ExitRecord {
            subsystem,
            tau: t_max,
            censored: true,
            crossing_index: last_index,
            fraction: 0.0,
        }
    }
}

/// Noise source for one path.
#[derive(Debug, Clone, Copy)]
pub enum NoiseMode<'a> {
    /// Counter-based stream: independent of scheduling for fixed
    /// `(seed, path_index)`.
    Stochastic { seed: u64, path_index: u64 },
    /// Supplied Wiener increments (one row per step).
    Given(&'a Series),
    /// No diffusion term; the deterministic cascade.
    Deterministic,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions<'a> {
    pub shift: Option<&'a DisturbanceLaw>,
    pub epsilon_override: Option<f64>,
    /// Stop integrating once this subsystem (zero-based) exits.
    pub stop_at_exit: Option<usize>,
}

impl<'a> SimOptions<'a> {
    pub fn deterministic() -> (Self, NoiseMode<'a>) {
        (SimOptions::default(), NoiseMode::Deterministic)
    }
}

/// Integrate one path, recording the full trajectory.
pub fn simulate_path(
    spec: &CascadeSpec,
    controls: &[ControlLaw],
    noise: NoiseMode<'_>,
    opts: SimOptions<'_>,
) -> Result<(Trajectory, Vec<ExitRecord>)> {
    let mut rec = Recorder::new(spec, opts.shift.is_some(), !matches!(noise, NoiseMode::Deterministic));
    let exits = integrate(spec, controls, noise, opts, &mut rec)?;
    Ok((rec.into_trajectory(), exits))
}

/// Integrate one path, keeping only exit records (no trajectory storage).
pub fn simulate_exits(
    spec: &CascadeSpec,
    controls: &[ControlLaw],
    noise: NoiseMode<'_>,
    opts: SimOptions<'_>,
) -> Result<Vec<ExitRecord>> {
    integrate(spec, controls, noise, opts, &mut NullSink)
}

trait StepSink {
    fn on_init(&mut self, _t: f64, _states: &[f64]) {}
    #[allow(clippy::too_many_arguments)]
    fn on_step(&mut self, _t_next: f64, _states: &[f64], _controls: &[f64], _v: Option<&[f64]>, _dw: Option<&[f64]>) {}
}

struct NullSink;
impl StepSink for NullSink {}

struct Recorder {
    times: Vec<f64>,
    state_offsets: Vec<usize>,
    control_offsets: Vec<usize>,
    states: Vec<Series>,
    controls: Vec<Series>,
    shift: Option<Series>,
    noise: Option<Series>,
}

impl Recorder {
    fn new(spec: &CascadeSpec, with_shift: bool, with_noise: bool) -> Self {
        let m = spec.noise_dim();
        Recorder {
            times: Vec::new(),
            state_offsets: spec.state_offsets(),
            control_offsets: spec.control_offsets(),
            states: spec.subsystems.iter().map(|s| Series::new(s.dim)).collect(),
            controls: spec
                .subsystems
                .iter()
                .map(|s| Series::new(s.control_dim()))
                .collect(),
            shift: with_shift.then(|| Series::new(m)),
            noise: with_noise.then(|| Series::new(m)),
        }
    }

    fn push_states(&mut self, states: &[f64]) {
        for (i, s) in self.states.iter_mut().enumerate() {
            s.push_row(&states[self.state_offsets[i]..self.state_offsets[i + 1]]);
        }
    }

    fn into_trajectory(self) -> Trajectory {
        Trajectory {
            times: self.times,
            states: self.states,
            controls: self.controls,
            shift: self.shift,
            noise: self.noise,
        }
    }
}

impl StepSink for Recorder {
    fn on_init(&mut self, t: f64, states: &[f64]) {
        self.times.push(t);
        self.push_states(states);
    }

    fn on_step(&mut self, t_next: f64, states: &[f64], controls: &[f64], v: Option<&[f64]>, dw: Option<&[f64]>) {
        self.times.push(t_next);
        self.push_states(states);
        for (i, c) in self.controls.iter_mut().enumerate() {
            c.push_row(&controls[self.control_offsets[i]..self.control_offsets[i + 1]]);
        }
        if let (Some(series), Some(row)) = (self.shift.as_mut(), v) {
            series.push_row(row);
        }
        if let (Some(series), Some(row)) = (self.noise.as_mut(), dw) {
            series.push_row(row);
        }
    }
}

/// Detect the first boundary crossing of the segment `prev -> next` against
/// an open box; returns the interpolation fraction of the earliest violated
/// coordinate.
fn crossing_fraction(prev: &[f64], next: &[f64], domain: &[Interval]) -> Option<f64> {
    let mut first: Option<f64> = None;
    for ((&p, &q), b) in prev.iter().zip(next).zip(domain) {
        let f = if q >= b.hi {
            if p >= b.hi {
                0.0
            } else {
                (b.hi - p) / (q - p)
            }
        } else if q <= b.lo {
            if p <= b.lo {
                0.0
            } else {
                (b.lo - p) / (q - p)
            }
        } else {
            continue;
        };
        first = Some(match first {
            Some(g) => g.min(f),
            None => f,
        });
    }
    first
}

fn outside(x: &[f64], domain: &[Interval]) -> bool {
    x.iter().zip(domain).any(|(&v, b)| !b.contains_open(v))
}

fn integrate(
    spec: &CascadeSpec,
    controls: &[ControlLaw],
    noise: NoiseMode<'_>,
    opts: SimOptions<'_>,
    sink: &mut impl StepSink,
) -> Result<Vec<ExitRecord>> {
    let n = spec.n();
    if controls.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} control laws supplied for {} subsystems",
            controls.len(),
            n
        )));
    }
    let state_offsets = spec.state_offsets();
    let control_offsets = spec.control_offsets();
    let k_total = spec.state_dim();
    let c_total = *control_offsets.last().unwrap();
    let m = spec.noise_dim();
    let d1 = spec.subsystems[0].dim;
    let dt = spec.dt;
    let sqrt_dt = dt.sqrt();
    let epsilon = opts.epsilon_override.unwrap_or(spec.epsilon);
    let sqrt_eps = epsilon.sqrt();
    let steps = spec.n_steps();

    for (i, law) in controls.iter().enumerate() {
        if law.dim() != spec.subsystems[i].control_dim() {
            return Err(Error::InvalidArgument(format!(
                "control law {} has arity {} for control dimension {}",
                i + 1,
                law.dim(),
                spec.subsystems[i].control_dim()
            )));
        }
    }
    if let Some(v) = opts.shift {
        if v.dim() != m {
            return Err(Error::InvalidArgument(format!(
                "shift has dimension {} for noise dimension {m}",
                v.dim()
            )));
        }
    }
    if let NoiseMode::Given(series) = noise {
        if series.dim != m || series.len() < steps {
            return Err(Error::InvalidArgument(format!(
                "supplied noise has {} rows of dim {}, need {steps} rows of dim {m}",
                series.len(),
                series.dim
            )));
        }
    }

    // flatten the initial state
    let mut x = vec![0.0; k_total];
    for (i, block) in spec.initial.iter().enumerate() {
        if i >= n || block.len() != spec.subsystems[i].dim {
            return Err(Error::Scenario("initial state shape mismatch".into()));
        }
        x[state_offsets[i]..state_offsets[i + 1]].copy_from_slice(block);
    }

    // detect a constant sigma once
    let sigma_constant = spec
        .sigma
        .iter()
        .all(|row| row.iter().all(|e| e.variables().is_empty()));
    let mut sigma_buf = vec![0.0; d1 * m];
    if sigma_constant {
        eval_sigma(spec, &x, &state_offsets, &mut sigma_buf, 0, 0.0)?;
    }

    let mut rng = match noise {
        NoiseMode::Stochastic { seed, path_index } => Some(path_rng(seed, path_index)),
        _ => None,
    };

    let mut exits: Vec<Option<ExitRecord>> = vec![None; n];
    sink.on_init(0.0, &x);

    // immediate exits at t = 0
    for (i, s) in spec.subsystems.iter().enumerate() {
        let xi = &x[state_offsets[i]..state_offsets[i + 1]];
        if outside(xi, &s.domain) {
            exits[i] = Some(ExitRecord {
                subsystem: i,
                tau: 0.0,
                censored: false,
                crossing_index: 0,
                fraction: 0.0,
            });
        }
    }
    let mut stop = opts
        .stop_at_exit
        .is_some_and(|l| exits.get(l).copied().flatten().is_some());

    let mut u = vec![0.0; c_total];
    let mut drift = vec![0.0; k_total];
    let mut dw = vec![0.0; m];
    let mut cum_w = vec![0.0; m];
    let mut x_next = vec![0.0; k_total];

    let mut step = 0usize;
    while step < steps && !stop {
        let t = step as f64 * dt;

        // realized controls at the left endpoint (nonanticipative: path
        // strategies see the Brownian prefix up to and including t)
        for (i, law) in controls.iter().enumerate() {
            let out = &mut u[control_offsets[i]..control_offsets[i + 1]];
            match law {
                ControlLaw::PiecewiseConstant(p) => out.copy_from_slice(p.value_at(t)),
                ControlLaw::PathStrategy(s) => s.value_at(t, &cum_w, out),
            }
        }

        let v = opts.shift.map(|law| law.value_at(t));

        // drifts from current states
        {
            let env = Env {
                t,
                states: &x,
                state_offsets: &state_offsets,
                controls: &u,
                control_offsets: &control_offsets,
            };
            for (i, s) in spec.subsystems.iter().enumerate() {
                for (c, e) in s.drift.iter().enumerate() {
                    drift[state_offsets[i] + c] = e.eval(&env).map_err(|err| Error::Simulation {
                        step,
                        time: t,
                        message: err.to_string(),
                    })?;
                }
            }
        }

        if !sigma_constant {
            eval_sigma(spec, &x, &state_offsets, &mut sigma_buf, step, t)?;
        }

        let has_noise = match &mut rng {
            Some(r) => {
                for w in dw.iter_mut() {
                    *w = sqrt_dt * r.sample::<f64, _>(StandardNormal);
                }
                true
            }
            None => match noise {
                NoiseMode::Given(series) => {
                    dw.copy_from_slice(series.row(step));
                    true
                }
                _ => false,
            },
        };

        // Euler step
        x_next.copy_from_slice(&x);
        for (xi, di) in x_next.iter_mut().zip(&drift) {
            *xi += di * dt;
        }
        for r in 0..d1 {
            let row = &sigma_buf[r * m..(r + 1) * m];
            let mut acc = 0.0;
            if let Some(v) = v {
                let mut sv = 0.0;
                for (s, vj) in row.iter().zip(v) {
                    sv += s * vj;
                }
                acc += sv * dt;
            }
            if has_noise {
                let mut sw = 0.0;
                for (s, wj) in row.iter().zip(&dw) {
                    sw += s * wj;
                }
                acc += sqrt_eps * sw;
            }
            x_next[r] += acc;
        }
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                step,
                time: t,
                message: "state became non-finite".into(),
            });
        }

        let t_next = (step + 1) as f64 * dt;
        for (i, s) in spec.subsystems.iter().enumerate() {
            if exits[i].is_some() {
                continue;
            }
            let prev = &x[state_offsets[i]..state_offsets[i + 1]];
            let next = &x_next[state_offsets[i]..state_offsets[i + 1]];
            if let Some(f) = crossing_fraction(prev, next, &s.domain) {
                exits[i] = Some(ExitRecord {
                    subsystem: i,
                    tau: t + f * dt,
                    censored: false,
                    crossing_index: step,
                    fraction: f,
                });
                if opts.stop_at_exit == Some(i) {
                    stop = true;
                }
            }
        }

        if has_noise {
            for (cw, w) in cum_w.iter_mut().zip(&dw) {
                *cw += w;
            }
        }
        x.copy_from_slice(&x_next);
        sink.on_step(
            t_next,
            &x,
            &u,
            v,
            has_noise.then_some(dw.as_slice()),
        );
        step += 1;
    }

    Ok(exits
        .into_iter()
        .enumerate()
        .map(|(i, e)| e.unwrap_or_else(|| ExitRecord::censored_at(i, spec.t_max, step)))
        .collect())
}

fn eval_sigma(
    spec: &CascadeSpec,
    x: &[f64],
    state_offsets: &[usize],
    out: &mut [f64],
    step: usize,
    t: f64,
) -> Result<()> {
    let m = spec.noise_dim();
    let env = Env {
        t,
        states: x,
        state_offsets,
        controls: &[],
        control_offsets: &[0],
    };
    for (r, row) in spec.sigma.iter().enumerate() {
        for (c, e) in row.iter().enumerate() {
            out[r * m + c] = e.eval(&env).map_err(|err| Error::Simulation {
                step,
                time: t,
                message: format!("sigma: {err}"),
            })?;
        }
    }
    Ok(())
}

/// Recompute the first-exit record of subsystem `l` from a stored trajectory
/// against `domain` (grid detection with linear interpolation).
pub fn exit_time(traj: &Trajectory, l: usize, domain: &[Interval]) -> ExitRecord {
    let states = &traj.states[l];
    let last = traj.times.len() - 1;
    if outside(states.row(0), domain) {
        return ExitRecord {
            subsystem: l,
            tau: 0.0,
            censored: false,
            crossing_index: 0,
            fraction: 0.0,
        };
    }
    for k in 0..last {
        let prev = states.row(k);
        let next = states.row(k + 1);
        if let Some(f) = crossing_fraction(prev, next, domain) {
            let dt = traj.times[k + 1] - traj.times[k];
            return ExitRecord {
                subsystem: l,
                tau: traj.times[k] + f * dt,
                censored: false,
                crossing_index: k,
                fraction: f,
            };
        }
    }
    ExitRecord::censored_at(l, *traj.times.last().unwrap(), last)
}

/// Result of the exit-ordering check: the escape-time criterion for stage `l`
/// is meaningful only when upstream subsystems outlast downstream ones.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub ok: bool,
    /// 1-based adjacent pairs `(i, i+1)` with `tau_i < tau_{i+1}`.
    pub violations: Vec<(usize, usize)>,
}

/// Check `tau_1 >= tau_2 >= ... >= tau_l` (censored records count as the
/// horizon value they carry).
pub fn check_exit_ordering(records: &[ExitRecord]) -> OrderingCheck {
    let mut violations = Vec::new();
    for (i, w) in records.windows(2).enumerate() {
        if w[0].tau < w[1].tau {
            violations.push((i + 1, i + 2));
        }
    }
    OrderingCheck {
        ok: violations.is_empty(),
        violations,
    }
}
