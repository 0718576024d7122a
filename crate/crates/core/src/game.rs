//! Deterministic two-player escape game and the vanishing-noise study.
//!
//! At stage `l`, the maximizer picks the stage control and the minimizer a
//! disturbance entering subsystem 1 through `sigma(x^1) v dt`; the cost is
//! `(1/2)∫_0^tau |v|^2 + theta_l tau`. Nonanticipative strategy sets are
//! approximated by static open-loop candidate grids, which turns the lower
//! and upper values into matrix minimax reductions whose inequality
//! structure is exact on any shared table.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate_exits, ExitRecord, NoiseMode, SimOptions};
use crate::error::{Error, Result};
use crate::law::{ControlLaw, DisturbanceLaw, PiecewiseConstant};
use crate::model::{CascadeSpec, Interval};
use crate::risk::{estimate_value_sup, Estimate, SupConfig};
use crate::variational::running_cost_quadrature;

/// Entry cap for the dense cost table.
pub const TABLE_ENTRY_CAP: usize = 10_000_000;

/// Deterministic stage cost of one `(u, v)` pair: simulate the shifted
/// noise-free cascade with upstream controls fixed, stop at the stage exit
/// and integrate the running cost to the interpolated crossing. A censored
/// exit contributes `tau = t_max` and is flagged.
pub fn game_cost(
    spec: &CascadeSpec,
    u: &ControlLaw,
    v: &DisturbanceLaw,
    l: usize,
) -> Result<(f64, ExitRecord)> {
    if l >= spec.n() {
        return Err(Error::InvalidArgument(format!(
            "subsystem index {l} out of range"
        )));
    }
    let mut controls: Vec<ControlLaw> = spec
        .subsystems
        .iter()
        .map(|s| ControlLaw::constant(s.fixed_control_value(), spec.t_max, Some(&s.control_box)))
        .collect();
    controls[l] = u.clone();
    let exits = simulate_exits(
        spec,
        &controls,
        NoiseMode::Deterministic,
        SimOptions {
            shift: Some(v),
            stop_at_exit: Some(l),
            ..SimOptions::default()
        },
    )?;
    let rec = exits[l];
    let run = running_cost_quadrature(v, rec.tau, rec.fraction, rec.crossing_index, spec.dt);
    Ok((0.5 * run + spec.subsystems[l].theta * rec.tau, rec))
}

/// Dense `u x v` cost table, evaluated concurrently in fixed order.
#[derive(Debug, Clone)]
pub struct CostTable {
    pub costs: Vec<Vec<f64>>,
    pub censored_any: bool,
}

pub fn cost_table(
    spec: &CascadeSpec,
    l: usize,
    u_cands: &[ControlLaw],
    v_cands: &[DisturbanceLaw],
) -> Result<CostTable> {
    if u_cands.is_empty() || v_cands.is_empty() {
        return Err(Error::InvalidArgument("empty candidate grid".into()));
    }
    let entries = u_cands.len().saturating_mul(v_cands.len());
    if entries > TABLE_ENTRY_CAP {
        return Err(Error::InvalidArgument(format!(
            "cost table would hold {entries} entries (cap {TABLE_ENTRY_CAP})"
        )));
    }
    let flat: Vec<(f64, bool)> = (0..entries)
        .into_par_iter()
        .map(|idx| -> Result<(f64, bool)> {
            let i = idx / v_cands.len();
            let j = idx % v_cands.len();
            let (c, rec) = game_cost(spec, &u_cands[i], &v_cands[j], l)?;
            Ok((c, rec.censored))
        })
        .collect::<Result<Vec<_>>>()?;
    let censored_any = flat.iter().any(|(_, c)| *c);
    let costs = flat
        .chunks(v_cands.len())
        .map(|row| row.iter().map(|(c, _)| *c).collect())
        .collect();
    Ok(CostTable {
        costs,
        censored_any,
    })
}

/// `min_v max_u` over a dense table: the static discretization of the
/// inf-sup (lower) game value. Returns `(value, u_index, v_index)`.
pub fn matrix_lower_value(costs: &[Vec<f64>]) -> (f64, usize, usize) {
    let cols = costs[0].len();
    let mut best: Option<(f64, usize, usize)> = None;
    for j in 0..cols {
        let (mut cmax, mut arg) = (f64::NEG_INFINITY, 0);
        for (i, row) in costs.iter().enumerate() {
            if row[j] > cmax {
                cmax = row[j];
                arg = i;
            }
        }
        match best {
            Some((v, _, _)) if cmax >= v => {}
            _ => best = Some((cmax, arg, j)),
        }
    }
    best.unwrap()
}

/// `max_u min_v` over the same table (the upper value of the game).
pub fn matrix_upper_value(costs: &[Vec<f64>]) -> (f64, usize, usize) {
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, row) in costs.iter().enumerate() {
        let (mut cmin, mut arg) = (f64::INFINITY, 0);
        for (j, &c) in row.iter().enumerate() {
            if c < cmin {
                cmin = c;
                arg = j;
            }
        }
        match best {
            Some((v, _, _)) if cmin <= v => {}
            _ => best = Some((cmin, i, arg)),
        }
    }
    best.unwrap()
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    /// `has_value` tolerance: `max(tol_rel * |lower|, tol_abs)`, with
    /// `tol_abs` defaulting to `10 dt theta_l`.
    pub tol_rel: f64,
    pub tol_abs: Option<f64>,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            tol_rel: 0.05,
            tol_abs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GameResult {
    pub lower: f64,
    pub upper: f64,
    pub has_value: bool,
    pub tol: f64,
    /// Maximizer strategy from the upper (guaranteed) reduction.
    pub u_star: ControlLaw,
    /// Minimizer strategy from the lower (guaranteed) reduction.
    pub v_star: DisturbanceLaw,
    pub table_shape: (usize, usize),
    pub censored_any: bool,
}

/// Evaluate the full table once and reduce both ways.
pub fn solve_game(
    spec: &CascadeSpec,
    l: usize,
    u_cands: &[ControlLaw],
    v_cands: &[DisturbanceLaw],
    cfg: &GameConfig,
) -> Result<GameResult> {
    let table = cost_table(spec, l, u_cands, v_cands)?;
    let (lower, _, v_idx) = matrix_lower_value(&table.costs);
    let (upper, u_idx, _) = matrix_upper_value(&table.costs);
    let tol = (cfg.tol_rel * lower.abs()).max(
        cfg.tol_abs
            .unwrap_or(10.0 * spec.dt * spec.subsystems[l].theta),
    );
    Ok(GameResult {
        lower,
        upper,
        has_value: (lower - upper).abs() <= tol,
        tol,
        u_star: u_cands[u_idx].clone(),
        v_star: v_cands[v_idx].clone(),
        table_shape: (u_cands.len(), v_cands.len()),
        censored_any: table.censored_any,
    })
}

/// Lower/upper value with explicit candidate grids (separate table builds).
pub fn lower_value(
    spec: &CascadeSpec,
    l: usize,
    u_cands: &[ControlLaw],
    v_cands: &[DisturbanceLaw],
) -> Result<(f64, ControlLaw, DisturbanceLaw)> {
    let table = cost_table(spec, l, u_cands, v_cands)?;
    let (value, ui, vj) = matrix_lower_value(&table.costs);
    Ok((value, u_cands[ui].clone(), v_cands[vj].clone()))
}

pub fn upper_value(
    spec: &CascadeSpec,
    l: usize,
    u_cands: &[ControlLaw],
    v_cands: &[DisturbanceLaw],
) -> Result<(f64, ControlLaw, DisturbanceLaw)> {
    let table = cost_table(spec, l, u_cands, v_cands)?;
    let (value, ui, vj) = matrix_upper_value(&table.costs);
    Ok((value, u_cands[ui].clone(), v_cands[vj].clone()))
}

/// Uniform grid of constant controls over the stage control box.
pub fn constant_control_grid(
    control_box: &[Interval],
    points_per_axis: usize,
    horizon: f64,
) -> Result<Vec<ControlLaw>> {
    if points_per_axis < 1 {
        return Err(Error::InvalidArgument("need at least one grid point".into()));
    }
    let r = control_box.len();
    let total = points_per_axis.checked_pow(r as u32).ok_or_else(|| {
        Error::InvalidArgument("control grid overflows".into())
    })?;
    if total > TABLE_ENTRY_CAP {
        return Err(Error::InvalidArgument(format!(
            "control grid would hold {total} candidates"
        )));
    }
    let axis = |b: &Interval, c: usize| -> f64 {
        if points_per_axis == 1 {
            b.midpoint()
        } else {
            b.lo + b.width() * c as f64 / (points_per_axis - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut value = Vec::with_capacity(r);
        for b in control_box {
            let c = idx % points_per_axis;
            idx /= points_per_axis;
            value.push(axis(b, c));
        }
        out.push(ControlLaw::PiecewiseConstant(PiecewiseConstant::constant(
            value,
            horizon,
            Some(control_box),
        )));
    }
    Ok(out)
}

/// Uniform grid of constant scalar disturbances spanning `range` in each of
/// the `m` noise coordinates (cartesian across coordinates).
pub fn constant_disturbance_grid(
    range: Interval,
    points: usize,
    m: usize,
    horizon: f64,
) -> Result<Vec<DisturbanceLaw>> {
    if points < 1 || m == 0 {
        return Err(Error::InvalidArgument("need points >= 1 and m >= 1".into()));
    }
    let total = points.checked_pow(m as u32).ok_or_else(|| {
        Error::InvalidArgument("disturbance grid overflows".into())
    })?;
    if total > TABLE_ENTRY_CAP {
        return Err(Error::InvalidArgument(format!(
            "disturbance grid would hold {total} candidates"
        )));
    }
    let axis = |c: usize| -> f64 {
        if points == 1 {
            range.midpoint()
        } else {
            range.lo + range.width() * c as f64 / (points - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut value = Vec::with_capacity(m);
        for _ in 0..m {
            let c = idx % points;
            idx /= points;
            value.push(axis(c));
        }
        out.push(DisturbanceLaw::constant(value, horizon));
    }
    Ok(out)
}

/// Vanishing-noise study: the stage supremum re-estimated at each `epsilon`
/// against the fixed game band `[upper, lower]`.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonStudy {
    pub epsilons: Vec<f64>,
    pub values: Vec<Estimate>,
    pub band_lower: f64,
    pub band_upper: f64,
    pub tol: f64,
    /// Per-epsilon `value <= lower + tol`.
    pub within: Vec<bool>,
    /// Distance from each value to the band `[upper, lower]` (zero inside).
    pub distance: Vec<f64>,
}

pub fn epsilon_study(
    spec: &CascadeSpec,
    l: usize,
    epsilons: &[f64],
    sup_cfg: &SupConfig,
    u_cands: &[ControlLaw],
    v_cands: &[DisturbanceLaw],
    game_cfg: &GameConfig,
    seed: u64,
) -> Result<EpsilonStudy> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "epsilons must be non-empty and strictly decreasing".into(),
        ));
    }
    let game = solve_game(spec, l, u_cands, v_cands, game_cfg)?;
    let mut values = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let spec_eps = spec.with_epsilon(eps);
        let (est, _) = estimate_value_sup(&spec_eps, l, sup_cfg, seed)?;
        values.push(est);
    }
    let within: Vec<bool> = values
        .iter()
        .map(|e| e.value <= game.lower + game.tol)
        .collect();
    let distance: Vec<f64> = values
        .iter()
        .map(|e| {
            if e.value < game.upper {
                game.upper - e.value
            } else if e.value > game.lower {
                e.value - game.lower
            } else {
                0.0
            }
        })
        .collect();
    Ok(EpsilonStudy {
        epsilons: epsilons.to_vec(),
        values,
        band_lower: game.lower,
        band_upper: game.upper,
        tol: game.tol,
        within,
        distance,
    })
}
