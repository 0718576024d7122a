//! Control and disturbance laws.
//!
//! Controls are either open-loop piecewise-constant tables or nonanticipative
//! path strategies: a feature map of the noise prefix (current time and the
//! latest Brownian value) composed with a linear parameter table, clamped
//! into the control box. Disturbances are piecewise-constant vector functions
//! with cached `L2` and sup norms.

use serde::Serialize;

use crate::model::Interval;

/// Piecewise-constant table on `[breakpoints[0], breakpoints[K]]`; the last
/// piece extends past the final breakpoint (hold-last semantics).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseConstant {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseConstant {
    /// Build a table; values are clamped into `bounds` when given.
    pub fn new(breakpoints: Vec<f64>, mut values: Vec<Vec<f64>>, bounds: Option<&[Interval]>) -> Self {
        assert!(
            breakpoints.len() == values.len() + 1,
            "need K+1 breakpoints for K pieces"
        );
        assert!(
            breakpoints.windows(2).all(|w| w[0] < w[1]),
            "breakpoints must be strictly increasing"
        );
        if let Some(bounds) = bounds {
            for row in &mut values {
                assert_eq!(row.len(), bounds.len(), "value arity mismatch");
                for (v, b) in row.iter_mut().zip(bounds) {
                    *v = b.clamp(*v);
                }
            }
        }
        PiecewiseConstant {
            breakpoints,
            values,
        }
    }

    pub fn constant(value: Vec<f64>, horizon: f64, bounds: Option<&[Interval]>) -> Self {
        Self::new(vec![0.0, horizon.max(f64::MIN_POSITIVE)], vec![value], bounds)
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Index of the piece covering `t` (hold-last beyond the end).
    fn piece_index(&self, t: f64) -> usize {
        let k = self.values.len();
        // first interior breakpoint strictly greater than t
        let idx = self.breakpoints[1..k].partition_point(|&b| b <= t);
        idx.min(k - 1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.piece_index(t)]
    }

    /// Exact `∫_0^t Σ_j v_j(s)^2 ds` (pieces extend with hold-last).
    pub fn integral_sq_to(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let k = self.values.len();
        for (i, row) in self.values.iter().enumerate() {
            let lo = self.breakpoints[i];
            let hi = if i + 1 == k { f64::INFINITY } else { self.breakpoints[i + 1] };
            if t <= lo {
                break;
            }
            let span = t.min(hi) - lo;
            let sq: f64 = row.iter().map(|v| v * v).sum();
            acc += sq * span;
        }
        acc
    }

    /// Exact componentwise `∫_0^t v(s) ds`.
    pub fn integral_to(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        let k = self.values.len();
        for (i, row) in self.values.iter().enumerate() {
            let lo = self.breakpoints[i];
            let hi = if i + 1 == k { f64::INFINITY } else { self.breakpoints[i + 1] };
            if t <= lo {
                break;
            }
            let span = t.min(hi) - lo;
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * span;
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

/// Player-2 / modeling-error input: piecewise-constant `v : [0, t_max] -> R^m`
/// with cached `∫ |v|^2` and sup norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisturbanceLaw {
    pub table: PiecewiseConstant,
    pub l2_sq: f64,
    pub sup: f64,
}

impl DisturbanceLaw {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        let table = PiecewiseConstant::new(breakpoints, values, None);
        let end = *table.breakpoints.last().unwrap();
        let l2_sq = table.integral_sq_to(end);
        let sup = table.sup_norm();
        DisturbanceLaw { table, l2_sq, sup }
    }

    pub fn constant(value: Vec<f64>, horizon: f64) -> Self {
        Self::new(vec![0.0, horizon.max(f64::MIN_POSITIVE)], vec![value])
    }

    pub fn zero(m: usize, horizon: f64) -> Self {
        Self::constant(vec![0.0; m], horizon)
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        self.table.value_at(t)
    }

    pub fn is_zero(&self) -> bool {
        self.table.values.iter().all(|row| row.iter().all(|&v| v == 0.0))
    }
}

/// One additive term of a baked-in noise translation: `scale · ∫_0^t v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseShift {
    pub scale: f64,
    pub shift: DisturbanceLaw,
}

/// Nonanticipative strategy: per control coordinate, an affine map of
/// `(t, W_1(t), ..., W_m(t))` clamped into the control box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStrategy {
    /// Row per control coordinate: `[bias, c_t, c_{W_1}, ..., c_{W_m}]`.
    pub coeffs: Vec<Vec<f64>>,
    pub control_box: Vec<Interval>,
    /// Baked noise translations applied to the observed prefix (the shifted
    /// strategy of a Girsanov change of measure).
    pub shifts: Vec<NoiseShift>,
}

impl PathStrategy {
    pub fn new(coeffs: Vec<Vec<f64>>, control_box: Vec<Interval>) -> Self {
        assert_eq!(coeffs.len(), control_box.len(), "one coefficient row per control coordinate");
        PathStrategy {
            coeffs,
            control_box,
            shifts: Vec::new(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.coeffs.first().map_or(0, |row| row.len().saturating_sub(2))
    }

    /// Evaluate at time `t` given the raw Brownian prefix value `w = W(t)`.
    pub fn value_at(&self, t: f64, w: &[f64], out: &mut [f64]) {
        let m = w.len();
        let mut shifted = [0.0f64; 8];
        let mut shifted_vec;
        let shifted: &mut [f64] = if m <= 8 {
            &mut shifted[..m]
        } else {
            shifted_vec = vec![0.0; m];
            &mut shifted_vec
        };
        shifted.copy_from_slice(w);
        let mut buf = vec![0.0; m];
        for term in &self.shifts {
            term.shift.table.integral_to(t, &mut buf);
            for (s, b) in shifted.iter_mut().zip(&buf) {
                *s += term.scale * b;
            }
        }
        for ((o, row), b) in out.iter_mut().zip(&self.coeffs).zip(&self.control_box) {
            let mut v = row[0] + row[1] * t;
            for (c, s) in row[2..].iter().zip(shifted.iter()) {
                v += c * s;
            }
            *o = b.clamp(v);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlLaw {
    PiecewiseConstant(PiecewiseConstant),
    PathStrategy(PathStrategy),
}

impl ControlLaw {
    pub fn constant(value: Vec<f64>, horizon: f64, bounds: Option<&[Interval]>) -> Self {
        ControlLaw::PiecewiseConstant(PiecewiseConstant::constant(value, horizon, bounds))
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlLaw::PiecewiseConstant(p) => p.dim(),
            ControlLaw::PathStrategy(s) => s.coeffs.len(),
        }
    }

    /// Parameter-vector L2 norm, used as the optimizer tie-breaker.
    pub fn param_norm(&self) -> f64 {
        let sq: f64 = match self {
            ControlLaw::PiecewiseConstant(p) => p
                .values
                .iter()
                .flat_map(|row| row.iter())
                .map(|v| v * v)
                .sum(),
            ControlLaw::PathStrategy(s) => s
                .coeffs
                .iter()
                .flat_map(|row| row.iter())
                .map(|v| v * v)
                .sum(),
        };
        sq.sqrt()
    }
}

/// Translate a strategy's observed noise by `eps^{-1/2} ∫ v`: the shifted
/// control that keeps the controlled system's law consistent under the
/// disturbance-shifted dynamics. Open-loop tables are noise-independent and
/// are returned unchanged; repeated shifts compose additively.
pub fn shift_strategy(gamma: &ControlLaw, v: &DisturbanceLaw, epsilon: f64) -> ControlLaw {
    assert!(epsilon > 0.0, "shift requires positive epsilon");
    match gamma {
        ControlLaw::PiecewiseConstant(_) => gamma.clone(),
        ControlLaw::PathStrategy(s) => {
            let mut shifted = s.clone();
            if !v.is_zero() {
                shifted.shifts.push(NoiseShift {
                    scale: epsilon.powf(-0.5),
                    shift: v.clone(),
                });
            }
            ControlLaw::PathStrategy(shifted)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_lookup_and_hold_last() {
        let p = PiecewiseConstant::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0], vec![2.0]],
            None,
        );
        assert_eq!(p.value_at(0.0), &[1.0]);
        assert_eq!(p.value_at(0.999), &[1.0]);
        assert_eq!(p.value_at(1.0), &[2.0]);
        assert_eq!(p.value_at(5.0), &[2.0]);
    }

    #[test]
    fn values_clamped_into_box() {
        let bounds = [Interval::new(-1.0, 1.0)];
        let p = PiecewiseConstant::new(vec![0.0, 1.0], vec![vec![3.0]], Some(&bounds));
        assert_eq!(p.value_at(0.5), &[1.0]);
    }

    #[test]
    fn cached_norms() {
        let v = DisturbanceLaw::new(vec![0.0, 1.0, 3.0], vec![vec![2.0], vec![-1.0]]);
        assert_eq!(v.l2_sq, 4.0 + 2.0);
        assert_eq!(v.sup, 2.0);
        assert_eq!(v.table.integral_sq_to(0.5), 2.0);
    }

    #[test]
    fn integral_componentwise() {
        let v = DisturbanceLaw::new(vec![0.0, 1.0, 2.0], vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let mut out = [0.0; 2];
        v.table.integral_to(1.5, &mut out);
        assert_eq!(out, [1.0, 1.0]);
    }

    #[test]
    fn shift_leaves_open_loop_unchanged() {
        let bounds = [Interval::new(-1.0, 1.0)];
        let gamma = ControlLaw::constant(vec![0.3], 1.0, Some(&bounds));
        let v = DisturbanceLaw::constant(vec![2.0], 1.0);
        assert_eq!(shift_strategy(&gamma, &v, 1.0), gamma);
    }

    #[test]
    fn zero_shift_is_identity_on_strategies() {
        let s = ControlLaw::PathStrategy(PathStrategy::new(
            vec![vec![0.0, 0.0, 1.0]],
            vec![Interval::new(-1.0, 1.0)],
        ));
        let z = DisturbanceLaw::zero(1, 1.0);
        assert_eq!(shift_strategy(&s, &z, 0.5), s);
    }

    #[test]
    fn shifted_strategy_sees_translated_noise() {
        // gamma(t, W) = clamp(W(t)); constant v = c; eps = 1
        // output at t equals clamp(W(t) + c t)
        let s = ControlLaw::PathStrategy(PathStrategy::new(
            vec![vec![0.0, 0.0, 1.0]],
            vec![Interval::new(-10.0, 10.0)],
        ));
        let c = 0.7;
        let v = DisturbanceLaw::constant(vec![c], 10.0);
        let shifted = shift_strategy(&s, &v, 1.0);
        let ControlLaw::PathStrategy(sh) = &shifted else {
            panic!()
        };
        let mut out = [0.0];
        let w = [0.25];
        sh.value_at(2.0, &w, &mut out);
        assert!((out[0] - (0.25 + c * 2.0)).abs() < 1e-14);
    }
}
