use crate::error::{Error, Result};
use crate::model::grid::TimeGrid;
use crate::scalar::Scalar;

/// Right-continuous piecewise-constant function of time on `[t0, T]`.
///
/// Value `values[i]` holds on `[knots[i], knots[i + 1])`; the last value
/// holds on `[knots[last], T]`. A last knot equal to `T` is allowed and
/// gives a zero-length final piece, which is how node-valued curves carry
/// their value at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCurve<S: Scalar = f64> {
    knots: Vec<S>,
    values: Vec<S>,
    t_end: S,
}

impl<S: Scalar> ParamCurve<S> {
    pub fn new(knots: Vec<S>, values: Vec<S>, t_end: S) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "curve needs one value per knot, got {} knots and {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) || !t_end.is_finite() {
            return Err(Error::InvalidInput("curve knots and values must be finite".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("curve knots must be strictly ascending".into()));
        }
        let last = *knots.last().unwrap();
        if last > t_end || knots[0] >= t_end {
            return Err(Error::InvalidInput(format!("curve knots must lie in [t0, T) with last knot <= T = {t_end}")));
        }
        Ok(Self { knots, values, t_end })
    }

    pub fn constant(value: S, t0: S, t_end: S) -> Result<Self> {
        Self::new(vec![t0], vec![value], t_end)
    }

    /// Curve whose value on `[t_k, t_{k+1})` is `node_values[k]`, with
    /// `node_values[n]` returned at `T`.
    pub fn from_grid_nodes(grid: &TimeGrid<S>, node_values: Vec<S>) -> Result<Self> {
        if node_values.len() != grid.n_steps() + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} node values, got {}",
                grid.n_steps() + 1,
                node_values.len()
            )));
        }
        Self::new(grid.times(), node_values, grid.t_end())
    }

    pub fn t0(&self) -> S {
        self.knots[0]
    }

    pub fn t_end(&self) -> S {
        self.t_end
    }

    pub fn knots(&self) -> &[S] {
        &self.knots
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    fn check_time(&self, t: S) -> Result<()> {
        if t < self.t0() || t > self.t_end || t.is_nan() {
            return Err(Error::Domain(format!("time {t} outside curve domain [{}, {}]", self.t0(), self.t_end)));
        }
        Ok(())
    }

    fn piece_index(&self, t: S) -> usize {
        self.knots.partition_point(|k| *k <= t).max(1) - 1
    }

    pub fn eval(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        Ok(self.values[self.piece_index(t)])
    }

    /// Evaluation with `t` clamped into the domain.
    pub fn eval_clamped(&self, t: S) -> S {
        let t = t.max(self.t0()).min(self.t_end);
        self.values[self.piece_index(t)]
    }

    fn piece_end(&self, i: usize) -> S {
        self.knots.get(i + 1).copied().unwrap_or(self.t_end)
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: S, b: S) -> Result<S> {
        self.check_time(a)?;
        self.check_time(b)?;
        if a > b {
            return Err(Error::Domain(format!("integral bounds reversed: {a} > {b}")));
        }
        let mut total = S::zero();
        for (i, (&lo, &v)) in self.knots.iter().zip(&self.values).enumerate() {
            let hi = self.piece_end(i);
            if hi <= a {
                continue;
            }
            if lo >= b {
                break;
            }
            let overlap = hi.min(b) - lo.max(a);
            if overlap > S::zero() {
                total = total + v * overlap;
            }
        }
        Ok(total)
    }

    /// `exp(integral(t, upper))`.
    pub fn exp_integral(&self, t: S, upper: S) -> Result<S> {
        Ok(self.integral(t, upper)?.exp())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { knots: self.knots.clone(), values: self.values.iter().map(|&v| f(v)).collect(), t_end: self.t_end }
    }

    /// Pointwise combination on the union of both knot sets.
    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.t0() != other.t0() || self.t_end != other.t_end {
            return Err(Error::InvalidInput(format!(
                "curves live on different domains: [{}, {}] vs [{}, {}]",
                self.t0(),
                self.t_end,
                other.t0(),
                other.t_end
            )));
        }
        let mut knots: Vec<S> = self.knots.iter().chain(&other.knots).copied().collect();
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
        let values = knots.iter().map(|&k| f(self.eval_clamped(k), other.eval_clamped(k))).collect();
        Self::new(knots, values, self.t_end)
    }

    /// Knots strictly inside `(t0, T)` where the curve may jump.
    pub fn interior_knots(&self) -> impl Iterator<Item = S> + '_ {
        let t0 = self.t0();
        let t_end = self.t_end;
        self.knots.iter().copied().filter(move |&k| k > t0 && k < t_end)
    }

    /// Distance from `t` to the nearest interior knot, `+inf` if there is none.
    pub fn distance_to_jump(&self, t: S) -> S {
        self.interior_knots().map(|k| (k - t).abs()).fold(S::infinity(), S::min)
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}
