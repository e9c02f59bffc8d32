use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform time discretization of `[t0, t_end]`.
///
/// A grid obtained with [`TimeGrid::suffix`] keeps the node times of its
/// parent bit for bit, so node-valued curves built on the parent can be
/// evaluated on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<S: Scalar = f64> {
    origin: S,
    t_end: S,
    total_steps: usize,
    offset: usize,
}

impl<S: Scalar> TimeGrid<S> {
    pub fn new(t0: S, t_end: S, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::InvalidInput(format!("time grid needs finite t0 < T, got [{t0}, {t_end}]")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput("time grid needs n_steps >= 1".into()));
        }
        Ok(Self { origin: t0, t_end, total_steps: n_steps, offset: 0 })
    }

    /// The grid restricted to nodes `k..=n_steps`.
    pub fn suffix(&self, k: usize) -> Result<Self> {
        if k >= self.n_steps() {
            return Err(Error::InvalidInput(format!(
                "suffix must keep at least one step, got start node {k} of {}",
                self.n_steps()
            )));
        }
        Ok(Self { offset: self.offset + k, ..*self })
    }

    pub fn t0(&self) -> S {
        self.time(0)
    }

    pub fn t_end(&self) -> S {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.total_steps - self.offset
    }

    pub fn step(&self) -> S {
        (self.t_end - self.origin) / S::from_usize(self.total_steps).unwrap()
    }

    /// Node time `t_k`; the last node is pinned to `T`.
    pub fn time(&self, k: usize) -> S {
        debug_assert!(k <= self.n_steps());
        let j = self.offset + k;
        if j >= self.total_steps {
            self.t_end
        } else {
            self.origin + S::from_usize(j).unwrap() * self.step()
        }
    }

    pub fn times(&self) -> Vec<S> {
        (0..=self.n_steps()).map(|k| self.time(k)).collect()
    }

    pub fn contains(&self, t: S) -> bool {
        t >= self.t0() && t <= self.t_end
    }

    pub fn duration(&self) -> S {
        self.t_end - self.t0()
    }
}

impl<S: Scalar> std::fmt::Display for TimeGrid<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}] / {} steps", self.t0(), self.t_end, self.n_steps())
    }
}
