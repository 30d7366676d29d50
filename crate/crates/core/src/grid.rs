use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Strictly increasing semigroup times starting at or after 0, plus the
/// horizon past which infinite-time integrals are closed analytically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    tail_t: f64,
}

const KNOT_TOL: f64 = 1e-12;

impl TimeGrid {
    pub fn new(points: Vec<f64>, tail_t: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("time grid has no points".into()));
        }
        if !(points[0] >= 0.0) {
            return Err(Error::InvalidConfig(format!("first grid point {} < 0", points[0])));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(format!(
                "grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let last = *points.last().unwrap();
        if !(tail_t >= last) || !tail_t.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tail horizon {tail_t} below last grid point {last}"
            )));
        }
        Ok(Self { points, tail_t })
    }

    /// Geometrically stretched grid on `[0, t_max]`: spacing grows like
    /// `e^{stretch·k/(n-1)}`, dense near 0.
    pub fn geometric(t_max: f64, n_points: usize, stretch: f64) -> Result<Self> {
        if n_points < 2 || !(t_max > 0.0) || !(stretch > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "geometric grid needs n >= 2, t_max > 0, stretch > 0 (got {n_points}, {t_max}, {stretch})"
            )));
        }
        let denom = stretch.exp_m1();
        let mut points: Vec<f64> = (0..n_points)
            .map(|k| t_max * (stretch * k as f64 / (n_points - 1) as f64).exp_m1() / denom)
            .collect();
        points[n_points - 1] = t_max;
        Self::new(points, t_max)
    }

    /// The default quadrature grid: 48 geometric points on `[0, 6]`.
    pub fn default_quadrature() -> Self {
        Self::geometric(6.0, 48, 3.0).expect("static grid")
    }

    pub fn uniform(t_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 || !(t_max > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "uniform grid needs n >= 2 and t_max > 0 (got {n_points}, {t_max})"
            )));
        }
        let h = t_max / (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|k| k as f64 * h).collect();
        points[n_points - 1] = t_max;
        Self::new(points, t_max)
    }

    /// Insert the given times (deduplicated within 1e-12).
    pub fn with_knots(&self, knots: &[f64]) -> Result<Self> {
        let mut pts = self.points.clone();
        for &k in knots {
            if !pts.iter().any(|p| (p - k).abs() <= KNOT_TOL) {
                pts.push(k);
            }
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        let tail = self.tail_t.max(*pts.last().unwrap());
        Self::new(pts, tail)
    }

    pub fn with_tail(mut self, tail_t: f64) -> Result<Self> {
        if !(tail_t >= self.last()) {
            return Err(Error::InvalidConfig(format!("tail {tail_t} below last point {}", self.last())));
        }
        self.tail_t = tail_t;
        Ok(self)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn tail_t(&self) -> f64 {
        self.tail_t
    }

    /// Index of the grid point equal to `t` within 1e-12.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|p| (p - t).abs() <= KNOT_TOL)
    }

    /// Trapezoid weights over the whole grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        self.trapezoid_weights_to(self.len() - 1)
    }

    /// Trapezoid weights over `points[0..=end]`, zero beyond.
    pub fn trapezoid_weights_to(&self, end: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for k in 0..end {
            let h = 0.5 * (self.points[k + 1] - self.points[k]);
            w[k] += h;
            w[k + 1] += h;
        }
        w
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| (a - b).abs() <= KNOT_TOL)
    }
}
