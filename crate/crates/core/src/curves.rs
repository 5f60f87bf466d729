//! Functions on [0, 1] sampled on a shared grid, with trapezoid quadrature.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sample points on [0, 1] with quadrature weights that integrate the
/// constant 1 to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

pub const DEFAULT_GRID_SIZE: usize = 101;

impl Grid {
    /// `m` equally spaced points including both endpoints.
    pub fn uniform(m: usize) -> Result<Arc<Grid>> {
        if m < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {m}")));
        }
        let h = 1.0 / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        points[m - 1] = 1.0;
        let mut weights = vec![h; m];
        weights[0] = h / 2.0;
        weights[m - 1] = h / 2.0;
        Ok(Arc::new(Grid { points, weights }))
    }

    /// Arbitrary ascending points from 0 to 1; trapezoid weights from spacing.
    pub fn from_points(points: Vec<f64>) -> Result<Arc<Grid>> {
        let m = points.len();
        if m < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {m}")));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("grid points"));
        }
        if points[0] != 0.0 || points[m - 1] != 1.0 {
            return Err(Error::InvalidGrid("grid must start at 0 and end at 1".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("grid points must be strictly increasing".into()));
        }
        let mut weights = vec![0.0; m];
        for i in 0..m - 1 {
            let half = (points[i + 1] - points[i]) / 2.0;
            weights[i] += half;
            weights[i + 1] += half;
        }
        Ok(Arc::new(Grid { points, weights }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature of the pointwise product of two sampled functions.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a).sum()
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a.points == b.points
}

/// A square-integrable function given by its values on a grid.
#[derive(Debug, Clone)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve values"));
        }
        Ok(Curve { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Curve::new(grid, values)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Curve { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Curve { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Curve, b: f64) -> Result<Curve> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Curve::new(self.grid.clone(), values)
    }

    pub fn scaled(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// Quadrature approximation of the L² inner product.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    if !same_grid(&f.grid, &g.grid) {
        return Err(Error::GridMismatch);
    }
    Ok(f.grid.integrate_product(&f.values, &g.values))
}

pub fn l2_norm(f: &Curve) -> f64 {
    f.grid.integrate_product(&f.values, &f.values).max(0.0).sqrt()
}

/// Design curves and scalar responses of one domain. Domain 0 is the target.
///
/// Curves are stored row-wise: row `n` holds `X_n` on the grid.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain_id: usize,
    grid: Arc<Grid>,
    curves: DMatrix<f64>,
    responses: DVector<f64>,
}

impl DomainDataset {
    pub fn new(
        domain_id: usize,
        grid: Arc<Grid>,
        curves: DMatrix<f64>,
        responses: DVector<f64>,
    ) -> Result<Self> {
        if curves.nrows() == 0 {
            return Err(Error::InvalidArgument(format!("domain {domain_id} has no observations")));
        }
        if curves.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: curves.ncols(),
            });
        }
        if responses.len() != curves.nrows() {
            return Err(Error::DimensionMismatch {
                expected: curves.nrows(),
                got: responses.len(),
            });
        }
        if curves.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve values"));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("responses"));
        }
        Ok(DomainDataset {
            domain_id,
            grid,
            curves,
            responses,
        })
    }

    pub fn from_curves(domain_id: usize, curves: &[Curve], responses: Vec<f64>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("domain {domain_id} has no observations")))?;
        let grid = first.grid.clone();
        if curves.iter().any(|c| !same_grid(&c.grid, &grid)) {
            return Err(Error::GridMismatch);
        }
        let m = grid.len();
        let matrix = DMatrix::from_fn(curves.len(), m, |n, a| curves[n].values[a]);
        DomainDataset::new(domain_id, grid, matrix, DVector::from_vec(responses))
    }

    pub fn len(&self) -> usize {
        self.curves.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.nrows() == 0
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn curve_matrix(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn curve(&self, n: usize) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.curves.row(n).iter().copied().collect(),
        }
    }

    /// Pointwise mean curve values.
    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.curves.row_sum().iter().map(|s| s / n).collect()
    }

    pub fn mean_response(&self) -> f64 {
        self.responses.mean()
    }

    /// Largest absolute pointwise mean.
    pub fn max_abs_mean(&self) -> f64 {
        self.mean_curve().iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Subtract the given mean curve and mean response.
    pub fn shifted(&self, mean_curve: &[f64], mean_response: f64) -> DomainDataset {
        let mut curves = self.curves.clone();
        for mut row in curves.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(mean_curve) {
                *v -= m;
            }
        }
        let responses = self.responses.map(|y| y - mean_response);
        DomainDataset {
            domain_id: self.domain_id,
            grid: self.grid.clone(),
            curves,
            responses,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<DomainDataset> {
        let m = self.grid.len();
        let curves = DMatrix::from_fn(rows.len(), m, |n, a| self.curves[(rows[n], a)]);
        let responses = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.responses[r]));
        DomainDataset::new(self.domain_id, self.grid.clone(), curves, responses)
    }

    pub fn with_responses(&self, responses: DVector<f64>) -> Result<DomainDataset> {
        DomainDataset::new(self.domain_id, self.grid.clone(), self.curves.clone(), responses)
    }

    pub fn with_id(mut self, domain_id: usize) -> DomainDataset {
        self.domain_id = domain_id;
        self
    }
}

/// Remove the pointwise mean curve and the mean response.
pub fn center(data: &DomainDataset) -> DomainDataset {
    let mean = data.mean_curve();
    let mut out = data.shifted(&mean, data.mean_response());
    // a second pass absorbs the rounding left by the first subtraction
    let residual = out.mean_curve();
    if residual.iter().any(|v| *v != 0.0) {
        out = out.shifted(&residual, out.mean_response());
    }
    out
}
