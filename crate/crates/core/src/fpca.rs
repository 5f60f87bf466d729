//! Functional principal components of the target domain.
//!
//! The covariance operator is discretized with the grid quadrature: the
//! symmetric matrix `W^{1/2} C W^{1/2}` is diagonalized and eigenvectors are
//! mapped back with `W^{-1/2}`, so eigenfunctions are orthonormal in the
//! quadrature inner product.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curves::{same_grid, Curve, DomainDataset, Grid};
use crate::error::{Error, Result};

/// Pointwise mean tolerated by [`empirical_covariance`].
pub const CENTERING_TOLERANCE: f64 = 1e-8;
/// Eigenvalues below this fraction of the leading one are set to zero.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisSource {
    EstimatedFromTarget,
    AnalyticFourier,
}

/// Orthonormal functions on a grid, ordered by non-increasing eigenvalue.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    grid: Arc<Grid>,
    /// Row `d` holds the values of the `d`-th basis function.
    functions: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    source: BasisSource,
}

impl BasisSystem {
    pub fn new(
        grid: Arc<Grid>,
        functions: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        source: BasisSource,
    ) -> Result<Self> {
        if functions.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: functions.ncols(),
            });
        }
        if eigenvalues.len() != functions.nrows() {
            return Err(Error::DimensionMismatch {
                expected: functions.nrows(),
                got: eigenvalues.len(),
            });
        }
        Ok(BasisSystem {
            grid,
            functions,
            eigenvalues,
            source,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn d_max(&self) -> usize {
        self.functions.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn source(&self) -> BasisSource {
        self.source
    }

    pub fn function_matrix(&self) -> &DMatrix<f64> {
        &self.functions
    }

    /// The `d`-th basis function (zero-based).
    pub fn function(&self, d: usize) -> Curve {
        Curve::new(self.grid.clone(), self.functions.row(d).iter().copied().collect())
            .expect("basis rows match the grid")
    }

    /// Values of `Σ_d b_d ν_d` on the grid.
    pub fn synthesize(&self, scores: &[f64]) -> Result<Curve> {
        if scores.len() > self.d_max() {
            return Err(Error::DimensionMismatch {
                expected: self.d_max(),
                got: scores.len(),
            });
        }
        let m = self.grid.len();
        let mut values = vec![0.0; m];
        for (d, b) in scores.iter().enumerate() {
            for (v, f) in values.iter_mut().zip(self.functions.row(d).iter()) {
                *v += b * f;
            }
        }
        Curve::new(self.grid.clone(), values)
    }

    /// Coefficients of `f` on the first `d` basis functions.
    pub fn project_curve(&self, f: &Curve, d: usize) -> Result<Vec<f64>> {
        if !same_grid(f.grid(), &self.grid) {
            return Err(Error::GridMismatch);
        }
        if d > self.d_max() {
            return Err(Error::DimensionMismatch {
                expected: self.d_max(),
                got: d,
            });
        }
        Ok((0..d)
            .map(|k| {
                self.grid
                    .integrate_product(f.values(), self.functions.row(k).transpose().as_slice())
            })
            .collect())
    }

    /// Quadrature Gram matrix of the basis; the identity when orthonormal.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = DVector::from_column_slice(self.grid.weights());
        let weighted = DMatrix::from_fn(self.d_max(), self.grid.len(), |d, a| {
            self.functions[(d, a)] * w[a]
        });
        &weighted * self.functions.transpose()
    }
}

/// Scores of a domain's curves on the leading basis functions.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub domain_id: usize,
    pub scores: DMatrix<f64>,
}

impl ScoreMatrix {
    pub fn new(domain_id: usize, scores: DMatrix<f64>) -> Result<Self> {
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scores"));
        }
        Ok(ScoreMatrix { domain_id, scores })
    }

    pub fn nrows(&self) -> usize {
        self.scores.nrows()
    }

    pub fn dim(&self) -> usize {
        self.scores.ncols()
    }

    /// The leading `d` columns.
    pub fn truncated(&self, d: usize) -> ScoreMatrix {
        ScoreMatrix {
            domain_id: self.domain_id,
            scores: self.scores.columns(0, d.min(self.dim())).into_owned(),
        }
    }
}

/// `C(t_a, t_b) = N⁻¹ Σ_n X_n(t_a) X_n(t_b)` for a centered dataset.
pub fn empirical_covariance(data: &DomainDataset) -> Result<DMatrix<f64>> {
    let max_mean = data.max_abs_mean();
    if max_mean > CENTERING_TOLERANCE {
        return Err(Error::CenteringRequired { max_mean });
    }
    let x = data.curve_matrix();
    let mut c = x.transpose() * x;
    c /= data.len() as f64;
    // exact symmetry regardless of the product's accumulation order
    let ct = c.transpose();
    Ok((c + ct) * 0.5)
}

fn leading_index(values: impl Iterator<Item = f64> + Clone) -> usize {
    let max = values.clone().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = max * 1e-9;
    values.enumerate().find(|(_, v)| v.abs() >= max - tol).map(|(i, _)| i).unwrap_or(0)
}

/// Eigenpairs of the integral operator with kernel `kernel` under the grid
/// quadrature, truncated to `d_max`.
pub fn eigendecompose(kernel: &DMatrix<f64>, grid: &Arc<Grid>, d_max: usize) -> Result<BasisSystem> {
    let m = grid.len();
    if kernel.nrows() != m || kernel.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: kernel.nrows(),
        });
    }
    if d_max == 0 || d_max > m {
        return Err(Error::InvalidArgument(format!("d_max must be in 1..={m}, got {d_max}")));
    }
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel"));
    }
    let scale = kernel.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (kernel - kernel.transpose()).amax();
    if asymmetry > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidKernel { asymmetry });
    }

    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| {
        sqrt_w[i] * 0.5 * (kernel[(i, j)] + kernel[(j, i)]) * sqrt_w[j]
    });
    let eig = SymmetricEigen::new(a);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut functions = DMatrix::zeros(d_max, m);
    let mut eigenvalues = Vec::with_capacity(d_max);
    for (d, &k) in order.iter().take(d_max).enumerate() {
        let theta = eig.eigenvalues[k];
        eigenvalues.push(if theta <= EIGENVALUE_FLOOR * top { 0.0 } else { theta });
        let u = eig.eigenvectors.column(k);
        let lead = leading_index(u.iter().zip(&sqrt_w).map(|(x, s)| x / s));
        let sign = if u[lead] < 0.0 { -1.0 } else { 1.0 };
        for a in 0..m {
            functions[(d, a)] = sign * u[a] / sqrt_w[a];
        }
    }
    BasisSystem::new(grid.clone(), functions, eigenvalues, BasisSource::EstimatedFromTarget)
}

/// Basis estimated from a centered target dataset.
pub fn estimate_basis(target: &DomainDataset, d_max: usize) -> Result<BasisSystem> {
    let kernel = empirical_covariance(target)?;
    eigendecompose(&kernel, target.grid(), d_max)
}

/// Smallest `D` whose leading eigenvalues carry at least `fraction` of the total.
pub fn select_dimension(eigenvalues: &[f64], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must be in (0, 1), got {fraction}")));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let mut cum = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        cum += v.max(0.0);
        if cum / total >= fraction - 1e-12 {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len().max(1))
}

/// `scores[n][k] = ⟨X_n, ν_k⟩` for `k < d`.
pub fn project_scores(data: &DomainDataset, basis: &BasisSystem, d: usize) -> Result<ScoreMatrix> {
    if !same_grid(data.grid(), basis.grid()) {
        return Err(Error::GridMismatch);
    }
    if d == 0 || d > basis.d_max() {
        return Err(Error::DimensionMismatch {
            expected: basis.d_max(),
            got: d,
        });
    }
    let w = basis.grid().weights();
    let nu = basis.function_matrix().rows(0, d);
    let weighted = DMatrix::from_fn(basis.grid().len(), d, |a, k| w[a] * nu[(k, a)]);
    ScoreMatrix::new(data.domain_id, data.curve_matrix() * weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{center, inner_product, l2_norm};
    use crate::simgen::fourier_basis;
    use proptest::prelude::*;

    fn grid() -> Arc<Grid> {
        Grid::uniform(101).unwrap()
    }

    fn outer_sum(parts: &[(f64, &Curve)], m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |a, b| {
            parts.iter().map(|(c, f)| c * f.values()[a] * f.values()[b]).sum()
        })
    }

    #[test]
    fn covariance_of_symmetric_pair() {
        let g = grid();
        let f = Curve::from_fn(g.clone(), |t| (3.0 * t).sin() + t).unwrap();
        let d = DomainDataset::from_curves(0, &[f.clone(), f.scaled(-1.0)], vec![1.0, -1.0]).unwrap();
        let c = empirical_covariance(&d).unwrap();
        let expected = outer_sum(&[(1.0, &f)], g.len());
        assert!((c - expected).amax() < 1e-14);
    }

    #[test]
    fn covariance_of_zero_curve() {
        let g = grid();
        let d = DomainDataset::from_curves(0, &[Curve::zeros(g.clone())], vec![0.0]).unwrap();
        assert_eq!(empirical_covariance(&d).unwrap().amax(), 0.0);
    }

    #[test]
    fn covariance_of_two_orthonormal_pairs() {
        let g = grid();
        let basis = fourier_basis(&g, 3).unwrap();
        let (n1, n2) = (basis.function(1), basis.function(2));
        let d = DomainDataset::from_curves(
            0,
            &[n1.clone(), n1.scaled(-1.0), n2.clone(), n2.scaled(-1.0)],
            vec![0.0; 4],
        )
        .unwrap();
        let c = empirical_covariance(&d).unwrap();
        // direct evaluation of N⁻¹ Σ X_n ⊗ X_n with N = 4
        let expected = outer_sum(&[(0.5, &n1), (0.5, &n2)], g.len());
        assert!((c - expected).amax() < 1e-10);
    }

    #[test]
    fn uncentered_is_rejected() {
        let g = grid();
        let d = DomainDataset::from_curves(0, &[Curve::constant(g, 1.0)], vec![0.0]).unwrap();
        assert!(matches!(empirical_covariance(&d), Err(Error::CenteringRequired { .. })));
    }

    #[test]
    fn rank_one_kernel() {
        let g = grid();
        let f = Curve::from_fn(g.clone(), |t| 3f64.sqrt() * t).unwrap();
        assert!((l2_norm(&f) - 1.0).abs() < 1e-3);
        let f = f.scaled(1.0 / l2_norm(&f));
        let k = outer_sum(&[(1.0, &f)], g.len());
        let b = eigendecompose(&k, &g, 4).unwrap();
        assert!((b.eigenvalues()[0] - 1.0).abs() < 1e-10);
        assert!(b.eigenvalues()[1..].iter().all(|v| v.abs() <= 1e-10));
        let nu = b.function(0);
        // largest entry of f is positive, so the sign convention returns +f
        let diff = nu.combine(1.0, &f, -1.0).unwrap();
        assert!(l2_norm(&diff) < 1e-8);
    }

    #[test]
    fn zero_kernel() {
        let g = grid();
        let b = eigendecompose(&DMatrix::zeros(101, 101), &g, 5).unwrap();
        assert!(b.eigenvalues().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn known_spectrum_is_recovered() {
        let g = grid();
        let four = fourier_basis(&g, 3).unwrap();
        let parts: Vec<(f64, Curve)> =
            (0..3).map(|d| (((d + 1) as f64).powf(-2.4), four.function(d))).collect();
        let refs: Vec<(f64, &Curve)> = parts.iter().map(|(c, f)| (*c, f)).collect();
        let k = outer_sum(&refs, g.len());
        let b = eigendecompose(&k, &g, 5).unwrap();
        let expected = [1.0, 2f64.powf(-2.4), 3f64.powf(-2.4)];
        for (got, want) in b.eigenvalues().iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        let gram = b.gram();
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-8);
    }

    #[test]
    fn asymmetric_kernel_is_rejected() {
        let g = Grid::uniform(5).unwrap();
        let mut k = DMatrix::identity(5, 5);
        k[(0, 1)] = 0.5;
        assert!(matches!(eigendecompose(&k, &g, 2), Err(Error::InvalidKernel { .. })));
    }

    #[test]
    fn dimension_selection() {
        assert_eq!(select_dimension(&[9.0, 0.5, 0.5], 0.9).unwrap(), 1);
        assert_eq!(select_dimension(&[1.0, 1.0, 1.0, 1.0], 0.9).unwrap(), 4);
        assert_eq!(select_dimension(&[4.0, 3.0, 2.0, 1.0], 0.9).unwrap(), 3);
        assert_eq!(select_dimension(&[0.0, 0.0], 0.9), Err(Error::DegenerateSpectrum));
        assert!(select_dimension(&[1.0], 1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let g = grid();
        let b = fourier_basis(&g, 4).unwrap();
        let (n1, n2) = (b.function(0), b.function(1));
        let x1 = n1.scaled(3.0);
        let x2 = n1.combine(2.0, &n2, -1.0).unwrap();
        let d = DomainDataset::from_curves(0, &[x1, Curve::zeros(g.clone()), x2], vec![0.0; 3]).unwrap();
        let s = project_scores(&d, &b, 2).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 0.0, 2.0, -1.0]);
        assert!((s.scores - expected).amax() < 1e-8);
    }

    fn random_dataset(seed: u64, n: usize) -> DomainDataset {
        use rand::Rng;
        let g = grid();
        let four = fourier_basis(&g, 7).unwrap();
        let mut rng = crate::rng::stream(seed, &[]);
        let curves: Vec<Curve> = (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..7).map(|d| rng.random_range(-1.0..1.0) / (d + 1) as f64).collect();
                four.synthesize(&s).unwrap()
            })
            .collect();
        center(&DomainDataset::from_curves(0, &curves, vec![0.0; n]).unwrap())
    }

    #[test]
    fn full_spectrum_matches_trace() {
        let d = random_dataset(3, 30);
        let k = empirical_covariance(&d).unwrap();
        let g = d.grid();
        let trace: f64 = (0..g.len()).map(|a| g.weights()[a] * k[(a, a)]).sum();
        let b = eigendecompose(&k, g, g.len()).unwrap();
        let sum: f64 = b.eigenvalues().iter().sum();
        assert!((sum - trace).abs() < 1e-8, "{sum} vs {trace}");
    }

    #[test]
    fn reconstruction_error_is_nonincreasing() {
        let d = random_dataset(4, 25);
        let b = estimate_basis(&d, 10).unwrap();
        for n in 0..5 {
            let x = d.curve(n);
            let mut last = f64::INFINITY;
            for dim in 1..=10 {
                let s = b.project_curve(&x, dim).unwrap();
                let err = l2_norm(&x.combine(1.0, &b.synthesize(&s).unwrap(), -1.0).unwrap());
                assert!(err <= last + 1e-12);
                last = err;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn scaling_data_scales_spectrum(seed in 0u64..1000, c in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0]) {
            let d = random_dataset(seed, 20);
            let scaled = DomainDataset::new(0, d.grid().clone(), d.curve_matrix() * c, d.responses().clone()).unwrap();
            let b1 = estimate_basis(&d, 5).unwrap();
            let b2 = estimate_basis(&scaled, 5).unwrap();
            for k in 0..5 {
                prop_assert!((b2.eigenvalues()[k] - c * c * b1.eigenvalues()[k]).abs() < 1e-8 * (1.0 + c * c));
                let f1 = b1.function(k);
                let f2 = b2.function(k);
                prop_assert!(l2_norm(&f1.combine(1.0, &f2, -1.0).unwrap()) < 1e-8);
                prop_assert!((inner_product(&f1, &f2).unwrap() - 1.0).abs() < 1e-8);
            }
            let s1 = project_scores(&d, &b1, 5).unwrap();
            let s2 = project_scores(&scaled, &b2, 5).unwrap();
            prop_assert!((s2.scores - s1.scores * c).amax() < 1e-8 * (1.0 + c.abs()));
        }
    }
}
