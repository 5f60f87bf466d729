//! Projected least squares and the two-step shape transfer estimator.
//!
//! Pre-training fits every domain in `A ∪ {0}` by least squares on the
//! target eigenbasis and averages the fits with signed sample-size weights
//! `ω_j = sign(⟨β̌_j, β̌_0⟩) N_j / (N_A + N_0)`. Fine-tuning rescales that
//! shape component by a scalar amplitude fitted on the target alone.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curves::{center, l2_norm, Curve, DomainDataset};
use crate::error::{Error, Result};
use crate::fpca::{estimate_basis, project_scores, select_dimension, BasisSystem, ScoreMatrix};

/// Smallest singular value accepted, relative to the largest.
pub const RANK_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_EIGEN_FRACTION: f64 = 0.9;

/// Coefficient scores `b_1..b_D` on a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    pub domain_id: usize,
    pub scores: DVector<f64>,
}

impl CoefficientEstimate {
    pub fn dim(&self) -> usize {
        self.scores.len()
    }

    pub fn as_curve(&self, basis: &BasisSystem) -> Result<Curve> {
        basis.synthesize(self.scores.as_slice())
    }
}

/// Least-squares solver for a fixed score matrix, reusable across responses.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    pinv: DMatrix<f64>,
}

impl OlsSolver {
    pub fn new(scores: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = scores.shape();
        if d == 0 {
            return Err(Error::InvalidArgument("score matrix has no columns".into()));
        }
        if n < d {
            return Err(Error::SingularDesign {
                condition: f64::INFINITY,
            });
        }
        let svd = scores.clone().svd(true, true);
        let s = &svd.singular_values;
        let max = s.max();
        let min = s.min();
        if !(max > 0.0) || min <= RANK_TOLERANCE * max {
            let condition = if min > 0.0 { max / min } else { f64::INFINITY };
            return Err(Error::SingularDesign { condition });
        }
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        // V Σ⁻¹ Uᵀ
        let mut scaled_vt = v_t.transpose();
        for (k, mut col) in scaled_vt.column_iter_mut().enumerate() {
            col /= s[k];
        }
        Ok(OlsSolver {
            pinv: scaled_vt * u.transpose(),
        })
    }

    pub fn solve(&self, responses: &DVector<f64>) -> DVector<f64> {
        &self.pinv * responses
    }
}

/// Least-squares coefficients of `responses` on the score columns.
pub fn ols_fit(scores: &ScoreMatrix, responses: &DVector<f64>) -> Result<CoefficientEstimate> {
    if responses.len() != scores.nrows() {
        return Err(Error::DimensionMismatch {
            expected: scores.nrows(),
            got: responses.len(),
        });
    }
    let solver = OlsSolver::new(&scores.scores).map_err(|e| e.in_domain(scores.domain_id))?;
    Ok(CoefficientEstimate {
        domain_id: scores.domain_id,
        scores: solver.solve(responses),
    })
}

fn check_informative(
    estimates: &[CoefficientEstimate],
    sizes: &BTreeMap<usize, usize>,
    informative: &BTreeSet<usize>,
) -> Result<()> {
    if !estimates.iter().any(|e| e.domain_id == 0) {
        return Err(Error::InvalidArgument("target estimate (domain 0) missing".into()));
    }
    if informative.contains(&0) {
        return Err(Error::InvalidArgument("informative set must not contain the target".into()));
    }
    for j in informative.iter().chain(std::iter::once(&0)) {
        if !estimates.iter().any(|e| e.domain_id == *j) {
            return Err(Error::InvalidArgument(format!("no estimate for domain {j}")));
        }
        if !sizes.contains_key(j) {
            return Err(Error::InvalidArgument(format!("no sample size for domain {j}")));
        }
    }
    Ok(())
}

fn find(estimates: &[CoefficientEstimate], id: usize) -> &CoefficientEstimate {
    estimates.iter().find(|e| e.domain_id == id).expect("checked")
}

/// Signed sample-size weighted average of the fits in `A ∪ {0}`.
///
/// Returns the shape scores and the weight `ω_j` of every domain used.
pub fn aggregate_shape(
    estimates: &[CoefficientEstimate],
    sizes: &BTreeMap<usize, usize>,
    informative: &BTreeSet<usize>,
) -> Result<(DVector<f64>, BTreeMap<usize, f64>)> {
    check_informative(estimates, sizes, informative)?;
    let target = find(estimates, 0);
    let total: usize = std::iter::once(&0).chain(informative).map(|j| sizes[j]).sum();
    let mut shape = DVector::zeros(target.dim());
    let mut weights = BTreeMap::new();
    for &j in std::iter::once(&0).chain(informative) {
        let est = find(estimates, j);
        if est.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: est.dim(),
            }
            .in_domain(j));
        }
        let align = est.scores.dot(&target.scores);
        let sign = if align > 0.0 {
            1.0
        } else if align < 0.0 {
            -1.0
        } else {
            warn!("domain {j} has zero alignment with the target fit; using sign +1");
            1.0
        };
        let w = sign * sizes[&j] as f64 / total as f64;
        shape.axpy(w, &est.scores, 1.0);
        weights.insert(j, w);
    }
    Ok((shape, weights))
}

/// Scalar least-squares amplitude of the target responses on `⟨X_n, β̂^c⟩`.
pub fn fine_tune(target_scores: &ScoreMatrix, responses: &DVector<f64>, shape: &DVector<f64>) -> Result<f64> {
    if shape.len() != target_scores.dim() {
        return Err(Error::DimensionMismatch {
            expected: target_scores.dim(),
            got: shape.len(),
        });
    }
    if responses.len() != target_scores.nrows() {
        return Err(Error::DimensionMismatch {
            expected: target_scores.nrows(),
            got: responses.len(),
        });
    }
    let z = &target_scores.scores * shape;
    amplitude(&z, responses)
}

fn amplitude(z: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let zz = z.norm_squared();
    if zz == 0.0 {
        return Err(Error::DegenerateShape);
    }
    Ok(z.dot(y) / zz)
}

/// Plain size-weighted average of the fits in `A ∪ {0}` (coefficient-equality baseline).
pub fn pooled_baseline(
    estimates: &[CoefficientEstimate],
    sizes: &BTreeMap<usize, usize>,
    informative: &BTreeSet<usize>,
) -> Result<CoefficientEstimate> {
    check_informative(estimates, sizes, informative)?;
    let target = find(estimates, 0);
    let total: usize = std::iter::once(&0).chain(informative).map(|j| sizes[j]).sum();
    let mut out = DVector::zeros(target.dim());
    for &j in std::iter::once(&0).chain(informative) {
        out.axpy(sizes[&j] as f64 / total as f64, &find(estimates, j).scores, 1.0);
    }
    Ok(CoefficientEstimate {
        domain_id: 0,
        scores: out,
    })
}

/// `{∫(β̂ - β)²}^{1/2}`.
pub fn rmse_function(estimate: &Curve, truth: &Curve) -> Result<f64> {
    Ok(l2_norm(&estimate.combine(1.0, truth, -1.0)?))
}

/// Outcome of the two-step estimator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransferFit {
    pub d_used: usize,
    pub amplitude: f64,
    pub weights: BTreeMap<usize, f64>,
    pub shape_scores: Vec<f64>,
    pub final_scores: Vec<f64>,
    pub informative_set: BTreeSet<usize>,
}

/// Truncation dimension: fixed, or the cumulative-eigenvalue rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimChoice {
    Fixed(usize),
    Fraction(f64),
}

impl Default for DimChoice {
    fn default() -> Self {
        DimChoice::Fraction(DEFAULT_EIGEN_FRACTION)
    }
}

/// One domain's scores on the target basis together with its responses.
#[derive(Debug, Clone)]
pub struct ProjectedDomain {
    pub scores: ScoreMatrix,
    pub responses: DVector<f64>,
}

impl ProjectedDomain {
    pub fn new(scores: ScoreMatrix, responses: DVector<f64>) -> Result<Self> {
        if responses.len() != scores.nrows() {
            return Err(Error::DimensionMismatch {
                expected: scores.nrows(),
                got: responses.len(),
            });
        }
        Ok(ProjectedDomain { scores, responses })
    }

    pub fn id(&self) -> usize {
        self.scores.domain_id
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// All domains projected on the target eigenbasis at a common dimension.
///
/// Per-domain least-squares fits are computed once and reused by every
/// informative set, which is what makes grid searches and bootstrap refits
/// cheap.
#[derive(Debug, Clone)]
pub struct TransferProblem {
    pub basis: Option<BasisSystem>,
    pub target: ProjectedDomain,
    pub sources: Vec<ProjectedDomain>,
    target_solver: OlsSolver,
    source_fits: BTreeMap<usize, Result<CoefficientEstimate>>,
}

impl TransferProblem {
    /// Build from scores directly (no curves, no basis).
    pub fn from_projected(target: ProjectedDomain, sources: Vec<ProjectedDomain>) -> Result<Self> {
        let d = target.scores.dim();
        if target.id() != 0 {
            return Err(Error::InvalidArgument("target must have domain id 0".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &sources {
            if s.id() == 0 || !seen.insert(s.id()) {
                return Err(Error::InvalidArgument(format!("duplicate or reserved source id {}", s.id())));
            }
            if s.scores.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.scores.dim(),
                }
                .in_domain(s.id()));
            }
        }
        let target_solver = OlsSolver::new(&target.scores.scores).map_err(|e| e.in_domain(0))?;
        let source_fits = sources
            .iter()
            .map(|s| (s.id(), ols_fit(&s.scores, &s.responses)))
            .collect();
        Ok(TransferProblem {
            basis: None,
            target,
            sources,
            target_solver,
            source_fits,
        })
    }

    /// Estimate the basis from the (centered) target and project every domain.
    pub fn from_datasets(target: &DomainDataset, sources: &[DomainDataset], dim: DimChoice) -> Result<Self> {
        let (basis, d) = target_basis(target, dim)?;
        let project = |data: &DomainDataset| -> Result<ProjectedDomain> {
            let s = project_scores(data, &basis, d).map_err(|e| e.in_domain(data.domain_id))?;
            ProjectedDomain::new(s, data.responses().clone())
        };
        let t = project(target)?;
        let s = sources.iter().map(project).collect::<Result<Vec<_>>>()?;
        let mut problem = TransferProblem::from_projected(t, s)?;
        problem.basis = Some(basis);
        Ok(problem)
    }

    pub fn dim(&self) -> usize {
        self.target.scores.dim()
    }

    pub fn source_ids(&self) -> Vec<usize> {
        self.sources.iter().map(|s| s.id()).collect()
    }

    pub fn sizes(&self) -> BTreeMap<usize, usize> {
        std::iter::once((0, self.target.len()))
            .chain(self.sources.iter().map(|s| (s.id(), s.len())))
            .collect()
    }

    pub fn source(&self, id: usize) -> Option<&ProjectedDomain> {
        self.sources.iter().find(|s| s.id() == id)
    }

    /// Least-squares fit of a source domain.
    pub fn source_fit(&self, id: usize) -> Result<&CoefficientEstimate> {
        match self.source_fits.get(&id) {
            Some(Ok(e)) => Ok(e),
            Some(Err(e)) => Err(e.clone()),
            None => Err(Error::InvalidArgument(format!("unknown source domain {id}"))),
        }
    }

    pub fn target_fit_for(&self, responses: &DVector<f64>) -> CoefficientEstimate {
        CoefficientEstimate {
            domain_id: 0,
            scores: self.target_solver.solve(responses),
        }
    }

    pub fn target_ols(&self) -> CoefficientEstimate {
        self.target_fit_for(&self.target.responses)
    }

    fn estimates_for(&self, target: CoefficientEstimate, informative: &BTreeSet<usize>) -> Result<Vec<CoefficientEstimate>> {
        let mut out = vec![target];
        for &j in informative {
            out.push(self.source_fit(j)?.clone());
        }
        Ok(out)
    }

    /// Transfer fit with target responses replaced by `responses`.
    pub fn fit_with_responses(&self, informative: &BTreeSet<usize>, responses: &DVector<f64>) -> Result<TransferFit> {
        let estimates = self.estimates_for(self.target_fit_for(responses), informative)?;
        let (shape, weights) = aggregate_shape(&estimates, &self.sizes(), informative)?;
        let a0 = fine_tune(&self.target.scores, responses, &shape).map_err(|e| e.in_domain(0))?;
        let final_scores: Vec<f64> = shape.iter().map(|b| a0 * b).collect();
        Ok(TransferFit {
            d_used: self.dim(),
            amplitude: a0,
            weights,
            shape_scores: shape.as_slice().to_vec(),
            final_scores,
            informative_set: informative.clone(),
        })
    }

    pub fn fit(&self, informative: &BTreeSet<usize>) -> Result<TransferFit> {
        self.fit_with_responses(informative, &self.target.responses)
    }

    /// Coefficient-equality baseline for the given set.
    pub fn pooled_with_responses(&self, informative: &BTreeSet<usize>, responses: &DVector<f64>) -> Result<CoefficientEstimate> {
        let estimates = self.estimates_for(self.target_fit_for(responses), informative)?;
        pooled_baseline(&estimates, &self.sizes(), informative)
    }

    pub fn predict_target(&self, scores: &[f64]) -> DVector<f64> {
        &self.target.scores.scores * DVector::from_column_slice(scores)
    }
}

fn target_basis(target: &DomainDataset, dim: DimChoice) -> Result<(BasisSystem, usize)> {
    if target.domain_id != 0 {
        return Err(Error::InvalidArgument("target must have domain id 0".into()));
    }
    let m = target.grid().len();
    let d_max = match dim {
        DimChoice::Fixed(d) => {
            if d == 0 || d > m {
                return Err(Error::InvalidArgument(format!("dimension must be in 1..={m}, got {d}")));
            }
            d
        }
        DimChoice::Fraction(_) => m.min(target.len()).max(1),
    };
    let basis = estimate_basis(target, d_max).map_err(|e| e.in_domain(0))?;
    let d = match dim {
        DimChoice::Fixed(d) => d,
        DimChoice::Fraction(f) => select_dimension(basis.eigenvalues(), f).map_err(|e| e.in_domain(0))?,
    };
    Ok((basis, d))
}

/// Center every domain, estimate the target basis, and run the two-step estimator.
pub fn transfer_estimate(
    target: &DomainDataset,
    sources: &[DomainDataset],
    informative: &BTreeSet<usize>,
    dim: DimChoice,
) -> Result<TransferFit> {
    let target = center(target);
    let sources: Vec<DomainDataset> = sources.iter().map(center).collect();
    TransferProblem::from_datasets(&target, &sources, dim)?.fit(informative)
}
