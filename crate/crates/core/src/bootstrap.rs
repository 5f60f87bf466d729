//! Residual-bootstrap pointwise bands and Monte Carlo cross-validation.

use std::collections::BTreeSet;
use std::sync::Arc;

use log::warn;
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::curves::{center, Curve, DomainDataset, Grid};
use crate::error::{Error, Result};
use crate::fpca::{BasisSystem, ScoreMatrix};
use crate::par;
use crate::regress::{DimChoice, TransferProblem};
use crate::rng;

/// Largest share of failed replications tolerated before a band is refused.
pub const MAX_DROP_FRACTION: f64 = 0.2;

/// Empirical quantile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile must be in [0, 1], got {q}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, q))
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone)]
pub struct ConfidenceBand {
    pub lower: Curve,
    pub upper: Curve,
    pub estimate: Curve,
    pub level: f64,
    pub reps: usize,
    pub dropped: usize,
    /// `∫ (upper − lower)`.
    pub width: f64,
    /// Grid points where the point estimate falls outside the band.
    pub uncovered_points: usize,
}

#[derive(Debug, Serialize)]
struct BandSummary {
    level: f64,
    reps: usize,
    width: f64,
}

impl ConfidenceBand {
    pub fn grid(&self) -> &Arc<Grid> {
        self.estimate.grid()
    }

    /// `t,lower,upper,estimate` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lower,upper,estimate\n");
        let t = self.grid().points();
        for a in 0..t.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t[a],
                self.lower.values()[a],
                self.upper.values()[a],
                self.estimate.values()[a]
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&BandSummary {
            level: self.level,
            reps: self.reps,
            width: self.width,
        })
        .expect("plain struct")
    }
}

/// Bootstrap replicate curves kept so several levels share one pool.
#[derive(Debug, Clone)]
pub struct BootstrapPool {
    estimate: Curve,
    /// `columns[a]` holds the sorted replicate values at grid point `a`.
    columns: Vec<Vec<f64>>,
    reps: usize,
    dropped: usize,
}

impl BootstrapPool {
    pub fn estimate(&self) -> &Curve {
        &self.estimate
    }

    pub fn successful(&self) -> usize {
        self.reps - self.dropped
    }

    /// Pointwise percentile band at `level`.
    pub fn band(&self, level: f64) -> Result<ConfidenceBand> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")));
        }
        let lo_q = (1.0 - level) / 2.0;
        let hi_q = (1.0 + level) / 2.0;
        let grid = self.estimate.grid().clone();
        let lower: Vec<f64> = self.columns.iter().map(|c| sorted_quantile(c, lo_q)).collect();
        let upper: Vec<f64> = self.columns.iter().map(|c| sorted_quantile(c, hi_q)).collect();
        let diff: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
        let width = grid.integrate(&diff);
        let uncovered_points = self
            .estimate
            .values()
            .iter()
            .zip(lower.iter().zip(&upper))
            .filter(|(e, (l, u))| *e < l || *e > u)
            .count();
        if uncovered_points > 0 && self.successful() >= 20 && level >= 0.5 {
            warn!("point estimate outside the {level} band at {uncovered_points} grid points");
        }
        Ok(ConfidenceBand {
            lower: Curve::new(grid.clone(), lower)?,
            upper: Curve::new(grid, upper)?,
            estimate: self.estimate.clone(),
            level,
            reps: self.reps,
            dropped: self.dropped,
            width,
            uncovered_points,
        })
    }
}

/// Residual bootstrap around a fitting pipeline.
///
/// `refit` maps target responses to coefficient scores on `basis`; the
/// design (`target_scores`) stays fixed across replications.
pub fn bootstrap_pool<F>(
    refit: F,
    target_scores: &ScoreMatrix,
    responses: &DVector<f64>,
    basis: &BasisSystem,
    reps: usize,
    seed: u64,
) -> Result<BootstrapPool>
where
    F: Fn(&DVector<f64>) -> Result<Vec<f64>> + Sync + Send,
{
    if reps < 2 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 2 reps, got {reps}")));
    }
    let n = responses.len();
    let scores = refit(responses)?;
    let fitted = &target_scores.scores * DVector::from_column_slice(&scores);
    let resid = responses - &fitted;
    let estimate = basis.synthesize(&scores)?;

    let curves = par::map_indexed(reps, |r| -> Result<Vec<f64>> {
        let mut g = rng::stream(seed, &[r as u64]);
        let boot = DVector::from_fn(n, |i, _| fitted[i] + resid[g.random_range(0..n)]);
        Ok(basis.synthesize(&refit(&boot)?)?.into_values())
    });
    let ok: Vec<Vec<f64>> = curves.into_iter().filter_map(|c| c.ok()).collect();
    let dropped = reps - ok.len();
    if dropped as f64 > MAX_DROP_FRACTION * reps as f64 || ok.is_empty() {
        return Err(Error::BandUnreliable { dropped, reps });
    }
    let m = basis.grid().len();
    let columns = (0..m)
        .map(|a| {
            let mut col: Vec<f64> = ok.iter().map(|c| c[a]).collect();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect();
    Ok(BootstrapPool {
        estimate,
        columns,
        reps,
        dropped,
    })
}

pub fn confidence_band<F>(
    refit: F,
    target_scores: &ScoreMatrix,
    responses: &DVector<f64>,
    basis: &BasisSystem,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceBand>
where
    F: Fn(&DVector<f64>) -> Result<Vec<f64>> + Sync + Send,
{
    bootstrap_pool(refit, target_scores, responses, basis, reps, seed)?.band(level)
}

/// Band for the shape transfer estimator with a fixed informative set.
pub fn transfer_band(
    problem: &TransferProblem,
    basis: &BasisSystem,
    informative: &BTreeSet<usize>,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceBand> {
    confidence_band(
        |y| Ok(problem.fit_with_responses(informative, y)?.final_scores),
        &problem.target.scores,
        &problem.target.responses,
        basis,
        reps,
        level,
        seed,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CvSummary {
    pub rmse: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub train_size: usize,
    pub test_size: usize,
}

pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Repeated random train/test splits of the target; sources are always used in full.
pub fn mc_cross_validation(
    target: &DomainDataset,
    sources: &[DomainDataset],
    informative: &BTreeSet<usize>,
    dim: DimChoice,
    split: f64,
    reps: usize,
    seed: u64,
) -> Result<CvSummary> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidSplit(format!("split must be in (0, 1), got {split}")));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be ≥ 1".into()));
    }
    let n = target.len();
    let train_size = ((split * n as f64).round() as usize).min(n);
    let test_size = n - train_size;
    if test_size < 1 || train_size < 1 {
        return Err(Error::InvalidSplit(format!("{n} observations give train {train_size}, test {test_size}")));
    }
    let sources: Vec<DomainDataset> = sources.iter().map(center).collect();

    let results = par::map_indexed(reps, |r| -> Result<f64> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, &[r as u64]));
        let train = target.subset(&order[..train_size])?;
        let test = target.subset(&order[train_size..])?;
        let mean_curve = train.mean_curve();
        let mean_y = train.mean_response();
        let train = center(&train);
        let test = test.shifted(&mean_curve, mean_y);

        let problem = TransferProblem::from_datasets(&train, &sources, dim)?;
        let fit = problem.fit(informative)?;
        let basis = problem.basis.as_ref().expect("built from datasets");
        let beta = basis.synthesize(&fit.final_scores)?;
        let grid = test.grid();
        let x = test.curve_matrix();
        let sse: f64 = (0..test.len())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                let pred = grid.integrate_product(&row, beta.values());
                (test.responses()[i] - pred).powi(2)
            })
            .sum();
        Ok((sse / test.len() as f64).sqrt())
    });
    let rmse = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, sd) = mean_sd(&rmse);
    Ok(CvSummary {
        rmse,
        mean,
        sd,
        train_size,
        test_size,
    })
}
