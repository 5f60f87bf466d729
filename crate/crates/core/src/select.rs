//! Informative-set identification by concave-penalized joint estimation.
//!
//! The joint objective is
//!
//! ```text
//! S(B) = ½ Σ_j ‖y_j − Ξ_j b_j‖² + Σ_{j≥1} J_λ(‖M_j(b_j, b_0)‖)
//! ```
//!
//! and is minimized by block-coordinate majorize-minimize. Because
//! `φ(q) = J_λ(√q)` is concave and nondecreasing, its tangent at the current
//! `q = ‖M_j‖²` majorizes it, and `‖M_j‖² = b_jᵀ(‖b_0‖²I − b_0b_0ᵀ)b_j` is a
//! quadratic form in either row. Each block update is therefore a ridge-type
//! linear solve. A block step is rejected if it would raise the objective,
//! which keeps the trace monotone even where the tangent slope is capped
//! near `‖M_j‖ = 0`.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::ScoreMatrix;
use crate::par;
use crate::regress::TransferProblem;
use crate::rng;
use crate::shape::{identify_by_threshold, log_space, misalignment_norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Scad,
    Mcp,
}

impl PenaltyKind {
    pub fn default_gamma(self) -> f64 {
        match self {
            PenaltyKind::Scad => 3.7,
            PenaltyKind::Mcp => 3.0,
        }
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyKind::Scad),
            "mcp" => Ok(PenaltyKind::Mcp),
            other => Err(Error::InvalidPenalty(format!("unknown penalty kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub gamma: f64,
}

impl PenaltyConfig {
    /// `λ = 0` is accepted and switches the penalty off.
    pub fn new(kind: PenaltyKind, lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidPenalty(format!("lambda must be ≥ 0, got {lambda}")));
        }
        let min_gamma = match kind {
            PenaltyKind::Scad => 2.0,
            PenaltyKind::Mcp => 1.0,
        };
        if !(gamma > min_gamma) || !gamma.is_finite() {
            return Err(Error::InvalidPenalty(format!(
                "gamma must exceed {min_gamma} for {kind:?}, got {gamma}"
            )));
        }
        Ok(PenaltyConfig { kind, lambda, gamma })
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        PenaltyConfig::new(self.kind, lambda, self.gamma)
    }

    /// `J_λ(t)` for `t ≥ 0`.
    pub fn value(&self, t: f64) -> f64 {
        let (l, g) = (self.lambda, self.gamma);
        let t = t.abs();
        match self.kind {
            PenaltyKind::Scad => {
                if t <= l {
                    l * t
                } else if t < g * l {
                    (2.0 * g * l * t - t * t - l * l) / (2.0 * (g - 1.0))
                } else {
                    l * l * (g + 1.0) / 2.0
                }
            }
            PenaltyKind::Mcp => {
                if t < g * l {
                    l * t - t * t / (2.0 * g)
                } else {
                    g * l * l / 2.0
                }
            }
        }
    }

    /// `J'_λ(t)` for `t > 0`; at `t = 0` this returns the right limit `λ`.
    pub fn derivative(&self, t: f64) -> f64 {
        let (l, g) = (self.lambda, self.gamma);
        if l == 0.0 {
            return 0.0;
        }
        let t = t.abs();
        match self.kind {
            PenaltyKind::Scad => l * (((g * l - t).max(0.0)) / ((g - 1.0) * l)).min(1.0),
            PenaltyKind::Mcp => (l - t / g).max(0.0),
        }
    }
}

pub fn penalty_value(t: f64, cfg: &PenaltyConfig) -> f64 {
    cfg.value(t)
}

pub fn penalty_derivative(t: f64, cfg: &PenaltyConfig) -> f64 {
    cfg.derivative(t)
}

/// Sufficient statistics of one domain's least-squares term.
#[derive(Debug, Clone)]
struct Quadratic {
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    yy: f64,
}

impl Quadratic {
    fn new(scores: &ScoreMatrix, y: &DVector<f64>) -> Self {
        let x = &scores.scores;
        Quadratic {
            gram: x.transpose() * x,
            cross: x.transpose() * y,
            yy: y.norm_squared(),
        }
    }

    /// `½‖y − Ξb‖²`.
    fn half_rss(&self, b: &DVector<f64>) -> f64 {
        (0.5 * (self.yy - 2.0 * b.dot(&self.cross) + b.dot(&(&self.gram * b)))).max(0.0)
    }
}

/// Rows of the coefficient matrix, domain ids, and the solver trace.
#[derive(Debug, Clone)]
pub struct JointFit {
    /// Row 0 is the target; row `k ≥ 1` belongs to domain `ids[k]`.
    pub coefficients: DMatrix<f64>,
    pub ids: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl JointFit {
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.coefficients.row(k).iter().copied().collect()
    }

    pub fn target_row(&self) -> Vec<f64> {
        self.row(0)
    }

    pub fn source_rows(&self) -> Vec<(usize, Vec<f64>)> {
        (1..self.ids.len()).map(|k| (self.ids[k], self.row(k))).collect()
    }

    pub fn misalignment_norm(&self, k: usize) -> f64 {
        misalignment_norm_sq(&self.row(k), &self.row(0)).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

fn row_of(b: &DMatrix<f64>, k: usize) -> DVector<f64> {
    b.row(k).transpose()
}

/// `S_D(B)` with row 0 the target and rows `1..` the sources in problem order.
pub fn joint_objective(b: &DMatrix<f64>, problem: &TransferProblem, cfg: &PenaltyConfig) -> Result<f64> {
    let quads = quadratics(problem);
    check_shape(b, problem)?;
    Ok(objective(b, &quads, cfg))
}

fn check_shape(b: &DMatrix<f64>, problem: &TransferProblem) -> Result<()> {
    let rows = problem.sources.len() + 1;
    if b.nrows() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: b.nrows(),
        });
    }
    if b.ncols() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: b.ncols(),
        });
    }
    Ok(())
}

fn quadratics(problem: &TransferProblem) -> Vec<Quadratic> {
    std::iter::once(&problem.target)
        .chain(&problem.sources)
        .map(|d| Quadratic::new(&d.scores, &d.responses))
        .collect()
}

fn misalign(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    misalignment_norm_sq(a.as_slice(), b.as_slice()).sqrt()
}

fn objective(b: &DMatrix<f64>, quads: &[Quadratic], cfg: &PenaltyConfig) -> f64 {
    let b0 = row_of(b, 0);
    let mut total = quads[0].half_rss(&b0);
    for (k, q) in quads.iter().enumerate().skip(1) {
        let bk = row_of(b, k);
        total += q.half_rss(&bk) + cfg.value(misalign(&bk, &b0));
    }
    total
}

/// `‖v‖²I − vvᵀ`, so that `xᵀP(v)x = ‖M(x, v)‖²`.
fn projector(v: &DVector<f64>) -> DMatrix<f64> {
    let d = v.len();
    DMatrix::identity(d, d) * v.norm_squared() - v * v.transpose()
}

/// Slope of `q ↦ J(√q)` at the current misalignment, capped near zero.
fn tangent_weight(cfg: &PenaltyConfig, u: f64, scale: f64) -> f64 {
    if cfg.lambda == 0.0 {
        return 0.0;
    }
    let floor = 1e-10 * scale.max(1e-300);
    let u = u.max(floor);
    cfg.derivative(u) / (2.0 * u)
}

fn solve_spd(a: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    a.lu().solve(rhs)
}

/// Minimize the joint objective starting from `init` (per-domain least squares by default).
pub fn penalized_fit(
    problem: &TransferProblem,
    cfg: &PenaltyConfig,
    init: Option<DMatrix<f64>>,
    options: SolverOptions,
) -> Result<JointFit> {
    let d = problem.dim();
    let p = problem.sources.len();
    let ids: Vec<usize> = std::iter::once(0).chain(problem.source_ids()).collect();
    let mut b = match init {
        Some(b) => {
            check_shape(&b, problem)?;
            b
        }
        None => {
            let mut b = DMatrix::zeros(p + 1, d);
            b.set_row(0, &problem.target_ols().scores.transpose());
            for (k, id) in ids.iter().enumerate().skip(1) {
                b.set_row(k, &problem.source_fit(*id)?.scores.transpose());
            }
            b
        }
    };
    let quads = quadratics(problem);
    let mut current = objective(&b, &quads, cfg);
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let previous = b.clone();

        for k in 1..=p {
            let b0 = row_of(&b, 0);
            let bk = row_of(&b, k);
            let scale = bk.norm() * b0.norm();
            let w = tangent_weight(cfg, misalign(&bk, &b0), scale);
            let a = &quads[k].gram + projector(&b0) * (2.0 * w);
            if let Some(candidate) = solve_spd(a, &quads[k].cross) {
                let before = quads[k].half_rss(&bk) + cfg.value(misalign(&bk, &b0));
                let after = quads[k].half_rss(&candidate) + cfg.value(misalign(&candidate, &b0));
                if after <= before {
                    b.set_row(k, &candidate.transpose());
                    current += after - before;
                }
            }
        }

        let b0 = row_of(&b, 0);
        let mut a = quads[0].gram.clone();
        for k in 1..=p {
            let bk = row_of(&b, k);
            let w = tangent_weight(cfg, misalign(&bk, &b0), bk.norm() * b0.norm());
            if w > 0.0 {
                a += projector(&bk) * (2.0 * w);
            }
        }
        if let Some(candidate) = solve_spd(a, &quads[0].cross) {
            let mut trial = b.clone();
            trial.set_row(0, &candidate.transpose());
            let after = objective(&trial, &quads, cfg);
            if after <= current {
                b = trial;
            }
        }
        // recompute to keep rounding from accumulating in the incremental updates
        current = objective(&b, &quads, cfg);
        trace.push(current);

        let change = (&b - &previous).norm() / previous.norm().max(1e-300);
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("penalized fit stopped after {iterations} iterations without converging");
    }
    Ok(JointFit {
        coefficients: b,
        ids,
        objective_trace: trace,
        converged,
        iterations,
    })
}

/// Sources whose regularized rows satisfy `‖M̂_j‖ ≤ λ̃‖b̂_j‖‖b̂_0‖`.
pub fn identify_regularized(fit: &JointFit, threshold: f64) -> Result<BTreeSet<usize>> {
    identify_by_threshold(&fit.target_row(), &fit.source_rows(), threshold)
}

/// How candidate sets are scored.
#[derive(Debug, Clone)]
pub enum Scorer {
    /// Residual bootstrap on the target; common resampling streams across candidates.
    Bootstrap { reps: usize, seed: u64 },
    /// Prediction error on held-out target observations projected on the same basis.
    Validation { scores: ScoreMatrix, responses: DVector<f64> },
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Bootstrap { .. } => "bootstrap",
            Scorer::Validation { .. } => "validation",
        }
    }
}

/// One (λ, λ̃) cell of the grid search.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub lambda: f64,
    pub threshold: f64,
    pub candidate: BTreeSet<usize>,
    pub score: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionDiagnostics {
    pub scorer: String,
    pub cells: Vec<GridCell>,
    /// Candidates that could not be scored, with the reason.
    pub failures: Vec<(BTreeSet<usize>, String)>,
    pub screened_out: BTreeSet<usize>,
}

impl SelectionDiagnostics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,threshold,candidate,avg_mse,iterations,converged\n");
        for c in &self.cells {
            let set = c.candidate.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" ");
            let score = c.score.map(|s| s.to_string()).unwrap_or_else(|| "NaN".into());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.lambda, c.threshold, set, score, c.iterations, c.converged
            ));
        }
        out
    }
}

/// Optional post-selection screen; both filters are off by default.
#[derive(Debug, Clone, Default)]
pub struct PostScreen {
    /// Drop `j` when `‖b̌_j‖ < κ‖b̌_0‖`.
    pub min_norm_ratio: Option<f64>,
    /// Share of each domain's variance carried by its own leading `D`
    /// eigenvalues (key 0 is the target); drop `j` when below half the target's.
    pub spectral_mass: Option<BTreeMap<usize, f64>>,
}

impl PostScreen {
    pub const DEFAULT_NORM_RATIO: f64 = 0.1;

    fn apply(&self, problem: &TransferProblem, set: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
        let b0 = problem.target_ols().scores.norm();
        let mut kept = BTreeSet::new();
        for &j in set {
            if let Some(kappa) = self.min_norm_ratio {
                if problem.source_fit(j)?.scores.norm() < kappa * b0 {
                    continue;
                }
            }
            if let Some(mass) = &self.spectral_mass {
                if let (Some(mj), Some(m0)) = (mass.get(&j), mass.get(&0)) {
                    if *mj < 0.5 * m0 {
                        continue;
                    }
                }
            }
            kept.insert(j);
        }
        Ok(kept)
    }
}

/// Grid specification and options for [`select_informative`].
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub penalty: PenaltyKind,
    pub gamma: f64,
    pub lambda_grid: Vec<f64>,
    pub threshold_grid: Vec<f64>,
    pub solver: SolverOptions,
    pub screen: PostScreen,
}

impl SelectionConfig {
    /// Defaults: MCP with γ = 3, data-scaled λ grid, log-spaced λ̃ grid.
    pub fn defaults_for(problem: &TransferProblem) -> Result<Self> {
        Ok(SelectionConfig {
            penalty: PenaltyKind::Mcp,
            gamma: PenaltyKind::Mcp.default_gamma(),
            lambda_grid: default_lambda_grid(problem)?,
            threshold_grid: crate::shape::default_threshold_grid(),
            solver: SolverOptions::default(),
            screen: PostScreen::default(),
        })
    }
}

/// 10 log-spaced values on `[0.01, 1] × σ̃ √(ln(max(p, 2)) D / N̄)` where `σ̃` is
/// the median per-domain residual standard deviation.
pub fn default_lambda_grid(problem: &TransferProblem) -> Result<Vec<f64>> {
    let d = problem.dim();
    let mut sds = Vec::new();
    let mut total_n = problem.target.len();
    let t = problem.target_ols();
    sds.push(residual_sd(&problem.target.scores, &problem.target.responses, &t.scores));
    for s in &problem.sources {
        let fit = problem.source_fit(s.id())?;
        sds.push(residual_sd(&s.scores, &s.responses, &fit.scores));
        total_n += s.len();
    }
    sds.sort_by(f64::total_cmp);
    let median = if sds.len() % 2 == 1 {
        sds[sds.len() / 2]
    } else {
        0.5 * (sds[sds.len() / 2 - 1] + sds[sds.len() / 2])
    };
    let p = problem.sources.len().max(2) as f64;
    let n_bar = total_n as f64 / (problem.sources.len() + 1) as f64;
    let scale = median * (p.ln() * d as f64 / n_bar).sqrt();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    Ok(log_space(0.01, 1.0, 10).into_iter().map(|v| v * scale).collect())
}

fn residual_sd(x: &ScoreMatrix, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let dof = (x.nrows() as f64 - x.dim() as f64).max(1.0);
    ((y - &x.scores * b).norm_squared() / dof).sqrt()
}

fn mse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared() / a.len() as f64
}

/// Average prediction error of the transfer fit using `set`.
pub fn score_candidate(problem: &TransferProblem, set: &BTreeSet<usize>, scorer: &Scorer) -> Result<f64> {
    match scorer {
        Scorer::Validation { scores, responses } => {
            if scores.dim() != problem.dim() {
                return Err(Error::DimensionMismatch {
                    expected: problem.dim(),
                    got: scores.dim(),
                });
            }
            let fit = problem.fit(set)?;
            let pred = &scores.scores * DVector::from_column_slice(&fit.final_scores);
            Ok(mse(responses, &pred))
        }
        Scorer::Bootstrap { reps, seed } => {
            if *reps == 0 {
                return Err(Error::InvalidArgument("bootstrap reps must be ≥ 1".into()));
            }
            let y = &problem.target.responses;
            let n = y.len();
            let fit = problem.fit(set)?;
            let fitted = problem.predict_target(&fit.final_scores);
            let resid = y - &fitted;
            let mut total = 0.0;
            for r in 0..*reps {
                let mut g = rng::stream(*seed, &[r as u64]);
                let boot = DVector::from_fn(n, |i, _| fitted[i] + resid[g.random_range(0..n)]);
                let refit = problem.fit_with_responses(set, &boot)?;
                total += mse(y, &problem.predict_target(&refit.final_scores));
            }
            Ok(total / *reps as f64)
        }
    }
}

fn set_order(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter()))
}

/// Grid search over (λ, λ̃); the candidate with the smallest average error wins,
/// ties going to the smaller set and then the lexicographically smaller one.
pub fn select_informative(
    problem: &TransferProblem,
    config: &SelectionConfig,
    scorer: &Scorer,
) -> Result<(BTreeSet<usize>, SelectionDiagnostics)> {
    if config.lambda_grid.is_empty() || config.threshold_grid.is_empty() {
        return Err(Error::InvalidArgument("λ and λ̃ grids must be non-empty".into()));
    }
    if let Scorer::Bootstrap { reps: 0, .. } = scorer {
        return Err(Error::InvalidArgument("bootstrap reps must be ≥ 1".into()));
    }
    let fits = par::map_indexed(config.lambda_grid.len(), |i| {
        let cfg = PenaltyConfig::new(config.penalty, config.lambda_grid[i], config.gamma)?;
        penalized_fit(problem, &cfg, None, config.solver)
    });
    let mut cells = Vec::new();
    for (lambda, fit) in config.lambda_grid.iter().zip(fits) {
        let fit = fit?;
        for &threshold in &config.threshold_grid {
            cells.push(GridCell {
                lambda: *lambda,
                threshold,
                candidate: identify_regularized(&fit, threshold)?,
                score: None,
                iterations: fit.iterations,
                converged: fit.converged,
            });
        }
    }
    let unique: Vec<BTreeSet<usize>> = cells
        .iter()
        .map(|c| c.candidate.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let scores = par::map_indexed(unique.len(), |i| score_candidate(problem, &unique[i], scorer));

    let mut scored: BTreeMap<BTreeSet<usize>, f64> = BTreeMap::new();
    let mut failures = Vec::new();
    for (set, s) in unique.into_iter().zip(scores) {
        match s {
            Ok(v) if v.is_finite() => {
                scored.insert(set, v);
            }
            Ok(v) => failures.push((set, format!("non-finite score {v}"))),
            Err(e) => {
                debug!("candidate {set:?} skipped: {e}");
                failures.push((set, e.to_string()));
            }
        }
    }
    for c in &mut cells {
        c.score = scored.get(&c.candidate).copied();
    }
    let best = scored
        .iter()
        .min_by(|(sa, a), (sb, b)| a.total_cmp(b).then_with(|| set_order(sa, sb)))
        .map(|(s, _)| s.clone())
        .ok_or_else(|| Error::InvalidArgument("no candidate set could be scored".into()))?;
    let chosen = config.screen.apply(problem, &best)?;
    let screened_out = best.difference(&chosen).copied().collect();
    Ok((
        chosen,
        SelectionDiagnostics {
            scorer: scorer.name().to_string(),
            cells,
            failures,
            screened_out,
        },
    ))
}
