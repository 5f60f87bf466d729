//! Coefficient shape misalignment between a source and the target.
//!
//! For score vectors `b_j` and `b_0`, the misalignment is the vector of all
//! 2×2 minors `M_{dd'} = b_{jd} b_{0d'} - b_{jd'} b_{0d}` for `d < d'`. It
//! vanishes exactly when the two coefficients are proportional. The norm
//! obeys the Lagrange identity `‖M‖² = ‖b_j‖²‖b_0‖² - ⟨b_j, b_0⟩²`, which is
//! what production code evaluates.

use std::collections::BTreeSet;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

fn check_lengths(bj: &[f64], b0: &[f64]) -> Result<()> {
    if bj.len() != b0.len() {
        return Err(Error::DimensionMismatch {
            expected: b0.len(),
            got: bj.len(),
        });
    }
    Ok(())
}

/// All minors in lexicographic `(d, d')` order; length `D(D-1)/2`.
pub fn misalignment(bj: &[f64], b0: &[f64]) -> Result<Vec<f64>> {
    check_lengths(bj, b0)?;
    let d = b0.len();
    if d < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: d });
    }
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for a in 0..d {
        for b in a + 1..d {
            out.push(bj[a] * b0[b] - bj[b] * b0[a]);
        }
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖M‖` through the Lagrange identity.
pub fn misalignment_norm(bj: &[f64], b0: &[f64]) -> Result<f64> {
    check_lengths(bj, b0)?;
    Ok(misalignment_norm_sq(bj, b0).sqrt())
}

pub(crate) fn misalignment_norm_sq(bj: &[f64], b0: &[f64]) -> f64 {
    let nj = dot(bj, bj);
    let n0 = dot(b0, b0);
    let c = dot(bj, b0);
    (nj * n0 - c * c).max(0.0)
}

/// `‖M‖ / (‖b_j‖ ‖b_0‖)`, the sine of the angle between the two vectors.
pub fn normalized_misalignment(bj: &[f64], b0: &[f64]) -> Result<f64> {
    check_lengths(bj, b0)?;
    let nj = dot(bj, bj).sqrt();
    let n0 = dot(b0, b0).sqrt();
    if nj == 0.0 || n0 == 0.0 {
        return Err(Error::ZeroCoefficient);
    }
    // minors of the unit vectors: no 1 - cos² cancellation, and exact zeros
    // survive for vectors that are exactly proportional after normalization
    let uj: Vec<f64> = bj.iter().map(|v| v / nj).collect();
    let u0: Vec<f64> = b0.iter().map(|v| v / n0).collect();
    let mut r = 0.0;
    for a in 0..uj.len() {
        for b in a + 1..uj.len() {
            r += (uj[a] * u0[b] - uj[b] * u0[a]).powi(2);
        }
    }
    Ok(r.sqrt().min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceMisalignment {
    pub source_id: usize,
    pub m_vector: Vec<f64>,
    pub m_norm: f64,
    /// `None` when either coefficient vector is zero.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MisalignmentReport {
    pub sources: Vec<SourceMisalignment>,
    pub threshold: f64,
    pub identified: BTreeSet<usize>,
}

impl MisalignmentReport {
    /// Per-source misalignment against `target`; `sources` pairs ids with score vectors.
    pub fn build(target: &[f64], sources: &[(usize, Vec<f64>)], threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::InvalidArgument(format!("threshold must be ≥ 0, got {threshold}")));
        }
        let mut rows = Vec::with_capacity(sources.len());
        for (id, b) in sources {
            let normalized = match normalized_misalignment(b, target) {
                Ok(v) => Some(v),
                Err(Error::ZeroCoefficient) => None,
                Err(e) => return Err(e.in_domain(*id)),
            };
            let m_vector = if target.len() >= 2 {
                misalignment(b, target).map_err(|e| e.in_domain(*id))?
            } else {
                Vec::new()
            };
            rows.push(SourceMisalignment {
                source_id: *id,
                m_norm: misalignment_norm(b, target)?,
                m_vector,
                normalized,
            });
        }
        let identified = select_below(&rows, threshold);
        Ok(MisalignmentReport {
            sources: rows,
            threshold,
            identified,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("source_id,m_norm,normalized,included\n");
        for r in &self.sources {
            let normalized = r.normalized.map(|v| format!("{v}")).unwrap_or_else(|| "NaN".into());
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.source_id,
                r.m_norm,
                normalized,
                u8::from(self.identified.contains(&r.source_id))
            ));
        }
        out
    }
}

fn select_below(rows: &[SourceMisalignment], threshold: f64) -> BTreeSet<usize> {
    rows.iter()
        .filter_map(|r| match r.normalized {
            Some(v) if v <= threshold => Some(r.source_id),
            Some(_) => None,
            None => {
                warn!("source {} has a zero coefficient vector; excluded", r.source_id);
                None
            }
        })
        .collect()
}

/// Sources with `‖M_j‖ ≤ λ̃ ‖b_j‖ ‖b_0‖`.
pub fn identify_by_threshold(
    target: &[f64],
    sources: &[(usize, Vec<f64>)],
    threshold: f64,
) -> Result<BTreeSet<usize>> {
    Ok(MisalignmentReport::build(target, sources, threshold)?.identified)
}

/// Default λ̃ grid: 20 log-spaced values on [1e-3, 1].
pub fn default_threshold_grid() -> Vec<f64> {
    log_space(1e-3, 1.0, 20)
}

pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
