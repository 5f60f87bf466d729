#![allow(dead_code)]

use coefshape::fpca::ScoreMatrix;
use coefshape::regress::ProjectedDomain;
use coefshape::{rng, TransferProblem};
use nalgebra::{DMatrix, DVector};

/// Projected problem with `coefs[0]` as the target coefficient and one
/// source per further entry; scores decay like `d^{-0.6}`.
pub fn random_problem(seed: u64, n: usize, noise: f64, coefs: &[Vec<f64>]) -> TransferProblem {
    let mut r = rng::stream(seed, &[]);
    let d = coefs[0].len();
    let mut domain = |id: usize| {
        let x = DMatrix::from_fn(n, d, |_, k| rng::standard_normal(&mut r) * ((k + 1) as f64).powf(-0.6));
        let y = &x * DVector::from_column_slice(&coefs[id])
            + DVector::from_fn(n, |_, _| noise * rng::standard_normal(&mut r));
        ProjectedDomain::new(ScoreMatrix::new(id, x).unwrap(), y).unwrap()
    };
    let t = domain(0);
    let s = (1..coefs.len()).map(&mut domain).collect();
    TransferProblem::from_projected(t, s).unwrap()
}

pub fn random_vec(r: &mut rng::StreamRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng::standard_normal(r)).collect()
}
