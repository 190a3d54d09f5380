use super::ekf::{check_psd, FilterRun};
use super::{Matrix9, Vector9};
use crate::error::{Error, Result};

/// Smoothed moments of a filter pass.
#[derive(Debug, Clone)]
pub struct Smoothed {
    pub means: Vec<Vector9>,
    pub covs: Vec<Matrix9>,
    /// `lag_one[k]` is the smoothed cross covariance of steps `k + 1` and `k`.
    pub lag_one: Vec<Matrix9>,
}

/// Rauch-Tung-Striebel backward pass using the Jacobians stored in `run`.
pub fn ekf_smooth(run: &FilterRun) -> Result<Smoothed> {
    let n = run.steps.len();
    if n == 0 {
        return Err(Error::InsufficientData("nothing to smooth".into()));
    }
    let mut means: Vec<Vector9> = run.steps.iter().map(|s| s.filtered.mean).collect();
    let mut covs: Vec<Matrix9> = run.steps.iter().map(|s| s.filtered.cov).collect();
    let mut lag_one = vec![Matrix9::zeros(); n - 1];
    for k in (0..n - 1).rev() {
        let next = &run.steps[k + 1];
        let pf = run.steps[k].filtered.cov;
        let pp = (next.predicted.cov + next.predicted.cov.transpose()) * 0.5;
        let chol = pp
            .cholesky()
            .ok_or_else(|| Error::Numerical("singular predicted covariance".into()))?;
        // J = P F^T Pp^-1, computed as (Pp^-1 F P)^T
        let j = chol.solve(&(next.f * pf)).transpose();
        means[k] = run.steps[k].filtered.mean + j * (means[k + 1] - next.predicted.mean);
        let pk = pf + j * (covs[k + 1] - pp) * j.transpose();
        covs[k] = check_psd("smoothed covariance", &pk)?;
        lag_one[k] = covs[k + 1] * j.transpose();
    }
    Ok(Smoothed {
        means,
        covs,
        lag_one,
    })
}
