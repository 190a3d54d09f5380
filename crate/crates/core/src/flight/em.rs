use std::ops::AddAssign;

use nalgebra::{Matrix3, Vector3};

use super::ekf::{check_psd, ekf_filter, EkfParams};
use super::model::{rk4_map, transition_jacobian, BallParams};
use super::smoother::ekf_smooth;
use super::{Matrix9, Vector9};
use crate::error::{Error, Result};
use crate::geom::Obs3D;

/// Outcome of [`em_fit`].
#[derive(Debug, Clone)]
pub struct EmFit {
    /// Parameters of the best-likelihood iterate.
    pub params: EkfParams,
    /// Innovation log-likelihood of the initial parameters and of each
    /// re-estimate, `n_iter + 1` entries.
    pub loglik: Vec<f64>,
    pub best_iter: usize,
}

/// Broad starting parameters: position and velocity from a line fit to the
/// first measurements of each trajectory, zero spin.
pub fn initial_params(trajs: &[Vec<Obs3D>], dt_ref: f64) -> Result<EkfParams> {
    let mut mu0 = Vector9::zeros();
    let mut n = 0.0;
    for obs in trajs.iter().filter(|o| o.len() >= 2) {
        let m = obs.len().min(10);
        let t0 = obs[0].t;
        let ts: Vec<f64> = obs[..m].iter().map(|o| (o.t - t0) as f64 * 1e-9).collect();
        let tm = ts.iter().sum::<f64>() / m as f64;
        let pm = obs[..m].iter().map(|o| o.p.coords).sum::<Vector3<f64>>() / m as f64;
        let stt: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
        let v = if stt > 0.0 {
            obs[..m]
                .iter()
                .zip(&ts)
                .map(|(o, t)| (o.p.coords - pm) * (t - tm))
                .sum::<Vector3<f64>>()
                / stt
        } else {
            Vector3::zeros()
        };
        mu0.fixed_rows_mut::<3>(0).add_assign(&(pm - v * tm));
        mu0.fixed_rows_mut::<3>(3).add_assign(&v);
        n += 1.0;
    }
    if n == 0.0 {
        return Err(Error::InsufficientData("no trajectory with two measurements".into()));
    }
    mu0 /= n;
    let diag = |a: f64, b: f64, c: f64| {
        Matrix9::from_diagonal(&Vector9::from_fn(|i, _| match i {
            0..=2 => a,
            3..=5 => b,
            _ => c,
        }))
    };
    let s = dt_ref;
    Ok(EkfParams {
        q: diag(1e-6 * s, 1e-1 * s, 1e2 * s),
        rm: Matrix3::identity() * 1e-4,
        mu0,
        p0: diag(1e-3, 1.0, 1e4),
        dt_ref,
    })
}

fn regularized(name: &str, m: &Matrix9) -> Result<Matrix9> {
    check_psd(name, m).or_else(|_| check_psd(name, &(m + Matrix9::identity() * 1e-9)))
}

/// Expectation-maximisation of `Q`, `Rm`, `mu0` and `P0` over one or more
/// trajectories with extended RTS smoothing in the E-step.
pub fn em_fit(
    trajs: &[Vec<Obs3D>],
    bp: &BallParams,
    init: &EkfParams,
    n_iter: usize,
) -> Result<EmFit> {
    if n_iter == 0 {
        return Err(Error::InvalidArgument("EM needs at least one iteration".into()));
    }
    if trajs.is_empty() || trajs.iter().any(|t| t.len() < 10) {
        return Err(Error::InsufficientData(
            "EM needs trajectories with at least 10 measurements".into(),
        ));
    }
    init.validate()?;

    let mut params = *init;
    let mut loglik = Vec::with_capacity(n_iter + 1);
    let mut best = (f64::NEG_INFINITY, *init, 0);
    for iter in 0..=n_iter {
        let runs = trajs
            .iter()
            .map(|obs| ekf_filter(obs, bp, &params))
            .collect::<Result<Vec<_>>>()?;
        let ll: f64 = runs.iter().map(|r| r.loglik).sum();
        if !ll.is_finite() {
            return Err(Error::Numerical("non-finite likelihood".into()));
        }
        loglik.push(ll);
        if ll > best.0 {
            best = (ll, params, iter);
        }
        if iter == n_iter {
            break;
        }

        let (mut rm_sum, mut rm_n) = (Matrix3::<f64>::zeros(), 0.0);
        let (mut q_sum, mut q_n) = (Matrix9::zeros(), 0.0);
        let mut firsts = Vec::with_capacity(trajs.len());
        for run in &runs {
            let sm = ekf_smooth(run)?;
            for (k, step) in run.steps.iter().enumerate() {
                let e = step.z - sm.means[k].fixed_rows::<3>(0);
                rm_sum += e * e.transpose() + sm.covs[k].fixed_view::<3, 3>(0, 0);
                rm_n += 1.0;
                if k == 0 || step.dt == 0.0 {
                    continue;
                }
                let xp = &sm.means[k - 1];
                let f = transition_jacobian(xp, step.dt, bp);
                let r = sm.means[k] - rk4_map(xp, step.dt, bp);
                let c = sm.lag_one[k - 1];
                let m = r * r.transpose() + sm.covs[k] - c * f.transpose() - f * c.transpose()
                    + f * sm.covs[k - 1] * f.transpose();
                q_sum += m * (params.dt_ref / step.dt);
                q_n += 1.0;
            }
            firsts.push((sm.means[0], sm.covs[0]));
        }

        let mu0 = firsts.iter().map(|(m, _)| m).sum::<Vector9>() / firsts.len() as f64;
        let p0 = firsts
            .iter()
            .map(|(m, p)| p + (m - mu0) * (m - mu0).transpose())
            .sum::<Matrix9>()
            / firsts.len() as f64;
        let rm = rm_sum / rm_n;
        let rm = (rm + rm.transpose()) * 0.5;
        if rm.symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::Numerical("observation covariance lost definiteness".into()));
        }
        params = EkfParams {
            q: if q_n > 0.0 {
                regularized("Q", &(q_sum / q_n))?
            } else {
                params.q
            },
            rm,
            mu0,
            p0: regularized("P0", &p0)?,
            dt_ref: params.dt_ref,
        };
    }
    Ok(EmFit {
        params: best.1,
        loglik,
        best_iter: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flight::{integrate_rk4, FlightState};
    use nalgebra::Point3;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn trajectory(seed: u64, sigma: f64, n: usize, dt: f64) -> Vec<Obs3D> {
        let bp = BallParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut s = FlightState::new(
            Vector3::new(-1.0, 0.0, 0.3),
            Vector3::new(4.0, 0.1 * seed as f64, 1.2),
            Vector3::new(0.0, 80.0, 0.0),
        );
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let z = s.p + Vector3::from_fn(|_, _| noise.sample(&mut rng));
            out.push(Obs3D {
                p: Point3::from(z),
                t: (k as f64 * dt * 1e9).round() as u64,
                residual: 0.0,
            });
            s = integrate_rk4(&s, dt, &bp).unwrap();
        }
        out
    }

    #[test]
    fn likelihood_non_decreasing_and_sigma_recovered() {
        let dt = 1e-3;
        let trajs: Vec<_> = (0..3).map(|s| trajectory(s, 0.005, 300, dt)).collect();
        let init = initial_params(&trajs, dt).unwrap();
        let fit = em_fit(&trajs, &BallParams::default(), &init, 10).unwrap();
        assert_eq!(fit.loglik.len(), 11);
        for w in fit.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{:?}", fit.loglik);
        }
        let sigma = (fit.params.rm.trace() / 3.0).sqrt();
        assert!(sigma > 0.0025 && sigma < 0.01, "{sigma}");
    }

    #[test]
    fn rejects_short_trajectories() {
        let trajs = vec![trajectory(0, 0.005, 5, 1e-3)];
        let init = initial_params(&trajs, 1e-3).unwrap();
        assert!(em_fit(&trajs, &BallParams::default(), &init, 3).is_err());
        let trajs = vec![trajectory(0, 0.005, 20, 1e-3)];
        assert!(em_fit(&trajs, &BallParams::default(), &init, 0).is_err());
    }
}
