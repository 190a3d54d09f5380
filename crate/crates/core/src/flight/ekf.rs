use std::ops::SubAssign;

use std::path::Path;

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::model::{rk4_map, transition_jacobian, BallParams, FlightState};
use super::{Matrix9, Vector9};
use crate::error::{Error, Result};
use crate::geom::Obs3D;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian belief over the stacked flight state at time `t` (ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfBelief {
    pub mean: Vector9,
    pub cov: Matrix9,
    pub t: u64,
}

impl EkfBelief {
    pub fn state(&self) -> FlightState {
        FlightState::from_vector(&self.mean)
    }

    fn block_trace(&self, i: usize) -> f64 {
        self.cov.fixed_view::<3, 3>(i, i).trace()
    }

    pub fn trace_pos(&self) -> f64 {
        self.block_trace(0)
    }

    pub fn trace_vel(&self) -> f64 {
        self.block_trace(3)
    }

    pub fn trace_spin(&self) -> f64 {
        self.block_trace(6)
    }
}

/// Noise parameters of the filter.
///
/// `q` is the process noise accumulated over one step of `dt_ref` seconds;
/// other steps use `q * dt / dt_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfParams {
    pub q: Matrix9,
    pub rm: Matrix3<f64>,
    pub mu0: Vector9,
    pub p0: Matrix9,
    pub dt_ref: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsRecord {
    #[serde(rename = "Q")]
    q: Vec<f64>,
    #[serde(rename = "Rm")]
    rm: Vec<f64>,
    mu0: Vec<f64>,
    #[serde(rename = "P0")]
    p0: Vec<f64>,
    dt_ref: f64,
}

fn row_major<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Vec<f64> {
    (0..R).flat_map(|i| (0..C).map(move |j| m[(i, j)])).collect()
}

fn from_row_major<const R: usize, const C: usize>(
    name: &str,
    v: &[f64],
) -> Result<SMatrix<f64, R, C>> {
    if v.len() != R * C || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Malformed {
            location: name.to_string(),
            reason: format!("expected {} finite numbers, got {}", R * C, v.len()),
        });
    }
    Ok(SMatrix::from_row_slice(v))
}

impl EkfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ref > 0.0) {
            return Err(Error::InvalidArgument("dt_ref must be positive".into()));
        }
        check_psd("Q", &self.q)?;
        check_psd("P0", &self.p0)?;
        let rm = self.rm;
        if (rm - rm.transpose()).abs().max() > 1e-9 * rm.abs().max().max(1.0)
            || rm.symmetric_eigenvalues().min() < -1e-9 * rm.abs().max().max(1.0)
        {
            return Err(Error::Numerical("Rm is not symmetric positive semidefinite".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let rec = ParamsRecord {
            q: row_major(&self.q),
            rm: row_major(&self.rm),
            mu0: self.mu0.iter().copied().collect(),
            p0: row_major(&self.p0),
            dt_ref: self.dt_ref,
        };
        serde_json::to_string_pretty(&rec).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ParamsRecord = serde_json::from_str(text)?;
        let p = Self {
            q: from_row_major("Q", &rec.q)?,
            rm: from_row_major("Rm", &rec.rm)?,
            mu0: from_row_major("mu0", &rec.mu0)?,
            p0: from_row_major("P0", &rec.p0)?,
            dt_ref: rec.dt_ref,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn save_ekf_params(path: &Path, params: &EkfParams) -> Result<()> {
    std::fs::write(path, params.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_ekf_params(path: &Path) -> Result<EkfParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EkfParams::from_json(&text)
}

/// Symmetrises `m` and checks its eigenvalues against a tolerance of 1e-9
/// relative to its scale.
pub(crate) fn check_psd(name: &str, m: &Matrix9) -> Result<Matrix9> {
    let s = (m + m.transpose()) * 0.5;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{name} has non-finite entries")));
    }
    let eig = s.symmetric_eigenvalues();
    let scale = eig.abs().max().max(1.0);
    if eig.min() < -1e-9 * scale {
        return Err(Error::Numerical(format!(
            "{name} lost positive semidefiniteness (min eigenvalue {})",
            eig.min()
        )));
    }
    Ok(s)
}

pub(crate) fn predict_with_jacobian(
    b: &EkfBelief,
    dt: f64,
    bp: &BallParams,
    ep: &EkfParams,
) -> Result<(EkfBelief, Matrix9)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mean = rk4_map(&b.mean, dt, bp);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite state after integration step".into()));
    }
    let f = transition_jacobian(&b.mean, dt, bp);
    let cov = f * b.cov * f.transpose() + ep.q * (dt / ep.dt_ref);
    let cov = check_psd("predicted covariance", &cov)?;
    let t = b.t + (dt * 1e9).round() as u64;
    Ok((EkfBelief { mean, cov, t }, f))
}

pub fn ekf_predict(b: &EkfBelief, dt: f64, bp: &BallParams, ep: &EkfParams) -> Result<EkfBelief> {
    predict_with_jacobian(b, dt, bp, ep).map(|(b, _)| b)
}

/// Measurement update and the log-likelihood of the innovation.
pub(crate) fn update_with_likelihood(
    b: &EkfBelief,
    z: &Vector3<f64>,
    ep: &EkfParams,
) -> Result<(EkfBelief, f64)> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("measurement must be finite".into()));
    }
    let p = &b.cov;
    let y = z - b.mean.fixed_rows::<3>(0);
    let s: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0) + ep.rm;
    let s = (s + s.transpose()) * 0.5;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not invertible".into()))?;
    let s_inv = chol.inverse();
    // P H^T is the first three columns of P
    let pht: SMatrix<f64, 9, 3> = p.fixed_view::<9, 3>(0, 0).into_owned();
    let k = pht * s_inv;
    let mean = b.mean + k * y;
    let mut ikh = Matrix9::identity();
    ikh.fixed_view_mut::<9, 3>(0, 0).sub_assign(&k);
    let cov = ikh * p * ikh.transpose() + k * ep.rm * k.transpose();
    let cov = check_psd("posterior covariance", &cov)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let ll = -0.5 * (log_det + (y.transpose() * s_inv * y)[0] + 3.0 * LN_2PI);
    Ok((EkfBelief { mean, cov, t: b.t }, ll))
}

pub fn ekf_update(b: &EkfBelief, z: &Vector3<f64>, ep: &EkfParams) -> Result<EkfBelief> {
    update_with_likelihood(b, z, ep).map(|(b, _)| b)
}

/// One measurement step of a filter pass.
#[derive(Debug, Clone, Copy)]
pub struct FilterStep {
    pub t: u64,
    /// Seconds since the previous measurement (0 for the first).
    pub dt: f64,
    pub z: Vector3<f64>,
    pub predicted: EkfBelief,
    pub filtered: EkfBelief,
    /// Transition Jacobian from the previous filtered mean.
    pub f: Matrix9,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub steps: Vec<FilterStep>,
    pub loglik: f64,
}

/// Filters a measurement sequence starting from `N(mu0, P0)` at the first
/// measurement time. Repeated timestamps are updated without prediction.
pub fn ekf_filter(obs: &[Obs3D], bp: &BallParams, ep: &EkfParams) -> Result<FilterRun> {
    let mut steps: Vec<FilterStep> = Vec::with_capacity(obs.len());
    let mut total = 0.0;
    for o in obs {
        let z = o.p.coords;
        let (predicted, f, dt) = match steps.last() {
            None => (
                EkfBelief {
                    mean: ep.mu0,
                    cov: ep.p0,
                    t: o.t,
                },
                Matrix9::identity(),
                0.0,
            ),
            Some(prev) => {
                if o.t < prev.t {
                    return Err(Error::TimestampRegression { prev: prev.t, t: o.t });
                }
                let dt = (o.t - prev.t) as f64 * 1e-9;
                if dt == 0.0 {
                    (prev.filtered, Matrix9::identity(), 0.0)
                } else {
                    let (mut b, f) = predict_with_jacobian(&prev.filtered, dt, bp, ep)?;
                    b.t = o.t;
                    (b, f, dt)
                }
            }
        };
        let (filtered, ll) = update_with_likelihood(&predicted, &z, ep)?;
        if !ll.is_finite() {
            return Err(Error::Numerical("non-finite likelihood".into()));
        }
        total += ll;
        steps.push(FilterStep {
            t: o.t,
            dt,
            z,
            predicted,
            filtered,
            f,
            loglik: ll,
        });
    }
    Ok(FilterRun {
        steps,
        loglik: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn params() -> EkfParams {
        EkfParams {
            q: Matrix9::identity() * 1e-6,
            rm: Matrix3::identity() * 1e-4,
            mu0: Vector9::zeros(),
            p0: Matrix9::identity(),
            dt_ref: 1e-3,
        }
    }

    fn belief() -> EkfBelief {
        let mut mean = Vector9::zeros();
        mean[3] = 4.0;
        mean[5] = 1.0;
        mean[7] = 50.0;
        EkfBelief {
            mean,
            cov: Matrix9::identity() * 0.01,
            t: 0,
        }
    }

    #[test]
    fn deterministic_propagation() {
        let ep = EkfParams {
            q: Matrix9::zeros(),
            ..params()
        };
        let b = EkfBelief {
            cov: Matrix9::zeros(),
            ..belief()
        };
        let bp = BallParams::default();
        let n = ekf_predict(&b, 0.002, &bp, &ep).unwrap();
        assert_eq!(n.cov, Matrix9::zeros());
        let s = super::super::integrate_rk4(&b.state(), 0.002, &bp).unwrap();
        assert_eq!(n.state(), s);
        assert_eq!(n.t, 2_000_000);
    }

    #[test]
    fn linear_jacobian_matches_closed_form() {
        let dt = 0.01;
        let f = transition_jacobian(&belief().mean, dt, &BallParams::ballistic());
        let mut expect = Matrix9::identity();
        expect.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
        assert!((f - expect).abs().max() < 1e-6);
    }

    #[test]
    fn predict_grows_trace() {
        let b = belief();
        let bp = BallParams::default();
        let n = ekf_predict(&b, 0.001, &bp, &params()).unwrap();
        let zero_q = EkfParams {
            q: Matrix9::zeros(),
            ..params()
        };
        let n0 = ekf_predict(&b, 0.001, &bp, &zero_q).unwrap();
        assert!(n.cov.trace() > n0.cov.trace());
        let static_b = EkfBelief {
            mean: Vector9::zeros(),
            ..b
        };
        let n = ekf_predict(&static_b, 0.001, &BallParams::ballistic(), &params()).unwrap();
        assert!(n.cov.trace() > static_b.cov.trace());
        assert!(ekf_predict(&b, 0.0, &BallParams::default(), &params()).is_err());
    }

    #[test]
    fn exact_and_uninformative_measurements() {
        let b = belief();
        let z = Vector3::new(0.3, -0.2, 0.1);
        let exact = EkfParams {
            rm: Matrix3::identity() * 1e-12,
            ..params()
        };
        let post = ekf_update(&b, &z, &exact).unwrap();
        assert!((post.mean.fixed_rows::<3>(0) - z).norm() < 1e-6);

        let vague = EkfParams {
            rm: Matrix3::identity() * 1e12,
            ..params()
        };
        let post = ekf_update(&b, &z, &vague).unwrap();
        let rel = (post.mean - b.mean).norm() / b.mean.norm();
        assert!(rel < 1e-6);
        assert!(post.trace_pos() <= b.trace_pos());
    }

    #[test]
    fn scalar_gain() {
        // with a diagonal prior each axis is an independent (p, v) problem
        let (pp, r) = (0.04, 0.01);
        let b = EkfBelief {
            mean: Vector9::zeros(),
            cov: Matrix9::identity() * pp,
            t: 0,
        };
        let ep = EkfParams {
            rm: Matrix3::identity() * r,
            ..params()
        };
        let post = ekf_update(&b, &Vector3::new(1.0, 0.0, 0.0), &ep).unwrap();
        let k = pp / (pp + r);
        assert!((post.mean[0] - k).abs() < 1e-12);
        assert!((post.cov[(0, 0)] - (1.0 - k) * pp).abs() < 1e-12);
        assert_eq!(post.mean[3], 0.0);
    }

    #[test]
    fn covariance_stays_psd_over_many_cycles() {
        let bp = BallParams::default();
        let ep = params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut b = belief();
        for _ in 0..1000 {
            b = ekf_predict(&b, 2.5e-4, &bp, &ep).unwrap();
            let z = b.mean.fixed_rows::<3>(0)
                + Vector3::from_fn(|_, _| noise.sample(&mut rng));
            b = ekf_update(&b, &z, &ep).unwrap();
            assert!((b.cov - b.cov.transpose()).abs().max() < 1e-9);
            assert!(b.cov.symmetric_eigenvalues().min() >= -1e-9);
        }
    }

    #[test]
    fn params_json_round_trip() {
        let mut ep = params();
        ep.q[(0, 3)] = 1e-7;
        ep.q[(3, 0)] = 1e-7;
        ep.mu0[4] = 2.5;
        let back = EkfParams::from_json(&ep.to_json()).unwrap();
        assert_eq!(back, ep);
        assert!(EkfParams::from_json(r#"{"Q":[1],"Rm":[],"mu0":[],"P0":[],"dt_ref":1}"#).is_err());
    }

    #[test]
    fn filter_rejects_regression() {
        let obs = [
            Obs3D {
                p: Point3::origin(),
                t: 10,
                residual: 0.0,
            },
            Obs3D {
                p: Point3::origin(),
                t: 5,
                residual: 0.0,
            },
        ];
        assert!(ekf_filter(&obs, &BallParams::default(), &params()).is_err());
    }
}
