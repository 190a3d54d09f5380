use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{
    ekf_filter, em_fit, initial_params, rk4_map, save_ekf_params, BallParams, EkfBelief,
    EkfParams, Matrix9, Vector9,
};
use crate::geom::Obs3D;
use crate::simcam::{subsample_rate, TimedState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub em_iters: usize,
    /// Prior variances of the filter start: position from the first
    /// measurement, velocity and spin unknown around zero.
    pub p0_pos_var: f64,
    pub p0_vel_var: f64,
    pub p0_spin_var: f64,
    /// Longest integration step of the end-of-flight prediction (s).
    pub rollout_dt: f64,
    /// Start the filter from the EM-fitted `mu0` and `P0` instead of the
    /// first measurement.
    pub fitted_prior: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            em_iters: 20,
            p0_pos_var: 1e-4,
            p0_vel_var: 25.0,
            p0_spin_var: 1e4,
            rollout_dt: 1e-3,
            fitted_prior: false,
        }
    }
}

/// Filtered belief after one measurement and the error of its prediction
/// of the final ball position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub belief: EkfBelief,
    pub pos_error: f64,
}

#[derive(Debug, Clone)]
pub struct RateResult {
    pub rate_hz: f64,
    pub n_obs: usize,
    pub params: EkfParams,
    pub loglik: Vec<f64>,
    pub rows: Vec<PredictionRow>,
}

impl RateResult {
    /// Belief of the last measurement at or before `t`.
    pub fn belief_at(&self, t: u64) -> Option<&EkfBelief> {
        let i = self.rows.partition_point(|r| r.belief.t <= t);
        (i > 0).then(|| &self.rows[i - 1].belief)
    }
}

fn rollout(x: &Vector9, from: u64, to: u64, bp: &BallParams, max_dt: f64) -> Vector9 {
    let total = to.saturating_sub(from) as f64 * 1e-9;
    if total <= 0.0 {
        return *x;
    }
    let n = (total / max_dt).ceil() as usize;
    let dt = total / n as f64;
    (0..n).fold(*x, |x, _| rk4_map(&x, dt, bp))
}

fn median_gap(obs: &[Obs3D]) -> f64 {
    let mut gaps: Vec<u64> = obs.windows(2).map(|w| w[1].t - w[0].t).filter(|&g| g > 0).collect();
    if gaps.is_empty() {
        return 1e-3;
    }
    gaps.sort_unstable();
    gaps[gaps.len() / 2] as f64 * 1e-9
}

/// Reference final position: the true state when known, else the last
/// measurement.
fn reference_end(obs: &[Obs3D], truth: Option<&[TimedState]>) -> Vector3<f64> {
    let last = obs.last().unwrap();
    truth
        .and_then(|states| {
            let i = states.partition_point(|s| s.t <= last.t);
            (i > 0).then(|| {
                let lo = &states[i - 1];
                match states.get(i) {
                    Some(hi) if lo.t != last.t => {
                        let a = (last.t - lo.t) as f64 / (hi.t - lo.t) as f64;
                        lo.state.p + (hi.state.p - lo.state.p) * a
                    }
                    _ => lo.state.p,
                }
            })
        })
        .unwrap_or(last.p.coords)
}

/// For each rate: subsample, fit the noise parameters by EM, filter from an
/// uninformed start and record uncertainties and the error of the predicted
/// end-of-flight position over time.
pub fn run_prediction_study(
    obs: &[Obs3D],
    rates: &[f64],
    bp: &BallParams,
    cfg: &StudyConfig,
    truth: Option<&[TimedState]>,
) -> Result<Vec<RateResult>> {
    if obs.len() < 10 {
        return Err(Error::InsufficientData("fewer than 10 measurements".into()));
    }
    let t_end = obs.last().unwrap().t;
    let target = reference_end(obs, truth);
    let mut out = Vec::with_capacity(rates.len());
    for &rate in rates {
        let sub = subsample_rate(obs, rate);
        if sub.len() < 10 {
            return Err(Error::InsufficientData(format!(
                "fewer than 10 measurements at {rate} Hz"
            )));
        }
        let trajs = [sub];
        let init = initial_params(&trajs, median_gap(&trajs[0]))?;
        let fit = em_fit(&trajs, bp, &init, cfg.em_iters.max(1))?;
        let [sub] = trajs;

        let mut mu0 = Vector9::zeros();
        mu0.fixed_rows_mut::<3>(0).copy_from(&sub[0].p.coords);
        let p0 = Matrix9::from_diagonal(&Vector9::from_fn(|i, _| match i {
            0..=2 => cfg.p0_pos_var,
            3..=5 => cfg.p0_vel_var,
            _ => cfg.p0_spin_var,
        }));
        let params = if cfg.fitted_prior {
            fit.params
        } else {
            EkfParams {
                mu0,
                p0,
                ..fit.params
            }
        };
        let run = ekf_filter(&sub, bp, &params)?;
        let rows = run
            .steps
            .iter()
            .map(|s| {
                let end = rollout(&s.filtered.mean, s.t, t_end, bp, cfg.rollout_dt);
                PredictionRow {
                    belief: s.filtered,
                    pos_error: (end.fixed_rows::<3>(0) - target).norm(),
                }
            })
            .collect();
        out.push(RateResult {
            rate_hz: rate,
            n_obs: sub.len(),
            params,
            loglik: fit.loglik,
            rows,
        });
    }
    Ok(out)
}

/// Time (ns) of the first row whose prediction error is below `threshold`.
pub fn first_time_below(result: &RateResult, threshold: f64) -> Option<u64> {
    result
        .rows
        .iter()
        .find(|r| r.pos_error < threshold)
        .map(|r| r.belief.t)
}

fn rate_label(rate: f64) -> String {
    if rate.fract() == 0.0 {
        format!("{}", rate as u64)
    } else {
        format!("{rate}")
    }
}

/// Writes `predictions_<rate>.csv`, `errors_<rate>.csv` and
/// `params_<rate>.json` for every rate.
pub fn write_study(dir: &Path, results: &[RateResult]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in results {
        let label = rate_label(r.rate_hz);
        let mut pred = Vec::new();
        writeln!(
            pred,
            "t_ns,px,py,pz,vx,vy,vz,wx,wy,wz,trace_P_pos,trace_P_vel,trace_P_spin"
        )
        .unwrap();
        let mut err = Vec::new();
        writeln!(err, "t_ns,pos_error_m").unwrap();
        for row in &r.rows {
            let b = &row.belief;
            write!(pred, "{}", b.t).unwrap();
            for v in b.mean.iter() {
                write!(pred, ",{v}").unwrap();
            }
            writeln!(pred, ",{},{},{}", b.trace_pos(), b.trace_vel(), b.trace_spin()).unwrap();
            writeln!(err, "{},{}", b.t, row.pos_error).unwrap();
        }
        let p = dir.join(format!("predictions_{label}.csv"));
        std::fs::write(&p, pred).map_err(|e| Error::io(&p, e))?;
        let p = dir.join(format!("errors_{label}.csv"));
        std::fs::write(&p, err).map_err(|e| Error::io(&p, e))?;
        save_ekf_params(&dir.join(format!("params_{label}.json")), &r.params)?;
    }
    Ok(())
}
