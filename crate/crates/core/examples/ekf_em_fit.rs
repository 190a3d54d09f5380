//! Fits EKF noise parameters by EM to noisy 3D measurements of a simulated
//! flight, then filters and smooths with the fitted model.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use evball::flight::{ekf_filter, ekf_smooth, em_fit, initial_params, BallParams};
use evball::simcam::{sim_trajectory, GroundTruth, SimConfig};

fn main() -> evball::Result<()> {
    let cfg = SimConfig::default();
    let gt = GroundTruth {
        states: sim_trajectory(&cfg)?,
        ..Default::default()
    };
    let sigma = 5e-3;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut obs: Vec<_> = gt.observations().into_iter().step_by(10).collect();
    for o in &mut obs {
        o.p += Vector3::from_fn(|_, _| noise.sample(&mut rng));
    }
    println!("{} measurements every 1 ms, sigma {} mm", obs.len(), sigma * 1e3);

    let bp = BallParams::default();
    let trajs = [obs];
    let init = initial_params(&trajs, 1e-3)?;
    let fit = em_fit(&trajs, &bp, &init, 15)?;
    for (i, ll) in fit.loglik.iter().enumerate() {
        println!("iteration {i:2}: log-likelihood {ll:.2}");
    }
    let rm = fit.params.rm;
    println!(
        "fitted measurement sigma (mm): {:.2} {:.2} {:.2}",
        rm[(0, 0)].sqrt() * 1e3,
        rm[(1, 1)].sqrt() * 1e3,
        rm[(2, 2)].sqrt() * 1e3
    );

    let run = ekf_filter(&trajs[0], &bp, &fit.params)?;
    let smoothed = ekf_smooth(&run)?;
    let last = run.steps.last().unwrap();
    let truth = gt.states.iter().find(|s| s.t >= last.t).unwrap();
    println!(
        "final spin estimate {:.1} rad/s (true {:.1}), smoothed launch speed {:.3} m/s",
        last.filtered.mean.fixed_rows::<3>(6).norm(),
        truth.state.w.norm(),
        smoothed.means[0].fixed_rows::<3>(3).norm()
    );
    Ok(())
}
