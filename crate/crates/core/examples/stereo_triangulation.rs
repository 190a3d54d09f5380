//! Projects points into the default stereo rig, adds pixel noise and
//! triangulates them back.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use evball::geom::triangulate;
use evball::simcam::default_cameras;

fn main() -> evball::Result<()> {
    let cams = default_cameras();
    let (a, b) = (&cams[0], &cams[1]);
    println!("baseline {:.2} m", (a.center() - b.center()).norm());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.5).unwrap();
    for sigma in [0.0, 0.5] {
        let mut errors = Vec::new();
        while errors.len() < 1000 {
            let p = Point3::new(
                rng.random_range(-1.2..0.8),
                rng.random_range(-0.4..0.4),
                rng.random_range(0.0..0.6),
            );
            let (Ok(ua), Ok(ub)) = (a.project(&p), b.project(&p)) else { continue };
            if !a.in_image(ua.0, ua.1) || !b.in_image(ub.0, ub.1) {
                continue;
            }
            let mut jitter = |(u, v): (f64, f64)| {
                if sigma > 0.0 {
                    (u + noise.sample(&mut rng), v + noise.sample(&mut rng))
                } else {
                    (u, v)
                }
            };
            let (ua, ub) = (jitter(ua), jitter(ub));
            errors.push((triangulate(a, ua, b, ub)?.p - p).norm());
        }
        errors.sort_by(f64::total_cmp);
        println!(
            "pixel noise {sigma} px: median error {:.3e} m, max {:.3e} m",
            errors[errors.len() / 2],
            errors[errors.len() - 1]
        );
    }
    Ok(())
}
