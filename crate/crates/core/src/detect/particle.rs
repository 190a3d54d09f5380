use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CircleDetection, Particle, RadiusRange, Roi};
use crate::evstream::Event;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    pub n_particles: usize,
    pub sigma_xy: f64,
    pub sigma_r: f64,
    /// Width of the perimeter band that counts as support (pixels).
    pub annulus_px: f64,
    /// Number of perimeter samples per particle.
    pub perimeter_samples: usize,
    /// Weights are the supported perimeter fraction raised to this power.
    pub likelihood_power: i32,
    pub ess_frac: f64,
    pub target_events: usize,
    pub w_init_ns: u64,
    pub w_min_ns: u64,
    pub w_max_ns: u64,
    /// Steps without an estimate before the caller should re-initialise.
    pub miss_limit: u32,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n_particles: 500,
            sigma_xy: 1.5,
            sigma_r: 0.3,
            annulus_px: 2.0,
            perimeter_samples: 48,
            likelihood_power: 4,
            ess_frac: 0.5,
            target_events: 200,
            w_init_ns: 2_000_000,
            w_min_ns: 200_000,
            w_max_ns: 20_000_000,
            miss_limit: 5,
        }
    }
}

/// Result of one particle-filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct PfStep {
    /// Weighted-mean circle, withheld when every particle had zero support.
    pub estimate: Option<CircleDetection>,
    pub next_window_ns: u64,
    pub observed_events: usize,
}

/// Circle tracker over raw event windows with an adaptive window length.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    cfg: PfConfig,
    r_range: RadiusRange,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    window_ns: u64,
    misses: u32,
    occ: Vec<bool>,
    scratch: Vec<Particle>,
}

impl ParticleFilter {
    /// Particles drawn uniformly over the ROI square and the radius range.
    pub fn new(roi: &Roi, r_range: RadiusRange, cfg: PfConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.n_particles.max(1);
        let h = roi.half as f64;
        let w = 1.0 / n as f64;
        let particles = (0..n)
            .map(|_| Particle {
                x: roi.cx + rng.random_range(-h..=h),
                y: roi.cy + rng.random_range(-h..=h),
                r: rng.random_range(r_range.min as f64..=r_range.max as f64),
                w,
            })
            .collect();
        Self {
            cfg,
            r_range,
            particles,
            rng,
            window_ns: cfg.w_init_ns.clamp(cfg.w_min_ns, cfg.w_max_ns),
            misses: 0,
            occ: Vec::new(),
            scratch: Vec::with_capacity(n),
        }
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Window length the next call to [`step`](Self::step) expects.
    pub fn window_ns(&self) -> u64 {
        self.window_ns
    }

    /// Consecutive steps without an estimate.
    pub fn misses(&self) -> u32 {
        self.misses
    }

    pub fn is_lost(&self) -> bool {
        self.misses >= self.cfg.miss_limit
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.w * p.w).sum::<f64>()
    }

    /// Diffuse, weight by annulus support of `events`, resample when the
    /// effective sample size is low and adapt the window. `events` are those
    /// of the current window; the estimate is stamped `t`.
    pub fn step(&mut self, events: &[Event], t: u64) -> PfStep {
        let cfg = self.cfg;
        self.diffuse(1.0);

        let observed = events.len();
        let next = if observed == 0 {
            cfg.w_max_ns
        } else {
            let w = self.window_ns as f64 * cfg.target_events as f64 / observed as f64;
            w.round().clamp(cfg.w_min_ns as f64, cfg.w_max_ns as f64) as u64
        };
        self.window_ns = next;

        let support = self.weigh(events);
        let total: f64 = self.particles.iter().map(|p| p.w).sum();
        if !(total > 0.0) {
            self.diffuse(3.0);
            let w = 1.0 / self.particles.len() as f64;
            self.particles.iter_mut().for_each(|p| p.w = w);
            self.misses += 1;
            return PfStep {
                estimate: None,
                next_window_ns: next,
                observed_events: observed,
            };
        }
        self.particles.iter_mut().for_each(|p| p.w /= total);
        let (mut x, mut y, mut r, mut s) = (0.0, 0.0, 0.0, 0.0);
        for (p, f) in self.particles.iter().zip(&support) {
            x += p.w * p.x;
            y += p.w * p.y;
            r += p.w * p.r;
            s += p.w * f;
        }
        if self.effective_sample_size() < cfg.ess_frac * self.particles.len() as f64 {
            self.resample();
        }
        self.misses = 0;
        PfStep {
            estimate: Some(CircleDetection {
                cx: x,
                cy: y,
                r,
                score: s.clamp(0.0, 1.0),
                t,
                camera_id: String::new(),
            }),
            next_window_ns: next,
            observed_events: observed,
        }
    }

    fn diffuse(&mut self, scale: f64) {
        let nxy = Normal::new(0.0, self.cfg.sigma_xy * scale).unwrap();
        let nr = Normal::new(0.0, self.cfg.sigma_r * scale).unwrap();
        let (rmin, rmax) = (self.r_range.min as f64, self.r_range.max as f64);
        for p in &mut self.particles {
            p.x += nxy.sample(&mut self.rng);
            p.y += nxy.sample(&mut self.rng);
            p.r = (p.r + nr.sample(&mut self.rng)).clamp(rmin, rmax);
        }
    }

    /// Sets each particle's weight from its perimeter support and returns the
    /// supported fractions.
    fn weigh(&mut self, events: &[Event]) -> Vec<f64> {
        let n = self.particles.len();
        if events.is_empty() {
            self.particles.iter_mut().for_each(|p| p.w = 0.0);
            return vec![0.0; n];
        }
        let reach = self.r_range.max as f64 + self.cfg.annulus_px + 1.0;
        let (mut fx0, mut fy0, mut fx1, mut fy1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &self.particles {
            fx0 = fx0.min(p.x);
            fy0 = fy0.min(p.y);
            fx1 = fx1.max(p.x);
            fy1 = fy1.max(p.y);
        }
        let x0 = (fx0 - reach).floor() as i64;
        let y0 = (fy0 - reach).floor() as i64;
        let gw = ((fx1 + reach).ceil() as i64 - x0 + 1) as usize;
        let gh = ((fy1 + reach).ceil() as i64 - y0 + 1) as usize;

        // occupancy dilated by half the annulus width
        let half = (self.cfg.annulus_px / 2.0).round().max(0.0) as i64;
        self.occ.clear();
        self.occ.resize(gw * gh, false);
        for e in events {
            let (ex, ey) = (e.x as i64 - x0, e.y as i64 - y0);
            for yy in (ey - half).max(0)..=(ey + half).min(gh as i64 - 1) {
                for xx in (ex - half).max(0)..=(ex + half).min(gw as i64 - 1) {
                    self.occ[yy as usize * gw + xx as usize] = true;
                }
            }
        }

        let m = self.cfg.perimeter_samples.max(4);
        let dirs: Vec<(f64, f64)> = (0..m)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / m as f64;
                (a.cos(), a.sin())
            })
            .collect();
        let mut support = Vec::with_capacity(n);
        for p in &mut self.particles {
            let mut hits = 0usize;
            for &(c, s) in &dirs {
                let px = (p.x + p.r * c).round() as i64 - x0;
                let py = (p.y + p.r * s).round() as i64 - y0;
                if px >= 0
                    && py >= 0
                    && (px as usize) < gw
                    && (py as usize) < gh
                    && self.occ[py as usize * gw + px as usize]
                {
                    hits += 1;
                }
            }
            let f = hits as f64 / m as f64;
            p.w = f.powi(self.cfg.likelihood_power);
            support.push(f);
        }
        support
    }

    fn resample(&mut self) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let mut u = self.rng.random::<f64>() * step;
        let mut cum = self.particles[0].w;
        let mut i = 0;
        self.scratch.clear();
        for _ in 0..n {
            while u > cum && i + 1 < n {
                i += 1;
                cum += self.particles[i].w;
            }
            self.scratch.push(Particle {
                w: step,
                ..self.particles[i]
            });
            u += step;
        }
        std::mem::swap(&mut self.particles, &mut self.scratch);
    }
}
