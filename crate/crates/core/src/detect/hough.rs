//! Gradient-voting circular Hough transform.
//!
//! Edge pixels (Sobel gradient magnitude at least `grad_min`) vote for
//! centres along both gradient directions at every integer radius of the
//! search range. The peak of the [1 2 1]-smoothed accumulator is refined to
//! subpixel precision by the centroid of its 3x3 neighbourhood; the
//! radius is then read off the histogram of distances from that centre to
//! radially aligned edge pixels. Finally the circle is refitted by weighted
//! least squares to the surface pixels near it.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CircleDetection, RadiusRange, Roi};
use crate::image::{Image8, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    /// Minimum gradient magnitude (grey levels per pixel) of an edge pixel.
    pub grad_min: f64,
    /// Minimum fraction of the perimeter that must be supported by edges.
    pub min_score: f64,
    /// Half-width of the radial band counted as support (pixels).
    pub band_px: f64,
    /// Minimum |cos| between an edge's gradient and the radial direction.
    pub radial_cos_min: f64,
    /// Algebraic circle refits to nonzero pixels near the circle (0 disables).
    pub refine_iters: u32,
    /// Radial half-width of the pixels used by the refit.
    pub refine_band_px: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            grad_min: 16.0,
            min_score: 0.25,
            band_px: 2.0,
            radial_cos_min: 0.7,
            refine_iters: 3,
            refine_band_px: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    x: f32,
    y: f32,
    ux: f32,
    uy: f32,
}

/// Reusable scratch buffers for repeated detections.
#[derive(Debug, Default)]
pub struct HoughDetector {
    acc: Vec<u32>,
    smooth: Vec<u32>,
    tmp: Vec<u32>,
    edges: Vec<Edge>,
    hist: Vec<u32>,
    sectors: Vec<bool>,
}

/// One-shot detection with fresh buffers. See [`HoughDetector::detect`].
pub fn hough_detect(
    image: &Image8,
    r_range: RadiusRange,
    roi: Option<&Roi>,
    cfg: &HoughConfig,
) -> Option<CircleDetection> {
    HoughDetector::default().detect(image, r_range, roi, cfg)
}

impl HoughDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Searches `roi` (or the whole image) for the best-supported circle.
    ///
    /// Only pixels inside the search rectangle and its one-pixel border are
    /// read. The result carries `t = 0` and an empty camera id.
    pub fn detect(
        &mut self,
        image: &Image8,
        r_range: RadiusRange,
        roi: Option<&Roi>,
        cfg: &HoughConfig,
    ) -> Option<CircleDetection> {
        let rect = match roi {
            Some(roi) => roi.rect(image.width(), image.height())?,
            None => image.full_rect(),
        };
        self.collect_edges(image, rect, cfg.grad_min);
        if self.edges.is_empty() {
            return None;
        }
        let (px, py) = self.vote(rect, r_range)?;
        let (cx, cy) = self.refine_centre(rect, px, py);
        let r = self.estimate_radius(cx, cy, r_range, cfg)?;
        let (cx, cy, r) = refit_circle(image, rect.expanded(1, image.width(), image.height()), (cx, cy, r), cfg);
        if !(r_range.min as f64 - 1.0..=r_range.max as f64 + 1.0).contains(&r) {
            return None;
        }
        let score = self.perimeter_support(cx, cy, r, cfg);
        (score >= cfg.min_score).then(|| CircleDetection {
            cx,
            cy,
            r,
            score,
            t: 0,
            camera_id: String::new(),
        })
    }

    fn collect_edges(&mut self, image: &Image8, rect: Rect, grad_min: f64) {
        self.edges.clear();
        let (w, h) = (image.width(), image.height());
        if w < 3 || h < 3 {
            return;
        }
        // Sobel responses are eight times the per-pixel gradient
        let thr2 = (8.0 * grad_min) * (8.0 * grad_min);
        let xs = rect.x0.max(1) as usize;
        let xe = rect.x1.min(w - 1) as usize;
        let ys = rect.y0.max(1);
        let ye = rect.y1.min(h - 1);
        if xs >= xe {
            return;
        }
        for y in ys..ye {
            let up = image.row(y - 1);
            let mid = image.row(y);
            let down = image.row(y + 1);
            let mut x = xs;
            while x < xe {
                // skip blank stretches 16 pixels at a time
                if x + 17 <= xe {
                    let blank = or_reduce(&up[x - 1..x + 17])
                        | or_reduce(&down[x - 1..x + 17])
                        | or_reduce(&mid[x - 1..x + 17])
                        == 0;
                    if blank {
                        x += 16;
                        continue;
                    }
                }
                let (ul, uc, ur) = (up[x - 1] as i32, up[x] as i32, up[x + 1] as i32);
                let (ml, mr) = (mid[x - 1] as i32, mid[x + 1] as i32);
                let (dl, dc, dr) = (down[x - 1] as i32, down[x] as i32, down[x + 1] as i32);
                let gx = (ur + 2 * mr + dr) - (ul + 2 * ml + dl);
                let gy = (dl + 2 * dc + dr) - (ul + 2 * uc + ur);
                let m2 = (gx * gx + gy * gy) as f64;
                if m2 >= thr2 && m2 > 0.0 {
                    let m = m2.sqrt();
                    self.edges.push(Edge {
                        x: x as f32,
                        y: y as f32,
                        ux: (gx as f64 / m) as f32,
                        uy: (gy as f64 / m) as f32,
                    });
                }
                x += 1;
            }
        }
    }

    /// Fills the centre accumulator over `rect` and returns the peak cell.
    fn vote(&mut self, rect: Rect, r_range: RadiusRange) -> Option<(u32, u32)> {
        let (rw, rh) = (rect.width() as i32, rect.height() as i32);
        self.acc.clear();
        self.acc.resize(rect.area(), 0);
        let (ox, oy) = (rect.x0 as f32, rect.y0 as f32);
        // bilinear splatting with 4-bit weights
        for e in &self.edges {
            for sign in [1.0f32, -1.0] {
                let (dx, dy) = (sign * e.ux, sign * e.uy);
                for r in r_range.min..=r_range.max {
                    let r = r as f32;
                    let fx = e.x + dx * r - ox;
                    let fy = e.y + dy * r - oy;
                    if !(fx >= 0.0 && fy >= 0.0) {
                        continue;
                    }
                    // truncation is floor for non-negative values
                    let (x0, y0) = (fx as i32, fy as i32);
                    if x0 + 1 >= rw || y0 + 1 >= rh {
                        continue;
                    }
                    let (ax, ay) = (fx - x0 as f32, fy - y0 as f32);
                    let wx1 = (ax * 16.0).round() as u32;
                    let wy1 = (ay * 16.0).round() as u32;
                    let (wx0, wy0) = (16 - wx1, 16 - wy1);
                    let i = (y0 * rw + x0) as usize;
                    let j = i + rw as usize;
                    self.acc[i] += wx0 * wy0;
                    self.acc[i + 1] += wx1 * wy0;
                    self.acc[j] += wx0 * wy1;
                    self.acc[j + 1] += wx1 * wy1;
                }
            }
        }
        self.smooth_acc(rw as usize, rh as usize);
        let (mut best, mut best_idx) = (0u32, 0usize);
        for (i, &v) in self.smooth.iter().enumerate() {
            if v > best {
                best = v;
                best_idx = i;
            }
        }
        (best > 0).then(|| {
            let rw = rw as usize;
            ((best_idx % rw) as u32 + rect.x0, (best_idx / rw) as u32 + rect.y0)
        })
    }

    /// Separable [1 2 1] x [1 2 1] blur of the accumulator, zero padded.
    fn smooth_acc(&mut self, w: usize, h: usize) {
        self.tmp.clear();
        self.tmp.resize(w * h, 0);
        self.smooth.clear();
        self.smooth.resize(w * h, 0);
        if w < 2 || h < 2 {
            self.smooth.copy_from_slice(&self.acc);
            return;
        }
        for (row, out) in self.acc.chunks_exact(w).zip(self.tmp.chunks_exact_mut(w)) {
            out[0] = 2 * row[0] + row[1];
            out[w - 1] = row[w - 2] + 2 * row[w - 1];
            for ((o, l), (c, r)) in out[1..w - 1]
                .iter_mut()
                .zip(&row[..w - 2])
                .zip(row[1..w - 1].iter().zip(&row[2..]))
            {
                *o = l + 2 * c + r;
            }
        }
        let t = &self.tmp;
        for y in 0..h {
            let c = &t[y * w..(y + 1) * w];
            let out = &mut self.smooth[y * w..(y + 1) * w];
            for (o, v) in out.iter_mut().zip(c) {
                *o = 2 * v;
            }
            if y > 0 {
                for (o, v) in out.iter_mut().zip(&t[(y - 1) * w..y * w]) {
                    *o += v;
                }
            }
            if y + 1 < h {
                for (o, v) in out.iter_mut().zip(&t[(y + 1) * w..(y + 2) * w]) {
                    *o += v;
                }
            }
        }
    }

    fn refine_centre(&self, rect: Rect, px: u32, py: u32) -> (f64, f64) {
        let rw = rect.width() as usize;
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for y in py.saturating_sub(1).max(rect.y0)..(py + 2).min(rect.y1) {
            for x in px.saturating_sub(1).max(rect.x0)..(px + 2).min(rect.x1) {
                let v = self.smooth[(y - rect.y0) as usize * rw + (x - rect.x0) as usize] as f64;
                sw += v;
                sx += v * x as f64;
                sy += v * y as f64;
            }
        }
        (sx / sw, sy / sw)
    }

    fn aligned_distance(e: &Edge, cx: f64, cy: f64, cos_min: f64) -> Option<(f64, f64, f64)> {
        let dx = e.x as f64 - cx;
        let dy = e.y as f64 - cy;
        let d = (dx * dx + dy * dy).sqrt();
        if d < 1e-9 {
            return None;
        }
        let cos = (dx * e.ux as f64 + dy * e.uy as f64) / d;
        (cos.abs() >= cos_min).then_some((d, dx, dy))
    }

    fn estimate_radius(
        &mut self,
        cx: f64,
        cy: f64,
        r_range: RadiusRange,
        cfg: &HoughConfig,
    ) -> Option<f64> {
        let lo = r_range.min.saturating_sub(2) as usize;
        let hi = r_range.max as usize + 2;
        self.hist.clear();
        self.hist.resize(hi + 2, 0);
        for e in &self.edges {
            if let Some((d, _, _)) = Self::aligned_distance(e, cx, cy, cfg.radial_cos_min) {
                let bin = d.round() as usize;
                if (lo..=hi).contains(&bin) {
                    self.hist[bin] += 1;
                }
            }
        }
        let mut best = (0u32, 0usize);
        for r in r_range.min as usize..=r_range.max as usize {
            let support = self.hist[r - 1] + self.hist[r] + self.hist[r + 1];
            if support > best.0 {
                best = (support, r);
            }
        }
        if best.0 == 0 {
            return None;
        }
        let r0 = best.1 as f64;
        let (mut n, mut sum) = (0usize, 0.0);
        for e in &self.edges {
            if let Some((d, _, _)) = Self::aligned_distance(e, cx, cy, cfg.radial_cos_min) {
                if (d - r0).abs() <= 1.5 {
                    n += 1;
                    sum += d;
                }
            }
        }
        let r = if n > 0 { sum / n as f64 } else { r0 };
        Some(r.clamp(r_range.min as f64, r_range.max as f64))
    }

    /// Fraction of angular sectors (about one per perimeter pixel) holding
    /// at least one aligned edge within the radial band.
    fn perimeter_support(&mut self, cx: f64, cy: f64, r: f64, cfg: &HoughConfig) -> f64 {
        let n = ((2.0 * PI * r).round() as usize).max(8);
        self.sectors.clear();
        self.sectors.resize(n, false);
        for e in &self.edges {
            if let Some((d, dx, dy)) = Self::aligned_distance(e, cx, cy, cfg.radial_cos_min) {
                if (d - r).abs() <= cfg.band_px {
                    let a = dy.atan2(dx) + PI;
                    let s = ((a / (2.0 * PI) * n as f64) as usize).min(n - 1);
                    self.sectors[s] = true;
                }
            }
        }
        self.sectors.iter().filter(|&&c| c).count() as f64 / n as f64
    }
}

/// Kasa fit of `x^2 + y^2 + D x + E y + F = 0` to the nonzero pixels of
/// `bounds` within the radial band of the current circle, weighted by the
/// squared intensity. Keeps the previous circle if a fit degenerates.
fn refit_circle(image: &Image8, bounds: Rect, c: (f64, f64, f64), cfg: &HoughConfig) -> (f64, f64, f64) {
    let (mut cx, mut cy, mut r) = c;
    let band = cfg.refine_band_px;
    for _ in 0..cfg.refine_iters {
        let x0 = ((cx - r - band).floor().max(0.0) as u32).max(bounds.x0);
        let y0 = ((cy - r - band).floor().max(0.0) as u32).max(bounds.y0);
        let x1 = ((cx + r + band).ceil().max(0.0) as u32 + 1).min(bounds.x1);
        let y1 = ((cy + r + band).ceil().max(0.0) as u32 + 1).min(bounds.y1);
        let mut a = Matrix3::<f64>::zeros();
        let mut b = Vector3::<f64>::zeros();
        let mut n = 0;
        for y in y0..y1 {
            let row = image.row(y);
            for x in x0..x1 {
                let v = row[x as usize];
                if v == 0 {
                    continue;
                }
                let (fx, fy) = (x as f64, y as f64);
                if ((fx - cx).hypot(fy - cy) - r).abs() > band {
                    continue;
                }
                let w = (v as f64 / 255.0).powi(2);
                let p = Vector3::new(fx, fy, 1.0);
                a += w * p * p.transpose();
                b -= w * (fx * fx + fy * fy) * p;
                n += 1;
            }
        }
        if n < 5 {
            break;
        }
        let Some(s) = a.lu().solve(&b) else { break };
        let (nx, ny) = (-s[0] / 2.0, -s[1] / 2.0);
        let r2 = nx * nx + ny * ny - s[2];
        if !(r2 > 0.0) || !nx.is_finite() || !ny.is_finite() {
            break;
        }
        (cx, cy, r) = (nx, ny, r2.sqrt());
    }
    (cx, cy, r)
}

#[inline]
fn or_reduce(s: &[u8]) -> u8 {
    s.iter().fold(0, |a, &b| a | b)
}
