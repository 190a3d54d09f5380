use serde::{Deserialize, Serialize};

use super::Roi;
use crate::evstream::{Event, StreamHeader};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobConfig {
    /// Minimum events per pixel for a pixel to count as foreground.
    pub count_threshold: u32,
    /// Bounding-box aspect ratio must lie in `[1/ar_max, ar_max]`.
    pub ar_max: f64,
    pub min_px: usize,
    pub max_px: usize,
    pub roi_half: u32,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            count_threshold: 1,
            ar_max: 3.0,
            min_px: 8,
            max_px: 5_000,
            roi_half: 48,
        }
    }
}

/// Finds the ball as the largest plausible blob in an event-count frame.
///
/// Counts the events of the last `window` ns (ending at the last event),
/// thresholds, labels 8-connected components and returns an ROI centred on
/// the count-weighted centroid of the largest component that passes the
/// aspect-ratio and size filters.
pub fn blob_init(
    events: &[Event],
    window: u64,
    header: &StreamHeader,
    cfg: &BlobConfig,
) -> Option<Roi> {
    let t_end = events.last()?.t;
    let t_start = t_end.saturating_sub(window);
    let (w, h) = (header.width as usize, header.height as usize);

    let mut counts = vec![0u32; w * h];
    let mut touched = Vec::new();
    let start = events.partition_point(|e| e.t < t_start);
    for e in &events[start..] {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= w || y >= h {
            continue;
        }
        let c = &mut counts[y * w + x];
        if *c == 0 {
            touched.push(y * w + x);
        }
        *c += 1;
    }

    let threshold = cfg.count_threshold.max(1);
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut best: Option<(usize, Roi)> = None;
    for &seed in &touched {
        if visited[seed] || counts[seed] < threshold {
            continue;
        }
        visited[seed] = true;
        stack.push(seed);
        let (mut n, mut wsum, mut sx, mut sy) = (0usize, 0.0, 0.0, 0.0);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            let c = counts[idx] as f64;
            n += 1;
            wsum += c;
            sx += c * x as f64;
            sy += c * y as f64;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !visited[j] && counts[j] >= threshold {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        let bw = (x1 - x0 + 1) as f64;
        let bh = (y1 - y0 + 1) as f64;
        let ar = bw / bh;
        let plausible = ar >= 1.0 / cfg.ar_max
            && ar <= cfg.ar_max
            && n >= cfg.min_px
            && n <= cfg.max_px;
        if plausible && best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, Roi::new(sx / wsum, sy / wsum, cfg.roi_half)));
        }
    }
    best.map(|(_, roi)| roi)
}
