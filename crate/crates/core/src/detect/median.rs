use serde::{Deserialize, Serialize};

use super::Roi;
use crate::evstream::Event;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MedianConfig {
    /// Length of the event window ending at the detection time (ns).
    pub window_ns: u64,
    pub min_events: usize,
    pub roi_half: u32,
    pub miss_limit: u32,
}

impl Default for MedianConfig {
    fn default() -> Self {
        Self {
            window_ns: 2_000_000,
            min_events: 10,
            roi_half: 48,
            miss_limit: 5,
        }
    }
}

/// Per-axis median of the positions of the events inside `roi` with
/// `t0 <= t <= t1`. Even counts take the lower median. The result is
/// stamped `t1`.
pub fn median_detect(
    events: &[Event],
    t0: u64,
    t1: u64,
    roi: &Roi,
    min_events: usize,
) -> Option<(f64, f64, u64)> {
    let (mut xs, mut ys): (Vec<u16>, Vec<u16>) = events
        .iter()
        .filter(|e| e.t >= t0 && e.t <= t1 && roi.contains(e.x as f64, e.y as f64))
        .map(|e| (e.x, e.y))
        .unzip();
    if xs.is_empty() || xs.len() < min_events {
        return None;
    }
    let mid = (xs.len() - 1) / 2;
    let x = *xs.select_nth_unstable(mid).1;
    let y = *ys.select_nth_unstable(mid).1;
    Some((x as f64, y as f64, t1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evstream::Polarity;
    use rand::{Rng, SeedableRng};

    fn ev(x: u16, y: u16, t: u64) -> Event {
        Event::new(x, y, t, Polarity::On)
    }

    #[test]
    fn three_events() {
        let evs = [ev(3, 2, 1), ev(5, 2, 2), ev(7, 9, 3)];
        let roi = Roi::new(5.0, 5.0, 20);
        assert_eq!(median_detect(&evs, 0, 10, &roi, 1), Some((5.0, 2.0, 10)));
    }

    #[test]
    fn nothing_inside_roi() {
        let evs = [ev(3, 2, 1), ev(5, 2, 2)];
        let roi = Roi::new(100.0, 100.0, 5);
        assert_eq!(median_detect(&evs, 0, 10, &roi, 1), None);
        assert_eq!(median_detect(&[], 0, 10, &roi, 0), None);
    }

    #[test]
    fn window_and_min_events() {
        let evs = [ev(1, 1, 1), ev(2, 2, 5), ev(4, 4, 6), ev(9, 9, 20)];
        let roi = Roi::new(5.0, 5.0, 20);
        // lower median of {2, 4}
        assert_eq!(median_detect(&evs, 5, 10, &roi, 2), Some((2.0, 2.0, 10)));
        assert_eq!(median_detect(&evs, 5, 10, &roi, 3), None);
    }

    #[test]
    fn matches_sort_based_median() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let evs: Vec<_> = (0..10_000)
            .map(|i| ev(rng.random_range(100..200), rng.random_range(50..150), i))
            .collect();
        let roi = Roi::new(150.0, 100.0, 60);
        let got = median_detect(&evs, 0, 10_000, &roi, 1).unwrap();
        let mut xs: Vec<_> = evs.iter().map(|e| e.x).collect();
        let mut ys: Vec<_> = evs.iter().map(|e| e.y).collect();
        xs.sort();
        ys.sort();
        let mid = (xs.len() - 1) / 2;
        assert_eq!(got, (xs[mid] as f64, ys[mid] as f64, 10_000));
    }
}
