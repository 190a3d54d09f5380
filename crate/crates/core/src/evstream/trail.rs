use std::collections::HashMap;

use super::{Event, Polarity};

/// Default burst window: 1 ms.
pub const DEFAULT_DT_BURST_NS: u64 = 1_000_000;

/// Streaming burst filter with a dense per-pixel, per-polarity memory.
///
/// An event is dropped when the previous event at the same pixel with the
/// same polarity, whether it was kept or dropped, happened at most
/// `dt_burst` nanoseconds earlier.
#[derive(Debug, Clone)]
pub struct TrailFilter {
    width: usize,
    height: usize,
    dt_burst: u64,
    // u64::MAX marks "never seen"
    last: Vec<u64>,
}

impl TrailFilter {
    pub fn new(width: u32, height: u32, dt_burst: u64) -> Self {
        let n = width as usize * height as usize * 2;
        Self {
            width: width as usize,
            height: height as usize,
            dt_burst,
            last: vec![u64::MAX; n],
        }
    }

    pub fn dt_burst(&self) -> u64 {
        self.dt_burst
    }

    /// Returns true if the event survives the filter.
    #[inline]
    pub fn accept(&mut self, ev: &Event) -> bool {
        let (x, y) = (ev.x as usize, ev.y as usize);
        debug_assert!(x < self.width && y < self.height);
        let idx = (y * self.width + x) * 2 + ev.p.index();
        let prev = std::mem::replace(&mut self.last[idx], ev.t);
        prev == u64::MAX || ev.t.saturating_sub(prev) > self.dt_burst
    }
}

/// Removes the repeated events of same-polarity bursts at a pixel.
///
/// Works on any timestamp-ordered stream without knowing the sensor size.
pub fn trail_filter(events: &[Event], dt_burst: u64) -> Vec<Event> {
    let mut last: HashMap<(u16, u16, Polarity), u64> = HashMap::new();
    events
        .iter()
        .filter(|ev| match last.insert((ev.x, ev.y, ev.p), ev.t) {
            Some(prev) => ev.t.saturating_sub(prev) > dt_burst,
            None => true,
        })
        .copied()
        .collect()
}
