//! Exponential reduced ordinal surface (EROS), updated event by event.
//!
//! Every event multiplies the `(2k+1) x (2k+1)` neighbourhood around it by
//! `d = 0.3^(1/k)` (rounded down to the 8-bit grid) and then writes 255 at
//! its own pixel. Polarity is not used. Neighbourhoods are clamped at the
//! image border.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard};

use crate::error::{Error, Result};
use crate::evstream::Event;
use crate::image::{Image8, Rect};

pub const DEFAULT_K_EROS: u32 = 10;

/// Per-event decay factor for a neighbourhood half-size `k`.
pub fn decay_factor(k: u32) -> f64 {
    0.3f64.powf(1.0 / k as f64)
}

#[derive(Debug, Clone)]
pub struct ErosSurface {
    k: u32,
    d: f64,
    // floor(v * d) for every 8-bit v
    lut: [u8; 256],
    image: Image8,
    last_event_t: u64,
    applied: u64,
}

impl ErosSurface {
    pub fn new(width: u32, height: u32, k: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("EROS surface needs a non-empty sensor".into()));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k_eros must be at least 1".into()));
        }
        let d = decay_factor(k);
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = (v as f64 * d).floor() as u8;
        }
        Ok(Self {
            k,
            d,
            lut,
            image: Image8::new(width, height),
            last_event_t: 0,
            applied: 0,
        })
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn decay(&self) -> f64 {
        self.d
    }

    pub fn last_event_t(&self) -> u64 {
        self.last_event_t
    }

    /// Number of events applied since creation.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn value(&self, x: u32, y: u32) -> u8 {
        self.image.get(x, y)
    }

    pub fn values(&self) -> &Image8 {
        &self.image
    }

    pub fn update(&mut self, ev: &Event) -> Result<()> {
        let (vx, vy) = (ev.x as u32, ev.y as u32);
        let (w, h) = (self.width(), self.height());
        if vx >= w || vy >= h {
            return Err(Error::OutOfBounds {
                x: vx,
                y: vy,
                width: w,
                height: h,
            });
        }
        let x0 = vx.saturating_sub(self.k) as usize;
        let x1 = (vx + self.k + 1).min(w) as usize;
        let y0 = vy.saturating_sub(self.k) as usize;
        let y1 = (vy + self.k + 1).min(h) as usize;
        let stride = w as usize;
        let lut = &self.lut;
        let data = self.image.as_raw_mut();
        for y in y0..y1 {
            for v in &mut data[y * stride + x0..y * stride + x1] {
                *v = lut[*v as usize];
            }
        }
        data[vy as usize * stride + vx as usize] = 255;
        self.last_event_t = ev.t;
        self.applied += 1;
        Ok(())
    }

    /// Coherent copy of the whole surface; the surface itself is untouched.
    pub fn snapshot(&self) -> Image8 {
        self.image.clone()
    }

    /// Copies `rect` of the surface into the same location of `dst`.
    pub fn copy_region_into(&self, rect: Rect, dst: &mut Image8) {
        debug_assert_eq!((dst.width(), dst.height()), (self.width(), self.height()));
        dst.copy_rect_from(&self.image, rect);
    }
}

/// Metadata of a surface copy: the ingestion progress it reflects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotInfo {
    pub t: u64,
    pub applied: u64,
}

/// EROS surface shared between one writer context and snapshotting readers.
///
/// The writer holds the lock while it applies a batch of events; a reader
/// holds it while it copies. Every copy therefore reflects the state after
/// some whole number of applied events.
#[derive(Debug)]
pub struct SharedSurface {
    inner: Mutex<ErosSurface>,
    applied: AtomicU64,
}

impl SharedSurface {
    pub fn new(surface: ErosSurface) -> Self {
        let applied = AtomicU64::new(surface.applied());
        Self {
            inner: Mutex::new(surface),
            applied,
        }
    }

    fn lock(&self) -> MutexGuard<'_, ErosSurface> {
        // a panicking writer leaves a consistent surface: each update is applied in full or not at all
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn apply_batch(&self, events: &[Event]) -> Result<()> {
        let mut s = self.lock();
        for ev in events {
            s.update(ev)?;
        }
        self.applied.store(s.applied(), Ordering::Release);
        Ok(())
    }

    /// Events applied so far, readable without taking the lock.
    pub fn applied(&self) -> u64 {
        self.applied.load(Ordering::Acquire)
    }

    pub fn snapshot(&self) -> (Image8, SnapshotInfo) {
        let s = self.lock();
        (s.snapshot(), info(&s))
    }

    pub fn snapshot_region_into(&self, rect: Rect, dst: &mut Image8) -> SnapshotInfo {
        let s = self.lock();
        s.copy_region_into(rect, dst);
        info(&s)
    }

    pub fn into_inner(self) -> ErosSurface {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

fn info(s: &ErosSurface) -> SnapshotInfo {
    SnapshotInfo {
        t: s.last_event_t(),
        applied: s.applied(),
    }
}
