use std::collections::BTreeMap;
use std::time::Instant;

use super::metrics::Stats;

/// Wall-clock samples per pipeline stage, in microseconds.
#[derive(Debug, Clone, Default)]
pub struct StageTimes {
    samples: BTreeMap<String, Vec<f64>>,
}

impl StageTimes {
    pub fn record(&mut self, stage: &str, us: f64) {
        match self.samples.get_mut(stage) {
            Some(v) => v.push(us),
            None => {
                self.samples.insert(stage.to_string(), vec![us]);
            }
        }
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(stage, start.elapsed().as_secs_f64() * 1e6);
        out
    }

    pub fn samples(&self, stage: &str) -> &[f64] {
        self.samples.get(stage).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn merge(&mut self, other: &StageTimes) {
        for (k, v) in &other.samples {
            self.samples.entry(k.clone()).or_default().extend_from_slice(v);
        }
    }

    pub fn summary(&self) -> BTreeMap<String, Stats> {
        self.samples
            .iter()
            .filter_map(|(k, v)| Stats::from_samples(v).map(|s| (k.clone(), s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_merges() {
        let mut a = StageTimes::default();
        a.record("x", 1.0);
        let mut b = StageTimes::default();
        b.record("x", 3.0);
        b.time("y", || ());
        a.merge(&b);
        let s = a.summary();
        assert_eq!(s["x"].mean, 2.0);
        assert_eq!(s["y"].n, 1);
    }
}
