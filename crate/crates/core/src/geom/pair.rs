use crate::detect::CircleDetection;

/// Pixel positions of the ball seen by camera A and camera B at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedObs {
    pub t: u64,
    pub a: (f64, f64),
    pub b: (f64, f64),
}

/// Matches two asynchronous detection streams.
///
/// Timestamps of the sparser stream are kept (stream A on ties); the denser
/// stream's centre is linearly interpolated to each of them from the two
/// bracketing detections, provided those lie at most `max_gap` ns apart.
/// Detections without such a bracket are dropped.
pub fn pair_streams(
    dets_a: &[CircleDetection],
    dets_b: &[CircleDetection],
    max_gap: u64,
) -> Vec<PairedObs> {
    let a_is_sparse = dets_a.len() <= dets_b.len();
    let (sparse, dense) = if a_is_sparse {
        (dets_a, dets_b)
    } else {
        (dets_b, dets_a)
    };

    let mut out = Vec::with_capacity(sparse.len());
    let mut j = 0usize;
    for s in sparse {
        // last dense index with t <= s.t
        while j + 1 < dense.len() && dense[j + 1].t <= s.t {
            j += 1;
        }
        let Some(lo) = dense.get(j) else { break };
        if lo.t > s.t {
            continue;
        }
        let matched = if lo.t == s.t {
            // prefer the first detection at exactly this timestamp
            let first = dense[..=j].iter().rev().take_while(|d| d.t == s.t).last().unwrap();
            Some((first.cx, first.cy))
        } else {
            dense.get(j + 1).and_then(|hi| {
                (hi.t - lo.t <= max_gap).then(|| interpolate(lo, hi, s.t))
            })
        };
        if let Some(other) = matched {
            let own = (s.cx, s.cy);
            let (a, b) = if a_is_sparse { (own, other) } else { (other, own) };
            out.push(PairedObs { t: s.t, a, b });
        }
    }
    out
}

fn interpolate(lo: &CircleDetection, hi: &CircleDetection, t: u64) -> (f64, f64) {
    let f = (t - lo.t) as f64 / (hi.t - lo.t) as f64;
    (lo.cx + f * (hi.cx - lo.cx), lo.cy + f * (hi.cy - lo.cy))
}

#[cfg(test)]
mod tests {
    use super::*;

    const US: u64 = 1_000;
    const MS: u64 = 1_000_000;

    fn det(t: u64, cx: f64, cy: f64) -> CircleDetection {
        CircleDetection {
            cx,
            cy,
            r: 5.0,
            score: 1.0,
            t,
            camera_id: String::new(),
        }
    }

    #[test]
    fn midpoint_interpolation() {
        let a = [det(500 * US, 1.0, 2.0)];
        let b = [det(0, 100.0, 50.0), det(1000 * US, 110.0, 50.0)];
        let pairs = pair_streams(&a, &b, 2 * MS);
        assert_eq!(pairs, vec![PairedObs { t: 500 * US, a: (1.0, 2.0), b: (105.0, 50.0) }]);
    }

    #[test]
    fn large_gap_dropped() {
        let a = [det(2 * MS, 1.0, 2.0)];
        let b = [det(0, 100.0, 50.0), det(5 * MS, 110.0, 50.0)];
        assert!(pair_streams(&a, &b, 2 * MS).is_empty());
    }

    #[test]
    fn identical_timestamps_pair_identically() {
        let a: Vec<_> = (0..5).map(|i| det(i * 100, i as f64, 0.0)).collect();
        let b: Vec<_> = (0..5).map(|i| det(i * 100, 10.0 + i as f64, 1.0)).collect();
        let pairs = pair_streams(&a, &b, 1);
        assert_eq!(pairs.len(), 5);
        for (i, p) in pairs.iter().enumerate() {
            assert_eq!(p.t, i as u64 * 100);
            assert_eq!(p.a, (i as f64, 0.0));
            assert_eq!(p.b, (10.0 + i as f64, 1.0));
        }
    }

    #[test]
    fn sparser_stream_keeps_timestamps_and_camera_order() {
        // B is sparser here: its timestamps survive and A gets interpolated
        let a = [det(0, 0.0, 0.0), det(100, 10.0, 0.0), det(200, 20.0, 0.0)];
        let b = [det(150, 7.0, 7.0)];
        let pairs = pair_streams(&a, &b, 1_000);
        assert_eq!(pairs, vec![PairedObs { t: 150, a: (15.0, 0.0), b: (7.0, 7.0) }]);
    }

    #[test]
    fn outside_dense_span_dropped() {
        let a = [det(5, 0.0, 0.0), det(500, 0.0, 0.0)];
        let b = [det(100, 0.0, 0.0), det(200, 1.0, 0.0), det(300, 2.0, 0.0)];
        assert!(pair_streams(&a, &b, 1_000).is_empty());
    }
}
