use super::layers::FeatureMap;

const STD_EPS: f64 = 1e-10;

/// Statistics pooling over the time axis.
///
/// Returns `2 * F * C` values: the mean block followed by the standard
/// deviation block, each ordered by channel then frequency. Variance is the
/// population variance with `1e-10` added inside the square root.
pub fn stats_pool(map: &FeatureMap) -> Vec<f32> {
    let cells = map.channels * map.freq;
    let mut out = vec![0.0f32; 2 * cells];
    let t = map.time.max(1) as f64;
    for (cell, series) in map.data.chunks(map.time.max(1)).enumerate().take(cells) {
        let mean = series.iter().map(|&v| v as f64).sum::<f64>() / t;
        let var = series.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t;
        out[cell] = mean as f32;
        out[cells + cell] = (var + STD_EPS).sqrt() as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_constant_input() {
        let mut m = FeatureMap::zeros(3, 2, 5);
        for c in 0..3 {
            for f in 0..2 {
                for t in 0..5 {
                    m.data[(c * 2 + f) * 5 + t] = (c * 10 + f) as f32;
                }
            }
        }
        let p = stats_pool(&m);
        assert_eq!(p.len(), 12);
        for c in 0..3 {
            for f in 0..2 {
                assert_eq!(p[c * 2 + f], (c * 10 + f) as f32);
            }
        }
        // sqrt(1e-10) is the floor of the std block.
        assert!(p[6..].iter().all(|&s| s.abs() < 1e-4));
    }

    #[test]
    fn single_frame_has_zero_std() {
        let m = FeatureMap { channels: 2, freq: 1, time: 1, data: vec![4.0, -1.0] };
        let p = stats_pool(&m);
        assert_eq!(&p[..2], &[4.0, -1.0]);
        assert!(p[2..].iter().all(|&s| s < 1e-4));
    }

    #[test]
    fn known_std() {
        let m = FeatureMap { channels: 1, freq: 1, time: 4, data: vec![1.0, 3.0, 1.0, 3.0] };
        let p = stats_pool(&m);
        assert!((p[0] - 2.0).abs() < 1e-7);
        assert!((p[1] - 1.0).abs() < 1e-6);
    }
}
