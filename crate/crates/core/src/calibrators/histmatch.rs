//! CDF histogram matching over 256 bins, linear inside each bin.
//!
//! A sample in source bin `k` holding `n` samples between `low[k]` and
//! `high[k]` gets the fractional rank `cdf[k-1] + 0.5 + (n - 1)·t` where `t`
//! is its relative position in `[low, high]`. The output is the reference
//! value at the same rank, interpolated the same way. Identical source and
//! reference therefore map every sample to itself.

use serde::{Deserialize, Serialize};

use super::{CalibrationModel, Diagnostics, Transform};
use crate::error::Result;
use crate::image::{bin_index, Image, HISTOGRAM_BINS};

/// Per-bin extent and cumulative count of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCdf {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// `cumulative[k]` counts samples in bins `0..=k`.
    pub cumulative: Vec<u64>,
}

impl BinnedCdf {
    pub fn new(samples: impl Iterator<Item = f64>) -> Self {
        let mut low = vec![f64::INFINITY; HISTOGRAM_BINS];
        let mut high = vec![f64::NEG_INFINITY; HISTOGRAM_BINS];
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for s in samples {
            let k = bin_index(s);
            low[k] = low[k].min(s);
            high[k] = high[k].max(s);
            counts[k] += 1;
        }
        for k in 0..HISTOGRAM_BINS {
            if counts[k] == 0 {
                // bin edges, only reached when applied to unseen data
                low[k] = k as f64 / 255.0;
                high[k] = low[k];
            }
        }
        let cumulative = counts
            .iter()
            .scan(0, |acc, &n| {
                *acc += n;
                Some(*acc)
            })
            .collect();
        Self {
            low,
            high,
            cumulative,
        }
    }

    fn before(&self, k: usize) -> u64 {
        if k == 0 {
            0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn total(&self) -> u64 {
        self.cumulative[HISTOGRAM_BINS - 1]
    }

    /// Fractional rank of `s`.
    pub fn rank(&self, s: f64) -> f64 {
        let k = bin_index(s);
        let n = self.cumulative[k] - self.before(k);
        if n == 0 {
            return self.before(k) as f64;
        }
        let span = self.high[k] - self.low[k];
        let t = if span > 0.0 {
            ((s - self.low[k]) / span).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.before(k) as f64 + 0.5 + (n - 1) as f64 * t
    }

    /// Sample value at fractional rank `u`; inverse of [`rank`](Self::rank).
    pub fn value_at(&self, u: f64) -> f64 {
        // first bin whose cumulative count exceeds u
        let j = self
            .cumulative
            .partition_point(|&c| c as f64 <= u)
            .min(HISTOGRAM_BINS - 1);
        let j = (j..HISTOGRAM_BINS)
            .find(|&j| self.cumulative[j] > self.before(j))
            .or_else(|| (0..j).rev().find(|&j| self.cumulative[j] > self.before(j)))
            .unwrap_or(j);
        let n = self.cumulative[j] - self.before(j);
        if n <= 1 {
            return self.low[j];
        }
        let t = ((u - self.before(j) as f64 - 0.5) / (n - 1) as f64).clamp(0.0, 1.0);
        self.low[j] + t * (self.high[j] - self.low[j])
    }
}

pub fn fit_histogram_match(source: &Image, reference: &Image) -> Result<CalibrationModel> {
    source.ensure_same_shape(reference, "histogram match")?;
    let cdfs = |img: &Image| (0..img.channels()).map(|c| BinnedCdf::new(img.channel(c))).collect();
    Ok(CalibrationModel::finish(
        Transform::HistogramMatch {
            source: cdfs(source),
            reference: cdfs(reference),
        },
        Diagnostics::default(),
        source,
        reference,
    ))
}

pub(crate) fn match_sample(source: &BinnedCdf, reference: &BinnedCdf, s: f64) -> f64 {
    let u = source.rank(s) * reference.total() as f64 / source.total().max(1) as f64;
    reference.value_at(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrators::apply_model;
    use crate::image::histogram;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quantized(seed: u64, w: usize, h: usize, c: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, c, |_, _, _| rng.random_range(0..=255u8) as f64 / 255.0).unwrap()
    }

    /// 1-D earth mover's distance between two histograms of equal mass.
    fn emd(a: &[u64; 256], b: &[u64; 256]) -> u64 {
        let (mut ca, mut cb, mut d) = (0i64, 0i64, 0u64);
        for k in 0..256 {
            ca += a[k] as i64;
            cb += b[k] as i64;
            d += (ca - cb).unsigned_abs();
        }
        d
    }

    #[test]
    fn identical_images_map_to_themselves() {
        let img = quantized(1, 20, 20, 3);
        let out = apply_model(&img, &fit_histogram_match(&img, &img).unwrap()).unwrap();
        assert_eq!(out, img);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cont = Image::from_fn(30, 30, 3, |_, _, _| rng.random::<f64>().powi(2)).unwrap();
        let out = apply_model(&cont, &fit_histogram_match(&cont, &cont).unwrap()).unwrap();
        for (a, b) in out.samples().iter().zip(cont.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_reference() {
        let src = quantized(2, 10, 10, 1);
        let reference = Image::filled(10, 10, 1, 0.5).unwrap();
        let out = apply_model(&src, &fit_histogram_match(&src, &reference).unwrap()).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn matching_does_not_increase_emd() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = Image::from_fn(16, 16, 3, |_, _, _| rng.random::<f64>().powi(2)).unwrap();
            let reference = Image::from_fn(16, 16, 3, |_, _, _| rng.random::<f64>().sqrt()).unwrap();
            let out = apply_model(&src, &fit_histogram_match(&src, &reference).unwrap()).unwrap();
            let (hs, hr, ho) = (histogram(&src), histogram(&reference), histogram(&out));
            for c in 0..3 {
                assert!(emd(ho.channel(c), hr.channel(c)) <= emd(hs.channel(c), hr.channel(c)));
            }
        }
    }

    #[test]
    fn cumulative_counts_match_within_source_bin_mass() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // one pixel per source bin: exact CDF matching is attainable
            let mut levels: Vec<f64> = (0..256).map(|k| k as f64 / 255.0).collect();
            levels.shuffle(&mut rng);
            let src = Image::from_samples(16, 16, 1, levels).unwrap();
            let reference = Image::from_fn(16, 16, 1, |_, _, _| rng.random()).unwrap();
            let out = apply_model(&src, &fit_histogram_match(&src, &reference).unwrap()).unwrap();
            let (ro, rr) = (histogram(&out).cumulative(0), histogram(&reference).cumulative(0));
            for k in 0..256 {
                assert!(ro[k].abs_diff(rr[k]) <= 1, "bin {k}");
            }

            // continuous source: every sample has its own rank
            let src = Image::from_fn(16, 16, 1, |_, _, _| rng.random()).unwrap();
            let out = apply_model(&src, &fit_histogram_match(&src, &reference).unwrap()).unwrap();
            let ro = histogram(&out).cumulative(0);
            for k in 0..256 {
                assert!(ro[k].abs_diff(rr[k]) <= 1, "bin {k}");
            }

            // quantized source: ties share a rank, gap bounded by the largest bin
            let src = quantized(seed + 100, 16, 16, 1);
            let out = apply_model(&src, &fit_histogram_match(&src, &reference).unwrap()).unwrap();
            let max_bin = *histogram(&src).channel(0).iter().max().unwrap();
            let ro = histogram(&out).cumulative(0);
            for k in 0..256 {
                assert!(ro[k].abs_diff(rr[k]) < max_bin, "bin {k}");
            }
        }
    }

    #[test]
    fn rank_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..500).map(|_| rng.random::<f64>().powi(3)).collect();
        let cdf = BinnedCdf::new(values.iter().copied());
        assert_eq!(cdf.total(), 500);
        for &v in &values {
            assert!((cdf.value_at(cdf.rank(v)) - v).abs() < 1e-12);
        }
        assert_eq!(cdf.value_at(-3.0), cdf.value_at(0.0));
        assert!(cdf.value_at(1e9) <= 1.0);
    }

    proptest::proptest! {
        #[test]
        fn mapping_is_monotone(seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = Image::from_fn(9, 9, 3, |_, _, _| rng.random()).unwrap();
            let reference = Image::from_fn(9, 9, 3, |_, _, _| rng.random::<f64>().powi(3)).unwrap();
            let m = fit_histogram_match(&src, &reference).unwrap();
            let Transform::HistogramMatch { source, reference } = &m.transform else { unreachable!() };
            for c in 0..3 {
                let mut prev = f64::NEG_INFINITY;
                for i in 0..=2000 {
                    let v = match_sample(&source[c], &reference[c], i as f64 / 2000.0);
                    proptest::prop_assert!(v >= prev);
                    prev = v;
                }
            }
        }
    }
}
