//! Cross-correlation model function.
//!
//! Per channel the fit runs four stages:
//!
//! 1. a 256×256 correspondence matrix counting co-located (source bin,
//!    reference bin) pairs, with the reference sample sums of every cell;
//! 2. for every occupied source bin, the count-weighted centroid of its row,
//!    i.e. the mean reference intensity seen where the source falls in that bin;
//! 3. weighted isotonic regression (pool adjacent violators) over the occupied
//!    bins, so the table is non-decreasing;
//! 4. a least-squares smoothing polynomial through the table, weighted by bin
//!    occupancy. The polynomial is what gets applied.
//!
//! Unoccupied bins are filled by linear interpolation between their occupied
//! neighbors; past the first/last occupied bin the neighbor's offset is kept.

use super::regression::{check_degree, polynomial_fit};
use super::{CalibrationModel, Diagnostics, FitOptions, Transform};
use crate::error::Result;
use crate::image::{bin_index, Image, HISTOGRAM_BINS};

const BINS: usize = HISTOGRAM_BINS;

/// Joint (source bin, reference bin) statistics of one channel.
#[derive(Debug, Clone)]
pub struct Correspondence {
    /// `counts[a * 256 + b]`: pixels with source in bin `a` and reference in bin `b`.
    pub counts: Vec<u64>,
    /// Sum of the reference samples falling in each cell.
    pub reference_sums: Vec<f64>,
    /// Sum of the source samples per source bin.
    pub source_sums: Vec<f64>,
}

impl Correspondence {
    pub fn row_count(&self, a: usize) -> u64 {
        self.counts[a * BINS..(a + 1) * BINS].iter().sum()
    }
}

pub fn correspondence(source: &[f64], reference: &[f64]) -> Correspondence {
    let mut counts = vec![0u64; BINS * BINS];
    let mut reference_sums = vec![0.0; BINS * BINS];
    let mut source_sums = vec![0.0; BINS];
    for (&s, &r) in source.iter().zip(reference) {
        let (a, b) = (bin_index(s), bin_index(r));
        counts[a * BINS + b] += 1;
        reference_sums[a * BINS + b] += r;
        source_sums[a] += s;
    }
    Correspondence {
        counts,
        reference_sums,
        source_sums,
    }
}

/// One occupied source bin: mean source intensity, centroid of the reference
/// row, and the number of pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCentroid {
    pub bin: usize,
    pub position: f64,
    pub value: f64,
    pub weight: f64,
}

pub fn centroids(corr: &Correspondence) -> Vec<BinCentroid> {
    (0..BINS)
        .filter_map(|a| {
            let n = corr.row_count(a);
            if n == 0 {
                return None;
            }
            let row = a * BINS..(a + 1) * BINS;
            let sum: f64 = corr.reference_sums[row].iter().sum();
            Some(BinCentroid {
                bin: a,
                position: corr.source_sums[a] / n as f64,
                value: sum / n as f64,
                weight: n as f64,
            })
        })
        .collect()
}

/// Weighted least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // (mean, weight, length) blocks
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            let m = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { (m1 + m2) / 2.0 };
            blocks.push((m, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// 256-entry table and bin positions from the monotone centroids. Returns
/// `(positions, table, filled_bins)`.
fn fill_table(points: &[BinCentroid], monotone: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    let center = |a: usize| (a as f64 + 0.5) / 255.0;
    let mut positions: Vec<f64> = (0..BINS).map(center).collect();
    let mut table = vec![0.0; BINS];
    for (p, &v) in points.iter().zip(monotone) {
        positions[p.bin] = p.position;
        table[p.bin] = v;
    }
    let mut filled = 0;
    let mut k = 0;
    for a in 0..BINS {
        while k < points.len() && points[k].bin < a {
            k += 1;
        }
        if k < points.len() && points[k].bin == a {
            continue;
        }
        filled += 1;
        let x = positions[a];
        let prev = k.checked_sub(1).map(|i| (points[i].position, monotone[i]));
        let next = (k < points.len()).then(|| (points[k].position, monotone[k]));
        table[a] = match (prev, next) {
            (Some((x0, y0)), Some((x1, y1))) => y0 + (y1 - y0) * (x - x0) / (x1 - x0),
            (Some((x0, y0)), None) | (None, Some((x0, y0))) => x + (y0 - x0),
            (None, None) => x,
        }
        .clamp(0.0, 1.0);
    }
    (positions, table, filled)
}

/// Result of the table-building stages for one channel.
#[derive(Debug, Clone)]
pub struct ChannelMapping {
    pub positions: Vec<f64>,
    pub table: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub effective_degree: usize,
    pub empty_bins: usize,
}

pub fn fit_channel(source: &[f64], reference: &[f64], poly_degree: usize) -> ChannelMapping {
    let corr = correspondence(source, reference);
    let points = centroids(&corr);
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let monotone = isotonic(&values, &weights);
    let (positions, table, empty_bins) = fill_table(&points, &monotone);
    let xs: Vec<f64> = points.iter().map(|p| p.position).collect();
    let (coefficients, effective_degree) =
        polynomial_fit(&xs, &monotone, Some(&weights), poly_degree);
    ChannelMapping {
        positions,
        table,
        coefficients,
        effective_degree,
        empty_bins,
    }
}

pub fn fit_ccmf(source: &Image, reference: &Image, poly_degree: usize) -> Result<CalibrationModel> {
    fit_ccmf_with(source, reference, poly_degree, &FitOptions::default())
}

pub fn fit_ccmf_with(
    source: &Image,
    reference: &Image,
    poly_degree: usize,
    opts: &FitOptions,
) -> Result<CalibrationModel> {
    check_degree(poly_degree)?;
    source.ensure_same_shape(reference, "ccmf fit")?;
    let mut flags = Vec::new();
    let (mut positions, mut tables, mut coefficients) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..source.channels() {
        let (s, r) = super::regression::channel_pairs(source, reference, c, opts);
        let m = fit_channel(&s, &r, poly_degree);
        if m.empty_bins > 0 {
            flags.push(format!("channel {c}: {} empty source bins interpolated", m.empty_bins));
        }
        if m.effective_degree < poly_degree {
            flags.push(format!(
                "channel {c}: smoothing degree reduced to {}",
                m.effective_degree
            ));
        }
        positions.push(m.positions);
        tables.push(m.table);
        coefficients.push(m.coefficients);
    }
    Ok(CalibrationModel::finish(
        Transform::Ccmf {
            poly_degree,
            positions,
            tables,
            coefficients,
        },
        Diagnostics::flagged(flags),
        source,
        reference,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrators::apply_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, n: usize, hi: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.0..hi)).collect()
    }

    #[test]
    fn correspondence_counts_pairs() {
        let c = correspondence(&[0.0, 0.0, 1.0], &[0.5, 0.5, 0.0]);
        assert_eq!(c.counts[127], 2);
        assert_eq!(c.counts[255 * 256], 1);
        assert_eq!(c.counts.iter().sum::<u64>(), 3);
        assert_eq!(c.reference_sums[127], 1.0);
    }

    #[test]
    fn centroid_is_row_mean_of_reference() {
        let c = correspondence(&[0.1, 0.1, 0.1], &[0.2, 0.4, 0.9]);
        let p = centroids(&c);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].bin, 25);
        assert!((p[0].value - 0.5).abs() < 1e-15);
        assert_eq!(p[0].weight, 3.0);
    }

    #[test]
    fn pava_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 1.0], &[1.0, 3.0]), vec![1.5, 1.5]);
        assert_eq!(isotonic(&[1.0, 2.0], &[1.0, 1.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn identical_images_give_identity_table() {
        let s = random(1, 2000, 1.0);
        let m = fit_channel(&s, &s, 3);
        for (a, v) in m.table.iter().enumerate() {
            assert!((v - (a as f64 + 0.5) / 255.0).abs() <= 1.0 / 255.0, "bin {a}: {v}");
        }
    }

    #[test]
    fn planted_shift() {
        let s = random(2, 5000, 0.9);
        let r: Vec<f64> = s.iter().map(|v| v + 0.1).collect();
        let m = fit_channel(&s, &r, 2);
        for a in 0..=228 {
            let want = m.positions[a] + 0.1;
            assert!((m.table[a] - want).abs() <= 2.0 / 255.0, "bin {a}");
        }
    }

    #[test]
    fn empty_bins_are_flagged_and_filled() {
        let src = Image::from_fn(8, 8, 1, |x, _, _| if x < 4 { 0.2 } else { 0.6 }).unwrap();
        let reference = src.map(|s, _| s * 0.5 + 0.2);
        let model = fit_ccmf(&src, &reference, 3).unwrap();
        assert!(model.diagnostics.flags.iter().any(|f| f.contains("empty source bins")));
        let Transform::Ccmf { tables, .. } = &model.transform else {
            unreachable!()
        };
        // between the two occupied bins the table interpolates linearly
        let mid = tables[0][(51 + 153) / 2];
        assert!(mid > 0.3 && mid < 0.5, "{mid}");
        let out = apply_model(&src, &model).unwrap();
        for (o, r) in out.samples().iter().zip(reference.samples()) {
            assert!((o - r).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn tables_are_monotone(seed: u64, n in 10usize..400, degree in 1usize..=5) {
            let s = random(seed, n, 1.0);
            let r = random(seed.wrapping_add(1), n, 1.0);
            let m = fit_channel(&s, &r, degree);
            proptest::prop_assert!(m.table.windows(2).all(|w| w[0] <= w[1]));
            proptest::prop_assert!(m.table.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
