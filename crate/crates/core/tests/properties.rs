use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use camcal::consensus::{pixel_mean, pixel_weighted_mean, WeightMap};
use camcal::metrics::{mse, psnr_from_mse};
use camcal::{
    build_consensus, calibrate_stack, histogram_spread, perceptual_diff, CalibratorKind, ConsensusMethod, FitOptions,
    Image, ImageStack,
};

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng.random()).unwrap()
}

fn random_stack(seed: u64, n: usize, w: usize, h: usize, c: usize) -> ImageStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..n).map(|_| random_image(&mut rng, w, h, c)).collect();
    ImageStack::new("p", images).unwrap()
}

fn shuffled(stack: &ImageStack, seed: u64) -> (Vec<usize>, ImageStack) {
    let mut order: Vec<usize> = (0..stack.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let images = order.iter().map(|&i| stack.images()[i].clone()).collect();
    (order, ImageStack::new("p", images).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consensus_of_copies_is_the_image(seed: u64, n in 2usize..8, rgb: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, 5, 4, if rgb { 3 } else { 1 });
        let stack = ImageStack::new("p", vec![img.clone(); n]).unwrap();
        for m in ConsensusMethod::ALL {
            prop_assert_eq!(&build_consensus(&stack, m).unwrap().image, &img, "{:?}", m);
        }
    }

    #[test]
    fn consensus_is_bounded_and_order_free(seed: u64, n in 2usize..9, shuffle_seed: u64) {
        let stack = random_stack(seed, n, 6, 5, 3);
        let (_, permuted) = shuffled(&stack, shuffle_seed);
        for m in ConsensusMethod::ALL {
            let c = build_consensus(&stack, m).unwrap().image;
            for (i, v) in c.samples().iter().enumerate() {
                let col = stack.images().iter().map(|im| im.samples()[i]);
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
                prop_assert!(lo <= *v && *v <= hi);
            }
            let p = build_consensus(&permuted, m).unwrap().image;
            if matches!(m, ConsensusMethod::Median | ConsensusMethod::WeightedMedian) {
                prop_assert_eq!(&p, &c);
            } else {
                // summation order changes with the permutation
                for (a, b) in p.samples().iter().zip(c.samples()) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn median_ignores_a_corrupted_minority(seed: u64, k in 1usize..4) {
        let n = 2 * k + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean: Vec<Image> = (0..k + 1).map(|_| random_image(&mut rng, 4, 4, 1)).collect();
        let mut images = clean.clone();
        for _ in 0..k {
            images.push(Image::filled(4, 4, 1, if rng.random() { 0.0 } else { 1.0 }).unwrap());
        }
        images.shuffle(&mut rng);
        let stack = ImageStack::new("p", images).unwrap();
        prop_assert_eq!(stack.len(), n);
        let med = build_consensus(&stack, ConsensusMethod::Median).unwrap().image;
        for (i, v) in med.samples().iter().enumerate() {
            prop_assert!(clean.iter().any(|im| im.samples()[i] == *v));
        }
    }

    #[test]
    fn uniform_weights_give_the_mean(seed: u64, n in 2usize..9, w in 0.01f64..=1.0) {
        let stack = random_stack(seed, n, 5, 5, 3);
        let weights = WeightMap::new(vec![vec![w; 75]; n]).unwrap();
        let a = pixel_weighted_mean(&stack, &weights).unwrap();
        let b = pixel_mean(&stack);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn calibration_is_order_equivariant_and_clamped(seed: u64, shuffle_seed: u64, kind_index in 0usize..5) {
        let kind = CalibratorKind::DEFAULTS[kind_index];
        let stack = random_stack(seed, 4, 8, 8, 3);
        let reference = build_consensus(&stack, ConsensusMethod::Median).unwrap().image;
        let opts = FitOptions::default();
        let out = calibrate_stack(&stack, &reference, &kind, &opts).unwrap();
        let (order, permuted) = shuffled(&stack, shuffle_seed);
        let out_p = calibrate_stack(&permuted, &reference, &kind, &opts).unwrap();
        for (j, &i) in order.iter().enumerate() {
            prop_assert_eq!(&out_p.images.images()[j], &out.images.images()[i]);
        }
        prop_assert!(out.images.images().iter().flat_map(|im| im.samples()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn metric_signs(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng, 12, 12, 3);
        let b = random_image(&mut rng, 12, 12, 3);
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert!(perceptual_diff(&a, &b).unwrap() >= 0.0);
        let (m1, m2) = (rng.random_range(1e-6..0.5), rng.random_range(1e-6..0.5));
        let (lo, hi) = if m1 < m2 { (m1, m2) } else { (m2, m1) };
        if lo < hi {
            prop_assert!(psnr_from_mse(lo, 1.0).db > psnr_from_mse(hi, 1.0).db);
        }
    }

    #[test]
    fn spread_vanishes_only_for_equal_histograms(seed: u64, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_image(&mut rng, 6, 6, 3);
        // pixel shuffles keep every histogram
        let copies: Vec<Image> = (0..n)
            .map(|_| {
                let mut pixels: Vec<&[f64]> = base.samples().chunks(3).collect();
                pixels.shuffle(&mut rng);
                Image::from_samples(6, 6, 3, pixels.concat()).unwrap()
            })
            .collect();
        prop_assert_eq!(histogram_spread(&ImageStack::new("p", copies.clone()).unwrap()), 0.0);
        let mut changed = copies;
        changed[0] = changed[0].map(|v, _| if v < 0.5 { v + 0.5 } else { v - 0.5 });
        prop_assert!(histogram_spread(&ImageStack::new("p", changed).unwrap()) > 0.0);
    }
}
