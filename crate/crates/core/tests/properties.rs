use num_rational::Ratio;
use proptest::prelude::*;
use rawpipe::analysis::{bandwidth_report, histogram, shift_metrics};
use rawpipe::cfa::{demosaic_inpixel, demosaic_inpixel_real, mosaic};
use rawpipe::invisp::{
    gamma_decode, gamma_encode, inverse_white_balance, read_checkpoint, white_balance, write_checkpoint,
    InvIspModel, ModelConfig,
};
use rawpipe::netpbm::decode;
use rawpipe::p2m::{expand_weights, fused_conv_real, reference_conv_planes, BayerFrame, ConvSpec};
use rawpipe::pixelsim::{build_schedule, quantize_frame, simulate_readout, PixelArrayConfig};
use rawpipe::{AnyImage, BayerImage, CfaPattern, Channel, Prng, RgbImage, Tensor};

fn pattern() -> impl Strategy<Value = CfaPattern> {
    prop::sample::select(CfaPattern::ALL.to_vec())
}

fn bayer(max_side: usize) -> impl Strategy<Value = BayerImage> {
    (1..=max_side / 2, 1..=max_side / 2, 8u8..=16, pattern(), any::<u64>()).prop_map(|(tw, th, bits, p, seed)| {
        let mut rng = Prng::new(seed);
        let max = 1u64 << bits;
        let data = (0..4 * tw * th).map(|_| rng.next_below(max) as u16).collect();
        BayerImage::new(2 * tw, 2 * th, bits, p, data).unwrap()
    })
}

fn unit_rgb(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = Prng::new(seed);
    let planes = std::array::from_fn(|_| (0..w * h).map(|_| rng.next_real()).collect());
    RgbImage::from_unit(w, h, planes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgm_round_trip(b in bayer(20)) {
        let bytes = rawpipe::netpbm::encode_pgm(&b);
        prop_assert_eq!(decode(&bytes).unwrap(), AnyImage::Bayer(b));
    }

    #[test]
    fn inpixel_tile_formula(b in bayer(24)) {
        let out = demosaic_inpixel(&b);
        let planes = out.code_planes().unwrap();
        let w = b.width() / 2;
        for ty in 0..b.height() / 2 {
            for tx in 0..w {
                let mut g = 0u32;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let (r, c) = (2 * ty + dy, 2 * tx + dx);
                    match b.color_at(r, c) {
                        Channel::Green => g += b.get(r, c) as u32,
                        ch => prop_assert_eq!(planes[ch.index()][ty * w + tx], b.get(r, c)),
                    }
                }
                prop_assert_eq!(planes[1][ty * w + tx] as u32, g >> 1);
            }
        }
    }

    #[test]
    fn mosaic_samples_the_cfa_colour(tw in 1usize..8, th in 1usize..8, p in pattern(), seed in any::<u64>()) {
        let (w, h) = (2 * tw, 2 * th);
        let mut rng = Prng::new(seed);
        let planes: [Vec<u16>; 3] = std::array::from_fn(|_| (0..w * h).map(|_| rng.next_below(256) as u16).collect());
        let rgb = RgbImage::from_codes(w, h, 8, planes.clone()).unwrap();
        let b = mosaic(&rgb, p).unwrap();
        for r in 0..h {
            for c in 0..w {
                prop_assert_eq!(b.get(r, c), planes[p.color_at(r, c).index()][r * w + c]);
            }
        }
    }

    #[test]
    fn ideal_readout_is_quantize_then_demosaic(tw in 1usize..12, th in 1usize..12, p in pattern(), bits in 8u8..=14, seed in any::<u64>()) {
        let config = PixelArrayConfig { pattern: p, bit_depth: bits, ..PixelArrayConfig::new(2 * th, 2 * tw) };
        let trace = build_schedule(&config).unwrap();
        prop_assert_eq!(trace.cycle_count(), 2 * th);
        prop_assert!(trace.read_counts().iter().all(|&c| c == 1));
        let mut rng = Prng::new(seed);
        let v: Vec<f64> = (0..4 * tw * th).map(|_| rng.next_real()).collect();
        prop_assert_eq!(
            simulate_readout(&v, &config).unwrap(),
            demosaic_inpixel(&quantize_frame(&v, &config).unwrap())
        );
    }

    #[test]
    fn fused_equals_reference(tw in 1usize..10, th in 1usize..10, k in prop::sample::select(vec![1usize, 3, 5]),
                              s in 1usize..4, out in 1usize..5, p in pattern(), seed in any::<u64>()) {
        let mut rng = Prng::new(seed);
        let spec = ConvSpec::random(out, k, s, &mut rng).unwrap();
        let (w, h) = (2 * tw, 2 * th);
        let frame = BayerFrame::new(w, h, p, (0..w * h).map(|_| rng.next_real()).collect()).unwrap();
        let got = fused_conv_real(&frame, &expand_weights(&spec, p)).unwrap();
        let planes = demosaic_inpixel_real(&frame.data, w, h, p).unwrap();
        let want = reference_conv_planes(&planes, tw, th, &spec).unwrap();
        prop_assert_eq!(got.dims(), want.dims());
        prop_assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn fused_conv_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = Prng::new(seed);
        let mut spec = ConvSpec::random(2, 3, 2, &mut rng).unwrap();
        spec.bias = Tensor::zeros(vec![2]);
        let fused = expand_weights(&spec, CfaPattern::Rggb);
        let x: Vec<f64> = (0..64).map(|_| rng.next_real()).collect();
        let y: Vec<f64> = (0..64).map(|_| rng.next_real()).collect();
        let run = |d: Vec<f64>| fused_conv_real(&BayerFrame::new(8, 8, CfaPattern::Rggb, d).unwrap(), &fused).unwrap();
        let combined = run(x.iter().zip(&y).map(|(u, v)| a * u + v).collect());
        let (fx, fy) = (run(x), run(y));
        for ((c, u), v) in combined.data().iter().zip(fx.data()).zip(fy.data()) {
            prop_assert!((c - (a * u + v)).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_greens_changes_nothing(seed in any::<u64>(), p in pattern()) {
        let mut rng = Prng::new(seed);
        let spec = ConvSpec::random(3, 3, 1, &mut rng).unwrap();
        let fused = expand_weights(&spec, p);
        let data: Vec<f64> = (0..36).map(|_| rng.next_real()).collect();
        let off = p.offsets();
        let mut swapped = data.clone();
        for ty in 0..3 {
            for tx in 0..3 {
                let at = |(r, c): (usize, usize)| (2 * ty + r) * 6 + 2 * tx + c;
                swapped.swap(at(off.greens[0]), at(off.greens[1]));
            }
        }
        let a = fused_conv_real(&BayerFrame::new(6, 6, p, data).unwrap(), &fused).unwrap();
        let b = fused_conv_real(&BayerFrame::new(6, 6, p, swapped).unwrap(), &fused).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn histogram_conserves_counts(b in bayer(16), bins in 2usize..64) {
        let h = histogram(&b, bins).unwrap();
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert!(h.edges.windows(2).all(|e| e[0] < e[1]));
        let total: u64 = h.planes.iter().map(|p| p.total()).sum();
        prop_assert_eq!(total, (b.width() * b.height()) as u64);
    }

    #[test]
    fn intersection_is_symmetric(s1 in any::<u64>(), s2 in any::<u64>(), bins in 2usize..32) {
        let a = histogram(&unit_rgb(6, 4, s1), bins).unwrap();
        let b = histogram(&unit_rgb(6, 4, s2), bins).unwrap();
        let (ab, ba) = (shift_metrics(&a, &b).unwrap(), shift_metrics(&b, &a).unwrap());
        prop_assert_eq!(&ab.intersection, &ba.intersection);
        prop_assert!(ab.intersection.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn element_ratio_is_four_thirds(tw in 1usize..2000, th in 1usize..2000, bits in 1u8..=16) {
        let r = bandwidth_report(2 * tw, 2 * th, bits, None, 8).unwrap();
        prop_assert_eq!(r.element_ratio, Ratio::new(4, 3));
        for s in &r.stages {
            prop_assert_eq!(s.bits_per_frame, s.elements * s.bits_per_element);
        }
    }

    #[test]
    fn white_balance_round_trip(seed in any::<u64>(), g in prop::array::uniform3(0.1f64..4.0)) {
        let img = unit_rgb(5, 3, seed);
        let back = inverse_white_balance(&white_balance(&img, g).unwrap(), g).unwrap();
        for (a, b) in img.unit_planes().unwrap().iter().flatten().zip(back.unit_planes().unwrap().iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_round_trip(v in 0.0f64..=1.0, gamma in 0.5f64..4.0) {
        prop_assert!((gamma_decode(gamma_encode(v, gamma).unwrap(), gamma).unwrap() - v).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_round_trip(seed in any::<u64>(), blocks in 1usize..4, th in 1usize..5, tw in 1usize..5) {
        let config = ModelConfig { blocks, hidden: 4, ..ModelConfig::default() };
        let model = InvIspModel::random(config, seed, 0.5).unwrap();
        let img = unit_rgb(2 * tw, 2 * th, seed ^ 1);
        let back = model.model_inverse(&model.model_forward(&img).unwrap()).unwrap();
        for (a, b) in img.unit_planes().unwrap().iter().flatten().zip(back.unit_planes().unwrap().iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), blocks in 1usize..3) {
        let config = ModelConfig { blocks, hidden: 3, ..ModelConfig::default() };
        let model = InvIspModel::random(config, seed, 0.5).unwrap();
        let bytes = write_checkpoint(&model);
        let back = read_checkpoint(&bytes).unwrap();
        prop_assert_eq!(back.flatten_params(), model.flatten_params());
        prop_assert_eq!(write_checkpoint(&back), bytes);
    }
}
