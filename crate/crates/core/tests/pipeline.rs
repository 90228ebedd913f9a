use hdrsr_core::image::{luminance_plane, rgb_to_ycbcr, PixelRange, RasterImage};
use hdrsr_core::pipeline::{infer, reinhard_tonemap, PipelineConfig};
use hdrsr_core::refnet::{build_refnet, RefNet, RefNetConfig};
use hdrsr_core::Error;
use proptest::prelude::*;

fn net(seed: u64) -> RefNet {
    build_refnet(&RefNetConfig::small(4, 2), seed).unwrap()
}

fn image(h: usize, w: usize, seed: u64, gray: bool) -> RasterImage {
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let t = (seed as f64) * 0.7;
            let v = 0.5 + 0.45 * ((x as f64 * 0.4 + t).sin() * (y as f64 * 0.3 - t).cos());
            if gray {
                data.extend_from_slice(&[v, v, v]);
            } else {
                data.extend_from_slice(&[v, (1.0 - v) * 0.8, 0.3 + 0.2 * v]);
            }
        }
    }
    RasterImage::ldr(h, w, 3, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn resolution_range_and_positivity(h in 3usize..21, w in 3usize..21, seed in 0u64..100) {
        let out = infer(&image(h, w, seed, false), &net(seed), &PipelineConfig::default()).unwrap();
        for img in [&out.hdr, &out.ldr] {
            prop_assert_eq!((img.height(), img.width(), img.channels()), (2 * h, 2 * w, 3));
        }
        prop_assert!(out.hdr.data().iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!(out.ldr.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(luminance_plane(&out.hdr).data().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn grayscale_chroma_passes_through(h in 4usize..17, w in 4usize..17, seed in 0u64..100) {
        let out = infer(&image(h, w, seed, true), &net(seed), &PipelineConfig::default()).unwrap();
        let gamma = PipelineConfig::default().gamma_final;
        let encoded = out.hdr.map(PixelRange::Hdr, |v| v.powf(1.0 / gamma)).unwrap();
        let (_, cb, cr) = rgb_to_ycbcr(&encoded).unwrap();
        for v in cb.data().iter().chain(cr.data()) {
            prop_assert!((v - 0.5).abs() <= 1e-5);
        }
    }
}

#[test]
fn zero_final_layer_gives_enhanced_illumination() {
    let mut g = net(1);
    g.zero_final_layer();
    let out = infer(&image(16, 12, 2, false), &g, &PipelineConfig::default()).unwrap();
    assert!(out.reflectance_hh.data().iter().all(|&r| r == 0.0));
    for (y, i) in out.luminance_hh.data().iter().zip(out.illumination_hh.data()) {
        assert!((y - i).abs() <= 1e-6);
    }
}

#[test]
fn deterministic_outputs() {
    let img = image(10, 14, 3, false);
    let a = infer(&img, &net(5), &PipelineConfig::default()).unwrap();
    let b = infer(&img, &net(5), &PipelineConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_channel_input_is_accepted() {
    let rgb = image(8, 8, 4, true);
    let gray = RasterImage::from_planes(&[&rgb.channel(0)], PixelRange::Ldr).unwrap();
    let a = infer(&gray, &net(2), &PipelineConfig::default()).unwrap();
    let b = infer(&rgb, &net(2), &PipelineConfig::default()).unwrap();
    assert_eq!(a.hdr, b.hdr);
}

#[test]
fn hdr_input_is_rejected() {
    let img = RasterImage::hdr(4, 4, 3, vec![2.0; 48]).unwrap();
    assert!(matches!(infer(&img, &net(0), &PipelineConfig::default()), Err(Error::Range(_))));
}

#[test]
fn reinhard_monotone_in_luminance() {
    let values: Vec<f64> = (0..40).map(|i| 0.001 * (1.3f64).powi(i)).collect();
    let hdr = RasterImage::hdr(1, values.len(), 1, values).unwrap();
    let out = reinhard_tonemap(&hdr, 0.18).unwrap();
    for w in out.data().windows(2) {
        assert!(w[0] <= w[1]);
    }
    assert!((out.data().last().unwrap() - 1.0).abs() < 1e-12);
}
