use hdrsr_core::image::{
    bicubic_resize, decode_rgbe, encode_rgbe, gamma_map, read_hdr_image, read_ldr_image,
    rgb_to_ycbcr, write_hdr_image, write_ldr_image, PixelRange, Plane, RasterImage,
};
use proptest::prelude::*;

fn plane_strategy(max: usize, lo: f64, hi: f64) -> impl Strategy<Value = Plane> {
    (1..=max, 1..=max).prop_flat_map(move |(h, w)| {
        prop::collection::vec(lo..hi, h * w).prop_map(move |d| Plane::new(h, w, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ycbcr_round_trip(pixels in prop::collection::vec(prop::array::uniform3(0.0f64..=1.0), 1..200)) {
        let n = pixels.len();
        let data: Vec<f64> = pixels.iter().flatten().copied().collect();
        let img = RasterImage::ldr(1, n, 3, data.clone()).unwrap();
        let (y, cb, cr) = rgb_to_ycbcr(&img).unwrap();
        let back = hdrsr_core::image::ycbcr_to_rgb(&y, &cb, &cr).unwrap();
        for (a, b) in back.data().iter().zip(&data) {
            prop_assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn gamma_round_trip(p in plane_strategy(8, 0.0, 1.0)) {
        let back = gamma_map(&gamma_map(&p, 2.2).unwrap(), 1.0 / 2.2).unwrap();
        for (a, b) in back.data().iter().zip(p.data()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn bicubic_constant_preserved(h in 1usize..12, w in 1usize..12, v in -3.0f64..3.0, up in prop::bool::ANY) {
        let scale = if up { 2.0 } else { 0.5 };
        let out = bicubic_resize(&Plane::filled(h, w, v), scale).unwrap();
        prop_assert!(out.data().iter().all(|&x| x == v));
    }

    #[test]
    fn rgbe_relative_error(rgb in prop::array::uniform3(0.0f64..1e4), tiny in 1e-3f64..1.0) {
        let rgb = [rgb[0] * tiny, rgb[1], rgb[2] * tiny];
        let back = decode_rgbe(encode_rgbe(rgb).unwrap());
        let max = rgb.iter().copied().fold(0.0, f64::max);
        for (a, b) in back.iter().zip(&rgb) {
            // the shared exponent quantizes each channel relative to the largest one
            prop_assert!((a - b).abs() <= max / 256.0);
        }
    }
}

#[test]
fn png_round_trip_is_identity_on_8_bit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..3 * 16 * 16).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
    for (c, name) in [(3usize, "rgb.png"), (1, "gray.png")] {
        let img = RasterImage::ldr(16, 16 * 3 / c, c, data.clone()).unwrap();
        let path = dir.path().join(name);
        write_ldr_image(&img, &path).unwrap();
        assert_eq!(read_ldr_image(&path).unwrap(), img);
    }
}

#[test]
fn hdr_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..3 * 10 * 12).map(|i| 0.01 * (1.0 + i as f64).powf(1.5)).collect();
    let img = RasterImage::new(10, 12, 3, PixelRange::Hdr, data).unwrap();
    let path = dir.path().join("x.hdr");
    write_hdr_image(&img, &path).unwrap();
    let back = read_hdr_image(&path).unwrap();
    for (px, qx) in img.data().chunks(3).zip(back.data().chunks(3)) {
        let max = px.iter().copied().fold(0.0, f64::max);
        for (a, b) in px.iter().zip(qx) {
            assert!((a - b).abs() <= max / 256.0);
        }
    }
}
