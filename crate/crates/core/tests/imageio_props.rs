mod common;

use common::random_image;
use fer_core::imageio::{
    center_crop, decode_pgm, encode_pgm, read_pgm, resize_bilinear, write_pgm, GrayImage,
};
use fer_core::linalg::Rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encode_then_decode_is_identity(seed in any::<u64>(), w in 1usize..40, h in 1usize..40) {
        let img = random_image(&mut Rng::new(seed), w, h, 255);
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn resize_of_constant_is_constant(v in any::<u8>(), w in 1usize..20, h in 1usize..20, tw in 1usize..40, th in 1usize..40) {
        let img = GrayImage::from_fn(w, h, |_, _| v);
        let out = resize_bilinear(&img, tw, th).unwrap();
        prop_assert_eq!((out.width(), out.height()), (tw, th));
        prop_assert!(out.pixels().iter().all(|&p| p == v));
    }

    #[test]
    fn resize_stays_within_source_range(seed in any::<u64>(), w in 1usize..20, h in 1usize..20, tw in 1usize..40, th in 1usize..40) {
        let img = random_image(&mut Rng::new(seed), w, h, 255);
        let lo = *img.pixels().iter().min().unwrap() as i32;
        let hi = *img.pixels().iter().max().unwrap() as i32;
        let out = resize_bilinear(&img, tw, th).unwrap();
        for &p in out.pixels() {
            prop_assert!((lo - 1..=hi + 1).contains(&(p as i32)));
        }
    }

    #[test]
    fn crop_takes_the_central_window(seed in any::<u64>(), w in 1usize..30, h in 1usize..30, cw in 1usize..30, ch in 1usize..30) {
        prop_assume!(cw <= w && ch <= h);
        let img = random_image(&mut Rng::new(seed), w, h, 255);
        let out = center_crop(&img, cw, ch).unwrap();
        let (x0, y0) = ((w - cw) / 2, (h - ch) / 2);
        for y in 0..ch {
            for x in 0..cw {
                prop_assert_eq!(out.get(x, y), img.get(x0 + x, y0 + y));
            }
        }
    }
}

#[test]
fn random_16x16_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.pgm");
    let img = random_image(&mut Rng::new(16), 16, 16, 255);
    write_pgm(&path, &img).unwrap();
    assert_eq!(read_pgm(&path).unwrap(), img);
}

#[test]
fn missing_file_names_the_path() {
    let err = read_pgm(std::path::Path::new("/nonexistent/face.pgm")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/face.pgm"), "{err}");
}
