use std::path::Path;

use equisr::data::{
    bicubic_resize, decode, encode, gen_synthetic, quantize, read_image, sample_patch_pairs,
    write_image, DatasetKind, DatasetSpec,
};
use equisr::filter::phi_bic;
use equisr::group::{rotate_image, Image};
use equisr::Error;
use proptest::prelude::*;

fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.h, a.w, a.c), (b.h, b.w, b.c));
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Non-separable brute force: every output sample is the normalized double
/// sum of widened kernel weights over edge-clamped source pixels.
fn resize_oracle(img: &Image, oh: usize, ow: usize) -> Image {
    let (ry, rx) = (img.h as f64 / oh as f64, img.w as f64 / ow as f64);
    let (wy, wx) = (ry.max(1.0), rx.max(1.0));
    Image::from_fn(oh, ow, img.c, |i, j, ch| {
        let sy = (i as f64 + 0.5) * ry - 0.5;
        let sx = (j as f64 + 0.5) * rx - 0.5;
        let (mut acc, mut norm) = (0.0, 0.0);
        for k in -20i64..(img.h as i64 + 20) {
            for l in -20i64..(img.w as i64 + 20) {
                let w = phi_bic((sy - k as f64) / wy) * phi_bic((sx - l as f64) / wx);
                let (ki, li) = (
                    k.clamp(0, img.h as i64 - 1) as usize,
                    l.clamp(0, img.w as i64 - 1) as usize,
                );
                acc += w * img.get(ki, li, ch);
                norm += w;
            }
        }
        acc / norm
    })
}

#[test]
fn ramp_downscale_matches_direct_summation() {
    let ramp = Image::from_fn(4, 4, 1, |i, j, _| (i * 4 + j) as f64 / 15.0);
    let got = bicubic_resize(&ramp, 2, 2);
    assert!(max_abs_diff(&got, &resize_oracle(&ramp, 2, 2)) <= 1e-10);
    // an upscale and a non-integer ratio through the same oracle
    let img = Image::from_fn(5, 7, 3, |i, j, c| ((i * 7 + j * 3 + c) % 11) as f64 / 10.0);
    assert!(max_abs_diff(&bicubic_resize(&img, 9, 4), &resize_oracle(&img, 9, 4)) <= 1e-10);
}

#[test]
fn identity_resize_is_bit_exact_and_constants_survive() {
    let img = Image::from_fn(6, 5, 3, |i, j, c| ((i + j + c) % 4) as f64 / 3.0);
    assert_eq!(bicubic_resize(&img, 6, 5), img);
    let flat = Image::from_fn(12, 12, 1, |_, _, _| 0.37);
    for (h, w) in [(5, 5), (12, 3), (31, 17)] {
        let y = bicubic_resize(&flat, h, w);
        assert!(y.data.iter().all(|v| (v - 0.37).abs() <= 1e-12));
    }
}

#[test]
fn resize_commutes_with_quarter_turn_for_square_sizes() {
    let img = Image::from_fn(12, 12, 3, |i, j, c| {
        ((i * i + 3 * j + c) % 13) as f64 / 12.0
    });
    let q = std::f64::consts::FRAC_PI_2;
    for n in [4, 5, 18] {
        let a = rotate_image(&bicubic_resize(&img, n, n), q).unwrap();
        let b = bicubic_resize(&rotate_image(&img, q).unwrap(), n, n);
        assert!(max_abs_diff(&a, &b) <= 1e-12, "n={n}");
    }
}

fn spec(kind: DatasetKind) -> DatasetSpec {
    DatasetSpec {
        kind,
        count: 4,
        size: 32,
        ..Default::default()
    }
}

#[test]
fn generators_are_pure_and_in_range() {
    for kind in [
        DatasetKind::Shapes,
        DatasetKind::Stripes,
        DatasetKind::SmoothField,
    ] {
        let s = spec(kind);
        for i in 0..4 {
            let a = gen_synthetic(&s, i).unwrap();
            assert_eq!(a, gen_synthetic(&s, i).unwrap());
            assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)), "{kind:?}");
        }
        assert_ne!(gen_synthetic(&s, 0).unwrap(), gen_synthetic(&s, 1).unwrap());
    }
}

#[test]
fn smooth_field_power_stays_below_cutoff() {
    use std::f64::consts::PI;
    let s = DatasetSpec {
        cutoff: 3,
        ..spec(DatasetKind::SmoothField)
    };
    let n = s.size;
    for idx in 0..2 {
        let img = gen_synthetic(&s, idx).unwrap();
        let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
        let (mut total, mut above) = (0.0, 0.0);
        for ch in 0..img.c {
            for u in 0..n {
                for v in 0..n {
                    let (mut re, mut im) = (0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            let a = -2.0 * PI * (u * i + v * j) as f64 / n as f64;
                            let x = img.get(i, j, ch) - mean;
                            re += x * a.cos();
                            im += x * a.sin();
                        }
                    }
                    let p = re * re + im * im;
                    let fu = u.min(n - u);
                    let fv = v.min(n - v);
                    total += p;
                    if fu.max(fv) > s.cutoff {
                        above += p;
                    }
                }
            }
        }
        assert!(above <= 0.01 * total, "image {idx}: {above} of {total}");
    }
}

#[test]
fn netpbm_header_example_decodes() {
    let mut bytes = b"P6 2 2 255\n".to_vec();
    bytes.extend((0u8..12).map(|b| b * 20));
    let img = decode(&bytes, Path::new("x.ppm")).unwrap();
    assert_eq!((img.h, img.w, img.c), (2, 2, 3));
    assert_eq!(img.get(1, 0, 2), 160.0 / 255.0);
    assert_eq!(quantize(0.5), 128);
}

#[test]
fn malformed_netpbm_reports_offsets() {
    let p = Path::new("bad.ppm");
    let truncated = b"P6 2 2 255\n\x01\x02\x03".to_vec();
    // reported where the data ran out
    assert!(matches!(
        decode(&truncated, p),
        Err(Error::Parse { offset: 14, .. })
    ));
    assert!(matches!(
        decode(b"P6 2 2 65535\n", p),
        Err(Error::Parse { .. })
    ));
    assert!(matches!(
        decode(b"P3 2 2 255\n", p),
        Err(Error::Parse { offset: 0, .. })
    ));
}

fn lattice_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
    Image::from_fn(h, w, c, |i, j, ch| {
        ((i * 31 + j * 17 + ch * 7 + seed as usize) % 256) as f64 / 255.0
    })
}

#[test]
fn lattice_images_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for (c, name) in [(3, "a.ppm"), (1, "b.pgm")] {
        let img = lattice_image(5, 9, c, 3);
        let path = dir.path().join(name);
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }
}

proptest! {
    #[test]
    fn encode_decode_is_bit_exact(h in 1usize..8, w in 1usize..8, gray in any::<bool>(), seed in 0u64..256) {
        let img = lattice_image(h, w, if gray { 1 } else { 3 }, seed);
        let back = decode(&encode(&img).unwrap(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, img);
    }
}

#[test]
fn file_dir_corpus_uses_lexicographic_order() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = [lattice_image(4, 4, 3, 1), lattice_image(4, 4, 3, 2)];
    write_image(dir.path().join("b.ppm"), &imgs[0]).unwrap();
    write_image(dir.path().join("a.ppm"), &imgs[1]).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let s = DatasetSpec {
        kind: DatasetKind::FileDir,
        count: 2,
        dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    assert_eq!(gen_synthetic(&s, 0).unwrap(), imgs[1]);
    assert_eq!(gen_synthetic(&s, 1).unwrap(), imgs[0]);
}

#[test]
fn unit_scale_pairs_have_identical_lr_and_hr() {
    let s = DatasetSpec {
        scale_min: 1.0,
        scale_max: 1.0,
        ..spec(DatasetKind::Shapes)
    };
    for p in sample_patch_pairs(&s, 8, 3, 5).unwrap() {
        assert_eq!(p.lr, p.hr);
        assert_eq!(p.coords.len(), 64);
    }
}

#[test]
fn desk_defaults_produce_documented_shapes() {
    let s = DatasetSpec::default();
    let pairs = sample_patch_pairs(&s, 24, 4, 11).unwrap();
    assert_eq!(pairs, sample_patch_pairs(&s, 24, 4, 11).unwrap());
    assert_eq!(pairs.len(), 4);
    for p in &pairs {
        assert!((2.0..4.0).contains(&p.scale));
        let side = (24.0 * p.scale).round() as usize;
        assert_eq!((p.lr.h, p.lr.w, p.lr.c), (24, 24, 3));
        assert_eq!((p.hr.h, p.hr.w, p.hr.c), (side, side, 3));
        assert_eq!(p.coords.len(), 24 * 24);
        assert_eq!(p.targets.len(), 24 * 24 * 3);
        assert!(p
            .coords
            .iter()
            .all(|x| x[0].abs() < 1.0 && x[1].abs() < 1.0));
    }
}

#[test]
fn oversized_patch_is_a_config_error() {
    let s = spec(DatasetKind::Stripes);
    assert!(matches!(
        sample_patch_pairs(&s, 12, 1, 0),
        Err(Error::Config(_))
    ));
}
