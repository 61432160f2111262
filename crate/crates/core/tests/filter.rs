use equisr::autodiff::Padding;
use equisr::filter::{group_conv, lifting_conv, synthesize_kernel, ParamFilter};
use equisr::group::{
    rotate_feature, rotate_image, rotation_matrix, GroupFeatureMap, Image, RotationGroup,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_filter(
    rng: &mut ChaCha8Rng,
    c_out: usize,
    g_in: usize,
    c_in: usize,
    p: usize,
) -> ParamFilter {
    let n = c_out * g_in * c_in * p * p;
    ParamFilter::new(
        c_out,
        g_in,
        c_in,
        p,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, c: usize) -> Image {
    Image::from_fn(h, h, c, |_, _, _| rng.gen_range(-1.0..1.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn identity_synthesis_reproduces_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [3, 5, 7] {
        let f = random_filter(&mut rng, 2, 3, 2, p);
        let k = synthesize_kernel(&f, &rotation_matrix(0.0)).unwrap();
        assert!(max_abs_diff(k.data(), &f.coeffs) <= 1e-12);
    }
}

#[test]
fn quarter_turn_synthesis_is_a_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in [3, 5, 7] {
        let f = random_filter(&mut rng, 2, 1, 3, p);
        let k = synthesize_kernel(&f, &rotation_matrix(std::f64::consts::FRAC_PI_2)).unwrap();
        let c = p - 1;
        let pp = p * p;
        for (blk, (src, got)) in f.coeffs.chunks(pp).zip(k.data().chunks(pp)).enumerate() {
            for r in 0..p {
                for s in 0..p {
                    // counter-clockwise turn of the grid with y pointing up
                    let want = src[s * p + (c - r)];
                    assert!(
                        (got[r * p + s] - want).abs() <= 1e-12,
                        "p={p} block={blk} ({r},{s})"
                    );
                }
            }
        }
    }
}

#[test]
fn lifting_with_trivial_group_is_plain_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = random_image(&mut rng, 7, 2);
    let f = random_filter(&mut rng, 1, 1, 2, 3);
    let g = RotationGroup::new(1).unwrap();
    let out = lifting_conv(&img, &f, &g, Padding::Valid).unwrap();
    assert_eq!((out.h, out.w), (5, 5));
    for i in 0..5 {
        for j in 0..5 {
            let mut want = 0.0;
            for c in 0..2 {
                for r in 0..3 {
                    for s in 0..3 {
                        want += f.coeffs[(c * 3 + r) * 3 + s] * img.get(i + r, j + s, c);
                    }
                }
            }
            assert!((out.get(i, j, 0, 0) - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn symmetric_filter_gives_identical_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let img = random_image(&mut rng, 9, 1);
    let f = ParamFilter::new(1, 1, 1, 3, vec![0.3; 9]).unwrap();
    let g = RotationGroup::new(4).unwrap();
    let out = lifting_conv(&img, &f, &g, Padding::Same).unwrap();
    for k in 1..4 {
        assert!(max_abs_diff(&out.slot(k).data, &out.slot(0).data) <= 1e-12);
    }
}

#[test]
fn pointwise_group_conv_by_hand() {
    // t = 2, one channel, one pixel: out_A = Σ_B W^{A^{-1}B} h_B
    let g = RotationGroup::new(2).unwrap();
    let (a, b) = (0.7, -1.3);
    let f = ParamFilter::new(1, 2, 1, 1, vec![a, b]).unwrap();
    let (h0, h1) = (2.0, 5.0);
    let x = GroupFeatureMap::from_vec(1, 1, 1, 2, vec![h0, h1]).unwrap();
    let y = group_conv(&x, &f, &g, Padding::Valid).unwrap();
    assert!((y.get(0, 0, 0, 0) - (a * h0 + b * h1)).abs() <= 1e-15);
    assert!((y.get(0, 0, 0, 1) - (b * h0 + a * h1)).abs() <= 1e-15);
}

#[test]
fn identity_group_filter_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = RotationGroup::new(4).unwrap();
    let x = GroupFeatureMap::from_vec(
        6,
        6,
        2,
        4,
        (0..6 * 6 * 2 * 4)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let p = 3;
    let mut coeffs = vec![0.0; 2 * 4 * 2 * p * p];
    for c in 0..2 {
        // output c, group index 0, input c, center node
        coeffs[((c * 4) * 2 + c) * p * p + 4] = 1.0;
    }
    let f = ParamFilter::new(2, 4, 2, p, coeffs).unwrap();
    let y = group_conv(&x, &f, &g, Padding::Same).unwrap();
    assert!(max_abs_diff(&y.data, &x.data) <= 1e-15);
}

#[test]
fn group_order_mismatch_is_rejected() {
    let g = RotationGroup::new(4).unwrap();
    let x = GroupFeatureMap::zeros(3, 3, 1, 2);
    let f = ParamFilter::new(1, 4, 1, 1, vec![1.0; 4]).unwrap();
    assert!(matches!(
        group_conv(&x, &f, &g, Padding::Same),
        Err(equisr::Error::GroupMismatch { .. })
    ));
}

#[test]
fn lifting_channel_mismatch_is_rejected() {
    let g = RotationGroup::new(4).unwrap();
    let f = ParamFilter::new(1, 1, 2, 3, vec![0.0; 18]).unwrap();
    assert!(matches!(
        lifting_conv(&Image::zeros(4, 4, 3), &f, &g, Padding::Same),
        Err(equisr::Error::Shape(_))
    ));
}

#[test]
fn right_angle_layers_are_exactly_equivariant() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for t in [1, 2, 4] {
            let g = RotationGroup::new(t).unwrap();
            let img = random_image(&mut rng, 11, 2);
            let lift = random_filter(&mut rng, 3, 1, 2, 5);
            let grp = random_filter(&mut rng, 2, t, 3, 5);
            for pad in [Padding::Same, Padding::Valid] {
                let y = lifting_conv(&img, &lift, &g, pad).unwrap();
                let z = group_conv(&y, &grp, &g, pad).unwrap();
                for k in 0..t {
                    let ry = lifting_conv(&rotate_image(&img, g.angle(k)).unwrap(), &lift, &g, pad)
                        .unwrap();
                    let want = rotate_feature(&y, &g, k).unwrap();
                    assert!(
                        max_abs_diff(&ry.data, &want.data) <= 1e-10,
                        "lifting t={t} k={k}"
                    );
                    let rz = group_conv(&want, &grp, &g, pad).unwrap();
                    let want_z = rotate_feature(&z, &g, k).unwrap();
                    assert!(
                        max_abs_diff(&rz.data, &want_z.data) <= 1e-10,
                        "group t={t} k={k}"
                    );
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthesis_is_linear(seed in any::<u64>(), angle in -3.2f64..3.2, alpha in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_filter(&mut rng, 1, 2, 2, 5);
        let g = random_filter(&mut rng, 1, 2, 2, 5);
        let mix = ParamFilter::new(1, 2, 2, 5, f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| alpha * a + b).collect()).unwrap();
        let a = rotation_matrix(angle);
        let kf = synthesize_kernel(&f, &a).unwrap();
        let kg = synthesize_kernel(&g, &a).unwrap();
        let km = synthesize_kernel(&mix, &a).unwrap();
        let want: Vec<f64> = kf.data().iter().zip(kg.data()).map(|(x, y)| alpha * x + y).collect();
        prop_assert!(max_abs_diff(km.data(), &want) <= 1e-13);
    }
}
