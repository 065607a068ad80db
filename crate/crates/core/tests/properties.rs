use ddm_core::data::{parse_idx, to_idx_bytes, IdxData};
use ddm_core::debias::{entropy, indicator_loss};
use ddm_core::diffusion::{build_schedule, reconstruct_z0};
use ddm_core::metrics::{
    compute_fd, compute_frechet, compute_is, compute_spd, unrecognizable_proportion,
    GroupDistribution,
};
use ddm_core::numerics::Tensor;
use proptest::prelude::*;

fn rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), n)
}

fn prob_rows(n: usize, k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, k), n).prop_map(|rs| {
        rs.into_iter()
            .map(|r| {
                let r: Vec<f64> = r.into_iter().map(|v| v + 1e-3).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frechet_is_symmetric_and_nonnegative(d in 1usize..5, a in rows(12, 4), b in rows(15, 4)) {
        let a: Vec<Vec<f64>> = a.into_iter().map(|r| r[..d].to_vec()).collect();
        let b: Vec<Vec<f64>> = b.into_iter().map(|r| r[..d].to_vec()).collect();
        let ab = compute_frechet(&a, &b).unwrap();
        let ba = compute_frechet(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab.abs()));
        prop_assert!(compute_frechet(&a, &a).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn inception_score_is_at_least_one(r in prob_rows(30, 5), splits in 1usize..4) {
        let (mean, std) = compute_is(&r, splits).unwrap();
        prop_assert!(mean >= 1.0 - 1e-12);
        prop_assert!(std >= 0.0);
    }

    #[test]
    fn fairness_gaps_ignore_group_order(p in 0.0..=1.0f64, r1 in 0.0..=1.0f64, r2 in 0.0..=1.0f64) {
        let fd = compute_fd(&GroupDistribution::binary("a", "b", p).unwrap()).unwrap();
        let swapped = compute_fd(&GroupDistribution::binary("b", "a", 1.0 - p).unwrap()).unwrap();
        prop_assert!((fd - swapped).abs() <= 1e-12);
        prop_assert!((0.0..=0.5).contains(&fd));
        prop_assert_eq!(compute_spd(r1, r2).unwrap(), compute_spd(r2, r1).unwrap());
    }

    #[test]
    fn binary_entropy_is_bounded(p in 0.0..=1.0f64) {
        let h = entropy(&[p, 1.0 - p]).unwrap();
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&h));
        let l = indicator_loss([1.0, 0.0], [p, 1.0 - p]).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
    }

    #[test]
    fn perfect_prediction_reconstructs_input(
        z0 in prop::collection::vec(-5.0..5.0f64, 1..40),
        seed in any::<u64>(),
    ) {
        let n = z0.len();
        let eps: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64 - 500.0) / 100.0).collect();
        let z = Tensor::vector(z0.clone()).unwrap();
        let e = Tensor::vector(eps).unwrap();
        let out = reconstruct_z0(&z, &e, &e).unwrap();
        prop_assert_eq!(out.data(), &z0[..]);
    }

    #[test]
    fn unrecognizable_fraction_is_a_proportion(pairs in prop::collection::vec((0u8..10, 0u8..10), 1..60)) {
        let (p, i): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let u = unrecognizable_proportion(&p, &i).unwrap();
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert_eq!(unrecognizable_proportion(&i, &i).unwrap(), 0.0);
    }

    #[test]
    fn idx_round_trips(count in 1usize..4, r in 1usize..6, c in 1usize..6, bytes in prop::collection::vec(any::<u8>(), 100)) {
        let n = count * r * c;
        let pixels: Vec<f32> = bytes[..n].iter().map(|&b| ddm_core::data::byte_to_pixel(b)).collect();
        let images = IdxData::Images { count, rows: r, cols: c, pixels };
        prop_assert_eq!(parse_idx(&to_idx_bytes(&images)).unwrap(), images);
        let labels = IdxData::Labels(bytes[..n].to_vec());
        prop_assert_eq!(parse_idx(&to_idx_bytes(&labels)).unwrap(), labels);
    }

    #[test]
    fn schedule_is_monotone(steps in 1usize..300, start in 1e-5..0.01f64, extra in 0.0..0.05f64) {
        let sched = build_schedule(steps, start, start + extra).unwrap();
        let ab = sched.alpha_bars();
        prop_assert!(ab.iter().all(|&a| a > 0.0 && a < 1.0));
        prop_assert!(ab.windows(2).all(|w| w[1] < w[0]));
    }
}
