mod common;

use common::{blank_oracle, overlap_oracle, random_record};
use multimask::masks::{blank_mask, combine, overlap_mask, repeated_masking_records};
use multimask::metrics::{ate_snippets, depth_metrics, DepthEvalConfig};
use multimask::{DepthMap, Mask, PoseSE3, Twist};
use nalgebra::Vector3;
use proptest::prelude::*;

fn subset(a: &Mask, b: &Mask) -> bool {
    a.bits().iter().zip(b.bits()).all(|(&x, &y)| !x || y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn overlap_matches_oracle_and_is_idempotent(seed in any::<u64>(), w in 3usize..14, h in 3usize..12) {
        let (rec, active) = random_record(w, h, seed);
        let once = overlap_mask(&rec, (w, h), &active).unwrap();
        prop_assert_eq!(&once, &overlap_oracle(&rec, &active));
        prop_assert_eq!(overlap_mask(&rec, (w, h), &once).unwrap(), once);
    }

    #[test]
    fn blank_matches_oracle(seed in any::<u64>(), w in 3usize..14, h in 3usize..12) {
        let (rec, active) = random_record(w, h, seed);
        prop_assert_eq!(blank_mask(&rec, (w, h), &active).unwrap(), blank_oracle(&rec, (w, h), &active));
    }

    #[test]
    fn extra_rounds_never_unmask(seed in any::<u64>(), rounds in 1usize..4) {
        let (w, h) = (10, 8);
        let (rec_t, _) = random_record(w, h, seed);
        let (rec_tm1, _) = random_record(w, h, seed ^ 0x5555);
        let (a_t, a_tm1, _) = repeated_masking_records(&rec_t, &rec_tm1, (w, h), rounds).unwrap();
        let (b_t, b_tm1, _) = repeated_masking_records(&rec_t, &rec_tm1, (w, h), rounds + 1).unwrap();
        prop_assert!(subset(&combine(&b_t), &combine(&a_t)));
        prop_assert!(subset(&combine(&b_tm1), &combine(&a_tm1)));
    }

    #[test]
    fn delta_accuracies_are_ordered(
        gt in proptest::collection::vec(0.5f64..70.0, 24),
        ratio in proptest::collection::vec(0.2f64..5.0, 24),
        median_scale in any::<bool>(),
    ) {
        let pred: Vec<f64> = gt.iter().zip(&ratio).map(|(g, r)| g * r).collect();
        let gt = DepthMap::from_vec(6, 4, gt).unwrap();
        let pred = DepthMap::from_vec(6, 4, pred).unwrap();
        let cfg = DepthEvalConfig { cap: 80.0, median_scale };
        let m = depth_metrics(&pred, &gt, &Mask::ones(6, 4), &cfg).unwrap();
        prop_assert!(0.0 <= m.delta1 && m.delta1 <= m.delta2 && m.delta2 <= m.delta3 && m.delta3 <= 1.0);
        prop_assert!(m.abs_rel >= 0.0 && m.rmse >= 0.0);
    }

    #[test]
    fn ate_ignores_global_rigid_motion_and_scale(
        steps in proptest::collection::vec(proptest::array::uniform6(-0.3f64..0.3), 6),
        noise in proptest::collection::vec(proptest::array::uniform3(-0.02f64..0.02), 6),
        g in proptest::array::uniform6(-1.0f64..1.0),
        scale in 0.2f64..5.0,
    ) {
        let mut gt = vec![PoseSE3::identity()];
        for s in &steps[1..] {
            let next = gt.last().unwrap().compose(&PoseSE3::exp(&Twist(*s)));
            gt.push(next);
        }
        let pred: Vec<PoseSE3> = gt
            .iter()
            .zip(&noise)
            .map(|(p, n)| PoseSE3::from_translation(Vector3::from(*n)).compose(p))
            .collect();
        let global = PoseSE3::exp(&Twist(g));
        let moved: Vec<PoseSE3> = pred
            .iter()
            .map(|p| {
                let scaled = PoseSE3::new(*p.rotation(), p.translation() * scale).unwrap();
                global.compose(&scaled)
            })
            .collect();
        let a = ate_snippets(&pred, &gt, 3).unwrap();
        let b = ate_snippets(&moved, &gt, 3).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-9 && (a.std - b.std).abs() < 1e-9);
    }
}
