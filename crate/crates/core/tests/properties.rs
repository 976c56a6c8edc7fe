mod common;

use std::collections::BTreeSet;

use nilm::metrics::{energy_share, mae, nde, sae, ApplianceResult};
use nilm::nn::{conv1d_forward, LayerParams, Padding, Tensor};
use nilm::powerdata::{align, resample, split_on_gaps, PowerSeries};
use nilm::windowing::{denormalize, normalize, pad_and_window, NormalizationParams};
use proptest::prelude::*;

/// Irregular series: strictly increasing timestamps with steps in 1..=40 s.
fn series(period: i64) -> impl Strategy<Value = PowerSeries> {
    prop::collection::vec((1i64..=40, 0.0f64..3000.0), 1..200).prop_map(move |steps| {
        let mut t = 0;
        let (mut ts, mut vs) = (Vec::new(), Vec::new());
        for (dt, v) in steps {
            t += dt;
            ts.push(t);
            vs.push(v.round());
        }
        PowerSeries::new(ts, vs, period, "x").unwrap()
    })
}

fn values_of(s: &PowerSeries) -> BTreeSet<u64> {
    s.values().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #[test]
    fn resample_is_idempotent(s in series(1), p in 1i64..30) {
        let once = resample(&s, p).unwrap();
        prop_assert_eq!(resample(&once, p).unwrap(), once);
    }

    #[test]
    fn resample_and_split_invent_no_values(s in series(1), p in 2i64..30, gap_factor in 2i64..10) {
        let input = values_of(&s);
        let r = resample(&s, p).unwrap();
        prop_assert!(values_of(&r).is_subset(&input));
        let segments = split_on_gaps(&r, p * gap_factor).unwrap();
        let mut all_ts = Vec::new();
        for seg in &segments {
            prop_assert!(values_of(seg).is_subset(&input));
            all_ts.extend_from_slice(seg.timestamps());
        }
        // Every timestamp lies on the resampled grid.
        let t0 = r.timestamps()[0];
        prop_assert!(all_ts.iter().all(|t| (t - t0) % p == 0));
        prop_assert!(all_ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn align_is_symmetric(a in series(1), b in series(1), p in 1i64..10) {
        let (ra, rb) = (resample(&a, p).unwrap(), resample(&b, p).unwrap());
        match (align(&ra, &rb), align(&rb, &ra)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.mains().timestamps(), y.mains().timestamps());
                prop_assert_eq!(x.mains().values(), y.appliance().values());
                prop_assert_eq!(x.appliance().values(), y.mains().values());
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "align is not symmetric"),
        }
    }

    #[test]
    fn one_window_per_sample_centred(seq in prop::collection::vec(-5.0f64..5.0, 1..120), half in 0usize..20) {
        let w = 2 * half + 1;
        let windows = pad_and_window(&seq, w).unwrap();
        prop_assert_eq!(windows.shape(), &[seq.len(), w][..]);
        for (i, x) in seq.iter().enumerate() {
            prop_assert_eq!(windows.data()[i * w + half], *x);
        }
    }

    #[test]
    fn normalization_round_trips(x in prop::collection::vec(0.0f64..4000.0, 1..50), mean in 0.0f64..1000.0, std in 1.0f64..2000.0) {
        let p = NormalizationParams::new(mean, std).unwrap();
        let back = denormalize(&normalize(&x, &p), &p, false);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_match_loop_oracles(pairs in prop::collection::vec((0.0f64..2000.0, 0.1f64..2000.0), 1..300)) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(common::rel_err(mae(&pred, &truth).unwrap(), common::mae_oracle(&pred, &truth)) < 1e-9);
        prop_assert!(common::rel_err(sae(&pred, &truth).unwrap(), common::sae_oracle(&pred, &truth)) < 1e-9);
        prop_assert!(common::rel_err(nde(&pred, &truth).unwrap(), common::nde_oracle(&pred, &truth)) < 1e-9);
    }

    #[test]
    fn mae_detects_translation(
        truth in prop::collection::vec(0.0f64..2000.0, 1..100),
        excess in prop::collection::vec(0.0f64..100.0, 100),
        c in 0.01f64..500.0,
    ) {
        let pred: Vec<f64> = truth.iter().zip(&excess).map(|(t, e)| t + e).collect();
        let shifted: Vec<f64> = pred.iter().map(|p| p + c).collect();
        prop_assert!(mae(&shifted, &truth).unwrap() > mae(&pred, &truth).unwrap());
    }

    #[test]
    fn energy_shares_sum_to_one(totals in prop::collection::vec(prop::collection::vec(0.0f64..500.0, 20), 1..6)) {
        prop_assume!(totals.iter().flatten().any(|v| *v > 0.0));
        let results: Vec<ApplianceResult> = totals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let s = PowerSeries::regular(0, 8, v.clone(), format!("a{i}")).unwrap();
                ApplianceResult::new(s.clone(), s)
            })
            .collect();
        let share = energy_share(&results).unwrap();
        prop_assert!((share.actual_share.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(share.actual_share, share.predicted_share);
    }

    #[test]
    fn conv_matches_oracle(
        len in 1usize..40,
        c_in in 1usize..4,
        filters in 1usize..5,
        kernel in 1usize..8,
        same in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let padding = if same { Padding::Same } else { Padding::Valid };
        prop_assume!(same || kernel <= len);
        let mut rng = common::rng(seed);
        let x = common::random_vec(&mut rng, len * c_in, -1.0, 1.0);
        let w = common::random_vec(&mut rng, kernel * c_in * filters, -1.0, 1.0);
        let b = common::random_vec(&mut rng, filters, -1.0, 1.0);
        let params = LayerParams {
            weight: Tensor::new(vec![kernel, c_in, filters], w.clone()).unwrap(),
            bias: Tensor::new(vec![filters], b.clone()).unwrap(),
        };
        let out = conv1d_forward(&Tensor::new(vec![len, c_in], x.clone()).unwrap(), &params, padding).unwrap();
        let rows: Vec<Vec<f64>> = x.chunks(c_in).map(<[f64]>::to_vec).collect();
        let oracle = common::conv_oracle(&rows, &w, &b, kernel, padding).concat();
        prop_assert_eq!(out.data().len(), oracle.len());
        for (a, o) in out.data().iter().zip(&oracle) {
            prop_assert!((a - o).abs() <= 1e-12 * o.abs().max(1.0));
        }
    }
}
