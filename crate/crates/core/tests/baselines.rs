use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solarcast::baselines::{peen_forecast, BaselineError, ChpModel, McmModel};
use solarcast::dist::Predictive;

fn alternating(n: usize) -> Vec<Option<f64>> {
    (0..n).map(|i| Some(if i % 2 == 0 { 0.1 } else { 0.9 })).collect()
}

#[test]
fn alternating_sequence_gives_permutation_matrix() {
    let m = McmModel::fit(&[alternating(40)], 2, 1).unwrap();
    assert_eq!(m.transition, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    // from state 0 all mass sits uniformly on the upper bin
    let f = m.forecast(0.1).unwrap();
    assert_eq!(f.weights(), &[0.0, 1.0]);
    assert_eq!(f.edges(), &[0.1, 0.5, 0.9]);
    assert!((f.cdf(0.7) - 0.5).abs() < 1e-15);
    assert_eq!(f.cdf(0.5), 0.0);
    // two steps ahead the chain returns
    let m2 = McmModel::fit(&[alternating(40)], 2, 2).unwrap();
    assert_eq!(m2.transition, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn iid_uniform_rows_approach_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let day: Vec<Option<f64>> = (0..100_000).map(|_| Some(rng.gen_range(0.0..1.0))).collect();
    let m = McmModel::fit(&[day], 5, 1).unwrap();
    for row in &m.transition {
        for &w in row {
            assert!((w - 0.2).abs() < 0.02, "{w}");
        }
    }
}

#[test]
fn days_do_not_link() {
    // each day alone is constant; linking the days would create 0.2 -> 0.8 pairs
    let days = vec![vec![Some(0.2); 5], vec![Some(0.8); 5]];
    let m = McmModel::fit(&days, 2, 1).unwrap();
    assert_eq!(m.transition, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn mcm_errors() {
    assert_eq!(McmModel::fit(&[alternating(4)], 1, 1).unwrap_err(), BaselineError::TooFewStates(1));
    assert_eq!(McmModel::fit(&[vec![None; 4]], 3, 1).unwrap_err(), BaselineError::EmptyTraining);
    assert_eq!(McmModel::fit(&[vec![Some(0.5); 4]], 3, 1).unwrap_err(), BaselineError::DegenerateRange);
}

fn t(minutes: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 6, 1, 0, 0, 0).unwrap() + Duration::minutes(minutes)
}

#[test]
fn constant_sky_gives_point_mass() {
    let times: Vec<DateTime<Utc>> = (0..7 * 288).map(|i| t(5 * i)).collect();
    let values = vec![0.8; times.len()];
    let m = ChpModel::fit(&times, &values, 5).unwrap();
    let f = m.forecast(t(365 * 1440 + 600)).unwrap();
    for y in [0.0, 0.5, 0.8, 1.1] {
        assert!((f.crps(y) - (0.8f64 - y).abs()).abs() < 1e-12);
    }
}

#[test]
fn chp_empty_slot_and_nearest() {
    let m = ChpModel::fit(&[t(60), t(120)], &[0.3, 0.6], 5).unwrap();
    assert_eq!(m.forecast(t(90)).unwrap_err(), BaselineError::EmptyBucket(18));
    // 90 is equidistant from 60 and 120: the earlier slot wins
    assert_eq!(m.forecast_nearest(t(90)).unwrap().samples(), &[0.3]);
    assert_eq!(m.forecast_nearest(t(100)).unwrap().samples(), &[0.6]);
    assert_eq!(ChpModel::fit(&[t(0)], &[0.1], 7).unwrap_err(), BaselineError::InvalidSlot(7));
}

#[test]
fn peen_needs_members() {
    assert_eq!(
        peen_forecast(&[None, Some(0.4), None], 2).unwrap_err(),
        BaselineError::InsufficientHistory { have: 1, need: 2 }
    );
    let f = peen_forecast(&[Some(0.4), None, Some(0.6)], 2).unwrap();
    assert_eq!(f.samples(), &[0.4, 0.6]);
}

proptest! {
    #[test]
    fn mcm_rows_are_stochastic(
        days in prop::collection::vec(prop::collection::vec(prop::option::of(0.0..1.2f64), 2..60), 1..6),
        n_states in 2usize..40,
        horizon in 1usize..6,
    ) {
        let Ok(m) = McmModel::fit(&days, n_states, horizon) else { return Ok(()) };
        for row in &m.transition {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&w| w >= 0.0));
        }
        // forecast weights are the row, untouched
        for k in [-1.0, 0.0, 0.37, 0.9, 5.0] {
            let f = m.forecast(k).unwrap();
            prop_assert_eq!(f.weights(), &m.transition[m.state_of(k)][..]);
        }
    }

    #[test]
    fn chp_members_are_verbatim(
        obs in prop::collection::vec((0i64..2016, 0.0..1.2f64), 1..300),
        target in 0i64..100_000,
    ) {
        let times: Vec<DateTime<Utc>> = obs.iter().map(|(i, _)| t(5 * i)).collect();
        let values: Vec<f64> = obs.iter().map(|(_, k)| *k).collect();
        let m = ChpModel::fit(&times, &values, 5).unwrap();
        let f = m.forecast_nearest(t(target)).unwrap();
        for s in f.samples() {
            prop_assert!(values.iter().any(|v| v.to_bits() == s.to_bits()));
        }
        if let Ok(exact) = m.forecast(t(target)) {
            // exactly the values observed in that slot
            let slot = m.slot_of(t(target));
            let mut want: Vec<f64> = obs.iter().filter(|(i, _)| m.slot_of(t(5 * i)) == slot).map(|(_, k)| *k).collect();
            want.sort_by(f64::total_cmp);
            prop_assert_eq!(exact.samples(), &want[..]);
        }
    }

    #[test]
    fn peen_members_are_verbatim(history in prop::collection::vec(prop::option::of(0.0..1.2f64), 0..30)) {
        match peen_forecast(&history, 1) {
            Ok(f) => {
                let mut want: Vec<f64> = history.iter().flatten().copied().collect();
                want.sort_by(f64::total_cmp);
                prop_assert_eq!(f.samples(), &want[..]);
            }
            Err(_) => prop_assert!(history.iter().all(Option::is_none)),
        }
    }
}
