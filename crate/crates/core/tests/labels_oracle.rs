mod support;

use arsignal::labeling::{make_labels, read_labels_csv, write_labels_csv, SourceField};
use arsignal::ReturnRecord;
use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::rank_labels;

fn record(i: usize, year: i32, v: f64) -> ReturnRecord {
    ReturnRecord {
        ticker: format!("T{i:04}"),
        filing_date: NaiveDate::from_ymd_opt(year, 3, 1).unwrap(),
        next_filing_date: None,
        target_12m: v,
        target_max: v * 2.0,
        target_min: 0.0,
        target_q25: 0.0,
        target_q50: 0.0,
        target_q75: 0.0,
        sp500_12m: 0.0,
        sp500_max: 0.0,
        flags: Vec::new(),
        window: None,
    }
}

fn records(items: &[(i32, f64)]) -> Vec<ReturnRecord> {
    items.iter().enumerate().map(|(i, &(y, v))| record(i, y, v)).collect()
}

/// Labels in input order (records use ticker T{i}, so sorted order is input order).
fn labels_of(items: &[(i32, f64)], bins: usize) -> Vec<f64> {
    make_labels(&records(items), SourceField::Target12m, bins).unwrap().into_iter().map(|l| l.label).collect()
}

#[test]
fn random_multi_year_sets_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let bins = rng.random_range(2..=10);
        let n = rng.random_range(1..=60);
        let coarse = rng.random_bool(0.5);
        let items: Vec<(i32, f64)> = (0..n)
            .map(|_| {
                let year = rng.random_range(2015..=2018);
                let v = if coarse { f64::from(rng.random_range(-3i32..=3)) / 10.0 } else { rng.random_range(-1.0..2.0) };
                (year, v)
            })
            .collect();
        assert_eq!(labels_of(&items, bins), rank_labels(&items, bins), "case {case}");
    }
}

#[test]
fn five_bins_over_five_distinct_values() {
    let items: Vec<(i32, f64)> = [0.3, -0.1, 0.0, 0.5, 0.2].iter().map(|&v| (2020, v)).collect();
    assert_eq!(labels_of(&items, 5), vec![0.75, 0.0, 0.25, 1.0, 0.5]);
}

#[test]
fn max_field_is_ranked_separately() {
    let mut recs = records(&[(2020, 0.1), (2020, 0.2)]);
    recs[0].target_max = 0.9;
    recs[1].target_max = 0.1;
    let labels = make_labels(&recs, SourceField::TargetMax, 2).unwrap();
    assert_eq!(labels[0].label, 1.0);
    assert_eq!(labels[1].label, 0.0);
    assert!(labels.iter().all(|l| l.source_field == SourceField::TargetMax));
}

#[test]
fn csv_round_trip_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    let labels = make_labels(&records(&[(2019, 0.1), (2019, 0.4), (2020, 0.0)]), SourceField::Target12m, 5).unwrap();
    write_labels_csv(&path, &labels).unwrap();
    assert_eq!(read_labels_csv(&path, SourceField::Target12m).unwrap(), labels);
}

fn year_values() -> impl Strategy<Value = Vec<(i32, f64)>> {
    prop::collection::vec((2015i32..=2017, -100i32..=100), 1..40)
        .prop_map(|v| v.into_iter().map(|(y, x)| (y, f64::from(x) / 50.0)).collect())
}

proptest! {
    #[test]
    fn labels_lie_on_the_bin_grid(items in year_values(), bins in 2usize..=8) {
        for l in labels_of(&items, bins) {
            prop_assert!((0.0..=1.0).contains(&l));
            let scaled = l * (bins - 1) as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-12 || l == 0.5);
        }
    }

    #[test]
    fn labels_are_monotone_within_a_year(items in year_values(), bins in 2usize..=8) {
        let labels = labels_of(&items, bins);
        for i in 0..items.len() {
            for j in 0..items.len() {
                if items[i].0 == items[j].0 && items[i].1 < items[j].1 {
                    prop_assert!(labels[i] <= labels[j]);
                }
                if items[i].0 == items[j].0 && items[i].1 == items[j].1 {
                    prop_assert_eq!(labels[i], labels[j]);
                }
            }
        }
    }

    #[test]
    fn labels_ignore_increasing_transforms(items in year_values(), bins in 2usize..=8, a in 0.1f64..10.0, c in -5.0f64..5.0) {
        let transformed: Vec<(i32, f64)> = items.iter().map(|&(y, v)| (y, (a * v + c).exp())).collect();
        prop_assert_eq!(labels_of(&items, bins), labels_of(&transformed, bins));
    }

    #[test]
    fn other_years_do_not_affect_a_year(items in year_values(), extra in prop::collection::vec(-100i32..=100, 1..10)) {
        let mut with_extra = items.clone();
        with_extra.extend(extra.iter().map(|&x| (2030, f64::from(x))));
        let base = labels_of(&items, 5);
        let more = labels_of(&with_extra, 5);
        prop_assert_eq!(&base[..], &more[..items.len()]);
    }
}
