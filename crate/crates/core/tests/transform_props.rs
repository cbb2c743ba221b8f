use msl_core::multiset::Multiset;
use msl_core::transform::{ground_truth_pair, ProbabilisticTransformation, UniverseTransformation};
use proptest::prelude::*;

const OBJECTS: u64 = 10;

fn labeling(k: usize) -> impl Strategy<Value = UniverseTransformation> {
    prop::collection::vec(0..k, OBJECTS as usize).prop_map(move |labels| {
        UniverseTransformation::from_labels(
            k,
            labels.into_iter().enumerate().map(|(i, l)| (i as u64, l)),
        )
        .unwrap()
    })
}

fn objects() -> impl Strategy<Value = Multiset> {
    prop::collection::vec(0u64..=3, OBJECTS as usize)
        .prop_map(|c| Multiset::from_counts(c.into_iter().enumerate().map(|(i, m)| (i as u64, m))))
}

/// Distributions with entries on a grid of 1/8, so sums are exact.
fn soft_labeling(k: usize) -> impl Strategy<Value = ProbabilisticTransformation> {
    prop::collection::vec(prop::collection::vec(0u32..=4, k), OBJECTS as usize).prop_map(
        move |rows| {
            let mut p = ProbabilisticTransformation::new(k);
            for (id, row) in rows.into_iter().enumerate() {
                let mut row: Vec<f64> = row.into_iter().map(|w| w as f64).collect();
                row[0] += 1.0;
                let total: f64 = row.iter().sum();
                p.insert(id as u64, row.into_iter().map(|w| w / total).collect())
                    .unwrap();
            }
            p
        },
    )
}

proptest! {
    #[test]
    fn pushforward_preserves_cardinality(t in labeling(4), a in objects()) {
        prop_assert_eq!(t.pushforward(&a).unwrap().cardinality(), a.cardinality());
    }

    #[test]
    fn pushforward_is_additive(t in labeling(4), a in objects(), b in objects()) {
        let sum = t.pushforward(&a.msum(&b)).unwrap();
        let parts: Vec<f64> = t
            .pushforward(&a)
            .unwrap()
            .as_slice()
            .iter()
            .zip(t.pushforward(&b).unwrap().as_slice())
            .map(|(x, y)| x + y)
            .collect();
        prop_assert_eq!(sum.as_slice(), parts.as_slice());
    }

    #[test]
    fn labeling_shrinks_symmetric_difference(t in labeling(3), a in objects(), b in objects()) {
        let g = ground_truth_pair(&t, &a, &b).unwrap();
        prop_assert!(g.symdiff <= a.sym_difference(&b).cardinality());
        prop_assert_eq!(g.symdiff, a.cardinality() + b.cardinality() - 2.0 * g.intersection);
    }

    #[test]
    fn point_masses_match_pushforward(t in labeling(5), a in objects()) {
        let p = t.to_probabilistic();
        prop_assert_eq!(p.expectation_transform(&a).unwrap(), t.pushforward(&a).unwrap());
    }

    #[test]
    fn expectation_preserves_cardinality(p in soft_labeling(3), a in objects()) {
        let e = p.expectation_transform(&a).unwrap();
        prop_assert!((e.cardinality() - a.cardinality()).abs() <= 1e-9);
        prop_assert!(e.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tables_round_trip(t in labeling(4), p in soft_labeling(2)) {
        prop_assert_eq!(UniverseTransformation::parse(4, &t.to_string()).unwrap(), t);
        let back = ProbabilisticTransformation::parse(2, &p.to_string()).unwrap();
        for id in 0..OBJECTS {
            prop_assert_eq!(back.distribution(id), p.distribution(id));
        }
    }
}

#[test]
fn missing_labels_are_errors() {
    let t = UniverseTransformation::from_labels(2, [(0, 1)]).unwrap();
    assert!(t.pushforward(&Multiset::from_elements([0, 5])).is_err());
    assert!(UniverseTransformation::from_labels(2, [(0, 2)]).is_err());
    let mut p = ProbabilisticTransformation::new(2);
    assert!(p.insert(0, vec![0.7, 0.7]).is_err());
    assert!(p.insert(0, vec![1.5, -0.5]).is_err());
    assert!(p
        .expectation_transform(&Multiset::from_elements([0]))
        .is_err());
}
