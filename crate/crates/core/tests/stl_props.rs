use proptest::prelude::*;
use tgpo::stl::{self, Formula, Interval, Predicates, StlError, Trajectory};

/// `c<i>` reads state component `i`.
struct Channels;

impl Predicates for Channels {
    fn value(&self, label: &str, state: &[f64]) -> Result<f64, StlError> {
        label[1..]
            .parse::<usize>()
            .ok()
            .and_then(|i| state.get(i).copied())
            .ok_or_else(|| StlError::UnknownPredicate(label.into()))
    }
}

fn interval() -> impl Strategy<Value = Interval> {
    (0usize..4, 0usize..5).prop_map(|(lo, w)| Interval::new(lo, lo + w).unwrap())
}

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        1 => Just(Formula::True),
        8 => (0usize..3).prop_map(|i| Formula::pred(format!("c{i}"))),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::and),
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::always(i, f)),
            (interval(), inner.clone(), inner).prop_map(|(i, l, r)| Formula::until(i, l, r)),
        ]
    })
}

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), len)
}

fn traj(sig: Vec<Vec<f64>>) -> Trajectory {
    Trajectory::new(sig, 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_formula_parses_back(f in formula(), sig in signal(20..21)) {
        let text = f.to_string();
        let g = stl::parse(&text).unwrap();
        // printing is a fixpoint after one round trip
        prop_assert_eq!(g.to_string(), text.clone());
        let t = traj(sig);
        let a = stl::robustness(&t, 0, &f, &Channels);
        let b = stl::robustness(&t, 0, &g, &Channels);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{text}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn negation_flips_sign(f in formula(), sig in signal(20..21)) {
        let t = traj(sig);
        if let Ok(r) = stl::robustness(&t, 0, &f, &Channels) {
            let n = stl::robustness(&t, 0, &Formula::not(f), &Channels).unwrap();
            prop_assert_eq!(n, -r);
        }
    }

    #[test]
    fn always_is_below_eventually(f in formula(), i in interval(), sig in signal(12..20)) {
        let t = traj(sig);
        let g = stl::robustness(&t, 0, &Formula::always(i, f.clone()), &Channels);
        let e = stl::robustness(&t, 0, &Formula::eventually(i, f), &Channels);
        if let (Ok(g), Ok(e)) = (g, e) {
            prop_assert!(g <= e);
        }
    }

    #[test]
    fn conjunction_is_the_minimum(a in formula(), b in formula(), sig in signal(20..21)) {
        let t = traj(sig);
        let ra = stl::robustness(&t, 0, &a, &Channels);
        let rb = stl::robustness(&t, 0, &b, &Channels);
        if let (Ok(ra), Ok(rb)) = (ra, rb) {
            let r = stl::robustness(&t, 0, &Formula::and(vec![a, b]), &Channels).unwrap();
            prop_assert_eq!(r, ra.min(rb));
        }
    }

    #[test]
    fn normalizing_keeps_robustness(f in formula(), sig in signal(20..21)) {
        let Ok(n) = f.normalize() else { return Ok(()) };
        prop_assert!(n.is_normalized());
        let t = traj(sig);
        if let Ok(r) = stl::robustness(&t, 0, &f, &Channels) {
            prop_assert_eq!(stl::robustness(&t, 0, &n, &Channels).unwrap(), r);
        }
    }

    #[test]
    fn shifting_the_signal_shifts_time(f in formula(), sig in signal(20..24), k in 1usize..4) {
        let t = traj(sig.clone());
        let shifted = traj(sig[k..].to_vec());
        if let (Ok(a), Ok(b)) = (
            stl::robustness(&t, k, &f, &Channels),
            stl::robustness(&shifted, 0, &f, &Channels),
        ) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn satisfaction_matches_sign(f in formula(), sig in signal(20..21)) {
        let t = traj(sig);
        if let Ok(r) = stl::robustness(&t, 0, &f, &Channels) {
            prop_assert_eq!(stl::satisfies(&t, &f, &Channels).unwrap(), r >= 0.0);
        }
    }

    #[test]
    fn trajectory_csv_round_trip(sig in signal(2..30)) {
        let t = traj(sig);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice(), 1.0).unwrap();
        prop_assert_eq!(back.states(), t.states());
        prop_assert!((back.dt() - t.dt()).abs() < 1e-12);
    }
}

#[test]
fn signal_form_matches_pointwise() {
    let f = stl::parse("F[0,3](c0 & G[1,2](!c1))").unwrap();
    let sig: Vec<Vec<f64>> = (0..15)
        .map(|k| {
            let t = k as f64;
            vec![(t * 0.7).sin(), (t * 0.3).cos(), t]
        })
        .collect();
    let t = traj(sig);
    let series = stl::robustness_signal(&t, &f, &Channels).unwrap();
    for (k, v) in series.iter().enumerate() {
        if let Ok(r) = stl::robustness(&t, k, &f, &Channels) {
            assert_eq!(*v, Some(r), "step {k}");
        }
    }
}

#[test]
fn parse_errors_are_reported() {
    for bad in ["F[3,1](a)", "F[0,2](a", "a &", "G[0,x](a)", ""] {
        assert!(stl::parse(bad).is_err(), "{bad:?} should not parse");
    }
}
