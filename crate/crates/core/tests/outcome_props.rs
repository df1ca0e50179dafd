use ppm_core::outcome::{evaluate, parse_formula, CompiledFormula, Formula};
use proptest::prelude::*;

mod oracles;
use oracles::{holds as oracle, sat};

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        "[abc]".prop_map(Formula::Atom),
        Just(Formula::atom("send offer")),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::next),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::globally),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::until(a, b)),
        ]
    })
}

fn trace() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop_oneof!["[abcd]", Just("send offer".to_string())], 0..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluator_matches_definitional_oracle(f in formula(), t in trace()) {
        prop_assert_eq!(evaluate(&f, &t), oracle(&f, &t));
        let c = CompiledFormula::new(&f);
        let pos = c.positions(&t);
        for (i, p) in pos.iter().enumerate() {
            prop_assert_eq!(*p, sat(&f, &t, i));
        }
    }

    #[test]
    fn globally_is_dual_of_eventually(f in formula(), t in trace()) {
        let lhs = Formula::globally(f.clone());
        let rhs = Formula::not(Formula::eventually(Formula::not(f)));
        // The empty trace satisfies nothing, so the duality is stated on
        // non-empty traces.
        if !t.is_empty() {
            prop_assert_eq!(evaluate(&lhs, &t), evaluate(&rhs, &t));
        }
    }

    #[test]
    fn until_expansion(f in formula(), g in formula(), t in trace()) {
        let u = CompiledFormula::new(&Formula::until(f.clone(), g.clone()));
        let (cf, cg) = (CompiledFormula::new(&f), CompiledFormula::new(&g));
        let (pu, pf, pg) = (u.positions(&t), cf.positions(&t), cg.positions(&t));
        let n = t.len();
        for i in 0..n {
            let next = i + 1 < n && pu[i + 1];
            prop_assert_eq!(pu[i], pg[i] || (pf[i] && next));
        }
    }

    #[test]
    fn eventually_is_true_until(f in formula(), t in trace()) {
        let a = evaluate(&Formula::eventually(f.clone()), &t);
        let b = evaluate(&Formula::until(Formula::True, f), &t);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn print_then_parse_is_identity(f in formula()) {
        let printed = f.to_string();
        let parsed = parse_formula(&printed).unwrap();
        prop_assert_eq!(&parsed, &f);
        prop_assert_eq!(parse_formula(&parsed.to_string()).unwrap(), parsed);
    }
}
