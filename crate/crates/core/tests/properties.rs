mod common;

use proptest::prelude::*;

use seki::evaluator::{build_surrogate, oracle_best, Oracle};
use seki::repository::{sample_xi, KnowledgeRepository};
use seki::rng::SeededRng;
use seki::space::{
    describe_space, extract_architecture, neighbors, parse_architecture, random_architecture, render_architecture,
    Architecture, SpaceId,
};

fn any_space() -> impl Strategy<Value = SpaceId> {
    prop_oneof![Just(SpaceId::Nas201), Just(SpaceId::Trans101), Just(SpaceId::Darts)]
}

fn arch_of(space: SpaceId, seed: u64) -> Architecture {
    random_architecture(describe_space(space), &mut SeededRng::new(seed))
}

proptest! {
    #[test]
    fn render_parse_round_trip(space in any_space(), seed in any::<u64>()) {
        let a = arch_of(space, seed);
        let text = render_architecture(&a);
        let back = parse_architecture(describe_space(space), &text).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(render_architecture(&back), text);
    }

    #[test]
    fn decisions_round_trip(space in any_space(), seed in any::<u64>()) {
        let a = arch_of(space, seed);
        let d = a.decisions();
        let cards = describe_space(space).decision_cardinalities();
        prop_assert!(d.iter().zip(&cards).all(|(v, c)| v < c));
        prop_assert_eq!(Architecture::from_decisions(describe_space(space), &d).unwrap(), a);
    }

    #[test]
    fn neighbors_are_valid_distinct_and_symmetric(space in any_space(), seed in any::<u64>()) {
        let a = arch_of(space, seed);
        let ns = neighbors(&a);
        let mut texts: Vec<&str> = ns.iter().map(Architecture::canonical_text).collect();
        texts.sort();
        texts.dedup();
        prop_assert_eq!(texts.len(), ns.len());
        for n in &ns {
            prop_assert_ne!(n, &a);
            prop_assert!(parse_architecture(describe_space(space), n.canonical_text()).is_ok());
            let changed = n.decisions().iter().zip(a.decisions()).filter(|(x, y)| **x != *y).count();
            prop_assert_eq!(changed, 1);
            prop_assert!(neighbors(n).contains(&a));
        }
    }

    #[test]
    fn extraction_from_prose(
        space in any_space(),
        seed in any::<u64>(),
        before in "[a-zA-Z .,:;!?\n]{0,80}",
        after in "[a-zA-Z .,:;!?\n]{0,80}",
    ) {
        let a = arch_of(space, seed);
        let reply = format!("{before}\n{}\n{after}", a.canonical_text());
        prop_assert_eq!(extract_architecture(describe_space(space), &reply).unwrap(), a);
    }

    #[test]
    fn extraction_takes_the_last_block(space in any_space(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (arch_of(space, s1), arch_of(space, s2));
        let reply = format!("Before: {}\nAfter: {}\nDone.", a.canonical_text(), b.canonical_text());
        prop_assert_eq!(extract_architecture(describe_space(space), &reply).unwrap(), b);
    }

    #[test]
    fn repository_matches_brute_force(seed in any::<u64>(), size in 1usize..120, k in 1usize..40) {
        let mut rng = SeededRng::new(seed);
        let entries = common::random_entries(&mut rng, size);
        let mut repo = KnowledgeRepository::new();
        for e in &entries {
            repo.insert(e.clone());
        }
        let expected = common::brute_force_ranking(&entries);
        prop_assert_eq!(repo.unique_len(), expected.len());
        prop_assert_eq!(repo.top_k(k), expected.iter().take(k).cloned().collect::<Vec<_>>());
        prop_assert_eq!(repo.best().unwrap(), expected[0].clone());
    }

    #[test]
    fn sample_xi_is_a_subset_without_repeats(seed in any::<u64>(), size in 1usize..60, xi in 1usize..20) {
        let mut rng = SeededRng::new(seed);
        let entries = common::random_entries(&mut rng, size);
        let mut repo = KnowledgeRepository::new();
        entries.iter().for_each(|e| { repo.insert(e.clone()); });
        let top = repo.top_k(16);
        let sample = sample_xi(&top, xi, &mut rng).unwrap();
        prop_assert_eq!(sample.len(), xi.min(top.len()));
        for (i, s) in sample.iter().enumerate() {
            prop_assert!(top.contains(s));
            prop_assert!(!sample[..i].contains(s));
        }
    }

    #[test]
    fn separable_optimum_is_slotwise_argmax(space in prop_oneof![Just(SpaceId::Nas201), Just(SpaceId::Trans101)], seed in 0u64..1000) {
        let d = describe_space(space);
        let model = build_surrogate(d, seed, 0.0).unwrap();
        let argmax: Vec<usize> = model
            .unary_table()
            .iter()
            .map(|row| (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap())
            .collect();
        let constructed = Architecture::from_decisions(d, &argmax).unwrap();
        let brute = oracle_best(&model, d).unwrap();
        prop_assert_eq!(&brute.arch, &constructed);
        prop_assert_eq!(brute.fitness.oriented_value.to_bits(), model.evaluate(&constructed).unwrap().oriented_value.to_bits());
    }
}
