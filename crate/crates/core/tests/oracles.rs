//! Implementation checked against independent brute-force references.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use sopfl::eval::{hits, top_n};
use sopfl::index::CodebaseIndex;
use sopfl::llm::{cost_of_tokens, load_cassette, CassetteEntry, CostLedger, ReplayBackend, TokenUsage};
use sopfl::pipeline::{run_bug, PipelineSettings};
use sopfl::sbfl::{ochiai, rank, top_k, MethodId, Spectrum};
use sopfl::trace::{class_intersection, reduce_top_n, CoverageView};

use common::oracle;

#[test]
fn ochiai_matches_direct_formula_exhaustively() {
    for tf in 1..=10u64 {
        for ef in 0..=tf {
            for ep in 0..=10u64 {
                let s = Spectrum {
                    method: MethodId::new("C", "m()"),
                    failed_cover: ef,
                    passed_cover: ep,
                };
                let got = ochiai(&s, tf).unwrap();
                assert!(
                    (got - oracle::ochiai(ef, ep, tf)).abs() <= 1e-12,
                    "ef={ef} ep={ep} tf={tf}"
                );
            }
        }
    }
}

#[test]
fn rank_matches_brute_force_sort() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..200 {
        let set = oracle::random_spectra(&mut rng, 20);
        let mut expected: Vec<(f64, u64, MethodId)> = set
            .spectra
            .iter()
            .map(|s| {
                (
                    oracle::ochiai(s.failed_cover, s.passed_cover, set.total_failed),
                    s.failed_cover,
                    s.method.clone(),
                )
            })
            .collect();
        expected.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        let got: Vec<MethodId> = rank(&set).unwrap().into_iter().map(|r| r.method).collect();
        let want: Vec<MethodId> = expected.into_iter().map(|e| e.2).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn intersection_matches_fold_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..500 {
        let view = oracle::random_view(&mut rng, 10, 20);
        let got: Vec<(String, Vec<String>)> = class_intersection(&view)
            .unwrap()
            .into_iter()
            .map(|c| (c.fqn, c.signatures.into_iter().collect()))
            .collect();
        assert_eq!(got, oracle::fold_intersection(&view));
    }
}

#[test]
fn intersection_ignores_test_order_and_is_idempotent() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..200 {
        let view = oracle::random_view(&mut rng, 6, 10);
        let sets = |v: &CoverageView| -> BTreeSet<(String, BTreeSet<String>)> {
            class_intersection(v)
                .unwrap()
                .into_iter()
                .map(|c| (c.fqn, c.signatures.into_iter().collect()))
                .collect()
        };
        let mut entries: Vec<_> = view.per_test.values().cloned().collect();
        entries.shuffle(&mut rng);
        let mut renamed = CoverageView::default();
        for (i, classes) in entries.into_iter().enumerate() {
            renamed.per_test.insert(format!("q.T::s{i}"), classes);
        }
        assert_eq!(sets(&view), sets(&renamed));

        let once = class_intersection(&view).unwrap();
        if !once.is_empty() {
            let mut single = CoverageView::default();
            single.per_test.insert("t".into(), once.clone());
            assert_eq!(class_intersection(&single).unwrap(), once);
        }
    }
}

#[test]
fn reduce_top_n_is_a_sorted_prefix() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..500 {
        let rates = oracle::random_rates(&mut rng, 70);
        let n = rand::Rng::gen_range(&mut rng, 1..=60);
        let kept = reduce_top_n(&rates, n);
        assert_eq!(kept.len(), n.min(rates.len()));
        let mut sorted = rates.clone();
        sorted.sort_by(|a, b| oracle::rate_key(b).partial_cmp(&oracle::rate_key(a)).unwrap());
        let want: Vec<String> = sorted.iter().take(n).map(|r| r.class_fqn.clone()).collect();
        assert_eq!(kept, want);
    }
}

#[test]
fn cassette_order_does_not_matter() {
    let path = common::bugs_dir().join("cassette.jsonl");
    let mut entries: Vec<CassetteEntry> = load_cassette(&path).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    entries.shuffle(&mut rng);
    let backend = ReplayBackend::from_entries(entries);
    let run = run_bug(&common::bug("mini-1"), &PipelineSettings::default(), &backend).unwrap();
    assert_eq!(run.report.to_json(), common::golden("mini-1"));
}

proptest! {
    #[test]
    fn ochiai_is_monotone(ef in 0u64..20, ep in 0u64..20, extra in 1u64..10, tf_extra in 0u64..10) {
        let tf = ef + extra + tf_extra;
        let s = |ef, ep| Spectrum { method: MethodId::new("C", "m()"), failed_cover: ef, passed_cover: ep };
        let base = ochiai(&s(ef, ep), tf).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(ochiai(&s(ef + 1, ep), tf).unwrap() >= base);
        if ef > 0 {
            prop_assert!(ochiai(&s(ef, ep + extra), tf).unwrap() <= base);
        }
    }

    #[test]
    fn top_k_is_a_prefix_of_rank(seed in any::<u64>(), n in 0usize..40, k in 1usize..30) {
        let set = oracle::random_spectra(&mut StdRng::seed_from_u64(seed), n);
        let ranked = rank(&set).unwrap();
        let top = top_k(&ranked, k);
        prop_assert_eq!(top, &ranked[..k.min(n)]);
    }

    #[test]
    fn top_n_is_monotone(ranked in proptest::collection::vec(0u8..12, 0..10), truth in proptest::collection::btree_set(0u8..12, 1..4)) {
        let mut seen = BTreeSet::new();
        let ranked: Vec<MethodId> = ranked.into_iter().filter(|m| seen.insert(*m)).map(|m| MethodId::new("C", format!("m{m}()"))).collect();
        let truth: BTreeSet<MethodId> = truth.into_iter().map(|m| MethodId::new("C", format!("m{m}()"))).collect();
        for n in 1..8 {
            if top_n(&ranked, &truth, n) {
                prop_assert!(top_n(&ranked, &truth, n + 1));
            }
        }
        let h = hits(&ranked, &truth);
        prop_assert!(!h.top1 || h.top3);
        prop_assert!(!h.top3 || h.top5);
    }

    #[test]
    fn cost_is_linear(tokens in 0u64..1_000_000, k in 1u64..50) {
        let one = cost_of_tokens(tokens, 0.003);
        let many = cost_of_tokens(tokens * k, 0.003);
        prop_assert!((many - one * k as f64).abs() <= 1e-9 * many.max(1.0));
    }

    #[test]
    fn ledger_total_is_sum_of_tasks(usages in proptest::collection::vec((0usize..5, 0u64..5000, 0u64..2000), 0..30)) {
        let mut ledger = CostLedger::default();
        let mut sum = 0;
        for (task, p, c) in &usages {
            ledger.add(&format!("T{task}"), TokenUsage { prompt_tokens: *p, completion_tokens: *c }, 0.0);
            sum += p + c;
        }
        prop_assert_eq!(ledger.total_tokens(), sum);
        prop_assert_eq!(ledger.per_task.values().map(TokenUsage::total).sum::<u64>(), sum);
    }
}

#[test]
fn index_fixture_round_trips() {
    let index = common::index();
    assert_eq!(index.len(), 6);
    assert_eq!(index.method_count(), 23);
    assert_eq!(index.class("pkg.Util").unwrap().methods.len(), 4);
    let again = CodebaseIndex::from_json(&index.to_json()).unwrap();
    assert_eq!(*index, again);
}
