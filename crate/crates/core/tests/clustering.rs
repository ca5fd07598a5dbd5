use std::collections::BTreeMap;

use affinity_core::{cluster_candidates, classify_responses, EngineConfig, Error, Rating, ResponseExpression};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEYS: usize = 6;

fn instance(rng: &mut ChaCha8Rng, n: usize) -> Vec<ResponseExpression> {
    (0..n)
        .flat_map(|c| {
            let ratings: Vec<u8> = (0..KEYS).map(|_| rng.random_range(0..=4)).collect();
            ratings.into_iter().enumerate().map(move |(i, v)| {
                ResponseExpression::new(format!("c{c}"), format!("s{}", i / 2), format!("v{}", i % 2), "ctx", Rating::new(v.into(), 4).unwrap())
            })
        })
        .collect()
}

/// Rating agreement computed straight from the definition.
fn affinity(a: &[u8], b: &[u8]) -> f64 {
    let diff: u32 = a.iter().zip(b).map(|(x, y)| u32::from(x.abs_diff(*y))).sum();
    1.0 - f64::from(diff) / (a.len() as f64 * 4.0)
}

fn rows(responses: &[ResponseExpression]) -> BTreeMap<String, Vec<u8>> {
    let mut out: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for r in responses {
        out.entry(r.candidate_id.clone()).or_default().push(r.rating.value());
    }
    out
}

fn objective(rows: &[&Vec<u8>], medoids: &[usize]) -> f64 {
    rows.iter().map(|r| medoids.iter().map(|&m| affinity(r, rows[m])).fold(f64::NEG_INFINITY, f64::max)).sum()
}

fn optimum(rows: &[&Vec<u8>], k: usize) -> f64 {
    fn walk(rows: &[&Vec<u8>], k: usize, start: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            *best = best.max(objective(rows, chosen));
            return;
        }
        for i in start..rows.len() {
            chosen.push(i);
            walk(rows, k, i + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    walk(rows, k, 0, &mut Vec::new(), &mut best);
    best
}

#[test]
fn within_ten_percent_of_exhaustive_optimum() {
    let cfg = EngineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut exact = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=3);
        let n = rng.random_range(k.max(2)..=8);
        let responses = instance(&mut rng, n);
        let model = cluster_candidates(&responses, k, &cfg).unwrap();
        let table = rows(&responses);
        let ordered: Vec<&Vec<u8>> = table.values().collect();
        let ids: Vec<&String> = table.keys().collect();
        let medoids: Vec<usize> =
            model.medoids.iter().map(|m| ids.iter().position(|id| **id == m.candidate_id).unwrap()).collect();
        let got = objective(&ordered, &medoids);
        let best = optimum(&ordered, k);
        assert!((got - model.objective).abs() < 1e-9);
        assert!(got >= 0.9 * best, "objective {got} vs optimum {best}");
        if (got - best).abs() <= 1e-9 {
            exact += 1;
        }
    }
    assert!(exact >= 90, "{exact} of 100 exactly optimal");
}

#[test]
fn seven_candidates_three_classes() {
    let cfg = EngineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let responses = instance(&mut rng, 7);
    let model = cluster_candidates(&responses, 3, &cfg).unwrap();
    let table = rows(&responses);
    let ordered: Vec<&Vec<u8>> = table.values().collect();
    assert!(model.objective >= 0.9 * optimum(&ordered, 3));
}

#[test]
fn deterministic_and_self_consistent() {
    let cfg = EngineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let responses = instance(&mut rng, 8);
    let a = cluster_candidates(&responses, 3, &cfg).unwrap();
    let mut shuffled = responses.clone();
    shuffled.reverse();
    assert_eq!(a, cluster_candidates(&shuffled, 3, &cfg).unwrap());

    // every medoid is in its own class and every member is closest to its medoid
    for (i, m) in a.medoids.iter().enumerate() {
        assert_eq!(a.assignments[&m.candidate_id].get(), i + 1);
    }
    let by_candidate = rows(&responses);
    for (id, class) in &a.assignments {
        let own = &by_candidate[id];
        let mine = affinity(own, &by_candidate[&a.medoids[class.get() - 1].candidate_id]);
        for m in &a.medoids {
            assert!(affinity(own, &by_candidate[&m.candidate_id]) <= mine + 1e-12);
        }
    }

    // re-classifying a training candidate's responses returns its own cluster
    let member: Vec<_> = responses.iter().filter(|r| r.candidate_id == a.medoids[1].candidate_id).cloned().collect();
    assert_eq!(classify_responses(&member, &a, &cfg).unwrap().get(), 2);
}

#[test]
fn identical_candidates_collapse() {
    let cfg = EngineConfig::default();
    let responses: Vec<_> = (0..4)
        .flat_map(|c| {
            (0..3).map(move |i| ResponseExpression::new(format!("c{c}"), "s", format!("v{i}"), "ctx", Rating::new(2, 4).unwrap()))
        })
        .collect();
    let model = cluster_candidates(&responses, 2, &cfg).unwrap();
    assert_eq!(model.medoids[0].candidate_id, "c0");
    assert!((model.objective - 4.0).abs() < 1e-12);
}

#[test]
fn too_few_candidates() {
    let cfg = EngineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let responses = instance(&mut rng, 2);
    assert!(matches!(cluster_candidates(&responses, 3, &cfg), Err(Error::TooFewCandidates { needed: 3, have: 2 })));
}
