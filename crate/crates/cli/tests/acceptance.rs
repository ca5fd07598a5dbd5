//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; run with
//! `cargo test -p affinity-cli --test acceptance -- --nocapture` to see them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use affinity_cli::{build_service, execute, http, Cli};
use affinity_core::datastore::{parse_responses_jsonl, responses_to_jsonl};
use affinity_core::embedding::TemplateToken;
use affinity_core::learning::{emotion_vector_from_evidence, Medoid, MODEL_VERSION};
use affinity_core::{
    build_profile, candidate_affinity, classify_profile, cluster_candidates, embed_headline, load_lexicon,
    profile_affinity, rank_items, variant_profile, CandidateProfile, ClusterModel, EmotionVector, EngineConfig,
    HeadlineTemplate, Lexicon, PersonalityVector, ProfileStore, Rating, ResponseExpression, VariantFeatures,
};
use clap::Parser;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    passed: bool,
    detail: String,
}

fn report(name: &str, started: Instant, outcome: Result<Outcome, String>) -> bool {
    let elapsed = started.elapsed();
    let (passed, detail) = match outcome {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {name}: {detail} [{:.3}s]", if passed { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    passed
}

fn cli_json(args: &[&str]) -> Result<Value, String> {
    let argv = std::iter::once("affinity").chain(args.iter().copied()).chain(["--format", "json"]);
    let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    execute(&cli, &mut out).map_err(|e| format!("{e:#}"))?;
    serde_json::from_slice(&out).map_err(|e| e.to_string())
}

fn table_two(limit: Duration) -> Result<Outcome, String> {
    let t = Instant::now();
    let v = cli_json(&["eval", "--fixture", "paper/table2"])?;
    let elapsed = t.elapsed();
    let rate = v["exact_match_rate"].as_f64().unwrap_or(f64::NAN);
    let two = v["rank_2_share"].as_f64().unwrap_or(f64::NAN);
    let three = v["rank_3_or_worse_share"].as_f64().unwrap_or(f64::NAN);
    Ok(Outcome {
        passed: rate == 0.60 && (two - 0.30).abs() < 1e-12 && (three - 0.10).abs() < 1e-12 && elapsed < limit,
        detail: format!("exact_match_rate={rate} rank2={two} rank>=3={three}"),
    })
}

fn table_three(limit: Duration) -> Result<Outcome, String> {
    let t = Instant::now();
    let v = cli_json(&["eval", "--fixture", "paper/table3"])?;
    let elapsed = t.elapsed();
    let expected = [(0, 61.0), (1, 61.0), (2, 67.0), (3, 72.0), (4, 70.0)];
    let per_class_ok = expected.iter().all(|(c, a)| v["per_class"][c.to_string()].as_f64() == Some(*a));
    let overall = v["overall"].as_f64().unwrap_or(f64::NAN);
    Ok(Outcome {
        passed: per_class_ok && (overall - 66.2).abs() <= 0.1 && elapsed < limit,
        detail: format!("per_class={} overall={overall:.2}", v["per_class"]),
    })
}

fn synthetic_experiment(limit: Duration) -> Result<Outcome, String> {
    let t = Instant::now();
    let v = cli_json(&["eval", "--k", "5", "--per-class", "20", "--noise", "0,0.5,1,2", "--seed", "20240917"])?;
    let elapsed = t.elapsed();
    let reports = v.as_array().ok_or("expected an array of reports")?;
    let rates: Vec<f64> = reports.iter().map(|r| r["exact_match_rate"].as_f64().unwrap_or(f64::NAN)).collect();
    let classification = reports[0]["classification_accuracy"].as_f64().unwrap_or(f64::NAN);
    let sizes = reports[0]["train_size"].as_u64().unwrap_or(0) + reports[0]["test_size"].as_u64().unwrap_or(0);
    let monotone = rates.windows(2).all(|w| w[1] <= w[0] + 0.02);
    let floor = rates[..3].iter().all(|r| *r >= 0.62);
    Ok(Outcome {
        passed: sizes == 100 && classification == 1.0 && rates[0] == 1.0 && monotone && floor && elapsed < limit,
        detail: format!("candidates={sizes} noise0 classification={classification} rates(0,0.5,1,2)={rates:?}"),
    })
}

fn clustering_oracle(limit: Duration) -> Result<Outcome, String> {
    let cfg = EngineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let t = Instant::now();
    let (mut exact, mut worst) = (0, f64::INFINITY);
    for _ in 0..100 {
        let k = rng.random_range(1..=3usize);
        let n = rng.random_range(k.max(2)..=8usize);
        let keys = rng.random_range(3..=8usize);
        let table: Vec<Vec<u8>> = (0..n).map(|_| (0..keys).map(|_| rng.random_range(0..=4)).collect()).collect();
        let responses: Vec<ResponseExpression> = table
            .iter()
            .enumerate()
            .flat_map(|(c, row)| {
                row.iter().enumerate().map(move |(i, v)| {
                    ResponseExpression::new(format!("c{c}"), format!("s{i}"), "v", "ctx", Rating::new((*v).into(), 4).unwrap())
                })
            })
            .collect();
        let model = cluster_candidates(&responses, k, &cfg).map_err(|e| e.to_string())?;
        let agree = |a: &[u8], b: &[u8]| {
            1.0 - a.iter().zip(b).map(|(x, y)| f64::from(x.abs_diff(*y))).sum::<f64>() / (a.len() as f64 * 4.0)
        };
        let objective = |medoids: &[usize]| -> f64 {
            table.iter().map(|r| medoids.iter().map(|&m| agree(r, &table[m])).fold(f64::NEG_INFINITY, f64::max)).sum()
        };
        // candidate ids c0..c7 sort in index order
        let chosen: Vec<usize> = model.medoids.iter().map(|m| m.candidate_id[1..].parse().unwrap()).collect();
        let got = objective(&chosen);
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                best = best.max(objective(&set));
            }
        }
        worst = worst.min(got / best);
        if (got - best).abs() <= 1e-9 {
            exact += 1;
        }
    }
    Ok(Outcome {
        passed: worst >= 0.9 && exact >= 90 && t.elapsed() < limit,
        detail: format!("instances=100 exactly_optimal={exact} worst_ratio={worst:.4}"),
    })
}

fn embedding_oracle() -> Result<Outcome, String> {
    let cfg = EngineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut matched = 0;
    let mut deterministic = 0;
    let mut max_combos = 0;
    for _ in 0..50 {
        let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(1..=16)).collect();
        let mut doc: Value = serde_json::from_str(Lexicon::builtin_document()).unwrap();
        let mut words = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for w in 0..n {
                let weights: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 1e-3).collect();
                let profile = EmotionVector::from_weights(weights).unwrap();
                words.push(json!({"word": format!("w{c}x{w}"), "context": format!("ctx{c}"), "cluster": rng.random_range(1..=5), "profile": profile.values()}));
            }
        }
        doc["words"] = Value::Array(words);
        let lex = load_lexicon(&doc.to_string(), &cfg).map_err(|e| e.to_string())?;

        let mut tokens = Vec::new();
        let mut slots = Vec::new();
        let mut combos = 1usize;
        for s in 0..rng.random_range(1..=4) {
            let c = rng.random_range(0..sizes.len());
            if combos * sizes[c] > cfg.exhaustive_limit {
                break;
            }
            combos *= sizes[c];
            slots.push(c);
            tokens.push(TemplateToken::Literal { literal: format!("part{s}") });
            tokens.push(TemplateToken::Slot { slot: format!("s{s}"), context: format!("ctx{c}") });
        }
        max_combos = max_combos.max(combos);
        let template = HeadlineTemplate::new(tokens).map_err(|e| e.to_string())?;
        let target = EmotionVector::from_weights((0..5).map(|_| rng.random::<f64>() + 1e-3).collect()).unwrap();
        let base = VariantFeatures { color: rng.random_bool(0.5).then(|| "green".to_string()), ..Default::default() };

        let mut best = f64::NEG_INFINITY;
        for mut n in 0..combos {
            let mut f = base.clone();
            for &c in &slots {
                f.inscribed_words.push(format!("w{c}x{}", n % sizes[c]));
                n /= sizes[c];
            }
            best = best.max(profile_affinity(&target, &variant_profile(&f, &lex).unwrap()).unwrap());
        }
        let a = embed_headline(&template, &target, &base, &lex, &cfg).map_err(|e| e.to_string())?;
        let b = embed_headline(&template, &target, &base, &lex, &cfg).map_err(|e| e.to_string())?;
        matched += usize::from(a.score == best);
        deterministic += usize::from(a == b);
    }
    Ok(Outcome {
        passed: matched == 50 && deterministic == 50,
        detail: format!("templates=50 exact_max={matched} deterministic={deterministic} max_combinations={max_combos}"),
    })
}

fn ev() -> impl Strategy<Value = EmotionVector> {
    prop::collection::vec(0.0f64..1.0, 5)
        .prop_filter("mass", |w| w.iter().sum::<f64>() > 1e-6)
        .prop_map(|w| EmotionVector::from_weights(w).unwrap())
}

fn responses(candidate: &str, ratings: &[u8]) -> Vec<ResponseExpression> {
    ratings
        .iter()
        .enumerate()
        .map(|(i, v)| ResponseExpression::new(candidate, format!("s{i}"), "v", "ctx", Rating::new((*v).into(), 4).unwrap()))
        .collect()
}

type Suite<'a> = Box<dyn FnMut(&mut TestRunner) -> Result<(), String> + 'a>;

fn property_suites() -> Result<Outcome, String> {
    let cfg = EngineConfig::default();
    let suites: Vec<(&str, Suite)> = vec![
        (
            "affinity",
            Box::new(|r: &mut TestRunner| {
                let strat = (prop::collection::vec(0u8..=4, 1..10), prop::collection::vec(0u8..=4, 1..10));
                r.run(&strat, |(a, b)| {
                    let n = a.len().min(b.len());
                    let (ra, rb) = (responses("a", &a[..n]), responses("b", &b[..n]));
                    let x = candidate_affinity(&ra, &rb, &cfg).unwrap();
                    prop_assert!((0.0..=1.0).contains(&x));
                    prop_assert_eq!(x, candidate_affinity(&rb, &ra, &cfg).unwrap());
                    prop_assert_eq!(candidate_affinity(&ra, &ra, &cfg).unwrap(), 1.0);
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        (
            "ev_normalization",
            Box::new(|r: &mut TestRunner| {
                r.run(&prop::collection::vec((0.0f64..1.0, ev()), 0..10), |evidence| {
                    let v = emotion_vector_from_evidence(evidence.iter().map(|(w, p)| (*w, p)), 5).unwrap();
                    prop_assert!((v.values().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        (
            "ev_scale_invariance",
            Box::new(|r: &mut TestRunner| {
                let strat = (prop::collection::vec((0.01f64..1.0, ev()), 1..10), 0.01f64..100.0, prop::collection::vec(ev(), 1..=5));
                r.run(&strat, |(evidence, c, medoids)| {
                    let a = emotion_vector_from_evidence(evidence.iter().map(|(w, p)| (*w, p)), 5).unwrap();
                    let b = emotion_vector_from_evidence(evidence.iter().map(|(w, p)| (c * w, p)), 5).unwrap();
                    prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= 1e-9));
                    let model = ClusterModel {
                        version: MODEL_VERSION,
                        k: medoids.len(),
                        medoids: medoids
                            .iter()
                            .enumerate()
                            .map(|(i, e)| Medoid { candidate_id: format!("m{i}"), responses: vec![], ev: Some(e.clone()) })
                            .collect(),
                        assignments: BTreeMap::new(),
                        objective: 0.0,
                        iterations: 0,
                        converged: true,
                    };
                    let (ca, cb) = (classify_profile(&a, &model).unwrap(), classify_profile(&b, &model).unwrap());
                    if ca != cb {
                        let score = |cls: affinity_core::EmotionalClass| {
                            profile_affinity(&a, model.medoids[cls.get() - 1].ev.as_ref().unwrap()).unwrap()
                        };
                        prop_assert!((score(ca) - score(cb)).abs() <= 1e-9);
                    }
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        (
            "ranking",
            Box::new(|r: &mut TestRunner| {
                r.run(&(ev(), prop::collection::vec(ev(), 1..10)), |(reader, items)| {
                    let items: Vec<(String, EmotionVector)> =
                        items.into_iter().enumerate().map(|(i, p)| (format!("i{i:02}"), p)).collect();
                    let ranking = rank_items(&reader, &items).unwrap();
                    prop_assert_eq!(&ranking, &rank_items(&reader, &items).unwrap());
                    let mut ids: Vec<String> = ranking.iter().map(|x| x.item_id.clone()).collect();
                    ids.sort();
                    prop_assert_eq!(ids, items.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>());
                    prop_assert!(ranking.iter().enumerate().all(|(i, x)| x.rank == i + 1));
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        (
            "datastore_round_trip",
            Box::new(|r: &mut TestRunner| {
                let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
                let store = ProfileStore::open(dir.path(), &EngineConfig::default()).map_err(|e| e.to_string())?;
                let strat = ("[a-z0-9 ._-]{1,16}", prop::collection::vec(0.0f64..=1.0, 5), ev(), prop::collection::vec(0u8..=4, 1..10));
                r.run(&strat, |(id, pv, ev, ratings)| {
                    let profile = CandidateProfile {
                        candidate_id: id.clone(),
                        pv: PersonalityVector::new(pv, vec![true; 5]).unwrap(),
                        ev,
                        class: None,
                    };
                    store.save_profile(&profile).unwrap();
                    prop_assert_eq!(store.load_profile(&id).unwrap(), Some(profile));
                    let rs = responses(&id, &ratings);
                    prop_assert_eq!(parse_responses_jsonl(&responses_to_jsonl(&rs), &EngineConfig::default()).unwrap(), rs);
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
    ];
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (name, mut suite) in suites {
        let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
        match suite(&mut runner) {
            Ok(()) => results.push(format!("{name}=ok")),
            Err(e) => {
                results.push(format!("{name}=failed"));
                failures.push(format!("{name}: {e}"));
            }
        }
    }
    Ok(Outcome {
        passed: failures.is_empty(),
        detail: format!("cases=1000 each {}{}", results.join(" "), if failures.is_empty() { String::new() } else { format!(" {failures:?}") }),
    })
}

async fn service_consistency(dir: &Path) -> Result<Outcome, String> {
    let cli = Cli::parse_from(["affinity", "serve", "--store", dir.to_str().unwrap()]);
    let svc = Arc::new(build_service(&cli, dir, None, None).map_err(|e| e.to_string())?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(http::serve(listener, svc));

    let client = reqwest::Client::new();
    let lex = Lexicon::builtin();
    let proto = EmotionVector::from_weights(vec![0.1, 0.05, 0.15, 0.6, 0.1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut round: Value = client
        .post(format!("{base}/v1/sessions"))
        .json(&json!({"candidate_id": "scripted-reader"}))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    let session = round["session_id"].as_str().ok_or("no session id")?.to_string();
    let mut rounds = 0;
    let returned = loop {
        let ratings: BTreeMap<String, i64> = round["variants"]
            .as_array()
            .ok_or("no variants")?
            .iter()
            .map(|v| {
                let f: VariantFeatures = serde_json::from_value(v["features"].clone()).unwrap();
                let a = profile_affinity(&proto, &variant_profile(&f, &lex).unwrap()).unwrap();
                let noisy = 4.0 * a + rng.random_range(-0.5..0.5);
                (v["variant_id"].as_str().unwrap().to_string(), noisy.round().clamp(0.0, 4.0) as i64)
            })
            .collect();
        let out: Value = client
            .post(format!("{base}/v1/sessions/{session}/ratings"))
            .json(&json!({ "ratings": ratings }))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        rounds += 1;
        match out["status"].as_str() {
            Some("next_round") => round = out["round"].clone(),
            Some("complete") => break out["profile"].clone(),
            _ => return Err(format!("unexpected response {out}")),
        }
    };
    let fetched: CandidateProfile = client
        .get(format!("{base}/v1/candidates/scripted-reader/profile"))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    let returned: CandidateProfile = serde_json::from_value(returned).map_err(|e| e.to_string())?;

    let cfg = EngineConfig::default();
    let store = ProfileStore::open(dir, &cfg).map_err(|e| e.to_string())?;
    let persisted = store.responses_for("scripted-reader").map_err(|e| e.to_string())?;
    let offline = build_profile("scripted-reader", &persisted, &lex, &store.variants().map_err(|e| e.to_string())?, None, &cfg)
        .map_err(|e| e.to_string())?;
    let diff = |a: &CandidateProfile, b: &CandidateProfile| {
        a.ev.values()
            .iter()
            .zip(b.ev.values())
            .chain(a.pv.values().iter().zip(b.pv.values()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let max_diff = diff(&returned, &offline).max(diff(&fetched, &offline));
    Ok(Outcome {
        passed: rounds == 5 && persisted.len() == 25 && max_diff <= 1e-9 && returned.class == offline.class,
        detail: format!("rounds={rounds} responses={} max_entry_diff={max_diff:e}", persisted.len()),
    })
}

#[test]
fn acceptance() {
    let mut all = Vec::new();

    let t = Instant::now();
    all.push(report("fixture replay, rank comparison table", t, table_two(Duration::from_secs(1))));
    let t = Instant::now();
    all.push(report("fixture replay, per-class accuracy table", t, table_three(Duration::from_secs(1))));
    let t = Instant::now();
    all.push(report("synthetic experiment k=5, 100 candidates", t, synthetic_experiment(Duration::from_secs(30))));
    let t = Instant::now();
    all.push(report("clustering vs exhaustive optimum", t, clustering_oracle(Duration::from_secs(60))));
    let t = Instant::now();
    all.push(report("embedding vs brute force", t, embedding_oracle()));
    let t = Instant::now();
    all.push(report("property suites", t, property_suites()));

    let dir = tempfile::tempdir().unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let t = Instant::now();
    all.push(report("service consistency over HTTP", t, runtime.block_on(service_consistency(dir.path()))));

    let passed = all.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} passed", all.len());
    assert_eq!(passed, all.len());
}
