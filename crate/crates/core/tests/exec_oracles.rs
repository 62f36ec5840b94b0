//! Set operations and BM25 checked against independent reference versions.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use lpkg_core::exec::{answer_key, intersect, union, AnswerList, Bm25Retriever, Document, Retriever};
use proptest::prelude::*;

fn key_set(xs: &[String]) -> BTreeSet<String> {
    xs.iter().map(|s| answer_key(s)).collect()
}

fn item() -> impl Strategy<Value = String> {
    // small alphabet so lists overlap, with case and spacing variants
    prop::sample::select(vec!["Paris", "paris", "Rome", " Rome ", "New  York", "new york", "Oslo", "Lima", "Kyiv"])
        .prop_map(str::to_string)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn set_ops_match_sorted_key_sets(a in prop::collection::vec(item(), 0..8), b in prop::collection::vec(item(), 0..8)) {
        let (la, lb) = (AnswerList::new(&a), AnswerList::new(&b));
        let (ka, kb) = (key_set(&a), key_set(&b));
        let i = intersect(&la, &lb);
        let u = union(&la, &lb);
        prop_assert_eq!(key_set(i.values()), ka.intersection(&kb).cloned().collect::<BTreeSet<_>>());
        prop_assert_eq!(key_set(u.values()), ka.union(&kb).cloned().collect::<BTreeSet<_>>());
        // no duplicates under the key, left operand's order and spelling first
        prop_assert_eq!(key_set(u.values()).len(), u.len());
        prop_assert_eq!(&u.values()[..la.len()], la.values());
        let left_order: Vec<&String> = la.values().iter().filter(|v| kb.contains(&answer_key(v))).collect();
        prop_assert_eq!(i.values().iter().collect::<Vec<_>>(), left_order);
        // commutative and idempotent up to keys
        prop_assert_eq!(key_set(intersect(&lb, &la).values()), key_set(i.values()));
        prop_assert_eq!(key_set(union(&lb, &la).values()), key_set(u.values()));
        prop_assert_eq!(intersect(&la, &la), la.clone());
    }
}

fn docs() -> Vec<Document> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/bm25_20.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Textbook Okapi BM25, written out per document.
fn reference_scores(docs: &[Document], query: &str) -> Vec<f64> {
    let toks = |s: &str| -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in s.chars() {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    };
    let bodies: Vec<Vec<String>> = docs.iter().map(|d| toks(&format!("{} {}", d.title, d.text))).collect();
    let n = docs.len() as f64;
    let avgdl = bodies.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let (k1, b) = (1.2, 0.75);
    bodies
        .iter()
        .map(|body| {
            let mut tf: HashMap<&str, f64> = HashMap::new();
            for t in body {
                *tf.entry(t.as_str()).or_default() += 1.0;
            }
            toks(query)
                .iter()
                .map(|q| {
                    let df = bodies.iter().filter(|d| d.contains(q)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    let f = tf.get(q.as_str()).copied().unwrap_or(0.0);
                    idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * body.len() as f64 / avgdl))
                })
                .sum()
        })
        .collect()
}

#[test]
fn bm25_ranking_matches_reference() {
    let docs = docs();
    assert_eq!(docs.len(), 20);
    let r = Bm25Retriever::new(docs.clone()).unwrap();
    for (query, top) in [
        ("Who replaced Sam Nujoma as president of Namibia?", "d02"),
        ("Where was Helen Mirren trained?", "d07"),
        ("population of Halifax", "d11"),
    ] {
        let expected = reference_scores(&docs, query);
        let mut order: Vec<usize> = (0..docs.len()).filter(|&i| expected[i] > 0.0).collect();
        order.sort_by(|&a, &b| expected[b].partial_cmp(&expected[a]).unwrap().then(a.cmp(&b)));
        order.truncate(5);
        let got = r.retrieve(query, 5).unwrap();
        assert_eq!(got.passages[0].doc_id, top, "{query}");
        let got_ids: Vec<&str> = got.passages.iter().map(|p| p.doc_id.as_str()).collect();
        let want_ids: Vec<&str> = order.iter().map(|&i| docs[i].id.as_str()).collect();
        assert_eq!(got_ids, want_ids, "{query}");
        for (p, &i) in got.passages.iter().zip(&order) {
            assert!((p.score - expected[i]).abs() < 1e-9);
        }
    }
}
