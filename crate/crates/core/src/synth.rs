//! Seeded synthetic graphs shaped like an encyclopedic KG: people, places,
//! films and organisations linked by a couple of dozen relations, with numeric
//! literals for comparisons.
//!
//! Labels are pseudo-words that avoid `, ` and ` or ` so questions built from
//! them can be parsed back unambiguously.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{KnowledgeGraph, KnowledgeGraphBuilder, RawTail};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Approximate total number of entities.
    pub entities: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(entities: usize, seed: u64) -> Self {
        Self { entities, seed }
    }
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "tr", "gl",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ei", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "m", "k"];

struct Namer {
    used: HashSet<String>,
}

impl Namer {
    fn word(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        let mut c = w.chars();
        match c.next() {
            Some(f) => f.to_uppercase().chain(c).collect(),
            None => w,
        }
    }

    fn unique(&mut self, rng: &mut ChaCha8Rng, make: impl Fn(&mut Self, &mut ChaCha8Rng) -> String) -> String {
        loop {
            let name = make(self, rng);
            if self.used.insert(name.to_lowercase()) {
                return name;
            }
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

fn pick_many<'a>(rng: &mut ChaCha8Rng, pool: &'a [String], lo: usize, hi: usize) -> Vec<&'a str> {
    let n = rng.gen_range(lo..=hi).min(pool.len());
    pool.choose_multiple(rng, n).map(String::as_str).collect()
}

/// Builds a deterministic synthetic graph for `config`.
pub fn synthetic_graph(config: &SynthConfig) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut namer = Namer { used: HashSet::new() };
    let n = config.entities.max(40);
    let share = |pct: usize, min: usize| (n * pct / 100).max(min);

    let mut make = |count: usize, f: &dyn Fn(&mut Namer, &mut ChaCha8Rng) -> String| -> Vec<String> {
        (0..count).map(|_| namer.unique(&mut rng, f)).collect()
    };
    let countries = make(share(5, 4), &|nm, r| {
        let base = nm.word(r, 2);
        format!("{base}{}", ["ia", "land", "stan", "ar"].choose(r).unwrap())
    });
    let cities = make(share(20, 8), &|nm, r| {
        let base = nm.word(r, 2);
        format!("{base}{}", ["ton", "burg", "ville", "field", "port"].choose(r).unwrap())
    });
    let people = make(share(40, 12), &|nm, r| format!("{} {}", nm.word(r, 2), nm.word(r, 3)));
    let films = make(share(12, 4), &|nm, r| {
        format!("{} {}", nm.word(r, 2), ["Rising", "Returns", "Forever", "Nights", "Story"].choose(r).unwrap())
    });
    let universities = make(share(8, 3), &|nm, r| format!("{} University", nm.word(r, 2)));
    let sports = make(share(3, 3), &|nm, r| format!("{}ball", nm.word(r, 1).to_lowercase()));
    let genres = make(share(3, 3), &|nm, r| format!("{} drama", nm.word(r, 1).to_lowercase()));
    let languages = make(share(4, 3), &|nm, r| format!("{}ish", nm.word(r, 2)));

    let mut b = KnowledgeGraphBuilder::new();
    let edge = |b: &mut KnowledgeGraphBuilder, h: &str, r: &str, t: &str| {
        b.add(h, r, RawTail::Entity(t.to_string())).expect("entity tail");
    };
    let lit = |b: &mut KnowledgeGraphBuilder, h: &str, r: &str, v: String| {
        b.add(h, r, RawTail::Literal(v)).expect("numeric literal");
    };

    for c in &countries {
        edge(&mut b, c, "capital", pick(&mut rng, &cities));
        for other in pick_many(&mut rng, &countries, 1, 3) {
            if other != c {
                edge(&mut b, c, "shares border with", other);
                edge(&mut b, other, "shares border with", c);
            }
        }
        for l in pick_many(&mut rng, &languages, 1, 2) {
            edge(&mut b, c, "official language", l);
        }
        lit(&mut b, c, "population", rng.gen_range(500_000..200_000_000u64).to_string());
    }
    for city in &cities {
        edge(&mut b, city, "country", pick(&mut rng, &countries));
        for other in pick_many(&mut rng, &cities, 0, 2) {
            if other != city {
                edge(&mut b, city, "shares border with", other);
                edge(&mut b, other, "shares border with", city);
            }
        }
        if rng.gen_bool(0.4) {
            edge(&mut b, city, "twinned administrative body", pick(&mut rng, &cities));
        }
        lit(&mut b, city, "population", rng.gen_range(5_000..5_000_000u64).to_string());
    }
    for u in &universities {
        edge(&mut b, u, "located in", pick(&mut rng, &cities));
        edge(&mut b, u, "named after", pick(&mut rng, &people));
    }
    for p in &people {
        edge(&mut b, p, "place of birth", pick(&mut rng, &cities));
        edge(&mut b, p, "country of citizenship", pick(&mut rng, &countries));
        for u in pick_many(&mut rng, &universities, 0, 2) {
            edge(&mut b, p, "educated at", u);
        }
        if rng.gen_bool(0.35) {
            edge(&mut b, p, "sport", pick(&mut rng, &sports));
        }
        if rng.gen_bool(0.15) {
            let s = pick(&mut rng, &people);
            if s != p {
                edge(&mut b, p, "spouse", s);
                edge(&mut b, s, "spouse", p);
            }
        }
        if rng.gen_bool(0.5) {
            lit(&mut b, p, "height", format!("{} cm", rng.gen_range(150..205u32)));
        }
    }
    for f in &films {
        for p in pick_many(&mut rng, &people, 2, 5) {
            edge(&mut b, f, "cast member", p);
        }
        edge(&mut b, f, "director", pick(&mut rng, &people));
        for g in pick_many(&mut rng, &genres, 1, 2) {
            edge(&mut b, f, "genre", g);
        }
        edge(&mut b, f, "country of origin", pick(&mut rng, &countries));
        lit(&mut b, f, "duration", format!("{} minutes", rng.gen_range(75..190u32)));
    }
    b.build().expect("synthetic graph is never empty")
}
