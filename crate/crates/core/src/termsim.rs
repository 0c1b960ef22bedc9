//! Set and term-frequency similarity over token sequences.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermMetric {
    Jaccard,
    SorensenDice,
    Overlap,
    CosineTf,
    Ochiai,
}

impl TermMetric {
    pub const ALL: [TermMetric; 5] = [
        TermMetric::Jaccard,
        TermMetric::SorensenDice,
        TermMetric::Overlap,
        TermMetric::CosineTf,
        TermMetric::Ochiai,
    ];
}

pub fn term_similarity<S: AsRef<str>>(metric: TermMetric, a: &[S], b: &[S]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    if metric == TermMetric::CosineTf {
        return cosine_tf(a, b);
    }
    let sa: HashSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let sb: HashSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let inter = sa.intersection(&sb).count() as f64;
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let sim = match metric {
        TermMetric::Jaccard => inter / (na + nb - inter),
        TermMetric::SorensenDice => 2.0 * inter / (na + nb),
        TermMetric::Overlap => inter / na.min(nb),
        TermMetric::Ochiai => inter / (na * nb).sqrt(),
        TermMetric::CosineTf => unreachable!(),
    };
    sim.clamp(0.0, 1.0)
}

fn cosine_tf<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    // Ordered maps keep the float accumulation order fixed.
    let mut counts: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for t in a {
        counts.entry(t.as_ref()).or_default().0 += 1.0;
    }
    for t in b {
        counts.entry(t.as_ref()).or_default().1 += 1.0;
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in counts.values() {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot / (na * nb).sqrt()).clamp(0.0, 1.0)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn tokens() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec("[a-f]", 0..8)
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in tokens(), b in tokens()) {
            for m in TermMetric::ALL {
                let s = term_similarity(m, &a, &b);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!((s - term_similarity(m, &b, &a)).abs() < 1e-12);
            }
        }

        #[test]
        fn ochiai_is_binary_cosine(a in proptest::collection::hash_set("[a-f]", 0..6),
                                   b in proptest::collection::hash_set("[a-f]", 0..6)) {
            let a: Vec<String> = a.into_iter().collect();
            let b: Vec<String> = b.into_iter().collect();
            let o = term_similarity(TermMetric::Ochiai, &a, &b);
            let c = term_similarity(TermMetric::CosineTf, &a, &b);
            prop_assert!((o - c).abs() < 1e-12);
        }
    }
}
