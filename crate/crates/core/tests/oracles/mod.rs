//! Slow, obviously-correct reference implementations shared by test targets.
#![allow(dead_code)]

use ppm_core::outcome::Formula;

/// Probability that a random positive outranks a random negative, ties half.
pub fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Finite-trace semantics at position `i < n`, straight from the definitions.
pub fn sat(f: &Formula, t: &[String], i: usize) -> bool {
    let n = t.len();
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => t[i] == *a,
        Formula::Not(x) => !sat(x, t, i),
        Formula::And(a, b) => sat(a, t, i) && sat(b, t, i),
        Formula::Or(a, b) => sat(a, t, i) || sat(b, t, i),
        Formula::Implies(a, b) => !sat(a, t, i) || sat(b, t, i),
        Formula::Next(x) => i + 1 < n && sat(x, t, i + 1),
        Formula::Eventually(x) => (i..n).any(|j| sat(x, t, j)),
        Formula::Globally(x) => (i..n).all(|j| sat(x, t, j)),
        Formula::Until(a, b) => (i..n).any(|j| sat(b, t, j) && (i..j).all(|k| sat(a, t, k))),
    }
}

/// Truth at the first position; the empty trace satisfies nothing.
pub fn holds(f: &Formula, t: &[String]) -> bool {
    !t.is_empty() && sat(f, t, 0)
}
