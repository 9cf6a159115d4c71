//! Shared test oracles.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

/// Every string reachable from `s` by one insertion, deletion, substitution
/// or (optionally) adjacent swap, over `alphabet`, no longer than `cap`.
fn neighbours<T: Clone + Eq>(s: &[T], alphabet: &[T], swaps: bool, cap: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    for i in 0..s.len() {
        let mut d = s.to_vec();
        d.remove(i);
        out.push(d);
        for x in alphabet {
            if *x != s[i] {
                let mut r = s.to_vec();
                r[i] = x.clone();
                out.push(r);
            }
        }
        if swaps && i + 1 < s.len() && s[i] != s[i + 1] {
            let mut w = s.to_vec();
            w.swap(i, i + 1);
            out.push(w);
        }
    }
    if s.len() < cap {
        for i in 0..=s.len() {
            for x in alphabet {
                let mut n = s.to_vec();
                n.insert(i, x.clone());
                out.push(n);
            }
        }
    }
    out
}

/// Exhaustive search over edit scripts: breadth-first distances from
/// `source` to every string over `alphabet` of length at most `cap`.
pub fn edit_distances_from<T: Clone + Eq + Hash>(
    source: &[T],
    alphabet: &[T],
    swaps: bool,
    cap: usize,
) -> HashMap<Vec<T>, usize> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(source.to_vec(), 0);
    queue.push_back(source.to_vec());
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        for n in neighbours(&s, alphabet, swaps, cap) {
            if !dist.contains_key(&n) {
                dist.insert(n.clone(), d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Plain recursive Levenshtein definition, no memoization.
pub fn levenshtein_recursive<T: Eq>(a: &[T], b: &[T]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = levenshtein_recursive(ra, rb) + usize::from(x != y);
            let del = levenshtein_recursive(ra, b) + 1;
            let ins = levenshtein_recursive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}
