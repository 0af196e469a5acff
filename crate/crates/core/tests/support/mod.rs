//! Fixture loading and independent oracles shared by the test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use agentlens_core::ingest::parse_bytes;
use agentlens_core::model::{OperationKind, OperationRef, Timeline};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn fixture_path(name: &str) -> PathBuf {
    // Resolved from either crate so other test targets can share these helpers.
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn fixture_bytes() -> Vec<u8> {
    std::fs::read(fixture_path("smalltown.jsonl")).expect("fixture log")
}

pub fn fixture() -> Timeline {
    let (tl, report) = parse_bytes(&fixture_bytes());
    assert!(report.is_ok(), "{:?}", report.errors);
    tl.expect("valid fixture")
}

fn json(name: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(fixture_path(name)).expect(name)).expect(name)
}

/// Facts computed from the raw fixture lines by a separate script.
pub fn oracle() -> serde_json::Value {
    json("smalltown.oracle.json")
}

/// Structure the fixture generator planted.
pub fn planted() -> serde_json::Value {
    json("smalltown.planted.json")
}

pub fn op_ref(v: &serde_json::Value) -> OperationRef {
    OperationRef::new(
        v[0].as_u64().unwrap(),
        v[1].as_str().unwrap(),
        v[2].as_u64().unwrap() as u32,
    )
}

pub fn u64s(v: &serde_json::Value) -> Vec<u64> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect()
}

/// Memory operations whose text contains `query`, case-insensitively, by
/// a plain scan of the raw log lines.
pub fn substring_oracle(raw: &[u8], query: &str) -> Vec<OperationRef> {
    let needle = query.to_lowercase();
    let mut hits: Vec<OperationRef> = std::str::from_utf8(raw)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|r| r["type"] == "op" && r["op_kind"] == "memory")
        .filter(|r| r["text"].as_str().unwrap().to_lowercase().contains(&needle))
        .map(|r| OperationRef::new(r["t"].as_u64().unwrap(), r["agent"].as_str().unwrap(), r["op_index"].as_u64().unwrap() as u32))
        .collect();
    hits.sort();
    hits
}

pub fn memory_kind() -> OperationKind {
    OperationKind::Memory
}

/// One-hot vectors for a symbol sequence.
pub fn one_hot(symbols: &[u8], dim: usize) -> Vec<Vec<f64>> {
    symbols
        .iter()
        .map(|&s| {
            let mut v = vec![0.0; dim];
            v[s as usize] = 1.0;
            v
        })
        .collect()
}

/// Best single split of a one-hot sequence scored by direct counting.
///
/// For orthogonal symbols the kernel is 1 on equal symbols and 0 otherwise,
/// so the within-segment cost is `n - Σ count² / n`. With both windows of
/// width `w`, `2w` times the discrepancy at `v` is the integer
/// `2·Σcount²(left) + 2·Σcount²(right) - Σcount²(both)`. The earliest
/// strict maximum wins; a maximum of zero means no split.
pub fn brute_force_top1(symbols: &[u8], w: usize) -> Option<usize> {
    let len = symbols.len();
    if len < 2 * w {
        return None;
    }
    let sq = |seg: &[u8]| -> i64 {
        let mut c = [0i64; 8];
        for &s in seg {
            c[s as usize] += 1;
        }
        c.iter().map(|x| x * x).sum()
    };
    let mut best: Option<(usize, i64)> = None;
    for v in w..=len - w {
        let score = 2 * sq(&symbols[v - w..v]) + 2 * sq(&symbols[v..v + w]) - sq(&symbols[v - w..v + w]);
        if score > 0 && best.is_none_or(|(_, b)| score > b) {
            best = Some((v, score));
        }
    }
    best.map(|(v, _)| v)
}

/// Calls `f` on every length-`len` sequence over `k` symbols that uses
/// symbols in first-appearance order. Every sequence is a relabelling of
/// exactly one of these, and relabelling orthogonal symbols changes no
/// kernel value.
pub fn for_each_restricted_growth(len: usize, k: u8, mut f: impl FnMut(&[u8])) {
    fn rec(buf: &mut Vec<u8>, len: usize, k: u8, max: u8, f: &mut impl FnMut(&[u8])) {
        if buf.len() == len {
            f(buf);
            return;
        }
        for s in 0..=(max + 1).min(k - 1) {
            buf.push(s);
            rec(buf, len, k, max.max(s), f);
            buf.pop();
        }
    }
    if len == 0 {
        f(&[]);
        return;
    }
    let mut buf = vec![0u8];
    rec(&mut buf, len, k, 0, &mut f);
}

pub struct PlantedSequence {
    pub vectors: Vec<Vec<f64>>,
    pub boundaries: Vec<usize>,
    pub window: usize,
}

/// Piecewise-constant sequence of noisy unit vectors. Each of the `K + 1`
/// segments is at least one window long so that every planted boundary is
/// a candidate split with homogeneous windows on both sides.
pub fn planted_sequence(rng: &mut impl Rng, dim: usize, sigma: f64) -> PlantedSequence {
    let len = rng.random_range(60..=200usize);
    let k = rng.random_range(1..=4usize);
    let n = k + 1;
    let w = agentlens_core::segment::SegmentationParams::default_window(len, n);
    // Spread the slack over segments of minimum length w.
    let slack = len - n * w;
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let boundaries: Vec<usize> = cuts.iter().enumerate().map(|(i, c)| (i + 1) * w + c).collect();

    let centers: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            // Basis directions with a small shared tilt: near but not exactly orthogonal.
            let mut c = vec![0.02; dim];
            c[i] = 1.0;
            c
        })
        .collect();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut vectors = Vec::with_capacity(len);
    let mut seg = 0;
    for i in 0..len {
        while seg < k && i >= boundaries[seg] {
            seg += 1;
        }
        let v: Vec<f64> = centers[seg].iter().map(|c| c + noise.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        vectors.push(v.into_iter().map(|x| x / norm).collect());
    }
    PlantedSequence {
        vectors,
        boundaries,
        window: w,
    }
}

/// Every planted boundary has a distinct recovered point within `tol`, and
/// nothing extra was recovered.
pub fn recovered(truth: &[usize], found: &[usize], tol: usize) -> bool {
    truth.len() == found.len() && truth.iter().zip(found).all(|(t, f)| t.abs_diff(*f) <= tol)
}
