mod support;

use std::time::Instant;

use agentlens_core::segment::{win_change_points, KernelCost, SegmentationParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

const BASIS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[test]
fn top1_matches_exhaustive_scan_for_every_short_sequence() {
    let start = Instant::now();
    let mut checked = 0u64;
    for len in 1..=16 {
        for_each_restricted_growth(len, 3, |symbols| {
            let vectors: Vec<&[f64; 3]> = symbols.iter().map(|&s| &BASIS[s as usize]).collect();
            let cost = KernelCost::new(&vectors).unwrap();
            let out = win_change_points(&cost, &SegmentationParams::with_target(2)).unwrap();
            let w = out.params.window_width;
            let expected: Vec<usize> = brute_force_top1(symbols, w).into_iter().collect();
            assert_eq!(out.change_indices, expected, "sequence {symbols:?}, w={w}");
            checked += 1;
        });
    }
    // (3^(n-1) + 1) / 2 relabelling classes per length n.
    let classes: u64 = (1..=16u32).map(|n| (3u64.pow(n - 1) + 1) / 2).sum();
    assert_eq!(checked, classes);
    assert!(start.elapsed().as_secs() < 30, "took {:?}", start.elapsed());
}

#[test]
fn two_blocks_split_at_their_boundary() {
    for len in 8..=16usize {
        for b in 4..=len - 4 {
            let symbols: Vec<u8> = (0..len).map(|i| u8::from(i >= b)).collect();
            let cost = KernelCost::new(&one_hot(&symbols, 2)).unwrap();
            let out = win_change_points(&cost, &SegmentationParams::with_target(2).window(4)).unwrap();
            assert_eq!(out.change_indices, vec![b], "len {len}");
        }
    }
}

#[test]
fn planted_boundaries_are_recovered() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let trials = 200;
    let mut ok = 0;
    for _ in 0..trials {
        let p = planted_sequence(&mut rng, 16, 0.05);
        let cost = KernelCost::new(&p.vectors).unwrap();
        let n = p.boundaries.len() + 1;
        let out = win_change_points(&cost, &SegmentationParams::with_target(n)).unwrap();
        assert_eq!(out.params.window_width, p.window);
        if recovered(&p.boundaries, &out.change_indices, p.window / 2) {
            ok += 1;
        }
    }
    assert!(ok * 100 >= trials * 95, "recovered {ok}/{trials}");
    assert!(start.elapsed().as_secs() < 60);
}
