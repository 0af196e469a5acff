//! Kernel cost and discrepancy on a small hand-checkable sequence, then a
//! WIN run over two noisy blocks.
//!
//! cargo run -p agentlens-core --example kernel_cost

use agentlens_core::segment::{cosine_kernel, win_change_points, KernelCost, SegmentationParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("k((3,4),(4,3)) = {:.2}", cosine_kernel(&[3.0, 4.0], &[4.0, 3.0]));

    let (u, v) = ([1.0, 0.0], [0.0, 1.0]);
    let cost = KernelCost::new(&[u, u, v, v])?;
    println!("cost of [u,u,v,v] = {:.4}", cost.segment_cost(0, 4)?);
    for split in 1..4 {
        println!("  d(split at {split}) = {:.4}", cost.discrepancy(0, split, 4)?);
    }

    // Two blocks of slightly perturbed directions.
    let seq: Vec<[f64; 3]> = (0..24)
        .map(|i| {
            let wobble = 0.05 * ((i * 7 % 5) as f64 - 2.0);
            if i < 14 { [1.0, wobble, 0.0] } else { [wobble, 1.0, 0.1] }
        })
        .collect();
    let out = win_change_points(&KernelCost::new(&seq)?, &SegmentationParams::with_target(2).window(4))?;
    println!("change points {:?} (w={})", out.change_indices, out.params.window_width);
    for (v, d) in &out.curve {
        println!("  {v:>2} {}", "#".repeat((d * 10.0).round() as usize));
    }
    Ok(())
}
