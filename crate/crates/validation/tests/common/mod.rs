#![allow(dead_code)]

use blends_core::linalg::Mat15;

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(a: &Mat15) -> Mat15 {
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = Mat15::identity();
    let mut sum = Mat15::identity();
    for k in 1..=18 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}
