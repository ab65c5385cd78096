//! Independent closed-form oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use statrs::distribution::{ContinuousCDF, Normal};

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// P(|N(0, σ)| > half_width).
pub fn two_sided_tail(sigma: f64, half_width: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(half_width / sigma))
}

/// Probability that a Gaussian phase error of std `sigma` (radians) lands
/// in decision cell `k` of an M-PSK constellation, summed over wraps.
pub fn psk_cell_probabilities(m: u32, sigma: f64) -> Vec<f64> {
    let width = TAU / m as f64;
    (0..m)
        .map(|k| {
            let centre = k as f64 * width;
            (-4..=4)
                .map(|w| {
                    let c = centre + w as f64 * TAU;
                    normal_cdf((c + width / 2.0) / sigma) - normal_cdf((c - width / 2.0) / sigma)
                })
                .sum()
        })
        .collect()
}

pub fn psk_symbol_error_rate(m: u32, sigma: f64) -> f64 {
    1.0 - psk_cell_probabilities(m, sigma)[0]
}

/// Bit error rate of Gray-labelled M-PSK: each cell shift weighted by the
/// average Hamming distance between labels that far apart.
pub fn psk_bit_error_rate(m: u32, sigma: f64) -> f64 {
    let bits = m.trailing_zeros() as f64;
    let gray = |i: u32| i ^ (i >> 1);
    psk_cell_probabilities(m, sigma)
        .iter()
        .enumerate()
        .map(|(shift, p)| {
            let avg: f64 = (0..m)
                .map(|i| (gray(i) ^ gray((i + shift as u32) % m)).count_ones() as f64)
                .sum::<f64>()
                / m as f64;
            p * avg / bits
        })
        .sum()
}

/// Standard error of a sample standard deviation from n Gaussian draws.
pub fn std_standard_error(sigma: f64, n: usize) -> f64 {
    sigma / (2.0 * (n as f64 - 1.0)).sqrt()
}

pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn deg(x: f64) -> f64 {
    x * 180.0 / PI
}

pub fn rad(x: f64) -> f64 {
    x * PI / 180.0
}

/// Prints one acceptance line and fails the test when `pass` is false.
pub fn verdict(criterion: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {criterion:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}
