//! The fixed semi-co-linear test channel and its reference powers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;

/// The 2×2 fixed test channel.
pub fn h_test() -> ChannelMatrix {
    let c = Complex64::new;
    ChannelMatrix::from_rows(vec![
        vec![c(-0.4965, 0.0618), c(0.5403, 1.0261)],
        vec![c(-0.3680, 0.0010), c(0.2111, 0.8027)],
    ])
    .expect("static channel is well formed")
}

/// Published transmit power (dB) on `h_test` at SNR 4.771 dB.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReferencePower {
    pub modulation: String,
    pub method: String,
    pub power_db: f64,
    pub tolerance_db: f64,
}

pub const REFERENCE_SNR_DB: f64 = 4.771;

pub fn reference_powers() -> Vec<ReferencePower> {
    let rows: [(&str, &str, f64, f64); 9] = [
        ("qpsk", "OB", 43.112, 0.1),
        ("8qam", "OB", 43.1118, 0.1),
        ("8psk", "OB", 43.1118, 0.1),
        ("qpsk", "SLP", 44.1636, 0.1),
        ("8qam", "SLP", 44.091, 0.1),
        ("8psk", "SLP", 44.8710, 0.1),
        ("qpsk", "SLPRo", 35.466, 0.3),
        ("8qam", "SLPRo", 29.6172, 0.3),
        ("8psk", "SLPRo", 30.6547, 0.3),
    ];
    rows.iter()
        .map(|&(m, method, p, tol)| ReferencePower {
            modulation: m.into(),
            method: method.into(),
            power_db: p,
            tolerance_db: tol,
        })
        .collect()
}
