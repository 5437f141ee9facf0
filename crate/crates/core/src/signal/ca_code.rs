//! C/A Gold codes.

use crate::error::{Error, Result};
use crate::signal::CODE_LENGTH;

/// G2 phase-selector taps (1-based stage numbers) per PRN 1..=32.
const G2_TAPS: [(usize, usize); 32] = [
    (2, 6),
    (3, 7),
    (4, 8),
    (5, 9),
    (1, 9),
    (2, 10),
    (1, 8),
    (2, 9),
    (3, 10),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (1, 4),
    (2, 5),
    (3, 6),
    (4, 7),
    (5, 8),
    (6, 9),
    (1, 3),
    (4, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 6),
    (2, 7),
    (3, 8),
    (4, 9),
];

/// One period of a C/A code as ±1 chips (logic 0 maps to +1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrnCode {
    prn: u8,
    chips: Vec<i8>,
}

impl PrnCode {
    pub fn prn(&self) -> u8 {
        self.prn
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    #[inline]
    pub fn chip(&self, index: usize) -> i8 {
        self.chips[index]
    }

    /// Three consecutive periods as `f64`, so that any index in
    /// `0..3 * 1023` reads the chip without a modulo.
    pub fn unrolled(&self) -> Vec<f64> {
        let one: Vec<f64> = self.chips.iter().map(|&c| c as f64).collect();
        one.repeat(3)
    }

    /// Circular correlation with `other` at the given chip lag.
    pub fn correlate(&self, other: &PrnCode, lag: usize) -> i32 {
        let n = self.chips.len();
        (0..n)
            .map(|i| self.chips[i] as i32 * other.chips[(i + lag) % n] as i32)
            .sum()
    }
}

/// Generates the C/A code for `prn` with the G1/G2 shift-register pair.
pub fn generate_ca_code(prn: u8) -> Result<PrnCode> {
    if !(1..=32).contains(&prn) {
        return Err(Error::invalid(format!("PRN {prn} outside 1..=32")));
    }
    let (s1, s2) = G2_TAPS[prn as usize - 1];
    let mut g1 = [1u8; 10];
    let mut g2 = [1u8; 10];
    let mut chips = Vec::with_capacity(CODE_LENGTH);
    for _ in 0..CODE_LENGTH {
        let bit = g1[9] ^ g2[s1 - 1] ^ g2[s2 - 1];
        chips.push(if bit == 0 { 1 } else { -1 });
        let f1 = g1[2] ^ g1[9];
        let f2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
        g1.rotate_right(1);
        g2.rotate_right(1);
        g1[0] = f1;
        g2[0] = f2;
    }
    Ok(PrnCode { prn, chips })
}

/// Codes for PRN 1..=32, index `prn - 1`.
pub fn all_codes() -> Vec<PrnCode> {
    (1..=32)
        .map(|p| generate_ca_code(p).expect("PRN in range"))
        .collect()
}
