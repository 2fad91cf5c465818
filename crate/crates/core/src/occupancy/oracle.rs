//! Brute-force enumeration of all `L^h` equiprobable slot assignments.

use rayon::prelude::*;

use super::{SuccessDistribution, SuccessLaw, XiMethod};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

/// Exact success-count distribution by enumeration. Assignments are split by
/// the first packet's slot and counted in parallel; the integer counts are
/// summed in slot order so the result does not depend on scheduling.
pub fn brute_force_xi(h: usize, l: usize, law: SuccessLaw) -> Result<SuccessDistribution> {
    brute_force_xi_capped(h, l, law, DEFAULT_ORACLE_CAP)
}

pub fn brute_force_xi_capped(
    h: usize,
    l: usize,
    law: SuccessLaw,
    cap: u64,
) -> Result<SuccessDistribution> {
    law.validate()?;
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    let total = (l as u64)
        .checked_pow(h as u32)
        .filter(|&t| t <= cap)
        .ok_or(Error::CapExceeded {
            what: "brute-force enumeration L^h",
            size: (l as u128).saturating_pow(h as u32),
            cap: cap as u128,
        })?;
    let m = law.capacity();
    let top = h.min(l * m);

    let counts: Vec<u64> = if h == 0 {
        vec![1]
    } else {
        let per_prefix: Vec<Vec<u64>> = (0..l)
            .into_par_iter()
            .map(|first| enumerate_with_first(h, l, m, top, first))
            .collect();
        let mut acc = vec![0u64; top + 1];
        for c in per_prefix {
            for (a, b) in acc.iter_mut().zip(c) {
                *a += b;
            }
        }
        acc
    };

    let xi = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(SuccessDistribution {
        h,
        frame_len: l,
        law,
        xi,
        method: XiMethod::BruteForce,
        exact: None,
    })
}

fn enumerate_with_first(h: usize, l: usize, m: usize, top: usize, first: usize) -> Vec<u64> {
    let mut counts = vec![0u64; top + 1];
    // slots of packets 1..h, as a mixed-radix odometer
    let mut digits = vec![0usize; h - 1];
    let mut occ = vec![0usize; l];
    occ[first] = 1;
    occ[0] += h - 1;
    loop {
        let k: usize = occ.iter().filter(|&&x| x >= 1 && x <= m).sum();
        counts[k] += 1;
        // advance
        let mut i = 0;
        loop {
            if i == digits.len() {
                return counts;
            }
            occ[digits[i]] -= 1;
            digits[i] += 1;
            if digits[i] == l {
                digits[i] = 0;
                occ[0] += 1;
                i += 1;
            } else {
                occ[digits[i]] += 1;
                break;
            }
        }
    }
}
