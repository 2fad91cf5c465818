//! Exact integer counting of successful-packet configurations.
//!
//! All counts are numbers of slot assignments out of `L^h`; the caller turns
//! them into probabilities with a single rational division.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Pascal triangle of binomial coefficients up to `n_max`.
#[derive(Debug, Clone)]
pub(crate) struct Binomials(Vec<Vec<BigUint>>);

impl Binomials {
    pub(crate) fn new(n_max: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let mut row = Vec::with_capacity(n + 1);
            for k in 0..=n {
                if k == 0 || k == n {
                    row.push(BigUint::one());
                } else {
                    let prev = &rows[n - 1];
                    row.push(&prev[k - 1] + &prev[k]);
                }
            }
            rows.push(row);
        }
        Binomials(rows)
    }

    #[inline]
    pub(crate) fn get(&self, n: usize, k: usize) -> &BigUint {
        &self.0[n][k]
    }
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

fn falling(n: usize, k: usize) -> BigUint {
    (0..k).fold(BigUint::one(), |acc, j| acc * BigUint::from(n - j))
}

/// Number of ways to place `u` labelled packets into `v` slots so that no slot
/// holds exactly one packet, via the alternating inclusion-exclusion sum
///
/// `G(V,u) = V^u + sum_{t=1..u} (-1)^t prod_{j<t} (u-j)(V-j) (V-t)^(u-t) / t!`.
///
/// Terms with `t > V` vanish because the product picks up the factor `V - V`.
pub(crate) fn no_singleton_count(v: usize, u: usize) -> BigUint {
    let mut acc = BigInt::from(BigUint::from(v).pow(u as u32));
    let mut prod = BigUint::one();
    let mut t_fact = BigUint::one();
    for t in 1..=u.min(v) {
        prod *= BigUint::from((u - t + 1) * (v - t + 1));
        t_fact *= BigUint::from(t);
        let term = &prod * BigUint::from(v - t).pow((u - t) as u32) / &t_fact;
        if t % 2 == 1 {
            acc -= BigInt::from(term);
        } else {
            acc += BigInt::from(term);
        }
    }
    acc.to_biguint().expect("inclusion-exclusion count is nonnegative")
}

/// Counts of assignments with exactly `k` singleton slots, `k = 0..=min(h,L)`,
/// by case analysis on `k`.
pub(crate) fn spr_counts(h: usize, l: usize) -> Vec<BigUint> {
    let top = h.min(l);
    (0..=top)
        .map(|k| {
            if k == l && l < h {
                BigUint::zero()
            } else if k == h {
                // every packet alone in its slot: L!/(L-h)!
                falling(l, h)
            } else {
                falling(l, k) / factorial(k) * falling(h, k) * no_singleton_count(l - k, h - k)
            }
        })
        .collect()
}

/// Slot-by-slot assignment counts for capacity `m`:
/// `good[j][k]`: `k` packets into `j` slots, every slot holding `1..=m`;
/// `bad[v][u]`: `u` packets into `v` slots, every slot holding `0` or `> m`.
#[derive(Debug, Clone)]
pub(crate) struct ExactMprTables {
    m: usize,
    binom: Binomials,
    good: Vec<Vec<BigUint>>,
    bad: Vec<Vec<BigUint>>,
}

impl ExactMprTables {
    pub(crate) fn new(m: usize, max_h: usize, max_l: usize) -> Self {
        let binom = Binomials::new(max_h.max(max_l));
        let mut good = vec![vec![BigUint::zero(); max_h + 1]; max_l + 1];
        good[0][0] = BigUint::one();
        for j in 1..=max_l {
            for k in j..=max_h.min(j * m) {
                let mut acc = BigUint::zero();
                for occ in 1..=m.min(k) {
                    let prev = &good[j - 1][k - occ];
                    if !prev.is_zero() {
                        acc += binom.get(k, occ) * prev;
                    }
                }
                good[j][k] = acc;
            }
        }
        let mut bad = vec![vec![BigUint::zero(); max_h + 1]; max_l + 1];
        bad[0][0] = BigUint::one();
        for v in 1..=max_l {
            for u in 0..=max_h {
                let mut acc = bad[v - 1][u].clone();
                for occ in (m + 1)..=u {
                    let prev = &bad[v - 1][u - occ];
                    if !prev.is_zero() {
                        acc += binom.get(u, occ) * prev;
                    }
                }
                bad[v][u] = acc;
            }
        }
        ExactMprTables { m, binom, good, bad }
    }

    /// Counts of assignments with exactly `k` successful packets,
    /// `k = 0..=min(h, L*m)`.
    pub(crate) fn counts(&self, h: usize, l: usize) -> Vec<BigUint> {
        let top = h.min(l * self.m);
        (0..=top)
            .map(|k| {
                let j_lo = k.div_ceil(self.m);
                let j_hi = l.min(k);
                let mut acc = BigUint::zero();
                for j in j_lo..=j_hi {
                    let good = &self.good[j][k];
                    let bad = &self.bad[l - j][h - k];
                    if good.is_zero() || bad.is_zero() {
                        continue;
                    }
                    acc += self.binom.get(l, j) * self.binom.get(h, k) * good * bad;
                }
                acc
            })
            .collect()
    }
}

/// Turns counts out of `L^h` into exact rationals and correctly rounded floats.
pub(crate) fn normalise(counts: Vec<BigUint>, h: usize, l: usize) -> (Vec<BigRational>, Vec<f64>) {
    let total = BigInt::from(BigUint::from(l).pow(h as u32));
    let exact: Vec<BigRational> = counts
        .into_iter()
        .map(|c| BigRational::new(BigInt::from(c), total.clone()))
        .collect();
    let floats = exact
        .iter()
        .map(|r| r.to_f64().expect("probability is finite"))
        .collect();
    (exact, floats)
}
