//! Floating-point counterpart of the exact slot tables.
//!
//! Entries are stored normalised as probabilities (`count / slots^packets`)
//! so they stay in range, and every recurrence is a sum of nonnegative terms.

use crate::math::LnChoose;

#[derive(Debug, Clone)]
pub(crate) struct FloatTables {
    m: usize,
    lc: LnChoose,
    /// `good[j][k]`: P(k packets in j slots leave every slot with 1..=m).
    good: Vec<Vec<f64>>,
    /// `bad[v][u]`: P(u packets in v slots leave every slot with 0 or >m).
    bad: Vec<Vec<f64>>,
}

/// Binomial weights `P[Bin(n, 1/slots) = occ]` for `occ = 0..=n`, rescaled to
/// sum to one so that rounding in the log terms does not bias the tables.
fn split_weights(lc: &LnChoose, n: usize, slots: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..=n).map(|occ| lc.ln_binomial_pmf_ratio(n, occ, 1, slots).exp()));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
}

impl FloatTables {
    pub(crate) fn new(m: usize, max_h: usize, max_l: usize) -> Self {
        let lc = LnChoose::new(max_h.max(max_l));
        let mut w = Vec::with_capacity(max_h + 1);

        let mut good = vec![vec![0.0f64; max_h + 1]; max_l + 1];
        good[0][0] = 1.0;
        for j in 1..=max_l {
            for k in j..=max_h.min(j * m) {
                split_weights(&lc, k, j, &mut w);
                let mut acc = 0.0;
                for occ in 1..=m.min(k) {
                    let prev = good[j - 1][k - occ];
                    if prev > 0.0 {
                        acc += w[occ] * prev;
                    }
                }
                good[j][k] = acc;
            }
        }

        let mut bad = vec![vec![0.0f64; max_h + 1]; max_l + 1];
        bad[0][0] = 1.0;
        for v in 1..=max_l {
            for u in 0..=max_h {
                split_weights(&lc, u, v, &mut w);
                let mut acc = w[0] * bad[v - 1][u];
                for occ in (m + 1)..=u {
                    let prev = bad[v - 1][u - occ];
                    if prev > 0.0 {
                        acc += w[occ] * prev;
                    }
                }
                bad[v][u] = acc;
            }
        }
        FloatTables { m, lc, good, bad }
    }

    pub(crate) fn max_h(&self) -> usize {
        self.good[0].len() - 1
    }

    pub(crate) fn max_l(&self) -> usize {
        self.good.len() - 1
    }

    /// Success-count distribution, `k = 0..=min(h, L*m)`.
    ///
    /// Choosing which `j` slots succeed and which `k` packets land in them,
    /// `P[K = k] = sum_j C(L,j) P[Bin(h, j/L) = k] good[j][k] bad[L-j][h-k]`.
    pub(crate) fn xi(&self, h: usize, l: usize) -> Vec<f64> {
        debug_assert!(h <= self.max_h() && l <= self.max_l());
        let top = h.min(l * self.m);
        (0..=top)
            .map(|k| {
                let j_lo = k.div_ceil(self.m);
                let j_hi = l.min(k);
                let mut acc = 0.0;
                for j in j_lo..=j_hi {
                    let good = self.good[j][k];
                    let bad = self.bad[l - j][h - k];
                    if good <= 0.0 || bad <= 0.0 {
                        continue;
                    }
                    let ln_term = self.lc.get(l, j)
                        + self.lc.ln_binomial_pmf_ratio(h, k, j, l)
                        + good.ln()
                        + bad.ln();
                    acc += ln_term.exp();
                }
                acc
            })
            .collect()
    }
}
