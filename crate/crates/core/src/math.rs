//! Small numeric helpers shared by the combinatorial modules.

/// Triangular table of `ln C(n, k)`, each entry summed from `ln((n-i+1)/i)`
/// with compensation so the error stays at a few ulps of the result rather
/// than of `ln(n!)`.
#[derive(Debug, Clone)]
pub struct LnChoose {
    rows: Vec<Vec<f64>>,
}

impl LnChoose {
    pub fn new(n_max: usize) -> Self {
        let rows = (0..=n_max)
            .map(|n| {
                let half = n / 2;
                let mut row = Vec::with_capacity(half + 1);
                row.push(0.0);
                let mut sum = 0.0f64;
                let mut comp = 0.0f64;
                for k in 1..=half {
                    let v = ((n - k + 1) as f64 / k as f64).ln();
                    let t = sum + v;
                    if sum.abs() >= v.abs() {
                        comp += (sum - t) + v;
                    } else {
                        comp += (v - t) + sum;
                    }
                    sum = t;
                    row.push(sum + comp);
                }
                row
            })
            .collect();
        LnChoose { rows }
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        let row = &self.rows[n];
        row[k.min(n - k)]
    }

    /// `ln P[Bin(n, p) = k]` with `p = num/den`, exact at `p = 0` and `p = 1`.
    #[inline]
    pub fn ln_binomial_pmf_ratio(&self, n: usize, k: usize, num: usize, den: usize) -> f64 {
        debug_assert!(num <= den && den > 0);
        if num == 0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if num == den {
            return if k == n { 0.0 } else { f64::NEG_INFINITY };
        }
        let p = num as f64 / den as f64;
        let mut acc = self.get(n, k);
        if k > 0 {
            acc += k as f64 * p.ln();
        }
        if n > k {
            acc += (n - k) as f64 * (-p).ln_1p();
        }
        acc
    }
}

/// `ln(n!)` without a table, exact summation for small n and Stirling's
/// series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 256 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        let x = n as f64 + 1.0;
        // Stirling series for ln Gamma(x)
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

/// `P[Bin(n, p) = k]` evaluated in log space.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_c = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    (ln_c + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
