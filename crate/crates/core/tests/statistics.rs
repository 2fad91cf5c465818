use fsa_core::arrivals::{frame_arrival_pmf, ArrivalModel, ArrivalSampler};
use fsa_core::occupancy::{expected_successes, xi, SuccessLaw};
use fsa_core::sim::empirical_xi;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic with cells of expected count below 5 pooled into the
/// last cell; returns the statistic and its degrees of freedom.
fn chi_square(counts: &[u64], probs: &[f64], n: u64) -> (f64, f64) {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0);
    for (i, &p) in probs.iter().enumerate() {
        pending.0 += counts.get(i).copied().unwrap_or(0) as f64;
        pending.1 += p * n as f64;
        if pending.1 >= 5.0 {
            cells.push(pending);
            pending = (0.0, 0.0);
        }
    }
    let rest: u64 = counts.iter().skip(probs.len()).sum();
    pending.0 += rest as f64;
    pending.1 += (1.0 - probs.iter().sum::<f64>()).max(0.0) * n as f64;
    if let Some(last) = cells.last_mut() {
        last.0 += pending.0;
        last.1 += pending.1;
    }
    let stat = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (stat, cells.len() as f64 - 1.0)
}

#[test]
fn frame_sampler_fits_frame_law() {
    let n = 100_000u64;
    let cases = [
        (ArrivalModel::poisson(0.3).unwrap(), 7),
        (ArrivalModel::bernoulli(0.2).unwrap(), 12),
        (ArrivalModel::geometric(0.5).unwrap(), 4),
        (ArrivalModel::custom(vec![0.6, 0.1, 0.3]).unwrap(), 3),
    ];
    for (i, (model, l)) in cases.iter().enumerate() {
        let law = frame_arrival_pmf(model, *l, None).unwrap();
        let sampler = ArrivalSampler::new(model);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let mut counts = vec![0u64; law.pmf.len() + 1];
        for _ in 0..n {
            let k = sampler.sample_frame(&mut rng, *l).min(law.pmf.len());
            counts[k] += 1;
        }
        let (stat, df) = chi_square(&counts, &law.pmf, n);
        let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "case {i}: chi2={stat} df={df} critical={critical}");
    }
}

#[test]
fn empirical_success_law_fits_exact() {
    let n = 100_000u64;
    for (h, l, law) in [(3, 2, SuccessLaw::Mpr { capacity: 2 }), (4, 4, SuccessLaw::Spr), (9, 5, SuccessLaw::Mpr { capacity: 3 })] {
        let exact = xi(h, l, law).unwrap();
        let emp = empirical_xi(h, l, law, n as usize, 7).unwrap();
        let counts: Vec<u64> = emp.distribution.xi.iter().map(|p| (p * n as f64).round() as u64).collect();
        let (stat, df) = chi_square(&counts, &exact.xi, n);
        let critical = ChiSquared::new(df.max(1.0)).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "{law} h={h} L={l}: chi2={stat}");
    }
}

#[test]
fn empirical_tv_shrinks_with_trials() {
    for (h, l, law) in [(3, 2, SuccessLaw::Mpr { capacity: 2 }), (4, 4, SuccessLaw::Spr), (8, 6, SuccessLaw::Spr)] {
        let tv: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&t| empirical_xi(h, l, law, t, 11).unwrap().tv_to_exact.unwrap())
            .collect();
        assert!(tv[0] > tv[2], "{law} h={h} L={l}: {tv:?}");
        assert!(tv[2] < 0.01, "{law} h={h} L={l}: {tv:?}");
    }
}

#[test]
fn empirical_mean_within_three_standard_errors() {
    let n = 50_000usize;
    for (h, l, law) in [
        (10, 10, SuccessLaw::Spr),
        (30, 12, SuccessLaw::Spr),
        (20, 8, SuccessLaw::Mpr { capacity: 3 }),
        (40, 40, SuccessLaw::Mpr { capacity: 2 }),
    ] {
        let exact = xi(h, l, law).unwrap();
        let r = expected_successes(h, l, law).unwrap();
        let var: f64 = exact.xi.iter().enumerate().map(|(k, p)| p * (k as f64 - r).powi(2)).sum();
        let se = (var / n as f64).sqrt();
        let mean = empirical_xi(h, l, law, n, 3).unwrap().distribution.mean();
        assert!((mean - r).abs() < 3.0 * se, "{law} h={h} L={l}: mean={mean} r={r} se={se}");
    }
}
