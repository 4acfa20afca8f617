use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use statrs::function::gamma::gamma;

use lvtariff::domain::SLOTS_PER_DAY;
use lvtariff::fixtures::fixture_set;
use lvtariff::synthesis::{
    cluster_profiles, fit_cluster_model, fit_models, fit_weibull, interval_slots,
    sample_customer_traces, sample_hotwater_day, sample_hotwater_days, sample_net_load_trace,
    sample_trace_with_states, DailyProfile, HotWaterModel, HwInterval, SynthesisModels,
    SynthesisParams, HW_INTERVALS,
};

fn single_interval_model(which: usize, mu: f64, kappa: f64, sigma: f64) -> HotWaterModel {
    HotWaterModel {
        intervals: HW_INTERVALS
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| HwInterval {
                start_slot: a,
                end_slot: b,
                mu: if i == which { mu } else { 0.0 },
                kappa: (i == which).then_some(kappa),
                sigma: (i == which).then_some(sigma),
            })
            .collect(),
    }
}

/// Minimum within-cluster sum of squares over every split into two groups.
fn exhaustive_two_means(data: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = data.len();
    let mut best = (f64::INFINITY, Vec::new());
    // Fixing the first profile in group 0 removes mirrored splits.
    for mask in 0u32..(1 << (n - 1)) {
        let groups: [Vec<&Vec<f64>>; 2] = [
            (0..n).filter(|&i| i == 0 || mask >> (i - 1) & 1 == 0).map(|i| &data[i]).collect(),
            (1..n).filter(|&i| mask >> (i - 1) & 1 == 1).map(|i| &data[i]).collect(),
        ];
        if groups[1].is_empty() {
            continue;
        }
        let mut cost = 0.0;
        let mut centres = Vec::new();
        for g in &groups {
            let c: Vec<f64> = (0..SLOTS_PER_DAY)
                .map(|s| g.iter().map(|x| x[s]).sum::<f64>() / g.len() as f64)
                .collect();
            cost += g
                .iter()
                .map(|x| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum::<f64>();
            centres.push(c);
        }
        if cost < best.0 {
            best = (cost, centres);
        }
    }
    best
}

#[test]
fn two_level_groups_match_exhaustive_two_means() {
    let mut data = Vec::new();
    for i in 0..12 {
        let level = if i % 2 == 0 { 0.5 } else { 5.0 };
        data.push(
            (0..SLOTS_PER_DAY)
                .map(|s| level + 0.05 * (((i * 31 + s * 7) % 11) as f64 / 10.0 - 0.5))
                .collect::<Vec<f64>>(),
        );
    }
    let refs: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
    let (assign, centroids) = cluster_profiles(&refs, 4.0).unwrap();
    assert_eq!(centroids.len(), 2);
    let (_, oracle) = exhaustive_two_means(&data);
    let mut ours: Vec<f64> = centroids.iter().map(|c| c.iter().sum::<f64>() / 48.0).collect();
    let mut theirs: Vec<f64> = oracle.iter().map(|c| c.iter().sum::<f64>() / 48.0).collect();
    ours.sort_by(f64::total_cmp);
    theirs.sort_by(f64::total_cmp);
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert!((ours[0] - 0.5).abs() < 0.05 && (ours[1] - 5.0).abs() < 0.05);
    assert!(assign.iter().enumerate().all(|(i, &k)| k == assign[i % 2]));
}

#[test]
fn sampled_chain_reproduces_its_transition_matrix() {
    // Residuals alternate in runs so both states are well populated.
    let profiles: Vec<DailyProfile> = (0..60)
        .map(|d| DailyProfile {
            day: d + 1,
            values: (0..SLOTS_PER_DAY)
                .map(|s| if (s / 3 + d) % 4 == 0 { 2.0 } else { 1.0 })
                .collect(),
        })
        .collect();
    let model = fit_cluster_model(&profiles, 1e-6, 2).unwrap();
    assert_eq!(model.clusters.len(), 1);
    let days = 10_000 / SLOTS_PER_DAY + 1;
    let trace = sample_trace_with_states(&model, 2024, days).unwrap();
    let mut counts = [[0.0f64; 2]; 2];
    for w in trace.states.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    for (i, row) in counts.iter().enumerate() {
        let total: f64 = row.iter().sum();
        let l1: f64 = row
            .iter()
            .zip(&model.clusters[0].transition[i])
            .map(|(c, p)| (c / total - p).abs())
            .sum();
        assert!(l1 < 0.02, "row {i}: L1 {l1}");
    }
}

#[test]
fn sampling_is_reproducible() {
    let set = fixture_set(2, 1, 40, 5);
    let hist: Vec<_> = set.iter().map(|(h, t)| (h.id.clone(), t.clone())).collect();
    let models = fit_models(&hist, &SynthesisParams::default()).unwrap();
    let a = sample_net_load_trace(&models.demand, 11, 3).unwrap();
    let b = sample_net_load_trace(&models.demand, 11, 3).unwrap();
    assert_eq!(a, b);
    let c = sample_net_load_trace(&models.demand, 12, 3).unwrap();
    assert_ne!(a, c);
    assert_eq!(
        sample_hotwater_day(&models.hot_water, 3).unwrap(),
        sample_hotwater_day(&models.hot_water, 3).unwrap()
    );
}

#[test]
fn poisson_counts_match_rate() {
    let mu = 2.0;
    let n = 10_000;
    let model = single_interval_model(3, mu, 10.0, 2.0);
    let slots = interval_slots(HW_INTERVALS[3].0, HW_INTERVALS[3].1);
    let days = sample_hotwater_days(&model, 77, n).unwrap();
    let mut zero_days = 0usize;
    for (d, day) in days.chunks(SLOTS_PER_DAY).enumerate() {
        let inside: f64 = slots.iter().map(|&s| day[s]).sum();
        let total: f64 = day.iter().sum();
        assert!(day.iter().all(|&v| v >= 0.0));
        assert_eq!(inside, total, "draw outside the interval on day {d}");
        if total == 0.0 {
            zero_days += 1;
        }
    }
    let p0 = zero_days as f64 / n as f64;
    assert!((p0 - (-mu).exp()).abs() < 0.01, "P(0) {p0}");
}

#[test]
fn compound_draw_volume_matches_weibull_mean() {
    // Daily volume in one interval is a compound Poisson sum with mean
    // μ·E[X] and variance μ·E[X²], independent of slot collisions.
    let (mu, kappa, sigma) = (1.5, 12.0, 1.7);
    let n = 10_000;
    let model = single_interval_model(6, mu, kappa, sigma);
    let days = sample_hotwater_days(&model, 91, n).unwrap();
    let totals: Vec<f64> = days.chunks(SLOTS_PER_DAY).map(|d| d.iter().sum()).collect();
    let mean = totals.iter().sum::<f64>() / n as f64;
    let ex = kappa * gamma(1.0 + 1.0 / sigma);
    let ex2 = kappa * kappa * gamma(1.0 + 2.0 / sigma);
    let se = (mu * ex2 / n as f64).sqrt();
    assert!((mean - mu * ex).abs() < 3.0 * se, "{mean} vs {}", mu * ex);
}

#[test]
fn weibull_refit_recovers_exponential_generator() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = Weibull::new(8.0, 1.0).unwrap();
    let x: Vec<f64> = (0..5_000).map(|_| w.sample(&mut rng)).collect();
    let (k, s) = fit_weibull(&x).unwrap();
    assert!((k - 8.0).abs() / 8.0 < 0.1, "scale {k}");
    assert!((s - 1.0).abs() < 0.1, "shape {s}");
}

#[test]
fn models_survive_json_round_trip() {
    let set = fixture_set(3, 1, 45, 21);
    let hist: Vec<_> = set.iter().map(|(h, t)| (h.id.clone(), t.clone())).collect();
    let models = fit_models(&hist, &SynthesisParams::default()).unwrap();
    let back = SynthesisModels::from_json(&models.to_json().unwrap()).unwrap();
    assert_eq!(models, back);
    for c in back.demand.clusters.iter().chain(&back.pv.clusters) {
        for row in &c.transition {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    let t = sample_customer_traces(&back, 4, 0, Some(5.0), 1, 365).unwrap();
    assert!(t.is_full_year());
    assert!(t.pv.iter().all(|&v| v <= 5.0 + 1e-9));
    let no_pv = sample_customer_traces(&back, 4, 1, None, 1, 2).unwrap();
    assert!(no_pv.pv.iter().all(|&v| v == 0.0));
}
