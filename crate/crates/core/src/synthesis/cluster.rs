//! Profile clustering and cluster-conditioned Markov trace generation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::domain::{month_of_day, SLOTS_PER_DAY};

use super::SynthesisError;

const MAX_ITERATIONS: usize = 100;

/// One day of half-hourly values with its day-of-year.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile {
    pub day: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Autumn,
    Winter,
    Spring,
}

impl Season {
    /// Southern-hemisphere meteorological season of a day-of-year.
    pub fn of_day(day: usize) -> Season {
        match month_of_day(day).unwrap_or(1) {
            12 | 1 | 2 => Season::Summer,
            3..=5 => Season::Autumn,
            6..=8 => Season::Winter,
            _ => Season::Spring,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: Vec<f64>,
    /// Member count, used as the Dirichlet weight of the cluster.
    pub count: f64,
    /// Most common season among members.
    pub season_tag: Season,
    /// Row-stochastic transitions between residual bins.
    pub transition: Vec<Vec<f64>>,
    /// Distribution of the first slot's residual bin.
    pub initial: Vec<f64>,
    /// Per-slot (min, max) of member values; samples are clamped into it.
    pub envelope: Option<Vec<(f64, f64)>>,
}

/// Clusters of daily profiles with a Markov chain over the residual from each
/// cluster's centroid. Residuals are discretized on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub clusters: Vec<Cluster>,
    /// `n_states + 1` nondecreasing residual bin edges, kW.
    pub state_grid: Vec<f64>,
}

impl ClusterModel {
    pub fn n_states(&self) -> usize {
        self.state_grid.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |r: String| Err(SynthesisError::InvalidModel(r));
        let n = self.n_states();
        if n == 0 {
            return bad("state grid needs at least two edges".into());
        }
        if self.state_grid.iter().any(|v| !v.is_finite())
            || self.state_grid.windows(2).any(|w| w[1] < w[0])
        {
            return bad("state grid edges must be finite and nondecreasing".into());
        }
        if self.clusters.is_empty() {
            return bad("no clusters".into());
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if c.centroid.len() != SLOTS_PER_DAY {
                return bad(format!("cluster {k}: centroid must have 48 values"));
            }
            if !(c.count >= 1.0) {
                return bad(format!("cluster {k}: count below 1"));
            }
            let rows = c.transition.iter().chain(std::iter::once(&c.initial));
            if c.transition.len() != n {
                return bad(format!("cluster {k}: transition matrix is not {n}x{n}"));
            }
            for row in rows {
                let sum: f64 = row.iter().sum();
                if row.len() != n || row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("cluster {k}: rows must be distributions over {n} states"));
                }
            }
            if let Some(env) = &c.envelope {
                if env.len() != SLOTS_PER_DAY || env.iter().any(|(lo, hi)| !(lo <= hi)) {
                    return bad(format!("cluster {k}: malformed envelope"));
                }
            }
        }
        Ok(())
    }

    fn state_of(&self, r: f64) -> usize {
        let n = self.n_states();
        let lo = self.state_grid[0];
        let hi = self.state_grid[n];
        if hi <= lo {
            return 0;
        }
        (((r - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(members: &[&[f64]]) -> Vec<f64> {
    let mut m = vec![0.0; SLOTS_PER_DAY];
    for x in members {
        for (a, v) in m.iter_mut().zip(x.iter()) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= members.len() as f64);
    m
}

/// Hard-assignment Dirichlet-process clustering: a profile joins its nearest
/// centroid unless the squared distance exceeds `D·σ̄²/concentration`, in
/// which case it seeds a new cluster (σ̄² is the mean per-slot variance).
/// Returns the assignment of every profile and the centroids.
pub fn cluster_profiles(
    data: &[&[f64]],
    concentration: f64,
) -> Result<(Vec<usize>, Vec<Vec<f64>>), SynthesisError> {
    if data.is_empty() {
        return Err(SynthesisError::EmptyHistory);
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(SynthesisError::InvalidParameter(
            "concentration must be positive".into(),
        ));
    }
    let global = mean_of(data);
    let n = data.len() as f64;
    let var: f64 = (0..SLOTS_PER_DAY)
        .map(|s| data.iter().map(|x| (x[s] - global[s]).powi(2)).sum::<f64>() / n)
        .sum::<f64>()
        / SLOTS_PER_DAY as f64;
    // The floor keeps round-off in nearly identical data from splitting clusters.
    let penalty = (SLOTS_PER_DAY as f64 * var / concentration).max(1e-12);

    let mut centroids = vec![global];
    let mut assign = vec![usize::MAX; data.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(k, c)| (k, sq_dist(x, c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let k = if d > penalty {
                centroids.push(x.to_vec());
                centroids.len() - 1
            } else {
                best
            };
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
        }
        // Recompute centroids, dropping empty clusters.
        let mut remap = vec![usize::MAX; centroids.len()];
        let mut next = Vec::new();
        for (k, slot) in remap.iter_mut().enumerate() {
            let members: Vec<&[f64]> = data
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == k)
                .map(|(x, _)| *x)
                .collect();
            if !members.is_empty() {
                *slot = next.len();
                next.push(mean_of(&members));
            }
        }
        for a in assign.iter_mut() {
            *a = remap[*a];
        }
        centroids = next;
        if !changed {
            return Ok((assign, centroids));
        }
    }
    Err(SynthesisError::NoConvergence(MAX_ITERATIONS))
}

/// Cluster the profiles and estimate each cluster's residual chain over
/// `n_states` equal-width bins spanning the observed residual range.
pub fn fit_cluster_model(
    profiles: &[DailyProfile],
    concentration: f64,
    n_states: usize,
) -> Result<ClusterModel, SynthesisError> {
    if profiles.is_empty() {
        return Err(SynthesisError::EmptyHistory);
    }
    if n_states < 2 {
        return Err(SynthesisError::InvalidParameter("need at least two states".into()));
    }
    if let Some(p) = profiles
        .iter()
        .find(|p| p.values.len() != SLOTS_PER_DAY || p.values.iter().any(|v| !v.is_finite()))
    {
        return Err(SynthesisError::InvalidParameter(format!(
            "profile of day {} is not 48 finite values",
            p.day
        )));
    }
    let data: Vec<&[f64]> = profiles.iter().map(|p| p.values.as_slice()).collect();
    let (assign, centroids) = cluster_profiles(&data, concentration)?;

    let residuals: Vec<Vec<f64>> = data
        .iter()
        .zip(&assign)
        .map(|(x, &k)| x.iter().zip(&centroids[k]).map(|(v, c)| v - c).collect())
        .collect();
    let residual = |i: usize, s: usize| residuals[i][s];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in residuals.iter().flatten() {
        lo = lo.min(*r);
        hi = hi.max(*r);
    }
    let state_grid: Vec<f64> = (0..=n_states)
        .map(|k| {
            if k == n_states {
                hi
            } else {
                lo + (hi - lo) * k as f64 / n_states as f64
            }
        })
        .collect();
    let mut model = ClusterModel {
        clusters: Vec::new(),
        state_grid,
    };

    for (k, centroid) in centroids.into_iter().enumerate() {
        let members: Vec<usize> = (0..data.len()).filter(|&i| assign[i] == k).collect();
        let mut counts = vec![vec![1.0; n_states]; n_states];
        let mut first = vec![1.0; n_states];
        let mut envelope = vec![(f64::INFINITY, f64::NEG_INFINITY); SLOTS_PER_DAY];
        let mut seasons = [0usize; 4];
        for &i in &members {
            seasons[Season::of_day(profiles[i].day) as usize] += 1;
            let states: Vec<usize> = (0..SLOTS_PER_DAY)
                .map(|s| model.state_of(residual(i, s)))
                .collect();
            first[states[0]] += 1.0;
            for w in states.windows(2) {
                counts[w[0]][w[1]] += 1.0;
            }
            for (s, e) in envelope.iter_mut().enumerate() {
                e.0 = e.0.min(data[i][s]);
                e.1 = e.1.max(data[i][s]);
            }
        }
        let normalize = |row: &mut Vec<f64>| {
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= t);
        };
        counts.iter_mut().for_each(normalize);
        normalize(&mut first);
        let season_tag = [Season::Summer, Season::Autumn, Season::Winter, Season::Spring]
            [(0..4).max_by_key(|&s| (seasons[s], 3 - s)).expect("four seasons")];
        model.clusters.push(Cluster {
            centroid,
            count: members.len() as f64,
            season_tag,
            transition: counts,
            initial: first,
            envelope: Some(envelope),
        });
    }
    Ok(model)
}

/// A sampled trace with the cluster and residual-state path that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrace {
    pub cluster: usize,
    pub states: Vec<usize>,
    pub values: Vec<f64>,
}

/// Draw cluster weights from Dir(counts), a cluster from those weights, then a
/// `48·days` residual path from the cluster's chain. Each value is the
/// centroid plus a uniform draw inside the residual bin.
pub fn sample_trace_with_states(
    model: &ClusterModel,
    rng_seed: u64,
    days: usize,
) -> Result<SampledTrace, SynthesisError> {
    if days == 0 {
        return Err(SynthesisError::InvalidParameter("days must be positive".into()));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let gammas: Vec<f64> = model
        .clusters
        .iter()
        .map(|c| {
            Gamma::new(c.count, 1.0)
                .expect("count validated")
                .sample(&mut rng)
        })
        .collect();
    let pick = WeightedIndex::new(&gammas)
        .map_err(|e| SynthesisError::InvalidModel(e.to_string()))?;
    let cluster = pick.sample(&mut rng);
    let c = &model.clusters[cluster];
    let rows: Vec<WeightedIndex<f64>> = c
        .transition
        .iter()
        .map(|r| WeightedIndex::new(r).expect("validated row"))
        .collect();
    let init = WeightedIndex::new(&c.initial).expect("validated row");

    let n = days * SLOTS_PER_DAY;
    let mut states = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut state = init.sample(&mut rng);
    for k in 0..n {
        if k > 0 {
            state = rows[state].sample(&mut rng);
        }
        let (a, b) = (model.state_grid[state], model.state_grid[state + 1]);
        let r = if b > a { rng.random_range(a..b) } else { a };
        let s = k % SLOTS_PER_DAY;
        let mut v = c.centroid[s] + r;
        if let Some(env) = &c.envelope {
            v = v.clamp(env[s].0, env[s].1);
        }
        states.push(state);
        values.push(v);
    }
    Ok(SampledTrace {
        cluster,
        states,
        values,
    })
}

pub fn sample_net_load_trace(
    model: &ClusterModel,
    rng_seed: u64,
    days: usize,
) -> Result<Vec<f64>, SynthesisError> {
    sample_trace_with_states(model, rng_seed, days).map(|t| t.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(day: usize, v: f64) -> DailyProfile {
        DailyProfile {
            day,
            values: vec![v; SLOTS_PER_DAY],
        }
    }

    #[test]
    fn identical_profiles_form_one_cluster() {
        let mut p: Vec<DailyProfile> = (1..=100).map(|d| constant(d, 0.0)).collect();
        for (d, x) in p.iter_mut().enumerate() {
            x.values = (0..SLOTS_PER_DAY).map(|s| (s as f64 * 0.1).sin() + 1.0).collect();
            x.day = d + 1;
        }
        for conc in [0.1, 1.0, 100.0] {
            let m = fit_cluster_model(&p, conc, 20).unwrap();
            assert_eq!(m.clusters.len(), 1);
            let c = &m.clusters[0].centroid;
            assert!(c.iter().zip(&p[0].values).all(|(a, b)| (a - b).abs() < 1e-12));
            m.validate().unwrap();
        }
    }

    #[test]
    fn degenerate_chain_is_constant() {
        let model = ClusterModel {
            clusters: vec![Cluster {
                centroid: vec![0.0; SLOTS_PER_DAY],
                count: 1.0,
                season_tag: Season::Summer,
                transition: vec![vec![1.0]],
                initial: vec![1.0],
                envelope: None,
            }],
            state_grid: vec![1.0, 1.0],
        };
        let t = sample_net_load_trace(&model, 3, 2).unwrap();
        assert!(t.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identity_chain_stays_put() {
        let n = 4;
        let eye: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let model = ClusterModel {
            clusters: vec![Cluster {
                centroid: vec![0.0; SLOTS_PER_DAY],
                count: 2.0,
                season_tag: Season::Winter,
                transition: eye,
                initial: vec![0.25; n],
                envelope: None,
            }],
            state_grid: vec![0.0, 1.0, 2.0, 3.0, 4.0],
        };
        for seed in 0..10 {
            let t = sample_trace_with_states(&model, seed, 3).unwrap();
            assert!(t.states.iter().all(|&s| s == t.states[0]));
            let s = t.states[0] as f64;
            assert!(t.values.iter().all(|&v| v >= s && v < s + 1.0));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            fit_cluster_model(&[], 1.0, 20),
            Err(SynthesisError::EmptyHistory)
        ));
        assert!(fit_cluster_model(&[constant(1, 1.0)], 1.0, 1).is_err());
        let model = fit_cluster_model(&[constant(1, 1.0)], 1.0, 2).unwrap();
        assert!(sample_net_load_trace(&model, 0, 0).is_err());
    }

    #[test]
    fn season_tags() {
        assert_eq!(Season::of_day(15), Season::Summer);
        assert_eq!(Season::of_day(190), Season::Winter);
        assert_eq!(Season::of_day(100), Season::Autumn);
        assert_eq!(Season::of_day(300), Season::Spring);
    }
}
