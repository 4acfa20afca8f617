//! Hot water draws: Poisson event counts per interval of the day, uniform
//! placement over the interval's slots and Weibull draw volumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Weibull};
use serde::{Deserialize, Serialize};

use crate::domain::SLOTS_PER_DAY;

use super::SynthesisError;

/// Interval bounds as (first slot, last slot), 1-based; the first interval
/// wraps past midnight (23:00 to 02:00).
pub const HW_INTERVALS: [(usize, usize); 8] = [
    (47, 4),
    (5, 10),
    (11, 16),
    (17, 22),
    (23, 28),
    (29, 34),
    (35, 40),
    (41, 46),
];

const MIN_FIT_DAYS: usize = 30;
const SHAPE_CAP: f64 = 1e4;

/// 0-based slot indices covered by a 1-based inclusive interval.
pub fn interval_slots(start: usize, end: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = start;
    loop {
        out.push(s - 1);
        if s == end {
            break;
        }
        s = s % SLOTS_PER_DAY + 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwInterval {
    pub start_slot: usize,
    pub end_slot: usize,
    /// Mean number of draw events per day in the interval.
    pub mu: f64,
    /// Weibull scale, L. Absent when no draws were observed.
    pub kappa: Option<f64>,
    /// Weibull shape. Absent when no draws were observed.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotWaterModel {
    pub intervals: Vec<HwInterval>,
}

impl HotWaterModel {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |r: String| Err(SynthesisError::InvalidModel(r));
        if self.intervals.len() != HW_INTERVALS.len() {
            return bad(format!("expected {} intervals", HW_INTERVALS.len()));
        }
        for (iv, &(a, b)) in self.intervals.iter().zip(&HW_INTERVALS) {
            if (iv.start_slot, iv.end_slot) != (a, b) {
                return bad(format!("interval {}..{} does not match the day split", iv.start_slot, iv.end_slot));
            }
            if !(iv.mu >= 0.0 && iv.mu.is_finite()) {
                return bad(format!("interval {a}..{b}: rate must be non-negative"));
            }
            if iv.mu > 0.0 {
                match (iv.kappa, iv.sigma) {
                    (Some(k), Some(s)) if k > 0.0 && s > 0.0 && k.is_finite() && s.is_finite() => {}
                    _ => return bad(format!("interval {a}..{b}: draws need positive scale and shape")),
                }
            }
        }
        Ok(())
    }
}

/// Maximum-likelihood Weibull fit by Newton iteration on the shape equation
/// from shape 1. Returns (scale, shape).
pub fn fit_weibull(x: &[f64]) -> Result<(f64, f64), SynthesisError> {
    if x.is_empty() || x.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(SynthesisError::InvalidParameter(
            "Weibull fit needs positive samples".into(),
        ));
    }
    // The shape equation is scale-invariant; normalizing keeps x^σ ≤ 1.
    let top = x.iter().copied().fold(0.0, f64::max);
    let logs: Vec<f64> = x.iter().map(|v| (v / top).ln()).collect();
    let n = x.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;
    let eval = |s: f64| {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let w = (s * l).exp();
            a += w;
            b += w * l;
            c += w * l * l;
        }
        let g = b / a - 1.0 / s - mean_log;
        let dg = (c * a - b * b) / (a * a) + 1.0 / (s * s);
        (g, dg, a)
    };
    let mut s = 1.0f64;
    for _ in 0..200 {
        let (g, dg, _) = eval(s);
        let mut next = s - g / dg;
        if next <= 0.0 {
            next = s / 2.0;
        }
        next = next.min(SHAPE_CAP);
        let done = (next - s).abs() < 1e-8 || next == SHAPE_CAP;
        s = next;
        if done {
            break;
        }
    }
    let (_, _, a) = eval(s);
    let scale = top * (a / n).powf(1.0 / s);
    Ok((scale, s))
}

/// Fit from per-slot draw volumes covering whole days.
pub fn fit_hotwater_model(draws: &[f64]) -> Result<HotWaterModel, SynthesisError> {
    if !draws.len().is_multiple_of(SLOTS_PER_DAY) {
        return Err(SynthesisError::InvalidParameter(
            "draw history must cover whole days".into(),
        ));
    }
    let days = draws.len() / SLOTS_PER_DAY;
    if days < MIN_FIT_DAYS {
        return Err(SynthesisError::InsufficientHistory {
            days,
            needed: MIN_FIT_DAYS,
        });
    }
    if draws.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(SynthesisError::InvalidParameter(
            "draws must be finite and non-negative".into(),
        ));
    }
    let mut intervals = Vec::new();
    for &(a, b) in &HW_INTERVALS {
        let slots = interval_slots(a, b);
        let mags: Vec<f64> = draws
            .chunks(SLOTS_PER_DAY)
            .flat_map(|day| slots.iter().map(move |&s| day[s]))
            .filter(|&v| v > 0.0)
            .collect();
        let mu = mags.len() as f64 / days as f64;
        let (kappa, sigma) = if mags.is_empty() {
            (None, None)
        } else {
            let (k, s) = fit_weibull(&mags)?;
            (Some(k), Some(s))
        };
        intervals.push(HwInterval {
            start_slot: a,
            end_slot: b,
            mu,
            kappa,
            sigma,
        });
    }
    Ok(HotWaterModel { intervals })
}

/// A single draw event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawEvent {
    /// Index into the model's intervals.
    pub interval: usize,
    /// 0-based slot of the day.
    pub slot: usize,
    pub litres: f64,
}

/// One day of draw events using `rng`, interval by interval.
pub fn sample_hotwater_events<R: Rng>(model: &HotWaterModel, rng: &mut R) -> Vec<DrawEvent> {
    let mut events = Vec::new();
    for (i, iv) in model.intervals.iter().enumerate() {
        if iv.mu <= 0.0 {
            continue;
        }
        let count = Poisson::new(iv.mu).expect("positive rate").sample(rng) as usize;
        if count == 0 {
            continue;
        }
        let slots = interval_slots(iv.start_slot, iv.end_slot);
        let size = Weibull::new(
            iv.kappa.expect("validated model"),
            iv.sigma.expect("validated model"),
        )
        .expect("positive parameters");
        for _ in 0..count {
            let slot = slots[rng.random_range(0..slots.len())];
            events.push(DrawEvent {
                interval: i,
                slot,
                litres: size.sample(rng),
            });
        }
    }
    events
}

/// One day of draws (L per slot) using `rng`; events in the same slot add up.
pub fn sample_hotwater_day_with<R: Rng>(model: &HotWaterModel, rng: &mut R) -> Vec<f64> {
    let mut day = vec![0.0; SLOTS_PER_DAY];
    for e in sample_hotwater_events(model, rng) {
        day[e.slot] += e.litres;
    }
    day
}

pub fn sample_hotwater_day(model: &HotWaterModel, rng_seed: u64) -> Result<Vec<f64>, SynthesisError> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sample_hotwater_day_with(model, &mut rng))
}

/// Consecutive days from one stream.
pub fn sample_hotwater_days(
    model: &HotWaterModel,
    rng_seed: u64,
    days: usize,
) -> Result<Vec<f64>, SynthesisError> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..days)
        .flat_map(|_| sample_hotwater_day_with(model, &mut rng))
        .collect())
}
