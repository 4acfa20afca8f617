//! Deterministic synthetic customers and histories for tests, examples and
//! desk-scale studies when no measured data is at hand.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, Weibull};
use serde::{Deserialize, Serialize};

use crate::domain::{
    BatteryParams, CustomerRecord, CustomerTraces, EwhParams, Scenario, TariffSchedule,
    DAYS_PER_YEAR, PV_BATTERY_SIZES, SLOTS_PER_DAY,
};
use crate::hems::fit_draws_to_tank;
use crate::montecarlo::largest_remainder;
use crate::seed::rng_for;
use crate::synthesis::{interval_slots, HW_INTERVALS};

/// Physical make-up of a household, independent of scenario and tariff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    /// Installed PV when the household is given one, kWp.
    pub pv_size: f64,
    pub battery_kwh: f64,
    pub ewh: EwhParams,
    /// Scales the household's demand profile.
    pub demand_scale: f64,
    /// Scales hot water event rates.
    pub hot_water_scale: f64,
}

impl Household {
    /// Record for one scenario and tariff; PV and battery are attached only
    /// where the scenario includes them.
    pub fn record(&self, scenario: Scenario, tariff: TariffSchedule) -> CustomerRecord {
        CustomerRecord {
            id: self.id.clone(),
            scenario,
            tariff,
            battery: (scenario == Scenario::III).then(|| BatteryParams::with_capacity(self.battery_kwh)),
            ewh: self.ewh,
            pv_size: (scenario != Scenario::I).then_some(self.pv_size),
            inverter_eta: 1.0,
            grid_limit: CustomerRecord::DEFAULT_GRID_LIMIT_KW,
        }
    }
}

/// `n` households with PV/battery classes and tank sizes split by the
/// catalogue shares, other traits drawn from `seed`.
pub fn households(n: usize, seed: u64) -> Vec<Household> {
    let pv_shares: Vec<f64> = PV_BATTERY_SIZES.iter().map(|c| c.0).collect();
    let pv_counts = largest_remainder(n, &pv_shares);
    let tank_shares: Vec<f64> = EwhParams::SIZES.iter().map(|t| t.0).collect();
    let tank_counts = largest_remainder(n, &tank_shares);
    let pv_class: Vec<usize> = pv_counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect();
    let tank_class: Vec<usize> = tank_counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect();
    (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, &[0x686f_7573, i as u64]);
            let (_, lo, hi, batt) = PV_BATTERY_SIZES[pv_class[i]];
            let pv_size = (rng.random_range(lo..=hi) * 10.0_f64).round() / 10.0;
            let (_, v, q, a) = EwhParams::SIZES[tank_class[(i + n / 2) % n]];
            Household {
                id: format!("c{:03}", i + 1),
                pv_size,
                battery_kwh: batt,
                ewh: EwhParams::tank(v, q, a),
                demand_scale: rng.random_range(0.7..1.3),
                hot_water_scale: rng.random_range(0.7..1.3) * v / 160.0,
            }
        })
        .collect()
}

/// Event rates per hot water interval for an average household.
const HW_RATES: [f64; 8] = [0.15, 0.05, 1.3, 0.6, 0.35, 0.3, 0.9, 0.7];
const HW_SCALE_L: f64 = 14.0;
const HW_SHAPE: f64 = 1.6;
const HW_MAX_DRAW_L: f64 = 50.0;

fn season_cos(day: usize, peak_day: f64) -> f64 {
    (2.0 * PI * (day as f64 - peak_day) / DAYS_PER_YEAR as f64).cos()
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-((h - centre) / width).powi(2)).exp()
}

/// One day of base demand (kW), unit-size PV output (kW per kWp) and hot
/// water draws (L) for household `index`.
fn history_day(h: &Household, index: usize, day: usize, seed: u64) -> [Vec<f64>; 3] {
    let mut rng = rng_for(seed, &[0x6869_7374, index as u64, day as u64]);
    // Southern hemisphere: long days around day 355, heating load in July.
    let day_hours = 12.0 + 2.2 * season_cos(day, 355.0);
    let (rise, set) = (12.5 - day_hours / 2.0, 12.5 + day_hours / 2.0);
    let sun_peak = 0.78 + 0.08 * season_cos(day, 355.0);
    let cloud = 0.35 + 0.65 * rng.random::<f64>().sqrt();
    let season = 1.0 + 0.25 * season_cos(day, 196.0) + 0.1 * season_cos(day, 20.0).max(0.0);
    let daily = h.demand_scale * season * rng.random_range(0.85..1.15);
    let morning = rng.random_range(0.4..1.2);
    let evening = rng.random_range(1.0..2.2);

    let mut demand = Vec::with_capacity(SLOTS_PER_DAY);
    let mut pv = Vec::with_capacity(SLOTS_PER_DAY);
    for s in 0..SLOTS_PER_DAY {
        let hr = s as f64 / 2.0 + 0.25;
        let shape = 0.3
            + morning * bump(hr, 7.5, 1.0)
            + evening * bump(hr, 19.0, 1.6)
            + if (8.0..17.0).contains(&hr) { 0.15 } else { 0.0 };
        demand.push(daily * shape * rng.random_range(0.9..1.1));
        let p = if hr > rise && hr < set {
            let x = PI * (hr - rise) / (set - rise);
            sun_peak * x.sin().powf(1.5) * cloud * rng.random_range(0.85..1.0)
        } else {
            0.0
        };
        pv.push(p);
    }
    // A few appliance events, mostly in the evening.
    let events = Poisson::new(1.2).expect("positive rate").sample(&mut rng) as usize;
    for _ in 0..events {
        let start = if rng.random_bool(0.6) {
            rng.random_range(34..44)
        } else {
            rng.random_range(12..34)
        };
        let kw = rng.random_range(1.0..2.5);
        for s in start..(start + rng.random_range(1..3)).min(SLOTS_PER_DAY) {
            demand[s] += kw;
        }
    }
    let size = Weibull::new(HW_SCALE_L, HW_SHAPE).expect("positive parameters");
    let mut draws = vec![0.0; SLOTS_PER_DAY];
    for (&(a, b), &rate) in HW_INTERVALS.iter().zip(&HW_RATES) {
        let mu = rate * h.hot_water_scale;
        let k = Poisson::new(mu).expect("positive rate").sample(&mut rng) as usize;
        let slots = interval_slots(a, b);
        for _ in 0..k {
            let s = slots[rng.random_range(0..slots.len())];
            draws[s] += size.sample(&mut rng).min(HW_MAX_DRAW_L);
        }
    }
    [demand, pv, draws]
}

/// Measured-looking history of household `index` over `days` days from
/// `start_day`, with draws trimmed on days the tank could not cover. Each day depends only on (seed, index, day), so windows of a
/// longer history match shorter histories exactly.
pub fn history(h: &Household, index: usize, start_day: usize, days: usize, seed: u64) -> CustomerTraces {
    let mut t = CustomerTraces {
        start_day,
        base_demand: Vec::with_capacity(days * SLOTS_PER_DAY),
        pv: Vec::with_capacity(days * SLOTS_PER_DAY),
        hw_draw: Vec::with_capacity(days * SLOTS_PER_DAY),
    };
    for d in start_day..start_day + days {
        let [demand, pv, draws] = history_day(h, index, d, seed);
        t.base_demand.extend(demand);
        t.pv.extend(pv.into_iter().map(|p| p * h.pv_size));
        t.hw_draw.extend(draws);
    }
    fit_draws_to_tank(&h.ewh, &mut t.hw_draw);
    t
}

/// Households paired with their histories.
pub fn fixture_set(n: usize, start_day: usize, days: usize, seed: u64) -> Vec<(Household, CustomerTraces)> {
    households(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let t = history(&h, i, start_day, days, seed);
            (h, t)
        })
        .collect()
}
