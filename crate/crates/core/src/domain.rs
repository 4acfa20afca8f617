//! Shared vocabulary: half-hourly time indexing, tariffs, DER parameters and
//! customer records.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SLOTS_PER_DAY: usize = 48;
pub const DAYS_PER_YEAR: usize = 365;
/// Length of one slot in hours.
pub const DT_HOURS: f64 = 0.5;

const MONTH_LENGTHS: [u16; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("slot {0} outside 1..=48")]
    SlotOutOfRange(usize),
    #[error("day {0} outside 1..=365")]
    DayOutOfRange(usize),
    #[error("invalid tariff `{name}`: {reason}")]
    InvalidTariff { name: String, reason: String },
    #[error("invalid battery parameters: {0}")]
    InvalidBattery(String),
    #[error("invalid water heater parameters: {0}")]
    InvalidEwh(String),
    #[error("invalid customer `{id}`: {reason}")]
    InvalidCustomer { id: String, reason: String },
    #[error("invalid traces: {0}")]
    InvalidTraces(String),
    #[error("unknown tariff preset `{0}`")]
    UnknownPreset(String),
    #[error("tariff document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Month (1..=12) containing `day` of a non-leap year.
pub fn month_of_day(day: usize) -> Result<usize, DomainError> {
    if !(1..=DAYS_PER_YEAR).contains(&day) {
        return Err(DomainError::DayOutOfRange(day));
    }
    let mut remaining = day;
    for (m, &len) in MONTH_LENGTHS.iter().enumerate() {
        if remaining <= len as usize {
            return Ok(m + 1);
        }
        remaining -= len as usize;
    }
    unreachable!("day bounded by 365")
}

pub fn days_in_month(month: usize) -> usize {
    MONTH_LENGTHS[month - 1] as usize
}

/// First day-of-year of `month`.
pub fn first_day_of_month(month: usize) -> usize {
    1 + MONTH_LENGTHS[..month - 1]
        .iter()
        .map(|&d| d as usize)
        .sum::<usize>()
}

/// A half-hour of the (non-leap) year. Slot 1 covers 00:00-00:30.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeSlot {
    day: u16,
    slot: u8,
}

impl TimeSlot {
    pub fn new(day: usize, slot: usize) -> Result<Self, DomainError> {
        if !(1..=DAYS_PER_YEAR).contains(&day) {
            return Err(DomainError::DayOutOfRange(day));
        }
        if !(1..=SLOTS_PER_DAY).contains(&slot) {
            return Err(DomainError::SlotOutOfRange(slot));
        }
        Ok(Self {
            day: day as u16,
            slot: slot as u8,
        })
    }

    /// Slot at zero-based position `index` counted from 00:00 on `start_day`.
    pub fn from_offset(start_day: usize, index: usize) -> Result<Self, DomainError> {
        Self::new(start_day + index / SLOTS_PER_DAY, index % SLOTS_PER_DAY + 1)
    }

    pub fn day(self) -> usize {
        self.day as usize
    }

    pub fn slot(self) -> usize {
        self.slot as usize
    }

    pub fn month(self) -> usize {
        month_of_day(self.day()).expect("validated on construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TouPeriod {
    OffPeak,
    Shoulder,
    Peak,
}

/// Time-of-use period of a slot, decided by the slot's start time.
///
/// Peak 07:00-09:00 and 17:00-20:00, shoulder 09:00-17:00 and 20:00-22:00,
/// off-peak otherwise.
pub fn tou_period(slot: usize) -> Result<TouPeriod, DomainError> {
    match slot {
        15..=18 | 35..=40 => Ok(TouPeriod::Peak),
        19..=34 | 41..=44 => Ok(TouPeriod::Shoulder),
        1..=14 | 45..=48 => Ok(TouPeriod::OffPeak),
        _ => Err(DomainError::SlotOutOfRange(slot)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TariffKind {
    Flat,
    ToU,
    FlatD,
    ToUD,
}

impl TariffKind {
    pub const ALL: [TariffKind; 4] = [
        TariffKind::Flat,
        TariffKind::ToU,
        TariffKind::FlatD,
        TariffKind::ToUD,
    ];

    pub fn has_demand_charge(self) -> bool {
        matches!(self, TariffKind::FlatD | TariffKind::ToUD)
    }

    pub fn is_time_of_use(self) -> bool {
        matches!(self, TariffKind::ToU | TariffKind::ToUD)
    }

    pub fn name(self) -> &'static str {
        match self {
            TariffKind::Flat => "Flat",
            TariffKind::ToU => "ToU",
            TariffKind::FlatD => "FlatD",
            TariffKind::ToUD => "ToUD",
        }
    }
}

impl fmt::Display for TariffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TariffKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(TariffKind::Flat),
            "tou" => Ok(TariffKind::ToU),
            "flatd" => Ok(TariffKind::FlatD),
            "toud" => Ok(TariffKind::ToUD),
            _ => Err(DomainError::UnknownPreset(s.to_string())),
        }
    }
}

/// How the monthly billed peak is measured for demand tariffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakVariant {
    #[default]
    MonthlyMax,
    TopFourDailyAvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouRates {
    pub off_peak: f64,
    pub shoulder: f64,
    pub peak: f64,
}

/// A retail or network tariff. Energy rates are in $/kWh, the demand charge
/// in $/kW/month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub name: String,
    pub kind: TariffKind,
    pub fixed_daily: f64,
    pub flat_rate: Option<f64>,
    pub tou_rates: Option<TouRates>,
    pub demand_charge: Option<f64>,
    pub fit: f64,
    pub peak_variant: PeakVariant,
}

impl TariffSchedule {
    /// Retail tariff presets (Origin Energy, Essential Energy zone). Demand
    /// tariffs carry the network demand charge through unchanged.
    pub fn retail(kind: TariffKind) -> Self {
        let (flat_rate, tou_rates, demand_charge) = match kind {
            TariffKind::Flat => (Some(0.313170), None, None),
            TariffKind::ToU => (
                None,
                Some(TouRates {
                    off_peak: 0.213400,
                    shoulder: 0.371470,
                    peak: 0.385880,
                }),
                None,
            ),
            TariffKind::FlatD => (Some(0.235018), None, Some(4.2112)),
            TariffKind::ToUD => (
                None,
                Some(TouRates {
                    off_peak: 0.188532,
                    shoulder: 0.279319,
                    peak: 0.286750,
                }),
                Some(4.2112),
            ),
        };
        Self {
            name: kind.name().to_string(),
            kind,
            fixed_daily: 1.5511,
            flat_rate,
            tou_rates,
            demand_charge,
            fit: 0.09,
            peak_variant: PeakVariant::MonthlyMax,
        }
    }

    /// Network (DNSP) tariff presets. Network tariffs carry no feed-in credit.
    pub fn network(kind: TariffKind) -> Self {
        let (flat_rate, tou_rates, demand_charge) = match kind {
            TariffKind::Flat => (Some(0.110321), None, None),
            TariffKind::ToU => (
                None,
                Some(TouRates {
                    off_peak: 0.046287,
                    shoulder: 0.126922,
                    peak: 0.139934,
                }),
                None,
            ),
            TariffKind::FlatD => (Some(0.032169), None, Some(4.2112)),
            TariffKind::ToUD => (
                None,
                Some(TouRates {
                    off_peak: 0.021419,
                    shoulder: 0.034771,
                    peak: 0.040804,
                }),
                Some(4.2112),
            ),
        };
        Self {
            name: format!("{}-network", kind.name()),
            kind,
            fixed_daily: 0.8568,
            flat_rate,
            tou_rates,
            demand_charge,
            fit: 0.0,
            peak_variant: PeakVariant::MonthlyMax,
        }
    }

    /// Look up a named preset: `Flat`, `ToU`, `FlatD`, `ToUD` (retail),
    /// `FlatD4`/`ToUD4` (retail, top-four billing) or `<kind>-network`.
    pub fn preset(name: &str) -> Result<Self, DomainError> {
        if let Some(kind) = name.strip_suffix("-network") {
            return Ok(Self::network(kind.parse()?));
        }
        if let Some(kind) = name.strip_suffix('4') {
            let kind: TariffKind = kind.parse()?;
            if !kind.has_demand_charge() {
                return Err(DomainError::UnknownPreset(name.to_string()));
            }
            return Ok(Self::retail(kind).with_peak_variant(PeakVariant::TopFourDailyAvg));
        }
        Ok(Self::retail(name.parse()?))
    }

    pub fn with_peak_variant(mut self, variant: PeakVariant) -> Self {
        if variant == PeakVariant::TopFourDailyAvg && !self.name.ends_with('4') {
            self.name.push('4');
        }
        self.peak_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |reason: &str| {
            Err(DomainError::InvalidTariff {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        let mut rates = vec![self.fixed_daily, self.fit];
        rates.extend(self.flat_rate);
        rates.extend(self.demand_charge);
        if let Some(t) = self.tou_rates {
            rates.extend([t.off_peak, t.shoulder, t.peak]);
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return fail("rates must be finite and non-negative");
        }
        if self.kind.is_time_of_use() {
            if self.tou_rates.is_none() || self.flat_rate.is_some() {
                return fail("time-of-use tariffs need tou_rates and no flat_rate");
            }
        } else if self.flat_rate.is_none() || self.tou_rates.is_some() {
            return fail("flat tariffs need flat_rate and no tou_rates");
        }
        match (self.kind.has_demand_charge(), self.demand_charge) {
            (true, Some(d)) if d > 0.0 => {}
            (true, _) => return fail("demand tariffs need a positive demand_charge"),
            (false, Some(_)) => return fail("energy tariffs carry no demand_charge"),
            (false, None) => {}
        }
        Ok(())
    }

    /// Import price in $/kWh for a slot of the day.
    pub fn price_at_slot(&self, slot: usize) -> Result<f64, DomainError> {
        let period = tou_period(slot)?;
        Ok(match (self.flat_rate, self.tou_rates) {
            (Some(rate), _) => rate,
            (None, Some(t)) => match period {
                TouPeriod::OffPeak => t.off_peak,
                TouPeriod::Shoulder => t.shoulder,
                TouPeriod::Peak => t.peak,
            },
            (None, None) => {
                return Err(DomainError::InvalidTariff {
                    name: self.name.clone(),
                    reason: "no energy rate".into(),
                })
            }
        })
    }

    pub fn price_at(&self, ts: TimeSlot) -> f64 {
        self.price_at_slot(ts.slot())
            .expect("TimeSlot holds a valid slot and tariffs are validated")
    }

    /// Demand charge in $/kW/month, zero for energy tariffs.
    pub fn demand_rate(&self) -> f64 {
        self.demand_charge.unwrap_or(0.0)
    }

    /// Smallest import price over the day.
    pub fn min_import_rate(&self) -> f64 {
        (1..=SLOTS_PER_DAY)
            .filter_map(|s| self.price_at_slot(s).ok())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn from_json_str(s: &str) -> Result<Self, DomainError> {
        let doc: TariffDocument = serde_json::from_str(s)?;
        doc.into_schedule()
    }

    pub fn from_path(path: &Path) -> Result<Self, DomainError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> TariffDocument {
        let c = |v: f64| v * 100.0;
        TariffDocument {
            name: Some(self.name.clone()),
            tariff_type: self.kind,
            fixed_charge_per_day: self.fixed_daily,
            anytime_energy_c_per_kwh: self.flat_rate.map(c),
            off_peak_energy_c_per_kwh: self.tou_rates.map(|t| c(t.off_peak)),
            shoulder_energy_c_per_kwh: self.tou_rates.map(|t| c(t.shoulder)),
            peak_energy_c_per_kwh: self.tou_rates.map(|t| c(t.peak)),
            demand_charge_per_kw_month: self.demand_charge,
            feed_in_tariff_c_per_kwh: c(self.fit),
            peak_variant: self.peak_variant,
        }
    }
}

/// On-disk tariff layout, in the units of the published tariff tables
/// (energy in c/kWh, fixed charge in $/day, demand charge in $/kW/month).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TariffDocument {
    #[serde(default)]
    pub name: Option<String>,
    pub tariff_type: TariffKind,
    pub fixed_charge_per_day: f64,
    #[serde(default)]
    pub anytime_energy_c_per_kwh: Option<f64>,
    #[serde(default)]
    pub off_peak_energy_c_per_kwh: Option<f64>,
    #[serde(default)]
    pub shoulder_energy_c_per_kwh: Option<f64>,
    #[serde(default)]
    pub peak_energy_c_per_kwh: Option<f64>,
    #[serde(default)]
    pub demand_charge_per_kw_month: Option<f64>,
    #[serde(default)]
    pub feed_in_tariff_c_per_kwh: f64,
    #[serde(default)]
    pub peak_variant: PeakVariant,
}

impl TariffDocument {
    pub fn into_schedule(self) -> Result<TariffSchedule, DomainError> {
        let d = |v: f64| v / 100.0;
        let tou_rates = match (
            self.off_peak_energy_c_per_kwh,
            self.shoulder_energy_c_per_kwh,
            self.peak_energy_c_per_kwh,
        ) {
            (Some(o), Some(s), Some(p)) => Some(TouRates {
                off_peak: d(o),
                shoulder: d(s),
                peak: d(p),
            }),
            (None, None, None) => None,
            _ => {
                return Err(DomainError::InvalidTariff {
                    name: self.name.unwrap_or_default(),
                    reason: "time-of-use rates must be given together".into(),
                })
            }
        };
        let schedule = TariffSchedule {
            name: self
                .name
                .unwrap_or_else(|| self.tariff_type.name().to_string()),
            kind: self.tariff_type,
            fixed_daily: self.fixed_charge_per_day,
            flat_rate: self.anytime_energy_c_per_kwh.map(d),
            tou_rates,
            demand_charge: self.demand_charge_per_kw_month,
            fit: d(self.feed_in_tariff_c_per_kwh),
            peak_variant: self.peak_variant,
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Lithium battery parameters; energies in kWh, powers in kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity: f64,
    pub soc_min: f64,
    pub p_charge_max: f64,
    pub p_discharge_max: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub soc_initial: f64,
}

impl BatteryParams {
    /// Round-trip efficiency split evenly between charging and discharging.
    pub const ETA_ONE_WAY: f64 = 0.948_683_298_050_513_8;

    /// Default unit of a given size: 10%..100% usable window, 90% round trip,
    /// C/2 power rating, starting empty.
    pub fn with_capacity(capacity: f64) -> Self {
        Self {
            capacity,
            soc_min: 0.1 * capacity,
            p_charge_max: 0.5 * capacity,
            p_discharge_max: 0.5 * capacity,
            eta_charge: Self::ETA_ONE_WAY,
            eta_discharge: Self::ETA_ONE_WAY,
            soc_initial: 0.1 * capacity,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |r: &str| Err(DomainError::InvalidBattery(r.to_string()));
        let all = [
            self.capacity,
            self.soc_min,
            self.p_charge_max,
            self.p_discharge_max,
            self.eta_charge,
            self.eta_discharge,
            self.soc_initial,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("non-finite value");
        }
        if !(0.0 <= self.soc_min && self.soc_min <= self.soc_initial && self.soc_initial <= self.capacity)
        {
            return fail("need 0 <= soc_min <= soc_initial <= capacity");
        }
        if !(self.eta_charge > 0.0 && self.eta_charge <= 1.0)
            || !(self.eta_discharge > 0.0 && self.eta_discharge <= 1.0)
        {
            return fail("efficiencies must lie in (0, 1]");
        }
        if self.p_charge_max <= 0.0 || self.p_discharge_max <= 0.0 {
            return fail("power limits must be positive");
        }
        Ok(())
    }
}

/// Single-element electric storage water heater.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwhParams {
    /// Tank volume, L.
    pub volume: f64,
    /// Element rating, kW.
    pub element_rating: f64,
    /// Tank surface area, m².
    pub surface_area: f64,
    /// Loss conductance, W/m²·°C.
    pub conductance: f64,
    /// Water density, kg/m³.
    pub density: f64,
    /// Specific heat, kJ/kg·°C.
    pub specific_heat: f64,
    pub eta_thermal: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_inlet: f64,
    pub t_ambient: f64,
    pub t_initial: f64,
}

impl EwhParams {
    /// Catalogue tank sizes: (share of customers, volume L, element kW, area m²).
    pub const SIZES: [(f64, f64, f64, f64); 4] = [
        (0.0244, 80.0, 1.8, 1.114),
        (0.0894, 125.0, 3.6, 1.500),
        (0.8699, 160.0, 3.6, 1.768),
        (0.0163, 250.0, 4.8, 2.381),
    ];

    pub fn tank(volume: f64, element_rating: f64, surface_area: f64) -> Self {
        Self {
            volume,
            element_rating,
            surface_area,
            conductance: 1.0,
            density: 1000.0,
            specific_heat: 4.18,
            eta_thermal: 1.0,
            t_min: 60.0,
            t_max: 82.0,
            t_inlet: 15.0,
            t_ambient: 20.0,
            t_initial: 71.0,
        }
    }

    /// The most common 160 L / 3.6 kW tank.
    pub fn standard() -> Self {
        let (_, v, q, a) = Self::SIZES[2];
        Self::tank(v, q, a)
    }

    /// Thermal capacity C = ρ·V·c in kJ/°C.
    pub fn thermal_capacity(&self) -> f64 {
        self.density * self.volume / 1000.0 * self.specific_heat
    }

    /// Temperature rise per kW held for one slot, °C/kW.
    pub fn psi(&self) -> f64 {
        3600.0 * DT_HOURS / self.thermal_capacity()
    }

    /// Fraction of the tank-to-ambient difference lost per slot.
    pub fn lambda(&self) -> f64 {
        3.6 * self.conductance * self.surface_area * DT_HOURS / self.thermal_capacity()
    }

    /// Fraction of the tank replaced by inlet water for a draw of `draw` litres.
    pub fn phi(&self, draw: f64) -> f64 {
        draw / self.volume
    }

    pub fn max_electrical_power(&self) -> f64 {
        self.eta_thermal * self.element_rating
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |r: &str| Err(DomainError::InvalidEwh(r.to_string()));
        let physical = [
            self.volume,
            self.element_rating,
            self.surface_area,
            self.conductance,
            self.density,
            self.specific_heat,
            self.eta_thermal,
        ];
        if physical.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return fail("physical parameters must be positive");
        }
        let temps = [self.t_min, self.t_max, self.t_inlet, self.t_ambient, self.t_initial];
        if temps.iter().any(|v| !v.is_finite()) {
            return fail("non-finite temperature");
        }
        if !(self.t_min <= self.t_initial && self.t_initial <= self.t_max) {
            return fail("need t_min <= t_initial <= t_max");
        }
        if self.eta_thermal > 1.0 {
            return fail("eta_thermal above 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// Water heater only.
    I,
    /// Water heater and PV.
    II,
    /// Water heater, PV and battery.
    III,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::I, Scenario::II, Scenario::III];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::I => "sc1",
            Scenario::II => "sc2",
            Scenario::III => "sc3",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
        };
        f.write_str(s)
    }
}

/// PV and battery sizing classes: (share of customers, PV kWp range, battery kWh).
pub const PV_BATTERY_SIZES: [(f64, f64, f64, f64); 4] = [
    (0.7642, 3.0, 4.0, 6.0),
    (0.2033, 5.0, 6.0, 8.0),
    (0.0244, 7.0, 8.0, 10.0),
    (0.0081, 9.0, 10.0, 12.0),
];

/// Battery size matched to an installed PV size.
pub fn battery_for_pv(pv_kwp: f64) -> f64 {
    PV_BATTERY_SIZES
        .iter()
        .find(|(_, _, hi, _)| pv_kwp <= *hi)
        .map(|&(_, _, _, b)| b)
        .unwrap_or(PV_BATTERY_SIZES[3].3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: String,
    pub scenario: Scenario,
    pub tariff: TariffSchedule,
    pub battery: Option<BatteryParams>,
    pub ewh: EwhParams,
    pub pv_size: Option<f64>,
    pub inverter_eta: f64,
    pub grid_limit: f64,
}

impl CustomerRecord {
    pub const DEFAULT_GRID_LIMIT_KW: f64 = 15.0;

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |r: &str| {
            Err(DomainError::InvalidCustomer {
                id: self.id.clone(),
                reason: r.to_string(),
            })
        };
        self.tariff.validate()?;
        self.ewh.validate()?;
        if let Some(b) = &self.battery {
            b.validate()?;
        }
        if matches!(self.scenario, Scenario::II | Scenario::III) && self.pv_size.is_none() {
            return fail("scenarios II and III need a PV system");
        }
        if self.scenario == Scenario::III && self.battery.is_none() {
            return fail("scenario III needs a battery");
        }
        if let Some(pv) = self.pv_size {
            if !(pv.is_finite() && pv > 0.0) {
                return fail("pv_size must be positive");
            }
        }
        if !(self.inverter_eta > 0.0 && self.inverter_eta <= 1.0) {
            return fail("inverter_eta must lie in (0, 1]");
        }
        if !(self.grid_limit.is_finite() && self.grid_limit > 0.0) {
            return fail("grid_limit must be positive");
        }
        Ok(())
    }
}

/// Half-hourly input series of one customer over a run of whole days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerTraces {
    /// Day-of-year of the first value.
    pub start_day: usize,
    /// Uncontrollable demand, kW.
    pub base_demand: Vec<f64>,
    /// PV output, kW.
    pub pv: Vec<f64>,
    /// Hot water drawn during the slot, L.
    pub hw_draw: Vec<f64>,
}

impl CustomerTraces {
    pub fn days(&self) -> usize {
        self.base_demand.len() / SLOTS_PER_DAY
    }

    pub fn is_full_year(&self) -> bool {
        self.start_day == 1 && self.days() == DAYS_PER_YEAR
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |r: String| Err(DomainError::InvalidTraces(r));
        let n = self.base_demand.len();
        if n == 0 || !n.is_multiple_of(SLOTS_PER_DAY) {
            return fail(format!("{n} values is not a whole number of days"));
        }
        if self.pv.len() != n || self.hw_draw.len() != n {
            return fail("series lengths differ".into());
        }
        if self.start_day < 1 || self.start_day + self.days() - 1 > DAYS_PER_YEAR {
            return fail(format!(
                "days {}..{} outside the year",
                self.start_day,
                self.start_day + self.days() - 1
            ));
        }
        let all = self.base_demand.iter().chain(&self.pv).chain(&self.hw_draw);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return fail("values must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Sub-range of whole days, `first_day` given as day-of-year.
    pub fn window(&self, first_day: usize, days: usize) -> CustomerTraces {
        let a = (first_day - self.start_day) * SLOTS_PER_DAY;
        let b = a + days * SLOTS_PER_DAY;
        CustomerTraces {
            start_day: first_day,
            base_demand: self.base_demand[a..b].to_vec(),
            pv: self.pv[a..b].to_vec(),
            hw_draw: self.hw_draw[a..b].to_vec(),
        }
    }

    pub fn without_pv(mut self) -> Self {
        self.pv.iter_mut().for_each(|v| *v = 0.0);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tou_boundaries() {
        assert_eq!(tou_period(15).unwrap(), TouPeriod::Peak);
        assert_eq!(tou_period(1).unwrap(), TouPeriod::OffPeak);
        assert_eq!(tou_period(19).unwrap(), TouPeriod::Shoulder);
        assert_eq!(tou_period(14).unwrap(), TouPeriod::OffPeak);
        assert_eq!(tou_period(18).unwrap(), TouPeriod::Peak);
        assert_eq!(tou_period(34).unwrap(), TouPeriod::Shoulder);
        assert_eq!(tou_period(35).unwrap(), TouPeriod::Peak);
        assert_eq!(tou_period(41).unwrap(), TouPeriod::Shoulder);
        assert_eq!(tou_period(45).unwrap(), TouPeriod::OffPeak);
        assert!(tou_period(0).is_err());
        assert!(tou_period(49).is_err());
    }

    #[test]
    fn tou_partition_counts() {
        let mut counts = [0usize; 3];
        for s in 1..=48 {
            counts[tou_period(s).unwrap() as usize] += 1;
        }
        // off-peak, shoulder, peak
        assert_eq!(counts, [18, 20, 10]);
    }

    #[test]
    fn retail_prices() {
        let flat = TariffSchedule::retail(TariffKind::Flat);
        let tou = TariffSchedule::retail(TariffKind::ToU);
        let toud = TariffSchedule::retail(TariffKind::ToUD);
        for day in [1, 100, 365] {
            assert_eq!(flat.price_at(TimeSlot::new(day, 30).unwrap()), 0.313170);
        }
        assert_eq!(tou.price_at(TimeSlot::new(1, 1).unwrap()), 0.213400);
        assert_eq!(toud.price_at(TimeSlot::new(1, 16).unwrap()), 0.286750);
    }

    #[test]
    fn presets_validate() {
        for kind in TariffKind::ALL {
            TariffSchedule::retail(kind).validate().unwrap();
            TariffSchedule::network(kind).validate().unwrap();
        }
        let d4 = TariffSchedule::preset("ToUD4").unwrap();
        assert_eq!(d4.peak_variant, PeakVariant::TopFourDailyAvg);
        assert_eq!(d4.name, "ToUD4");
        assert!(TariffSchedule::preset("ToU4").is_err());
        assert_eq!(
            TariffSchedule::preset("FlatD-network").unwrap().fixed_daily,
            0.8568
        );
    }

    #[test]
    fn malformed_tariffs_rejected() {
        let mut t = TariffSchedule::retail(TariffKind::FlatD);
        t.demand_charge = None;
        assert!(t.validate().is_err());
        let mut t = TariffSchedule::retail(TariffKind::ToU);
        t.flat_rate = Some(0.2);
        assert!(t.validate().is_err());
        let mut t = TariffSchedule::retail(TariffKind::Flat);
        t.fit = -0.01;
        assert!(t.validate().is_err());
    }

    #[test]
    fn tariff_document_round_trip() {
        let json = r#"{
            "tariff_type": "ToUD",
            "fixed_charge_per_day": 1.5511,
            "off_peak_energy_c_per_kwh": 18.8532,
            "shoulder_energy_c_per_kwh": 27.9319,
            "peak_energy_c_per_kwh": 28.6750,
            "demand_charge_per_kw_month": 4.2112,
            "feed_in_tariff_c_per_kwh": 9.0
        }"#;
        let t = TariffSchedule::from_json_str(json).unwrap();
        let preset = TariffSchedule::retail(TariffKind::ToUD);
        assert_eq!(t.kind, preset.kind);
        assert!((t.fit - 0.09).abs() < 1e-12);
        let tr = t.tou_rates.unwrap();
        assert!((tr.peak - 0.28675).abs() < 1e-12);
        let back = TariffSchedule::from_json_str(
            &serde_json::to_string(&t.to_document()).unwrap(),
        )
        .unwrap();
        assert!((back.tou_rates.unwrap().shoulder - tr.shoulder).abs() < 1e-12);
    }

    #[test]
    fn months() {
        assert_eq!(month_of_day(1).unwrap(), 1);
        assert_eq!(month_of_day(31).unwrap(), 1);
        assert_eq!(month_of_day(32).unwrap(), 2);
        assert_eq!(month_of_day(59).unwrap(), 2);
        assert_eq!(month_of_day(60).unwrap(), 3);
        assert_eq!(month_of_day(365).unwrap(), 12);
        assert!(month_of_day(366).is_err());
        assert_eq!(first_day_of_month(3), 60);
        assert_eq!((1..=12).map(days_in_month).sum::<usize>(), 365);
        let ts = TimeSlot::from_offset(1, 48 * 31).unwrap();
        assert_eq!((ts.day(), ts.slot(), ts.month()), (32, 1, 2));
        assert!(TimeSlot::new(1, 0).is_err());
    }

    #[test]
    fn ewh_coefficients() {
        let w = EwhParams::standard();
        assert!((w.thermal_capacity() - 668.8).abs() < 1e-9);
        assert!((w.psi() * 3.6 - 9.689).abs() < 1e-3);
        w.validate().unwrap();
    }

    #[test]
    fn battery_defaults() {
        let b = BatteryParams::with_capacity(6.0);
        b.validate().unwrap();
        assert!((b.eta_charge * b.eta_discharge - 0.9).abs() < 1e-12);
        assert_eq!(battery_for_pv(3.5), 6.0);
        assert_eq!(battery_for_pv(5.5), 8.0);
        assert_eq!(battery_for_pv(9.5), 12.0);
    }

    #[test]
    fn customer_invariants() {
        let mut c = CustomerRecord {
            id: "c1".into(),
            scenario: Scenario::III,
            tariff: TariffSchedule::retail(TariffKind::Flat),
            battery: None,
            ewh: EwhParams::standard(),
            pv_size: Some(4.0),
            inverter_eta: 1.0,
            grid_limit: 15.0,
        };
        assert!(c.validate().is_err());
        c.battery = Some(BatteryParams::with_capacity(6.0));
        c.validate().unwrap();
        c.pv_size = None;
        assert!(c.validate().is_err());
    }
}
