//! Electricity bills from half-hourly grid import and export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{month_of_day, DomainError, PeakVariant, TariffSchedule, DT_HOURS, SLOTS_PER_DAY};

#[derive(Debug, Error)]
pub enum BillingError {
    #[error("series of {0} values is not a whole number of days")]
    PartialDay(usize),
    #[error("import and export series differ in length ({import} vs {export})")]
    LengthMismatch { import: usize, export: usize },
    #[error("negative or non-finite power {value} at index {index}")]
    InvalidPower { index: usize, value: f64 },
    #[error("no data")]
    Empty,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("bill file: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BillBreakdown {
    pub fixed: f64,
    pub energy: f64,
    pub export_credit: f64,
    pub demand: f64,
    pub total: f64,
}

impl BillBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.fixed + self.energy - self.export_credit + self.demand;
        self
    }

    fn add(&mut self, o: &BillBreakdown) {
        self.fixed += o.fixed;
        self.energy += o.energy;
        self.export_credit += o.export_credit;
        self.demand += o.demand;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AnnualBill {
    pub months: BTreeMap<usize, BillBreakdown>,
    pub annual: BillBreakdown,
}

fn check(series: &[f64]) -> Result<(), BillingError> {
    if series.is_empty() {
        return Err(BillingError::Empty);
    }
    if !series.len().is_multiple_of(SLOTS_PER_DAY) {
        return Err(BillingError::PartialDay(series.len()));
    }
    if let Some((index, &value)) = series
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(BillingError::InvalidPower { index, value });
    }
    Ok(())
}

/// Maximum of each day.
pub fn daily_peaks(series: &[f64]) -> Vec<f64> {
    series
        .chunks(SLOTS_PER_DAY)
        .map(|d| d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Billed peak per month for a series starting on day-of-year `start_day`.
pub fn monthly_peaks(
    start_day: usize,
    import: &[f64],
    variant: PeakVariant,
) -> Result<BTreeMap<usize, f64>, BillingError> {
    check(import)?;
    let mut by_month: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (d, peak) in daily_peaks(import).into_iter().enumerate() {
        by_month
            .entry(month_of_day(start_day + d)?)
            .or_default()
            .push(peak);
    }
    Ok(by_month
        .into_iter()
        .map(|(m, mut days)| {
            let v = match variant {
                PeakVariant::MonthlyMax => days.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                PeakVariant::TopFourDailyAvg => {
                    days.sort_by(|a, b| b.total_cmp(a));
                    let top = &days[..days.len().min(4)];
                    top.iter().sum::<f64>() / top.len() as f64
                }
            };
            (m, v)
        })
        .collect())
}

/// Fixed, energy, export and demand components per month and for the whole
/// series.
pub fn annual_cost(
    tariff: &TariffSchedule,
    start_day: usize,
    import: &[f64],
    export: &[f64],
) -> Result<AnnualBill, BillingError> {
    check(import)?;
    if export.len() != import.len() {
        return Err(BillingError::LengthMismatch {
            import: import.len(),
            export: export.len(),
        });
    }
    check(export)?;
    let mut months: BTreeMap<usize, BillBreakdown> = BTreeMap::new();
    for (d, (imp, exp)) in import
        .chunks(SLOTS_PER_DAY)
        .zip(export.chunks(SLOTS_PER_DAY))
        .enumerate()
    {
        let b = months.entry(month_of_day(start_day + d)?).or_default();
        b.fixed += tariff.fixed_daily;
        for (k, (&i, &e)) in imp.iter().zip(exp).enumerate() {
            b.energy += tariff.price_at_slot(k + 1)? * i * DT_HOURS;
            b.export_credit += tariff.fit * e * DT_HOURS;
        }
    }
    if tariff.kind.has_demand_charge() {
        for (m, peak) in monthly_peaks(start_day, import, tariff.peak_variant)? {
            months.get_mut(&m).expect("same months").demand = tariff.demand_rate() * peak;
        }
    }
    let mut annual = BillBreakdown::default();
    for b in months.values_mut() {
        *b = b.finish();
        annual.add(b);
    }
    Ok(AnnualBill {
        months,
        annual: annual.finish(),
    })
}

#[derive(Serialize)]
struct BillRow<'a> {
    customer_id: &'a str,
    tariff: &'a str,
    month: String,
    fixed: f64,
    energy: f64,
    export_credit: f64,
    demand: f64,
    total: f64,
}

/// One row per customer, tariff and month, followed by an `annual` row.
pub fn write_bills_csv<W: Write>(
    out: W,
    bills: &[(String, String, AnnualBill)],
) -> Result<(), BillingError> {
    let mut w = csv::Writer::from_writer(out);
    for (customer_id, tariff, bill) in bills {
        let rows = bill
            .months
            .iter()
            .map(|(m, b)| (m.to_string(), b))
            .chain(std::iter::once(("annual".to_string(), &bill.annual)));
        for (month, b) in rows {
            w.serialize(BillRow {
                customer_id,
                tariff,
                month,
                fixed: b.fixed,
                energy: b.energy,
                export_credit: b.export_credit,
                demand: b.demand,
                total: b.total,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{TariffKind, DAYS_PER_YEAR};

    fn day_with_peak(peak: f64) -> Vec<f64> {
        let mut d = vec![0.5; SLOTS_PER_DAY];
        d[20] = peak;
        d
    }

    #[test]
    fn constant_month() {
        let s = vec![1.0; 31 * SLOTS_PER_DAY];
        for v in [PeakVariant::MonthlyMax, PeakVariant::TopFourDailyAvg] {
            assert_eq!(monthly_peaks(1, &s, v).unwrap()[&1], 1.0);
        }
    }

    #[test]
    fn descending_daily_peaks() {
        let s: Vec<f64> = (0..31)
            .flat_map(|d| day_with_peak((5 - d.min(4)) as f64))
            .collect();
        assert_eq!(monthly_peaks(1, &s, PeakVariant::MonthlyMax).unwrap()[&1], 5.0);
        assert_eq!(
            monthly_peaks(1, &s, PeakVariant::TopFourDailyAvg).unwrap()[&1],
            3.5
        );
    }

    #[test]
    fn single_spike() {
        let mut s = vec![1.0; 28 * SLOTS_PER_DAY];
        s[100] = 7.0;
        let p = monthly_peaks(32, &s, PeakVariant::MonthlyMax).unwrap();
        assert_eq!(p[&2], 7.0);
        let p = monthly_peaks(32, &s, PeakVariant::TopFourDailyAvg).unwrap();
        assert_eq!(p[&2], 2.5);
    }

    #[test]
    fn short_month_uses_available_days() {
        let s: Vec<f64> = [3.0, 1.0].iter().flat_map(|&p| day_with_peak(p)).collect();
        let p = monthly_peaks(1, &s, PeakVariant::TopFourDailyAvg).unwrap();
        assert_eq!(p[&1], 2.0);
    }

    #[test]
    fn flat_one_day() {
        let t = TariffSchedule::retail(TariffKind::Flat);
        let imp = vec![10.0 / 24.0; SLOTS_PER_DAY];
        let b = annual_cost(&t, 1, &imp, &vec![0.0; SLOTS_PER_DAY]).unwrap();
        assert!((b.annual.total - (1.5511 + 0.31317 * 10.0)).abs() < 1e-9);
        assert!((b.annual.total - 4.6828).abs() < 1e-4);
    }

    #[test]
    fn fixed_only_year() {
        let t = TariffSchedule::retail(TariffKind::Flat);
        let z = vec![0.0; DAYS_PER_YEAR * SLOTS_PER_DAY];
        let b = annual_cost(&t, 1, &z, &z).unwrap();
        assert!((b.annual.total - 365.0 * 1.5511).abs() < 1e-9);
        assert_eq!(b.months.len(), 12);
    }

    #[test]
    fn flat_demand_month() {
        // April: 30 days, 100 kWh, peak exactly 3 kW.
        let t = TariffSchedule::retail(TariffKind::FlatD);
        let n = 30 * SLOTS_PER_DAY;
        let mut imp = vec![0.0; n];
        imp[0] = 3.0;
        let rest = (100.0 - 1.5) / 0.5 / (n - 1) as f64;
        imp[1..].iter_mut().for_each(|v| *v = rest);
        let b = annual_cost(&t, 91, &imp, &vec![0.0; n]).unwrap();
        let expected = 30.0 * 1.5511 + 0.235018 * 100.0 + 4.2112 * 3.0;
        assert!((b.annual.total - expected).abs() < 1e-9);
        assert!((b.annual.total - 82.67).abs() < 0.01);
    }

    #[test]
    fn rejects_negative_power() {
        let t = TariffSchedule::retail(TariffKind::Flat);
        let mut imp = vec![0.0; SLOTS_PER_DAY];
        imp[3] = -1.0;
        assert!(matches!(
            annual_cost(&t, 1, &imp, &vec![0.0; SLOTS_PER_DAY]),
            Err(BillingError::InvalidPower { index: 3, .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let t = TariffSchedule::retail(TariffKind::ToU);
        let z = vec![0.0; SLOTS_PER_DAY];
        let b = annual_cost(&t, 1, &z, &z).unwrap();
        let mut buf = Vec::new();
        write_bills_csv(&mut buf, &[("c1".into(), "ToU".into(), b)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "customer_id,tariff,month,fixed,energy,export_credit,demand,total"
        );
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("c1,ToU,annual,"));
    }
}
