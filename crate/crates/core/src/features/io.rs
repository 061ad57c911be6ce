use std::path::Path;

use chrono::NaiveDate;

use super::{feature_names, FeatureError, FeatureRow, HistoryTier, FEATURE_COUNT};
use super::roster::idx;

const KEY_COLUMNS: [&str; 4] = ["route_id", "flight_date", "record_date", "plf_historical_tier"];

/// Writes key columns followed by the 39 features in roster order.
/// Floats use Rust's shortest round-trip formatting, so a read back is exact.
pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<&str> = KEY_COLUMNS.iter().copied().chain(feature_names()).collect();
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in rows {
        record.clear();
        record.push(r.route_id.clone());
        record.push(r.flight_date.to_string());
        record.push(r.record_date.to_string());
        record.push(r.history_tier.as_str().to_string());
        record.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut reader = csv::Reader::from_path(path)?;
    let expected: Vec<&str> = KEY_COLUMNS.iter().copied().chain(feature_names()).collect();
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Format("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |what: &str| FeatureError::Format(format!("row {row}: bad {what}"));
        let date = |k: usize| NaiveDate::parse_from_str(&rec[k], "%Y-%m-%d").map_err(|_| bad(KEY_COLUMNS[k]));
        let mut values = [0.0f64; FEATURE_COUNT];
        for (j, v) in values.iter_mut().enumerate() {
            *v = rec[KEY_COLUMNS.len() + j].parse().map_err(|_| bad(expected[KEY_COLUMNS.len() + j]))?;
        }
        let d = values[idx::DAYS_BEFORE_DEPARTURE];
        if d < 0.0 || d.fract() != 0.0 {
            return Err(bad("days_before_departure"));
        }
        out.push(FeatureRow {
            route_id: rec[0].to_string(),
            flight_date: date(1)?,
            record_date: date(2)?,
            days_before_departure: d as u32,
            values,
            history_tier: HistoryTier::parse(&rec[3]).ok_or_else(|| bad("plf_historical_tier"))?,
        });
    }
    Ok(out)
}
