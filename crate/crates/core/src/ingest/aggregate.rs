use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::{BookingSnapshot, IngestError};

/// Merges leg-wise records into flight-date records.
///
/// Snapshots sharing `(route_id, flight_date, record_date)` are summed on
/// booked and total seats. Output is sorted by
/// `(route_id, flight_date, days_before_departure)`. When legs disagree on
/// aircraft type, `strict` turns that into an error; otherwise the distinct
/// types are joined with `+` in sorted order.
pub fn aggregate_legs(
    snapshots: &[BookingSnapshot],
    strict: bool,
) -> Result<Vec<BookingSnapshot>, IngestError> {
    let mut groups: BTreeMap<(&str, NaiveDate, u32), BookingSnapshot> = BTreeMap::new();
    for snap in snapshots {
        let key = (snap.route_id.as_str(), snap.flight_date, snap.days_before_departure);
        match groups.get_mut(&key) {
            None => {
                groups.insert(key, snap.clone());
            }
            Some(acc) => {
                acc.booked_seats += snap.booked_seats;
                acc.total_seats += snap.total_seats;
                if !acc.aircraft_type.split('+').any(|t| t == snap.aircraft_type) {
                    if strict {
                        return Err(IngestError::ConflictingAircraft {
                            route_id: snap.route_id.clone(),
                            flight_date: snap.flight_date,
                            record_date: snap.record_date,
                            first: acc.aircraft_type.clone(),
                            second: snap.aircraft_type.clone(),
                        });
                    }
                    let mut types: Vec<&str> = acc.aircraft_type.split('+').collect();
                    types.push(&snap.aircraft_type);
                    types.sort_unstable();
                    acc.aircraft_type = types.join("+");
                }
            }
        }
    }
    // BTreeMap order is (route, flight_date, d) ascending, which is the contract.
    Ok(groups.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(route: &str, fd: &str, rd: &str, booked: u32, total: u32, ac: &str) -> BookingSnapshot {
        BookingSnapshot::new(
            route,
            fd.parse().unwrap(),
            rd.parse().unwrap(),
            booked,
            total,
            ac,
        )
        .unwrap()
    }

    #[test]
    fn two_legs_sum() {
        let legs = vec![
            snap("R1", "2024-01-10", "2024-01-05", 40, 80, "ATR72"),
            snap("R1", "2024-01-10", "2024-01-05", 30, 80, "ATR72"),
        ];
        let out = aggregate_legs(&legs, true).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].booked_seats, 70);
        assert_eq!(out[0].total_seats, 160);
    }

    #[test]
    fn single_record_unchanged() {
        let one = vec![snap("R1", "2024-01-10", "2024-01-05", 40, 80, "ATR72")];
        assert_eq!(aggregate_legs(&one, true).unwrap(), one);
    }

    #[test]
    fn strict_mode_rejects_mixed_aircraft() {
        let legs = vec![
            snap("R1", "2024-01-10", "2024-01-05", 40, 80, "ATR72"),
            snap("R1", "2024-01-10", "2024-01-05", 30, 162, "B738"),
        ];
        assert!(matches!(
            aggregate_legs(&legs, true),
            Err(IngestError::ConflictingAircraft { .. })
        ));
        let relaxed = aggregate_legs(&legs, false).unwrap();
        assert_eq!(relaxed[0].aircraft_type, "ATR72+B738");
    }

    #[test]
    fn output_sorted_by_route_date_and_days_before() {
        let rows = vec![
            snap("R2", "2024-01-10", "2024-01-09", 1, 10, "A"),
            snap("R1", "2024-01-11", "2024-01-01", 1, 10, "A"),
            snap("R1", "2024-01-10", "2024-01-10", 1, 10, "A"),
            snap("R1", "2024-01-10", "2024-01-08", 1, 10, "A"),
        ];
        let out = aggregate_legs(&rows, true).unwrap();
        let keys: Vec<_> = out
            .iter()
            .map(|s| (s.route_id.clone(), s.flight_date, s.days_before_departure))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
