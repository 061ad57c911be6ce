use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{
    route_distance, Airport, BookingSnapshot, Frequency, Haul, HolidayCalendar, IngestError,
    Reach, RouteMeta, RouteTags, Service,
};

const RESERVATION_COLUMNS: [&str; 6] = [
    "route_id",
    "flight_date",
    "record_date",
    "booked_seats",
    "total_seats",
    "aircraft_type",
];

/// Column lookup for one CSV file; data rows are numbered from 1.
struct Table {
    file: String,
    index: HashMap<String, usize>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Self, IngestError> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let index: HashMap<String, usize> = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for col in required {
            if !index.contains_key(*col) {
                return Err(IngestError::MissingColumn { file, column: col.to_string() });
            }
        }
        let records = reader.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { file, index, records })
    }

    fn field<'a>(&self, record: &'a csv::StringRecord, column: &str) -> &'a str {
        record.get(self.index[column]).unwrap_or("")
    }

    fn date(&self, row: usize, record: &csv::StringRecord, column: &str) -> Result<NaiveDate, IngestError> {
        let raw = self.field(record, column);
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| IngestError::BadDate {
            file: self.file.clone(),
            row,
            detail: format!("{column}=`{raw}`: {e}"),
        })
    }

    fn parse<T: std::str::FromStr>(
        &self,
        row: usize,
        record: &csv::StringRecord,
        column: &str,
    ) -> Result<T, IngestError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.field(record, column);
        raw.parse::<T>().map_err(|e| IngestError::BadValue {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            detail: format!("`{raw}`: {e}"),
        })
    }

    fn seats(&self, row: usize, record: &csv::StringRecord, column: &str) -> Result<u32, IngestError> {
        let v: i64 = self.parse(row, record, column)?;
        if v < 0 {
            return Err(IngestError::NegativeSeats {
                file: self.file.clone(),
                row,
                column: column.to_string(),
            });
        }
        u32::try_from(v).map_err(|e| IngestError::BadValue {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            detail: e.to_string(),
        })
    }
}

/// Reads `reservations.csv`, one snapshot per data row.
pub fn load_reservations(path: &Path) -> Result<Vec<BookingSnapshot>, IngestError> {
    let table = Table::read(path, &RESERVATION_COLUMNS)?;
    let mut out = Vec::with_capacity(table.records.len());
    for (i, rec) in table.records.iter().enumerate() {
        let row = i + 1;
        let flight_date = table.date(row, rec, "flight_date")?;
        let record_date = table.date(row, rec, "record_date")?;
        let booked = table.seats(row, rec, "booked_seats")?;
        let total = table.seats(row, rec, "total_seats")?;
        if total == 0 {
            return Err(IngestError::ZeroCapacity { file: table.file.clone(), row });
        }
        let snap = BookingSnapshot::new(
            table.field(rec, "route_id"),
            flight_date,
            record_date,
            booked,
            total,
            table.field(rec, "aircraft_type"),
        )
        .ok_or_else(|| IngestError::BadDate {
            file: table.file.clone(),
            row,
            detail: format!("record_date {record_date} is after flight_date {flight_date}"),
        })?;
        out.push(snap);
    }
    Ok(out)
}

pub fn write_reservations(path: &Path, snapshots: &[BookingSnapshot]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESERVATION_COLUMNS)?;
    for s in snapshots {
        w.write_record([
            s.route_id.clone(),
            s.flight_date.to_string(),
            s.record_date.to_string(),
            s.booked_seats.to_string(),
            s.total_seats.to_string(),
            s.aircraft_type.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_airports(path: &Path) -> Result<Vec<Airport>, IngestError> {
    let table = Table::read(path, &["iata", "latitude", "longitude"])?;
    let mut out = Vec::with_capacity(table.records.len());
    for (i, rec) in table.records.iter().enumerate() {
        let row = i + 1;
        let latitude: f64 = table.parse(row, rec, "latitude")?;
        let longitude: f64 = table.parse(row, rec, "longitude")?;
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(IngestError::BadValue {
                file: table.file.clone(),
                row,
                column: "latitude/longitude".into(),
                detail: format!("({latitude}, {longitude}) out of range"),
            });
        }
        out.push(Airport { iata: table.field(rec, "iata").to_string(), latitude, longitude });
    }
    Ok(out)
}

pub fn write_airports(path: &Path, airports: &[Airport]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iata", "latitude", "longitude"])?;
    for a in airports {
        w.write_record([a.iata.clone(), a.latitude.to_string(), a.longitude.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_holidays(path: &Path) -> Result<HolidayCalendar, IngestError> {
    let table = Table::read(path, &["date"])?;
    let mut cal = HolidayCalendar::default();
    for (i, rec) in table.records.iter().enumerate() {
        cal.dates.insert(table.date(i + 1, rec, "date")?);
    }
    Ok(cal)
}

pub fn write_holidays(path: &Path, holidays: &HolidayCalendar) -> Result<(), IngestError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "date")?;
    for d in &holidays.dates {
        writeln!(file, "{d}")?;
    }
    file.flush()?;
    Ok(())
}

/// Reads `routes.csv` and resolves distances through the airport table.
/// The frequency tag is derived from `weekly_frequency`.
pub fn load_routes(path: &Path, airports: &[Airport]) -> Result<Vec<RouteMeta>, IngestError> {
    let table = Table::read(
        path,
        &["route_id", "origin", "destination", "weekly_frequency", "reach", "service", "haul"],
    )?;
    let by_code: HashMap<&str, &Airport> = airports.iter().map(|a| (a.iata.as_str(), a)).collect();
    let mut out = Vec::with_capacity(table.records.len());
    for (i, rec) in table.records.iter().enumerate() {
        let row = i + 1;
        let route_id = table.field(rec, "route_id").to_string();
        let origin = table.field(rec, "origin").to_string();
        let destination = table.field(rec, "destination").to_string();
        let lookup = |code: &str| {
            by_code.get(code).copied().ok_or_else(|| IngestError::UnknownAirport {
                route_id: route_id.clone(),
                iata: code.to_string(),
            })
        };
        let distance_km = route_distance(lookup(&origin)?, lookup(&destination)?);
        let weekly_frequency: u32 = table.parse(row, rec, "weekly_frequency")?;
        let tags = RouteTags {
            reach: table.parse::<Reach>(row, rec, "reach")?,
            service: table.parse::<Service>(row, rec, "service")?,
            frequency: Frequency::from_weekly(weekly_frequency),
            haul: table.parse::<Haul>(row, rec, "haul")?,
        };
        out.push(RouteMeta { route_id, origin, destination, distance_km, weekly_frequency, tags });
    }
    Ok(out)
}

pub fn write_routes(path: &Path, routes: &[RouteMeta]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["route_id", "origin", "destination", "weekly_frequency", "reach", "service", "haul"])?;
    for r in routes {
        w.write_record([
            r.route_id.clone(),
            r.origin.clone(),
            r.destination.clone(),
            r.weekly_frequency.to_string(),
            r.tags.reach.to_string(),
            r.tags.service.to_string(),
            r.tags.haul.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
