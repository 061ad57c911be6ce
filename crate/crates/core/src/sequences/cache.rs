//! Sample cache layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes "LCSEQ001"
//! count    u64 samples
//! h, fh    u32 horizontal steps and features
//! v, fv    u32 vertical steps and features
//! names    fh + fv entries of (u16 length, UTF-8 bytes), horizontal first
//! samples  count records of:
//!            u16 route length, route bytes
//!            i32 flight date as days from 0001-01-01 (CE day 1)
//!            u32 days before departure
//!            f64 target PLF, f64 naive PLF
//!            h * fh f64 horizontal, v * fv f64 vertical (row-major)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use super::{FeatureSet, SequenceError, SequenceSample, SkipCounts, SplitCorpus};
use crate::neural::Tensor;

const MAGIC: &[u8; 8] = b"LCSEQ001";

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u16).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn write_sample_cache(path: &Path, samples: &[SequenceSample], features: &FeatureSet) -> Result<(), SequenceError> {
    let (h, fh, v, fv) = match samples.first() {
        Some(s) => (s.horizontal.rows(), s.horizontal.cols(), s.vertical.rows(), s.vertical.cols()),
        None => (0, features.horizontal.len(), 0, features.vertical.len()),
    };
    if fh != features.horizontal.len() || fv != features.vertical.len() {
        return Err(SequenceError::Format("feature names do not match tensor widths".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for x in [h, fh, v, fv] {
        buf.extend_from_slice(&(x as u32).to_le_bytes());
    }
    for n in features.horizontal.iter().chain(&features.vertical) {
        put_str(&mut buf, n);
    }
    for s in samples {
        if s.horizontal.shape() != [h, fh] || s.vertical.shape() != [v, fv] {
            return Err(SequenceError::Format("samples have inconsistent shapes".into()));
        }
        put_str(&mut buf, &s.route_id);
        buf.extend_from_slice(&s.flight_date.num_days_from_ce().to_le_bytes());
        buf.extend_from_slice(&s.days_before_departure.to_le_bytes());
        for x in [s.target_plf, s.naive_plf].iter().chain(s.horizontal.data()).chain(s.vertical.data()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SequenceError> {
        let out = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| SequenceError::Format("truncated".into()))?;
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, SequenceError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, SequenceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SequenceError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, SequenceError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| SequenceError::Format("bad UTF-8".into()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, SequenceError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_sample_cache(path: &Path) -> Result<(FeatureSet, Vec<SequenceSample>), SequenceError> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(SequenceError::Format("not a sample cache".into()));
    }
    let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let (h, fh, v, fv) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let horizontal = (0..fh).map(|_| r.string()).collect::<Result<_, _>>()?;
    let vertical = (0..fv).map(|_| r.string()).collect::<Result<_, _>>()?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let route_id = r.string()?;
        let days = i32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        let flight_date =
            NaiveDate::from_num_days_from_ce_opt(days).ok_or_else(|| SequenceError::Format("bad date".into()))?;
        let days_before_departure = r.u32()?;
        let target_plf = r.f64()?;
        let naive_plf = r.f64()?;
        let ht = Tensor::from_vec(&[h, fh], r.floats(h * fh)?).map_err(|e| SequenceError::Format(e.to_string()))?;
        let vt = Tensor::from_vec(&[v, fv], r.floats(v * fv)?).map_err(|e| SequenceError::Format(e.to_string()))?;
        samples.push(SequenceSample {
            route_id,
            flight_date,
            days_before_departure,
            horizontal: ht,
            vertical: vt,
            target_plf,
            naive_plf,
        });
    }
    if r.pos != bytes.len() {
        return Err(SequenceError::Format("trailing bytes".into()));
    }
    Ok((FeatureSet { horizontal, vertical }, samples))
}

/// One line per sample with its partition, preceded by `#` comment lines
/// carrying the skip counts.
pub fn write_manifest(path: &Path, corpus: &SplitCorpus, skipped: &SkipCounts) -> Result<(), SequenceError> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# skipped_missing_target={}", skipped.missing_target)?;
    writeln!(file, "# skipped_insufficient_horizontal={}", skipped.insufficient_horizontal)?;
    writeln!(file, "# skipped_insufficient_vertical={}", skipped.insufficient_vertical)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["route_id", "flight_date", "days_before_departure", "partition", "target_plf"])?;
    for (name, part) in corpus.partitions() {
        for s in part {
            w.write_record([
                s.route_id.as_str(),
                &s.flight_date.to_string(),
                &s.days_before_departure.to_string(),
                name,
                &s.target_plf.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
