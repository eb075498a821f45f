use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Error, Result};

/// Header of the telemetry CSV format, in column order.
pub const CSV_HEADER: [&str; 5] = ["time_s", "current_a", "voltage_v", "temperature_c", "soc"];

/// SOC values further than this outside [0, 1] are rejected rather than clamped.
pub const SOC_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 0.1;

/// One full discharge profile. Current is negative while discharging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycleRecord {
    pub cycle_name: String,
    pub ambient_temp_c: f64,
    pub sample_period_s: f64,
    pub time_s: Vec<f64>,
    pub current_a: Vec<f64>,
    pub voltage_v: Vec<f64>,
    pub temperature_c: Vec<f64>,
    pub soc: Vec<f64>,
}

/// Name and ambient temperature of a cycle, supplied out of band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMeta {
    pub cycle_name: String,
    pub ambient_temp_c: f64,
}

impl CycleMeta {
    pub fn new(cycle_name: impl Into<String>, ambient_temp_c: f64) -> Self {
        Self { cycle_name: cycle_name.into(), ambient_temp_c }
    }

    /// Parses the `<CYCLE>_<TEMP>C.csv` naming convention, e.g. `FTP-75_25C.csv`.
    pub fn from_file_name(name: &str) -> Result<Self, DataError> {
        let bad = || DataError::FileName(name.to_string());
        let stem = name.strip_suffix(".csv").ok_or_else(bad)?;
        let (cycle, temp) = stem.rsplit_once('_').ok_or_else(bad)?;
        let temp = temp.strip_suffix('C').ok_or_else(bad)?;
        let ambient_temp_c: f64 = temp.parse().map_err(|_| bad())?;
        if cycle.is_empty() {
            return Err(bad());
        }
        Ok(Self::new(cycle, ambient_temp_c))
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}C.csv", self.cycle_name, self.ambient_temp_c)
    }
}

impl DriveCycleRecord {
    pub fn len(&self) -> usize {
        self.soc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.soc.is_empty()
    }

    pub fn meta(&self) -> CycleMeta {
        CycleMeta::new(self.cycle_name.clone(), self.ambient_temp_c)
    }

    /// Sample `i` as `[current, voltage, temperature]`.
    pub fn sample(&self, i: usize) -> [f64; 3] {
        [self.current_a[i], self.voltage_v[i], self.temperature_c[i]]
    }

    /// Writes the record in the telemetry CSV format. Floats use the shortest
    /// representation that parses back to the identical value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", CSV_HEADER.join(","))?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.time_s[i], self.current_a[i], self.voltage_v[i], self.temperature_c[i], self.soc[i]
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a telemetry CSV. Row numbers in errors count data rows from 1.
pub fn load_drive_cycle<R: Read>(source: R, meta: CycleMeta) -> Result<DriveCycleRecord, DataError> {
    let name = meta.cycle_name.clone();
    let csv_err = |e: csv::Error| DataError::Csv { source_name: name.clone(), message: e.to_string() };

    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::Empty { source_name: name });
    }
    let mut cols = [0usize; 5];
    for (slot, column) in cols.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == column)
            .ok_or(DataError::MissingColumn { source_name: name.clone(), column })?;
    }

    let mut series: [Vec<f64>; 5] = Default::default();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != headers.len() {
            return Err(DataError::LengthMismatch {
                source_name: name,
                row,
                found: rec.len(),
                expected: headers.len(),
            });
        }
        for (k, (&col, column)) in cols.iter().zip(CSV_HEADER).enumerate() {
            let raw = &rec[col];
            let value: f64 = raw.parse().map_err(|_| DataError::NonNumeric {
                source_name: name.clone(),
                row,
                column,
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite { source_name: name, row, column, value });
            }
            series[k].push(value);
        }
        let soc = series[4].last_mut().unwrap();
        if *soc < -SOC_TOLERANCE || *soc > 1.0 + SOC_TOLERANCE {
            return Err(DataError::SocOutOfRange { source_name: name, row, value: *soc });
        }
        *soc = soc.clamp(0.0, 1.0);
    }

    let [time_s, current_a, voltage_v, temperature_c, soc] = series;
    if soc.is_empty() {
        return Err(DataError::Empty { source_name: name });
    }
    let sample_period_s = if time_s.len() >= 2 {
        (time_s[time_s.len() - 1] - time_s[0]) / (time_s.len() - 1) as f64
    } else {
        DEFAULT_SAMPLE_PERIOD_S
    };
    if !(sample_period_s > 0.0) {
        return Err(DataError::Csv {
            source_name: name,
            message: format!("time column must increase (mean step {sample_period_s})"),
        });
    }

    Ok(DriveCycleRecord {
        cycle_name: meta.cycle_name,
        ambient_temp_c: meta.ambient_temp_c,
        sample_period_s,
        time_s,
        current_a,
        voltage_v,
        temperature_c,
        soc,
    })
}

/// Loads a CSV file, taking name and temperature from the file name unless given.
pub fn load_drive_cycle_file(path: &Path, meta: Option<CycleMeta>) -> Result<DriveCycleRecord> {
    let meta = match meta {
        Some(m) => m,
        None => {
            let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            CycleMeta::from_file_name(file_name)?
        }
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(load_drive_cycle(std::io::BufReader::new(file), meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "time_s,current_a,voltage_v,temperature_c,soc
0.0,-1.0,4.1,25.0,1.0
0.1,-1.2,4.09,25.0,0.9999
0.2,-1.1,4.08,25.1,0.9998
0.3,0.5,4.11,25.1,0.9998
0.4,-3.0,4.0,25.2,0.9995
";

    fn meta() -> CycleMeta {
        CycleMeta::new("FTP-75", 25.0)
    }

    #[test]
    fn well_formed_file() {
        let r = load_drive_cycle(GOOD.as_bytes(), meta()).unwrap();
        assert_eq!(r.len(), 5);
        assert_eq!(r.voltage_v[1], 4.09);
        assert!((r.sample_period_s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_soc_column() {
        let src = "time_s,current_a,voltage_v,temperature_c\n0,1,2,3\n";
        let err = load_drive_cycle(src.as_bytes(), meta()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { column: "soc", .. }), "{err}");
        assert!(err.to_string().contains("`soc`"));
    }

    #[test]
    fn soc_out_of_range_names_row() {
        let src = "time_s,current_a,voltage_v,temperature_c,soc\n0,1,2,3,0.5\n0.1,1,2,3,1.2\n";
        let err = load_drive_cycle(src.as_bytes(), meta()).unwrap_err();
        assert!(matches!(err, DataError::SocOutOfRange { row: 2, .. }), "{err}");
    }

    #[test]
    fn soc_within_tolerance_is_clamped() {
        let src = "time_s,current_a,voltage_v,temperature_c,soc\n0,1,2,3,1.0000005\n";
        assert_eq!(load_drive_cycle(src.as_bytes(), meta()).unwrap().soc, vec![1.0]);
    }

    #[test]
    fn distinct_errors() {
        let nonnum = "time_s,current_a,voltage_v,temperature_c,soc\n0,abc,2,3,0.5\n";
        assert!(matches!(
            load_drive_cycle(nonnum.as_bytes(), meta()),
            Err(DataError::NonNumeric { row: 1, column: "current_a", .. })
        ));
        let short = "time_s,current_a,voltage_v,temperature_c,soc\n0,1,2,3,0.5\n0.1,1,2\n";
        assert!(matches!(
            load_drive_cycle(short.as_bytes(), meta()),
            Err(DataError::LengthMismatch { row: 2, found: 3, .. })
        ));
        assert!(matches!(load_drive_cycle("".as_bytes(), meta()), Err(DataError::Empty { .. })));
        let header_only = "time_s,current_a,voltage_v,temperature_c,soc\n";
        assert!(matches!(load_drive_cycle(header_only.as_bytes(), meta()), Err(DataError::Empty { .. })));
        let inf = "time_s,current_a,voltage_v,temperature_c,soc\n0,inf,2,3,0.5\n";
        assert!(matches!(load_drive_cycle(inf.as_bytes(), meta()), Err(DataError::NonFinite { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = load_drive_cycle(GOOD.as_bytes(), meta()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(load_drive_cycle(buf.as_slice(), meta()).unwrap(), r);
    }

    #[test]
    fn file_name_convention() {
        assert_eq!(CycleMeta::from_file_name("FTP-75_25C.csv").unwrap(), CycleMeta::new("FTP-75", 25.0));
        assert_eq!(CycleMeta::from_file_name("US_06_-5C.csv").unwrap(), CycleMeta::new("US_06", -5.0));
        assert!(CycleMeta::from_file_name("FTP-75.csv").is_err());
        assert!(CycleMeta::from_file_name("FTP-75_25.csv").is_err());
        assert_eq!(CycleMeta::new("LA92", 5.0).file_name(), "LA92_5C.csv");
    }
}
