use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{load_drive_cycle_file, CycleMeta, DriveCycleRecord};
use crate::error::{DataError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Which drive-cycle names belong to which partition. The same names apply at
/// every ambient temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCatalog {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitCatalog {
    /// Partition used with the public LG INR21700 M50LT drive-cycle data.
    pub fn drive_cycle_default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            train: v(&["BCDC", "LA92", "CSHVC", "HWFET", "IM", "US06", "PDTCB", "OCTBC"]),
            val: v(&["HHDDT", "FTP-72"]),
            test: v(&["FTP-75", "PDMHC"]),
        }
    }

    /// Errors if a name appears in more than one list.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for (split, names) in [(Split::Train, &self.train), (Split::Val, &self.val), (Split::Test, &self.test)] {
            for n in names {
                if let Some(prev) = seen.insert(n, split) {
                    if prev != split {
                        return Err(DataError::Split(format!("cycle {n:?} listed in both {prev:?} and {split:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<Split> {
        if self.train.iter().any(|n| n == name) {
            Some(Split::Train)
        } else if self.val.iter().any(|n| n == name) {
            Some(Split::Val)
        } else if self.test.iter().any(|n| n == name) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitRecords {
    pub train: Vec<DriveCycleRecord>,
    pub val: Vec<DriveCycleRecord>,
    pub test: Vec<DriveCycleRecord>,
}

/// Partitions records by cycle name. Unknown names are a configuration error.
pub fn split_cycles(catalog: &SplitCatalog, records: Vec<DriveCycleRecord>) -> Result<SplitRecords, DataError> {
    catalog.validate()?;
    let mut out = SplitRecords::default();
    for r in records {
        match catalog.lookup(&r.cycle_name) {
            Some(Split::Train) => out.train.push(r),
            Some(Split::Val) => out.val.push(r),
            Some(Split::Test) => out.test.push(r),
            None => {
                return Err(DataError::Split(format!("cycle {:?} is not assigned to any split", r.cycle_name)))
            }
        }
    }
    Ok(out)
}

/// One entry of a data manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: PathBuf,
    pub cycle_name: String,
    pub ambient_temp_c: f64,
}

/// `manifest.json` in a data directory: the files to load and the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub cycles: Vec<ManifestEntry>,
    pub split: SplitCatalog,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DataManifest {
    /// Reads `dir/manifest.json`, or infers entries from `<CYCLE>_<TEMP>C.csv`
    /// file names and applies the default split when no manifest exists.
    pub fn discover(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found")));
        }
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let m: DataManifest = serde_json::from_str(&text)
                .map_err(|e| DataError::Split(format!("{}: {e}", path.display())))?;
            m.split.validate()?;
            return Ok(m);
        }
        let mut cycles = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.ends_with(".csv") {
                continue;
            }
            let meta = CycleMeta::from_file_name(&name)?;
            cycles.push(ManifestEntry { file: name.into(), cycle_name: meta.cycle_name, ambient_temp_c: meta.ambient_temp_c });
        }
        cycles.sort_by(|a, b| a.file.cmp(&b.file));
        Ok(Self { cycles, split: SplitCatalog::drive_cycle_default() })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads every listed cycle.
    pub fn load(&self, dir: &Path) -> Result<Vec<DriveCycleRecord>> {
        self.cycles
            .iter()
            .map(|e| {
                load_drive_cycle_file(&dir.join(&e.file), Some(CycleMeta::new(e.cycle_name.clone(), e.ambient_temp_c)))
            })
            .collect()
    }

    /// Loads and partitions the cycles.
    pub fn load_split(&self, dir: &Path) -> Result<SplitRecords> {
        Ok(split_cycles(&self.split, self.load(dir)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(name: &str) -> DriveCycleRecord {
        DriveCycleRecord {
            cycle_name: name.into(),
            ambient_temp_c: 25.0,
            sample_period_s: 0.1,
            time_s: vec![0.0],
            current_a: vec![0.0],
            voltage_v: vec![3.7],
            temperature_c: vec![25.0],
            soc: vec![1.0],
        }
    }

    #[test]
    fn default_catalog_routes_cycles() {
        let c = SplitCatalog::drive_cycle_default();
        let s = split_cycles(&c, vec![named("FTP-75"), named("BCDC"), named("HHDDT")]).unwrap();
        assert_eq!(s.test[0].cycle_name, "FTP-75");
        assert_eq!(s.train[0].cycle_name, "BCDC");
        assert_eq!(s.val[0].cycle_name, "HHDDT");
    }

    #[test]
    fn unknown_name_rejected() {
        let c = SplitCatalog::drive_cycle_default();
        assert!(matches!(split_cycles(&c, vec![named("XYZ")]), Err(DataError::Split(_))));
    }

    #[test]
    fn overlapping_lists_rejected() {
        let mut c = SplitCatalog::drive_cycle_default();
        c.test.push("BCDC".into());
        assert!(c.validate().is_err());
        assert!(split_cycles(&c, vec![]).is_err());
    }
}
