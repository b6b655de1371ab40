use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataError;

pub const RECORD_COLUMNS: [&str; 6] = ["phase_deg", "eps_a_pct", "gamma_a_pct", "sigma_a_mpa", "tau_a_mpa", "nf_cycles"];
pub const CONDITION_COLUMNS: [&str; 6] =
    ["condition", "omega_profile", "eps_a_pct", "gamma_a_pct", "sigma_a_mpa", "tau_a_mpa"];

/// Environment variable naming a directory that shadows bundled datasets.
pub const DATA_DIR_ENV: &str = "RSL_DATA_DIR";

/// One tension-torsion fatigue test. Strains in percent, stresses in MPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatigueRecord {
    pub phase_deg: f64,
    pub eps_a_pct: f64,
    pub gamma_a_pct: f64,
    pub sigma_a_mpa: f64,
    pub tau_a_mpa: f64,
    pub nf_cycles: u64,
}

/// One service operating condition with its surface load amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCondition {
    pub condition: String,
    pub omega_profile: String,
    pub eps_a_pct: f64,
    pub gamma_a_pct: f64,
    pub sigma_a_mpa: f64,
    pub tau_a_mpa: f64,
}

impl OperatingCondition {
    /// Every load amplitude is zero.
    pub fn zero_load(&self) -> bool {
        [self.eps_a_pct, self.gamma_a_pct, self.sigma_a_mpa, self.tau_a_mpa].iter().all(|v| *v == 0.0)
    }

    /// Fully reversed in-phase record view of this condition; the life field
    /// is a placeholder.
    pub fn as_record(&self) -> FatigueRecord {
        FatigueRecord {
            phase_deg: 0.0,
            eps_a_pct: self.eps_a_pct,
            gamma_a_pct: self.gamma_a_pct,
            sigma_a_mpa: self.sigma_a_mpa,
            tau_a_mpa: self.tau_a_mpa,
            nf_cycles: 1,
        }
    }
}

const BUNDLED_DATA1: &str = include_str!("../../data/data1.csv");
const BUNDLED_TABLE5: &str = include_str!("../../data/table5.csv");

/// Names accepted by [`load_dataset`] and [`load_conditions`] in place of a
/// path.
pub const BUNDLED_DATASETS: [&str; 4] = ["data1", "data2", "data3", "table5"];

fn override_path(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(DATA_DIR_ENV)?;
    let p = Path::new(&dir).join(format!("{name}.csv"));
    p.is_file().then_some(p)
}

fn bundled_text(name: &str) -> Result<Option<&'static str>, DataError> {
    match name {
        "data1" => Ok(Some(BUNDLED_DATA1)),
        "table5" => Ok(Some(BUNDLED_TABLE5)),
        "data2" | "data3" => Err(DataError::NotBundled {
            name: name.to_string(),
            hint: format!("place {name}.csv in ${DATA_DIR_ENV} or pass a CSV path"),
        }),
        _ => Ok(None),
    }
}

fn open_source(source: &str) -> Result<Box<dyn Read>, DataError> {
    if BUNDLED_DATASETS.contains(&source) {
        if let Some(p) = override_path(source) {
            return Ok(Box::new(std::fs::File::open(&p).map_err(|e| DataError::io(&p, e))?));
        }
        if let Some(text) = bundled_text(source)? {
            return Ok(Box::new(text.as_bytes()));
        }
    }
    let p = Path::new(source);
    Ok(Box::new(std::fs::File::open(p).map_err(|e| DataError::io(p, e))?))
}

/// Load fatigue records from a bundled dataset name or a CSV path.
pub fn load_dataset(source: &str) -> Result<Vec<FatigueRecord>, DataError> {
    read_records(open_source(source)?)
}

/// Load operating conditions from `table5` or a CSV path.
pub fn load_conditions(source: &str) -> Result<Vec<OperatingCondition>, DataError> {
    read_conditions(open_source(source)?)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), DataError> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    for col in expected {
        if !found.contains(col) {
            return Err(DataError::SchemaMismatch { column: col.to_string(), found: found.join(",") });
        }
    }
    if let Some(extra) = found.iter().find(|c| !expected.contains(c)) {
        return Err(DataError::SchemaMismatch { column: extra.to_string(), found: found.join(",") });
    }
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(
    reader: R,
    expected: &[&str],
    validate: impl Fn(&T) -> Result<(), String>,
) -> Result<Vec<T>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(DataError::Value { row: 0, message: e.to_string() }),
    };
    if headers.is_empty() {
        return Err(DataError::SchemaMismatch { column: expected[0].to_string(), found: String::new() });
    }
    check_header(&headers, expected)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DataError::Value { row, message: e.to_string() })?;
        let v: T = rec.deserialize(Some(&headers)).map_err(|e| DataError::Value { row, message: e.to_string() })?;
        validate(&v).map_err(|message| DataError::Value { row, message })?;
        out.push(v);
    }
    Ok(out)
}

fn check_amplitudes(values: &[(&str, f64)]) -> Result<(), String> {
    for (name, v) in values {
        if !v.is_finite() || *v < 0.0 {
            return Err(format!("{name} must be a finite non-negative number, got {v}"));
        }
    }
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<FatigueRecord>, DataError> {
    read_rows(reader, &RECORD_COLUMNS, |r: &FatigueRecord| {
        check_amplitudes(&[
            ("eps_a_pct", r.eps_a_pct),
            ("gamma_a_pct", r.gamma_a_pct),
            ("sigma_a_mpa", r.sigma_a_mpa),
            ("tau_a_mpa", r.tau_a_mpa),
        ])?;
        if !r.phase_deg.is_finite() {
            return Err("phase_deg must be finite".into());
        }
        if r.nf_cycles < 1 {
            return Err("nf_cycles must be at least 1".into());
        }
        Ok(())
    })
}

pub fn read_conditions<R: Read>(reader: R) -> Result<Vec<OperatingCondition>, DataError> {
    read_rows(reader, &CONDITION_COLUMNS, |c: &OperatingCondition| {
        check_amplitudes(&[
            ("eps_a_pct", c.eps_a_pct),
            ("gamma_a_pct", c.gamma_a_pct),
            ("sigma_a_mpa", c.sigma_a_mpa),
            ("tau_a_mpa", c.tau_a_mpa),
        ])
    })
}

pub fn write_records<W: Write>(writer: W, records: &[FatigueRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(RECORD_COLUMNS).map_err(DataError::csv)?;
    }
    for r in records {
        w.serialize(r).map_err(DataError::csv)?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data1() {
        let recs = load_dataset("data1").unwrap();
        assert_eq!(recs.len(), 17);
        assert_eq!(
            recs[0],
            FatigueRecord {
                phase_deg: 0.0,
                eps_a_pct: 1.221,
                gamma_a_pct: 1.598,
                sigma_a_mpa: 937.7,
                tau_a_mpa: 478.0,
                nf_cycles: 901
            }
        );
        assert_eq!(recs[16].nf_cycles, 12008);
        assert_eq!(recs.iter().filter(|r| r.phase_deg == 45.0).count(), 6);
    }

    #[test]
    fn unavailable_bundles_explain_themselves() {
        if std::env::var_os(DATA_DIR_ENV).is_some() {
            return;
        }
        for name in ["data2", "data3"] {
            let err = load_dataset(name).unwrap_err();
            assert!(matches!(err, DataError::NotBundled { .. }));
            assert!(err.to_string().contains(DATA_DIR_ENV));
        }
    }

    #[test]
    fn bundled_table5() {
        let c = load_conditions("table5").unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].condition, "S1");
        assert_eq!(c[2].omega_profile, "8200-12000-8200");
        assert_eq!(c[3].tau_a_mpa, 318.9);
        assert!(!c[0].zero_load());
    }

    #[test]
    fn misspelled_header_names_the_column() {
        let text = "phase_deg,epsa_pct,gamma_a_pct,sigma_a_mpa,tau_a_mpa,nf_cycles\n0,1,1,1,1,10\n";
        match read_records(text.as_bytes()).unwrap_err() {
            DataError::SchemaMismatch { column, .. } => assert_eq!(column, "eps_a_pct"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_value_reports_row() {
        let text = "phase_deg,eps_a_pct,gamma_a_pct,sigma_a_mpa,tau_a_mpa,nf_cycles\n0,1,1,1,1,10\n0,x,1,1,1,10\n";
        match read_records(text.as_bytes()).unwrap_err() {
            DataError::Value { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e:?}"),
        }
        let text = "phase_deg,eps_a_pct,gamma_a_pct,sigma_a_mpa,tau_a_mpa,nf_cycles\n0,-1,1,1,1,10\n";
        assert!(matches!(read_records(text.as_bytes()), Err(DataError::Value { row: 1, .. })));
        let text = "phase_deg,eps_a_pct,gamma_a_pct,sigma_a_mpa,tau_a_mpa,nf_cycles\n0,1,1,1,1,0\n";
        assert!(matches!(read_records(text.as_bytes()), Err(DataError::Value { row: 1, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let recs = load_dataset("data1").unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        assert_eq!(read_records(&buf[..]).unwrap(), recs);
        let mut buf = Vec::new();
        write_records(&mut buf, &[]).unwrap();
        assert!(read_records(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn empty_conditions_file() {
        let text = CONDITION_COLUMNS.join(",") + "\n";
        assert!(read_conditions(text.as_bytes()).unwrap().is_empty());
    }
}
