//! Factor table loading and encoding.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const F1_FLOOR: f64 = 1e-4;
pub const FACTOR_HEADER: [&str; 7] = ["f1", "age", "sex", "disease", "subject", "environment", "aid"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    F = 0,
    M = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Environment {
    Indoor = 0,
    Outdoor = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aid {
    WithAid = 0,
    WithoutAid = 1,
}

/// One per-test F1 score with its covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorObservation {
    pub f1: f64,
    pub age: f64,
    pub sex: Sex,
    /// 0 healthy control, 1 mild, 2 moderate, 3 severe.
    pub disease: u8,
    pub subject: String,
    pub environment: Environment,
    pub aid: Aid,
}

fn parse_sex(s: &str) -> Option<Sex> {
    match s.to_ascii_lowercase().as_str() {
        "f" | "female" => Some(Sex::F),
        "m" | "male" => Some(Sex::M),
        _ => None,
    }
}

fn parse_disease(s: &str) -> Option<u8> {
    match s.to_ascii_lowercase().as_str() {
        "0" | "hc" => Some(0),
        "1" | "mild" => Some(1),
        "2" | "moderate" => Some(2),
        "3" | "severe" => Some(3),
        _ => None,
    }
}

fn parse_environment(s: &str) -> Option<Environment> {
    match s.to_ascii_lowercase().as_str() {
        "indoor" | "indoors" => Some(Environment::Indoor),
        "outdoor" | "outdoors" => Some(Environment::Outdoor),
        _ => None,
    }
}

fn parse_aid(s: &str) -> Option<Aid> {
    match s.to_ascii_lowercase().replace(['_', '-', ' ', '/'], "").as_str() {
        "withaid" | "with" | "waid" | "1" | "yes" => Some(Aid::WithAid),
        "withoutaid" | "without" | "woaid" | "0" | "no" => Some(Aid::WithoutAid),
        _ => None,
    }
}

/// Reads the table `f1,age,sex,disease,subject,environment,aid`.
pub fn load_factor_table<R: Read>(source: R) -> Result<Vec<FactorObservation>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if header.iter().collect::<Vec<_>>() != FACTOR_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {}", FACTOR_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let bad = |field: &str, value: &str| Error::Parse { line, message: format!("invalid {field} '{value}'") };
        let number = |idx: usize, field: &str| -> Result<f64> {
            row[idx].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(field, &row[idx]))
        };
        let f1 = number(0, "f1")?;
        if !(0.0..=1.0).contains(&f1) {
            return Err(bad("f1", &row[0]));
        }
        out.push(FactorObservation {
            f1,
            age: number(1, "age")?,
            sex: parse_sex(&row[2]).ok_or_else(|| bad("sex", &row[2]))?,
            disease: parse_disease(&row[3]).ok_or_else(|| bad("disease", &row[3]))?,
            subject: row[4].to_string(),
            environment: parse_environment(&row[5]).ok_or_else(|| bad("environment", &row[5]))?,
            aid: parse_aid(&row[6]).ok_or_else(|| bad("aid", &row[6]))?,
        });
    }
    Ok(out)
}

pub fn load_factor_table_path(path: impl AsRef<Path>) -> Result<Vec<FactorObservation>> {
    load_factor_table(std::fs::File::open(path)?)
}

pub fn write_factor_table<W: std::io::Write>(rows: &[FactorObservation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FACTOR_HEADER).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        let sex = match r.sex {
            Sex::F => "F",
            Sex::M => "M",
        };
        let env = match r.environment {
            Environment::Indoor => "Indoor",
            Environment::Outdoor => "Outdoor",
        };
        let aid = match r.aid {
            Aid::WithAid => "WithAid",
            Aid::WithoutAid => "WithoutAid",
        };
        w.write_record([
            format!("{}", r.f1),
            format!("{}", r.age),
            sex.to_string(),
            r.disease.to_string(),
            r.subject.clone(),
            env.to_string(),
            aid.to_string(),
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Observations sharing subject, environment, and aid have the same mean,
/// so the likelihood only needs their count and log sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub subject: usize,
    pub age_z: f64,
    pub sex: usize,
    pub disease: usize,
    pub environment: usize,
    pub aid: usize,
    pub n: f64,
    pub sum_log_y: f64,
    pub sum_log_1my: f64,
}

/// Encoded data ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_obs: usize,
    pub subjects: Vec<String>,
    pub cells: Vec<Cell>,
}

impl Dataset {
    pub fn empty() -> Self {
        Self { n_obs: 0, subjects: Vec::new(), cells: Vec::new() }
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Clamps F1 into the open unit interval, z-scores age across
    /// observations, and indexes subjects in order of first appearance.
    pub fn encode(rows: &[FactorObservation]) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Self::empty());
        }
        let ages: Vec<f64> = rows.iter().map(|r| r.age).collect();
        let mean_age = crate::stats::mean(&ages);
        let sd_age = crate::stats::sample_sd(&ages).filter(|s| *s > 0.0);

        let mut subjects: Vec<String> = Vec::new();
        let mut subject_idx: HashMap<&str, usize> = HashMap::new();
        let mut subject_attrs: Vec<(f64, Sex, u8)> = Vec::new();
        let mut cells: Vec<Cell> = Vec::new();
        let mut cell_idx: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for (i, r) in rows.iter().enumerate() {
            if r.disease > 3 {
                return Err(Error::Domain(format!("row {}: disease index {} outside 0..=3", i + 1, r.disease)));
            }
            let s = *subject_idx.entry(r.subject.as_str()).or_insert_with(|| {
                subjects.push(r.subject.clone());
                subject_attrs.push((r.age, r.sex, r.disease));
                subjects.len() - 1
            });
            if subject_attrs[s] != (r.age, r.sex, r.disease) {
                return Err(Error::Domain(format!(
                    "row {}: subject '{}' has inconsistent age, sex, or disease",
                    i + 1,
                    r.subject
                )));
            }
            let y = r.f1.clamp(F1_FLOOR, 1.0 - F1_FLOOR);
            let key = (s, r.environment as usize, r.aid as usize);
            let c = *cell_idx.entry(key).or_insert_with(|| {
                cells.push(Cell {
                    subject: s,
                    age_z: sd_age.map_or(0.0, |sd| (r.age - mean_age) / sd),
                    sex: r.sex as usize,
                    disease: r.disease as usize,
                    environment: r.environment as usize,
                    aid: r.aid as usize,
                    n: 0.0,
                    sum_log_y: 0.0,
                    sum_log_1my: 0.0,
                });
                cells.len() - 1
            });
            cells[c].n += 1.0;
            cells[c].sum_log_y += y.ln();
            cells[c].sum_log_1my += (1.0 - y).ln();
        }
        Ok(Self { n_obs: rows.len(), subjects, cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "f1,age,sex,disease,subject,environment,aid\n\
        0.95,40,F,0,s1,Indoor,WithoutAid\n\
        1.0,40,F,0,s1,Outdoor,WithoutAid\n\
        0.9,60,M,2,s2,Outdoor,WithAid\n\
        0.8,60,M,2,s2,Outdoor,WithAid\n";

    #[test]
    fn table_round_trips() {
        let rows = load_factor_table(TABLE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2].sex, Sex::M);
        assert_eq!(rows[2].aid, Aid::WithAid);
        let mut buf = Vec::new();
        write_factor_table(&rows, &mut buf).unwrap();
        assert_eq!(load_factor_table(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn encoding_groups_and_clamps() {
        let data = Dataset::encode(&load_factor_table(TABLE.as_bytes()).unwrap()).unwrap();
        assert_eq!(data.n_obs, 4);
        assert_eq!(data.subjects, ["s1", "s2"]);
        assert_eq!(data.cells.len(), 3);
        let clamped = &data.cells[1];
        assert!((clamped.sum_log_y - (1.0 - F1_FLOOR).ln()).abs() < 1e-15);
        assert_eq!(data.cells[2].n, 2.0);
        assert!(data.cells[0].age_z < 0.0 && data.cells[2].age_z > 0.0);
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let bad = "f1,age,sex,disease,subject,environment,aid\n0.9,40,X,0,s1,Indoor,WithAid\n";
        assert!(matches!(load_factor_table(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let out_of_range = "f1,age,sex,disease,subject,environment,aid\n1.5,40,F,0,s1,Indoor,WithAid\n";
        assert!(matches!(load_factor_table(out_of_range.as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(load_factor_table("a,b\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
