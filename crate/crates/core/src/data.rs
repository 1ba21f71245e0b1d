//! Subject-level data: schema, records, CSV loading and validation.
//!
//! Mediators are ordered so that the first `ell` of them are structural
//! zeros: they can only take the value 1 among exposed subjects. Loading
//! rejects any record that breaks this rule.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mediator layout shared by every record of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediatorSchema {
    pub k: usize,
    pub ell: usize,
    pub names: Vec<String>,
}

impl MediatorSchema {
    pub fn new(k: usize, ell: usize, names: Vec<String>) -> Result<Self> {
        let schema = Self { k, ell, names };
        schema.check()?;
        Ok(schema)
    }

    /// Schema with default labels `m_1..m_k`.
    pub fn with_default_names(k: usize, ell: usize) -> Result<Self> {
        Self::new(k, ell, (1..=k).map(|j| format!("m_{j}")).collect())
    }

    pub fn check(&self) -> Result<()> {
        if self.ell > self.k {
            return Err(Error::Schema(format!(
                "ell = {} exceeds k = {}",
                self.ell, self.k
            )));
        }
        if self.names.len() != self.k {
            return Err(Error::Schema(format!(
                "{} names given for k = {} mediators",
                self.names.len(),
                self.k
            )));
        }
        let mut seen = HashSet::new();
        for name in &self.names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate mediator name `{name}`")));
            }
        }
        Ok(())
    }

    /// Whether mediator `j` (0-based) is a structural zero.
    pub fn is_structural(&self, j: usize) -> bool {
        j < self.ell
    }
}

/// On-disk schema description: `{"p":int,"k":int,"ell":int,"names":[...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub p: usize,
    pub k: usize,
    pub ell: usize,
    pub names: Vec<String>,
}

impl SchemaFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let parsed: SchemaFile = serde_json::from_reader(BufReader::new(file))?;
        parsed.mediators()?;
        Ok(parsed)
    }

    pub fn mediators(&self) -> Result<MediatorSchema> {
        MediatorSchema::new(self.k, self.ell, self.names.clone())
    }
}

/// One mother-child pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub c: Vec<f64>,
    pub a: u8,
    pub m: Vec<u8>,
    pub time: f64,
    pub event: bool,
}

/// Immutable collection of records sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: MediatorSchema,
    p: usize,
    records: Vec<SubjectRecord>,
}

impl Dataset {
    /// Builds a dataset, rejecting it if any invariant fails.
    pub fn new(schema: MediatorSchema, p: usize, records: Vec<SubjectRecord>) -> Result<Self> {
        let d = Self::new_unchecked(schema, p, records);
        let report = validate_dataset(&d);
        if let Some(first) = report.failures.first() {
            if first.check == Check::StructuralZero {
                let row = first.rows[0];
                let mediator = (0..d.schema.ell)
                    .find(|&j| d.records[row].m.get(j) == Some(&1))
                    .unwrap_or(0);
                return Err(Error::StructuralZero {
                    row,
                    mediator: mediator + 1,
                });
            }
            return Err(Error::InvalidDataset(report.summary()));
        }
        Ok(d)
    }

    /// Builds a dataset without checking invariants. Intended for
    /// generators that guarantee them by construction and for exercising
    /// [`validate_dataset`].
    pub fn new_unchecked(schema: MediatorSchema, p: usize, records: Vec<SubjectRecord>) -> Self {
        Self { schema, p, records }
    }

    pub fn schema(&self) -> &MediatorSchema {
        &self.schema
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.schema.k
    }

    pub fn ell(&self) -> usize {
        self.schema.ell
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SubjectRecord> {
        self.records
    }

    /// Column header in file order.
    pub fn header(&self) -> Vec<String> {
        header_for(self.p, self.schema.k)
    }
}

fn header_for(p: usize, k: usize) -> Vec<String> {
    let mut cols: Vec<String> = (1..=p).map(|i| format!("c_{i}")).collect();
    cols.push("a".into());
    cols.extend((1..=k).map(|j| format!("m_{j}")));
    cols.push("time".into());
    cols.push("event".into());
    cols
}

fn parse_indicator(field: &str, row: usize, column: &str) -> Result<u8> {
    let value: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
        row,
        message: format!("column `{column}`: `{field}` is not numeric"),
    })?;
    if value == 0.0 {
        Ok(0)
    } else if value == 1.0 {
        Ok(1)
    } else {
        Err(Error::MalformedRow {
            row,
            message: format!("column `{column}`: indicator must be 0 or 1, got `{field}`"),
        })
    }
}

fn parse_real(field: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
        row,
        message: format!("column `{column}`: `{field}` is not numeric"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedRow {
            row,
            message: format!("column `{column}`: value must be finite"),
        });
    }
    Ok(value)
}

/// Reads `c_1,...,c_p,a,m_1,...,m_k,time,event` from `path`.
///
/// The covariate count `p` is taken from the header. Mediator columns may
/// be named either `m_j` or with the schema's labels. Row indices in errors
/// are 0-based positions among the data rows.
pub fn load_dataset(path: impl AsRef<Path>, schema: &MediatorSchema) -> Result<Dataset> {
    schema.check()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Empty("file has no header".into()));
    }
    let k = schema.k;
    if header.len() < k + 3 {
        return Err(Error::Header {
            expected: header_for(0, k).join(","),
            found: header.join(","),
        });
    }
    let p = header.len() - k - 3;
    let expected = header_for(p, k);
    for (j, (found, want)) in header.iter().zip(&expected).enumerate() {
        let mediator_alias = j > p && j <= p + k && *found == schema.names[j - p - 1];
        if found != want && !mediator_alias {
            return Err(Error::Header {
                expected: expected.join(","),
                found: header.join(","),
            });
        }
    }

    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let rec = result.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != expected.len() {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        let c = (0..p)
            .map(|i| parse_real(&rec[i], row, &expected[i]))
            .collect::<Result<Vec<_>>>()?;
        let a = parse_indicator(&rec[p], row, "a")?;
        let m = (0..k)
            .map(|j| parse_indicator(&rec[p + 1 + j], row, &expected[p + 1 + j]))
            .collect::<Result<Vec<_>>>()?;
        let time = parse_real(&rec[p + 1 + k], row, "time")?;
        if time <= 0.0 {
            return Err(Error::MalformedRow {
                row,
                message: format!("time must be positive, got {time}"),
            });
        }
        let event = parse_indicator(&rec[p + 2 + k], row, "event")? == 1;
        if a == 0 {
            if let Some(j) = (0..schema.ell).find(|&j| m[j] == 1) {
                return Err(Error::StructuralZero {
                    row,
                    mediator: j + 1,
                });
            }
        }
        records.push(SubjectRecord {
            c,
            a,
            m,
            time,
            event,
        });
    }
    if records.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    Dataset::new(schema.clone(), p, records)
}

/// Writes `d` in the format read by [`load_dataset`]. Reals use the
/// shortest representation that parses back to the same bits.
pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "{}", d.header().join(","))?;
    let mut line = String::new();
    for r in &d.records {
        line.clear();
        for c in &r.c {
            line.push_str(&format!("{c},"));
        }
        line.push_str(&format!("{},", r.a));
        for m in &r.m {
            line.push_str(&format!("{m},"));
        }
        line.push_str(&format!("{},{}", r.time, u8::from(r.event)));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Invariant checked by [`validate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Check {
    Schema,
    RecordShape,
    Indicators,
    PositiveTime,
    FiniteCovariates,
    StructuralZero,
    BothExposureLevels,
    EventsInEachArm,
    /// Warning only: a non-structural mediator is observed at 1 exclusively
    /// among the exposed, so its A=0 model is extrapolated.
    EmpiricalSupport,
}

impl Check {
    fn label(self) -> &'static str {
        match self {
            Check::Schema => "schema is consistent",
            Check::RecordShape => "records share p and k",
            Check::Indicators => "indicators in {0,1}",
            Check::PositiveTime => "time > 0",
            Check::FiniteCovariates => "covariates finite",
            Check::StructuralZero => "a=0 implies m_j=0 for j <= ell",
            Check::BothExposureLevels => "both exposure levels present",
            Check::EventsInEachArm => "at least one event in each exposure arm",
            Check::EmpiricalSupport => "non-structural mediator observed with a=0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub check: Check,
    pub rows: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        self.failures
            .iter()
            .map(|f| {
                let rows: Vec<String> = f.rows.iter().take(5).map(|r| r.to_string()).collect();
                if rows.is_empty() {
                    format!("{} ({})", f.check.label(), f.detail)
                } else {
                    format!(
                        "{} ({}; rows {})",
                        f.check.label(),
                        f.detail,
                        rows.join(",")
                    )
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Scans every invariant and reports offending rows. Never fails.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let schema = &d.schema;
    if let Err(e) = schema.check() {
        report.failures.push(Finding {
            check: Check::Schema,
            rows: vec![],
            detail: e.to_string(),
        });
    }

    let mut shape = Vec::new();
    let mut indicators = Vec::new();
    let mut times = Vec::new();
    let mut finite = Vec::new();
    let mut structural = Vec::new();
    for (i, r) in d.records.iter().enumerate() {
        if r.c.len() != d.p || r.m.len() != schema.k {
            shape.push(i);
            continue;
        }
        if r.a > 1 || r.m.iter().any(|&m| m > 1) {
            indicators.push(i);
        }
        if !(r.time > 0.0 && r.time.is_finite()) {
            times.push(i);
        }
        if r.c.iter().any(|c| !c.is_finite()) {
            finite.push(i);
        }
        if r.a == 0 && r.m[..schema.ell.min(schema.k)].contains(&1) {
            structural.push(i);
        }
    }
    for (check, rows) in [
        (Check::RecordShape, shape),
        (Check::Indicators, indicators),
        (Check::PositiveTime, times),
        (Check::FiniteCovariates, finite),
        (Check::StructuralZero, structural),
    ] {
        if !rows.is_empty() {
            report.failures.push(Finding {
                check,
                detail: format!("{} offending rows", rows.len()),
                rows,
            });
        }
    }

    let exposed = d.records.iter().filter(|r| r.a == 1).count();
    let unexposed = d.records.iter().filter(|r| r.a == 0).count();
    if exposed == 0 || unexposed == 0 {
        report.failures.push(Finding {
            check: Check::BothExposureLevels,
            rows: vec![],
            detail: format!("{exposed} exposed, {unexposed} unexposed"),
        });
    }
    let events = |arm: u8| d.records.iter().filter(|r| r.a == arm && r.event).count();
    let (e0, e1) = (events(0), events(1));
    if e0 == 0 || e1 == 0 {
        report.failures.push(Finding {
            check: Check::EventsInEachArm,
            rows: vec![],
            detail: format!("{e0} events among unexposed, {e1} among exposed"),
        });
    }

    for j in schema.ell..schema.k {
        let ones: Vec<usize> = d
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.m.get(j) == Some(&1))
            .map(|(i, _)| i)
            .collect();
        let with_unexposed = ones.iter().any(|&i| d.records[i].a == 0);
        if !ones.is_empty() && !with_unexposed {
            report.warnings.push(Finding {
                check: Check::EmpiricalSupport,
                detail: format!(
                    "m_{} = 1 occurs only with a = 1 although it is not a structural zero",
                    j + 1
                ),
                rows: ones,
            });
        }
    }
    report
}
