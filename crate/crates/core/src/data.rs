//! Measured data tables: CSV schemas, ingestion with validation, emission.
//!
//! Two CSV layouts are supported. Attenuation tables carry one row per
//! attenuation setting with single-arm, double-arm and vacuum gains of the
//! signal and decoy states. Combination tables carry phase-randomised gains
//! `q_<A><B>` for the six intensity pairs plus the encoded gain and QBER.
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoy::GainTable;
use crate::error::{Error, Result};
use crate::params::{Basis, IntensityLabel, User};
use crate::tallies::{ComboKey, MeasurementTallies};

pub const BUNDLED_ATTENUATION_CSV: &str = include_str!("../data/attenuation.csv");
pub const BUNDLED_COMBOS_CSV: &str = include_str!("../data/combos.csv");

/// Largest accepted gap between the total loss and the sum of arm attenuations.
pub const LOSS_SUM_TOLERANCE_DB: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    Attenuation,
    Combos,
    Session,
}

impl std::str::FromStr for Schema {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attenuation" => Ok(Schema::Attenuation),
            "combos" | "combinations" => Ok(Schema::Combos),
            "session" | "session-json" | "json" => Ok(Schema::Session),
            _ => Err(Error::InvalidParameter(format!("unknown schema '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationRow {
    pub attenuation_a_db: f64,
    pub attenuation_b_db: f64,
    pub total_loss_db: f64,
    pub q_ua: f64,
    pub q_ub: f64,
    pub q_uu: f64,
    pub e_u: f64,
    pub q_va: f64,
    pub q_vb: f64,
    pub q_vv: f64,
    pub e_v: f64,
    pub q_00: f64,
    pub skr_original_bps: Option<f64>,
    pub skr_sns_bps: Option<f64>,
    pub skc0_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRow {
    pub attenuation_a_db: f64,
    pub attenuation_b_db: f64,
    pub total_loss_db: f64,
    pub q_uu: f64,
    pub q_vv: f64,
    pub q_ww: f64,
    pub q_uv: f64,
    pub q_uw: f64,
    pub q_vw: f64,
    pub qz_uu: f64,
    pub ez_uu: f64,
    pub skr_curty_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dataset {
    Attenuation(Vec<AttenuationRow>),
    Combos(Vec<ComboRow>),
    Session(Vec<MeasurementTallies>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Attenuation(r) => r.len(),
            Dataset::Combos(r) => r.len(),
            Dataset::Session(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub data: Dataset,
    pub warnings: Vec<IngestWarning>,
}

const ATTENUATION_COLUMNS: [&str; 15] = [
    "attenuation_a_db",
    "attenuation_b_db",
    "total_loss_db",
    "q_ua",
    "q_ub",
    "q_uu",
    "e_u",
    "q_va",
    "q_vb",
    "q_vv",
    "e_v",
    "q_00",
    "skr_original_bps",
    "skr_sns_bps",
    "skc0_bps",
];

const COMBO_COLUMNS: [&str; 12] = [
    "attenuation_a_db",
    "attenuation_b_db",
    "total_loss_db",
    "q_uu",
    "q_vv",
    "q_ww",
    "q_uv",
    "q_uw",
    "q_vw",
    "qz_uu",
    "ez_uu",
    "skr_curty_bps",
];

/// Columns holding probabilities (gains and QBERs).
fn is_probability(col: &str) -> bool {
    col.starts_with("q_") || col.starts_with("e_") || col.starts_with("qz_") || col.starts_with("ez_")
}

fn is_qber(col: &str) -> bool {
    col.starts_with("e_") || col.starts_with("ez_")
}

fn is_optional(col: &str) -> bool {
    col.ends_with("_bps")
}

/// One parsed CSV record: values in schema column order.
struct Record {
    line: u64,
    values: Vec<Option<f64>>,
}

fn parse_records(text: &str, columns: &[&str]) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e)),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let header_line = reader.position().line().max(1);
    let mut index = Vec::with_capacity(columns.len());
    for col in columns {
        match headers.iter().position(|h| h == *col) {
            Some(i) => index.push(Some(i)),
            None if is_optional(col) => index.push(None),
            None => {
                return Err(Error::Parse {
                    line: header_line,
                    column: headers.len() as u64 + 1,
                    message: format!("missing column '{col}'"),
                })
            }
        }
    }
    if let Some(extra) = headers.iter().position(|h| !columns.contains(&h)) {
        return Err(Error::Parse {
            line: header_line,
            column: extra as u64 + 1,
            message: format!("unknown column '{}'", &headers[extra]),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(columns.len());
        for (col, idx) in columns.iter().zip(&index) {
            let field = idx.map(|i| &rec[i]).unwrap_or("");
            if field.is_empty() || field == "-" {
                if is_optional(col) {
                    values.push(None);
                    continue;
                }
                return Err(Error::Parse {
                    line,
                    column: idx.map(|i| i as u64 + 1).unwrap_or(0),
                    message: format!("empty value for '{col}'"),
                });
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: idx.map(|i| i as u64 + 1).unwrap_or(0),
                message: format!("'{field}' is not a number ({col})"),
            })?;
            if !v.is_finite() {
                return Err(Error::Range {
                    field: col.to_string(),
                    value: v,
                    line,
                });
            }
            values.push(Some(v));
        }
        out.push(Record { line, values });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let (line, column) = match e.position() {
        Some(p) => (p.line(), 0),
        None => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: e.to_string(),
    }
}

/// Range checks shared by both CSV layouts. Hard errors for values outside
/// their domain; softer issues become warnings, or errors when `strict`.
fn check_record(rec: &Record, columns: &[&str], strict: bool, warnings: &mut Vec<IngestWarning>) -> Result<()> {
    let soft = |msg: String, warnings: &mut Vec<IngestWarning>| -> Result<()> {
        if strict {
            Err(Error::InvalidParameter(format!("line {}: {msg}", rec.line)))
        } else {
            warnings.push(IngestWarning {
                line: rec.line,
                message: msg,
            });
            Ok(())
        }
    };
    for (col, v) in columns.iter().zip(&rec.values) {
        let Some(v) = *v else { continue };
        let field = if is_qber(col) { format!("qber {col}") } else { col.to_string() };
        if is_probability(col) && !(0.0..=1.0).contains(&v) {
            return Err(Error::Range {
                field,
                value: v,
                line: rec.line,
            });
        }
        if !is_probability(col) && v < 0.0 {
            return Err(Error::Range {
                field,
                value: v,
                line: rec.line,
            });
        }
        if is_qber(col) && v > 0.5 {
            soft(format!("{field} = {v} exceeds 1/2 (not folded)"), warnings)?;
        }
    }
    let (a, b, total) = (
        rec.values[0].unwrap_or(0.0),
        rec.values[1].unwrap_or(0.0),
        rec.values[2].unwrap_or(0.0),
    );
    if (a + b - total).abs() > LOSS_SUM_TOLERANCE_DB + 1e-9 {
        soft(
            format!("arm attenuations {a} + {b} dB differ from the total {total} dB"),
            warnings,
        )?;
    }
    Ok(())
}

fn attenuation_row(v: &[Option<f64>]) -> AttenuationRow {
    let g = |i: usize| v[i].unwrap_or(0.0);
    AttenuationRow {
        attenuation_a_db: g(0),
        attenuation_b_db: g(1),
        total_loss_db: g(2),
        q_ua: g(3),
        q_ub: g(4),
        q_uu: g(5),
        e_u: g(6),
        q_va: g(7),
        q_vb: g(8),
        q_vv: g(9),
        e_v: g(10),
        q_00: g(11),
        skr_original_bps: v[12],
        skr_sns_bps: v[13],
        skc0_bps: v[14],
    }
}

fn combo_row(v: &[Option<f64>]) -> ComboRow {
    let g = |i: usize| v[i].unwrap_or(0.0);
    ComboRow {
        attenuation_a_db: g(0),
        attenuation_b_db: g(1),
        total_loss_db: g(2),
        q_uu: g(3),
        q_vv: g(4),
        q_ww: g(5),
        q_uv: g(6),
        q_uw: g(7),
        q_vw: g(8),
        qz_uu: g(9),
        ez_uu: g(10),
        skr_curty_bps: v[11],
    }
}

/// Single-arm gains of one user that disagree with the other user's by more
/// than this factor at near-equal attenuation are flagged.
const SINGLE_ARM_RATIO_LIMIT: f64 = 1.5;

fn single_arm_consistency(row: &AttenuationRow) -> Option<String> {
    if (row.attenuation_a_db - row.attenuation_b_db).abs() > 0.5 {
        return None;
    }
    for (label, a, b) in [("q_ua/q_ub", row.q_ua, row.q_ub), ("q_va/q_vb", row.q_va, row.q_vb)] {
        if a > 0.0 && b > 0.0 && (a / b).max(b / a) > SINGLE_ARM_RATIO_LIMIT {
            return Some(format!("single-arm gains {label} = {a}/{b} disagree at matched attenuation"));
        }
    }
    None
}

/// Parses CSV text under `schema`. Empty input is an empty dataset unless
/// `strict`.
pub fn ingest_str(text: &str, schema: Schema, strict: bool) -> Result<Ingested> {
    let mut warnings = Vec::new();
    let data = match schema {
        Schema::Attenuation | Schema::Combos => {
            let columns: &[&str] = if schema == Schema::Attenuation {
                &ATTENUATION_COLUMNS
            } else {
                &COMBO_COLUMNS
            };
            let records = parse_records(text, columns)?;
            for r in &records {
                check_record(r, columns, strict, &mut warnings)?;
            }
            if schema == Schema::Attenuation {
                let rows: Vec<AttenuationRow> = records.iter().map(|r| attenuation_row(&r.values)).collect();
                for (row, rec) in rows.iter().zip(&records) {
                    if let Some(msg) = single_arm_consistency(row) {
                        if strict {
                            return Err(Error::InvalidParameter(format!("line {}: {msg}", rec.line)));
                        }
                        warnings.push(IngestWarning {
                            line: rec.line,
                            message: msg,
                        });
                    }
                }
                Dataset::Attenuation(rows)
            } else {
                Dataset::Combos(records.iter().map(|r| combo_row(&r.values)).collect())
            }
        }
        Schema::Session => {
            if text.trim().is_empty() {
                Dataset::Session(Vec::new())
            } else {
                Dataset::Session(parse_session_json(text)?)
            }
        }
    };
    if strict && data.is_empty() {
        return Err(Error::MissingInput("input holds no data rows".into()));
    }
    Ok(Ingested { data, warnings })
}

/// Accepts a tallies object, a list of them, or any object with a
/// `tallies` field (as written by session runs).
fn parse_session_json(text: &str) -> Result<Vec<MeasurementTallies>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let one = |v: serde_json::Value| -> Result<MeasurementTallies> {
        let v = match v {
            serde_json::Value::Object(mut m) if m.contains_key("tallies") => m.remove("tallies").unwrap_or_default(),
            other => other,
        };
        Ok(serde_json::from_value(v)?)
    };
    match value {
        serde_json::Value::Array(items) => items.into_iter().map(one).collect(),
        other => Ok(vec![one(other)?]),
    }
}

pub fn ingest(path: &Path, schema: Schema, strict: bool) -> Result<Ingested> {
    let text = std::fs::read_to_string(path)?;
    ingest_str(&text, schema, strict)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV text of `data`, optionally preceded by `# ` comment lines.
pub fn emit(data: &Dataset, comments: &[String]) -> Result<String> {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    match data {
        Dataset::Attenuation(rows) => {
            out.push_str(&ATTENUATION_COLUMNS.join(","));
            out.push('\n');
            for r in rows {
                let vals = [
                    r.attenuation_a_db,
                    r.attenuation_b_db,
                    r.total_loss_db,
                    r.q_ua,
                    r.q_ub,
                    r.q_uu,
                    r.e_u,
                    r.q_va,
                    r.q_vb,
                    r.q_vv,
                    r.e_v,
                    r.q_00,
                ];
                let mut fields: Vec<String> = vals.iter().map(|v| format!("{v}")).collect();
                fields.extend([r.skr_original_bps, r.skr_sns_bps, r.skc0_bps].map(fmt_opt));
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        Dataset::Combos(rows) => {
            out.push_str(&COMBO_COLUMNS.join(","));
            out.push('\n');
            for r in rows {
                let vals = [
                    r.attenuation_a_db,
                    r.attenuation_b_db,
                    r.total_loss_db,
                    r.q_uu,
                    r.q_vv,
                    r.q_ww,
                    r.q_uv,
                    r.q_uw,
                    r.q_vw,
                    r.qz_uu,
                    r.ez_uu,
                ];
                let mut fields: Vec<String> = vals.iter().map(|v| format!("{v}")).collect();
                fields.push(fmt_opt(r.skr_curty_bps));
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        Dataset::Session(items) => {
            out = serde_json::to_string_pretty(items)?;
            out.push('\n');
        }
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

impl AttenuationRow {
    /// Tallies with the phase-randomised u-u and v-v gains (X basis),
    /// single-arm gains and the vacuum gain.
    pub fn to_tallies(&self) -> Result<MeasurementTallies> {
        use IntensityLabel::*;
        let mut t = MeasurementTallies::new();
        t.insert(ComboKey::new(U, U, Basis::X), self.q_uu, Some(self.e_u), 0)?;
        t.insert(ComboKey::new(V, V, Basis::X), self.q_vv, Some(self.e_v), 0)?;
        t.set_single_arm(User::Alice, U, self.q_ua)?;
        t.set_single_arm(User::Bob, U, self.q_ub)?;
        t.set_single_arm(User::Alice, V, self.q_va)?;
        t.set_single_arm(User::Bob, V, self.q_vb)?;
        t.set_vacuum_gain(self.q_00)?;
        Ok(t)
    }

    /// Total of the arm attenuations.
    pub fn arm_sum_db(&self) -> f64 {
        self.attenuation_a_db + self.attenuation_b_db
    }
}

impl ComboRow {
    pub fn gain_table(&self) -> GainTable {
        use IntensityLabel::*;
        [
            ((U, U), self.q_uu),
            ((V, V), self.q_vv),
            ((W, W), self.q_ww),
            ((U, V), self.q_uv),
            ((U, W), self.q_uw),
            ((V, W), self.q_vw),
        ]
        .into_iter()
        .collect()
    }

    pub fn to_tallies(&self) -> Result<MeasurementTallies> {
        let mut t = MeasurementTallies::new();
        for ((a, b), q) in self.gain_table() {
            t.insert(ComboKey::new(a, b, Basis::X), q, None, 0)?;
        }
        t.insert(
            ComboKey::new(IntensityLabel::U, IntensityLabel::U, Basis::Z),
            self.qz_uu,
            Some(self.ez_uu),
            0,
        )?;
        Ok(t)
    }
}

pub fn bundled_attenuation_rows() -> Result<Vec<AttenuationRow>> {
    match ingest_str(BUNDLED_ATTENUATION_CSV, Schema::Attenuation, false)?.data {
        Dataset::Attenuation(rows) => Ok(rows),
        _ => unreachable!("attenuation schema yields attenuation rows"),
    }
}

pub fn bundled_combo_rows() -> Result<Vec<ComboRow>> {
    match ingest_str(BUNDLED_COMBOS_CSV, Schema::Combos, false)?.data {
        Dataset::Combos(rows) => Ok(rows),
        _ => unreachable!("combination schema yields combination rows"),
    }
}
