use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::records::{ClaimId, ClaimRecord};
use crate::error::{Error, Result};

/// Canonical column order of the claims table.
pub const CLAIMS_COLUMNS: [&str; 15] = [
    "episode_id",
    "beneficiary_id",
    "episode_start_day",
    "episode_end_day",
    "episode_total_cost",
    "physician_id",
    "claim_id",
    "claim_start_day",
    "claim_end_day",
    "claim_cost",
    "procedure_code",
    "procedure_category",
    "diagnosis_code",
    "diagnosis_category",
    "inpatient_flag",
];

const NA: &str = "NA";

#[derive(Clone, Debug)]
pub struct SchemaConfig {
    /// Day zero for calendar dates found in day columns.
    pub epoch: NaiveDate,
    /// Abort on the first bad row instead of skipping it.
    pub strict: bool,
    /// Procedure categories treated as inpatient when the table has no
    /// `inpatient_flag` column.
    pub inpatient_categories: BTreeSet<String>,
    pub delimiter: u8,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            epoch: NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch"),
            strict: true,
            inpatient_categories: BTreeSet::new(),
            delimiter: b',',
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ClaimsTable {
    pub records: Vec<ClaimRecord>,
    /// Rows dropped in non-strict mode.
    pub skipped: Vec<(u64, String)>,
}

struct Columns {
    idx: HashMap<&'static str, usize>,
    has_flag: bool,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let mut idx = HashMap::new();
        for name in CLAIMS_COLUMNS {
            if let Some(pos) = header.iter().position(|h| h.trim() == name) {
                idx.insert(name, pos);
            } else if name != "inpatient_flag" {
                return Err(Error::Schema { column: name.to_string() });
            }
        }
        let has_flag = idx.contains_key("inpatient_flag");
        Ok(Self { idx, has_flag })
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, name: &str) -> std::result::Result<&'r str, String> {
        let pos = self.idx[name];
        row.get(pos).map(str::trim).ok_or_else(|| format!("missing field `{name}`"))
    }
}

/// Parse a delimited claims table into records.
pub fn parse_claims<R: Read>(input: R, config: &SchemaConfig) -> Result<ClaimsTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .flexible(true)
        .from_reader(input);
    let columns = Columns::from_header(reader.headers()?)?;

    let mut table = ClaimsTable::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, &columns, config) {
            Ok(record) => table.records.push(record),
            Err(message) if config.strict => return Err(Error::Row { line, message }),
            Err(message) => table.skipped.push((line, message)),
        }
    }
    Ok(table)
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &Columns,
    config: &SchemaConfig,
) -> std::result::Result<ClaimRecord, String> {
    let text = |name: &str| cols.get(row, name).map(str::to_string);
    let optional = |name: &str| -> std::result::Result<Option<String>, String> {
        let v = cols.get(row, name)?;
        Ok(if v.is_empty() || v == NA { None } else { Some(v.to_string()) })
    };
    let day = |name: &str| parse_day(cols.get(row, name)?, config.epoch).map_err(|e| format!("{name}: {e}"));
    let cost = |name: &str| parse_cost(cols.get(row, name)?).map_err(|e| format!("{name}: {e}"));

    let procedure_category = optional("procedure_category")?;
    let inpatient_flag = if cols.has_flag {
        parse_flag(cols.get(row, "inpatient_flag")?)?
    } else {
        procedure_category
            .as_ref()
            .is_some_and(|c| config.inpatient_categories.contains(c))
    };

    let record = ClaimRecord {
        episode_id: text("episode_id")?,
        beneficiary_id: text("beneficiary_id")?,
        episode_start_day: day("episode_start_day")?,
        episode_end_day: day("episode_end_day")?,
        episode_total_cost: cost("episode_total_cost")?,
        physician_id: text("physician_id")?,
        claim_id: ClaimId(text("claim_id")?),
        claim_start_day: day("claim_start_day")?,
        claim_end_day: day("claim_end_day")?,
        claim_cost: cost("claim_cost")?,
        procedure_code: optional("procedure_code")?,
        procedure_category,
        diagnosis_code: optional("diagnosis_code")?,
        diagnosis_category: optional("diagnosis_category")?,
        inpatient_flag,
    };

    if !(record.episode_start_day <= record.claim_start_day
        && record.claim_start_day <= record.claim_end_day
        && record.claim_end_day <= record.episode_end_day)
    {
        return Err(format!(
            "claim span [{}, {}] not inside episode span [{}, {}]",
            record.claim_start_day, record.claim_end_day, record.episode_start_day, record.episode_end_day
        ));
    }
    if record.episode_id.is_empty() || record.physician_id.is_empty() || record.claim_id.0.is_empty() {
        return Err("empty identifier".to_string());
    }
    Ok(record)
}

fn parse_day(raw: &str, epoch: NaiveDate) -> std::result::Result<i64, String> {
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map(|d| (d - epoch).num_days())
        .map_err(|_| format!("unparsable day `{raw}`"))
}

fn parse_cost(raw: &str) -> std::result::Result<f64, String> {
    let cleaned = raw.trim_start_matches('$').replace(',', "");
    let v: f64 = cleaned.parse().map_err(|_| format!("unparsable cost `{raw}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("cost must be finite and non-negative, got `{raw}`"));
    }
    Ok(v)
}

fn parse_flag(raw: &str) -> std::result::Result<bool, String> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "y" | "yes" => Ok(true),
        "0" | "false" | "n" | "no" | "" | "na" => Ok(false),
        _ => Err(format!("unparsable inpatient_flag `{raw}`")),
    }
}

/// Write records in the canonical column layout.
pub fn write_claims<W: Write>(records: &[ClaimRecord], output: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(CLAIMS_COLUMNS)?;
    let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| NA.to_string());
    for r in records {
        writer.write_record([
            r.episode_id.clone(),
            r.beneficiary_id.clone(),
            r.episode_start_day.to_string(),
            r.episode_end_day.to_string(),
            r.episode_total_cost.to_string(),
            r.physician_id.clone(),
            r.claim_id.0.clone(),
            r.claim_start_day.to_string(),
            r.claim_end_day.to_string(),
            r.claim_cost.to_string(),
            opt(&r.procedure_code),
            opt(&r.procedure_category),
            opt(&r.diagnosis_code),
            opt(&r.diagnosis_category),
            if r.inpatient_flag { "1" } else { "0" }.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "episode_id,beneficiary_id,episode_start_day,episode_end_day,episode_total_cost,physician_id,claim_id,claim_start_day,claim_end_day,claim_cost,procedure_code,procedure_category,diagnosis_code,diagnosis_category,inpatient_flag";

    fn parse(body: &str, strict: bool) -> Result<ClaimsTable> {
        let text = format!("{HEADER}\n{body}");
        let config = SchemaConfig { strict, ..SchemaConfig::default() };
        parse_claims(text.as_bytes(), &config)
    }

    #[test]
    fn na_diagnosis_becomes_absent() {
        let t = parse("e1,b1,0,90,100,p1,c1,3,3,100,27447,SURG,M17.11,NA,0\n", true).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].diagnosis_category, None);
        assert_eq!(t.records[0].diagnosis_code.as_deref(), Some("M17.11"));
    }

    #[test]
    fn zero_length_claim_span() {
        let t = parse("e1,b1,0,90,100,p1,c1,5,5,100,X,PX,D,DX,1\n", true).unwrap();
        let r = &t.records[0];
        assert_eq!(r.claim_start_day, r.claim_end_day);
        assert!(r.inpatient_flag);
    }

    #[test]
    fn bad_cost_is_row_error_in_strict_mode() {
        let err = parse("e1,b1,0,90,100,p1,c1,5,5,100,X,PX,D,DX,0\ne1,b1,0,90,100,p1,c2,5,5,abc,X,PX,D,DX,0\n", true)
            .unwrap_err();
        match err {
            Error::Row { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("claim_cost"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_row_skipped_in_lenient_mode() {
        let t = parse("e1,b1,0,90,100,p1,c1,5,5,abc,X,PX,D,DX,0\ne1,b1,0,90,100,p1,c2,5,5,7,X,PX,D,DX,0\n", false)
            .unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.skipped.len(), 1);
        assert_eq!(t.skipped[0].0, 2);
    }

    #[test]
    fn missing_column_names_it() {
        let text = "episode_id,beneficiary_id\ne1,b1\n";
        let err = parse_claims(text.as_bytes(), &SchemaConfig::default()).unwrap_err();
        match err {
            Error::Schema { column } => assert_eq!(column, "episode_start_day"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn calendar_dates_become_offsets() {
        let body = "e1,b1,2020-01-01,2020-04-01,10,p1,c1,2020-01-11,2020-01-12,10,X,PX,D,DX,0\n";
        let text = format!("{HEADER}\n{body}");
        let config = SchemaConfig {
            epoch: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            ..SchemaConfig::default()
        };
        let t = parse_claims(text.as_bytes(), &config).unwrap();
        assert_eq!(t.records[0].episode_start_day, 0);
        assert_eq!(t.records[0].claim_start_day, 10);
        assert_eq!(t.records[0].episode_end_day, 91);
    }

    #[test]
    fn inpatient_derived_from_procedure_category_without_flag_column() {
        let header = HEADER.trim_end_matches(",inpatient_flag");
        let text = format!("{header}\ne1,b1,0,9,1,p1,c1,0,0,1,X,INPT,D,DX\ne1,b1,0,9,1,p1,c2,1,1,1,X,OUTPT,D,DX\n");
        let config = SchemaConfig {
            inpatient_categories: ["INPT".to_string()].into_iter().collect(),
            ..SchemaConfig::default()
        };
        let t = parse_claims(text.as_bytes(), &config).unwrap();
        assert!(t.records[0].inpatient_flag);
        assert!(!t.records[1].inpatient_flag);
    }

    #[test]
    fn negative_cost_rejected() {
        assert!(parse("e1,b1,0,90,100,p1,c1,5,5,-3,X,PX,D,DX,0\n", true).is_err());
    }

    #[test]
    fn write_then_parse_is_identity() {
        let t = parse("e1,b1,0,90,100.25,p1,c1,5,6,100.25,NA,NA,D,DX,1\n", true).unwrap();
        let mut buf = Vec::new();
        write_claims(&t.records, &mut buf).unwrap();
        let again = parse_claims(buf.as_slice(), &SchemaConfig::default()).unwrap();
        assert_eq!(again.records, t.records);
    }
}
