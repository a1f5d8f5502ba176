use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Metric;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    pub name: String,
    pub metric: Metric,
    pub spec_hash: String,
    pub code_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// One sweep point. Fields that do not apply to the metric, or could not be
/// computed, are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub series: String,
    pub sweep_value: Option<f64>,
    pub truth_x: Option<f64>,
    pub truth_y: Option<f64>,
    pub truth_z: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub rmse_m: Option<f64>,
    pub median_err_m: Option<f64>,
    pub err_min_m: Option<f64>,
    pub err_max_m: Option<f64>,
    pub mean_doa_err_deg: Option<f64>,
    pub mean_efficiency: Option<f64>,
    /// Set when the whole point failed.
    pub error: Option<String>,
}

/// CSV column order, identical to the field order of [`ResultRow`].
pub const CSV_COLUMNS: [&str; 14] = [
    "series",
    "sweep_value",
    "truth_x",
    "truth_y",
    "truth_z",
    "trials",
    "failures",
    "rmse_m",
    "median_err_m",
    "err_min_m",
    "err_max_m",
    "mean_doa_err_deg",
    "mean_efficiency",
    "error",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::config(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub metadata: ResultMetadata,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    fn ensure_rows(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::input("result table has no rows"));
        }
        Ok(())
    }

    /// Metadata as `# key: value` lines, then a header row and one line per row.
    pub fn to_csv_string(&self) -> Result<String> {
        self.ensure_rows()?;
        let m = &self.metadata;
        let mut out = String::new();
        out.push_str(&format!("# name: {}\n", m.name));
        out.push_str(&format!("# metric: {}\n", serde_json::to_string(&m.metric)?.trim_matches('"')));
        out.push_str(&format!("# spec_hash: {}\n", m.spec_hash));
        out.push_str(&format!("# code_version: {}\n", m.code_version));
        if let Some(ts) = &m.timestamp {
            out.push_str(&format!("# timestamp: {ts}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let body = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| Error::input(e.to_string()))?);
        Ok(out)
    }

    pub fn to_json_string(&self) -> Result<String> {
        self.ensure_rows()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: TableFormat) -> Result<String> {
        match format {
            TableFormat::Csv => self.to_csv_string(),
            TableFormat::Json => self.to_json_string(),
        }
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(": ") {
                    fields.insert(k.to_string(), v.to_string());
                }
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let take = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::input(format!("CSV metadata is missing `{k}`")))
        };
        let metric: Metric = serde_json::from_str(&format!("\"{}\"", take("metric")?))?;
        let metadata = ResultMetadata {
            name: take("name")?,
            metric,
            spec_hash: take("spec_hash")?,
            code_version: take("code_version")?,
            timestamp: fields.get("timestamp").cloned(),
        };
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
            return Err(Error::input(format!("unexpected CSV columns: {headers:?}")));
        }
        let rows = reader.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { metadata, rows })
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn parse(text: &str, format: TableFormat) -> Result<Self> {
        match format {
            TableFormat::Csv => Self::parse_csv(text),
            TableFormat::Json => Self::parse_json(text),
        }
    }

    pub fn export(&self, format: TableFormat, path: &Path) -> Result<()> {
        let text = self.render(format)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, format: TableFormat) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, format)
    }
}
