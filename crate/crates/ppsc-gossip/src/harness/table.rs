//! The one CSV shape every experiment emits.
//!
//! Header `params,metric,value,std_err,forced`; the params field packs the
//! grid coordinates as `key=value` pairs joined by `;`. Fields never contain
//! commas so no quoting is needed. Rows keep insertion order, and the
//! experiments insert deterministically, so a fixed config and seed always
//! produce byte-identical output.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub params: Vec<(String, String)>,
    pub metric: String,
    pub value: f64,
    pub std_err: Option<f64>,
    /// Whether a forced manual override was in effect when this row was
    /// produced.
    pub forced: bool,
}

impl ResultRow {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new() -> Self {
        ResultTable::default()
    }

    pub fn push(
        &mut self,
        params: &[(&str, String)],
        metric: &str,
        value: f64,
        std_err: Option<f64>,
        forced: bool,
    ) {
        self.rows.push(ResultRow {
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            metric: metric.to_string(),
            value,
            std_err,
            forced,
        });
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// First row with the given metric whose params include every listed
    /// pair.
    pub fn find(&self, metric: &str, params: &[(&str, &str)]) -> Option<&ResultRow> {
        self.rows.iter().find(|row| {
            row.metric == metric && params.iter().all(|(k, v)| row.param(k) == Some(v))
        })
    }

    /// All rows with the given metric whose params include every listed pair.
    pub fn select<'a>(
        &'a self,
        metric: &'a str,
        params: &'a [(&'a str, &'a str)],
    ) -> impl Iterator<Item = &'a ResultRow> {
        self.rows.iter().filter(move |row| {
            row.metric == metric && params.iter().all(|(k, v)| row.param(k) == Some(v))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("params,metric,value,std_err,forced\n");
        for row in &self.rows {
            let params = row
                .params
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            let std_err = row.std_err.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{params},{},{},{std_err},{}",
                row.metric, row.value, row.forced
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}
