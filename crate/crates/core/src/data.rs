//! Tabular data model.
//!
//! Columns are either numeric (`f64`) or categorical, in which case values are
//! stored as indices into a lexicographically sorted level table. Tables are
//! column-major and immutable once handed to an [`Explainer`](crate::Explainer);
//! explanation methods work on cheap modified copies.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;

use serde::Serialize;

use crate::error::{ExplainError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted, unique level names. Empty for numeric columns.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
        }
    }

    /// Builds a categorical schema; levels are sorted and deduplicated.
    pub fn categorical<I, S>(name: impl Into<String>, levels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let levels: BTreeSet<String> = levels.into_iter().map(Into::into).collect();
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            levels: levels.into_iter().collect(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == ColumnKind::Numeric
    }

    pub fn level_index(&self, level: &str) -> Option<u32> {
        self.levels
            .binary_search_by(|l| l.as_str().cmp(level))
            .ok()
            .map(|i| i as u32)
    }

    /// Parses a textual cell into a value of this column.
    pub fn parse_value(&self, text: &str) -> Result<Value> {
        match self.kind {
            ColumnKind::Numeric => match text.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Num(v)),
                _ => Err(ExplainError::Parse(format!(
                    "'{text}' is not a finite number (column '{}')",
                    self.name
                ))),
            },
            ColumnKind::Categorical => self
                .level_index(text)
                .map(Value::Level)
                .ok_or_else(|| ExplainError::Level {
                    column: self.name.clone(),
                    level: text.to_string(),
                }),
        }
    }

    /// Human-readable rendering of a value of this column.
    pub fn render(&self, value: Value) -> String {
        match value {
            Value::Num(v) => format_number(v),
            Value::Level(l) => self.levels.get(l as usize).cloned().unwrap_or_else(|| format!("#{l}")),
        }
    }
}

/// Shortest round-trip decimal rendering.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

/// One cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Level(u32),
}

impl Value {
    /// Bitwise equality; distinguishes `0.0` from `-0.0`.
    pub fn same_bits(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.to_bits() == b.to_bits(),
            (Value::Level(a), Value::Level(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            ColumnData::Numeric(v) => Value::Num(v[row]),
            ColumnData::Categorical(v) => Value::Level(v[row]),
        }
    }

    fn take(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    fn fill(&mut self, value: Value) {
        match (self, value) {
            (ColumnData::Numeric(v), Value::Num(x)) => v.iter_mut().for_each(|c| *c = x),
            (ColumnData::Categorical(v), Value::Level(x)) => v.iter_mut().for_each(|c| *c = x),
            _ => panic!("value kind does not match column kind"),
        }
    }

    fn set(&mut self, row: usize, value: Value) {
        match (self, value) {
            (ColumnData::Numeric(v), Value::Num(x)) => v[row] = x,
            (ColumnData::Categorical(v), Value::Level(x)) => v[row] = x,
            _ => panic!("value kind does not match column kind"),
        }
    }
}

/// A rectangular, column-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Vec<ColumnSchema>,
    columns: Vec<ColumnData>,
    n_rows: usize,
}

impl Table {
    pub fn new(schema: Vec<ColumnSchema>, columns: Vec<ColumnData>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(ExplainError::Schema(format!(
                "{} schema entries for {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &schema {
            if !seen.insert(s.name.as_str()) {
                return Err(ExplainError::Schema(format!("duplicate column '{}'", s.name)));
            }
        }
        let n_rows = columns.first().map_or(0, ColumnData::len);
        for (s, c) in schema.iter().zip(&columns) {
            if c.len() != n_rows {
                return Err(ExplainError::Schema(format!(
                    "column '{}' has {} rows, expected {n_rows}",
                    s.name,
                    c.len()
                )));
            }
            match (s.kind, c) {
                (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(ExplainError::MissingValue {
                            column: s.name.clone(),
                            row,
                        });
                    }
                }
                (ColumnKind::Categorical, ColumnData::Categorical(v)) => {
                    if s.levels.is_empty() {
                        return Err(ExplainError::Schema(format!(
                            "categorical column '{}' has no levels",
                            s.name
                        )));
                    }
                    if let Some(&bad) = v.iter().find(|&&l| l as usize >= s.levels.len()) {
                        return Err(ExplainError::Level {
                            column: s.name.clone(),
                            level: format!("#{bad}"),
                        });
                    }
                }
                _ => {
                    return Err(ExplainError::Schema(format!(
                        "column '{}' data does not match its declared kind",
                        s.name
                    )))
                }
            }
        }
        Ok(Table {
            schema,
            columns,
            n_rows,
        })
    }

    /// Builds a table from textual records, parsing each cell against `schema`.
    pub fn from_records<R, S>(schema: Vec<ColumnSchema>, records: &[R]) -> Result<Self>
    where
        R: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut columns: Vec<ColumnData> = schema
            .iter()
            .map(|s| match s.kind {
                ColumnKind::Numeric => ColumnData::Numeric(Vec::with_capacity(records.len())),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::with_capacity(records.len())),
            })
            .collect();
        for (row, record) in records.iter().enumerate() {
            let record = record.as_ref();
            if record.len() != schema.len() {
                return Err(ExplainError::Parse(format!(
                    "record {row} has {} fields, expected {}",
                    record.len(),
                    schema.len()
                )));
            }
            for ((s, col), cell) in schema.iter().zip(columns.iter_mut()).zip(record) {
                match (s.parse_value(cell.as_ref())?, col) {
                    (Value::Num(x), ColumnData::Numeric(v)) => v.push(x),
                    (Value::Level(x), ColumnData::Categorical(v)) => v.push(x),
                    _ => unreachable!(),
                }
            }
        }
        Table::new(schema, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &ColumnData {
        &self.columns[index]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s.name == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<(&ColumnSchema, &ColumnData)> {
        self.column_index(name).map(|i| (&self.schema[i], &self.columns[i]))
    }

    /// Numeric values of a column, or `None` if it is categorical.
    pub fn numeric(&self, index: usize) -> Option<&[f64]> {
        match &self.columns[index] {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Value {
        self.columns[col].get(row)
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    /// New table holding the given rows, in the given order.
    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Table {
        let rows: Vec<usize> = range.collect();
        self.take_rows(&rows)
    }

    /// Overwrites a whole column with a single value.
    pub fn fill_column(&mut self, col: usize, value: Value) {
        self.columns[col].fill(value);
    }

    pub fn set(&mut self, row: usize, col: usize, value: Value) {
        self.columns[col].set(row, value);
    }

    /// Replaces a column's data wholesale (same kind and length required).
    pub fn replace_column(&mut self, col: usize, data: ColumnData) {
        assert_eq!(data.len(), self.n_rows, "replacement column length");
        assert_eq!(
            matches!(data, ColumnData::Numeric(_)),
            self.schema[col].is_numeric(),
            "replacement column kind"
        );
        self.columns[col] = data;
    }

    /// A table of `n` identical copies of `values`.
    pub fn repeat(schema: &[ColumnSchema], values: &[Value], n: usize) -> Table {
        let columns = values
            .iter()
            .map(|v| match *v {
                Value::Num(x) => ColumnData::Numeric(vec![x; n]),
                Value::Level(l) => ColumnData::Categorical(vec![l; n]),
            })
            .collect();
        Table {
            schema: schema.to_vec(),
            columns,
            n_rows: n,
        }
    }

    /// Drops one column by index.
    pub fn without_column(&self, col: usize) -> Table {
        let mut schema = self.schema.clone();
        let mut columns = self.columns.clone();
        schema.remove(col);
        columns.remove(col);
        Table {
            schema,
            columns,
            n_rows: self.n_rows,
        }
    }
}

/// A table plus an optional target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    table: Table,
    target: Option<String>,
}

impl Dataset {
    pub fn new(table: Table, target: Option<&str>) -> Result<Self> {
        if let Some(t) = target {
            if table.column_index(t).is_none() {
                return Err(ExplainError::Schema(format!("target column '{t}' not found")));
            }
        }
        Ok(Dataset {
            table,
            target: target.map(str::to_string),
        })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.table.n_rows()
    }

    /// Target values as floats. Errors if no target is set or it is categorical.
    pub fn target_values(&self) -> Result<&[f64]> {
        let name = self
            .target
            .as_deref()
            .ok_or_else(|| ExplainError::Schema("dataset has no target column".into()))?;
        let idx = self.table.column_index(name).expect("validated at construction");
        self.table
            .numeric(idx)
            .ok_or_else(|| ExplainError::Schema(format!("target column '{name}' must be numeric")))
    }

    /// The explanatory columns: everything except the target.
    pub fn features(&self) -> Table {
        match self.target.as_deref().and_then(|t| self.table.column_index(t)) {
            Some(idx) => self.table.without_column(idx),
            None => self.table.clone(),
        }
    }
}

/// Reads CSV text into a [`Dataset`], inferring column kinds.
///
/// A column is numeric iff every cell parses as a finite number; otherwise it
/// is categorical with its distinct values as sorted levels.
pub fn load_dataset<R: Read>(reader: R, target: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ExplainError::Parse(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(ExplainError::Parse("missing header row".into()));
    }
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(ExplainError::Schema(format!("duplicate header '{h}'")));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| ExplainError::Parse(e.to_string()))?;
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(ExplainError::MissingValue {
                    column: header[col].clone(),
                    row,
                });
            }
            cells[col].push(cell.to_string());
        }
    }

    let mut schema = Vec::with_capacity(header.len());
    let mut columns = Vec::with_capacity(header.len());
    for (name, values) in header.into_iter().zip(cells) {
        let parsed: Option<Vec<f64>> = values
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(nums) => {
                schema.push(ColumnSchema::numeric(name));
                columns.push(ColumnData::Numeric(nums));
            }
            None => {
                let s = ColumnSchema::categorical(name, values.iter().cloned());
                let idx = values
                    .iter()
                    .map(|v| s.level_index(v).expect("level drawn from column"))
                    .collect();
                schema.push(s);
                columns.push(ColumnData::Categorical(idx));
            }
        }
    }
    Dataset::new(Table::new(schema, columns)?, target)
}

/// Convenience wrapper around [`load_dataset`] for in-memory text.
pub fn load_dataset_str(text: &str, target: Option<&str>) -> Result<Dataset> {
    load_dataset(text.as_bytes(), target)
}
