use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Dimension, FactorMeta, FactorTable};

/// Ordered list of the factors a table must provide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub factor: Vec<FactorMeta>,
}

impl Schema {
    pub fn names(&self) -> Vec<String> {
        self.factor.iter().map(|f| f.name.clone()).collect()
    }
}

/// The sixteen urban factors: seven describing residents, six counting
/// points of interest and three describing travel behaviour.
pub fn paper_schema() -> Schema {
    use Dimension::*;
    let rows: [(&str, Dimension, &str); 16] = [
        ("Total population", Citizens, "number of residents"),
        ("Male rate", Citizens, "share of male residents"),
        ("Female rate", Citizens, "share of female residents"),
        ("Minors rate", Citizens, "share of residents under 18"),
        ("Elders rate", Citizens, "share of residents over 65"),
        ("Median age", Citizens, "median resident age"),
        ("Poverty level", Citizens, "share of residents below the poverty line"),
        ("Transport", Locations, "count of transport locations"),
        ("Entertainment", Locations, "count of entertainment locations"),
        ("Catering", Locations, "count of catering locations"),
        ("Education", Locations, "count of education locations"),
        ("Service", Locations, "count of service locations"),
        ("Shopping", Locations, "count of shopping locations"),
        (
            "Proportion of people traveling by public transport",
            Mobility,
            "share of commuters using public transport",
        ),
        ("Mean travel time to work", Mobility, "mean commute duration"),
        ("Population mobility", Mobility, "origin-destination commuting volume"),
    ];
    Schema {
        factor: rows
            .into_iter()
            .map(|(name, dimension, description)| FactorMeta {
                name: name.to_string(),
                dimension,
                description: description.to_string(),
            })
            .collect(),
    }
}

pub fn load_schema(path: &Path) -> Result<Schema, DatasetError> {
    let text = fs::read_to_string(path)?;
    let schema: Schema = toml::from_str(&text).map_err(|e| DatasetError::Schema(e.to_string()))?;
    if schema.factor.len() < 2 {
        return Err(DatasetError::Schema("at least two factors are required".into()));
    }
    Ok(schema)
}

pub fn write_schema(schema: &Schema, path: &Path) -> Result<(), DatasetError> {
    let text = toml::to_string(schema).map_err(|e| DatasetError::Schema(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// A loaded table plus the number of rows discarded for missing values.
#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub table: FactorTable,
    pub dropped_rows: usize,
}

/// Loads a region CSV, keeping the schema's columns in schema order.
///
/// The first column holds region ids. Rows with an empty, `NA`, `NaN` or
/// non-finite cell in any schema column are dropped and counted.
pub fn load_factor_table(path: &Path, schema: &Schema) -> Result<LoadedTable, DatasetError> {
    let file = fs::File::open(path)?;
    read_factor_table(file, schema)
}

pub fn read_factor_table<R: Read>(reader: R, schema: &Schema) -> Result<LoadedTable, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(DatasetError::InvalidTable("empty header".into()));
    }
    let positions: Vec<usize> = schema
        .factor
        .iter()
        .map(|f| {
            header
                .iter()
                .skip(1)
                .position(|h| h.trim() == f.name)
                .map(|p| p + 1)
                .ok_or_else(|| DatasetError::MissingColumn(f.name.clone()))
        })
        .collect::<Result<_, _>>()?;

    let d = positions.len();
    let mut ids = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut dropped = 0;
    'rows: for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(d);
        for (f, &pos) in schema.factor.iter().zip(&positions) {
            let cell = record.get(pos).unwrap_or("").trim();
            match parse_cell(cell) {
                Cell::Value(v) => row.push(v),
                Cell::Missing => {
                    dropped += 1;
                    continue 'rows;
                }
                Cell::Invalid => {
                    return Err(DatasetError::NonNumericCell {
                        row: row_idx + 1,
                        col: f.name.clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        ids.push(record.get(0).unwrap_or("").trim().to_string());
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if ids.is_empty() {
        return Err(DatasetError::EmptyTable);
    }
    let n = ids.len();
    let flat: Vec<f64> = columns.into_iter().flatten().collect();
    let table = FactorTable::new(DMatrix::from_column_slice(n, d, &flat), schema.factor.clone(), ids)?;
    Ok(LoadedTable {
        table,
        dropped_rows: dropped,
    })
}

enum Cell {
    Value(f64),
    Missing,
    Invalid,
}

fn parse_cell(cell: &str) -> Cell {
    const MISSING: [&str; 6] = ["", "na", "n/a", "nan", "null", "none"];
    if MISSING.contains(&cell.to_ascii_lowercase().as_str()) {
        return Cell::Missing;
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        Ok(_) => Cell::Missing,
        Err(_) => Cell::Invalid,
    }
}

/// Writes `region_id` followed by every factor column. Values use the
/// shortest representation that round-trips.
pub fn write_factor_table<W: Write>(table: &FactorTable, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["region_id".to_string()];
    header.extend(table.names());
    w.write_record(&header)?;
    for i in 0..table.n() {
        let mut rec = vec![table.region_ids()[i].clone()];
        rec.extend((0..table.d()).map(|j| format!("{}", table.values()[(i, j)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
