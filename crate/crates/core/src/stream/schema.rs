use serde::{Deserialize, Serialize};

use super::vocab::AttrId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical,
    SetValued,
    Discretized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub id: AttrId,
    pub name: String,
    pub kind: AttributeKind,
}

/// How one CSV column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Record time: ISO-8601 or integer epoch seconds.
    Timestamp,
    Categorical,
    /// Several symbols separated by the set separator (e.g. a basket).
    Set,
    /// Free text, tokenized into a set of word units.
    Text,
    Latitude,
    Longitude,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Attribute the column feeds; defaults to the column name, or
    /// `"location"` for latitude/longitude columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.to_owned(),
            kind,
            attribute: None,
        }
    }

    fn attribute_name(&self) -> Option<String> {
        match self.kind {
            ColumnKind::Timestamp | ColumnKind::Ignore => None,
            ColumnKind::Latitude | ColumnKind::Longitude => Some(
                self.attribute
                    .clone()
                    .unwrap_or_else(|| "location".to_owned()),
            ),
            _ => Some(self.attribute.clone().unwrap_or_else(|| self.name.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaOptions {
    /// Reference point of the location grid as (lat, lon) degrees.
    pub location_origin: (f64, f64),
    pub cell_m: f64,
    /// When set, the record time also becomes a unit of a `time` attribute.
    pub timestamp_granularity: Option<i64>,
    pub set_separator: char,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        SchemaOptions {
            location_origin: (0.0, 0.0),
            cell_m: 300.0,
            timestamp_granularity: None,
            set_separator: ';',
        }
    }
}

/// Validated mapping from CSV columns to stream attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSchema {
    columns: Vec<ColumnSpec>,
    attributes: Vec<AttributeSchema>,
    column_attr: Vec<Option<AttrId>>,
    timestamp_column: usize,
    time_attribute: Option<AttrId>,
    options: SchemaOptions,
}

impl StreamSchema {
    pub fn new(columns: Vec<ColumnSpec>, options: SchemaOptions) -> Result<Self> {
        let ts_cols: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Timestamp)
            .map(|(i, _)| i)
            .collect();
        if ts_cols.len() != 1 {
            return Err(Error::Config(format!(
                "schema needs exactly one timestamp column, found {}",
                ts_cols.len()
            )));
        }
        if let Some(g) = options.timestamp_granularity {
            if g <= 0 {
                return Err(Error::Config(
                    "timestamp granularity must be positive".into(),
                ));
            }
        }
        if !(options.cell_m > 0.0) {
            return Err(Error::Config("location cell size must be positive".into()));
        }

        let mut attributes: Vec<AttributeSchema> = Vec::new();
        let mut column_attr = Vec::with_capacity(columns.len());
        let mut owners: Vec<Vec<ColumnKind>> = Vec::new();
        for col in &columns {
            let Some(name) = col.attribute_name() else {
                column_attr.push(None);
                continue;
            };
            let kind = match col.kind {
                ColumnKind::Categorical => AttributeKind::Categorical,
                ColumnKind::Set | ColumnKind::Text => AttributeKind::SetValued,
                _ => AttributeKind::Discretized,
            };
            let id = match attributes.iter().position(|a| a.name == name) {
                Some(pos) => {
                    if attributes[pos].kind != kind {
                        return Err(Error::Config(format!(
                            "attribute '{name}' is fed by columns of different kinds"
                        )));
                    }
                    pos
                }
                None => {
                    attributes.push(AttributeSchema {
                        id: attributes.len() as AttrId,
                        name: name.clone(),
                        kind,
                    });
                    owners.push(Vec::new());
                    attributes.len() - 1
                }
            };
            owners[id].push(col.kind);
            column_attr.push(Some(id as AttrId));
        }
        for (attr, kinds) in attributes.iter().zip(&owners) {
            let lat = kinds.iter().filter(|k| **k == ColumnKind::Latitude).count();
            let lon = kinds
                .iter()
                .filter(|k| **k == ColumnKind::Longitude)
                .count();
            let ok = if lat + lon > 0 {
                lat == 1 && lon == 1 && kinds.len() == 2
            } else {
                kinds.len() == 1
            };
            if !ok {
                return Err(Error::Config(format!(
                    "attribute '{}' must come from one column (or one latitude/longitude pair)",
                    attr.name
                )));
            }
        }
        let time_attribute = options.timestamp_granularity.map(|_| {
            let id = attributes.len() as AttrId;
            attributes.push(AttributeSchema {
                id,
                name: "time".to_owned(),
                kind: AttributeKind::Discretized,
            });
            id
        });
        if attributes.iter().filter(|a| a.name == "time").count() > 1 {
            return Err(Error::Config(
                "attribute name 'time' is reserved when timestamps are embedded".into(),
            ));
        }
        if attributes.is_empty() {
            return Err(Error::Config("schema declares no attributes".into()));
        }
        Ok(StreamSchema {
            columns,
            attributes,
            column_attr,
            timestamp_column: ts_cols[0],
            time_attribute,
            options,
        })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn attributes(&self) -> &[AttributeSchema] {
        &self.attributes
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn options(&self) -> &SchemaOptions {
        &self.options
    }

    pub fn column_attribute(&self, column: usize) -> Option<AttrId> {
        self.column_attr[column]
    }

    pub fn timestamp_column(&self) -> usize {
        self.timestamp_column
    }

    pub fn time_attribute(&self) -> Option<AttrId> {
        self.time_attribute
    }

    /// Resolve an attribute by name; unknown names are configuration errors.
    pub fn attribute_id(&self, name: &str) -> Result<AttrId> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.id)
            .ok_or_else(|| Error::Config(format!("unknown attribute '{name}'")))
    }

    pub fn attribute(&self, id: AttrId) -> Option<&AttributeSchema> {
        self.attributes.get(id as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attributes_follow_column_order() {
        let s = StreamSchema::new(
            vec![
                ColumnSpec::new("time", ColumnKind::Timestamp),
                ColumnSpec::new("user", ColumnKind::Categorical),
                ColumnSpec::new("lat", ColumnKind::Latitude),
                ColumnSpec::new("lon", ColumnKind::Longitude),
                ColumnSpec::new("text", ColumnKind::Text),
            ],
            SchemaOptions::default(),
        )
        .unwrap();
        let names: Vec<_> = s.attributes().iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["user", "location", "text"]);
        assert_eq!(s.attribute(1).unwrap().kind, AttributeKind::Discretized);
        assert_eq!(s.attribute(2).unwrap().kind, AttributeKind::SetValued);
        assert!(matches!(s.attribute_id("basket"), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_invalid_layouts() {
        let no_ts = vec![ColumnSpec::new("user", ColumnKind::Categorical)];
        assert!(StreamSchema::new(no_ts, SchemaOptions::default()).is_err());
        let lone_lat = vec![
            ColumnSpec::new("t", ColumnKind::Timestamp),
            ColumnSpec::new("lat", ColumnKind::Latitude),
        ];
        assert!(StreamSchema::new(lone_lat, SchemaOptions::default()).is_err());
        let dup = vec![
            ColumnSpec::new("t", ColumnKind::Timestamp),
            ColumnSpec::new("u", ColumnKind::Categorical),
            ColumnSpec::new("u", ColumnKind::Categorical),
        ];
        assert!(StreamSchema::new(dup, SchemaOptions::default()).is_err());
    }

    #[test]
    fn time_attribute_is_opt_in() {
        let cols = vec![
            ColumnSpec::new("t", ColumnKind::Timestamp),
            ColumnSpec::new("u", ColumnKind::Categorical),
        ];
        let off = StreamSchema::new(cols.clone(), SchemaOptions::default()).unwrap();
        assert_eq!(off.time_attribute(), None);
        let on = StreamSchema::new(
            cols,
            SchemaOptions {
                timestamp_granularity: Some(3600),
                ..SchemaOptions::default()
            },
        )
        .unwrap();
        assert_eq!(on.time_attribute(), Some(1));
    }
}
