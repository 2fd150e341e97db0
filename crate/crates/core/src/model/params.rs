use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One named parameter tensor inside a [`Schema`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl GroupSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered list of parameter groups with their offsets into flat storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    groups: Vec<GroupSpec>,
    total: usize,
}

impl Schema {
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, usize, usize)>) -> Result<Self> {
        let mut specs: Vec<GroupSpec> = Vec::new();
        let mut offset = 0;
        for (name, rows, cols) in groups {
            let name = name.into();
            if specs.iter().any(|g| g.name == name) {
                return Err(Error::SchemaMismatch(format!("duplicate group `{name}`")));
            }
            specs.push(GroupSpec {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        }
        Ok(Schema {
            groups: specs,
            total: offset,
        })
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn group(&self, name: &str) -> Option<&GroupSpec> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }
}

/// Flat, named parameter container.
///
/// All learnable tensors (and optimizer moments, which share the layout) live
/// in one contiguous `Vec<f64>` in schema order. Arithmetic between two
/// vectors is only defined when their schemas are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    schema: Arc<Schema>,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(schema: Arc<Schema>) -> Self {
        let data = vec![0.0; schema.total_len()];
        ParamVector { schema, data }
    }

    pub fn from_flat(schema: Arc<Schema>, data: Vec<f64>) -> Result<Self> {
        if data.len() != schema.total_len() {
            return Err(Error::SchemaMismatch(format!(
                "flat vector has {} elements, schema expects {}",
                data.len(),
                schema.total_len()
            )));
        }
        Ok(ParamVector { schema, data })
    }

    /// Build from `(name, tensor)` pairs, in the given order.
    pub fn from_groups<S: Into<String>>(groups: Vec<(S, Tensor)>) -> Result<Self> {
        let mut names = Vec::with_capacity(groups.len());
        let mut data = Vec::new();
        for (name, t) in groups {
            names.push((name.into(), t.rows(), t.cols()));
            data.extend_from_slice(t.as_slice());
        }
        let schema = Arc::new(Schema::new(names)?);
        Self::from_flat(schema, data)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flatten(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn group(&self, name: &str) -> Result<&[f64]> {
        let g = self
            .schema
            .group(name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))?;
        Ok(&self.data[g.range()])
    }

    pub fn group_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let g = self
            .schema
            .group(name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))?;
        let r = g.range();
        Ok(&mut self.data[r])
    }

    pub fn group_tensor(&self, name: &str) -> Result<Tensor> {
        let g = self
            .schema
            .group(name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))?;
        Tensor::from_vec(g.rows, g.cols, self.data[g.range()].to_vec())
    }

    pub fn same_schema(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema
    }

    pub fn check_schema(&self, other: &ParamVector) -> Result<()> {
        if self.same_schema(other) {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(format!(
                "{} groups / {} elements vs {} groups / {} elements",
                self.schema.groups().len(),
                self.len(),
                other.schema.groups().len(),
                other.len()
            )))
        }
    }

    /// Elementwise `f(self, other)` into a new vector.
    pub fn zip_map(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> Result<ParamVector> {
        self.check_schema(other)?;
        Ok(ParamVector {
            schema: self.schema.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamVector {
        ParamVector {
            schema: self.schema.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> ParamVector {
        self.map(|a| a * s)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<()> {
        self.check_schema(other)?;
        crate::numerics::kernels::axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.check_schema(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bitwise equality of schema and every element.
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.same_schema(other)
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Sub-vector holding the named groups, in this vector's schema order.
    pub fn select(&self, names: &[&str]) -> Result<ParamVector> {
        for n in names {
            if self.schema.group(n).is_none() {
                return Err(Error::UnknownGroup(n.to_string()));
            }
        }
        let picked: Vec<&GroupSpec> = self
            .schema
            .groups()
            .iter()
            .filter(|g| names.contains(&g.name.as_str()))
            .collect();
        let schema = Arc::new(Schema::new(
            picked.iter().map(|g| (g.name.clone(), g.rows, g.cols)),
        )?);
        let mut data = Vec::with_capacity(schema.total_len());
        for g in picked {
            data.extend_from_slice(&self.data[g.range()]);
        }
        Ok(ParamVector { schema, data })
    }

    /// Split into `(shared, personalized)` according to `scheme`.
    pub fn split(&self, scheme: &PartitionScheme) -> Result<(ParamVector, ParamVector)> {
        scheme.validate(&self.schema)?;
        let shared = scheme.shared_groups(&self.schema);
        let personal = scheme.personalized_groups(&self.schema);
        Ok((self.select(&shared)?, self.select(&personal)?))
    }

    /// Reassemble a full vector over `schema` from two disjoint parts.
    pub fn merge(schema: &Arc<Schema>, a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
        let mut data = Vec::with_capacity(schema.total_len());
        for g in schema.groups() {
            let src = match (a.schema.group(&g.name), b.schema.group(&g.name)) {
                (Some(s), None) => &a.data[s.range()],
                (None, Some(s)) => &b.data[s.range()],
                (Some(_), Some(_)) => {
                    return Err(Error::SchemaMismatch(format!(
                        "group `{}` present in both halves",
                        g.name
                    )))
                }
                (None, None) => {
                    return Err(Error::SchemaMismatch(format!(
                        "group `{}` missing from both halves",
                        g.name
                    )))
                }
            };
            if src.len() != g.len() {
                return Err(Error::SchemaMismatch(format!(
                    "group `{}` has {} elements, expected {}",
                    g.name,
                    src.len(),
                    g.len()
                )));
            }
            data.extend_from_slice(src);
        }
        if a.schema.groups().len() + b.schema.groups().len() != schema.groups().len() {
            return Err(Error::SchemaMismatch("halves carry extra groups".into()));
        }
        ParamVector::from_flat(schema.clone(), data)
    }

    /// Overwrite the groups present in `part` with its values.
    pub fn overwrite(&mut self, part: &ParamVector) -> Result<()> {
        for g in part.schema.groups() {
            let dst = self
                .schema
                .group(&g.name)
                .ok_or_else(|| Error::UnknownGroup(g.name.clone()))?;
            if dst.len() != g.len() {
                return Err(Error::SchemaMismatch(format!("group `{}` size differs", g.name)));
            }
            let r = dst.range();
            self.data[r].copy_from_slice(&part.data[g.range()]);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Shared,
    Personalized,
}

/// Assignment of every parameter group to shared or personalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionScheme {
    /// Everything shared: classical federated learning.
    P1,
    /// LSTM cell shared, MLP head personalized.
    P2,
    /// Everything personalized: purely local training.
    P3,
    /// Explicit tag per group name.
    Custom(BTreeMap<String, Tag>),
}

impl PartitionScheme {
    pub fn label(&self) -> String {
        match self {
            PartitionScheme::P1 => "P1".into(),
            PartitionScheme::P2 => "P2".into(),
            PartitionScheme::P3 => "P3".into(),
            PartitionScheme::Custom(_) => "custom".into(),
        }
    }

    pub fn tag(&self, group: &str) -> Option<Tag> {
        match self {
            PartitionScheme::P1 => Some(Tag::Shared),
            PartitionScheme::P3 => Some(Tag::Personalized),
            PartitionScheme::P2 => Some(if group.starts_with(super::LSTM_PREFIX) {
                Tag::Shared
            } else {
                Tag::Personalized
            }),
            PartitionScheme::Custom(map) => map.get(group).copied(),
        }
    }

    /// Every group gets exactly one tag; custom schemes may not name unknown groups.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if let PartitionScheme::Custom(map) = self {
            for g in schema.groups() {
                if !map.contains_key(&g.name) {
                    return Err(Error::SchemaMismatch(format!(
                        "partition scheme has no tag for group `{}`",
                        g.name
                    )));
                }
            }
            for k in map.keys() {
                if schema.group(k).is_none() {
                    return Err(Error::UnknownGroup(k.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn shared_groups<'a>(&self, schema: &'a Schema) -> Vec<&'a str> {
        self.groups_with(schema, Tag::Shared)
    }

    pub fn personalized_groups<'a>(&self, schema: &'a Schema) -> Vec<&'a str> {
        self.groups_with(schema, Tag::Personalized)
    }

    fn groups_with<'a>(&self, schema: &'a Schema, tag: Tag) -> Vec<&'a str> {
        schema
            .groups()
            .iter()
            .filter(|g| self.tag(&g.name) == Some(tag))
            .map(|g| g.name.as_str())
            .collect()
    }

    /// Per-group flag in schema order: `true` for shared groups.
    pub fn shared_mask(&self, schema: &Schema) -> Result<Vec<bool>> {
        self.validate(schema)?;
        Ok(schema
            .groups()
            .iter()
            .map(|g| self.tag(&g.name) == Some(Tag::Shared))
            .collect())
    }
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(PartitionScheme::P1),
            "P2" => Ok(PartitionScheme::P2),
            "P3" => Ok(PartitionScheme::P3),
            _ => Err(Error::invalid(format!("unknown partition scheme `{s}`"))),
        }
    }
}

impl std::fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}
