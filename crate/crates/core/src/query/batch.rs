use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::types::{ScalarType, Schema, Value};
use super::QueryError;

/// Typed values of a column. Slots masked out by the validity vector hold a
/// default value that is never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Utf8(Vec<String>),
    Timestamp(Vec<i64>),
    Boolean(Vec<bool>),
}

impl ColumnData {
    fn empty(ty: ScalarType) -> Self {
        match ty {
            ScalarType::Int64 => ColumnData::Int64(Vec::new()),
            ScalarType::Float64 => ColumnData::Float64(Vec::new()),
            ScalarType::Utf8 => ColumnData::Utf8(Vec::new()),
            ScalarType::Timestamp => ColumnData::Timestamp(Vec::new()),
            ScalarType::Boolean => ColumnData::Boolean(Vec::new()),
        }
    }

    fn len(&self) -> usize {
        match self {
            ColumnData::Int64(v) | ColumnData::Timestamp(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Utf8(v) => v.len(),
            ColumnData::Boolean(v) => v.len(),
        }
    }
}

/// One column array with an optional validity mask (`true` = present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    data: ColumnData,
    validity: Option<Vec<bool>>,
}

impl Column {
    pub fn new(data: ColumnData, validity: Option<Vec<bool>>) -> Result<Self, QueryError> {
        if let Some(v) = &validity {
            if v.len() != data.len() {
                return Err(QueryError::InvalidBatch(format!(
                    "validity length {} != data length {}",
                    v.len(),
                    data.len()
                )));
            }
        }
        Ok(Column { data, validity })
    }

    pub fn int64(values: Vec<i64>) -> Self {
        Column {
            data: ColumnData::Int64(values),
            validity: None,
        }
    }

    pub fn float64(values: Vec<f64>) -> Self {
        Column {
            data: ColumnData::Float64(values),
            validity: None,
        }
    }

    pub fn utf8<S: Into<String>>(values: Vec<S>) -> Self {
        Column {
            data: ColumnData::Utf8(values.into_iter().map(Into::into).collect()),
            validity: None,
        }
    }

    pub fn timestamp(values: Vec<i64>) -> Self {
        Column {
            data: ColumnData::Timestamp(values),
            validity: None,
        }
    }

    pub fn boolean(values: Vec<bool>) -> Self {
        Column {
            data: ColumnData::Boolean(values),
            validity: None,
        }
    }

    /// Build a column of type `ty` from row values; `Null` entries become
    /// masked slots.
    pub fn from_values(ty: ScalarType, values: &[Value]) -> Result<Self, QueryError> {
        let mut b = ColumnBuilder::new(ty, values.len());
        for v in values {
            b.push(v)?;
        }
        Ok(b.finish())
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn data_type(&self) -> ScalarType {
        match self.data {
            ColumnData::Int64(_) => ScalarType::Int64,
            ColumnData::Float64(_) => ScalarType::Float64,
            ColumnData::Utf8(_) => ScalarType::Utf8,
            ColumnData::Timestamp(_) => ScalarType::Timestamp,
            ColumnData::Boolean(_) => ScalarType::Boolean,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn null_count(&self) -> usize {
        self.validity
            .as_ref()
            .map_or(0, |v| v.iter().filter(|p| !**p).count())
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.validity.as_ref().is_none_or(|v| v[i])
    }

    pub fn value(&self, i: usize) -> Value {
        if !self.is_valid(i) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Int64(v) => Value::Int64(v[i]),
            ColumnData::Float64(v) => Value::Float64(v[i]),
            ColumnData::Utf8(v) => Value::Utf8(v[i].clone()),
            ColumnData::Timestamp(v) => Value::Timestamp(v[i]),
            ColumnData::Boolean(v) => Value::Boolean(v[i]),
        }
    }

    /// Gather rows by index.
    pub fn take(&self, indices: &[usize]) -> Column {
        fn gather<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        let data = match &self.data {
            ColumnData::Int64(v) => ColumnData::Int64(gather(v, indices)),
            ColumnData::Float64(v) => ColumnData::Float64(gather(v, indices)),
            ColumnData::Utf8(v) => ColumnData::Utf8(gather(v, indices)),
            ColumnData::Timestamp(v) => ColumnData::Timestamp(gather(v, indices)),
            ColumnData::Boolean(v) => ColumnData::Boolean(gather(v, indices)),
        };
        let validity = self.validity.as_ref().map(|v| gather(v, indices));
        Column { data, validity }
    }

    pub fn slice(&self, offset: usize, len: usize) -> Column {
        let idx: Vec<usize> = (offset..offset + len).collect();
        self.take(&idx)
    }

    fn append(&mut self, other: &Column) -> Result<(), QueryError> {
        if self.data_type() != other.data_type() {
            return Err(QueryError::TypeMismatch(format!(
                "cannot concatenate {} with {}",
                self.data_type(),
                other.data_type()
            )));
        }
        let before = self.len();
        if self.validity.is_some() || other.validity.is_some() {
            let mut mask = self.validity.take().unwrap_or_else(|| vec![true; before]);
            match &other.validity {
                Some(v) => mask.extend_from_slice(v),
                None => mask.extend(std::iter::repeat_n(true, other.len())),
            }
            self.validity = Some(mask);
        }
        match (&mut self.data, &other.data) {
            (ColumnData::Int64(a), ColumnData::Int64(b)) => a.extend_from_slice(b),
            (ColumnData::Float64(a), ColumnData::Float64(b)) => a.extend_from_slice(b),
            (ColumnData::Utf8(a), ColumnData::Utf8(b)) => a.extend_from_slice(b),
            (ColumnData::Timestamp(a), ColumnData::Timestamp(b)) => a.extend_from_slice(b),
            (ColumnData::Boolean(a), ColumnData::Boolean(b)) => a.extend_from_slice(b),
            _ => unreachable!("types checked above"),
        }
        Ok(())
    }

    /// Rough in-memory footprint, used by the working-set estimates.
    pub fn byte_size(&self) -> usize {
        let data = match &self.data {
            ColumnData::Int64(v) | ColumnData::Timestamp(v) => v.len() * 8,
            ColumnData::Float64(v) => v.len() * 8,
            ColumnData::Utf8(v) => v.iter().map(|s| s.len() + 8).sum(),
            ColumnData::Boolean(v) => v.len(),
        };
        data + self.validity.as_ref().map_or(0, Vec::len)
    }
}

/// Incremental column construction from `Value`s.
pub struct ColumnBuilder {
    data: ColumnData,
    validity: Vec<bool>,
    has_null: bool,
}

impl ColumnBuilder {
    pub fn new(ty: ScalarType, capacity: usize) -> Self {
        let mut data = ColumnData::empty(ty);
        match &mut data {
            ColumnData::Int64(v) | ColumnData::Timestamp(v) => v.reserve(capacity),
            ColumnData::Float64(v) => v.reserve(capacity),
            ColumnData::Utf8(v) => v.reserve(capacity),
            ColumnData::Boolean(v) => v.reserve(capacity),
        }
        ColumnBuilder {
            data,
            validity: Vec::with_capacity(capacity),
            has_null: false,
        }
    }

    pub fn push(&mut self, value: &Value) -> Result<(), QueryError> {
        let ok = match (&mut self.data, value) {
            (ColumnData::Int64(v), Value::Int64(x)) => {
                v.push(*x);
                true
            }
            (ColumnData::Float64(v), Value::Float64(x)) => {
                v.push(*x);
                true
            }
            (ColumnData::Float64(v), Value::Int64(x)) => {
                v.push(*x as f64);
                true
            }
            (ColumnData::Utf8(v), Value::Utf8(x)) => {
                v.push(x.clone());
                true
            }
            (ColumnData::Timestamp(v), Value::Timestamp(x)) => {
                v.push(*x);
                true
            }
            (ColumnData::Boolean(v), Value::Boolean(x)) => {
                v.push(*x);
                true
            }
            (data, Value::Null) => {
                match data {
                    ColumnData::Int64(v) | ColumnData::Timestamp(v) => v.push(0),
                    ColumnData::Float64(v) => v.push(0.0),
                    ColumnData::Utf8(v) => v.push(String::new()),
                    ColumnData::Boolean(v) => v.push(false),
                }
                self.has_null = true;
                self.validity.push(false);
                return Ok(());
            }
            _ => false,
        };
        if !ok {
            return Err(QueryError::TypeMismatch(format!(
                "value {value} does not fit column type {:?}",
                value.data_type()
            )));
        }
        self.validity.push(true);
        Ok(())
    }

    pub fn finish(self) -> Column {
        Column {
            data: self.data,
            validity: self.has_null.then_some(self.validity),
        }
    }
}

pub type SchemaRef = Arc<Schema>;

/// A columnar micro-batch: the unit of all data movement.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordBatch {
    schema: SchemaRef,
    columns: Vec<Column>,
    row_count: usize,
}

impl RecordBatch {
    pub fn try_new(schema: SchemaRef, columns: Vec<Column>) -> Result<Self, QueryError> {
        if columns.len() != schema.len() {
            return Err(QueryError::InvalidBatch(format!(
                "{} columns for {} fields",
                columns.len(),
                schema.len()
            )));
        }
        let row_count = columns.first().map_or(0, Column::len);
        for (field, col) in schema.fields().iter().zip(&columns) {
            if col.len() != row_count {
                return Err(QueryError::InvalidBatch(format!(
                    "column {} has {} rows, expected {row_count}",
                    field.name,
                    col.len()
                )));
            }
            if col.data_type() != field.data_type {
                return Err(QueryError::TypeMismatch(format!(
                    "column {} is {}, schema says {}",
                    field.name,
                    col.data_type(),
                    field.data_type
                )));
            }
            if !field.nullable && col.null_count() > 0 {
                return Err(QueryError::InvalidBatch(format!(
                    "non-nullable column {} contains nulls",
                    field.name
                )));
            }
        }
        Ok(RecordBatch {
            schema,
            columns,
            row_count,
        })
    }

    pub fn new_empty(schema: SchemaRef) -> Self {
        let columns = schema
            .fields()
            .iter()
            .map(|f| Column {
                data: ColumnData::empty(f.data_type),
                validity: None,
            })
            .collect();
        RecordBatch {
            schema,
            columns,
            row_count: 0,
        }
    }

    /// Build from row-major values; convenient for tests and generators.
    pub fn from_rows(schema: SchemaRef, rows: &[Vec<Value>]) -> Result<Self, QueryError> {
        let mut builders: Vec<ColumnBuilder> = schema
            .fields()
            .iter()
            .map(|f| ColumnBuilder::new(f.data_type, rows.len()))
            .collect();
        for row in rows {
            if row.len() != builders.len() {
                return Err(QueryError::InvalidBatch(format!(
                    "row has {} values for {} fields",
                    row.len(),
                    builders.len()
                )));
            }
            for (b, v) in builders.iter_mut().zip(row) {
                b.push(v)?;
            }
        }
        let columns = builders.into_iter().map(ColumnBuilder::finish).collect();
        RecordBatch::try_new(schema, columns)
    }

    pub fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column, QueryError> {
        Ok(&self.columns[self.schema.index_of(name)?])
    }

    pub fn num_rows(&self) -> usize {
        self.row_count
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<Value>> {
        (0..self.row_count).map(|i| self.row(i)).collect()
    }

    pub fn take(&self, indices: &[usize]) -> RecordBatch {
        RecordBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(indices)).collect(),
            row_count: indices.len(),
        }
    }

    pub fn slice(&self, offset: usize, len: usize) -> RecordBatch {
        RecordBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.slice(offset, len)).collect(),
            row_count: len,
        }
    }

    /// Concatenate batches sharing `schema`.
    pub fn concat(schema: &SchemaRef, batches: &[RecordBatch]) -> Result<RecordBatch, QueryError> {
        let mut out = RecordBatch::new_empty(schema.clone());
        for b in batches {
            if b.schema.fields() != schema.fields() {
                return Err(QueryError::SchemaMismatch(
                    "concatenated batches must share one schema".into(),
                ));
            }
            for (dst, src) in out.columns.iter_mut().zip(&b.columns) {
                dst.append(src)?;
            }
            out.row_count += b.row_count;
        }
        Ok(out)
    }

    pub fn byte_size(&self) -> usize {
        self.columns.iter().map(Column::byte_size).sum()
    }
}
