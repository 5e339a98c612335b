//! Profile and auxiliary tables.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Matrix;

/// Value space of a profile table. Log space holds `ln(1 + dollars)`, so
/// entries are non-negative in both spaces and zeros are preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Dollars,
    Log,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Dollars => "dollars",
            Space::Log => "log",
        }
    }
}

/// Fixed auxiliary attribute schema, in column order.
pub const AUX_COLUMNS: [&str; 5] = ["age", "salary", "credit_limit", "balance", "last_repayment"];

/// Per-client monthly spend per category.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    client_ids: Vec<String>,
    categories: Vec<String>,
    amounts: Matrix,
    space: Space,
}

impl ProfileTable {
    pub fn new(
        client_ids: Vec<String>,
        categories: Vec<String>,
        amounts: Matrix,
        space: Space,
    ) -> Result<Self> {
        if client_ids.len() != amounts.rows() {
            return Err(Error::shape(
                "ProfileTable::new",
                format!("{} client ids", amounts.rows()),
                format!("{}", client_ids.len()),
            ));
        }
        if categories.len() != amounts.cols() {
            return Err(Error::shape(
                "ProfileTable::new",
                format!("{} categories", amounts.cols()),
                format!("{}", categories.len()),
            ));
        }
        let mut seen = HashSet::new();
        for c in &categories {
            if c.is_empty() || c.contains(',') || c.contains('"') || c.contains('\n') {
                return Err(Error::usage(format!("invalid category name {c:?}")));
            }
            if !seen.insert(c) {
                return Err(Error::usage(format!("duplicate category name {c:?}")));
            }
        }
        let mut ids = HashSet::new();
        for id in &client_ids {
            if !ids.insert(id) {
                return Err(Error::usage(format!("duplicate client_id {id:?}")));
            }
        }
        if let Some(v) = amounts.data().iter().find(|v| **v < 0.0) {
            return Err(Error::usage(format!("negative amount {v} in profile table")));
        }
        Ok(ProfileTable { client_ids, categories, amounts, space })
    }

    pub fn client_ids(&self) -> &[String] {
        &self.client_ids
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn amounts(&self) -> &Matrix {
        &self.amounts
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn n_clients(&self) -> usize {
        self.client_ids.len()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    /// Rows at `indices`, in order; ids move with their rows.
    pub fn take_rows(&self, indices: &[usize]) -> ProfileTable {
        ProfileTable {
            client_ids: indices.iter().map(|&i| self.client_ids[i].clone()).collect(),
            categories: self.categories.clone(),
            amounts: self.amounts.take_rows(indices),
            space: self.space,
        }
    }

    /// Columns at `indices`, in order.
    pub fn select_categories(&self, indices: &[usize]) -> ProfileTable {
        ProfileTable {
            client_ids: self.client_ids.clone(),
            categories: indices.iter().map(|&i| self.categories[i].clone()).collect(),
            amounts: self.amounts.select_cols(indices),
            space: self.space,
        }
    }

    /// Same table with new contents; used by the space transforms.
    pub(crate) fn with_amounts(&self, amounts: Matrix, space: Space) -> ProfileTable {
        ProfileTable {
            client_ids: self.client_ids.clone(),
            categories: self.categories.clone(),
            amounts,
            space,
        }
    }

    pub fn require_space(&self, wanted: Space, operation: &str) -> Result<()> {
        if self.space != wanted {
            return Err(Error::usage(format!(
                "{operation} requires a {} table, got {}",
                wanted.name(),
                self.space.name()
            )));
        }
        Ok(())
    }
}

/// Auxiliary client attributes, row-aligned with a profile table.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxTable {
    client_ids: Vec<String>,
    values: Matrix,
    standardized: bool,
}

impl AuxTable {
    pub fn new(client_ids: Vec<String>, values: Matrix, standardized: bool) -> Result<Self> {
        if client_ids.len() != values.rows() {
            return Err(Error::shape(
                "AuxTable::new",
                format!("{} client ids", values.rows()),
                format!("{}", client_ids.len()),
            ));
        }
        if values.cols() != AUX_COLUMNS.len() {
            return Err(Error::shape(
                "AuxTable::new",
                format!("{} aux columns", AUX_COLUMNS.len()),
                format!("{}", values.cols()),
            ));
        }
        if !standardized {
            for i in 0..values.rows() {
                let row = values.row(i);
                if row[0] <= 0.0 {
                    return Err(Error::usage(format!("age must be > 0 (row {i}: {})", row[0])));
                }
                if row[2] < 0.0 {
                    return Err(Error::usage(format!(
                        "credit_limit must be >= 0 (row {i}: {})",
                        row[2]
                    )));
                }
            }
        }
        Ok(AuxTable { client_ids, values, standardized })
    }

    pub fn client_ids(&self) -> &[String] {
        &self.client_ids
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n_clients(&self) -> usize {
        self.client_ids.len()
    }

    pub fn take_rows(&self, indices: &[usize]) -> AuxTable {
        AuxTable {
            client_ids: indices.iter().map(|&i| self.client_ids[i].clone()).collect(),
            values: self.values.take_rows(indices),
            standardized: self.standardized,
        }
    }

    pub(crate) fn with_values(&self, values: Matrix, standardized: bool) -> AuxTable {
        AuxTable { client_ids: self.client_ids.clone(), values, standardized }
    }
}

/// Both tables must hold the same clients in the same order.
pub fn check_alignment(profiles: &ProfileTable, aux: &AuxTable) -> Result<()> {
    if profiles.client_ids() != aux.client_ids() {
        return Err(Error::usage(
            "profile and aux tables are not row-aligned by client_id".to_string(),
        ));
    }
    Ok(())
}
