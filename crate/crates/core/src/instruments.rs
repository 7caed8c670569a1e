//! Leave-one-out instruments: for city `j`, the mean airline fare change of
//! the other cities in each group of a partition of the city list.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, Variable};

#[derive(Debug, Error, PartialEq)]
pub enum InstrumentError {
    #[error("grouping has no groups")]
    NoGroups,
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("city `{0}` is not in the panel")]
    UnknownCity(String),
    #[error("city `{0}` appears in more than one group")]
    DuplicateCity(String),
    #[error("city `{0}` is not assigned to any group")]
    Unassigned(String),
    #[error("group {group} has no cities left after excluding `{city}`")]
    EmptyAfterExclusion { group: usize, city: String },
}

/// A partition of the panel's cities into instrument groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grouping(Vec<Vec<String>>);

impl Grouping {
    pub fn new(groups: Vec<Vec<String>>) -> Result<Self, InstrumentError> {
        if groups.is_empty() {
            return Err(InstrumentError::NoGroups);
        }
        let mut seen = HashSet::new();
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(InstrumentError::EmptyGroup(g + 1));
            }
            for c in members {
                if !seen.insert(c.as_str()) {
                    return Err(InstrumentError::DuplicateCity(c.clone()));
                }
            }
        }
        Ok(Self(groups))
    }

    /// Everything in one group.
    pub fn single(cities: &[String]) -> Self {
        Self(vec![cities.to_vec()])
    }

    /// Two contiguous halves of the ordered labels; the first half gets the
    /// smaller share when the count is odd (3 + 4 for seven cities).
    pub fn halves(cities: &[String]) -> Self {
        if cities.len() < 2 {
            return Self::single(cities);
        }
        let (a, b) = cities.split_at(cities.len() / 2);
        Self(vec![a.to_vec(), b.to_vec()])
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Excluded instruments, one column per group, rows aligned with the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSet {
    values: DMatrix<f64>,
    names: Vec<String>,
    grouping: Grouping,
}

impl InstrumentSet {
    pub fn from_matrix(values: DMatrix<f64>, names: Vec<String>, grouping: Grouping) -> Self {
        assert_eq!(values.ncols(), names.len(), "one name per instrument column");
        Self {
            values,
            names,
            grouping,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn n_instruments(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, g: usize) -> Vec<f64> {
        self.values.column(g).iter().copied().collect()
    }
}

pub fn build_leave_one_out(panel: &PanelDataset, grouping: &Grouping) -> Result<InstrumentSet, InstrumentError> {
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    for (g, members) in grouping.groups().iter().enumerate() {
        for c in members {
            if panel.city_position(c).is_none() {
                return Err(InstrumentError::UnknownCity(c.clone()));
            }
            group_of.insert(c.as_str(), g);
        }
    }
    if let Some(c) = panel.city_ids().iter().find(|c| !group_of.contains_key(c.as_str())) {
        return Err(InstrumentError::Unassigned(c.clone()));
    }
    let members: Vec<Vec<usize>> = grouping
        .groups()
        .iter()
        .map(|m| m.iter().filter_map(|c| panel.city_position(c)).collect())
        .collect();
    for (g, m) in members.iter().enumerate() {
        if m.len() == 1 {
            return Err(InstrumentError::EmptyAfterExclusion {
                group: g + 1,
                city: panel.city_ids()[m[0]].clone(),
            });
        }
    }

    let airline = panel.column(Variable::Airline);
    let n_t = panel.n_months();
    let mut values = DMatrix::zeros(panel.len(), members.len());
    for t in 0..n_t {
        for (g, m) in members.iter().enumerate() {
            for j in 0..panel.n_cities() {
                // Summed directly over the other members so the own value
                // cannot leak in through rounding.
                let (sum, count) = m
                    .iter()
                    .filter(|&&c| c != j)
                    .fold((0.0, 0usize), |(s, n), &c| (s + airline[panel.row_index(c, t)], n + 1));
                values[(panel.row_index(j, t), g)] = sum / count as f64;
            }
        }
    }
    let names = (1..=members.len()).map(|g| format!("z_airline_g{g}")).collect();
    Ok(InstrumentSet {
        values,
        names,
        grouping: grouping.clone(),
    })
}
