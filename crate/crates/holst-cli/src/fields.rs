//! JSON field files.
//!
//! ```json
//! { "grid_n": 8, "coframe": [...], "connection": [...] }
//! ```
//!
//! `coframe` holds `3·4·n³` numbers, `connection` holds `3·6·n³`, both in the
//! site-major layout of `FormField` (site, then form component, then fiber
//! component). Sites are ordered with the last axis fastest.

use std::path::Path;

use holst_core::grid::{Coframe, FormField, Grid3};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub grid_n: usize,
    pub coframe: Vec<f64>,
    pub connection: Vec<f64>,
}

impl FieldFile {
    pub fn from_fields(e: &Coframe, omega: &FormField) -> Self {
        FieldFile { grid_n: e.grid().n(), coframe: e.field().data().to_vec(), connection: omega.data().to_vec() }
    }

    pub fn to_fields(&self) -> Result<(Coframe, FormField), CliError> {
        let g = Grid3::new(self.grid_n).map_err(|e| CliError::Config(format!("grid_n: {e}")))?;
        let e = FormField::from_data(g, 1, 1, self.coframe.clone()).map_err(|e| CliError::Config(format!("coframe: {e}")))?;
        let w = FormField::from_data(g, 1, 2, self.connection.clone())
            .map_err(|e| CliError::Config(format!("connection: {e}")))?;
        Ok((Coframe::new(e)?, w))
    }
}

pub fn read_fields(path: &Path) -> Result<FieldFile, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_fields(f: &FieldFile, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string(f).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
