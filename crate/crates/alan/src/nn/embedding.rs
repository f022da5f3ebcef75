//! Token/position embedding table with gather forward and scatter-add
//! backward.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::params::{gaussian, ParamModule, ParamTensor};
use crate::{Error, Result};

/// A lookup table `n_rows x d`, initialized N(0, 0.02).
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamTensor,
}

impl Embedding {
    pub fn new(name: &str, n_rows: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { table: gaussian(name, n_rows, d, 0.02, rng) }
    }

    pub fn n_rows(&self) -> usize {
        self.table.mat().nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.mat().ncols()
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Array2<f64>> {
        let table = self.table.mat();
        let mut out = Array2::zeros((ids.len(), table.ncols()));
        for (row, &id) in ids.iter().enumerate() {
            if id >= table.nrows() {
                return Err(Error::Validation(format!(
                    "embedding id {id} out of range for table {} ({} rows)",
                    self.table.name(),
                    table.nrows()
                )));
            }
            out.row_mut(row).assign(&table.row(id));
        }
        Ok(out)
    }

    /// Scatter-add: repeated ids accumulate.
    pub fn backward(&mut self, ids: &[usize], dy: &Array2<f64>) {
        let mut grad = self
            .table
            .grad_mut()
            .view_mut()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("2-d embedding table");
        for (row, &id) in ids.iter().enumerate() {
            let mut target = grad.row_mut(id);
            target += &dy.row(row);
        }
    }
}

impl ParamModule for Embedding {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        out.push(&self.table);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        out.push(&mut self.table);
    }
}
