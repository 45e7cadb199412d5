//! Dense row-major 64-bit matrices and the parameter store that backs
//! every trainable weight in the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense row-major matrix of f64. Vectors are 1xN rows, scalars 1x1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dimension(
                "tensor construction",
                format!("{rows}x{cols}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_scalar(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::dimension("scalar access", self.shape_str(), "1x1"));
        }
        Ok(self.data[0])
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub value: Tensor,
    /// Accumulated gradient, same layout as `value`.
    pub grad: Vec<f64>,
}

/// Flat registry of every trainable tensor. Model components hold
/// [`ParamId`]s into it; the optimizer, checkpointing, and finite-difference
/// probes all operate on the flat view.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    slots: Vec<ParamSlot>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.slots.push(ParamSlot {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.slots.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.slots[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn zero_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        let slot = &mut self.slots[id.0];
        debug_assert_eq!(slot.grad.len(), g.len());
        for (dst, src) in slot.grad.iter_mut().zip(g) {
            *dst += src;
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for slot in &mut self.slots {
            slot.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [ParamSlot] {
        &mut self.slots
    }

    /// Shift one parameter coordinate in place (finite-difference probes).
    pub fn nudge(&mut self, id: ParamId, index: usize, delta: f64) {
        self.slots[id.0].value.data_mut()[index] += delta;
    }

    pub fn total_scalar_count(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::from_vec(2, 3, vec![1.0; 5]).is_err());
        assert!(Tensor::from_vec(2, 3, vec![1.0; 6]).is_ok());
    }

    #[test]
    fn grad_accumulates_additively() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::row_vector(vec![1.0, 2.0]));
        store.accumulate_grad(id, &[0.5, 0.5]);
        store.accumulate_grad(id, &[0.5, 1.0]);
        assert_eq!(store.grad(id), &[1.0, 1.5]);
        store.zero_grads();
        assert_eq!(store.grad(id), &[0.0, 0.0]);
    }
}
