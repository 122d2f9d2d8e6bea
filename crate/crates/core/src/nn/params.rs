use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Matrix<T>,
}

/// Named parameter arrays in declaration order. Names are unique and shapes fixed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter {name:?} is not finite"
            )));
        }
        self.params.push(Param { name, value });
        Ok(self.params.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name:?}")))
    }

    #[inline]
    pub fn get(&self, index: usize) -> &Param<T> {
        &self.params[index]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn shapes(&self) -> Vec<ParamShape> {
        self.params
            .iter()
            .map(|p| ParamShape {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect()
    }

    /// Mutable scalars of parameter `index`; the shape stays fixed.
    pub fn values_mut(&mut self, index: usize) -> &mut [T] {
        self.params[index].value.data_mut()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            arrays: self
                .params
                .iter()
                .map(|p| vec![T::zero(); p.value.data().len()])
                .collect(),
        }
    }

    /// Flat view of all scalars in declaration order.
    pub fn flatten(&self) -> Vec<T> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }
}

/// Gradient arrays aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub arrays: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        self.arrays.iter_mut().flatten().for_each(|x| *x = *x * k);
    }

    pub fn is_zero(&self) -> bool {
        self.arrays.iter().flatten().all(|x| *x == T::zero())
    }

    pub fn max_abs(&self) -> T {
        self.arrays
            .iter()
            .flatten()
            .fold(T::zero(), |m, x| m.max(x.abs()))
    }
}
