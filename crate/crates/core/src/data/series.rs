// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::diffcore::Tensor;
use crate::encoders::time_slice;
use crate::error::{Error, Result};

/// Sorted change-point timestamps of a series of length `length`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CpLabels {
    points: Vec<usize>,
    length: usize,
}

impl CpLabels {
    /// Requires `0 < ν < length` and strictly increasing points.
    pub fn new(points: Vec<usize>, length: usize) -> Result<Self> {
        if let Some(&bad) = points.iter().find(|&&p| p == 0 || p >= length) {
            return Err(Error::Validation(format!(
                "change point {bad} outside (0, {length})"
            )));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "change points must be strictly increasing".into(),
            ));
        }
        Ok(Self { points, length })
    }

    pub fn empty(length: usize) -> Self {
        Self {
            points: Vec::new(),
            length,
        }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Change points inside `[start, start+len)`, re-based to the slice.
    /// A point on the slice's first timestamp is dropped since it no longer
    /// separates two observed segments.
    pub fn restrict(&self, start: usize, len: usize) -> Self {
        let points = self
            .points
            .iter()
            .filter(|&&p| p > start && p < start + len)
            .map(|&p| p - start)
            .collect();
        Self {
            points,
            length: len,
        }
    }
}

/// Multichannel observation stream `(t, D)` with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    values: Tensor,
    labels: Option<CpLabels>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Tensor, labels: Option<CpLabels>) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(Error::dim(format!(
                "series must be (t, D), got {:?}",
                values.shape()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Validation(
                "series contains non-finite values".into(),
            ));
        }
        if let Some(l) = &labels {
            if l.length() != values.shape()[0] {
                return Err(Error::Validation(format!(
                    "labels cover {} timestamps, series has {}",
                    l.length(),
                    values.shape()[0]
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            values,
            labels,
        })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn labels(&self) -> Option<&CpLabels> {
        self.labels.as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }

    /// Change points, empty when unlabeled.
    pub fn change_points(&self) -> &[usize] {
        self.labels.as_ref().map(CpLabels::points).unwrap_or(&[])
    }

    /// Contiguous sub-series `[start, start+len)` with re-based labels.
    pub fn slice(&self, start: usize, len: usize, name: impl Into<String>) -> Result<Self> {
        let values = time_slice(&self.values, start, len)?;
        let labels = self.labels.as_ref().map(|l| l.restrict(start, len));
        Self::new(name, values, labels)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.channels();
        &self.values.data()[i * d..(i + 1) * d]
    }
}

/// Every length-`len` window of `values` starting at multiples of `stride`.
pub fn sliding_windows(values: &Tensor, len: usize, stride: usize) -> Result<Vec<Tensor>> {
    if values.ndim() != 2 || stride == 0 || len == 0 {
        return Err(Error::contract(
            "sliding windows need a (t, D) series, len >= 1, stride >= 1",
        ));
    }
    let t = values.shape()[0];
    if t < len {
        return Err(Error::contract(format!(
            "series of length {t} is shorter than window {len}"
        )));
    }
    (0..=t - len)
        .step_by(stride)
        .map(|s| time_slice(values, s, len))
        .collect()
}
