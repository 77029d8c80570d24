// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ops::Range;

use rand::Rng;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Two length-`w` crops of a length-`2w` interval.
#[derive(Clone, Debug, PartialEq)]
pub struct CropPair {
    pub view1: Tensor,
    pub view2: Tensor,
    pub start1: usize,
    pub start2: usize,
    /// Shared timestamps in the coordinates of the source interval.
    pub overlap: Option<Range<usize>>,
}

/// Overlap of the crops `[s1, s1+w)` and `[s2, s2+w)`, if any.
pub fn crop_overlap(s1: usize, s2: usize, w: usize) -> Option<Range<usize>> {
    let lo = s1.max(s2);
    let hi = (s1 + w).min(s2 + w);
    (lo < hi).then_some(lo..hi)
}

/// Uniform crop starts in `[0, len - w]`, resampled until the crops overlap
/// when `need_overlap` is set.
pub fn sample_crop_starts<R: Rng + ?Sized>(
    len: usize,
    w: usize,
    need_overlap: bool,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if w == 0 || w > len {
        return Err(Error::contract(format!(
            "cannot crop length {w} from {len}"
        )));
    }
    loop {
        let s1 = rng.random_range(0..=len - w);
        let s2 = rng.random_range(0..=len - w);
        if !need_overlap || crop_overlap(s1, s2, w).is_some() {
            return Ok((s1, s2));
        }
    }
}

/// Rows `[start, start+len)` of a `(time, D)` tensor.
pub fn time_slice(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if x.ndim() != 2 || start + len > x.shape()[0] || len == 0 {
        return Err(Error::dim(format!(
            "cannot take rows {start}..{} of {:?}",
            start + len,
            x.shape()
        )));
    }
    let d = x.shape()[1];
    Tensor::new(
        vec![len, d],
        x.data()[start * d..(start + len) * d].to_vec(),
    )
}

/// Two random contiguous crops of length `x.len() / 2` from a `(2w, D)` interval.
pub fn random_crop_pair<R: Rng + ?Sized>(x: &Tensor, rng: &mut R) -> Result<CropPair> {
    if x.ndim() != 2 || x.shape()[0] < 2 {
        return Err(Error::dim(format!(
            "crop input must be (2w, D), got {:?}",
            x.shape()
        )));
    }
    let w = x.shape()[0] / 2;
    let (s1, s2) = sample_crop_starts(x.shape()[0], w, false, rng)?;
    crop_pair_at(x, s1, s2)
}

/// Crops of length `x.len() / 2` at fixed starts.
pub fn crop_pair_at(x: &Tensor, start1: usize, start2: usize) -> Result<CropPair> {
    let w = x.shape()[0] / 2;
    Ok(CropPair {
        view1: time_slice(x, start1, w)?,
        view2: time_slice(x, start2, w)?,
        start1,
        start2,
        overlap: crop_overlap(start1, start2, w),
    })
}
