//! Data-parallel map over independent work units.
//!
//! Chains and simulation repetitions derive their own RNG streams from a
//! master seed, so results are identical regardless of scheduling. With the
//! `parallel` feature the map runs on the ambient rayon pool; without it the
//! same closure runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn try_map_indexed<U, F>(count: usize, f: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(usize) -> Result<U> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_indexed<U, F>(count: usize, f: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(usize) -> Result<U> + Sync + Send,
{
    (0..count).map(f).collect()
}
