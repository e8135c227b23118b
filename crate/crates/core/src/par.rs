//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans out over the
//! rayon pool; results are always collected in input order, so the output
//! does not depend on scheduling. Without the feature both variants run
//! sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Single-threaded; the reference for bitwise reproducibility.
    #[default]
    Sequential,
    Parallel,
}

impl Execution {
    /// `Parallel` when more than one thread is requested.
    pub fn from_threads(threads: usize) -> Self {
        if threads > 1 {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            let mut out = Vec::with_capacity(items.len());
            items.par_iter().map(f).collect_into_vec(&mut out);
            out
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Like [`map`], failing with the error of the earliest failing item.
pub fn try_map<T, R, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(Execution::Sequential, &items, |x| x * x);
        let par = map(Execution::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn reports_first_error() {
        let items: Vec<usize> = (0..10).collect();
        let r = try_map(Execution::Parallel, &items, |&i| {
            if i >= 3 {
                Err(Error::input(format!("item {i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r.unwrap_err().to_string(), "input error: item 3");
    }
}
