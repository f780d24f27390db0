use super::HarnessError;

/// How episode-level work is scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Data-parallel over episodes; sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

/// Maps `f` over `items`, preserving order.
pub fn map_items<T, R, F>(
    items: &[T],
    execution: Execution,
    workers: Option<usize>,
    f: F,
) -> Result<Vec<R>, HarnessError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        Execution::Sequential => Ok(items.iter().map(f).collect()),
        Execution::Parallel => parallel_map(items, workers, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], workers: Option<usize>, f: F) -> Result<Vec<R>, HarnessError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        None => Ok(items.par_iter().map(f).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Pool(e.to_string()))?;
            Ok(pool.install(|| items.par_iter().map(f).collect()))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _workers: Option<usize>, f: F) -> Result<Vec<R>, HarnessError>
where
    F: Fn(&T) -> R,
{
    Ok(items.iter().map(f).collect())
}
