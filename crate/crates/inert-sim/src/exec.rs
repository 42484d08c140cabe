use inert_core::simulate::EnsembleExecutor;
use rayon::prelude::*;

/// Runs paths on the rayon pool; results keep path order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl EnsembleExecutor for Rayon {
    fn map_paths<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(job).collect()
    }
}
