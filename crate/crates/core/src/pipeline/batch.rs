use rayon::prelude::*;

use super::{GroundingResult, GroundingTask, Pipeline};
use crate::error::PipelineError;

/// Maps `f` over `items` on a pool of `parallelism` workers; output order
/// follows input order whatever the completion order.
pub fn run_ordered<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let workers = parallelism.max(1);
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .thread_name(|i| format!("ground-worker-{i}"))
        .build()
        .expect("worker pool");
    pool.install(|| items.par_iter().map(f).collect())
}

/// Grounds every task; one task's failure never affects another.
pub fn ground_batch(
    tasks: &[GroundingTask],
    pipeline: &Pipeline,
    parallelism: usize,
) -> Vec<Result<GroundingResult, PipelineError>> {
    run_ordered(tasks, parallelism, |t| pipeline.ground(t))
}
