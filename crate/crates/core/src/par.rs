//! Order-preserving map over independent jobs.
//!
//! With the `parallel` feature the jobs run on a rayon pool; without it they
//! run in order on the calling thread. Results come back in input order
//! either way, so output never depends on the schedule.

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SSJF_SIM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Parallel when compiled with the `parallel` feature.
    #[default]
    Auto,
    Sequential,
    /// At most this many workers.
    Threads(usize),
}

impl Execution {
    /// `Threads(n)` if the environment variable holds a positive integer.
    pub fn from_env() -> Self {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .map_or(Execution::Auto, Execution::Threads)
    }
}

pub fn map<T, R, F>(items: Vec<T>, exec: Execution, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Sequential | Execution::Threads(1) => {}
            Execution::Auto => return items.into_par_iter().map(f).collect(),
            Execution::Threads(n) => {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    return pool.install(|| items.into_par_iter().map(f).collect());
                }
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    items.into_iter().map(f).collect()
}
