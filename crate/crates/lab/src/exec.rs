use rayon::prelude::*;
use singular_flow_core::exec::Executor;

/// Executor backed by a dedicated rayon pool. Results keep index order, so
/// output never depends on the number of workers.
pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    /// `threads = 0` lets rayon pick.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Rayon {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if len < 2 {
            return (0..len).map(f).collect();
        }
        self.pool.install(|| (0..len).into_par_iter().map(f).collect())
    }
}
