//! Row-partitioned execution. Results are always collected in row order, so
//! output does not depend on how rows are scheduled.

/// How to run a row-partitioned job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// Parallel with the given worker count; `None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel(Option<usize>),
    /// Parallel if the crate was built with it, sequential otherwise.
    #[default]
    Auto,
}

impl Executor {
    /// Reads `NEWTONLAB_THREADS`; unset or invalid means `Auto`.
    pub fn from_env() -> Self {
        match std::env::var("NEWTONLAB_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
            Some(1) => Executor::Sequential,
            #[cfg(feature = "parallel")]
            Some(n) if n > 1 => Executor::Parallel(Some(n)),
            _ => Executor::Auto,
        }
    }

    pub fn with_threads(n: usize) -> Self {
        #[cfg(feature = "parallel")]
        if n > 1 {
            return Executor::Parallel(Some(n));
        }
        let _ = n;
        Executor::Sequential
    }

    /// Applies `f` to each index in `0..rows` and returns results in order.
    pub fn map_rows<T, F>(self, rows: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => (0..rows).map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel(threads) => par_map(rows, f, threads),
            #[cfg(feature = "parallel")]
            Executor::Auto => par_map(rows, f, None),
            #[cfg(not(feature = "parallel"))]
            Executor::Auto => (0..rows).map(f).collect(),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(rows: usize, f: F, threads: Option<usize>) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..rows).into_par_iter().map(&f).collect();
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = Executor::Sequential.map_rows(100, |i| i * i);
        assert_eq!(seq, Executor::with_threads(4).map_rows(100, |i| i * i));
        assert_eq!(seq, Executor::Auto.map_rows(100, |i| i * i));
    }
}
