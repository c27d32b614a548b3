//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon;
//! without it, or when [`Exec::Sequential`] is requested, they run in order
//! on the calling thread. Both paths produce identical results.

/// Execution path for data-parallel kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

/// Below this many multiply-adds a kernel is not worth splitting.
const MIN_PARALLEL_WORK: usize = 1 << 15;

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Falls back to sequential for small workloads.
    pub fn for_work(self, work: usize) -> Exec {
        if work < MIN_PARALLEL_WORK {
            Exec::Sequential
        } else {
            self
        }
    }
}

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Calls `f(row_index, row)` for every `cols`-wide row of `data`.
pub fn for_each_row_mut<F>(data: &mut [f64], cols: usize, exec: Exec, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if cols == 0 {
        return;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            data.par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }
        _ => data.chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row)),
    }
}

/// Order-preserving map.
pub fn map_collect<T, R, F>(items: &[T], exec: Exec, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_dispatch_visits_each_row_once() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let mut data = vec![0.0; 12];
            for_each_row_mut(&mut data, 3, exec, |i, row| row.fill(i as f64));
            assert_eq!(data, vec![0., 0., 0., 1., 1., 1., 2., 2., 2., 3., 3., 3.]);
        }
    }

    #[test]
    fn map_preserves_order() {
        let items: Vec<u32> = (0..100).collect();
        let seq = map_collect(&items, Exec::Sequential, |v| v * 2);
        let par = map_collect(&items, Exec::Parallel, |v| v * 2);
        assert_eq!(seq, par);
        assert_eq!(seq[99], 198);
    }

    #[test]
    fn small_work_runs_sequentially() {
        assert_eq!(Exec::Parallel.for_work(10), Exec::Sequential);
        assert_eq!(Exec::Parallel.for_work(1 << 20), Exec::Parallel);
        assert!(num_threads() >= 1);
    }
}
