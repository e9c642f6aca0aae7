//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these run on the rayon global pool;
//! without it they are plain iterator loops. Output order never depends on
//! the execution mode.

pub use self::actual::{for_each_indexed, map_collect, map_range};

/// Name of the active execution mode, recorded in benchmark reports.
pub const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

/// Number of worker threads the helpers may use.
pub fn degree() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `op` with the helpers limited to `threads` workers.
///
/// Sequential builds ignore the request and always run on one thread.
pub fn with_degree<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(op),
            Err(e) => {
                log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
                op()
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}

#[cfg(feature = "parallel")]
mod actual {
    use rayon::prelude::*;

    /// Maps a slice into a vector, preserving order.
    pub fn map_collect<T, R, F>(source: &[T], map_op: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        source.par_iter().map(map_op).collect()
    }

    /// Maps `0..n` into a vector, preserving order.
    pub fn map_range<R, F>(n: usize, map_op: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).into_par_iter().map(map_op).collect()
    }

    pub fn for_each_indexed<T, F>(target: &mut [T], op: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        target
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, item)| op(i, item));
    }
}

#[cfg(not(feature = "parallel"))]
mod actual {
    /// Maps a slice into a vector, preserving order.
    pub fn map_collect<T, R, F>(source: &[T], map_op: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        source.iter().map(map_op).collect()
    }

    /// Maps `0..n` into a vector, preserving order.
    pub fn map_range<R, F>(n: usize, map_op: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).map(map_op).collect()
    }

    pub fn for_each_indexed<T, F>(target: &mut [T], op: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        target.iter_mut().enumerate().for_each(|(i, item)| op(i, item));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v: Vec<u32> = (0..1000).collect();
        let out = map_collect(&v, |x| x * 2);
        assert!(out.iter().enumerate().all(|(i, &x)| x == 2 * i as u32));
        let r = map_range(17, |i| i * i);
        assert_eq!(r[16], 256);
        let mut m = vec![0usize; 50];
        for_each_indexed(&mut m, |i, x| *x = i + 1);
        assert_eq!(m[49], 50);
        assert!(degree() >= 1);
        assert_eq!(with_degree(1, degree), 1);
    }
}
