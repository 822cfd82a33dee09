//! Data-parallel helpers. With the `parallel` feature the maps run on the
//! rayon pool; without it (or with `parallel = false`) they run in order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && items.len() > 1 {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Whether the crate was built with rayon support.
pub fn available() -> bool {
    cfg!(feature = "parallel")
}

/// Configures the global pool from `SLOSC_THREADS` (if set and positive).
/// Returns the thread count in effect, 1 for sequential builds.
pub fn init_threads() -> usize {
    let requested = std::env::var("SLOSC_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            // a pool already built elsewhere keeps its size
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}
