//! Worker-count cap shared by the threaded loops. Results never depend on
//! the number of workers.

use std::sync::atomic::{AtomicUsize, Ordering};

static JOBS: AtomicUsize = AtomicUsize::new(0);

/// Cap worker threads; 0 means one per available core.
pub fn set_jobs(n: usize) {
    JOBS.store(n, Ordering::Relaxed);
}

pub fn jobs() -> usize {
    match JOBS.load(Ordering::Relaxed) {
        0 => std::thread::available_parallelism().map(|t| t.get()).unwrap_or(1),
        n => n,
    }
}

/// `items.iter().map(f)` over up to `jobs()` threads, in input order.
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = jobs().min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let per = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|sc| {
        let handles: Vec<_> = items.chunks(per).map(|c| sc.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn order_is_kept() {
        let v: Vec<usize> = (0..37).collect();
        super::set_jobs(4);
        assert_eq!(super::map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
        super::set_jobs(0);
    }
}
