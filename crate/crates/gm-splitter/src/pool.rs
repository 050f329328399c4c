//! A scoped-thread executor for the core's independent work items.

use std::cell::Cell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use gm_splitter_core::exec::Executor;

thread_local! {
    static IN_WORKER: Cell<bool> = const { Cell::new(false) };
}

/// Runs up to `jobs` items at once. Calls made from inside a worker run
/// sequentially, so nested maps never multiply the thread count.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    jobs: usize,
}

impl Threaded {
    pub fn new(jobs: usize) -> Self {
        Threaded { jobs: jobs.max(1) }
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }
}

impl Executor for Threaded {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync,
    {
        let n = items.len();
        if self.jobs == 1 || n < 2 || IN_WORKER.with(Cell::get) {
            return items.into_iter().map(f).collect();
        }
        let inputs: Vec<Mutex<Option<T>>> =
            items.into_iter().map(|t| Mutex::new(Some(t))).collect();
        let outputs: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.jobs.min(n) {
                s.spawn(|| {
                    IN_WORKER.with(|w| w.set(true));
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        let item = inputs[i]
                            .lock()
                            .unwrap()
                            .take()
                            .expect("each item is taken once");
                        let r = f(item);
                        *outputs[i].lock().unwrap() = Some(r);
                    }
                });
            }
        });
        outputs
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every item was mapped"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let out = Threaded::new(4).map((0..100).collect(), |i: u64| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn nested_maps_run_inline() {
        let ex = Threaded::new(3);
        let out = ex.map(vec![1usize, 2, 3], |k| {
            ex.map((0..k).collect(), |j| j + 1).iter().sum::<usize>()
        });
        assert_eq!(out, vec![1, 3, 6]);
    }
}
