//! Pluggable mapping over independent work items.
//!
//! The core is single-threaded; callers with threads (the CLI) supply an
//! [`Executor`] that maps items concurrently. Every work item carries its
//! own derived seed, so results never depend on the executor.

use alloc::vec::Vec;

/// Maps a function over independent items, preserving order.
pub trait Executor: Sync {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync;
}

/// Runs items one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync,
    {
        items.into_iter().map(f).collect()
    }
}
