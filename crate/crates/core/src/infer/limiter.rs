use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::{Condvar, Mutex};

/// Counting semaphore: at most `max` permits outstanding at once.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter { max: max.max(1), in_use: Mutex::new(0), freed: Condvar::new(), peak: AtomicUsize::new(0) }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    /// Blocks until a permit is free.
    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock();
        while *n >= self.max {
            self.freed.wait(&mut n);
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::Relaxed);
        Permit(self)
    }

    /// Highest number of permits ever held at the same time.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock() -= 1;
        self.0.freed.notify_one();
    }
}
