//! Floating-point operation tally for the low-rank solver paths.
//!
//! Only active with `debug_assertions`; release builds compile every call
//! to a no-op. The count is per thread so concurrent tests don't interfere.

#[cfg(debug_assertions)]
thread_local! {
    static FLOPS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

#[inline]
pub(crate) fn add(_n: usize) {
    #[cfg(debug_assertions)]
    FLOPS.with(|c| c.set(c.get() + _n as u64));
}

/// Returns the multiply-add count accumulated on this thread and resets it.
/// Always zero in release builds.
#[doc(hidden)]
pub fn take() -> u64 {
    #[cfg(debug_assertions)]
    {
        FLOPS.with(|c| c.replace(0))
    }
    #[cfg(not(debug_assertions))]
    {
        0
    }
}
