//! Desk-scale mixture-of-vision-experts: a shared shallow vision trunk,
//! per-domain deep expert branches, a versatile fallback expert, and a
//! score-difference router, together with the training procedures and
//! cost accounting that go with them.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod nncore;
pub mod router;

pub use error::{MixpertError, Result};

/// Raises glibc's mmap threshold so the large per-step tensor buffers are
/// recycled through the arena instead of being mapped and unmapped on every
/// allocation. Call once at process start; safe to call multiple times.
pub fn tune_allocator() {
    #[cfg(target_os = "linux")]
    unsafe {
        // M_MMAP_THRESHOLD == -3 in glibc's mallopt.
        libc::mallopt(-3, 1 << 30);
    }
}
