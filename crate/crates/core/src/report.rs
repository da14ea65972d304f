//! Memory-budget accounting shared by both pipelines.

/// Budget, split, derived working scale, and the footprint actually
/// achieved by one pipeline run.
///
/// Only the persistent on-sensor state is charged: the stored image share
/// plus the superpixel data structure. Transient work memory (priority
/// queues, fill buffers) is not charged, matching the accounting model the
/// budgets were defined under.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BudgetReport {
    /// Requested cap in bytes.
    pub budget_bytes: u64,
    /// Share allocated to stored image data (0 for the sparse pipeline,
    /// which never stores a dense frame).
    pub image_bytes: u64,
    /// Share allocated to superpixel state.
    pub state_bytes: u64,
    /// Realized superpixel count (P for the sparse pipeline, K for SNIC).
    pub realized_units: u32,
    /// Working image resolution (source resolution for the sparse pipeline,
    /// the downsampled resolution for SNIC).
    pub scaled_width: u32,
    pub scaled_height: u32,
    /// Bytes actually consumed by the accounted state.
    pub footprint_bytes: u64,
}

impl BudgetReport {
    pub fn within_budget(&self) -> bool {
        self.footprint_bytes <= self.budget_bytes
    }
}
