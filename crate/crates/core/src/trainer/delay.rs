use std::collections::VecDeque;

use crate::scalar::Scalar;
use crate::vector::Vector;

/// One aggregated update in flight.
#[derive(Clone, Debug)]
pub struct DelayEntry<S> {
    /// Iteration whose gradients produced this update.
    pub computed_at: usize,
    /// Iteration at which the update is applied to the model.
    pub apply_at: usize,
    /// `sum_i Delta_i`, in worker order.
    pub update_sum: Vector<S>,
    /// `sum_i g_i` of the uncompressed gradients; kept only when probing.
    pub grad_sum: Option<Vector<S>>,
}

/// Updates sent but not yet applied. With a fixed staleness `tau` it holds
/// exactly `tau` entries between iterations once warm-up is over; before
/// that the missing entries act as zero updates.
#[derive(Clone, Debug, Default)]
pub struct DelaySlot<S> {
    pending: VecDeque<DelayEntry<S>>,
}

impl<S: Scalar> DelaySlot<S> {
    pub fn new() -> Self {
        Self {
            pending: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = &DelayEntry<S>> {
        self.pending.iter()
    }

    pub fn push(&mut self, entry: DelayEntry<S>) {
        self.pending.push_back(entry);
    }

    /// Removes every entry due at or before `iteration`, in send order.
    pub fn pop_due(&mut self, iteration: usize) -> Vec<DelayEntry<S>> {
        let (due, keep): (Vec<_>, Vec<_>) = self.pending.drain(..).partition(|e| e.apply_at <= iteration);
        self.pending = keep.into();
        due
    }
}
