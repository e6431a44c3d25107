//! Min-priority entries for `std::collections::BinaryHeap`.

use std::cmp::Ordering;

#[derive(Debug, Clone, Copy)]
pub(crate) struct MinCost<T> {
    pub cost: f64,
    pub item: T,
}

impl<T> PartialEq for MinCost<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cost.total_cmp(&other.cost) == Ordering::Equal
    }
}

impl<T> Eq for MinCost<T> {}

impl<T> PartialOrd for MinCost<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for MinCost<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost)
    }
}
