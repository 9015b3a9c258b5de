//! Fixed-capacity FIFO bank of key embeddings used as negatives.
//!
//! Negatives are always indexed by age: index 0 is the oldest stored key.
//! This order is what [`NegativeQueue::snapshot`] and
//! [`NegativeQueue::all_similarities`] expose and what smoothing-weight tie
//! breaking refers to.

use crate::error::{Error, Result};
use crate::tensor::{dot, top_k_desc, Matrix, Real, Rng};

const UNIT_SLACK: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeQueue<T> {
    capacity: usize,
    dim: usize,
    slots: Vec<T>,
    /// Step stamp of the enqueue call that wrote each physical slot.
    stamps: Vec<u64>,
    head: usize,
    filled: usize,
}

/// Raw layout of a queue, used by the checkpoint format.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueParts<T> {
    pub capacity: usize,
    pub dim: usize,
    pub head: usize,
    pub filled: usize,
    pub stamps: Vec<u64>,
    pub slots: Vec<T>,
}

impl<T: Real> NegativeQueue<T> {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::InvalidConfig(
                "queue capacity and dimension must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            dim,
            slots: vec![T::zero(); capacity * dim],
            stamps: vec![0; capacity],
            head: 0,
            filled: 0,
        })
    }

    /// Full queue of random unit vectors, all stamped 0.
    pub fn prefilled(capacity: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut q = Self::new(capacity, dim)?;
        let rows = rng.unit_rows::<T>(capacity, dim);
        q.enqueue_stamped(&rows, 0)?;
        Ok(q)
    }

    pub fn from_parts(parts: QueueParts<T>) -> Result<Self> {
        let QueueParts {
            capacity,
            dim,
            head,
            filled,
            stamps,
            slots,
        } = parts;
        let ok = capacity > 0
            && dim > 0
            && head < capacity
            && filled <= capacity
            && stamps.len() == capacity
            && slots.len() == capacity * dim
            && (filled == capacity || head == filled);
        if !ok {
            return Err(Error::IncompatibleCheckpoint("inconsistent queue layout".into()));
        }
        let q = Self {
            capacity,
            dim,
            slots,
            stamps,
            head,
            filled,
        };
        for i in 0..q.filled {
            check_unit(q.entry(i))?;
        }
        Ok(q)
    }

    pub fn to_parts(&self) -> QueueParts<T> {
        QueueParts {
            capacity: self.capacity,
            dim: self.dim,
            head: self.head,
            filled: self.filled,
            stamps: self.stamps.clone(),
            slots: self.slots.clone(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    #[inline]
    fn physical(&self, age: usize) -> usize {
        let oldest = if self.filled < self.capacity { 0 } else { self.head };
        (oldest + age) % self.capacity
    }

    /// Stored key with age index `age` (0 = oldest).
    pub fn entry(&self, age: usize) -> &[T] {
        let p = self.physical(age);
        &self.slots[p * self.dim..(p + 1) * self.dim]
    }

    pub fn stamp(&self, age: usize) -> u64 {
        self.stamps[self.physical(age)]
    }

    pub fn enqueue(&mut self, keys: &Matrix<T>) -> Result<()> {
        self.enqueue_stamped(keys, 0)
    }

    /// Appends `keys`, evicting the oldest entries once full. `stamp` tags
    /// the new entries (the training loop passes its step number).
    pub fn enqueue_stamped(&mut self, keys: &Matrix<T>, stamp: u64) -> Result<()> {
        if keys.rows() > self.capacity {
            return Err(Error::BatchTooLarge {
                batch: keys.rows(),
                capacity: self.capacity,
            });
        }
        if keys.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "queue key width",
                expected: self.dim,
                found: keys.cols(),
            });
        }
        for row in keys.iter_rows() {
            check_unit(row)?;
        }
        for row in keys.iter_rows() {
            let h = self.head;
            self.slots[h * self.dim..(h + 1) * self.dim].copy_from_slice(row);
            self.stamps[h] = stamp;
            self.head = (h + 1) % self.capacity;
            self.filled = (self.filled + 1).min(self.capacity);
        }
        Ok(())
    }

    /// Frozen copy of the stored keys in age order.
    pub fn snapshot(&self) -> Matrix<T> {
        let mut data = Vec::with_capacity(self.filled * self.dim);
        for age in 0..self.filled {
            data.extend_from_slice(self.entry(age));
        }
        Matrix::from_vec_unchecked(self.filled, self.dim, data)
    }

    pub fn newest_stamp(&self) -> Option<u64> {
        (0..self.filled).map(|a| self.stamp(a)).max()
    }

    /// The `min(k, len)` stored keys most similar to `query`, sorted by
    /// descending similarity with ties going to the older entry. Returns age
    /// indices and similarities.
    pub fn top_k_similar(&self, query: &[T], k: usize) -> Result<(Vec<usize>, Vec<T>)> {
        if self.is_empty() {
            return Err(Error::EmptyQueue);
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "top_k_similar query",
                expected: self.dim,
                found: query.len(),
            });
        }
        let sims: Vec<T> = (0..self.filled).map(|a| dot(query, self.entry(a))).collect();
        let idx = top_k_desc(&sims, k);
        let vals = idx.iter().map(|&i| sims[i]).collect();
        Ok((idx, vals))
    }

    /// Row `i` holds the similarity of query `i` to every stored key, in age
    /// order.
    pub fn all_similarities(&self, queries: &Matrix<T>) -> Result<Matrix<T>> {
        if self.is_empty() {
            return Err(Error::EmptyQueue);
        }
        if queries.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "all_similarities queries",
                expected: self.dim,
                found: queries.cols(),
            });
        }
        queries.matmul_transposed(&self.snapshot())
    }
}

fn check_unit<T: Real>(row: &[T]) -> Result<()> {
    let norm = dot(row, row).sqrt().as_f64();
    if (norm - 1.0).abs() > UNIT_SLACK {
        Err(Error::NotUnitNorm { norm })
    } else {
        Ok(())
    }
}
