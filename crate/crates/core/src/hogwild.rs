//! Shared parameter storage for lock-free parallel SGD.
//!
//! Each scalar is an `AtomicU64` holding the bits of an `f64`. Reads and
//! writes use relaxed ordering: concurrent updates to the same scalar may be
//! lost, but a reader never observes a torn value.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::embed_store::{EmbeddingMatrix, TableRole};

/// Row-level access used by the trainers, implemented both for owned tables
/// (single-threaded) and for shared atomic tables (parallel workers).
pub trait RowStore {
    fn dim(&self) -> usize;
    fn read_row(&self, id: usize, out: &mut [f64]);
    /// `row += alpha * delta`
    fn add_row(&mut self, id: usize, alpha: f64, delta: &[f64]);
}

impl RowStore for EmbeddingMatrix {
    fn dim(&self) -> usize {
        EmbeddingMatrix::dim(self)
    }

    fn read_row(&self, id: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(id));
    }

    fn add_row(&mut self, id: usize, alpha: f64, delta: &[f64]) {
        crate::embed_store::axpy(alpha, delta, self.row_mut(id));
    }
}

impl RowStore for &SharedMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read_row(&self, id: usize, out: &mut [f64]) {
        self.load_row(id, out);
    }

    fn add_row(&mut self, id: usize, alpha: f64, delta: &[f64]) {
        SharedMatrix::add_row(self, id, alpha, delta);
    }
}

pub struct SharedMatrix {
    data: Vec<AtomicU64>,
    rows: usize,
    dim: usize,
    role: TableRole,
}

impl SharedMatrix {
    pub fn from_matrix(m: &EmbeddingMatrix) -> Self {
        SharedMatrix {
            data: m.as_slice().iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            rows: m.rows(),
            dim: m.dim(),
            role: m.role(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn load_row(&self, id: usize, out: &mut [f64]) {
        let row = &self.data[id * self.dim..(id + 1) * self.dim];
        for (o, a) in out.iter_mut().zip(row) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    /// `row += alpha * delta`, one racy read-modify-write per scalar.
    pub fn add_row(&self, id: usize, alpha: f64, delta: &[f64]) {
        let row = &self.data[id * self.dim..(id + 1) * self.dim];
        for (a, d) in row.iter().zip(delta) {
            let cur = f64::from_bits(a.load(Ordering::Relaxed));
            a.store((cur + alpha * d).to_bits(), Ordering::Relaxed);
        }
    }

    pub fn to_matrix(&self) -> EmbeddingMatrix {
        let data = self
            .data
            .iter()
            .map(|a| f64::from_bits(a.load(Ordering::Relaxed)))
            .collect();
        EmbeddingMatrix::from_vec(data, self.rows, self.dim, self.role).expect("shape preserved")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_update() {
        let m = EmbeddingMatrix::from_vec(vec![1.0, 2.0, 3.0, 4.0], 2, 2, TableRole::Center).unwrap();
        let s = SharedMatrix::from_matrix(&m);
        s.add_row(1, 0.5, &[2.0, -2.0]);
        let mut row = [0.0; 2];
        s.load_row(1, &mut row);
        assert_eq!(row, [4.0, 3.0]);
        assert_eq!(s.to_matrix().row(0), &[1.0, 2.0]);
    }

    #[test]
    fn concurrent_updates_stay_finite() {
        let m = EmbeddingMatrix::zeros(4, 8, TableRole::Context);
        let s = SharedMatrix::from_matrix(&m);
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    for i in 0..10_000 {
                        s.add_row(i % 4, 1.0, &[1.0; 8]);
                    }
                });
            }
        });
        let out = s.to_matrix();
        // lost updates allowed; values stay whole numbers within bounds
        for v in out.as_slice() {
            assert!(v.fract() == 0.0 && *v >= 1.0 && *v <= 10_000.0, "{}", v);
        }
    }
}
