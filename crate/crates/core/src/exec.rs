//! Data-parallel dispatch.
//!
//! Hot loops (Doppler bins of a search grid, per-PRN channels, Monte Carlo
//! trials) go through [`Execution::map`]. With the `parallel` feature the
//! `Parallel` variant fans out over rayon's pool; without it, or with
//! `Sequential`, items are processed in order on the calling thread. Output
//! order always matches input order, so results do not depend on the
//! schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run work on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<I, O, F>(self, items: Vec<I>, f: F) -> Vec<O>
    where
        I: Send,
        O: Send,
        F: Fn(I) -> O + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.into_par_iter().map(f).collect();
        }
        items.into_iter().map(f).collect()
    }

    pub fn map_range<O, F>(self, range: std::ops::Range<usize>, f: F) -> Vec<O>
    where
        O: Send,
        F: Fn(usize) -> O + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return range.into_par_iter().map(f).collect();
        }
        range.map(f).collect()
    }

    /// Runs `f` on every element of `data`.
    pub fn for_each_mut<T, F>(self, data: &mut [T], f: F)
    where
        T: Send,
        F: Fn(&mut T) + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            data.par_iter_mut().for_each(f);
            return;
        }
        data.iter_mut().for_each(f);
    }

    /// Runs `f(index, chunk)` over consecutive `chunk_len` pieces of `data`.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Send + Sync,
    {
        let chunk_len = chunk_len.max(1);
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let seq = Execution::Sequential.map_range(0..1000, |i| i * i);
        let par = Execution::Parallel.map_range(0..1000, |i| i * i);
        assert_eq!(seq, par);
        let v: Vec<u32> = (0..50).collect();
        assert_eq!(
            Execution::Parallel.map(v.clone(), |x| x + 1),
            Execution::Sequential.map(v, |x| x + 1)
        );
        let mut a = vec![0usize; 103];
        let mut b = a.clone();
        Execution::Parallel.for_each_chunk_mut(&mut a, 10, |i, c| c.iter_mut().for_each(|x| *x = i));
        Execution::Sequential.for_each_chunk_mut(&mut b, 10, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(a, b);
        assert_eq!(a[102], 10);
    }
}
