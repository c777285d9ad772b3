//! Execution policy for the data-parallel loops (Monte Carlo batches,
//! voxel resampling, nearest-neighbour queries).
//!
//! With the `parallel` feature disabled every policy runs sequentially.

/// How a batch of independent work items is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Fills `out` in chunks; `f` receives the starting offset of each chunk.
    pub fn fill_chunks<U, F>(self, out: &mut [U], chunk: usize, f: F)
    where
        U: Send,
        F: Fn(usize, &mut [U]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(i, c)| f(i * chunk, c));
            }
            _ => out
                .chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i * chunk, c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let a = Exec::Sequential.map(&items, |x| x * x);
        let b = Exec::Parallel.map(&items, |x| x * x);
        assert_eq!(a, b);

        let mut s = vec![0usize; 777];
        let mut p = vec![0usize; 777];
        Exec::Sequential.fill_chunks(&mut s, 64, |off, c| {
            c.iter_mut().enumerate().for_each(|(i, v)| *v = off + i)
        });
        Exec::Parallel.fill_chunks(&mut p, 64, |off, c| {
            c.iter_mut().enumerate().for_each(|(i, v)| *v = off + i)
        });
        assert_eq!(s, p);
        assert_eq!(s[776], 776);
    }
}
