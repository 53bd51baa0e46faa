/// Uniform spatial binning: bin `k` covers `[origin + k·width, origin + (k+1)·width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: f64,
    pub width: f64,
}

impl Grid {
    pub fn new(origin: f64, width: f64) -> Self {
        assert!(width > 0.0 && width.is_finite(), "bin width must be positive");
        Self { origin, width }
    }

    /// Bins centred on integer multiples of `width`, so the origin is a bin centre.
    pub fn centered(width: f64) -> Self {
        Self::new(-0.5 * width, width)
    }

    #[inline]
    pub fn index(&self, x: f64) -> i64 {
        ((x - self.origin) / self.width).floor() as i64
    }

    #[inline]
    pub fn left(&self, k: i64) -> f64 {
        self.origin + k as f64 * self.width
    }

    #[inline]
    pub fn right(&self, k: i64) -> f64 {
        self.left(k + 1)
    }

    #[inline]
    pub fn center(&self, k: i64) -> f64 {
        self.origin + (k as f64 + 0.5) * self.width
    }

    /// `Some(m)` when `width` is `m` times this grid's width and the origins agree.
    pub fn coarsening_factor(&self, width: f64) -> Option<usize> {
        let ratio = width / self.width;
        let m = ratio.round();
        if m >= 1.0 && (ratio - m).abs() <= 1e-9 * ratio {
            Some(m as usize)
        } else {
            None
        }
    }
}

/// Sparse-at-the-edges counts over a contiguous run of bins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinCounts {
    first: i64,
    counts: Vec<u64>,
}

impl BinCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(first: i64, counts: Vec<u64>) -> Self {
        Self { first, counts }
    }

    #[inline]
    pub fn add(&mut self, k: i64, n: u64) {
        if self.counts.is_empty() {
            self.first = k;
            self.counts.push(0);
        } else if k < self.first {
            let grow = (self.first - k) as usize;
            let grow = grow.max(self.counts.len() / 2);
            let mut v = vec![0; grow + self.counts.len()];
            v[grow..].copy_from_slice(&self.counts);
            self.counts = v;
            self.first -= grow as i64;
        } else if k >= self.first + self.counts.len() as i64 {
            let need = (k - self.first) as usize + 1;
            let cap = need.max(self.counts.len() + self.counts.len() / 2);
            self.counts.resize(cap, 0);
        }
        self.counts[(k - self.first) as usize] += n;
    }

    pub fn get(&self, k: i64) -> u64 {
        if k < self.first {
            return 0;
        }
        self.counts.get((k - self.first) as usize).copied().unwrap_or(0)
    }

    /// Drops zero bins at both ends.
    pub fn trimmed(&self) -> BinCounts {
        let Some(lo) = self.counts.iter().position(|&c| c > 0) else {
            return BinCounts::new();
        };
        let hi = self.counts.iter().rposition(|&c| c > 0).unwrap();
        BinCounts {
            first: self.first + lo as i64,
            counts: self.counts[lo..=hi].to_vec(),
        }
    }

    pub fn first(&self) -> i64 {
        self.first
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.first + i as i64, c))
    }
}
