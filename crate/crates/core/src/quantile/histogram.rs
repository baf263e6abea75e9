use serde::{Deserialize, Serialize};

use super::QuantileError;

/// Bin edges `l_0 < l_1 < ... < l_b` with `b` a power of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    edges: Vec<f64>,
}

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self, QuantileError> {
        let bins = edges.len().saturating_sub(1);
        if bins < 2 || !bins.is_power_of_two() {
            return Err(QuantileError::InvalidEdges(format!("number of bins must be a power of two >= 2, got {bins}")));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QuantileError::InvalidEdges("edges must be finite and strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    /// `bins` equal-width bins on `[0, upper]`.
    pub fn uniform(upper: f64, bins: usize) -> Result<Self, QuantileError> {
        if !(upper > 0.0) {
            return Err(QuantileError::InvalidEdges(format!("upper bound must be positive, got {upper}")));
        }
        Self::new((0..=bins).map(|j| upper * j as f64 / bins as f64).collect())
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn levels(&self) -> usize {
        self.bins().trailing_zeros() as usize
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// `l_j` for `j` in `0..=b`.
    pub fn edge(&self, j: usize) -> f64 {
        self.edges[j]
    }

    pub fn upper(&self) -> f64 {
        self.edges[self.bins()]
    }

    /// Zero-based bin of `loss`; values outside `[l_0, l_b)` are clipped to
    /// the first or last bin.
    pub fn bin_of(&self, loss: f64) -> usize {
        let b = self.bins();
        if !(loss >= self.edges[0]) {
            return 0;
        }
        (self.edges.partition_point(|&e| e <= loss) - 1).min(b - 1)
    }
}

/// Counts for every node `(r, j)`, `r = 0..log2(b)-1`, `j = 1..=b/2^r`.
///
/// Node `(r, j)` covers bins `2^r (j-1) + 1 ..= 2^r j`, i.e. losses in
/// `[l_{2^r (j-1)}, l_{2^r j})`. The root is omitted since its count is the
/// public number of contributors. Noisy histograms may hold negative,
/// fractional or inconsistent counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierHistogram {
    levels: Vec<Vec<f64>>,
    edges: BinEdges,
    n_contributors: usize,
}

impl HierHistogram {
    pub fn zeros(edges: &BinEdges) -> Self {
        let b = edges.bins();
        let levels = (0..edges.levels()).map(|r| vec![0.0; b >> r]).collect();
        Self { levels, edges: edges.clone(), n_contributors: 0 }
    }

    pub fn edges(&self) -> &BinEdges {
        &self.edges
    }

    pub fn n_contributors(&self) -> usize {
        self.n_contributors
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Total node count, `2b - 2`.
    pub fn num_nodes(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Count at node `(level, index)` with one-based `index`.
    pub fn node(&self, level: usize, index: usize) -> f64 {
        self.levels[level][index - 1]
    }

    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    /// Counts in level-major order.
    pub fn flatten(&self) -> Vec<f64> {
        self.levels.iter().flatten().copied().collect()
    }

    pub(crate) fn from_flat(edges: &BinEdges, flat: &[f64], n_contributors: usize) -> Self {
        let mut hist = Self::zeros(edges);
        let mut it = flat.iter();
        for level in &mut hist.levels {
            for (slot, v) in level.iter_mut().zip(&mut it) {
                *slot = *v;
            }
        }
        hist.n_contributors = n_contributors;
        hist
    }

    /// Whether every parent equals the sum of its children.
    pub fn is_consistent(&self, tol: f64) -> bool {
        self.levels.windows(2).all(|pair| {
            pair[1].iter().enumerate().all(|(j, parent)| (parent - pair[0][2 * j] - pair[0][2 * j + 1]).abs() <= tol)
        })
    }
}

/// One-hot hierarchical histogram of a single loss.
pub fn encode_client(loss: f64, edges: &BinEdges) -> HierHistogram {
    let mut hist = HierHistogram::zeros(edges);
    let bin = edges.bin_of(loss);
    for (r, level) in hist.levels.iter_mut().enumerate() {
        level[bin >> r] = 1.0;
    }
    hist.n_contributors = 1;
    hist
}

/// Noiseless sum of client histograms.
pub fn sum_exact(histograms: &[HierHistogram]) -> Result<HierHistogram, QuantileError> {
    let first = histograms.first().ok_or(QuantileError::Empty)?;
    let mut total = HierHistogram::zeros(&first.edges);
    for h in histograms {
        if h.edges != first.edges {
            return Err(QuantileError::EdgeMismatch);
        }
        for (acc, level) in total.levels.iter_mut().zip(&h.levels) {
            for (a, v) in acc.iter_mut().zip(level) {
                *a += v;
            }
        }
        total.n_contributors += h.n_contributors;
    }
    Ok(total)
}

/// A tree node together with the one-based bin range it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRange {
    pub level: usize,
    pub index: usize,
    pub first_bin: usize,
    pub last_bin: usize,
}

/// Maximal dyadic partition of the bins `1..=j`, largest blocks first.
pub fn dyadic_partition(j: usize, bins: usize) -> Result<Vec<NodeRange>, QuantileError> {
    if bins < 2 || !bins.is_power_of_two() {
        return Err(QuantileError::InvalidParameter(format!("bins must be a power of two >= 2, got {bins}")));
    }
    if j == 0 || j > bins {
        return Err(QuantileError::IndexOutOfRange { index: j, bins });
    }
    let top = bins.trailing_zeros() as usize - 1;
    let mut nodes = Vec::new();
    let mut covered = 0;
    while covered < j {
        let mut level = top;
        while covered % (1 << level) != 0 || covered + (1 << level) > j {
            level -= 1;
        }
        let size = 1 << level;
        nodes.push(NodeRange { level, index: covered / size + 1, first_bin: covered + 1, last_bin: covered + size });
        covered += size;
    }
    Ok(nodes)
}

/// `H(j)`: sum of node counts over the dyadic partition of `1..=j`.
pub fn cumulative(hist: &HierHistogram, j: usize) -> Result<f64, QuantileError> {
    Ok(dyadic_partition(j, hist.edges.bins())?.iter().map(|n| hist.node(n.level, n.index)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranges(j: usize, b: usize) -> Vec<(usize, usize)> {
        dyadic_partition(j, b).unwrap().iter().map(|n| (n.first_bin, n.last_bin)).collect()
    }

    #[test]
    fn edges_validation() {
        assert!(BinEdges::new(vec![0.0, 1.0]).is_err());
        assert!(BinEdges::new(vec![0.0, 1.0, 2.0, 3.0]).is_err());
        assert!(BinEdges::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(BinEdges::new(vec![0.0, 1.0, 2.0]).is_ok());
        assert!(BinEdges::uniform(0.0, 4).is_err());
        let e = BinEdges::uniform(10.0, 64).unwrap();
        assert_eq!((e.bins(), e.levels()), (64, 6));
    }

    #[test]
    fn encode_examples() {
        let edges = BinEdges::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let h = encode_client(2.5, &edges);
        assert_eq!(h.level(0), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(h.level(1), &[0.0, 1.0]);
        assert_eq!(h.num_nodes(), 6);
        let h = encode_client(0.0, &edges);
        assert_eq!((h.node(0, 1), h.node(1, 1)), (1.0, 1.0));
        for loss in [4.0, 17.0] {
            let h = encode_client(loss, &edges);
            assert_eq!((h.node(0, 4), h.node(1, 2)), (1.0, 1.0));
        }
        assert_eq!(encode_client(-1.0, &edges).node(0, 1), 1.0);
        // exact edge values open a new bin
        assert_eq!(encode_client(1.0, &edges).node(0, 2), 1.0);
    }

    #[test]
    fn dyadic_examples() {
        assert_eq!(ranges(15, 16), vec![(1, 8), (9, 12), (13, 14), (15, 15)]);
        assert_eq!(ranges(16, 16), vec![(1, 8), (9, 16)]);
        assert_eq!(ranges(1, 16), vec![(1, 1)]);
        assert_eq!(ranges(2, 2), vec![(1, 1), (2, 2)]);
        assert!(dyadic_partition(0, 16).is_err());
        assert!(dyadic_partition(17, 16).is_err());
        assert!(dyadic_partition(3, 12).is_err());
    }

    #[test]
    fn tiling_all_sizes() {
        for k in 1..=8 {
            let b = 1usize << k;
            for j in 1..=b {
                let parts = dyadic_partition(j, b).unwrap();
                let mut next = 1;
                for p in &parts {
                    assert_eq!(p.first_bin, next);
                    assert_eq!(p.last_bin - p.first_bin + 1, 1 << p.level);
                    assert_eq!(p.first_bin, (p.index - 1) * (1 << p.level) + 1);
                    next = p.last_bin + 1;
                }
                assert_eq!(next, j + 1);
                // b = 2 has no level above the leaves, so j = 2 needs both leaves
                assert!(parts.len() <= k.max(2), "b={b} j={j}");
            }
        }
    }

    proptest! {
        #[test]
        fn exact_tree_consistency(losses in prop::collection::vec(-1.0f64..12.0, 1..200), k in 1usize..8) {
            let edges = BinEdges::uniform(10.0, 1 << k).unwrap();
            let hists: Vec<_> = losses.iter().map(|&l| encode_client(l, &edges)).collect();
            let total = sum_exact(&hists).unwrap();
            prop_assert!(total.is_consistent(0.0));
            prop_assert_eq!(total.n_contributors(), losses.len());
            let mut prefix = 0.0;
            for j in 1..=edges.bins() {
                prefix += total.node(0, j);
                prop_assert_eq!(cumulative(&total, j).unwrap(), prefix);
            }
            prop_assert_eq!(prefix, losses.len() as f64);
        }

        #[test]
        fn one_hot_per_level(loss in -5.0f64..15.0, k in 1usize..9) {
            let edges = BinEdges::uniform(10.0, 1 << k).unwrap();
            let h = encode_client(loss, &edges);
            prop_assert_eq!(h.num_nodes(), 2 * edges.bins() - 2);
            let flat = h.flatten();
            prop_assert_eq!(flat.iter().filter(|&&v| v != 0.0).count(), k);
            prop_assert_eq!(flat.iter().map(|v| v * v).sum::<f64>(), k as f64);
        }
    }
}
