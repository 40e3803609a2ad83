//! Tree-structured codebooks: layer `l` holds `A^(l-1)` sub-codebooks of `A`
//! codewords, and codeword `a` of sub-codebook `i` links to sub-codebook
//! `A(i-1)+a` of the next layer. Indices are 1-based in the public API.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::beamspace::ReducedChannel;
use crate::codebook::{
    coordinate_search, lloyd_train_subset, parse_bits, Candidate, LloydConfig, LloydDiagnostics, SearchConfig,
    SearchOutcome, TrainingSet,
};
use crate::error::{Error, Result};
use crate::format::LineReader;
use crate::linalg::derive_seed;
use crate::port_model::{AntennaCoder, PixelAntenna};

/// Codewords, member indices and Lloyd diagnostics of one trained sub-codebook.
type TrainedLayer = (Vec<AntennaCoder>, Vec<Vec<usize>>, Option<LloydDiagnostics>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HierarchicalCodebook {
    branching: usize,
    /// `layers[l][i][a]`, all 0-based.
    layers: Vec<Vec<Vec<AntennaCoder>>>,
}

/// Index of the sub-codebook in layer `l+1` linked to codeword `a` of
/// sub-codebook `i` in layer `l`.
pub fn child_index(branching: usize, i: usize, a: usize) -> usize {
    branching * (i - 1) + a
}

/// Splits a layer-`L+1` descent index into (sub-codebook, codeword) of
/// layer `L`: codeword `mod(i, A)`, or `A` when the remainder is zero.
pub fn leaf_position(branching: usize, i: usize) -> (usize, usize) {
    let a = match i % branching {
        0 => branching,
        r => r,
    };
    (i.div_ceil(branching), a)
}

impl HierarchicalCodebook {
    pub fn new(branching: usize, layers: Vec<Vec<Vec<AntennaCoder>>>) -> Result<Self> {
        if branching < 2 {
            return Err(Error::InvalidArgument("branching factor must be at least 2".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("hierarchy needs at least one layer".into()));
        }
        let q = layers[0]
            .first()
            .and_then(|s| s.first())
            .map(|c| c.len())
            .ok_or_else(|| Error::InvalidArgument("empty root sub-codebook".into()))?;
        let mut expected = 1usize;
        for (l, layer) in layers.iter().enumerate() {
            if layer.len() != expected {
                return Err(Error::InvalidArgument(format!(
                    "layer {} has {} sub-codebooks, expected {expected}",
                    l + 1,
                    layer.len()
                )));
            }
            for sub in layer {
                if sub.len() != branching {
                    return Err(Error::InvalidArgument(format!(
                        "layer {} sub-codebook has {} codewords, expected {branching}",
                        l + 1,
                        sub.len()
                    )));
                }
                if let Some(c) = sub.iter().find(|c| c.len() != q) {
                    return Err(Error::CoderLength {
                        expected: q,
                        found: c.len(),
                    });
                }
            }
            expected = expected
                .checked_mul(branching)
                .ok_or_else(|| Error::InvalidArgument("hierarchy too large".into()))?;
        }
        Ok(Self { branching, layers })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn q(&self) -> usize {
        self.layers[0][0][0].len()
    }

    /// Sub-codebook `i` (1-based) of layer `l` (1-based).
    pub fn sub_codebook(&self, l: usize, i: usize) -> &[AntennaCoder] {
        &self.layers[l - 1][i - 1]
    }

    pub fn layer(&self, l: usize) -> &[Vec<AntennaCoder>] {
        &self.layers[l - 1]
    }

    /// Codeword reached by a descent ending at layer-`L+1` index `i`.
    pub fn final_coder(&self, i: usize) -> &AntennaCoder {
        let (sub, a) = leaf_position(self.branching, i);
        &self.layers[self.depth() - 1][sub - 1][a - 1]
    }

    /// The first `l` layers as a hierarchy of their own.
    pub fn truncated(&self, l: usize) -> Self {
        assert!((1..=self.depth()).contains(&l), "truncation depth out of range");
        Self {
            branching: self.branching,
            layers: self.layers[..l].to_vec(),
        }
    }

    /// Text form: a `Q A L` header, then every layer's sub-codebooks in
    /// index order, one line of `Q` bits per codeword.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.q(), self.branching, self.depth());
        for c in self.layers.iter().flatten().flatten() {
            let _ = writeln!(s, "{c}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        let [q, a, l] = reader.header::<3>("hierarchy header `Q A L`")?;
        if q == 0 || a < 2 || l == 0 {
            return Err(reader.err("hierarchy needs Q >= 1, A >= 2 and L >= 1"));
        }
        let mut layers = Vec::new();
        let mut subs = 1usize;
        for layer_no in 1..=l {
            let mut layer = Vec::new();
            for i in 1..=subs {
                let mut sub = Vec::new();
                for k in 1..=a {
                    let line = reader.expect_line(&format!("layer {layer_no} sub-codebook {i} codeword {k}"))?;
                    sub.push(parse_bits(&reader, line, q)?);
                }
                layer.push(sub);
            }
            layers.push(layer);
            subs = subs
                .checked_mul(a)
                .ok_or_else(|| reader.err("hierarchy size overflows"))?;
        }
        reader.expect_end()?;
        Self::new(a, layers)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HierarchyBuild {
    pub codebook: HierarchicalCodebook,
    /// Training-sample indices of every sub-codebook, `subsets[l][i]`
    /// (0-based).
    pub subsets: Vec<Vec<Vec<usize>>>,
    /// Sub-codebooks that had no training samples and copy their parent
    /// codeword, as 1-based `(layer, index)`.
    pub degenerate: Vec<(usize, usize)>,
    pub diagnostics: Vec<Vec<Option<LloydDiagnostics>>>,
}

/// Trains the tree layer by layer: every sub-codebook is Lloyd-trained on
/// the nearest-neighbor cell of its parent codeword.
pub fn build_hierarchy(
    antenna: &PixelAntenna,
    ts: &TrainingSet,
    branching: usize,
    depth: usize,
    cfg: &LloydConfig,
) -> Result<HierarchyBuild> {
    if branching < 2 || depth == 0 {
        return Err(Error::InvalidArgument("hierarchy needs A >= 2 and L >= 1".into()));
    }
    if ts.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut layers: Vec<Vec<Vec<AntennaCoder>>> = Vec::with_capacity(depth);
    let mut subsets: Vec<Vec<Vec<usize>>> = vec![vec![(0..ts.len()).collect()]];
    let mut diagnostics = Vec::with_capacity(depth);
    let mut degenerate = Vec::new();
    // Parent codeword of every sub-codebook in the current layer.
    let mut parents: Vec<Option<AntennaCoder>> = vec![None];

    for l in 1..=depth {
        let current = &subsets[l - 1];
        let trained: Vec<Result<TrainedLayer>> = current
            .par_iter()
            .enumerate()
            .map(|(idx, subset)| {
                if subset.is_empty() {
                    let parent = parents[idx].clone().expect("root training set is non-empty");
                    return Ok((vec![parent; branching], vec![Vec::new(); branching], None));
                }
                let seed = if l == 1 {
                    cfg.seed
                } else {
                    derive_seed(cfg.seed, &[l as u64, idx as u64 + 1])
                };
                let out = lloyd_train_subset(antenna, ts, subset, branching, &LloydConfig { seed, ..cfg.clone() })?;
                let mut children = vec![Vec::new(); branching];
                for (&s, &a) in subset.iter().zip(&out.assignment) {
                    children[a].push(s);
                }
                Ok((out.codebook.codewords().to_vec(), children, Some(out.diagnostics)))
            })
            .collect();

        let mut layer = Vec::with_capacity(current.len());
        let mut next_subsets = Vec::with_capacity(current.len() * branching);
        let mut layer_diag = Vec::with_capacity(current.len());
        for (idx, r) in trained.into_iter().enumerate() {
            let (codewords, children, diag) = r?;
            if diag.is_none() {
                degenerate.push((l, idx + 1));
            }
            layer.push(codewords);
            next_subsets.extend(children);
            layer_diag.push(diag);
        }
        parents = layer.iter().flatten().cloned().map(Some).collect();
        layers.push(layer);
        diagnostics.push(layer_diag);
        if l < depth {
            subsets.push(next_subsets);
        }
    }
    if !degenerate.is_empty() {
        log::debug!("{} sub-codebooks had no training samples", degenerate.len());
    }
    Ok(HierarchyBuild {
        codebook: HierarchicalCodebook::new(branching, layers)?,
        subsets,
        degenerate,
        diagnostics,
    })
}

#[derive(Clone, Debug)]
pub struct HierarchicalOutcome {
    pub search: SearchOutcome,
    /// Final layer-`L+1` descent index of each user's last update.
    pub leaf_indices: Vec<usize>,
}

/// Joint ZF precoding and per-user tree descent: `A` candidates per layer,
/// `A·L` candidate evaluations per user per outer iteration.
pub fn hierarchical_search_optimize(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    hc: &HierarchicalCodebook,
    p_budget: f64,
    sigma2: &[f64],
    cfg: &SearchConfig,
) -> Result<HierarchicalOutcome> {
    if hc.q() != antenna.q() {
        return Err(Error::CoderLength {
            expected: antenna.q(),
            found: hc.q(),
        });
    }
    let a_count = hc.branching();
    let candidates: Vec<Vec<Vec<Candidate>>> = hc
        .layers
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|sub| sub.iter().map(|c| Candidate::new(antenna, c)).collect())
                .collect()
        })
        .collect();
    let mut leaf_indices = vec![0; channels.len()];
    let mut next_user = 0;
    let u_count = channels.len();

    let search = coordinate_search(channels, sigma2, p_budget, &candidates[0][0], cfg, |scorer| {
        let mut i = 1;
        let mut last = None;
        for layer in &candidates {
            let (a, cand, v) = scorer.best_of(&layer[i - 1])?;
            i = child_index(a_count, i, a + 1);
            last = Some((cand.clone(), v));
        }
        let (sub, a) = leaf_position(a_count, i);
        let chosen = last?;
        assert_eq!(
            candidates[candidates.len() - 1][sub - 1][a - 1].coder,
            chosen.0.coder,
            "descent and final-coder rule disagree"
        );
        leaf_indices[next_user % u_count] = i;
        next_user += 1;
        Some(chosen)
    })?;
    Ok(HierarchicalOutcome { search, leaf_indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamspace::sample_reduced;
    use crate::codebook::flat_search_optimize;
    use crate::linalg::seeded_rng;

    fn coder(q: usize, idx: u64) -> AntennaCoder {
        AntennaCoder::from_index(q, idx)
    }

    fn toy(branching: usize, depth: usize) -> HierarchicalCodebook {
        let mut layers = Vec::new();
        let mut subs = 1;
        let mut next = 0;
        for _ in 0..depth {
            let layer: Vec<Vec<AntennaCoder>> = (0..subs)
                .map(|_| {
                    (0..branching)
                        .map(|_| {
                            next += 1;
                            coder(8, next)
                        })
                        .collect()
                })
                .collect();
            layers.push(layer);
            subs *= branching;
        }
        HierarchicalCodebook::new(branching, layers).unwrap()
    }

    #[test]
    fn child_links_follow_the_tree_rule() {
        assert_eq!(child_index(3, 3, 1), 7);
        assert_eq!(child_index(3, 1, 1), 1);
        assert_eq!(child_index(3, 1, 3), 3);
        assert_eq!(child_index(2, 4, 2), 8);
    }

    #[test]
    fn child_ranges_tile_the_next_layer() {
        for a in 2..5usize {
            for l in 1..4u32 {
                let parents = a.pow(l - 1);
                let mut seen = vec![0; a.pow(l)];
                for i in 1..=parents {
                    for k in 1..=a {
                        seen[child_index(a, i, k) - 1] += 1;
                    }
                }
                assert!(seen.iter().all(|&n| n == 1));
            }
        }
    }

    #[test]
    fn final_coder_follows_mod_rule() {
        assert_eq!(leaf_position(3, 7), (3, 1));
        assert_eq!(leaf_position(3, 9), (3, 3));
        assert_eq!(leaf_position(3, 1), (1, 1));
        let hc = toy(3, 2);
        assert_eq!(hc.final_coder(7), &hc.sub_codebook(2, 3)[0]);
        assert_eq!(hc.final_coder(9), &hc.sub_codebook(2, 3)[2]);
    }

    #[test]
    fn text_round_trip() {
        let hc = toy(3, 3);
        let text = hc.to_text();
        assert!(text.starts_with("8 3 3\n"));
        assert_eq!(text.lines().count(), 1 + 3 + 9 + 27);
        assert_eq!(HierarchicalCodebook::parse(&text).unwrap(), hc);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(HierarchicalCodebook::parse("2 2 1\n01\n").is_err());
        assert!(HierarchicalCodebook::parse("2 1 1\n01\n").is_err());
        assert!(HierarchicalCodebook::parse("2 2 1\n01\n10\n11\n").is_err());
        assert!(HierarchicalCodebook::parse("2 2 99999999999\n01\n10\n").is_err());
        assert!(HierarchicalCodebook::parse("2 2 1\n01\n1x\n").is_err());
    }

    #[test]
    fn truncation_keeps_leading_layers() {
        let hc = toy(2, 3);
        let t = hc.truncated(2);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.layer(2), hc.layer(2));
    }

    fn setup() -> (PixelAntenna, TrainingSet) {
        let antenna = PixelAntenna::surrogate(6, 6, 21);
        let ts = TrainingSet::generate(antenna.n_eff(), 2, 2, 90, 4);
        (antenna, ts)
    }

    #[test]
    fn single_layer_equals_flat_training() {
        let (antenna, ts) = setup();
        let cfg = LloydConfig { seed: 5, ..Default::default() };
        let built = build_hierarchy(&antenna, &ts, 3, 1, &cfg).unwrap();
        let all: Vec<usize> = (0..ts.len()).collect();
        let flat = lloyd_train_subset(&antenna, &ts, &all, 3, &cfg).unwrap();
        assert_eq!(built.codebook.sub_codebook(1, 1), flat.codebook.codewords());
    }

    #[test]
    fn child_training_sets_partition_their_parent() {
        let (antenna, ts) = setup();
        let built = build_hierarchy(&antenna, &ts, 3, 3, &LloydConfig::default()).unwrap();
        assert_eq!(built.subsets.len(), 3);
        for l in 1..3 {
            for (i, parent) in built.subsets[l - 1].iter().enumerate() {
                let mut union: Vec<usize> = (1..=3)
                    .flat_map(|a| built.subsets[l][child_index(3, i + 1, a) - 1].clone())
                    .collect();
                union.sort();
                let mut p = parent.clone();
                p.sort();
                assert_eq!(union, p);
            }
        }
    }

    #[test]
    fn empty_cells_copy_their_parent() {
        let (antenna, _) = setup();
        let ts = TrainingSet::generate(antenna.n_eff(), 2, 2, 2, 9);
        let built = build_hierarchy(&antenna, &ts, 3, 3, &LloydConfig::default()).unwrap();
        assert!(!built.degenerate.is_empty());
        for &(l, i) in &built.degenerate {
            let (psub, pa) = leaf_position(3, i);
            let parent = &built.codebook.sub_codebook(l - 1, psub)[pa - 1];
            assert!(built.codebook.sub_codebook(l, i).iter().all(|c| c == parent));
        }
    }

    #[test]
    fn search_costs_a_times_l_and_follows_a_path() {
        let (antenna, ts) = setup();
        let built = build_hierarchy(&antenna, &ts, 3, 3, &LloydConfig::default()).unwrap();
        let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut seeded_rng(77));
        let out = hierarchical_search_optimize(&antenna, &chans, &built.codebook, 10.0, &[1.0, 1.0], &SearchConfig::default()).unwrap();
        assert!(out.search.report.evaluations.iter().all(|&e| e == 9));
        for (u, &i) in out.leaf_indices.iter().enumerate() {
            assert_eq!(built.codebook.final_coder(i), &out.search.coders[u]);
            assert!((1..=27).contains(&i));
        }
    }

    #[test]
    fn single_layer_search_equals_flat_search() {
        let (antenna, ts) = setup();
        let built = build_hierarchy(&antenna, &ts, 3, 1, &LloydConfig::default()).unwrap();
        let flat = crate::codebook::FlatCodebook::new(built.codebook.sub_codebook(1, 1).to_vec()).unwrap();
        for seed in 0..5 {
            let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut seeded_rng(seed));
            let cfg = SearchConfig { seed, ..Default::default() };
            let h = hierarchical_search_optimize(&antenna, &chans, &built.codebook, 10.0, &[1.0, 1.0], &cfg).unwrap();
            let f = flat_search_optimize(&antenna, &chans, &flat, 10.0, &[1.0, 1.0], &cfg).unwrap();
            assert_eq!(h.search.coders, f.coders);
            assert_eq!(h.search.precoder, f.precoder);
            assert_eq!(h.search.report.sum_rate_trace, f.report.sum_rate_trace);
        }
    }
}
