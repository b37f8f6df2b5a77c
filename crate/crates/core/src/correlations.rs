//! Mutual information between measurement outcomes and qubit partitioners.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::povm::ProductPovm;
use crate::sampling::{marginal_counts, Dataset};
use crate::states::{reduced_density, QuantumState};

/// Disjoint ascending groups covering `0..n`, ordered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition", into = "RawPartition")]
pub struct Partition {
    n: usize,
    groups: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawPartition {
    n: usize,
    groups: Vec<Vec<usize>>,
}

impl TryFrom<RawPartition> for Partition {
    type Error = Error;
    fn try_from(r: RawPartition) -> Result<Self> {
        Partition::new(r.n, r.groups)
    }
}

impl From<Partition> for RawPartition {
    fn from(p: Partition) -> Self {
        RawPartition {
            n: p.n,
            groups: p.groups,
        }
    }
}

impl Partition {
    pub fn new(n: usize, mut groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidPartition("empty group".into()));
            }
            g.sort_unstable();
            for &q in g.iter() {
                if q >= n {
                    return Err(Error::QubitOutOfRange { index: q, n });
                }
                if seen[q] {
                    return Err(Error::InvalidPartition(format!("qubit {q} appears twice")));
                }
                seen[q] = true;
            }
        }
        if let Some(q) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("qubit {q} is not covered")));
        }
        groups.sort_by_key(|g| g[0]);
        Ok(Self { n, groups })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            n,
            groups: (0..n).map(|q| vec![q]).collect(),
        }
    }

    pub fn single_group(n: usize) -> Self {
        Self {
            n,
            groups: vec![(0..n).collect()],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn group_of(&self, q: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&q))
    }

    pub fn check_max_size(&self, k: usize) -> Result<()> {
        match self.groups.iter().find(|g| g.len() > k) {
            Some(g) => Err(Error::GroupTooLarge {
                size: g.len(),
                cap: k,
            }),
            None => Ok(()),
        }
    }
}

/// Source of joint outcome distributions over qubit groups.
pub trait OutcomeStatistics: Sync {
    fn num_qubits(&self) -> usize;
    fn outcomes_per_qubit(&self) -> usize;
    /// Joint distribution on `group`, flattened row-major in group order.
    fn joint(&self, group: &[usize]) -> Result<Vec<f64>>;
    /// Information at or below this level is treated as absent when growing groups.
    fn negligible_information(&self) -> f64 {
        0.0
    }
}

impl OutcomeStatistics for Dataset {
    fn num_qubits(&self) -> usize {
        Dataset::num_qubits(self)
    }

    fn outcomes_per_qubit(&self) -> usize {
        Dataset::outcomes_per_qubit(self)
    }

    fn joint(&self, group: &[usize]) -> Result<Vec<f64>> {
        if self.num_shots() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(marginal_counts(self, group)?.frequencies())
    }
}

/// Infinite-statistics outcome distribution of a state under a product POVM.
pub struct ExactStatistics<'a> {
    pub state: &'a QuantumState,
    pub povm: &'a ProductPovm,
}

impl OutcomeStatistics for ExactStatistics<'_> {
    fn num_qubits(&self) -> usize {
        self.state.num_qubits()
    }

    fn outcomes_per_qubit(&self) -> usize {
        self.povm.uniform_outcomes().unwrap_or(0)
    }

    fn joint(&self, group: &[usize]) -> Result<Vec<f64>> {
        let rho = reduced_density(self.state, group)?;
        Ok(self
            .povm
            .group_effects(group)?
            .iter()
            .map(|e| e.trace_with(rho.matrix()).max(0.0))
            .collect())
    }

    fn negligible_information(&self) -> f64 {
        1e-12
    }
}

/// Plug-in mutual information (nats) of a joint table `p[a * db + b]`.
pub fn mutual_information_from_joint(joint: &[f64], da: usize, db: usize) -> f64 {
    let mut pa = vec![0.0; da];
    let mut pb = vec![0.0; db];
    for a in 0..da {
        for b in 0..db {
            let p = joint[a * db + b];
            pa[a] += p;
            pb[b] += p;
        }
    }
    let mut mi = 0.0;
    for a in 0..da {
        for b in 0..db {
            let p = joint[a * db + b];
            if p > 0.0 {
                mi += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    mi.max(0.0)
}

pub fn pair_mutual_information<S: OutcomeStatistics + ?Sized>(
    stats: &S,
    i: usize,
    j: usize,
) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidPartition(format!(
            "mutual information of qubit {i} with itself"
        )));
    }
    let (a, b) = (i.min(j), i.max(j));
    let d = stats.outcomes_per_qubit();
    Ok(mutual_information_from_joint(&stats.joint(&[a, b])?, d, d))
}

/// Mutual information between the joint outcome of `group` and qubit `q`.
pub fn group_mutual_information<S: OutcomeStatistics + ?Sized>(
    stats: &S,
    group: &[usize],
    q: usize,
) -> Result<f64> {
    if group.contains(&q) {
        return Err(Error::InvalidPartition(format!(
            "qubit {q} already in group"
        )));
    }
    let d = stats.outcomes_per_qubit();
    let mut all = group.to_vec();
    all.push(q);
    let joint = stats.joint(&all)?;
    Ok(mutual_information_from_joint(
        &joint,
        d.pow(group.len() as u32),
        d,
    ))
}

/// Symmetric non-negative weight matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIGraph {
    n: usize,
    weights: Vec<f64>,
}

impl MIGraph {
    /// Symmetrizes by averaging and clamps negatives to zero.
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} weights for {n} nodes",
                weights.len()
            )));
        }
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let x = (0.5 * (weights[i * n + j] + weights[j * n + i])).max(0.0);
                w[i * n + j] = x;
                w[j * n + i] = x;
            }
        }
        Ok(Self { n, weights: w })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub fn mi_matrix<S: OutcomeStatistics + ?Sized>(stats: &S) -> Result<MIGraph> {
    let n = stats.num_qubits();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| pair_mutual_information(stats, i, j))
        .collect::<Result<Vec<f64>>>()?;
    let mut w = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        w[i * n + j] = v;
        w[j * n + i] = v;
    }
    MIGraph::new(n, w)
}

/// Seeds each group with the strongest remaining pair, then grows it by
/// the qubit sharing the most information with the whole group. Growth stops
/// early only when no remaining qubit carries non-negligible information.
pub fn greedy_partition<S: OutcomeStatistics + ?Sized>(stats: &S, k: usize) -> Result<Partition> {
    let n = stats.num_qubits();
    if k == 0 {
        return Err(Error::InvalidPartition("k must be at least 1".into()));
    }
    if k == 1 {
        return Ok(Partition::singletons(n));
    }
    let graph = mi_matrix(stats)?;
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut groups = Vec::new();
    while !unassigned.is_empty() {
        if unassigned.len() == 1 {
            groups.push(vec![unassigned[0]]);
            break;
        }
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (a, &i) in unassigned.iter().enumerate() {
            for &j in &unassigned[a + 1..] {
                let w = graph.weight(i, j);
                if w > best.0 {
                    best = (w, i, j);
                }
            }
        }
        if best.0 <= stats.negligible_information() {
            groups.extend(unassigned.iter().map(|&q| vec![q]));
            break;
        }
        let mut group = vec![best.1, best.2];
        unassigned.retain(|&q| q != best.1 && q != best.2);
        while group.len() < k && !unassigned.is_empty() {
            let mut pick = (f64::NEG_INFINITY, usize::MAX);
            for &q in &unassigned {
                let mi = group_mutual_information(stats, &group, q)?;
                if mi > pick.0 {
                    pick = (mi, q);
                }
            }
            if pick.0 <= stats.negligible_information() {
                break;
            }
            group.push(pick.1);
            unassigned.retain(|&q| q != pick.1);
        }
        groups.push(group);
    }
    Partition::new(n, groups)
}

pub fn naive_partition(n: usize, k: usize) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidPartition("k must be at least 1".into()));
    }
    let qubits: Vec<usize> = (0..n).collect();
    Partition::new(n, qubits.chunks(k).map(<[usize]>::to_vec).collect())
}

/// Visits qubits by index; each unassigned qubit opens a group that absorbs
/// the unassigned qubit with the highest weight to any member.
pub fn node_order_partition(g: &MIGraph, k: usize) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidPartition("k must be at least 1".into()));
    }
    let n = g.num_nodes();
    let mut assigned = vec![false; n];
    let mut groups = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        assigned[i] = true;
        let mut group = vec![i];
        while group.len() < k {
            let mut pick: Option<(f64, usize)> = None;
            for q in (0..n).filter(|&q| !assigned[q]) {
                let w = group
                    .iter()
                    .map(|&m| g.weight(m, q))
                    .fold(f64::NEG_INFINITY, f64::max);
                if pick.is_none_or(|(b, _)| w > b) {
                    pick = Some((w, q));
                }
            }
            match pick {
                Some((_, q)) => {
                    assigned[q] = true;
                    group.push(q);
                }
                None => break,
            }
        }
        groups.push(group);
    }
    Partition::new(n, groups)
}

/// Merges endpoints of edges in descending weight order, discarding any edge
/// whose merge would exceed `k`. Leftover qubits become singletons.
pub fn edge_order_partition(g: &MIGraph, k: usize) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidPartition("k must be at least 1".into()));
    }
    let n = g.num_nodes();
    let mut edges: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (g.weight(i, j), i, j))
        .filter(|e| e.0 > 0.0)
        .collect();
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut label: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|q| vec![q]).collect();
    for (_, i, j) in edges {
        let (a, b) = (label[i], label[j]);
        if a == b || members[a].len() + members[b].len() > k {
            continue;
        }
        let (keep, gone) = (a.min(b), a.max(b));
        let moved = std::mem::take(&mut members[gone]);
        for &q in &moved {
            label[q] = keep;
        }
        members[keep].extend(moved);
    }
    Partition::new(n, members.into_iter().filter(|m| !m.is_empty()).collect())
}

/// Weighted Newman modularity; zero for an edgeless graph.
pub fn modularity(g: &MIGraph, p: &Partition) -> Result<f64> {
    let n = g.num_nodes();
    if p.num_qubits() != n {
        return Err(Error::Dimension(format!(
            "partition over {} qubits for a graph of {n}",
            p.num_qubits()
        )));
    }
    let degree: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| g.weight(i, j)).sum())
        .collect();
    let two_w: f64 = degree.iter().sum();
    if two_w <= 0.0 {
        return Ok(0.0);
    }
    let mut q = 0.0;
    for group in p.groups() {
        for &i in group {
            for &j in group {
                q += g.weight(i, j) - degree[i] * degree[j] / two_w;
            }
        }
    }
    Ok(q / two_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::ExactStatistics;
    use crate::states::{BlockProductState, PureState};
    use proptest::prelude::*;

    struct Table {
        joint: Vec<f64>,
    }

    impl OutcomeStatistics for Table {
        fn num_qubits(&self) -> usize {
            2
        }
        fn outcomes_per_qubit(&self) -> usize {
            6
        }
        fn joint(&self, group: &[usize]) -> Result<Vec<f64>> {
            assert_eq!(group, [0, 1]);
            Ok(self.joint.clone())
        }
    }

    #[test]
    fn perfectly_correlated_uniform_pair() {
        let mut joint = vec![0.0; 36];
        for m in 0..6 {
            joint[m * 6 + m] = 1.0 / 6.0;
        }
        let mi = pair_mutual_information(&Table { joint }, 0, 1).unwrap();
        assert!((mi - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn product_dataset_has_small_mi() {
        let s: QuantumState = PureState::basis(2, 0).into();
        let ds = crate::sampling::sample_shots(&s, &ProductPovm::pauli6(2), 1_000_000, 1).unwrap();
        let mi = pair_mutual_information(&ds, 0, 1).unwrap();
        assert!(mi <= 5e-5, "{mi}");
        assert_eq!(mi, pair_mutual_information(&ds, 1, 0).unwrap());
    }

    fn brute_mi(probs: &[f64], da: usize, db: usize) -> f64 {
        let mut total = 0.0;
        for a in 0..da {
            for b in 0..db {
                let p = probs[a * db + b];
                if p == 0.0 {
                    continue;
                }
                let pa: f64 = (0..db).map(|x| probs[a * db + x]).sum();
                let pb: f64 = (0..da).map(|x| probs[x * db + b]).sum();
                total += p * (p / pa / pb).ln();
            }
        }
        total
    }

    #[test]
    fn exact_bell_and_ghz_mi_match_enumeration() {
        let povm2 = ProductPovm::pauli6(2);
        let bell: QuantumState = PureState::bell().into();
        let probs: Vec<f64> = (0..36)
            .map(|f| crate::states::outcome_probability(&bell, &povm2, &[f / 6, f % 6]).unwrap())
            .collect();
        let stats = ExactStatistics {
            state: &bell,
            povm: &povm2,
        };
        let mi = pair_mutual_information(&stats, 0, 1).unwrap();
        assert!((mi - brute_mi(&probs, 6, 6)).abs() < 1e-12);
        assert!(mi > 0.1);

        let povm3 = ProductPovm::pauli6(3);
        let ghz: QuantumState = PureState::ghz(3).into();
        let probs: Vec<f64> = (0..216)
            .map(|f| {
                crate::states::outcome_probability(&ghz, &povm3, &[f / 36, (f / 6) % 6, f % 6])
                    .unwrap()
            })
            .collect();
        let stats = ExactStatistics {
            state: &ghz,
            povm: &povm3,
        };
        let mi = group_mutual_information(&stats, &[0, 1], 2).unwrap();
        assert!((mi - brute_mi(&probs, 36, 6)).abs() < 1e-12);
        let single = group_mutual_information(&stats, &[0], 2).unwrap();
        assert_eq!(single, pair_mutual_information(&stats, 0, 2).unwrap());
    }

    fn two_bell_pairs() -> QuantumState {
        let bell = PureState::bell().to_density();
        let p = Partition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        BlockProductState::new(p, vec![bell.clone(), bell])
            .unwrap()
            .into()
    }

    #[test]
    fn greedy_recovers_bell_pairs() {
        let s = two_bell_pairs();
        let povm = ProductPovm::pauli6(4);
        let ds = crate::sampling::sample_shots(&s, &povm, 20_000, 3).unwrap();
        let want = Partition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(greedy_partition(&ds, 2).unwrap(), want);
        assert_eq!(
            greedy_partition(&ds, 4).unwrap(),
            Partition::single_group(4)
        );
        assert_eq!(greedy_partition(&ds, 1).unwrap(), Partition::singletons(4));
    }

    #[test]
    fn greedy_on_exact_statistics_refines_blocks() {
        let ghz = PureState::ghz(3).to_density();
        let bell = PureState::bell().to_density();
        let p = Partition::new(5, vec![vec![0, 2, 4], vec![1, 3]]).unwrap();
        let s: QuantumState = BlockProductState::new(p.clone(), vec![ghz, bell])
            .unwrap()
            .into();
        let povm = ProductPovm::pauli6(5);
        let stats = ExactStatistics {
            state: &s,
            povm: &povm,
        };
        for k in 3..=5 {
            let got = greedy_partition(&stats, k).unwrap();
            for g in got.groups() {
                assert!(
                    p.groups().iter().any(|b| g.iter().all(|q| b.contains(q))),
                    "{got:?}"
                );
            }
        }
    }

    #[test]
    fn naive_rows() {
        let p = naive_partition(14, 4).unwrap();
        assert_eq!(
            p.groups(),
            &[
                vec![0, 1, 2, 3],
                vec![4, 5, 6, 7],
                vec![8, 9, 10, 11],
                vec![12, 13]
            ]
        );
        let p = naive_partition(14, 2).unwrap();
        assert_eq!(p.groups().len(), 7);
        assert_eq!(p.groups()[6], vec![12, 13]);
        assert_eq!(naive_partition(3, 5).unwrap(), Partition::single_group(3));
    }

    fn graph_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> MIGraph {
        let mut w = vec![0.0; n * n];
        for &(i, j, x) in edges {
            w[i * n + j] = x;
            w[j * n + i] = x;
        }
        MIGraph::new(n, w).unwrap()
    }

    fn two_triangles() -> MIGraph {
        graph_from_edges(
            6,
            &[
                (0, 2, 1.0),
                (2, 4, 1.0),
                (0, 4, 1.0),
                (1, 3, 1.0),
                (3, 5, 1.0),
                (1, 5, 1.0),
            ],
        )
    }

    #[test]
    fn graph_partitioners_recover_components() {
        let g = two_triangles();
        let want = Partition::new(6, vec![vec![0, 2, 4], vec![1, 3, 5]]).unwrap();
        assert_eq!(node_order_partition(&g, 3).unwrap(), want);
        assert_eq!(edge_order_partition(&g, 3).unwrap(), want);
    }

    #[test]
    fn zero_graph_node_order_pairs_by_index() {
        let g = MIGraph::new(6, vec![0.0; 36]).unwrap();
        let p = node_order_partition(&g, 2).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(
            edge_order_partition(&g, 2).unwrap(),
            Partition::singletons(6)
        );
    }

    #[test]
    fn dominant_edge_is_taken_first() {
        let g = graph_from_edges(6, &[(0, 5, 10.0), (0, 1, 1.0), (4, 5, 2.0), (2, 3, 0.5)]);
        let p = edge_order_partition(&g, 2).unwrap();
        assert!(p.groups().contains(&vec![0, 5]));
        assert!(p.groups().contains(&vec![2, 3]));
    }

    #[test]
    fn modularity_examples() {
        let g = two_triangles();
        let split = Partition::new(6, vec![vec![0, 2, 4], vec![1, 3, 5]]).unwrap();
        assert!((modularity(&g, &split).unwrap() - 0.5).abs() < 1e-14);
        assert!(modularity(&g, &Partition::single_group(6)).unwrap().abs() < 1e-14);
        let zero = MIGraph::new(3, vec![0.0; 9]).unwrap();
        assert_eq!(modularity(&zero, &Partition::singletons(3)).unwrap(), 0.0);
    }

    #[test]
    fn modularity_matches_double_sum() {
        let n = 7;
        let mut w = vec![0.0; n * n];
        let mut x = 0.37f64;
        for i in 0..n {
            for j in (i + 1)..n {
                x = (x * 7.31 + 0.13).fract();
                w[i * n + j] = x;
                w[j * n + i] = x;
            }
        }
        let g = MIGraph::new(n, w.clone()).unwrap();
        let p = Partition::new(n, vec![vec![0, 3, 5], vec![1, 2], vec![4, 6]]).unwrap();
        let label = |q: usize| p.group_of(q).unwrap();
        let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[i * n + j]).sum()).collect();
        let m2: f64 = k.iter().sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if label(i) == label(j) {
                    q += w[i * n + j] - k[i] * k[j] / m2;
                }
            }
        }
        assert!((modularity(&g, &p).unwrap() - q / m2).abs() < 1e-13);
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 3], vec![1, 2]]).is_err());
        let p = Partition::new(3, vec![vec![2, 1], vec![0]]).unwrap();
        assert_eq!(p.groups(), &[vec![0], vec![1, 2]]);
    }

    proptest! {
        #[test]
        fn partitioners_always_valid(n in 1usize..12, k_raw in 1usize..12, seed in 0u64..1000) {
            let k = 1 + (k_raw - 1) % n;
            let mut w = vec![0.0; n * n];
            let mut x = (seed as f64 * 0.618).fract();
            for i in 0..n {
                for j in (i + 1)..n {
                    x = (x * 9.7 + 0.31).fract();
                    let v = if x < 0.3 { 0.0 } else { x };
                    w[i * n + j] = v;
                    w[j * n + i] = v;
                }
            }
            let g = MIGraph::new(n, w).unwrap();
            for p in [
                naive_partition(n, k).unwrap(),
                node_order_partition(&g, k).unwrap(),
                edge_order_partition(&g, k).unwrap(),
            ] {
                prop_assert_eq!(p.num_qubits(), n);
                prop_assert!(p.check_max_size(k).is_ok());
                prop_assert_eq!(p.groups().iter().map(Vec::len).sum::<usize>(), n);
            }
        }
    }
}
