//! Brute-force reference implementations for the classifier tests.

use qlabel::classify::{Node, Tree, TreeParams};
use qlabel::corpus::{ClassLabel, EmbeddedRecord};

use ClassLabel::{NotQuestion as NQ, Question as Q};

/// Exhaustive scan: sort every training point by (distance, index).
pub fn knn_oracle(train: &[EmbeddedRecord], q: &[f32], k: usize) -> (ClassLabel, f64) {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d2: f64 = r.vector.iter().zip(q).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            (d2, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut votes = [0usize; 2];
    let mut sums = [0f64; 2];
    for &(d2, i) in &all[..k] {
        let c = train[i].class as usize;
        votes[c] += 1;
        sums[c] += d2.sqrt();
    }
    let class = if votes[0] != votes[1] {
        if votes[1] > votes[0] { Q } else { NQ }
    } else if sums[1] / (votes[1] as f64) < sums[0] / (votes[0] as f64) {
        Q
    } else {
        NQ
    };
    (class, votes[class as usize] as f64 / k as f64)
}

pub fn entropy_bits(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    c.iter()
        .filter(|&&x| x > 0)
        .map(|&x| {
            let p = x as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Brute force over every (feature, midpoint), features and thresholds
/// ascending; a later candidate only wins by more than the tie epsilon.
pub fn c45_oracle(data: &[EmbeddedRecord], idx: &[usize], p: &TreeParams) -> Option<(usize, f64)> {
    let dim = data[0].vector.len();
    let count = |ids: &[usize]| {
        let mut c = [0usize; 2];
        ids.iter().for_each(|&i| c[data[i].class as usize] += 1);
        c
    };
    let parent = count(idx);
    let h = entropy_bits(parent);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..dim {
        let mut vals: Vec<f64> = idx.iter().map(|&i| data[i].vector[f] as f64).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data[i].vector[f] as f64 <= t);
            if l.len() < p.min_leaf || r.len() < p.min_leaf {
                continue;
            }
            let n = idx.len() as f64;
            let (nl, nr) = (l.len() as f64, r.len() as f64);
            let gain = h - nl / n * entropy_bits(count(&l)) - nr / n * entropy_bits(count(&r));
            let split_info = -(nl / n) * (nl / n).log2() - (nr / n) * (nr / n).log2();
            if gain < p.min_gain {
                continue;
            }
            let ratio = gain / split_info;
            if best.is_none_or(|(_, _, b)| ratio > b + 1e-12) {
                best = Some((f, t, ratio));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

/// Walk the tree, checking each node against the oracle on the records that reach it.
pub fn check_tree(tree: &Tree, data: &[EmbeddedRecord], p: &TreeParams) -> usize {
    let mut checked = 0;
    let mut stack = vec![(0usize, (0..data.len()).collect::<Vec<_>>())];
    while let Some((at, idx)) = stack.pop() {
        let mut c = [0usize; 2];
        idx.iter().for_each(|&i| c[data[i].class as usize] += 1);
        let can_split = c[0] > 0 && c[1] > 0 && idx.len() >= 2 * p.min_leaf;
        let expected = if can_split { c45_oracle(data, &idx, p) } else { None };
        match &tree.nodes[at] {
            Node::Split { feature, threshold, left, right } => {
                assert_eq!(Some((*feature, *threshold)), expected, "node {at}");
                let (l, r) = idx.iter().partition(|&&i| data[i].vector[*feature] as f64 <= *threshold);
                stack.push((*left, l));
                stack.push((*right, r));
                checked += 1;
            }
            Node::Leaf { counts, class } => {
                assert_eq!(expected, None, "leaf {at} should have split");
                assert_eq!(*counts, [c[0] as u64, c[1] as u64]);
                assert_eq!(*class, if c[1] > c[0] { Q } else { NQ });
            }
        }
    }
    checked
}
