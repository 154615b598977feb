//! Role inference: agglomerative clustering of histories by LCS distance.

use serde::{Deserialize, Serialize};

use super::{MemberKey, TemmError};
use crate::trajectory::{is_subsequence, lcs_len, longest_common_subsequence, History};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRole {
    pub id: String,
    /// Common longest sequence of the members.
    pub cls: History,
    pub members: Vec<MemberKey>,
    /// Roles whose CLS strictly contains this role's CLS.
    pub parents: Vec<String>,
}

/// One agglomeration step. Node ids `0..n` are leaves, `n + k` is the
/// cluster created by merge `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<MemberKey>,
    pub merges: Vec<Merge>,
}

/// `1 - |LCS| / max(|a|, |b|)`; two empty histories are at distance 0.
pub fn lcs_distance(a: &History, b: &History) -> f64 {
    let m = a.len().max(b.len());
    if m == 0 {
        return 0.0;
    }
    1.0 - lcs_len(a.steps(), b.steps()) as f64 / m as f64
}

pub fn distance_matrix(histories: &[&History]) -> Vec<Vec<f64>> {
    let n = histories.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = lcs_distance(histories[i], histories[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Average-linkage agglomerative clustering. Ties merge the pair with the
/// lowest slot indices first.
pub fn average_linkage(dist: &[Vec<f64>]) -> Vec<Merge> {
    let n = dist.len();
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    // slot -> (node id, size) while the slot is active
    let mut slots: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if slots[i].is_none() {
                continue;
            }
            for j in i + 1..n {
                if slots[j].is_none() {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| d[i][j] < b) {
                    best = Some((i, j, d[i][j]));
                }
            }
        }
        let (i, j, dist_ij) = best.expect("at least two active clusters");
        let (ni, si) = slots[i].expect("active");
        let (nj, sj) = slots[j].expect("active");
        for k in 0..n {
            if k == i || k == j || slots[k].is_none() {
                continue;
            }
            let v = (si as f64 * d[i][k] + sj as f64 * d[j][k]) / (si + sj) as f64;
            d[i][k] = v;
            d[k][i] = v;
        }
        slots[i] = Some((n + step, si + sj));
        slots[j] = None;
        merges.push(Merge { left: ni, right: nj, distance: dist_ij, size: si + sj });
    }
    merges
}

/// Flat clusters formed by all merges at distance `<= tau`, as sorted leaf
/// index lists ordered by their smallest leaf.
pub fn cut(n: usize, merges: &[Merge], tau: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n + merges.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, m) in merges.iter().enumerate() {
        if m.distance <= tau {
            let node = n + k;
            let a = find(&mut parent, m.left);
            let b = find(&mut parent, m.right);
            parent[a] = node;
            parent[b] = node;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        groups.entry(root).or_default().push(leaf);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// LCS folded over the histories in the given order.
pub fn fold_cls<'a>(histories: impl IntoIterator<Item = &'a History>) -> History {
    let mut it = histories.into_iter();
    let Some(first) = it.next() else {
        return History::new();
    };
    let mut cls = first.steps().to_vec();
    for h in it {
        if cls.is_empty() {
            break;
        }
        cls = longest_common_subsequence(&cls, h.steps());
    }
    History::from_steps(cls)
}

/// Parent edges by strict CLS containment, transitively reduced. Empty CLSs
/// take no part.
pub fn inheritance(cls: &[&History]) -> Vec<Vec<usize>> {
    let n = cls.len();
    let contains = |p: usize, c: usize| {
        !cls[c].is_empty() && cls[p].len() > cls[c].len() && is_subsequence(cls[c].steps(), cls[p].steps())
    };
    let mut parents = vec![Vec::new(); n];
    for c in 0..n {
        for p in 0..n {
            if p == c || !contains(p, c) {
                continue;
            }
            let via = (0..n).any(|q| q != p && q != c && contains(q, c) && contains(p, q));
            if !via {
                parents[c].push(p);
            }
        }
    }
    parents
}

/// Clusters member histories and derives one implicit role per cluster.
pub fn infer_roles(members: &[(MemberKey, History)], tau_r: f64) -> Result<(Vec<ImplicitRole>, Dendrogram), TemmError> {
    if members.is_empty() {
        return Err(TemmError::EmptyLogs);
    }
    let mut sorted: Vec<&(MemberKey, History)> = members.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let histories: Vec<&History> = sorted.iter().map(|(_, h)| h).collect();
    let merges = average_linkage(&distance_matrix(&histories));
    let clusters = cut(histories.len(), &merges, tau_r);
    let cls: Vec<History> = clusters
        .iter()
        .map(|c| fold_cls(c.iter().map(|&i| histories[i])))
        .collect();
    let parents = inheritance(&cls.iter().collect::<Vec<_>>());
    let roles = clusters
        .iter()
        .zip(cls)
        .enumerate()
        .map(|(k, (c, cls))| ImplicitRole {
            id: role_id(k),
            cls,
            members: c.iter().map(|&i| sorted[i].0.clone()).collect(),
            parents: parents[k].iter().map(|&p| role_id(p)).collect(),
        })
        .collect();
    let dendrogram = Dendrogram {
        leaves: sorted.iter().map(|(k, _)| k.clone()).collect(),
        merges,
    };
    Ok((roles, dendrogram))
}

fn role_id(k: usize) -> String {
    format!("role_{k}")
}
