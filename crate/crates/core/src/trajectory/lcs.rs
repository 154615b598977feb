//! Longest common subsequence over history steps (exact pair equality).

/// Length of a longest common subsequence, O(|a|·|b|) time, O(|b|) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// One longest common subsequence of `a` and `b`.
///
/// Among all longest ones, returns the one whose index sequence in `a` is
/// lexicographically smallest, so results are reproducible.
pub fn longest_common_subsequence<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    // suffix table: table[i][j] = |LCS(a[i..], b[j..])|
    let w = m + 1;
    let mut table = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i * w + j] = if a[i] == b[j] {
                table[(i + 1) * w + j + 1] + 1
            } else {
                table[(i + 1) * w + j].max(table[i * w + j + 1])
            };
        }
    }
    let mut out = Vec::with_capacity(table[0] as usize);
    let (mut i, mut j) = (0usize, 0usize);
    let mut remaining = table[0];
    while remaining > 0 {
        // earliest i' whose first occurrence in b[j..] keeps the optimum
        'scan: for ii in i..n {
            for jj in j..m {
                if a[ii] == b[jj] {
                    if table[(ii + 1) * w + jj + 1] + 1 == remaining {
                        out.push(a[ii].clone());
                        i = ii + 1;
                        j = jj + 1;
                        remaining -= 1;
                        break 'scan;
                    }
                    // later occurrences in b cannot do better
                    break;
                }
            }
        }
    }
    out
}

/// True iff `needle` is a (not necessarily contiguous) subsequence of `hay`.
pub fn is_subsequence<T: PartialEq>(needle: &[T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}
