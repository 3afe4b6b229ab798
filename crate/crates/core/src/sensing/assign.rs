//! Maximum-weight injective row → column assignment.

/// Exact assignment (Hungarian method with potentials), `rows ≤ cols`.
/// `w` is row-major. Returns the column of each row.
pub fn hungarian_max(w: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "assignment needs rows ≤ cols");
    assert_eq!(w.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    // minimise −w; 1-based arrays with a virtual column 0
    let cost = |i: usize, j: usize| -w[(i - 1) * cols + (j - 1)];
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Greedy assignment: take entries in decreasing weight, lowest
/// (row, column) first on ties, skipping taken rows and columns.
pub fn greedy_max(w: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols);
    let mut idx: Vec<usize> = (0..rows * cols).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut out = vec![usize::MAX; rows];
    let mut col_taken = vec![false; cols];
    let mut left = rows;
    for e in idx {
        if left == 0 {
            break;
        }
        let (r, c) = (e / cols, e % cols);
        if out[r] == usize::MAX && !col_taken[c] {
            out[r] = c;
            col_taken[c] = true;
            left -= 1;
        }
    }
    out
}

pub fn assignment_weight(w: &[f64], cols: usize, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(r, &c)| w[r * cols + c]).sum()
}

/// Every injective map from `rows` into `cols`; for oracles on tiny sizes.
pub fn injections(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    fn rec(rows: usize, cols: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == rows {
            out.push(cur.clone());
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                rec(rows, cols, cur, used, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(rows, cols, &mut Vec::new(), &mut vec![false; cols], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..200 {
            let rows = 1 + trial % 6;
            let cols = rows + rng.random_range(0..2);
            let w: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
            let a = hungarian_max(&w, rows, cols);
            let best = injections(rows, cols).iter().map(|p| assignment_weight(&w, cols, p)).fold(f64::MIN, f64::max);
            assert!((assignment_weight(&w, cols, &a) - best).abs() < 1e-12);
            let mut seen = a.clone();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), rows);
        }
    }

    #[test]
    fn identity_dominant_and_ties() {
        let n = 5;
        let w: Vec<f64> = (0..n * n).map(|e| if e / n == e % n { 0.9 } else { 0.02 }).collect();
        assert_eq!(hungarian_max(&w, n, n), vec![0, 1, 2, 3, 4]);
        assert_eq!(greedy_max(&w, n, n), vec![0, 1, 2, 3, 4]);
        let u = vec![0.2; n * n];
        assert_eq!(greedy_max(&u, n, n), vec![0, 1, 2, 3, 4]);
        let h = hungarian_max(&u, n, n);
        assert_eq!(h, hungarian_max(&u, n, n));
        let mut s = h.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }
}
