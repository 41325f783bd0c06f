//! Naive reference implementations. Each one is written from the definition
//! and shares no code with the library.

#![allow(dead_code)]

use chrono::NaiveDate;

/// ‖Ax − b‖² with `a` row-major.
pub fn ls_objective(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(row, bi)| {
            let r: f64 = row.iter().zip(x).map(|(aij, xj)| aij * xj).sum::<f64>() - bi;
            r * r
        })
        .sum()
}

/// Unconstrained least squares restricted to `cols`, via the normal equations
/// and Gauss-Jordan elimination with partial pivoting. Dependent columns get 0.
pub fn ls_on_columns(a: &[Vec<f64>], b: &[f64], cols: &[usize]) -> Vec<f64> {
    let p = a.first().map_or(0, Vec::len);
    let q = cols.len();
    let mut m = vec![vec![0.0; q + 1]; q];
    for (r, &ci) in cols.iter().enumerate() {
        for (c, &cj) in cols.iter().enumerate() {
            m[r][c] = a.iter().map(|row| row[ci] * row[cj]).sum();
        }
        m[r][q] = a.iter().zip(b).map(|(row, bi)| row[ci] * bi).sum();
    }
    let scale = (0..q).map(|i| m[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut pivot_of_col = vec![None; q];
    let mut row = 0;
    for col in 0..q {
        let best = (row..q).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()));
        let Some(best) = best else { break };
        if m[best][col].abs() <= 1e-11 * scale {
            continue;
        }
        m.swap(row, best);
        let piv = m[row][col];
        for v in m[row].iter_mut() {
            *v /= piv;
        }
        let pivot_row = m[row].clone();
        for (i, r) in m.iter_mut().enumerate() {
            let f = r[col];
            if i != row && f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        pivot_of_col[col] = Some(row);
        row += 1;
    }
    let mut x = vec![0.0; p];
    for (k, &c) in cols.iter().enumerate() {
        if let Some(r) = pivot_of_col[k] {
            x[c] = m[r][q];
        }
    }
    x
}

/// Global NNLS minimum by trying every support set. Returns (x, objective).
pub fn nnls_by_enumeration(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, f64) {
    let p = a.first().map_or(0, Vec::len);
    let mut best = (vec![0.0; p], ls_objective(a, b, &vec![0.0; p]));
    for mask in 1u32..(1 << p) {
        let cols: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let mut x = ls_on_columns(a, b, &cols);
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        for v in &mut x {
            *v = v.max(0.0);
        }
        let obj = ls_objective(a, b, &x);
        if obj < best.1 {
            best = (x, obj);
        }
    }
    best
}

/// Rank-bin labels for (year, value) pairs, in input order. Average ranks
/// come from counting; bins are computed with exact integer arithmetic.
pub fn rank_labels(items: &[(i32, f64)], bins: usize) -> Vec<f64> {
    items
        .iter()
        .map(|&(year, v)| {
            let peers: Vec<f64> = items.iter().filter(|(y, _)| *y == year).map(|(_, w)| *w).collect();
            let n = peers.len();
            if n == 1 {
                return 0.5;
            }
            let less = peers.iter().filter(|&&w| w < v).count();
            let equal = peers.iter().filter(|&&w| w == v).count();
            // twice the average 1-based rank
            let twice_rank = 2 * less + equal + 1;
            let b = ((twice_rank - 2) * bins / (2 * (n - 1))).min(bins - 1);
            b as f64 / (bins - 1) as f64
        })
        .collect()
}

/// Identity of an indexed vector for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RefKey {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub chunk_index: usize,
}

/// Cosine top-k by computing every similarity and sorting the full list.
pub fn top_k_full_sort(items: &[(RefKey, Vec<f32>)], query: &[f32], k: usize) -> Vec<(RefKey, f64)> {
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut all: Vec<(RefKey, f64)> = items
        .iter()
        .map(|(key, v)| {
            let dot: f64 = v.iter().zip(query).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (key.clone(), dot / (norm(v) * qn))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Linear-interpolation percentile using a selection sort.
pub fn percentile_linear(values: &[f64], p: f64) -> f64 {
    let mut rest = values.to_vec();
    let mut sorted = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let (i, _) = rest
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        sorted.push(rest.swap_remove(i));
    }
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// The `n`-th calendar entry strictly after `date`.
pub fn nth_trading_day_after(calendar: &[NaiveDate], date: NaiveDate, n: usize) -> Option<NaiveDate> {
    calendar.iter().filter(|d| **d > date).nth(n - 1).copied()
}

/// The `n`-th calendar entry strictly before `date`.
pub fn nth_trading_day_before(calendar: &[NaiveDate], date: NaiveDate, n: usize) -> Option<NaiveDate> {
    calendar.iter().rev().filter(|d| **d < date).nth(n - 1).copied()
}
