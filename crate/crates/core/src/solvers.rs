//! Small dense exact solvers shared by the 1-D matching code and the
//! discrete oracles: assignment (shortest augmenting path with potentials),
//! the transportation problem (successive shortest paths), and a two-phase
//! primal simplex for the oracle LPs. All of them are meant for instance
//! sizes in the hundreds, where dense O(n^3)-style methods are exact,
//! simple, and fast enough.

use crate::error::{Error, Result};

/// Minimum-cost perfect matching on a square cost matrix.
/// Returns `row_to_col` and the total cost.
pub(crate) fn assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    assert!(n > 0 && cost.iter().all(|r| r.len() == n));
    // 1-based arrays; p[j] = row matched to column j, 0 when free
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        let mut way = vec![0usize; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
            for j in 0..=n {
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
    let mut row_to_col = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
        total += cost[p[j] - 1][j - 1];
    }
    (row_to_col, total)
}

/// Exact transportation problem: supplies `a`, demands `b` (equal totals),
/// cost through a closure. Returns the support of an optimal plan as
/// `(i, j, mass)` triples plus the optimal value.
///
/// Successive shortest paths with node potentials; Dijkstra stays exact
/// because reduced costs are kept non-negative.
pub(crate) fn transportation(
    a: &[f64],
    b: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<(Vec<(usize, usize, f64)>, f64)> {
    let m = a.len();
    let n = b.len();
    if m == 0 || n == 0 {
        return Err(Error::config("empty marginal in transportation problem"));
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(Error::config(format!("marginal masses differ: {sa} vs {sb}")));
    }
    if a.iter().chain(b.iter()).any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::config("marginal masses must be non-negative and finite"));
    }

    let mut c = vec![vec![0.0f64; n]; m];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = cost(i, j);
            if !e.is_finite() {
                return Err(Error::config("transportation costs must be finite"));
            }
        }
    }

    // uniform cost shift keeps optimal plans unchanged (marginals are fixed)
    // while letting the zero initial potentials satisfy rc >= 0
    let mut shift = 0.0f64;
    let min_c = c.iter().flatten().fold(f64::INFINITY, |acc, &x| acc.min(x));
    if min_c < 0.0 {
        shift = -min_c;
        for row in c.iter_mut() {
            for e in row.iter_mut() {
                *e += shift;
            }
        }
    }

    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    let mut flow = vec![vec![0.0f64; n]; m];
    // node potentials: reduced cost of i -> j is c[i][j] + pi[i] - pi[m+j],
    // kept non-negative throughout so Dijkstra applies
    let nn = m + n;
    let mut pi = vec![0.0f64; nn];

    let scale = sa.max(1.0);
    let tiny = 1e-15 * scale;

    loop {
        let need: f64 = rem_a.iter().sum();
        if need <= tiny {
            break;
        }
        let mut dist = vec![f64::INFINITY; nn];
        let mut prev = vec![usize::MAX; nn];
        let mut done = vec![false; nn];
        for i in 0..m {
            if rem_a[i] > tiny {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for x in 0..nn {
                if !done[x] && dist[x] < bd {
                    bd = dist[x];
                    best = x;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < m {
                let i = best;
                for j in 0..n {
                    let rc = (c[i][j] + pi[i] - pi[m + j]).max(0.0);
                    let nd = dist[i] + rc;
                    if nd < dist[m + j] {
                        dist[m + j] = nd;
                        prev[m + j] = i;
                    }
                }
            } else {
                let j = best - m;
                for i in 0..m {
                    if flow[i][j] > tiny {
                        let rc = (-c[i][j] + pi[m + j] - pi[i]).max(0.0);
                        let nd = dist[m + j] + rc;
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = m + j;
                        }
                    }
                }
            }
        }
        // closest demand with residual
        let mut tj = usize::MAX;
        let mut td = f64::INFINITY;
        for j in 0..n {
            if rem_b[j] > tiny && dist[m + j] < td {
                td = dist[m + j];
                tj = j;
            }
        }
        if tj == usize::MAX {
            // residual dust: snapping can strand mass below tiny per node,
            // which is immaterial to the reported plan
            if need <= 16.0 * nn as f64 * tiny {
                break;
            }
            return Err(Error::internal("transportation: no augmenting path"));
        }
        for x in 0..nn {
            if dist[x].is_finite() {
                pi[x] += dist[x].min(td);
            } else {
                pi[x] += td;
            }
        }
        // trace path, find bottleneck
        let mut path = Vec::new();
        let mut cur = m + tj;
        while prev[cur] != usize::MAX {
            let pr = prev[cur];
            path.push((pr, cur));
            cur = pr;
        }
        path.reverse();
        let src = cur;
        let mut bottleneck = rem_a[src].min(rem_b[tj]);
        for &(x, y) in &path {
            if x >= m {
                // backward arc (demand -> supply) limited by existing flow
                bottleneck = bottleneck.min(flow[y][x - m]);
            }
        }
        if bottleneck <= tiny {
            return Err(Error::internal("transportation: degenerate augmentation"));
        }
        for &(x, y) in &path {
            if x < m {
                flow[x][y - m] += bottleneck;
            } else {
                flow[y][x - m] -= bottleneck;
            }
        }
        rem_a[src] -= bottleneck;
        rem_b[tj] -= bottleneck;
        if rem_a[src] < tiny {
            rem_a[src] = 0.0;
        }
        if rem_b[tj] < tiny {
            rem_b[tj] = 0.0;
        }
    }

    let mut plan = Vec::new();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            if flow[i][j] > tiny {
                plan.push((i, j, flow[i][j]));
                total += flow[i][j] * (c[i][j] - shift);
            }
        }
    }
    Ok((plan, total))
}

/// `min c.x  s.t.  A x = rhs, x >= 0` by two-phase dense simplex with
/// Bland's rule. Returns an optimal vertex and the objective value.
pub(crate) fn solve_lp(a: &[Vec<f64>], rhs: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
    const EPS: f64 = 1e-10;
    let m = a.len();
    let n = c.len();
    if rhs.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::config("lp shape mismatch"));
    }

    // tableau with artificial basis: columns = n original + m artificial + rhs
    let width = n + m + 1;
    let mut t = vec![vec![0.0f64; width]; m];
    for i in 0..m {
        let flip = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = flip * rhs[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, row: usize, col: usize| {
        let pv = t[row][col];
        for e in t[row].iter_mut() {
            *e /= pv;
        }
        for i in 0..t.len() {
            if i != row && t[i][col].abs() > 0.0 {
                let f = t[i][col];
                for j in 0..width {
                    t[i][j] -= f * t[row][j];
                }
                t[i][col] = 0.0;
            }
        }
        basis[row] = col;
    };

    // runs simplex iterations for the given objective row; Bland's rule
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &mut Vec<f64>, cols: usize| -> Result<()> {
        for _ in 0..200_000 {
            let mut col = usize::MAX;
            for j in 0..cols {
                if obj[j] < -EPS {
                    col = j;
                    break;
                }
            }
            if col == usize::MAX {
                return Ok(());
            }
            let mut row = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..t.len() {
                if t[i][col] > EPS {
                    let ratio = t[i][width - 1] / t[i][col];
                    if ratio < best - EPS || (ratio < best + EPS && (row == usize::MAX || basis[i] < basis[row])) {
                        best = ratio;
                        row = i;
                    }
                }
            }
            if row == usize::MAX {
                return Err(Error::internal("lp unbounded"));
            }
            pivot(t, basis, row, col);
            let f = obj[col];
            for j in 0..width {
                obj[j] -= f * t[row][j];
            }
            obj[col] = 0.0;
        }
        Err(Error::internal("simplex iteration limit"))
    };

    // phase 1: minimize sum of artificials
    let mut obj = vec![0.0f64; width];
    for j in n..n + m {
        obj[j] = 1.0;
    }
    for i in 0..m {
        // make reduced costs consistent with the artificial basis
        for j in 0..width {
            obj[j] -= t[i][j];
        }
    }
    for j in n..n + m {
        obj[j] = 0.0;
    }
    run(&mut t, &mut basis, &mut obj, n)?;
    let phase1 = -obj[width - 1];
    if phase1 > 1e-7 {
        return Err(Error::internal(format!("lp infeasible (phase-1 value {phase1:.3e})")));
    }
    // drive leftover artificials out of the basis where possible
    for i in 0..m {
        if basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| t[i][j].abs() > EPS) {
                pivot(&mut t, &mut basis, i, col);
            }
        }
    }

    // phase 2
    let mut obj = vec![0.0f64; width];
    obj[..n].copy_from_slice(c);
    for i in 0..m {
        if basis[i] < n {
            let f = obj[basis[i]];
            if f.abs() > 0.0 {
                for j in 0..width {
                    obj[j] -= f * t[i][j];
                }
                obj[basis[i]] = 0.0;
            }
        }
    }
    run(&mut t, &mut basis, &mut obj, n)?;

    let mut x = vec![0.0f64; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1].max(0.0);
        }
    }
    let val = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok((x, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_small() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let (asg, total) = assignment(&cost);
        assert_eq!(total, 5.0);
        assert_eq!(asg, vec![1, 0, 2]);
    }

    #[test]
    fn assignment_vs_brute_force() {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for i in 0..n {
                    let mut q: Vec<usize> = p.iter().map(|&x| if x >= i { x + 1 } else { x }).collect();
                    q.insert(0, i);
                    out.push(q);
                }
            }
            out
        }
        let mut rng = crate::rng::RngStream::new(17, 0);
        for _ in 0..30 {
            let n = 2 + rng.index(4);
            let cost: Vec<Vec<f64>> =
                (0..n).map(|_| (0..n).map(|_| rng.unit() * 10.0).collect()).collect();
            let best = perms(n)
                .into_iter()
                .map(|p| (0..n).map(|i| cost[i][p[i]]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let (_, total) = assignment(&cost);
            assert!((total - best).abs() < 1e-9, "n={n} {total} vs {best}");
        }
    }

    #[test]
    fn transportation_mass_split() {
        // one supplier forced to split across two demands
        let (plan, total) =
            transportation(&[1.0], &[0.25, 0.75], |_, j| if j == 0 { 1.0 } else { 3.0 }).unwrap();
        assert_eq!(plan.len(), 2);
        assert!((total - (0.25 + 2.25)).abs() < 1e-12);
    }

    #[test]
    fn transportation_vs_lp() {
        let mut rng = crate::rng::RngStream::new(23, 0);
        for _ in 0..20 {
            let m = 2 + rng.index(3);
            let n = 2 + rng.index(3);
            let mut a: Vec<f64> = (0..m).map(|_| rng.unit() + 0.1).collect();
            let sa: f64 = a.iter().sum();
            for x in &mut a {
                *x /= sa;
            }
            let mut b: Vec<f64> = (0..n).map(|_| rng.unit() + 0.1).collect();
            let sb: f64 = b.iter().sum();
            for x in &mut b {
                *x /= sb;
            }
            let cost: Vec<Vec<f64>> =
                (0..m).map(|_| (0..n).map(|_| rng.unit() * 5.0).collect()).collect();

            let (plan, total) = transportation(&a, &b, |i, j| cost[i][j]).unwrap();
            // marginals respected
            for i in 0..m {
                let s: f64 = plan.iter().filter(|p| p.0 == i).map(|p| p.2).sum();
                assert!((s - a[i]).abs() < 1e-9);
            }
            for j in 0..n {
                let s: f64 = plan.iter().filter(|p| p.1 == j).map(|p| p.2).sum();
                assert!((s - b[j]).abs() < 1e-9);
            }

            // same value through the simplex
            let nv = m * n;
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for i in 0..m {
                let mut r = vec![0.0; nv];
                for j in 0..n {
                    r[i * n + j] = 1.0;
                }
                rows.push(r);
                rhs.push(a[i]);
            }
            for j in 0..n {
                let mut r = vec![0.0; nv];
                for i in 0..m {
                    r[i * n + j] = 1.0;
                }
                rows.push(r);
                rhs.push(b[j]);
            }
            let c: Vec<f64> = (0..nv).map(|x| cost[x / n][x % n]).collect();
            let (_, lp_val) = solve_lp(&rows, &rhs, &c).unwrap();
            assert!((total - lp_val).abs() < 1e-8, "{total} vs {lp_val}");
        }
    }

    #[test]
    fn lp_basic() {
        // min -x1 - x2 s.t. x1 + x2 + s = 1 -> optimum -1
        let a = vec![vec![1.0, 1.0, 1.0]];
        let (x, v) = solve_lp(&a, &[1.0], &[-1.0, -1.0, 0.0]).unwrap();
        assert!((v + 1.0).abs() < 1e-9);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-9);
    }
}
