//! Brute-force reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Every `k`-subset of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Optimal value of `min ||e||_1 s.t. M e = b` for full-row-rank `M`, by
/// enumerating every square basis: an optimal vertex has at most `r` nonzeros
/// on linearly independent columns.
pub fn l1_oracle(m: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let (r, c) = m.shape();
    let mut best = f64::INFINITY;
    for cols in combinations(c, r) {
        let sub = m.select_columns(&cols);
        let lu = sub.clone().lu();
        let det = lu.determinant();
        if det.abs() <= 1e-10 * sub.norm().powi(r as i32).max(1e-300) {
            continue;
        }
        if let Some(x) = lu.solve(b) {
            best = best.min(x.lp_norm(1));
        }
    }
    best
}

/// State recovered by exhaustive search over per-step attack supports of
/// size `q`. Returns `None` when no support explains the data, and
/// `Some(Err(()))` when consistent supports disagree on the state.
pub fn l0_state_oracle(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    p: usize,
    window: usize,
    q: usize,
) -> Option<Result<DVector<f64>, ()>> {
    let per_step = combinations(p, q);
    let n = phi.ncols();
    let mut found: Option<DVector<f64>> = None;
    let mut choice = vec![0usize; window];
    loop {
        let clean: Vec<usize> = (0..window)
            .flat_map(|k| {
                let chosen = &per_step[choice[k]];
                (0..p)
                    .filter(move |j| !chosen.contains(j))
                    .map(move |j| k * p + j)
            })
            .collect();
        if clean.len() >= n {
            let a = phi.select_rows(&clean);
            let z = y.select_rows(&clean);
            let svd = a.clone().svd(true, true);
            if svd.singular_values.min() > 1e-9 * svd.singular_values.max() {
                let x = svd.solve(&z, 0.0).expect("full rank");
                if (&a * &x - &z).norm() <= 1e-9 * (1.0 + z.norm()) {
                    match &found {
                        None => found = Some(x),
                        Some(prev) if (prev - &x).norm() > 1e-6 * (1.0 + prev.norm()) => {
                            return Some(Err(()))
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        // Odometer over the per-step choices.
        let mut k = 0;
        loop {
            if k == window {
                return found.map(Ok);
            }
            choice[k] += 1;
            if choice[k] < per_step.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Minimum certified window by enumerating every subset of the supports.
pub fn window_oracle(supports: &[usize], q: usize, p: usize, n: usize) -> Option<usize> {
    let s_min = *supports.iter().min()?;
    if s_min <= 2 * q {
        return None;
    }
    let mut t_star = n;
    for m in 2..=n {
        // Largest ratio over all m-subsets, kept as an exact fraction.
        let mut best: Option<(usize, usize)> = None;
        for subset in combinations(n, m) {
            let vals: Vec<usize> = subset.iter().map(|&i| supports[i]).collect();
            let lo = *vals.iter().min().unwrap();
            let hi = *vals.iter().max().unwrap();
            let (num, den) = ((m - 2) * p + lo, hi - 2 * q);
            if best.is_none_or(|(bn, bd)| num * bd > bn * den) {
                best = Some((num, den));
            }
        }
        let (num, den) = best.unwrap();
        t_star = t_star.max(num / den + 1);
    }
    Some(t_star)
}
