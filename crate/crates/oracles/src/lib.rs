//! Brute-force and analytic reference implementations.
//!
//! Nothing here is fast or clever on purpose: each function is the most
//! direct transcription of a definition, used to check the optimised code
//! paths in `evotraj`. Only the test suites depend on this crate.

/// `a` dominates `b` under minimisation.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Non-domination fronts by repeated peeling: every round removes the
/// points not dominated by any remaining point. Each front is sorted.
pub fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Central finite differences of `f` at `x`.
pub fn finite_difference_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions,
/// computed by counting rather than sorting.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman's rho as the Pearson correlation of mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    pearson(&mid_ranks(x), &mid_ranks(y))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact two-sided permutation p-value of Spearman's rho: the fraction of
/// the `n!` reorderings of `y` whose |rho| is at least the observed |rho|.
pub fn permutation_spearman_p(x: &[f64], y: &[f64]) -> f64 {
    assert!(
        x.len() == y.len() && x.len() <= 8,
        "exhaustive oracle limited to n <= 8"
    );
    let observed = spearman_rho(x, y).abs();
    let perms = permutations(y.len());
    let extreme = perms
        .iter()
        .filter(|p| {
            let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
            spearman_rho(x, &yp).abs() >= observed - 1e-12
        })
        .count();
    extreme as f64 / perms.len() as f64
}

/// Crowding distance straight from the definition, for fronts of any size.
pub fn crowding_distance(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut d = vec![0.0; n];
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a][k].partial_cmp(&front[b][k]).unwrap().then(a.cmp(&b)));
        let lo = front[order[0]][k];
        let hi = front[order[n - 1]][k];
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n - 1 {
                d[order[w]] += (front[order[w + 1]][k] - front[order[w - 1]][k]) / (hi - lo);
            }
        }
    }
    d
}

/// Hypervolume dominated by a 2-objective point set relative to `reference`
/// (minimisation), by slicing along the first objective.
pub fn hypervolume_2d(points: &[[f64; 2]], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .copied()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    let mut stair: Vec<[f64; 2]> = Vec::new();
    for p in pts {
        if stair.last().map_or(true, |q| p[1] < q[1]) {
            stair.push(p);
        }
    }
    let mut hv = 0.0;
    for (i, p) in stair.iter().enumerate() {
        let right = stair.get(i + 1).map_or(reference[0], |q| q[0]);
        hv += (right - p[0]) * (reference[1] - p[1]);
    }
    hv
}

/// ZDT1 objectives for decision vector `x` in `[0, 1]^n`.
pub fn zdt1(x: &[f64]) -> [f64; 2] {
    let f1 = x[0];
    let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
    [f1, g * (1.0 - (f1 / g).sqrt())]
}

/// Hypervolume of the analytic ZDT1 front `f2 = 1 - sqrt(f1)` w.r.t.
/// `(r1, r2)` with `r1 >= 1`, `r2 >= 1`: the integral of
/// `r2 - (1 - sqrt(f1))` over `[0, 1]` plus the strip `[1, r1] × [0, r2]`.
pub fn zdt1_front_hypervolume(reference: [f64; 2]) -> f64 {
    (reference[1] - 1.0 + 2.0 / 3.0) + (reference[0] - 1.0) * reference[1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fronts_basic() {
        assert_eq!(brute_force_fronts(&[vec![1.0, 1.0]]), vec![vec![0]]);
        let chain: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, i as f64]).collect();
        assert_eq!(brute_force_fronts(&chain).len(), 4);
    }

    #[test]
    fn finite_differences() {
        let g = finite_difference_grad(|w| w[0] * w[0], &[3.0], 1e-4);
        assert!((g[0] - 6.0).abs() < 1e-4);
        let g = finite_difference_grad(|w| w[0].sin(), &[0.0], 1e-4);
        assert!((g[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn permutation_p_monotone_five() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let p = permutation_spearman_p(&x, &x);
        assert!((p - 2.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_p_null_centre() {
        // rho = 0 exactly: every permutation is at least as extreme.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 5.0, 3.0, 1.0, 4.0];
        assert!(spearman_rho(&x, &y).abs() < 1e-12);
        assert!((permutation_spearman_p(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mid_ranks_ties() {
        assert_eq!(mid_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn hypervolume_staircase() {
        let hv = hypervolume_2d(&[[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]], [1.1, 1.1]);
        // Slabs [0, 0.5) x 0.1, [0.5, 1.0) x 0.6 and [1.0, 1.1) x 1.1.
        assert!((hv - (0.05 + 0.30 + 0.11)).abs() < 1e-12);
        assert!((zdt1_front_hypervolume([1.1, 1.1]) - (0.1 + 2.0 / 3.0 + 0.11)).abs() < 1e-12);
    }
}
