#![allow(dead_code)]

use hetrisk::hierarchy::{IndustryHierarchy, Membership};
use hetrisk::inverse::DENSE_RATIO;
use hetrisk::{FactorModel, ReturnsPanel};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Returns with a common factor, a few random factors and per-ticker
/// volatilities spread over an order of magnitude.
pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, obs: usize) -> ReturnsPanel {
    let k = 3.min(obs);
    let load = normal_matrix(rng, n, k);
    let f = normal_matrix(rng, k, obs);
    let noise = normal_matrix(rng, n, obs);
    let mut x = &load * f * 0.7 + noise;
    for (i, mut row) in x.row_iter_mut().enumerate() {
        let vol = 0.005 * (1.0 + 9.0 * ((i * 7919) % 97) as f64 / 97.0);
        row *= vol;
    }
    ReturnsPanel::from_matrix(x).unwrap()
}

/// Assignment of `items` items to `count` clusters with every cluster
/// nonempty.
pub fn random_assignment(rng: &mut ChaCha8Rng, items: usize, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items).collect();
    order.shuffle(rng);
    let mut parent = vec![0; items];
    for (pos, &x) in order.iter().enumerate() {
        parent[x] = if pos < count {
            pos
        } else {
            rng.random_range(0..count)
        };
    }
    parent
}

/// Random 3-level hierarchy. With `force_singleton`, at least one
/// sub-industry has a single ticker; without it, none do.
pub fn random_hierarchy(
    rng: &mut ChaCha8Rng,
    tickers: &[String],
    force_singleton: bool,
    max_top: usize,
) -> IndustryHierarchy {
    let n = tickers.len();
    let level0 = if force_singleton {
        let k = rng.random_range(2..=n);
        let mut parent = random_assignment(rng, n - 1, k - 1);
        parent.push(k - 1);
        parent.shuffle(rng);
        (parent, k)
    } else {
        let k = rng.random_range(1..=(n / 2).max(1));
        loop {
            let parent = random_assignment(rng, n, k);
            let mut sizes = vec![0; k];
            parent.iter().for_each(|&p| sizes[p] += 1);
            if sizes.iter().all(|&s| s >= 2) {
                break (parent, k);
            }
        }
    };
    let k = level0.1;
    let f = rng.random_range(1..=k);
    let l = rng.random_range(1..=f.min(max_top));
    let levels = vec![
        Membership::new(level0.0, k, 0).unwrap(),
        Membership::new(random_assignment(rng, k, f), f, 1).unwrap(),
        Membership::new(random_assignment(rng, f, l), l, 2).unwrap(),
    ];
    IndustryHierarchy::from_memberships(
        tickers.to_vec(),
        vec!["sub_industry".into(), "industry".into(), "sector".into()],
        levels,
    )
    .unwrap()
}

pub fn max_rel_diag_error(gamma: &DMatrix<f64>, panel: &ReturnsPanel) -> f64 {
    let cov = hetrisk::stats::sample_covariance(panel).unwrap();
    (0..gamma.nrows())
        .map(|i| (gamma[(i, i)] - cov.variances[i]).abs() / cov.variances[i])
        .fold(0.0, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn inverse_residual(gamma: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let n = gamma.nrows();
    let r = gamma * inv - DMatrix::<f64>::identity(n, n);
    (0..n)
        .map(|i| r.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖Γ‖∞ ‖Γ⁻¹‖∞` with a dense inverse.
pub fn inf_condition(gamma: &DMatrix<f64>) -> f64 {
    let norm = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    norm(gamma) * norm(&gamma.clone().try_inverse().expect("singular matrix"))
}

/// Error scale of a computed inverse of `model.cov_mat`: `N ε κ∞(Γ)`,
/// amplified by `Γ_ii / ξ_i²` when the factor-form identity was used.
pub fn inverse_error_scale(model: &FactorModel) -> f64 {
    let g = &model.cov_mat;
    let n = g.nrows();
    let ratio = (0..n)
        .map(|i| model.spec_risk[i].powi(2) / g[(i, i)])
        .fold(f64::INFINITY, f64::min);
    let amplification = if ratio < DENSE_RATIO {
        1.0
    } else {
        1.0 / ratio.min(1.0)
    };
    n as f64 * f64::EPSILON * inf_condition(g) * amplification
}

/// Panel whose sample correlation equals `target` up to round-off. Needs
/// `obs > target.nrows()`.
pub fn panel_with_correlation(
    rng: &mut ChaCha8Rng,
    target: &DMatrix<f64>,
    obs: usize,
) -> ReturnsPanel {
    let n = target.nrows();
    assert!(obs > n);
    // Rows orthonormal and orthogonal to the constant vector.
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_element(obs, 1.0 / (obs as f64).sqrt())];
    while basis.len() < n + 1 {
        let mut v = normal_vector(rng, obs);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        basis.push(v / norm);
    }
    let e = DMatrix::from_fn(n, obs, |i, s| basis[i + 1][s]);
    let l = target
        .clone()
        .cholesky()
        .expect("target must be positive definite")
        .l();
    let vols = DVector::from_fn(n, |i, _| 0.01 * (1.0 + i as f64));
    let mut x = l * e;
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row *= vols[i];
    }
    ReturnsPanel::from_matrix(x).unwrap()
}

/// Random symmetric positive definite matrix with a spread of eigenvalues.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, n, n + 2);
    let mut m = &a * a.transpose() / (n + 2) as f64;
    for i in 0..n {
        m[(i, i)] += 0.05 + 0.5 * i as f64 / n as f64;
    }
    m
}

/// Dollar-neutral Sharpe weights from the bordered KKT system
/// `[Γ 1; 1ᵀ 0][x; ν] = [E; 0]`, `w = -x / Σ|x|`.
pub fn unbounded_kkt_oracle(gamma: &DMatrix<f64>, e: &DVector<f64>) -> DVector<f64> {
    let n = e.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(gamma);
    for i in 0..n {
        m[(i, n)] = 1.0;
        m[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(e);
    let sol = m.lu().solve(&rhs).unwrap();
    let x = sol.rows(0, n).into_owned();
    let gross: f64 = x.iter().map(|v| v.abs()).sum();
    -x / gross
}

/// Solution of `min ½ wᵀΓw - aᵀw, Yᵀw = 0, lower <= w <= upper` for a
/// given active pattern (`-1` lower, `0` free, `1` upper), if the pattern
/// satisfies all KKT conditions.
fn pattern_solution(
    gamma: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a: &DVector<f64>,
    upper: &DVector<f64>,
    lower: &DVector<f64>,
    pattern: &[i8],
) -> Option<DVector<f64>> {
    let n = a.len();
    let p = y.ncols();
    let pinned: Vec<usize> = (0..n).filter(|&i| pattern[i] != 0).collect();
    let k = pinned.len();
    let dim = n + p + k;
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (n, n)).copy_from(gamma);
    m.view_mut((0, n), (n, p)).copy_from(y);
    m.view_mut((n, 0), (p, n)).copy_from(&y.transpose());
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(a);
    for (r, &i) in pinned.iter().enumerate() {
        m[(i, n + p + r)] = 1.0;
        m[(n + p + r, i)] = 1.0;
        rhs[n + p + r] = if pattern[i] > 0 { upper[i] } else { lower[i] };
    }
    let sol = m.clone().lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // Reject inconsistent patterns that LU solves only approximately.
    // Stationarity rows scale with the alpha, feasibility rows do not.
    let resid = &m * &sol - &rhs;
    if resid.rows(0, n).amax() > 1e-9 * (1.0 + a.amax())
        || resid.rows(n, p + k).amax() > 1e-12 * (1.0 + sol.amax())
    {
        return None;
    }
    let w = sol.rows(0, n).into_owned();
    let scale = 1e-9 * (1.0 + a.amax());
    for i in 0..n {
        if pattern[i] == 0 && (w[i] > upper[i] + 1e-12 || w[i] < lower[i] - 1e-12) {
            return None;
        }
    }
    for (r, &i) in pinned.iter().enumerate() {
        // Stationarity Γw - a + Yv + μ = 0 with μ >= 0 at upper bounds and
        // μ <= 0 at lower bounds.
        let mu = sol[n + p + r];
        if upper[i] != lower[i]
            && ((pattern[i] > 0 && mu < -scale) || (pattern[i] < 0 && mu > scale))
        {
            return None;
        }
    }
    Some(w)
}

/// Exhaustive active-set oracle for the bounded problem at alpha scale `a`.
/// `hint` is tried first and updated to the winning pattern.
pub fn bounded_qp_oracle(
    gamma: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a: &DVector<f64>,
    upper: &DVector<f64>,
    lower: &DVector<f64>,
    hint: &mut Vec<i8>,
) -> Option<DVector<f64>> {
    let n = a.len();
    if hint.len() == n {
        if let Some(w) = pattern_solution(gamma, y, a, upper, lower, hint) {
            return Some(w);
        }
    }
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let pattern: Vec<i8> = (0..n)
            .map(|_| {
                let d = (c % 3) as i8 - 1;
                c /= 3;
                d
            })
            .collect();
        if let Some(w) = pattern_solution(gamma, y, a, upper, lower, &pattern) {
            *hint = pattern;
            return Some(w);
        }
    }
    None
}

/// Bounded Sharpe weights with `Σ|w| = 1`: the QP oracle for alpha
/// `-c E`, with the scale c found by bisection. `None` if gross 1 is not
/// reachable.
pub fn bounded_sharpe_oracle(
    gamma: &DMatrix<f64>,
    y: &DMatrix<f64>,
    e: &DVector<f64>,
    upper: &DVector<f64>,
    lower: &DVector<f64>,
) -> Option<DVector<f64>> {
    let mut hint = Vec::new();
    let gross = |c: f64, hint: &mut Vec<i8>| {
        let w = bounded_qp_oracle(gamma, y, &(-e * c), upper, lower, hint)
            .unwrap_or_else(|| panic!("no KKT pattern at scale {c}"));
        let g: f64 = w.iter().map(|v| v.abs()).sum();
        (w, g)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let (_, g) = gross(hi, &mut hint);
        if g >= 1.0 {
            break;
        }
        lo = hi;
        hi *= 4.0;
        if hi > 1e5 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (w, g) = gross(mid, &mut hint);
        if (g - 1.0).abs() < 1e-13 {
            return Some(w);
        }
        if g < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(gross(0.5 * (lo + hi), &mut hint).0)
}
