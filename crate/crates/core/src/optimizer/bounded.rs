//! Sharpe-ratio optimization with homogeneous linear constraints and
//! per-name position bounds.
//!
//! For a fixed alpha `a` the weights solve
//!
//! ```text
//! min ½ wᵀ Γ w - aᵀ w   subject to   Yᵀ w = 0,  lower <= w <= upper
//! ```
//!
//! and an outer loop rescales `a` until `Σ|w| = 1`. The starting scale
//! comes from the unbounded constrained solution. The inner problem is solved
//! by an active-set iteration that starts at `w = 0`, solves the
//! equality-constrained problem with the pinned coordinates held at their
//! bounds, and steps towards that solution up to the first bound hit.
//!
//! Two inner steps are available. [`InnerStep::Reference`] reproduces the
//! classic iteration literally: the free coordinates are solved with
//! `(Y_Fᵀ (GY)_F) v = Y_Fᵀ (Ga)_F + Y_Pᵀ b_P`, every coordinate within `tol`
//! of a bound is pinned, pins are never released, and the loop stops as soon
//! as the pinned sets repeat. For a diagonal `G = Γ⁻¹` this is exact. For a
//! general `G` it ignores the coupling between pinned and free coordinates
//! and can stop at a point that is not optimal. [`InnerStep::Exact`] solves
//! the KKT system with the pinned coordinates as equality constraints and
//! releases pins whose multipliers have the wrong sign, which yields the
//! exact optimum for any positive definite `G`.

use nalgebra::{DMatrix, DVector};

use super::linalg::solve_psd_dropping;
use super::{
    check_square, constrained_projection, AlphaVector, ConstraintSet, HoldingsVector,
    ZERO_ALPHA_TOL,
};
use crate::error::{Error, Result};

/// Pivot tolerance when dropping dependent constraint columns.
const DROP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStep {
    Exact,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterUpdate {
    /// Safeguarded secant iteration on the alpha scale.
    Secant,
    /// Divide the alpha by the current gross weight.
    Rescale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedOptions {
    /// Required accuracy of `Σ|w| = 1`.
    pub prec: f64,
    /// Distance to a bound below which the reference step pins a coordinate.
    pub tol: f64,
    pub max_outer: usize,
    /// Inner iteration cap; `None` means `20 N + 100`.
    pub max_inner: Option<usize>,
    pub step: InnerStep,
    pub outer: OuterUpdate,
}

impl Default for BoundedOptions {
    fn default() -> Self {
        Self {
            prec: 1e-5,
            tol: 1e-6,
            max_outer: 100,
            max_inner: None,
            step: InnerStep::Exact,
            outer: OuterUpdate::Secant,
        }
    }
}

impl BoundedOptions {
    /// The classic iteration: reference inner step, plain rescaling.
    pub fn reference() -> Self {
        Self {
            step: InnerStep::Reference,
            outer: OuterUpdate::Rescale,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundedSolution {
    pub holdings: HoldingsVector,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Coordinates held at their upper (`1`) or lower (`-1`) bound, `0` if
    /// free.
    pub pinned: Vec<i8>,
}

/// Bounded optimization with the default options and the given `prec`.
pub fn optimize_bounded(
    alpha: &AlphaVector,
    constraints: &ConstraintSet,
    inv_cov: &DMatrix<f64>,
    upper: &DVector<f64>,
    lower: &DVector<f64>,
    prec: f64,
) -> Result<HoldingsVector> {
    let opts = BoundedOptions {
        prec,
        ..BoundedOptions::default()
    };
    optimize_bounded_with(alpha, constraints, inv_cov, upper, lower, &opts).map(|s| s.holdings)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Pin {
    Free,
    Upper,
    Lower,
    /// Zero-width box; never released.
    Fixed,
}

struct Problem<'a> {
    n: usize,
    y: &'a DMatrix<f64>,
    g: &'a DMatrix<f64>,
    /// Diagonal of G when G is diagonal.
    diag: Option<DVector<f64>>,
    gy: DMatrix<f64>,
    ytgy: DMatrix<f64>,
    ytgy_diag: Vec<f64>,
    /// G a for the unit alpha scale.
    ga0: DVector<f64>,
    a0: DVector<f64>,
    upper: &'a DVector<f64>,
    lower: &'a DVector<f64>,
    forced_zero: Vec<bool>,
    max_inner: usize,
}

struct InnerResult {
    w: DVector<f64>,
    pins: Vec<Pin>,
    iterations: usize,
}

pub fn optimize_bounded_with(
    alpha: &AlphaVector,
    constraints: &ConstraintSet,
    inv_cov: &DMatrix<f64>,
    upper: &DVector<f64>,
    lower: &DVector<f64>,
    opts: &BoundedOptions,
) -> Result<BoundedSolution> {
    let n = alpha.len();
    check_square(inv_cov, n, "inverse covariance")?;
    if constraints.num_tickers() != n || upper.len() != n || lower.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "alpha {n}, constraints {}, upper {}, lower {}",
            constraints.num_tickers(),
            upper.len(),
            lower.len()
        )));
    }
    check_bounds(upper, lower)?;

    // The optimizers return w ∝ -(projected alpha); solve for a = -E.
    let a = -alpha.values();
    let ga = inv_cov * &a;
    let x = constrained_projection(constraints, inv_cov, &ga)?;
    let gross0: f64 = x.iter().map(|v| v.abs()).sum();
    if !(gross0 > ZERO_ALPHA_TOL * ga.iter().map(|v| v.abs()).sum::<f64>()) {
        return Err(Error::ZeroAlpha);
    }

    let y = constraints.loadings();
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || inv_cov[(i, j)] == 0.0));
    let gy = inv_cov * y;
    let ytgy = y.transpose() * &gy;
    let problem = Problem {
        n,
        y,
        g: inv_cov,
        diag: is_diag.then(|| inv_cov.diagonal()),
        ytgy_diag: (0..ytgy.nrows()).map(|j| ytgy[(j, j)]).collect(),
        gy,
        ytgy,
        ga0: ga / gross0,
        a0: a / gross0,
        upper,
        lower,
        forced_zero: constraints.forced_zero(),
        max_inner: opts.max_inner.unwrap_or(20 * n + 100),
    };

    let mut scale = 1.0;
    let mut inner_total = 0;
    let mut warm: Option<InnerResult> = None;
    // Gross weight is continuous in the scale and zero at scale 0, but with a
    // non-diagonal G it need not be monotone, so the scale is bracketed.
    let mut below: Option<(f64, f64)> = Some((0.0, 0.0));
    let mut above: Option<(f64, f64)> = None;
    let mut last: Option<(f64, f64)> = Some((0.0, 0.0));
    for outer in 1..=opts.max_outer {
        let res = match opts.step {
            InnerStep::Exact => problem.exact_inner(scale, warm.take())?,
            InnerStep::Reference => problem.reference_inner(scale, opts.tol)?,
        };
        inner_total += res.iterations;
        let gross: f64 = res.w.iter().map(|v| v.abs()).sum();
        if (gross - 1.0).abs() < opts.prec {
            let pinned = res
                .pins
                .iter()
                .map(|p| match p {
                    Pin::Upper => 1,
                    Pin::Lower => -1,
                    Pin::Fixed | Pin::Free => 0,
                })
                .collect();
            return Ok(BoundedSolution {
                holdings: HoldingsVector { weights: res.w },
                outer_iterations: outer,
                inner_iterations: inner_total,
                pinned,
            });
        }
        if !(gross > 0.0) {
            return Err(Error::InfeasibleBounds(
                "all weights are held at zero".into(),
            ));
        }
        let next = match opts.outer {
            OuterUpdate::Rescale => scale / gross,
            OuterUpdate::Secant => {
                if gross < 1.0 {
                    below = Some((scale, gross));
                } else {
                    above = Some((scale, gross));
                }
                let secant = last.and_then(|(c0, g0)| {
                    let slope = (gross - g0) / (scale - c0);
                    (slope.is_finite() && slope > 0.0).then(|| scale + (1.0 - gross) / slope)
                });
                match (below, above) {
                    (Some((lo, _)), Some((hi, _))) => match secant {
                        Some(c) if c > lo && c < hi => c,
                        _ => 0.5 * (lo + hi),
                    },
                    _ => match secant {
                        Some(c) if c > 0.0 && c.is_finite() && c <= 4.0 * scale / gross => c,
                        // Gross fell as the scale grew: leave the plateau fast.
                        None => 2.0 * scale,
                        _ => scale / gross,
                    },
                }
            }
        };
        last = Some((scale, gross));
        scale = next;
        if opts.step == InnerStep::Exact {
            warm = Some(res);
        }
    }
    Err(Error::NonConvergence(opts.max_outer))
}

fn check_bounds(upper: &DVector<f64>, lower: &DVector<f64>) -> Result<()> {
    for i in 0..upper.len() {
        if !(lower[i] <= 0.0 && upper[i] >= 0.0) || !lower[i].is_finite() || !upper[i].is_finite() {
            return Err(Error::InfeasibleBounds(format!(
                "coordinate {i}: need lower <= 0 <= upper, got [{}, {}]",
                lower[i], upper[i]
            )));
        }
    }
    let reach: f64 = upper.iter().zip(lower.iter()).map(|(u, l)| u.max(-l)).sum();
    if reach < 1.0 {
        return Err(Error::InfeasibleBounds(format!(
            "bounds admit a gross weight of at most {reach}"
        )));
    }
    Ok(())
}

impl Problem<'_> {
    fn bound(&self, i: usize, pin: Pin) -> f64 {
        match pin {
            Pin::Upper | Pin::Fixed => self.upper[i],
            Pin::Lower => self.lower[i],
            Pin::Free => unreachable!("free coordinate has no bound"),
        }
    }

    /// Equality-constrained optimum with pinned coordinates at their bounds.
    /// Returns the weights and the multipliers of the pinned coordinates
    /// (zero for free ones).
    fn solve_pinned(&self, scale: f64, pins: &[Pin]) -> (DVector<f64>, DVector<f64>) {
        let p = self.y.ncols();
        let pinned: Vec<usize> = (0..self.n).filter(|&i| pins[i] != Pin::Free).collect();
        let mut mu = DVector::zeros(self.n);
        let mut w;
        if let Some(g) = &self.diag {
            // Eliminating the pinned multipliers leaves a p x p system.
            let mut q = self.ytgy.clone();
            let mut rhs = self.y.transpose() * self.ga0.clone() * scale;
            for &i in &pinned {
                let yi = self.y.row(i);
                let b = self.bound(i, pins[i]);
                q -= yi.transpose() * yi * g[i];
                rhs += yi.transpose() * (b - scale * self.ga0[i]);
            }
            let (v, _) = solve_psd_dropping(&q, &rhs, &self.ytgy_diag, DROP_TOL);
            let yv = self.y * &v;
            w = DVector::from_fn(self.n, |i, _| g[i] * (scale * self.a0[i] - yv[i]));
            for &i in &pinned {
                let b = self.bound(i, pins[i]);
                mu[i] = scale * self.a0[i] - yv[i] - b / g[i];
                w[i] = b;
            }
        } else {
            let k = pinned.len();
            let mut m = DMatrix::zeros(k + p, k + p);
            let mut rhs = DVector::zeros(k + p);
            let mut scale_diag = vec![0.0; k + p];
            for (r, &i) in pinned.iter().enumerate() {
                for (c, &j) in pinned.iter().enumerate() {
                    m[(r, c)] = self.g[(i, j)];
                }
                for c in 0..p {
                    m[(r, k + c)] = self.gy[(i, c)];
                    m[(k + c, r)] = self.gy[(i, c)];
                }
                rhs[r] = scale * self.ga0[i] - self.bound(i, pins[i]);
                scale_diag[r] = self.g[(i, i)];
            }
            m.view_mut((k, k), (p, p)).copy_from(&self.ytgy);
            let ytga = self.y.transpose() * &self.ga0 * scale;
            rhs.rows_mut(k, p).copy_from(&ytga);
            scale_diag[k..].copy_from_slice(&self.ytgy_diag);
            let (sol, _) = solve_psd_dropping(&m, &rhs, &scale_diag, DROP_TOL);
            let v = sol.rows(k, p);
            w = &self.ga0 * scale - &self.gy * v;
            for (r, &i) in pinned.iter().enumerate() {
                w -= self.g.column(i) * sol[r];
                mu[i] = sol[r];
            }
            for &i in &pinned {
                w[i] = self.bound(i, pins[i]);
            }
        }
        for i in 0..self.n {
            if self.forced_zero[i] && pins[i] == Pin::Free {
                w[i] = 0.0;
            }
        }
        (w, mu)
    }

    fn initial_pins(&self) -> Vec<Pin> {
        (0..self.n)
            .map(|i| {
                if self.upper[i] == self.lower[i] {
                    Pin::Fixed
                } else {
                    Pin::Free
                }
            })
            .collect()
    }

    fn exact_inner(&self, scale: f64, warm: Option<InnerResult>) -> Result<InnerResult> {
        let (mut z, mut pins) = match warm {
            Some(prev) => (prev.w, prev.pins),
            None => (DVector::zeros(self.n), self.initial_pins()),
        };
        for iter in 1..=self.max_inner {
            let (x, mu) = self.solve_pinned(scale, &pins);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::RankDeficientLoadings);
            }
            // Largest step from z towards x that stays within the bounds.
            let mut t_min = 1.0;
            let mut blocking = Vec::new();
            for i in 0..self.n {
                if pins[i] != Pin::Free {
                    continue;
                }
                let (target, side) = if x[i] > self.upper[i] {
                    (self.upper[i], Pin::Upper)
                } else if x[i] < self.lower[i] {
                    (self.lower[i], Pin::Lower)
                } else {
                    continue;
                };
                let t = ((target - z[i]) / (x[i] - z[i])).clamp(0.0, 1.0);
                blocking.push((i, t, side));
                t_min = f64::min(t_min, t);
            }
            if blocking.is_empty() {
                z = x;
                let mu_tol = 1e-10 * (scale * self.a0.amax()).max(mu.amax());
                let worst = (0..self.n)
                    .filter_map(|i| match pins[i] {
                        Pin::Upper if mu[i] < -mu_tol => Some((i, -mu[i])),
                        Pin::Lower if mu[i] > mu_tol => Some((i, mu[i])),
                        _ => None,
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                match worst {
                    Some((i, _)) => pins[i] = Pin::Free,
                    None => {
                        return Ok(InnerResult {
                            w: z,
                            pins,
                            iterations: iter,
                        })
                    }
                }
                continue;
            }
            for i in 0..self.n {
                if pins[i] == Pin::Free {
                    z[i] += t_min * (x[i] - z[i]);
                }
            }
            for (i, t, side) in blocking {
                if t <= t_min + 1e-12 {
                    pins[i] = side;
                    z[i] = self.bound(i, side);
                }
            }
        }
        Err(Error::NonConvergence(self.max_inner))
    }

    fn reference_inner(&self, scale: f64, tol: f64) -> Result<InnerResult> {
        let n = self.n;
        let p = self.y.ncols();
        let ga = &self.ga0 * scale;
        let mut z = DVector::zeros(n);
        let mut jp = vec![false; n];
        let mut jm = vec![false; n];
        for iter in 1..=self.max_inner {
            let free: Vec<usize> = (0..n).filter(|&i| !jp[i] && !jm[i]).collect();
            let mut yv = DVector::zeros(p);
            for &i in &free {
                yv += self.y.row(i).transpose() * ga[i];
            }
            for i in 0..n {
                if jp[i] {
                    yv += self.y.row(i).transpose() * self.upper[i];
                } else if jm[i] {
                    yv += self.y.row(i).transpose() * self.lower[i];
                }
            }
            // With every coordinate pinned there is nothing to solve for.
            let take: Vec<usize> = if free.is_empty() {
                Vec::new()
            } else if p > 1 {
                (0..p)
                    .filter(|&c| free.iter().any(|&i| self.y[(i, c)] != 0.0))
                    .collect()
            } else {
                vec![0]
            };
            let mut q = DMatrix::zeros(take.len(), take.len());
            for (r, &c1) in take.iter().enumerate() {
                for (c, &c2) in take.iter().enumerate() {
                    q[(r, c)] = free
                        .iter()
                        .map(|&i| self.y[(i, c1)] * self.gy[(i, c2)])
                        .sum();
                }
            }
            let rhs = DVector::from_fn(take.len(), |r, _| yv[take[r]]);
            let v = if take.is_empty() {
                DVector::zeros(0)
            } else {
                q.lu().solve(&rhs).ok_or(Error::RankDeficientLoadings)?
            };
            let mut x = ga.clone();
            for (r, &c) in take.iter().enumerate() {
                x -= self.gy.column(c) * v[r];
            }
            for i in 0..n {
                if jp[i] {
                    x[i] = self.upper[i];
                }
                if jm[i] {
                    x[i] = self.lower[i];
                }
            }
            let (prev_p, prev_m) = (jp.clone(), jm.clone());

            // Step to the first bound on the segment z -> x.
            let mut t_min = f64::INFINITY;
            for i in 0..n {
                let q = x[i] - z[i];
                let target = if q > 0.0 {
                    x[i].min(self.upper[i])
                } else if q < 0.0 {
                    x[i].max(self.lower[i])
                } else {
                    continue;
                };
                t_min = t_min.min((target - z[i]) / q);
            }
            if t_min.is_finite() {
                z += (&x - &z) * t_min;
            }
            for i in 0..n {
                jp[i] = (z[i] - self.upper[i]).abs() < tol;
                jm[i] = (z[i] - self.lower[i]).abs() < tol;
            }
            if jp == prev_p && jm == prev_m {
                for i in 0..n {
                    z[i] = z[i].clamp(self.lower[i], self.upper[i]);
                    if self.forced_zero[i] {
                        z[i] = 0.0;
                    }
                }
                let pins = (0..n)
                    .map(|i| match (jp[i], jm[i]) {
                        (true, true) => Pin::Fixed,
                        (true, false) => Pin::Upper,
                        (false, true) => Pin::Lower,
                        _ => Pin::Free,
                    })
                    .collect();
                return Ok(InnerResult {
                    w: z,
                    pins,
                    iterations: iter,
                });
            }
        }
        Err(Error::NonConvergence(self.max_inner))
    }
}
