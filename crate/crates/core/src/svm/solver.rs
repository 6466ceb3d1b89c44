use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Projected-gradient gap at which the inner solve stops.
    pub tolerance: f64,
    /// Relative change of the dual objective over one epoch at which the inner solve stops.
    pub rel_change: f64,
    pub max_epochs: usize,
    /// Bias bracket width (relative to `1 + |b|`) at which the bias search stops.
    pub bias_tolerance: f64,
    pub max_bias_steps: usize,
    pub route: SolverRoute,
    /// Problems up to this many samples use the pairwise solver under `Auto`.
    pub dense_limit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverRoute {
    Auto,
    /// Two-coordinate updates that keep `sum alpha_i y_i = 0`; dense Gram matrix.
    Pairwise,
    /// Single-coordinate updates for a fixed bias, with a root search on the bias.
    BiasSearch,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-3,
            rel_change: 1e-6,
            max_epochs: 1000,
            bias_tolerance: 1e-6,
            max_bias_steps: 60,
            route: SolverRoute::Auto,
            dense_limit: 3000,
        }
    }
}

impl SolverConfig {
    /// Settings for small problems that need the exact optimum.
    pub fn exact() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            rel_change: 0.0,
            max_epochs: 200_000,
            bias_tolerance: 1e-12,
            max_bias_steps: 200,
            route: SolverRoute::Auto,
            dense_limit: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    /// Dual variables, in input order (positives first).
    pub alphas: Vec<f64>,
}

/// Primal objective `0.5 |w|^2 + c * sum hinge(y (w.x + b))`.
pub fn primal_objective(weights: &[f64], bias: f64, pos: &[&[f32]], neg: &[&[f32]], c: f64) -> f64 {
    let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    let hinge = |x: &[f32], y: f64| (1.0 - y * (dot(weights, x) + bias)).max(0.0);
    let loss: f64 = pos.iter().map(|x| hinge(x, 1.0)).sum::<f64>() + neg.iter().map(|x| hinge(x, -1.0)).sum::<f64>();
    reg + c * loss
}

#[inline]
pub(crate) fn dot(w: &[f64], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * *b as f64).sum()
}

struct Problem<'a> {
    xs: Vec<&'a [f32]>,
    ys: Vec<f64>,
    qii: Vec<f64>,
    c: f64,
    dim: usize,
}

struct State {
    alpha: Vec<f64>,
    w: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Problem<'_> {
    /// Dual coordinate descent for the bias-free problem whose hinge targets are
    /// `1 - y_i b`. Returns `sum alpha_i y_i`, which is the negated derivative of
    /// the optimal primal value with respect to `b`.
    fn solve_fixed_bias(&self, b: f64, st: &mut State, cfg: &SolverConfig) -> f64 {
        let n = self.xs.len();
        let mut active: Vec<usize> = (0..n).collect();
        let mut pg_max_old = f64::INFINITY;
        let mut pg_min_old = f64::NEG_INFINITY;
        let mut last_dual = self.dual(b, st);
        let mut epoch = 0;
        loop {
            epoch += 1;
            active.shuffle(&mut st.rng);
            let mut pg_max = f64::NEG_INFINITY;
            let mut pg_min = f64::INFINITY;
            let mut k = 0;
            while k < active.len() {
                let i = active[k];
                let x = self.xs[i];
                let y = self.ys[i];
                let g = y * (dot(&st.w, x)) - (1.0 - y * b);
                let a = st.alpha[i];
                let pg = if a == 0.0 {
                    if g > pg_max_old {
                        active.swap_remove(k);
                        continue;
                    }
                    g.min(0.0)
                } else if a == self.c {
                    if g < pg_min_old {
                        active.swap_remove(k);
                        continue;
                    }
                    g.max(0.0)
                } else {
                    g
                };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg.abs() > 1e-15 && self.qii[i] > 0.0 {
                    let na = (a - g / self.qii[i]).clamp(0.0, self.c);
                    let d = (na - a) * y;
                    if d != 0.0 {
                        for (wk, xk) in st.w.iter_mut().zip(x) {
                            *wk += d * *xk as f64;
                        }
                    }
                    st.alpha[i] = na;
                }
                k += 1;
            }
            let gap = pg_max - pg_min;
            let dual = self.dual(b, st);
            let rel = (dual - last_dual).abs() / dual.abs().max(1e-12);
            last_dual = dual;
            let done = gap <= cfg.tolerance || rel < cfg.rel_change || epoch >= cfg.max_epochs;
            if done {
                if active.len() == n || epoch >= cfg.max_epochs {
                    break;
                }
                // Re-check the full set before declaring convergence.
                active = (0..n).collect();
                pg_max_old = f64::INFINITY;
                pg_min_old = f64::NEG_INFINITY;
                continue;
            }
            pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
            pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
        }
        st.alpha.iter().zip(&self.ys).map(|(a, y)| a * y).sum()
    }

    fn dual(&self, b: f64, st: &State) -> f64 {
        let lin: f64 = st.alpha.iter().zip(&self.ys).map(|(a, y)| a * (1.0 - y * b)).sum();
        lin - 0.5 * st.w.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Linear SVM with an unregularized bias.
///
/// Small problems are solved with pairwise updates on the dual with its
/// equality constraint. Large ones use single-coordinate descent for a fixed
/// bias: the optimal value is convex in the bias with derivative
/// `-sum alpha_i y_i`, so the bias comes from a bracketed root search on that
/// sum, each step warm-started from the previous one.
pub fn train_svm(pos: &[&[f32]], neg: &[&[f32]], c: f64, initial_bias: f64, cfg: &SolverConfig) -> Result<SvmSolution> {
    if pos.is_empty() {
        return Err(Error::EmptyClass("positive".into()));
    }
    if neg.is_empty() {
        return Err(Error::EmptyClass("negative".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::ConfigInvalid(format!("svm C must be positive, got {c}")));
    }
    let dim = pos[0].len();
    for x in pos.iter().chain(neg) {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
    }
    let xs: Vec<&[f32]> = pos.iter().chain(neg).copied().collect();
    let ys: Vec<f64> = std::iter::repeat(1.0)
        .take(pos.len())
        .chain(std::iter::repeat(-1.0).take(neg.len()))
        .collect();
    let qii = xs.iter().map(|x| x.iter().map(|v| (*v as f64).powi(2)).sum()).collect();
    let prob = Problem { xs, ys, qii, c, dim };
    let pairwise = match cfg.route {
        SolverRoute::Pairwise => true,
        SolverRoute::BiasSearch => false,
        SolverRoute::Auto => prob.xs.len() <= cfg.dense_limit,
    };
    let (w, bias, alpha) = if pairwise {
        prob.solve_pairwise(cfg)
    } else {
        let mut st = State {
            alpha: vec![0.0; prob.xs.len()],
            w: vec![0.0; prob.dim],
            rng: ChaCha8Rng::seed_from_u64(0x5eed_5f3),
        };
        let bias = find_bias(&prob, &mut st, initial_bias, cfg);
        prob.solve_fixed_bias(bias, &mut st, cfg);
        (st.w, bias, st.alpha)
    };
    let objective = primal_objective(&w, bias, pos, neg, c);
    Ok(SvmSolution {
        weights: w,
        bias,
        objective,
        alphas: alpha,
    })
}

impl Problem<'_> {
    /// Maximal-violating-pair selection with second-order choice of the partner.
    fn solve_pairwise(&self, cfg: &SolverConfig) -> (Vec<f64>, f64, Vec<f64>) {
        const TAU: f64 = 1e-12;
        let n = self.xs.len();
        let y = &self.ys;
        let c = self.c;
        let mut q = vec![0.0f64; n * n];
        for i in 0..n {
            for j in i..n {
                let k: f64 = self.xs[i]
                    .iter()
                    .zip(self.xs[j])
                    .map(|(a, b)| *a as f64 * *b as f64)
                    .sum();
                q[i * n + j] = y[i] * y[j] * k;
                q[j * n + i] = q[i * n + j];
            }
        }
        let mut alpha = vec![0.0f64; n];
        let mut grad = vec![-1.0f64; n];
        let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
        let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
        let max_iter = cfg.max_epochs.saturating_mul(n.max(1)).max(10_000);
        for _ in 0..max_iter {
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = usize::MAX;
            for t in 0..n {
                if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                    gmax = -y[t] * grad[t];
                    i_sel = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                gmax2 = gmax2.max(y[t] * grad[t]);
                if i_sel == usize::MAX {
                    continue;
                }
                let b = gmax + y[t] * grad[t];
                if b > 0.0 {
                    let a = q[i_sel * n + i_sel] + q[t * n + t] - 2.0 * y[i_sel] * y[t] * q[i_sel * n + t];
                    let obj = -(b * b) / a.max(TAU);
                    if obj < best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
            if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < cfg.tolerance {
                break;
            }
            let (i, j) = (i_sel, j_sel);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let (qi, qj) = (&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]);
            if y[i] != y[j] {
                let quad = (qi[i] + qj[j] + 2.0 * qi[j]).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (qi[i] + qj[j] - 2.0 * qi[j]).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += qi[t] * di + qj[t] * dj;
            }
        }
        // Bias from free vectors, or the middle of the feasible interval.
        let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if alpha[t] >= c {
                if y[t] < 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else if alpha[t] <= 0.0 {
                if y[t] > 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else {
                sum += yg;
                free += 1;
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { 0.5 * (ub + lb) };
        let mut w = vec![0.0f64; self.dim];
        for t in 0..n {
            if alpha[t] != 0.0 {
                for (wk, xk) in w.iter_mut().zip(self.xs[t]) {
                    *wk += alpha[t] * y[t] * *xk as f64;
                }
            }
        }
        (w, -rho, alpha)
    }
}

fn find_bias(prob: &Problem, st: &mut State, b0: f64, cfg: &SolverConfig) -> f64 {
    let g0 = prob.solve_fixed_bias(b0, st, cfg);
    if g0 == 0.0 {
        return b0;
    }
    // g is non-increasing in b: walk in the direction of its sign until it flips.
    let dir = g0.signum();
    let mut step = 1.0;
    let (mut lo, mut g_lo, mut hi, mut g_hi);
    let mut prev = (b0, g0);
    loop {
        let b = prev.0 + dir * step;
        let g = prob.solve_fixed_bias(b, st, cfg);
        if g == 0.0 {
            return b;
        }
        if g.signum() != dir {
            if dir > 0.0 {
                (lo, g_lo, hi, g_hi) = (prev.0, prev.1, b, g);
            } else {
                (lo, g_lo, hi, g_hi) = (b, g, prev.0, prev.1);
            }
            break;
        }
        prev = (b, g);
        step *= 2.0;
        if step > 1e12 {
            return b;
        }
    }
    // Illinois variant of regula falsi on [lo, hi] with g(lo) > 0 > g(hi).
    let mut side = 0i8;
    for _ in 0..cfg.max_bias_steps {
        if hi - lo <= cfg.bias_tolerance * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mut b = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(b > lo && b < hi) {
            b = 0.5 * (lo + hi);
        }
        let g = prob.solve_fixed_bias(b, st, cfg);
        if g == 0.0 {
            return b;
        }
        if g > 0.0 {
            lo = b;
            g_lo = g;
            if side == 1 {
                g_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = b;
            g_hi = g;
            if side == -1 {
                g_lo *= 0.5;
            }
            side = -1;
        }
    }
    // Both ends are optimal to within the bracket; pick the lower objective.
    let mut eval = |b: f64| {
        prob.solve_fixed_bias(b, st, cfg);
        let pos: Vec<&[f32]> = prob
            .xs
            .iter()
            .zip(&prob.ys)
            .filter(|(_, y)| **y > 0.0)
            .map(|(x, _)| *x)
            .collect();
        let neg: Vec<&[f32]> = prob
            .xs
            .iter()
            .zip(&prob.ys)
            .filter(|(_, y)| **y < 0.0)
            .map(|(x, _)| *x)
            .collect();
        primal_objective(&st.w, b, &pos, &neg, prob.c)
    };
    let mid = 0.5 * (lo + hi);
    let candidates = [lo, mid, hi];
    let mut best = (f64::INFINITY, mid);
    for b in candidates {
        let f = eval(b);
        if f < best.0 {
            best = (f, b);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
        v.iter().map(|x| x.as_slice()).collect()
    }

    #[test]
    fn separable_pair() {
        let p = vec![vec![1.0f32, 0.0]];
        let n = vec![vec![-1.0f32, 0.0]];
        let s = train_svm(&refs(&p), &refs(&n), 100.0, 0.0, &SolverConfig::exact()).unwrap();
        assert!(s.weights[0] > 0.0 && s.weights[1].abs() < 1e-9);
        assert!((s.weights[0] - 1.0).abs() < 1e-6);
        assert!(s.bias.abs() < 1e-6);
        let loss = primal_objective(&s.weights, s.bias, &refs(&p), &refs(&n), 1.0)
            - 0.5 * s.weights.iter().map(|w| w * w).sum::<f64>();
        assert!(loss < 1e-6);
    }

    #[test]
    fn errors() {
        let p = vec![vec![1.0f32, 0.0]];
        let bad = vec![vec![1.0f32]];
        assert!(matches!(
            train_svm(&refs(&p), &[], 1.0, 0.0, &SolverConfig::default()),
            Err(Error::EmptyClass(_))
        ));
        assert!(matches!(
            train_svm(&[], &refs(&p), 1.0, 0.0, &SolverConfig::default()),
            Err(Error::EmptyClass(_))
        ));
        assert!(matches!(
            train_svm(&refs(&p), &refs(&bad), 1.0, 0.0, &SolverConfig::default()),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    /// Dense grid over (w1, w2, b), refined twice around the best cell.
    pub(crate) fn grid_oracle(pos: &[&[f32]], neg: &[&[f32]], c: f64, center: [f64; 3], half: f64) -> f64 {
        let mut center = center;
        let mut half = half;
        let mut best = f64::INFINITY;
        let steps = 60;
        for _ in 0..3 {
            let mut arg = center;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let t = |n: usize| -1.0 + 2.0 * n as f64 / steps as f64;
                        let w = [center[0] + half * t(i), center[1] + half * t(j)];
                        let b = center[2] + half * t(k);
                        let f = primal_objective(&w, b, pos, neg, c);
                        if f < best {
                            best = f;
                            arg = [w[0], w[1], b];
                        }
                    }
                }
            }
            center = arg;
            half *= 4.0 / steps as f64;
        }
        best
    }

    #[test]
    fn matches_grid_oracle_on_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<Vec<f32>> = (0..5)
            .map(|_| vec![rng.gen_range(0.0..2.0), rng.gen_range(-1.0..1.5)])
            .collect();
        let n: Vec<Vec<f32>> = (0..5)
            .map(|_| vec![rng.gen_range(-1.5..1.0), rng.gen_range(-1.5..0.5)])
            .collect();
        let s = train_svm(&refs(&p), &refs(&n), 1.0, 0.0, &SolverConfig::exact()).unwrap();
        let oracle = grid_oracle(&refs(&p), &refs(&n), 1.0, [s.weights[0], s.weights[1], s.bias], 4.0);
        assert!(s.objective <= oracle * (1.0 + 1e-3), "{} vs {}", s.objective, oracle);
        assert!(oracle <= s.objective * (1.0 + 1e-3) + 1e-12);
    }

    #[test]
    fn duplicated_points_with_half_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: Vec<Vec<f32>> = (0..6)
            .map(|_| (0..3).map(|_| rng.gen_range(-0.5..1.5)).collect())
            .collect();
        let n: Vec<Vec<f32>> = (0..7)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.5..0.5)).collect())
            .collect();
        let a = train_svm(&refs(&p), &refs(&n), 0.8, 0.0, &SolverConfig::exact()).unwrap();
        let p2: Vec<Vec<f32>> = p.iter().chain(&p).cloned().collect();
        let n2: Vec<Vec<f32>> = n.iter().chain(&n).cloned().collect();
        let b = train_svm(&refs(&p2), &refs(&n2), 0.4, 0.0, &SolverConfig::exact()).unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
        assert!((a.bias - b.bias).abs() < 1e-6, "{} vs {}", a.bias, b.bias);
    }

    #[test]
    fn routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p: Vec<Vec<f32>> = (0..120)
            .map(|_| (0..20).map(|_| rng.gen_range(-0.3..1.0)).collect())
            .collect();
        let n: Vec<Vec<f32>> = (0..300)
            .map(|_| (0..20).map(|_| rng.gen_range(-1.0..0.3)).collect())
            .collect();
        for c in [0.01, 1.0] {
            let pair = SolverConfig {
                route: SolverRoute::Pairwise,
                ..SolverConfig::exact()
            };
            let search = SolverConfig {
                route: SolverRoute::BiasSearch,
                tolerance: 1e-6,
                ..SolverConfig::default()
            };
            let a = train_svm(&refs(&p), &refs(&n), c, 0.0, &pair).unwrap();
            let b = train_svm(&refs(&p), &refs(&n), c, 0.0, &search).unwrap();
            assert!(
                (a.objective - b.objective).abs() <= 1e-4 * a.objective,
                "{} vs {}",
                a.objective,
                b.objective
            );
            assert!(a.objective <= b.objective + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn kkt_bias_balance(seed in any::<u64>(), c in 0.05f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<Vec<f32>> = (0..8).map(|_| (0..3).map(|_| rng.gen_range(-1.0..2.0)).collect()).collect();
            let n: Vec<Vec<f32>> = (0..9).map(|_| (0..3).map(|_| rng.gen_range(-2.0..1.0)).collect()).collect();
            let s = train_svm(&refs(&p), &refs(&n), c, 0.0, &SolverConfig::exact()).unwrap();
            // Moving the bias either way cannot improve the objective.
            for d in [-1e-3, 1e-3] {
                let f = primal_objective(&s.weights, s.bias + d, &refs(&p), &refs(&n), c);
                prop_assert!(f >= s.objective - 1e-9);
            }
            prop_assert!(s.alphas.iter().all(|a| *a >= 0.0 && *a <= c));
        }
    }
}
