//! Box-constrained quasi-Newton minimisation (projected L-BFGS with Armijo
//! backtracking) and a multi-start driver.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop once the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop once the relative decrease of the objective falls below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iters: 200, memory: 8, grad_tol: 1e-6, f_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_grad(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

/// Minimises `f` over the box `[lo, hi]`. `f` returns `None` where the
/// objective is undefined; the line search treats such points as infinitely
/// bad. Returns `None` only if the starting point itself fails.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp_into(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x).filter(|(v, g)| v.is_finite() && g.iter().all(|t| t.is_finite()))?;
    let mut evals = 1;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iters = 0;

    while iters < opts.max_iters {
        iters += 1;
        let pg = projected_grad(&x, &g, lo, hi);
        if pg.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < opts.grad_tol {
            break;
        }
        // two-loop recursion on the projected gradient
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        for i in 0..n {
            if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            mem.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if dmax == 0.0 {
            break;
        }
        let mut t = if mem.is_empty() { (1.0 / dmax).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            clamp_into(&mut xn, lo, hi);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            evals += 1;
            if let Some((fv, gv)) = f(&xn) {
                if fv.is_finite() && gv.iter().all(|v| v.is_finite()) && fv <= fx + 1e-4 * decrease {
                    accepted = Some((xn, fv, gv));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fn_).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel < opts.f_tol {
            break;
        }
    }
    Some(Minimum { x, f: fx, iters, evals })
}

/// Runs `minimize_box` from each start and keeps the lowest objective.
/// Starts are `first` (if any) followed by draws from `draw` until `starts`
/// runs have been made.
pub fn multi_start<F, D>(
    mut f: F,
    first: Option<Vec<f64>>,
    starts: usize,
    seed: u64,
    mut draw: D,
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    D: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Minimum> = None;
    let mut inits = Vec::with_capacity(starts.max(1));
    if let Some(x) = first {
        inits.push(x);
    }
    while inits.len() < starts.max(1) {
        inits.push(draw(&mut rng));
    }
    for x0 in inits {
        if let Some(m) = minimize_box(&mut f, &x0, lo, hi, opts) {
            if best.as_ref().map_or(true, |b| m.f < b.f) {
                best = Some(m);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rosen(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn rosenbrock_unconstrained() {
        let opts = LbfgsOptions { max_iters: 500, ..Default::default() };
        let m = minimize_box(rosen, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of (x-3)^2 + (y+1)^2 over [0,2]x[0,2] is at (2, 0)
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let m = minimize_box(f, &[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, vec![2.0, 0.0]);
    }

    #[test]
    fn fixed_coordinate_stays_put() {
        let f = |x: &[f64]| Some((x[0].powi(2) + x[1].powi(2), vec![2.0 * x[0], 2.0 * x[1]]));
        let m = minimize_box(f, &[1.0, 0.7], &[-1.0, 0.7], &[1.0, 0.7], &LbfgsOptions::default()).unwrap();
        assert!(m.x[0].abs() < 1e-6);
        assert_eq!(m.x[1], 0.7);
    }

    #[test]
    fn failing_region_is_avoided() {
        // undefined for x > 0.5; minimum of (x-1)^2 on the feasible part is at the edge
        let f = |x: &[f64]| if x[0] > 0.5 { None } else { Some(((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)])) };
        let m = minimize_box(f, &[0.0], &[-2.0], &[2.0], &LbfgsOptions::default()).unwrap();
        assert!(m.x[0] <= 0.5 && m.x[0] > 0.4);
    }

    #[test]
    fn multi_start_finds_global_well() {
        // two wells, the deeper one near x = 2
        let f = |x: &[f64]| {
            let v = (x[0] + 2.0).powi(2) * (x[0] - 2.0).powi(2) - x[0];
            let g = 2.0 * (x[0] + 2.0) * (x[0] - 2.0).powi(2) + 2.0 * (x[0] - 2.0) * (x[0] + 2.0).powi(2) - 1.0;
            Some((v, vec![g]))
        };
        let m = multi_start(f, Some(vec![-2.0]), 6, 3, |r| vec![r.gen_range(-3.0..3.0)], &[-3.0], &[3.0], &LbfgsOptions::default()).unwrap();
        assert!(m.x[0] > 1.9);
        let m2 = multi_start(f, Some(vec![-2.0]), 6, 3, |r| vec![r.gen_range(-3.0..3.0)], &[-3.0], &[3.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, m2.x);
    }
}
