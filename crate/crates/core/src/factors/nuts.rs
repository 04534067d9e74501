//! Multinomial No-U-Turn sampler with dual-averaging step size adaptation
//! and a windowed diagonal metric.

use rand::Rng;
use rand_distr::StandardNormal;

/// A differentiable log density over `R^dim`.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Returns the log density and writes its gradient into `grad`.
    /// Non-finite values mark points outside the support.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsConfig {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub max_depth: usize,
    pub target_accept: f64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self { n_warmup: 1000, n_draws: 1000, max_depth: 10, target_accept: 0.8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainOutput {
    /// Post-warmup draws in unconstrained space.
    pub draws: Vec<Vec<f64>>,
    pub accept_stats: Vec<f64>,
    pub n_divergent: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub n_leapfrog: usize,
}

impl ChainOutput {
    pub fn mean_accept(&self) -> f64 {
        if self.accept_stats.is_empty() {
            0.0
        } else {
            self.accept_stats.iter().sum::<f64>() / self.accept_stats.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    g: Vec<f64>,
    lp: f64,
}

struct DualAveraging {
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    mu: f64,
    delta: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    fn new(delta: f64) -> Self {
        Self { counter: 0.0, s_bar: 0.0, x_bar: 0.0, mu: 0.0, delta, gamma: 0.05, t0: 10.0, kappa: 0.75 }
    }

    fn restart(&mut self, eps: f64) {
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.mu = (10.0 * eps).ln();
    }

    fn learn(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Doubling metric-estimation windows between a fast initial buffer and a
/// terminal step-size-only buffer.
struct MetricWindows {
    n_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    enabled: bool,
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MetricWindows {
    fn new(n_warmup: usize, dim: usize) -> Self {
        let (mut init, mut term, mut base) = (75, 50, 25);
        let enabled = n_warmup >= 20;
        if enabled && init + term + base > n_warmup {
            init = (0.15 * n_warmup as f64) as usize;
            term = (0.1 * n_warmup as f64) as usize;
            base = n_warmup - init - term;
        }
        Self {
            n_warmup,
            init_buffer: init,
            term_buffer: term,
            window_size: base,
            next_window: init + base - 1,
            counter: 0,
            enabled,
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer && self.counter < self.n_warmup - self.term_buffer && self.counter != self.n_warmup
    }

    fn at_window_end(&self) -> bool {
        self.counter == self.next_window && self.counter != self.n_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.n_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.n_warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Records a warmup draw; returns the new inverse metric at a window end.
    fn learn(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        if !self.enabled {
            return None;
        }
        if self.in_window() {
            self.n += 1.0;
            for ((&qi, mean), m2) in q.iter().zip(self.mean.iter_mut()).zip(self.m2.iter_mut()) {
                let d = qi - *mean;
                *mean += d / self.n;
                *m2 += d * (qi - *mean);
            }
        }
        if self.at_window_end() {
            self.compute_next_window();
            let n = self.n;
            let var = self
                .m2
                .iter()
                .map(|m| {
                    let v = if n > 1.0 { m / (n - 1.0) } else { 1.0 };
                    (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
                })
                .collect();
            self.n = 0.0;
            self.mean.iter_mut().for_each(|m| *m = 0.0);
            self.m2.iter_mut().for_each(|m| *m = 0.0);
            self.counter += 1;
            return Some(var);
        }
        self.counter += 1;
        None
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Per-tree accumulators shared across the recursion.
struct TreeStats {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

struct Sampler<'a, M: LogDensity, R: Rng> {
    model: &'a M,
    rng: &'a mut R,
    eps: f64,
    inv_metric: Vec<f64>,
    max_depth: usize,
}

impl<M: LogDensity, R: Rng> Sampler<'_, M, R> {
    fn hamiltonian(&self, z: &Point) -> f64 {
        let kinetic: f64 = z.p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum();
        let h = -z.lp + 0.5 * kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum(&mut self, z: &mut Point) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = self.rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.lp = self.model.log_density_grad(&z.q, &mut z.g);
        if !z.lp.is_finite() {
            z.lp = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
    }

    /// Heuristic: double or halve the step size until a single leapfrog
    /// step crosses an acceptance probability of 0.8.
    fn init_stepsize(&mut self, z: &mut Point) {
        let init = z.clone();
        self.sample_momentum(z);
        let h0 = self.hamiltonian(z);
        self.leapfrog(z, self.eps);
        let delta_h = h0 - self.hamiltonian(z);
        let direction = if delta_h > 0.8f64.ln() { 1 } else { -1 };
        for _ in 0..100 {
            *z = init.clone();
            self.sample_momentum(z);
            let h0 = self.hamiltonian(z);
            self.leapfrog(z, self.eps);
            let delta_h = h0 - self.hamiltonian(z);
            if (direction == 1 && !(delta_h > 0.8f64.ln())) || (direction == -1 && !(delta_h < 0.8f64.ln())) {
                break;
            }
            self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            if self.eps > 1e7 || self.eps < 1e-300 {
                break;
            }
        }
        self.eps = self.eps.clamp(1e-10, 1e7);
        *z = init;
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        stats: &mut TreeStats,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.eps);
            stats.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_DELTA_H {
                stats.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            stats.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            *z_propose = z.clone();
            *p_sharp_beg = self.p_sharp(&z.p);
            *p_sharp_end = p_sharp_beg.clone();
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            *p_beg = z.p.clone();
            *p_end = z.p.clone();
            return !stats.divergent;
        }
        let dim = z.q.len();

        let mut p_sharp_left_end = vec![0.0; dim];
        let mut p_left_end = vec![0.0; dim];
        let mut rho_left = vec![0.0; dim];
        let mut lsw_left = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_left_end,
            &mut rho_left,
            p_beg,
            &mut p_left_end,
            h0,
            sign,
            &mut lsw_left,
            stats,
        ) {
            return false;
        }

        let mut z_propose_right = z.clone();
        let mut p_sharp_right_beg = vec![0.0; dim];
        let mut p_right_beg = vec![0.0; dim];
        let mut rho_right = vec![0.0; dim];
        let mut lsw_right = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_right,
            &mut p_sharp_right_beg,
            p_sharp_end,
            &mut rho_right,
            &mut p_right_beg,
            p_end,
            h0,
            sign,
            &mut lsw_right,
            stats,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_left, lsw_right);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_right > lsw_subtree || self.rng.random::<f64>() < (lsw_right - lsw_subtree).exp() {
            *z_propose = z_propose_right;
        }

        let rho_subtree = add(&rho_left, &rho_right);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_right_beg, &add(&rho_left, &p_right_beg));
        persist &= no_u_turn(&p_sharp_left_end, p_sharp_end, &add(&rho_right, &p_left_end));
        persist
    }

    /// One NUTS transition from `z`; returns the acceptance statistic.
    fn transition(&mut self, z: &mut Point, stats: &mut TreeStats) -> f64 {
        self.sample_momentum(z);
        let dim = z.q.len();
        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = self.p_sharp(&z.p);
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp_fwd_fwd.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp_fwd_fwd.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp_fwd_fwd.clone();
        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let h0 = self.hamiltonian(z);

        for _depth in 0..self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if self.rng.random::<f64>() > 0.5 {
                let mut edge = z_fwd.clone();
                rho_bck.clone_from(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                let v = self.build_tree(
                    _depth,
                    &mut edge,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut lsw_subtree,
                    stats,
                );
                z_fwd = edge;
                v
            } else {
                let mut edge = z_bck.clone();
                rho_fwd.clone_from(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                let v = self.build_tree(
                    _depth,
                    &mut edge,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut lsw_subtree,
                    stats,
                );
                z_bck = edge;
                v
            };
            if !valid {
                break;
            }
            if lsw_subtree > log_sum_weight || self.rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample = z_propose.clone();
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &add(&rho_bck, &p_fwd_bck));
            persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &add(&rho_fwd, &p_bck_fwd));
            if !persist {
                break;
            }
        }
        *z = z_sample;
        if stats.n_leapfrog == 0 {
            0.0
        } else {
            stats.sum_metro_prob / stats.n_leapfrog as f64
        }
    }
}

/// Runs one chain from `init`.
pub fn run_chain<M: LogDensity, R: Rng>(model: &M, init: &[f64], cfg: &NutsConfig, rng: &mut R) -> ChainOutput {
    let dim = model.dim();
    let mut g = vec![0.0; dim];
    let lp = model.log_density_grad(init, &mut g);
    let mut z = Point { q: init.to_vec(), p: vec![0.0; dim], g, lp };
    let mut sampler = Sampler { model, rng, eps: 1.0, inv_metric: vec![1.0; dim], max_depth: cfg.max_depth };
    sampler.init_stepsize(&mut z);
    let mut da = DualAveraging::new(cfg.target_accept);
    da.restart(sampler.eps);
    let mut windows = MetricWindows::new(cfg.n_warmup, dim);

    let mut out = ChainOutput::default();
    for _ in 0..cfg.n_warmup {
        let mut stats = TreeStats { n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
        let accept = sampler.transition(&mut z, &mut stats);
        out.n_leapfrog += stats.n_leapfrog;
        sampler.eps = da.learn(accept);
        if let Some(var) = windows.learn(&z.q) {
            sampler.inv_metric = var;
            sampler.init_stepsize(&mut z);
            da.restart(sampler.eps);
        }
    }
    if cfg.n_warmup > 0 {
        sampler.eps = da.final_step();
    }
    for _ in 0..cfg.n_draws {
        let mut stats = TreeStats { n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
        let accept = sampler.transition(&mut z, &mut stats);
        out.n_leapfrog += stats.n_leapfrog;
        out.accept_stats.push(accept);
        out.n_divergent += usize::from(stats.divergent);
        out.draws.push(z.q.clone());
    }
    out.step_size = sampler.eps;
    out.inv_metric = sampler.inv_metric;
    out
}
