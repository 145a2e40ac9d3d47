//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

/// Nesterov dual averaging on `log(step size)` towards a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    count: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * initial_step).ln(),
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            count: 0.0,
            h_bar: 0.0,
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
        }
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.count += 1.0;
        let a = accept_stat.clamp(0.0, 1.0);
        let w = 1.0 / (self.count + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - a);
        self.log_eps = self.mu - self.count.sqrt() / self.gamma * self.h_bar;
        let eta = self.count.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn final_step(&self) -> f64 {
        if self.count == 0.0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Online variance accumulator (Welford).
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Regularised variance estimate, shrunk towards 1e-3 for short windows.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0).max(1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup schedule: a fast initial buffer, doubling slow windows that estimate the
/// metric, and a terminal buffer that only tunes the step size.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    base_window: usize,
}

impl WindowSchedule {
    pub fn new(warmup: usize, init_buffer: usize, term_buffer: usize, base_window: usize) -> Self {
        let (init_buffer, term_buffer, base_window) =
            if init_buffer + term_buffer + base_window > warmup {
                // too short for the full schedule: 15% / 75% / 10%
                let init = (0.15 * warmup as f64) as usize;
                let term = (0.1 * warmup as f64) as usize;
                (init, term, warmup.saturating_sub(init + term))
            } else {
                (init_buffer, term_buffer, base_window)
            };
        Self {
            warmup,
            init_buffer,
            term_buffer,
            base_window,
        }
    }

    /// Iterations (0-based) after which a slow window closes and the metric is updated.
    pub fn window_ends(&self) -> Vec<usize> {
        let mut ends = Vec::new();
        if self.base_window == 0 || self.warmup < 20 {
            return ends;
        }
        let slow_end = self.warmup - self.term_buffer;
        let mut start = self.init_buffer;
        let mut size = self.base_window;
        while start < slow_end {
            let mut end = start + size;
            // stretch the last window if the next one would not fit
            if end + 2 * size > slow_end {
                end = slow_end;
            }
            ends.push(end - 1);
            start = end;
            size *= 2;
        }
        ends
    }

    pub fn in_slow_phase(&self, iter: usize) -> bool {
        iter >= self.init_buffer && iter < self.warmup - self.term_buffer
    }
}
