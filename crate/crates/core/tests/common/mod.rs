//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use commodity_game::equilibrium::{solve_equilibrium, Branch, EquilibriumResult, TatonnementOptions};
use commodity_game::{Model, ModelParams, StrategyPair};
use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn stylized() -> Model {
    Model::new(ModelParams::stylized()).unwrap()
}

pub fn with_sigma(sigma: f64) -> Model {
    Model::new(ModelParams {
        sigma,
        ..ModelParams::stylized()
    })
    .unwrap()
}

pub fn solve(model: &Model, branch: Branch) -> EquilibriumResult {
    let r = solve_equilibrium(model, branch, TatonnementOptions::default()).unwrap();
    assert!(r.converged, "{branch} did not converge");
    r
}

/// Long-run moments of a Type I equilibrium from renewal theory: the
/// post-event states form a four-state chain, and occupation between events
/// is the Green's function of Brownian motion with drift killed outside the
/// band. Everything here is computed from scratch with quadrature.
#[derive(Clone, Copy, Debug)]
pub struct Renewal {
    pub mean: f64,
    pub var: f64,
    pub mean_pi_p: f64,
    pub mean_pi_c: f64,
    pub switch_rate: f64,
    pub impulse_rate: f64,
    pub rho_plus: f64,
}

struct Killed {
    k: f64,
    s2: f64,
    a: f64,
    b: f64,
}

impl Killed {
    fn new(mu: f64, sigma: f64, a: f64, b: f64) -> Self {
        let s2 = sigma * sigma;
        Killed { k: 2.0 * mu / s2, s2, a, b }
    }

    /// Scale function.
    fn scale(&self, x: f64) -> f64 {
        if self.k.abs() < 1e-14 {
            x
        } else {
            -(-self.k * x).exp_m1() / self.k
        }
    }

    fn p_lower(&self, z: f64) -> f64 {
        (self.scale(self.b) - self.scale(z)) / (self.scale(self.b) - self.scale(self.a))
    }

    fn green(&self, z: f64, y: f64) -> f64 {
        let (lo, hi) = if z < y { (z, y) } else { (y, z) };
        let sa = self.scale(self.a);
        let sb = self.scale(self.b);
        let speed = 2.0 / (self.s2 * (-self.k * y).exp());
        (self.scale(lo) - sa) * (sb - self.scale(hi)) / (sb - sa) * speed
    }

    /// Expected integral of `f` along the path from `z` until exit.
    fn occupation(&self, z: f64, f: impl Fn(f64) -> f64) -> f64 {
        simpson(|y| self.green(z, y) * f(y), self.a, z, 4000) + simpson(|y| self.green(z, y) * f(y), z, self.b, 4000)
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn renewal_type_one(model: &Model, s: &StrategyPair) -> Renewal {
    let p = &model.params;
    let e = s.entries();
    let v = |i: usize| e[i].finite().expect("Type I threshold");
    let (xl, xls, xhs, xh, yl, yh) = (v(0), v(1), v(6), v(7), v(8), v(9));
    let plus = Killed::new(p.mu_plus, p.sigma, xl, yh);
    let minus = Killed::new(p.mu_minus, p.sigma, yl, xh);
    // States: after S+ (at yl), after I_l+ (at xl*), after S- (at yh), after I_h- (at xh*).
    let start: [(&Killed, f64); 4] = [(&plus, yl), (&plus, xls), (&minus, yh), (&minus, xhs)];
    let mut pm = Matrix4::<f64>::zeros();
    for (i, (kd, z)) in start.iter().enumerate() {
        let lo = kd.p_lower(*z);
        if i < 2 {
            pm[(i, 1)] = lo;
            pm[(i, 2)] = 1.0 - lo;
        } else {
            pm[(i, 0)] = lo;
            pm[(i, 3)] = 1.0 - lo;
        }
    }
    // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = (pm - Matrix4::identity()).transpose();
    for j in 0..4 {
        a[(3, j)] = 1.0;
    }
    let pi = a.lu().solve(&Vector4::new(0.0, 0.0, 0.0, 1.0)).unwrap();
    let mut m = [0.0; 5];
    let mut t_plus = 0.0;
    for (i, (kd, z)) in start.iter().enumerate() {
        let occ = [
            kd.occupation(*z, |_| 1.0),
            kd.occupation(*z, |y| y),
            kd.occupation(*z, |y| y * y),
            kd.occupation(*z, |y| model.producer.eval(y)),
            kd.occupation(*z, |y| model.consumer.eval(y)),
        ];
        for k in 0..5 {
            m[k] += pi[i] * occ[k];
        }
        if i < 2 {
            t_plus += pi[i] * occ[0];
        }
    }
    let cycle = m[0];
    let mean = m[1] / cycle;
    Renewal {
        mean,
        var: m[2] / cycle - mean * mean,
        mean_pi_p: m[3] / cycle,
        mean_pi_c: m[4] / cycle,
        switch_rate: (pi[0] + pi[2]) / cycle,
        impulse_rate: (pi[1] + pi[3]) / cycle,
        rho_plus: t_plus / cycle,
    }
}

/// Monte Carlo exit from `(a, b)`: probability of leaving through `a` and
/// the mean exit time, each with its standard error. Crossings inside a step
/// are detected from the Brownian bridge between the step's endpoints.
pub struct ExitEstimate {
    pub p_lower: f64,
    pub p_se: f64,
    pub time: f64,
    pub time_se: f64,
}

pub fn mc_exit(x: f64, a: f64, b: f64, mu: f64, sigma: f64, paths: usize, seed: u64) -> ExitEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (b - a) * (b - a) / (sigma * sigma);
    let dt = scale / 4000.0;
    let sd = sigma * dt.sqrt();
    let var = sd * sd;
    let (mut hits, mut st, mut st2) = (0.0, 0.0, 0.0);
    for _ in 0..paths {
        let (mut y, mut t) = (x, 0.0);
        let lower = loop {
            let z: f64 = StandardNormal.sample(&mut rng);
            let next = y + mu * dt + sd * z;
            // Exit time is taken at the middle of the step that crosses.
            if next <= a {
                t += 0.5 * dt;
                break true;
            }
            if next >= b {
                t += 0.5 * dt;
                break false;
            }
            let pa = (-2.0 * (y - a) * (next - a) / var).exp();
            let pb = (-2.0 * (b - y) * (b - next) / var).exp();
            let u: f64 = rng.random();
            if u < pa {
                t += 0.5 * dt;
                break true;
            }
            if u < pa + pb {
                t += 0.5 * dt;
                break false;
            }
            y = next;
            t += dt;
        };
        if lower {
            hits += 1.0;
        }
        st += t;
        st2 += t * t;
    }
    let n = paths as f64;
    let p = hits / n;
    let mt = st / n;
    ExitEstimate {
        p_lower: p,
        p_se: (p * (1.0 - p) / n).sqrt().max(1.0 / n),
        time: mt,
        time_se: ((st2 / n - mt * mt) / n).sqrt(),
    }
}
