//! Small dense solves and root finders used by the pasting systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot-ratio floor below which a pasting matrix is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-13;

/// Solves `a x = b` by LU with partial pivoting.
///
/// Rejects systems whose smallest-to-largest pivot ratio falls under
/// [`SINGULAR_RATIO`]; the ratio is a cheap reciprocal-condition proxy.
pub fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if n == 0 {
        return Ok(b);
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Singular { ratio: 0.0 });
    }
    let lu = a.lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let p = u[(i, i)].abs();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let ratio = lo / hi;
    if !(ratio > SINGULAR_RATIO) {
        return Err(Error::Singular { ratio });
    }
    lu.solve(&b).ok_or(Error::Singular { ratio })
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-11,
            max_iter: 100,
            fd_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm after every accepted step.
    pub trace: Vec<f64>,
}

/// Damped Newton with a central-difference Jacobian.
///
/// `f` returns `None` where the residual cannot be evaluated (a singular
/// inner system, say); the line search treats such points as rejected.
/// `project` maps an iterate back into the admissible set after every step.
pub fn newton<F, P>(f: F, x0: &[f64], project: P, opts: NewtonOptions) -> NewtonOutcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut r = match f(&x) {
        Some(r) => r,
        None => {
            return NewtonOutcome {
                x,
                residual: vec![f64::NAN; n],
                norm: f64::INFINITY,
                iterations: 0,
                converged: false,
                trace: vec![],
            }
        }
    };
    let mut norm = inf_norm(&r);
    let mut trace = vec![norm];
    let mut it = 0;
    while it < opts.max_iter && !(norm < opts.tol) {
        it += 1;
        let mut jac = DMatrix::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let h = opts.fd_step * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            match (f(&xp), f(&xm)) {
                (Some(rp), Some(rm)) => {
                    for i in 0..n {
                        jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let step = match solve_dense(jac, DVector::from_iterator(n, r.iter().map(|v| -v))) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            project(&mut xn);
            if let Some(rn) = f(&xn) {
                let nn = inf_norm(&rn);
                if nn < (1.0 - 1e-4 * t) * norm {
                    x = xn;
                    r = rn;
                    norm = nn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(norm);
    }
    NewtonOutcome {
        converged: norm < opts.tol,
        x,
        residual: r,
        norm,
        iterations: it,
        trace,
    }
}

/// All roots of `f` on `[lo, hi]` found by sign changes on an `n`-interval
/// grid, each refined by bisection. Sign changes across poles are dropped
/// by requiring `|f(root)| <= accept`.
pub fn scan_roots<F>(f: F, lo: f64, hi: f64, n: usize, accept: f64) -> Vec<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    let mut roots = Vec::new();
    if !(lo < hi) || n == 0 {
        return roots;
    }
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let fx = match f(x) {
            Some(v) if v.is_finite() => v,
            _ => {
                prev = None;
                continue;
            }
        };
        if fx == 0.0 {
            roots.push(x);
            prev = None;
            continue;
        }
        if let Some((xp, fp)) = prev {
            if fp.signum() != fx.signum() {
                if let Some(r) = bisect(&f, xp, fp, x) {
                    if f(r).map_or(false, |v| v.abs() <= accept) {
                        roots.push(r);
                    }
                }
            }
        }
        prev = Some((x, fx));
    }
    roots
}

fn bisect<F>(f: &F, mut a: f64, mut fa: f64, mut b: f64) -> Option<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (a + b))
}
