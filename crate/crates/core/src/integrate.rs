//! Adaptive Dormand-Prince 5(4) integration of complex ODE systems.

use crate::{Error, Result, C64};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

/// Embedded Runge-Kutta 5(4) pair with PI step-size control.
///
/// The integrator keeps its step size and first-same-as-last stage between
/// calls to [`Dopri5::advance`], so a trajectory can be sampled at arbitrary
/// output times without restarting.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub stats: StepStats,
    h: f64,
    err_old: f64,
    k: [Vec<C64>; 7],
    stage: Vec<C64>,
    y_new: Vec<C64>,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_max: f64::INFINITY,
            stats: StepStats::default(),
            h: 0.0,
            err_old: 1e-4,
            k: Default::default(),
            stage: Vec::new(),
            y_new: Vec::new(),
            fsal_valid: false,
        }
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Current (proposed) step size.
    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Forgets the cached derivative, e.g. after the state was changed
    /// externally.
    pub fn invalidate(&mut self) {
        self.fsal_valid = false;
    }

    fn ensure_storage(&mut self, n: usize) {
        if self.stage.len() != n {
            for k in &mut self.k {
                k.resize(n, C64::new(0.0, 0.0));
            }
            self.stage.resize(n, C64::new(0.0, 0.0));
            self.y_new.resize(n, C64::new(0.0, 0.0));
            self.fsal_valid = false;
        }
    }

    fn initial_step(&mut self, t: f64, y: &[C64], f: &mut impl FnMut(f64, &[C64], &mut [C64])) -> f64 {
        let n = y.len() as f64;
        let scale = |i: usize| self.atol + self.rtol * y[i].norm();
        let d0 = (y.iter().enumerate().map(|(i, v)| (v.norm() / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (self.k[0].iter().enumerate().map(|(i, v)| (v.norm() / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..y.len() {
            self.stage[i] = y[i] + self.k[0][i] * h0;
        }
        let mut probe = vec![C64::new(0.0, 0.0); y.len()];
        f(t + h0, &self.stage, &mut probe);
        self.stats.rhs_evals += 1;
        let d2 = (probe
            .iter()
            .zip(&self.k[0])
            .enumerate()
            .map(|(i, (a, b))| ((a - b).norm() / scale(i)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// Integrates `y' = f(t, y)` from `*t` to `t_end`.
    ///
    /// After every accepted step `post(t, y)` is called; it may modify `y`
    /// (returning `Ok(true)`), in which case the cached derivative is
    /// recomputed.
    pub fn advance<F, P>(&mut self, y: &mut [C64], t: &mut f64, t_end: f64, mut f: F, mut post: P) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
        P: FnMut(f64, &mut [C64]) -> Result<bool>,
    {
        let n = y.len();
        self.ensure_storage(n);
        if *t >= t_end {
            return Ok(());
        }
        if !self.fsal_valid {
            f(*t, y, &mut self.k[0]);
            self.stats.rhs_evals += 1;
            self.fsal_valid = true;
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(*t, y, &mut f);
        }

        while *t < t_end {
            let remaining = t_end - *t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h.min(self.h_max) };
            if h <= 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow { t: *t, h });
            }

            self.stages(y, *t, h, &mut f);
            let err = self.error_norm(y, h);

            if err <= 1.0 {
                let fac = (SAFETY * err.max(1e-10).powf(-0.2 + 0.75 * BETA) * self.err_old.powf(BETA))
                    .clamp(FAC_MIN, FAC_MAX);
                self.err_old = err.max(1e-4);
                *t = if last { t_end } else { *t + h };
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                if !last {
                    self.h = (h * fac).min(self.h_max);
                } else {
                    self.h = self.h.max(h * fac).min(self.h_max);
                }
                if post(*t, y)? {
                    f(*t, y, &mut self.k[0]);
                    self.stats.rhs_evals += 1;
                }
            } else {
                self.stats.rejected += 1;
                let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
                self.h = h * fac;
                if self.h <= 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t: *t, h: self.h });
                }
            }
        }
        Ok(())
    }

    fn stages(&mut self, y: &[C64], t: f64, h: f64, f: &mut impl FnMut(f64, &[C64], &mut [C64])) {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let s = &mut self.stage;
        for i in 0..n {
            s[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, s, k2);
        for i in 0..n {
            s[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, s, k3);
        for i in 0..n {
            s[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, s, k4);
        for i in 0..n {
            s[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, s, k5);
        for i in 0..n {
            s[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, s, k6);
        for i in 0..n {
            self.y_new[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t + h, &self.y_new, k7);
        self.stats.rhs_evals += 6;
    }

    fn error_norm(&self, y: &[C64], h: f64) -> f64 {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = self.atol + self.rtol * y[i].norm().max(self.y_new[i].norm());
            acc += (e.norm() / sc).powi(2);
        }
        (acc / y.len() as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_phase() {
        // y' = -i w y  =>  y(t) = exp(-i w t)
        let w = 3.0;
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut t = 0.0;
        let mut ig = Dopri5::new(1e-11, 1e-13);
        for k in 1..=10 {
            let te = k as f64;
            ig.advance(&mut y, &mut t, te, |_, y, dy| dy[0] = -C64::i() * w * y[0], |_, _| Ok(false)).unwrap();
            assert_eq!(t, te);
            let exact = (-C64::i() * w * te).exp();
            assert!((y[0] - exact).norm() < 1e-9, "t={te}: {}", (y[0] - exact).norm());
        }
        assert!(ig.stats.accepted > 10);
    }

    #[test]
    fn fifth_order_convergence() {
        // y' = t y, y(0) = 1 => y(1) = e^(1/2); global error should shrink
        // roughly tenfold per decade of tolerance^(1) for an adaptive method.
        let run = |tol: f64| {
            let mut y = vec![C64::new(1.0, 0.0)];
            let mut t = 0.0;
            let mut ig = Dopri5::new(tol, tol);
            ig.advance(&mut y, &mut t, 1.0, |t, y, dy| dy[0] = y[0] * t, |_, _| Ok(false)).unwrap();
            (y[0].re - 0.5f64.exp()).abs()
        };
        assert!(run(1e-6) < 1e-5);
        assert!(run(1e-10) < 1e-9);
    }

    #[test]
    fn post_step_hook_can_modify() {
        let mut y = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let mut t = 0.0;
        let mut ig = Dopri5::new(1e-10, 1e-12);
        let mut calls = 0;
        ig.advance(
            &mut y,
            &mut t,
            2.0,
            |_, y, dy| {
                dy[0] = -C64::i() * y[1];
                dy[1] = -C64::i() * y[0];
            },
            |_, y| {
                calls += 1;
                let n = (y[0].norm_sqr() + y[1].norm_sqr()).sqrt();
                y.iter_mut().for_each(|v| *v /= n);
                Ok(true)
            },
        )
        .unwrap();
        assert_eq!(calls as u64, ig.stats.accepted);
        assert!((y[0] - C64::new(2f64.cos(), 0.0)).norm() < 1e-8);
    }
}
