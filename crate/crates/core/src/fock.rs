//! Occupation-number bookkeeping for `N` bosons on `M` modes.
//!
//! Configurations are stored in descending lexicographic order, so `(N, 0, ..)`
//! has rank 0 and `(.., 0, N)` is last. Ranks come from the combinatorial
//! number system in `O(M)`.

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

/// Default ceiling on the number of configurations.
pub const DEFAULT_DIMENSION_CAP: usize = 20_000_000;

/// `binom(n, k)` in 128-bit arithmetic, saturating on overflow.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of configurations of `n` bosons on `m` modes, `binom(n + m - 1, n)`.
pub fn dimension(n_particles: usize, n_modes: usize) -> u128 {
    if n_modes == 0 {
        return u128::from(n_particles == 0);
    }
    binomial((n_particles + n_modes - 1) as u64, n_particles as u64)
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    n_particles: usize,
    n_modes: usize,
    occ: Vec<u8>,
    /// `count[m][r]`: configurations of `r` bosons on `m` modes.
    count: Vec<Vec<u64>>,
}

/// One nonzero matrix element `<to| op |from> = amp` of a number-conserving
/// operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub from: u32,
    pub to: u32,
    pub amp: f64,
}

impl FockBasis {
    pub fn new(n_particles: usize, n_modes: usize) -> Result<Self> {
        Self::with_cap(n_particles, n_modes, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(n_particles: usize, n_modes: usize, cap: usize) -> Result<Self> {
        if n_particles == 0 || n_modes == 0 {
            return Err(Error::Config(format!(
                "need at least one particle and one mode, got N = {n_particles}, M = {n_modes}"
            )));
        }
        if n_particles > u8::MAX as usize {
            return Err(Error::Config(format!("at most {} particles supported", u8::MAX)));
        }
        let dim = dimension(n_particles, n_modes);
        if dim > cap as u128 || dim > u32::MAX as u128 {
            return Err(Error::DimensionCap { n_particles, n_modes, dim, cap });
        }
        let dim = dim as usize;

        let count = (0..=n_modes)
            .map(|m| (0..=n_particles).map(|r| dimension(r, m) as u64).collect())
            .collect();

        let mut occ = Vec::with_capacity(dim * n_modes);
        let mut cur = vec![0u8; n_modes];
        cur[0] = n_particles as u8;
        occ.extend_from_slice(&cur);
        for _ in 1..dim {
            // Move one boson from the last occupied mode before the tail into
            // the next mode and gather the tail there.
            let i = (0..n_modes - 1).rev().find(|&i| cur[i] > 0).expect("enumeration overran");
            let tail: u8 = cur[i + 1..].iter().sum();
            cur[i] -= 1;
            cur[i + 1..].iter_mut().for_each(|v| *v = 0);
            cur[i + 1] = tail + 1;
            occ.extend_from_slice(&cur);
        }
        Ok(Self { n_particles, n_modes, occ, count })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn len(&self) -> usize {
        self.occ.len() / self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    /// Occupations of configuration `i`.
    #[inline]
    pub fn unrank(&self, i: usize) -> &[u8] {
        &self.occ[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn configs(&self) -> impl Iterator<Item = &[u8]> {
        self.occ.chunks_exact(self.n_modes)
    }

    /// Index of an occupation vector; `None` if it is not in the basis.
    pub fn try_rank(&self, n: &[u8]) -> Option<usize> {
        if n.len() != self.n_modes || n.iter().map(|&v| v as usize).sum::<usize>() != self.n_particles {
            return None;
        }
        Some(self.rank_unchecked(n))
    }

    #[inline]
    pub fn rank_unchecked(&self, n: &[u8]) -> usize {
        let m = self.n_modes;
        let mut remaining = self.n_particles;
        let mut rank = 0u64;
        for (i, &ni) in n.iter().enumerate().take(m - 1) {
            let ni = ni as usize;
            if remaining > ni {
                rank += self.count[m - i][remaining - ni - 1];
            }
            remaining -= ni;
        }
        rank as usize
    }

    pub fn rank(&self, n: &[u8]) -> Result<usize> {
        self.try_rank(n).ok_or_else(|| Error::Index(format!("{n:?} is not a configuration of this basis")))
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.n_modes {
            return Err(Error::Index(format!("mode {k} out of range for {} modes", self.n_modes)));
        }
        Ok(())
    }

    /// Nonzero elements of `b_k^dag b_q`.
    pub fn hop_table(&self, k: usize, q: usize) -> Result<Vec<Transition>> {
        self.check_mode(k)?;
        self.check_mode(q)?;
        let mut out = Vec::new();
        let mut buf = vec![0u8; self.n_modes];
        for (j, n) in self.configs().enumerate() {
            if n[q] == 0 {
                continue;
            }
            if k == q {
                out.push(Transition { from: j as u32, to: j as u32, amp: n[q] as f64 });
                continue;
            }
            buf.copy_from_slice(n);
            let amp = ((n[q] as f64) * (n[k] as f64 + 1.0)).sqrt();
            buf[q] -= 1;
            buf[k] += 1;
            out.push(Transition { from: j as u32, to: self.rank_unchecked(&buf) as u32, amp });
        }
        Ok(out)
    }

    /// `(b_k^dag b_q) C`.
    pub fn hop_action(&self, c: &[C64], k: usize, q: usize) -> Result<Vec<C64>> {
        self.check_len(c)?;
        let mut out = vec![C64::new(0.0, 0.0); c.len()];
        for t in self.hop_table(k, q)? {
            out[t.to as usize] += c[t.from as usize] * t.amp;
        }
        Ok(out)
    }

    fn check_len(&self, c: &[C64]) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::Index(format!(
                "coefficient vector has length {} but the basis has {}",
                c.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Unit vector on a single configuration.
    pub fn fock_state(&self, n: &[u8]) -> Result<Vec<C64>> {
        let mut c = vec![C64::new(0.0, 0.0); self.len()];
        c[self.rank(n)?] = C64::new(1.0, 0.0);
        Ok(c)
    }

    /// All bosons in the uniform superposition `sum_k b_k^dag / sqrt(M)`:
    /// `C_n = sqrt(N! / prod n_k!) / M^(N/2)`.
    pub fn condensate(&self) -> Vec<C64> {
        let ln_fact = |n: usize| (1..=n).map(|v| (v as f64).ln()).sum::<f64>();
        let base = ln_fact(self.n_particles) - self.n_particles as f64 * (self.n_modes as f64).ln();
        self.configs()
            .map(|n| {
                let l = base - n.iter().map(|&v| ln_fact(v as usize)).sum::<f64>();
                C64::new((0.5 * l).exp(), 0.0)
            })
            .collect()
    }
}

/// One- and diagonal two-body reduced densities.
#[derive(Clone, Debug)]
pub struct ReducedDensities {
    /// `rho_kq = <b_k^dag b_q>`.
    pub rho1: DMatrix<C64>,
    /// `rho_kkkk = <n_k (n_k - 1)>`.
    pub rho2_diag: Vec<f64>,
}

impl ReducedDensities {
    pub fn trace(&self) -> f64 {
        self.rho1.diagonal().iter().map(|v| v.re).sum()
    }
}

/// Streams over the configurations to accumulate `rho_kq` and `rho_kkkk`.
pub fn reduced_densities(c: &[C64], basis: &FockBasis) -> Result<ReducedDensities> {
    basis.check_len(c)?;
    let norm: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        log::warn!("reduced densities of an unnormalised state (|C|^2 = {norm})");
    }
    let m = basis.n_modes();
    let mut rho1 = DMatrix::<C64>::zeros(m, m);
    let mut rho2 = vec![0.0; m];
    let mut buf = vec![0u8; m];
    for (j, n) in basis.configs().enumerate() {
        let cj = c[j];
        let p = cj.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for k in 0..m {
            let nk = n[k] as f64;
            rho1[(k, k)] += p * nk;
            rho2[k] += p * nk * (nk - 1.0);
        }
        // <i| b_k^dag b_q |j> C_i^* C_j for k != q.
        for q in 0..m {
            if n[q] == 0 {
                continue;
            }
            for k in 0..m {
                if k == q {
                    continue;
                }
                buf.copy_from_slice(n);
                buf[q] -= 1;
                buf[k] += 1;
                let i = basis.rank_unchecked(&buf);
                let amp = ((n[q] as f64) * (n[k] as f64 + 1.0)).sqrt();
                rho1[(k, q)] += c[i].conj() * cj * amp;
            }
        }
    }
    Ok(ReducedDensities { rho1, rho2_diag: rho2 })
}
