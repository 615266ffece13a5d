//! Exact lower-bound machinery: the two-point expected-length bound, the
//! chi-square distance of the null-vs-mixture testing problem via
//! hypergeometric enumeration, the MGF bound, and the separation gap.
//!
//! All pmf and binomial computations run in the log domain with compensated
//! summation so that free-coordinate counts up to 1e4 stay exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-point testing problem: null functional value mu0, alternative mu1,
/// and the total-variation distance between the two data distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPointProblem {
    pub mu0: f64,
    pub mu1: f64,
    pub alpha: f64,
    pub tv: f64,
}

/// Expected-length lower bound |mu1 - mu0| (1 - 2 alpha - TV)_+.
pub fn two_point_length_bound(tp: &TwoPointProblem) -> f64 {
    (tp.mu1 - tp.mu0).abs() * (1.0 - 2.0 * tp.alpha - tp.tv).max(0.0)
}

/// Null-vs-mixture construction: spikes of magnitude `rho` on `m` of the `p1`
/// free coordinates, with the coupling constants of the two-row covariance
/// perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n: usize,
    /// Number of free coordinates carrying the spikes.
    pub p1: usize,
    /// Spike support size (>= 1).
    pub m: usize,
    /// Spike magnitude.
    pub rho: f64,
    pub sigma: f64,
    pub psi1_star: f64,
    pub rho0: f64,
}

impl MixtureSpec {
    /// c = (rho0 (rho0 - psi1*) + f1) / sigma^2 with
    /// f1 = sigma^2 + psi1*^2 - rho0 psi1*. Equals 2 exactly when
    /// rho0 = psi1* + sigma.
    pub fn coupling(&self) -> f64 {
        let f1 = self.sigma * self.sigma + self.psi1_star * self.psi1_star
            - self.rho0 * self.psi1_star;
        (self.rho0 * (self.rho0 - self.psi1_star) + f1) / (self.sigma * self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::OutOfRange("n must be positive".into()));
        }
        if self.m == 0 || self.m > self.p1 {
            return Err(Error::OutOfRange(format!(
                "need 1 <= m <= p1, got m = {}, p1 = {}",
                self.m, self.p1
            )));
        }
        if !(self.rho >= 0.0) || !(self.sigma > 0.0) {
            return Err(Error::OutOfRange(
                "rho must be >= 0 and sigma > 0".into(),
            ));
        }
        Ok(())
    }
}

/// ln Gamma via libm; exact enough for binomial ratios at p1 up to 1e6.
fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    libm::lgamma((n + 1) as f64) - libm::lgamma((k + 1) as f64) - libm::lgamma((n - k + 1) as f64)
}

/// Hypergeometric(p, k, k) log-pmf: ln P(J = j) for the overlap of two
/// uniformly random k-subsets of [p].
fn hypergeom_ln_pmf(p: u64, k: u64, j: u64) -> f64 {
    ln_binomial(k, j) + ln_binomial(p - k, k - j) - ln_binomial(p, k)
}

/// Neumaier compensated summation.
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact chi-square distance of the null-vs-mixture problem:
///   chi^2 = E (1 - c rho^2 J)^{-n} - 1,  J ~ Hypergeometric(p1, m, m),
/// computed term by term as pmf(j) * expm1(-n ln(1 - c rho^2 j)) so the j = 0
/// term vanishes identically and no cancellation occurs.
pub fn chisq_mixture(spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    let c = spec.coupling();
    let top = c * spec.rho * spec.rho * spec.m as f64;
    if top >= 1.0 {
        return Err(Error::DivergentChiSq(top));
    }
    if spec.rho == 0.0 {
        return Ok(0.0);
    }
    let mut acc = CompensatedSum::new();
    let (p1, m) = (spec.p1 as u64, spec.m as u64);
    let lo = m.saturating_sub(p1 - m);
    for j in lo..=m {
        let ln_pmf = hypergeom_ln_pmf(p1, m, j);
        if ln_pmf == f64::NEG_INFINITY {
            continue;
        }
        let arg = c * spec.rho * spec.rho * j as f64;
        // (1 - arg)^{-n} - 1 = expm1(-n ln_1p(-arg)).
        let term = ln_pmf.exp() * libm::expm1(-(spec.n as f64) * libm::log1p(-arg));
        acc.add(term);
    }
    Ok(acc.value().max(0.0))
}

/// TV <= sqrt(chi^2).
pub fn tv_upper_from_chisq(chisq: f64) -> f64 {
    chisq.max(0.0).sqrt()
}

/// Exact MGF of a Hypergeometric(p, k, k) overlap count versus the closed-form
/// bound e^{k^2/(p-k)} (1 - k/p + (k/p) e^t)^k.
pub fn hypergeom_mgf_bound_check(p: usize, k: usize, t: f64) -> Result<(f64, f64)> {
    if k == 0 || k >= p {
        return Err(Error::OutOfRange(format!(
            "need 1 <= k < p, got k = {k}, p = {p}"
        )));
    }
    let (pu, ku) = (p as u64, k as u64);
    let lo = ku.saturating_sub(pu - ku);
    let mut acc = CompensatedSum::new();
    for j in lo..=ku {
        let ln_pmf = hypergeom_ln_pmf(pu, ku, j);
        if ln_pmf == f64::NEG_INFINITY {
            continue;
        }
        acc.add((ln_pmf + t * j as f64).exp());
    }
    let exact = acc.value();
    let frac = k as f64 / p as f64;
    let ln_bound = k as f64 * k as f64 / (p - k) as f64
        + k as f64 * (1.0 - frac + frac * t.exp()).ln();
    Ok((exact, ln_bound.exp()))
}

/// Separation gap |mu1 - mu0| = sigma m rho^2 / (1 - m rho^2).
pub fn separation_gap(spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    let delta_sq = spec.m as f64 * spec.rho * spec.rho;
    if delta_sq >= 1.0 {
        return Err(Error::GapDiverges(delta_sq));
    }
    Ok(spec.sigma * delta_sq / (1.0 - delta_sq))
}

/// One point of the adaptivity lower bound, composed from the three steps:
/// build the mixture with psi1* = 0 and rho0 = sigma (so the coupling is 2),
/// pick rho = sqrt(ln(4 p1 / (zeta0^2 k^2)) / (8 n)), bound TV by the exact
/// chi-square, and apply the two-point bound at the separation gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundPoint {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub k1: usize,
    pub m: usize,
    pub p1: usize,
    pub rho: f64,
    pub chisq: f64,
    pub tv: f64,
    pub gap: f64,
    pub bound: f64,
}

pub fn adaptivity_lower_curve(
    n: usize,
    p: usize,
    k: usize,
    k1: usize,
    alpha: f64,
    zeta0: f64,
    sigma: f64,
) -> Result<LowerBoundPoint> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::OutOfRange(format!(
            "alpha must lie in (0, 1/2), got {alpha}"
        )));
    }
    if !(zeta0 > 0.0 && zeta0 < 1.0) {
        return Err(Error::OutOfRange(format!(
            "zeta0 must lie in (0, 1), got {zeta0}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange("sigma must be positive".into()));
    }
    if k == 0 {
        return Err(Error::OutOfRange("k must be >= 1".into()));
    }
    if p <= k1 + 1 {
        return Err(Error::OutOfRange(format!(
            "need p > k1 + 1, got p = {p}, k1 = {k1}"
        )));
    }
    let p1 = p - k1 - 1;
    let m = (((zeta0 * k as f64) / 2.0).floor() as usize).max(1);
    if m > p1 {
        return Err(Error::OutOfRange(format!(
            "spike support m = {m} exceeds free coordinates p1 = {p1}"
        )));
    }
    let log_arg = 4.0 * p1 as f64 / (zeta0 * zeta0 * (k * k) as f64);
    if log_arg <= 1.0 {
        return Err(Error::OutOfRange(format!(
            "rho^2 would be nonpositive: 4 p1 / (zeta0^2 k^2) = {log_arg} <= 1"
        )));
    }
    let rho = (log_arg.ln() / (8.0 * n as f64)).sqrt();
    let spec = MixtureSpec {
        n,
        p1,
        m,
        rho,
        sigma,
        psi1_star: 0.0,
        rho0: sigma,
    };
    let chisq = chisq_mixture(&spec)?;
    let tv = tv_upper_from_chisq(chisq).min(2.0);
    let gap = separation_gap(&spec)?;
    let bound = two_point_length_bound(&TwoPointProblem {
        mu0: 0.0,
        mu1: gap,
        alpha,
        tv,
    });
    Ok(LowerBoundPoint {
        n,
        p,
        k,
        k1,
        m,
        p1,
        rho,
        chisq,
        tv,
        gap,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_rate, RateQuery, RateRegime};
    use crate::sampler::rng_from_seed;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn two_point_trivia() {
        let mk = |mu1: f64, alpha: f64, tv: f64| TwoPointProblem {
            mu0: 0.0,
            mu1,
            alpha,
            tv,
        };
        assert_eq!(two_point_length_bound(&mk(0.7, 0.05, 0.95)), 0.0);
        assert_eq!(two_point_length_bound(&mk(0.0, 0.05, 0.1)), 0.0);
        assert_relative_eq!(
            two_point_length_bound(&mk(0.5, 0.05, 0.4)),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn coupling_is_two_under_step2_choice() {
        for (psi, sigma) in [(0.0, 1.0), (0.3, 0.7), (-2.0, 3.5), (11.0, 0.25)] {
            let spec = MixtureSpec {
                n: 10,
                p1: 50,
                m: 2,
                rho: 0.01,
                sigma,
                psi1_star: psi,
                rho0: psi + sigma,
            };
            assert!(
                (spec.coupling() - 2.0).abs() <= 1e-12,
                "psi = {psi}, sigma = {sigma}: c = {}",
                spec.coupling()
            );
        }
    }

    #[test]
    fn chisq_zero_rho_is_zero() {
        let spec = MixtureSpec {
            n: 100,
            p1: 40,
            m: 3,
            rho: 0.0,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        assert_eq!(chisq_mixture(&spec).unwrap(), 0.0);
    }

    #[test]
    fn chisq_divergence_detected() {
        let spec = MixtureSpec {
            n: 10,
            p1: 40,
            m: 4,
            rho: 0.5,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        assert!(matches!(
            chisq_mixture(&spec),
            Err(Error::DivergentChiSq(_))
        ));
    }

    #[test]
    fn chisq_enumeration_matches_hand_sum() {
        // p1 = 20, m = 2, rho^2 = 0.01, c = 2, n = 10: pmf (153, 36, 1)/190,
        // values (1, 0.98^-10, 0.96^-10).
        let spec = MixtureSpec {
            n: 10,
            p1: 20,
            m: 2,
            rho: 0.1,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        let want = (153.0 / 190.0) * 0.0
            + (36.0 / 190.0) * ((0.98_f64).powi(-10) - 1.0)
            + (1.0 / 190.0) * ((0.96_f64).powi(-10) - 1.0);
        assert_relative_eq!(chisq_mixture(&spec).unwrap(), want, max_relative = 1e-12);
    }

    /// Monte Carlo oracle for the chi-square enumeration: draw overlap counts
    /// of two uniform m-subsets directly.
    pub(crate) fn chisq_monte_carlo(spec: &MixtureSpec, pairs: usize, seed: u64) -> (f64, f64) {
        let c = spec.coupling();
        let mut rng = rng_from_seed(seed);
        let mut acc = 0.0_f64;
        let mut acc_sq = 0.0_f64;
        let mut support = vec![false; spec.p1];
        for _ in 0..pairs {
            support.iter_mut().for_each(|s| *s = false);
            // First subset: mark m coordinates.
            let mut chosen = 0usize;
            while chosen < spec.m {
                let j = rng.random_range(0..spec.p1);
                if !support[j] {
                    support[j] = true;
                    chosen += 1;
                }
            }
            // Second subset: count overlap while sampling without replacement.
            let mut picked = vec![false; spec.p1];
            let mut overlap = 0u32;
            let mut drawn = 0usize;
            while drawn < spec.m {
                let j = rng.random_range(0..spec.p1);
                if !picked[j] {
                    picked[j] = true;
                    drawn += 1;
                    if support[j] {
                        overlap += 1;
                    }
                }
            }
            let v = (1.0 - c * spec.rho * spec.rho * overlap as f64).powi(-(spec.n as i32)) - 1.0;
            acc += v;
            acc_sq += v * v;
        }
        let mean = acc / pairs as f64;
        let var = (acc_sq / pairs as f64 - mean * mean).max(0.0);
        (mean, (var / pairs as f64).sqrt())
    }

    #[test]
    fn chisq_matches_monte_carlo() {
        let spec = MixtureSpec {
            n: 10,
            p1: 20,
            m: 2,
            rho: 0.1,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        let exact = chisq_mixture(&spec).unwrap();
        let (mc, se) = chisq_monte_carlo(&spec, 200_000, 17);
        assert!(
            (exact - mc).abs() <= 3.0 * se,
            "exact {exact}, mc {mc} +- {se}"
        );
    }

    #[test]
    fn chisq_monotone_in_n_and_rho() {
        let base = MixtureSpec {
            n: 50,
            p1: 60,
            m: 3,
            rho: 0.05,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        let mut prev = 0.0;
        for n in [10, 20, 40, 80, 160] {
            let v = chisq_mixture(&MixtureSpec { n, ..base.clone() }).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for rho in [0.0, 0.01, 0.02, 0.04, 0.08] {
            let v = chisq_mixture(&MixtureSpec { rho, ..base.clone() }).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn tv_from_chisq() {
        assert_eq!(tv_upper_from_chisq(0.0), 0.0);
        assert_eq!(tv_upper_from_chisq(0.25), 0.5);
        let spec = MixtureSpec {
            n: 10,
            p1: 20,
            m: 2,
            rho: 0.1,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        let c = chisq_mixture(&spec).unwrap();
        assert_eq!(tv_upper_from_chisq(c), c.sqrt());
    }

    #[test]
    fn mgf_bound_at_zero_and_limits() {
        let (exact, bound) = hypergeom_mgf_bound_check(10, 2, 0.0).unwrap();
        assert_relative_eq!(exact, 1.0, epsilon = 1e-12);
        assert!(bound >= 1.0);
        // t -> -inf: exact -> P(J = 0) <= e^{k^2/(p-k)} (1 - k/p)^k.
        let (exact, bound) = hypergeom_mgf_bound_check(10, 2, -40.0).unwrap();
        let p_j0 = (hypergeom_ln_pmf(10, 2, 0)).exp();
        assert_relative_eq!(exact, p_j0, max_relative = 1e-10);
        let limit = (2.0_f64 * 2.0 / 8.0).exp() * (1.0 - 0.2_f64).powi(2);
        assert!(exact <= bound);
        assert_relative_eq!(bound, limit, max_relative = 1e-9);
    }

    #[test]
    fn mgf_bound_small_case_hand_enumeration() {
        // p = 10, k = 2: pmf over j in {0,1,2} is (28, 16, 1)/45.
        let t = 1.0;
        let (exact, bound) = hypergeom_mgf_bound_check(10, 2, t).unwrap();
        let want = (28.0 + 16.0 * t.exp() + 1.0 * (2.0 * t).exp()) / 45.0;
        assert_relative_eq!(exact, want, max_relative = 1e-12);
        assert!(exact <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn mgf_bound_holds_on_grid() {
        for p in 5..=50usize {
            for k in 1..=10.min(p - 1) {
                for t in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0] {
                    let (exact, bound) = hypergeom_mgf_bound_check(p, k, t).unwrap();
                    assert!(
                        exact <= bound * (1.0 + 1e-12),
                        "violation at p={p}, k={k}, t={t}: {exact} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn separation_gap_arithmetic() {
        let mk = |m: usize, rho: f64| MixtureSpec {
            n: 10,
            p1: 100,
            m,
            rho,
            sigma: 1.0,
            psi1_star: 0.0,
            rho0: 1.0,
        };
        assert_eq!(separation_gap(&mk(3, 0.0)).unwrap(), 0.0);
        // m rho^2 = 1/2 -> gap = 1.
        let spec = mk(2, 0.5);
        assert_relative_eq!(separation_gap(&spec).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            separation_gap(&mk(4, 0.5)),
            Err(Error::GapDiverges(_))
        ));
    }

    #[test]
    fn lower_curve_positive_on_reference_config() {
        let pt = adaptivity_lower_curve(400, 2000, 10, 4, 0.05, 0.5, 1.0).unwrap();
        assert!(
            pt.chisq <= (0.5 - 0.05) * (0.5 - 0.05),
            "chisq = {} misses the target",
            pt.chisq
        );
        assert!(pt.bound > 0.0, "bound = {}", pt.bound);
    }

    #[test]
    fn lower_curve_rejects_bad_alpha() {
        assert!(adaptivity_lower_curve(400, 2000, 10, 4, 0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn lower_curve_linear_in_sigma() {
        // sigma enters multiplicatively; powers of two make it exact.
        let base = adaptivity_lower_curve(400, 2000, 10, 4, 0.05, 0.5, 1.0).unwrap();
        for sigma in [0.5, 2.0, 4.0] {
            let pt = adaptivity_lower_curve(400, 2000, 10, 4, 0.05, 0.5, sigma).unwrap();
            assert_eq!(pt.bound, base.bound * sigma);
        }
    }

    #[test]
    fn gap_tracks_k_logp_over_n_in_computed_band() {
        // The separation gap scales like (m/k) * ln(4 p1 / (zeta0^2 k^2)) / 8
        // relative to k ln p / n. Evaluating the exact formulas over this
        // grid gives the band [0.0157, 0.2019]; the integer floor of
        // m = zeta0 k / 2 drives the lower corner (worst at k = 7, p = 1e4).
        let zeta0 = 0.5;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for &n in &[100usize, 1000, 10_000] {
            for &p in &[100usize, 1000, 10_000] {
                let kmax = ((p as f64).sqrt() / (p as f64).ln()).floor() as usize;
                for k in 1..=kmax.max(1) {
                    let k1 = 0;
                    let pt = adaptivity_lower_curve(n, p, k, k1, 0.05, zeta0, 1.0).unwrap();
                    let ratio = pt.gap / (k as f64 * (p as f64).ln() / n as f64);
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                    assert!(
                        ratio > 0.01 && ratio < 0.5,
                        "n={n} p={p} k={k}: ratio {ratio}"
                    );
                }
            }
        }
        assert!(lo > 0.0 && hi < 1.0, "band [{lo}, {hi}]");
    }

    #[test]
    fn lower_bound_below_upper_rate() {
        // Sanity: the computable lower bound never exceeds 10x the reference
        // upper rate on the sweep grid.
        for &n in &[100usize, 1000, 10_000] {
            for &p in &[100usize, 1000, 10_000] {
                let kmax = ((p as f64).sqrt() / (p as f64).ln()).floor() as usize;
                for k in 1..=kmax.max(1) {
                    let pt = adaptivity_lower_curve(n, p, k, 0, 0.05, 0.5, 1.0).unwrap();
                    let rate = reference_rate(&RateQuery {
                        regime: RateRegime::SparseUnknown,
                        n,
                        p,
                        k,
                        k1: 0,
                        xi_l2: 1.0,
                        xi_linf: 1.0,
                        sigma0: 1.0,
                    })
                    .unwrap();
                    assert!(
                        pt.bound <= 10.0 * rate,
                        "n={n} p={p} k={k}: bound {} vs rate {rate}",
                        pt.bound
                    );
                }
            }
        }
    }
}
