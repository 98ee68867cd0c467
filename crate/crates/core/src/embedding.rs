//! Analytic view of the embedded offspring law: the gap-averaged pgf of the
//! plain-process continuation, its composition with the marked law, and the
//! moment identities the simulators are checked against.

use crate::environment::GapLaw;
use crate::numeric::{derivative_at_one, second_derivative_at_one};
use crate::offspring::{LawError, OffspringLaw};
use crate::scalar::{compound_step, convolve};
use thiserror::Error;

/// Gap tail mass beyond the truncation point used in pgf mixtures.
pub const GAP_TAIL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("embedded pmf extraction requires finite-support mu and nu")]
    UnsupportedVariant,
}

/// A value computed under gap-law truncation, with the residual tail mass
/// that bounds its error (all pgf values lie in [0, 1]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated {
    pub value: f64,
    pub residual: f64,
}

/// The triple (nu, gap law, mu) with the derived embedded-law functionals.
#[derive(Debug, Clone)]
pub struct EmbeddedLawView {
    pub nu: OffspringLaw,
    pub gaps: GapLaw,
    pub mu: OffspringLaw,
}

impl EmbeddedLawView {
    pub fn new(nu: OffspringLaw, gaps: GapLaw, mu: OffspringLaw) -> Self {
        EmbeddedLawView { nu, gaps, mu }
    }

    /// g~(s) = sum_d P{d} f_mu^{(d-1)}(s): the pgf of the population after
    /// d - 1 plain generations started from one individual, averaged over
    /// the gap. f_mu^{(0)}(s) = s.
    pub fn g_tilde(&self, s: f64) -> Result<Truncated, EmbeddingError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(LawError::OutOfDomain(s).into());
        }
        Ok(self.g_tilde_unchecked(s))
    }

    fn g_tilde_unchecked(&self, s: f64) -> Truncated {
        let (d_max, residual) = self.gaps.truncation_point(GAP_TAIL);
        let mut iterate = s;
        let mut acc = self.gaps.mass_at(1) * s;
        for d in 2..=d_max {
            iterate = self.mu.pgf_unchecked(iterate);
            acc += self.gaps.mass_at(d) * iterate;
        }
        Truncated {
            value: acc,
            residual,
        }
    }

    /// Embedded pgf f_nu(g~(s)).
    pub fn pgf(&self, s: f64) -> Result<Truncated, EmbeddingError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(LawError::OutOfDomain(s).into());
        }
        Ok(self.pgf_truncated(s))
    }

    fn pgf_truncated(&self, s: f64) -> Truncated {
        let g = self.g_tilde_unchecked(s);
        Truncated {
            value: self.nu.pgf_unchecked(g.value.min(1.0)),
            residual: g.residual,
        }
    }

    /// Mean of the embedded law. Criticality of mu makes the plain
    /// continuation mean-neutral, so this is exactly the mean of nu.
    pub fn mean(&self) -> f64 {
        self.nu.mean()
    }

    /// Mean recovered numerically from the embedded pgf.
    pub fn mean_numeric(&self) -> f64 {
        derivative_at_one(|s| self.pgf_truncated(s).value, 0.02, 5)
    }

    /// sigma of the embedded law: sigma_nu + sigma_mu (E d - 1) / A_nu.
    pub fn sigma_formula(&self) -> f64 {
        self.nu.sigma() + self.mu.sigma() * (self.gaps.mean() - 1.0) / self.nu.mean()
    }

    /// sigma recovered from the second derivative of the embedded pgf.
    pub fn sigma_numeric(&self) -> f64 {
        let a = self.nu.mean();
        second_derivative_at_one(|s| self.pgf_truncated(s).value, 0.05, 5) / (a * a)
    }

    /// Numeric derivative of g~ at 1; equals 1 for critical mu and E d < oo.
    pub fn g_tilde_derivative_at_one(&self) -> f64 {
        derivative_at_one(|s| self.g_tilde_unchecked(s).value, 0.02, 5)
    }

    /// Truncated pmf of the embedded law, by convolution. Requires finite
    /// supports; the residual accounts for both the gap-law tail and any
    /// probability mass pushed past the cutoff.
    pub fn pmf(&self, cutoff: usize) -> Result<(Vec<f64>, f64), EmbeddingError> {
        let (mu_w, nu_w) = match (&self.mu, &self.nu) {
            (OffspringLaw::Pmf { weights: mw }, OffspringLaw::Pmf { weights: nw }) => (mw, nw),
            _ => return Err(EmbeddingError::UnsupportedVariant),
        };
        let (d_max, gap_residual) = self.gaps.truncation_point(GAP_TAIL);
        // pmf of the plain continuation after d - 1 generations, mixed over d
        let mut continuation = vec![0.0f64; cutoff];
        let mut generation_pmf = vec![0.0f64; 2];
        generation_pmf[1] = 1.0; // delta_1: zero plain generations
        for d in 1..=d_max {
            let w = self.gaps.mass_at(d);
            if w > 0.0 {
                for (j, &p) in generation_pmf.iter().enumerate() {
                    if j < cutoff {
                        continuation[j] += w * p;
                    }
                }
            }
            if d < d_max {
                generation_pmf = compound_step(&generation_pmf, mu_w, cutoff);
            }
        }
        // embedded pmf: nu-many iid copies of the continuation
        let mut out = vec![0.0f64; cutoff];
        let mut power = vec![1.0f64];
        for (l, &wl) in nu_w.iter().enumerate() {
            if wl > 0.0 {
                for (j, &q) in power.iter().enumerate() {
                    if j < cutoff {
                        out[j] += wl * q;
                    }
                }
            }
            if l + 1 < nu_w.len() {
                power = convolve(&power, &continuation, cutoff);
            }
        }
        let kept: f64 = out.iter().sum();
        Ok((out, (1.0 - kept).max(gap_residual)))
    }

    /// kappa of the embedded law at cutoff `a`, from the truncated pmf.
    pub fn kappa(&self, a: u64, cutoff: usize) -> Result<Truncated, EmbeddingError> {
        let (pmf, residual) = self.pmf(cutoff)?;
        let mean = self.mean();
        let tail: f64 = pmf
            .iter()
            .enumerate()
            .skip(a as usize)
            .map(|(j, &p)| (j * j) as f64 * p)
            .sum();
        Ok(Truncated {
            value: tail / (mean * mean),
            residual,
        })
    }
}

/// One row of the `embed-check` table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EmbedCheckRow {
    pub label: String,
    pub a_nu: f64,
    pub a_embedded_numeric: f64,
    pub sigma_formula: f64,
    pub sigma_numeric: f64,
    pub gap_residual: f64,
}

/// Identity table for a batch of views.
pub fn embed_check_rows(views: &[(String, EmbeddedLawView)]) -> Vec<EmbedCheckRow> {
    views
        .iter()
        .map(|(label, view)| {
            let residual = view.gaps.truncation_point(GAP_TAIL).1;
            EmbedCheckRow {
                label: label.clone(),
                a_nu: view.mean(),
                a_embedded_numeric: view.mean_numeric(),
                sigma_formula: view.sigma_formula(),
                sigma_numeric: view.sigma_numeric(),
                gap_residual: residual,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_two() -> OffspringLaw {
        OffspringLaw::pmf(vec![0.5, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn g_tilde_unit_gap_is_identity() {
        let view = EmbeddedLawView::new(half_two(), GapLaw::fixed(1).unwrap(), half_two());
        for s in [0.0, 0.3, 0.7, 1.0] {
            let g = view.g_tilde(s).unwrap();
            assert!((g.value - s).abs() < 1e-15);
            assert_eq!(g.residual, 0.0);
        }
    }

    #[test]
    fn g_tilde_one_composition() {
        // d = 2: g~(s) = f_mu(s) = 0.5 + 0.5 s^2
        let view = EmbeddedLawView::new(half_two(), GapLaw::fixed(2).unwrap(), half_two());
        let g = view.g_tilde(0.0).unwrap();
        assert!((g.value - 0.5).abs() < 1e-15);
        let g = view.g_tilde(0.6).unwrap();
        assert!((g.value - (0.5 + 0.5 * 0.36)).abs() < 1e-15);
    }

    #[test]
    fn embedded_pgf_golden() {
        let view = EmbeddedLawView::new(half_two(), GapLaw::fixed(2).unwrap(), half_two());
        // f_nu(g~(0)) = f_nu(0.5) = 0.625
        assert!((view.pgf(0.0).unwrap().value - 0.625).abs() < 1e-15);
        assert!((view.pgf(1.0).unwrap().value - 1.0).abs() < 1e-12);

        // d = 1: embedded pgf is f_nu pointwise
        let unit = EmbeddedLawView::new(
            OffspringLaw::geometric(2.0).unwrap(),
            GapLaw::fixed(1).unwrap(),
            half_two(),
        );
        for s in [0.0, 0.4, 0.9] {
            assert!((unit.pgf(s).unwrap().value - unit.nu.pgf(s).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_error_propagates() {
        let view = EmbeddedLawView::new(half_two(), GapLaw::fixed(2).unwrap(), half_two());
        assert!(view.g_tilde(1.2).is_err());
        assert!(view.pgf(-0.1).is_err());
    }

    #[test]
    fn embedded_mean_exact_and_numeric() {
        let cases = [
            (OffspringLaw::geometric(2.0).unwrap(), GapLaw::geometric(3.0).unwrap()),
            (OffspringLaw::geometric(1.0).unwrap(), GapLaw::fixed(4).unwrap()),
            (half_two(), GapLaw::geometric(2.0).unwrap()),
        ];
        for (nu, gaps) in cases {
            let view = EmbeddedLawView::new(nu, gaps, OffspringLaw::poisson(1.0).unwrap());
            assert_eq!(view.mean(), view.nu.mean());
            assert!(
                (view.mean_numeric() - view.mean()).abs() <= 1e-6,
                "numeric {} vs {}",
                view.mean_numeric(),
                view.mean()
            );
        }
    }

    #[test]
    fn embedded_sigma_golden() {
        // sigma_nu = 2, sigma_mu = 1, E d = 3, A = 2 -> 2 + 1 * 2 / 2 = 3
        let view = EmbeddedLawView::new(
            OffspringLaw::geometric(2.0).unwrap(),
            GapLaw::fixed(3).unwrap(),
            half_two(),
        );
        assert!((view.sigma_formula() - 3.0).abs() < 1e-12);
        assert!(
            (view.sigma_numeric() - view.sigma_formula()).abs() <= 1e-4,
            "numeric {} vs formula {}",
            view.sigma_numeric(),
            view.sigma_formula()
        );

        // d = 1 and sigma_mu = 0 both collapse to sigma_nu
        let unit = EmbeddedLawView::new(
            OffspringLaw::geometric(2.0).unwrap(),
            GapLaw::fixed(1).unwrap(),
            half_two(),
        );
        assert!((unit.sigma_formula() - 2.0).abs() < 1e-12);
        let det_mu = EmbeddedLawView::new(
            OffspringLaw::geometric(2.0).unwrap(),
            GapLaw::geometric(3.0).unwrap(),
            OffspringLaw::delta(1),
        );
        assert!((det_mu.sigma_formula() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn g_tilde_derivative_is_one_for_critical_mu() {
        let cases = [
            EmbeddedLawView::new(half_two(), GapLaw::geometric(3.0).unwrap(), half_two()),
            EmbeddedLawView::new(
                half_two(),
                GapLaw::fixed(5).unwrap(),
                OffspringLaw::poisson(1.0).unwrap(),
            ),
            EmbeddedLawView::new(
                half_two(),
                GapLaw::geometric(2.0).unwrap(),
                OffspringLaw::geometric(1.0).unwrap(),
            ),
        ];
        for view in &cases {
            let d = view.g_tilde_derivative_at_one();
            assert!((d - 1.0).abs() <= 1e-8, "g~'(1) = {d}");
        }
    }

    #[test]
    fn g_tilde_monotone_and_convex() {
        let view = EmbeddedLawView::new(
            half_two(),
            GapLaw::geometric(2.5).unwrap(),
            OffspringLaw::poisson(1.0).unwrap(),
        );
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&s| view.g_tilde(s).unwrap().value)
            .collect();
        assert!((vals[50] - 1.0).abs() < 1e-9);
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for w in vals.windows(3) {
            assert!(w[2] - w[1] >= w[1] - w[0] - 1e-12);
        }
    }

    #[test]
    fn embedded_kappa_matches_enumeration_oracle() {
        // brute force for nu, mu = {0: .5, 2: .5}, d = 2:
        // nu-children L in {0, 2}; each child runs one mu-generation.
        let view = EmbeddedLawView::new(half_two(), GapLaw::fixed(2).unwrap(), half_two());
        let mut oracle = [0.0f64; 5];
        // L = 0 -> total 0
        oracle[0] += 0.5;
        // L = 2 -> total = X1 + X2, Xi in {0, 2} w.p. 1/2
        oracle[0] += 0.5 * 0.25;
        oracle[2] += 0.5 * 0.5;
        oracle[4] += 0.5 * 0.25;
        let (pmf, _residual) = view.pmf(16).unwrap();
        for (j, &p) in oracle.iter().enumerate() {
            assert!((pmf[j] - p).abs() < 1e-12, "j = {j}");
        }
        let expect_kappa: f64 = oracle
            .iter()
            .enumerate()
            .map(|(j, &p)| (j * j) as f64 * p)
            .sum();
        let got = view.kappa(0, 16).unwrap();
        assert!((got.value - expect_kappa).abs() < 1e-10);

        // a beyond reachable support
        assert_eq!(view.kappa(40, 16).unwrap().value, 0.0);

        // d = 1: kappa of the embedded law is kappa of nu
        let unit = EmbeddedLawView::new(half_two(), GapLaw::fixed(1).unwrap(), half_two());
        for a in [0u64, 1, 2] {
            let got = unit.kappa(a, 16).unwrap();
            assert!((got.value - unit.nu.kappa(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn pmf_requires_finite_support() {
        let view = EmbeddedLawView::new(
            OffspringLaw::poisson(1.0).unwrap(),
            GapLaw::fixed(2).unwrap(),
            half_two(),
        );
        assert_eq!(
            view.pmf(16).unwrap_err(),
            EmbeddingError::UnsupportedVariant
        );
    }
}
