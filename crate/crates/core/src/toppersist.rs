//! Persistence of top-scientist status between an early window and the
//! benchmark, measured with a one-regressor probit model per UDA.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal;
use crate::rank::PercentileRanking;

pub const GRADIENT_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbitError {
    #[error("response and regressor lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 4 observations, got {0}")]
    TooFewObservations(usize),
    #[error("response is constant (all {0})")]
    DegenerateResponse(u8),
    #[error("regressor is constant (all {0})")]
    DegenerateRegressor(u8),
    #[error("separation: no observation with x = {x}, y = {y}; the MLE is not finite")]
    Separation { x: u8, y: u8 },
    #[error("Newton-Raphson did not converge (gradient max-norm {gradient:e} after {iterations} iterations)")]
    NoConvergence { iterations: usize, gradient: f64 },
    #[error("researcher sets differ between rankings of SDS `{0}`")]
    ResearcherMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub uda_code: String,
    pub n: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub se_beta0: f64,
    pub se_beta1: f64,
    /// `Φ(beta0 + beta1)`: probability of being top at the benchmark given top early.
    pub prob_top_given_top: f64,
    /// McFadden: `1 - LL / LL_null`.
    pub pseudo_r2: f64,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    /// Likelihood-ratio test against the intercept-only model (χ², 1 df).
    pub p_value_model: f64,
    pub iterations: usize,
}

/// 2x2 table of (x, y) counts, `cells[x][y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Contingency {
    pub cells: [[usize; 2]; 2],
}

impl Contingency {
    pub fn from_flags(y: &[bool], x: &[bool]) -> Self {
        let mut cells = [[0; 2]; 2];
        for (&yi, &xi) in y.iter().zip(x) {
            cells[usize::from(xi)][usize::from(yi)] += 1;
        }
        Contingency { cells }
    }

    /// Share of `y = 1` among observations with the given `x`.
    pub fn proportion(&self, x: bool) -> f64 {
        let row = self.cells[usize::from(x)];
        row[1] as f64 / (row[0] + row[1]) as f64
    }
}

/// Closed-form MLE for a binary regressor: the probit reproduces the two
/// cell proportions exactly, so `beta0 = Φ⁻¹(p0)` and `beta1 = Φ⁻¹(p1) - Φ⁻¹(p0)`.
pub fn closed_form_coefficients(table: &Contingency) -> (f64, f64) {
    let b0 = normal::quantile(table.proportion(false));
    let b1 = normal::quantile(table.proportion(true)) - b0;
    (b0, b1)
}

/// Per-observation log-likelihood terms at linear predictor `eta`:
/// value, d/d eta and d²/d eta².
fn observation_terms(y: bool, eta: f64) -> (f64, f64, f64) {
    // For y = 0 use Φ(-eta) = 1 - Φ(eta) and flip the sign of eta.
    let s = if y { 1.0 } else { -1.0 };
    let z = s * eta;
    let cdf = normal::cdf(z);
    let lambda = normal::pdf(z) / cdf;
    (cdf.ln(), s * lambda, -lambda * (lambda + z))
}

struct Evaluation {
    log_likelihood: f64,
    gradient: [f64; 2],
    /// Negative Hessian (observed information).
    information: [[f64; 2]; 2],
}

fn evaluate(y: &[bool], x: &[bool], beta: [f64; 2]) -> Evaluation {
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut info = [[0.0; 2]; 2];
    for (&yi, &xi) in y.iter().zip(x) {
        let xv = if xi { 1.0 } else { 0.0 };
        let (l, d1, d2) = observation_terms(yi, beta[0] + beta[1] * xv);
        ll += l;
        g[0] += d1;
        g[1] += d1 * xv;
        info[0][0] -= d2;
        info[0][1] -= d2 * xv;
        info[1][1] -= d2 * xv * xv;
    }
    info[1][0] = info[0][1];
    Evaluation {
        log_likelihood: ll,
        gradient: g,
        information: info,
    }
}

fn invert_2x2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn max_norm(g: [f64; 2]) -> f64 {
    g[0].abs().max(g[1].abs())
}

/// Fits `P(y = 1 | x) = Φ(beta0 + beta1 x)` by damped Newton-Raphson on the
/// log-likelihood, iterating until the gradient max-norm is below 1e-10.
pub fn fit_probit(y: &[bool], x: &[bool]) -> Result<ProbitFit, ProbitError> {
    fit_probit_for("", y, x)
}

pub fn fit_probit_for(uda_code: &str, y: &[bool], x: &[bool]) -> Result<ProbitFit, ProbitError> {
    if y.len() != x.len() {
        return Err(ProbitError::LengthMismatch(y.len(), x.len()));
    }
    let n = y.len();
    if n < 4 {
        return Err(ProbitError::TooFewObservations(n));
    }
    let ones = y.iter().filter(|&&v| v).count();
    if ones == 0 || ones == n {
        return Err(ProbitError::DegenerateResponse(u8::from(ones == n)));
    }
    let x_ones = x.iter().filter(|&&v| v).count();
    if x_ones == 0 || x_ones == n {
        return Err(ProbitError::DegenerateRegressor(u8::from(x_ones == n)));
    }
    let table = Contingency::from_flags(y, x);
    for xi in 0..2 {
        for yi in 0..2 {
            if table.cells[xi][yi] == 0 {
                return Err(ProbitError::Separation {
                    x: xi as u8,
                    y: yi as u8,
                });
            }
        }
    }

    let mut beta = [0.0, 0.0];
    let mut eval = evaluate(y, x, beta);
    let mut iterations = 0;
    while max_norm(eval.gradient) >= GRADIENT_TOLERANCE {
        if iterations == MAX_ITERATIONS {
            return Err(ProbitError::NoConvergence {
                iterations,
                gradient: max_norm(eval.gradient),
            });
        }
        iterations += 1;
        let inv = invert_2x2(eval.information);
        let step = [
            inv[0][0] * eval.gradient[0] + inv[0][1] * eval.gradient[1],
            inv[1][0] * eval.gradient[0] + inv[1][1] * eval.gradient[1],
        ];
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = [beta[0] + scale * step[0], beta[1] + scale * step[1]];
            let next = evaluate(y, x, candidate);
            // Near the optimum the log-likelihood is flat to rounding, so also
            // accept steps that shrink the gradient.
            if next.log_likelihood > eval.log_likelihood
                || (next.log_likelihood >= eval.log_likelihood - 1e-12 * eval.log_likelihood.abs()
                    && max_norm(next.gradient) < max_norm(eval.gradient))
            {
                accepted = Some((candidate, next));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            return Err(ProbitError::NoConvergence {
                iterations,
                gradient: max_norm(eval.gradient),
            });
        };
        beta = candidate;
        eval = next;
    }

    let cov = invert_2x2(eval.information);
    let p_bar = ones as f64 / n as f64;
    let null_ll = ones as f64 * p_bar.ln() + (n - ones) as f64 * (1.0 - p_bar).ln();
    let lr = (2.0 * (eval.log_likelihood - null_ll)).max(0.0);
    Ok(ProbitFit {
        uda_code: uda_code.to_string(),
        n,
        beta0: beta[0],
        beta1: beta[1],
        se_beta0: cov[0][0].sqrt(),
        se_beta1: cov[1][1].sqrt(),
        prob_top_given_top: normal::cdf(beta[0] + beta[1]),
        pseudo_r2: 1.0 - eval.log_likelihood / null_ll,
        log_likelihood: eval.log_likelihood,
        null_log_likelihood: null_ll,
        p_value_model: normal::chi2_1_sf(lr),
        iterations,
    })
}

/// Top flags of one UDA's researchers in two windows, pooled across its SDSs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PersistenceSample {
    pub researcher_ids: Vec<String>,
    pub benchmark_top: Vec<bool>,
    pub early_top: Vec<bool>,
}

/// Pools researchers per UDA, with flags computed within each SDS ranking.
pub fn persistence_samples(
    early: &[PercentileRanking],
    benchmark: &[PercentileRanking],
    sds_to_uda: &BTreeMap<String, String>,
    threshold: u8,
) -> Result<BTreeMap<String, PersistenceSample>, ProbitError> {
    let bench_by_sds: BTreeMap<&str, &PercentileRanking> = benchmark.iter().map(|r| (r.sds_code.as_str(), r)).collect();
    let mut out: BTreeMap<String, PersistenceSample> = BTreeMap::new();
    for e in early {
        let Some(b) = bench_by_sds.get(e.sds_code.as_str()) else {
            return Err(ProbitError::ResearcherMismatch(e.sds_code.clone()));
        };
        if e.entries.len() != b.entries.len() || e.entries.keys().any(|k| !b.entries.contains_key(k)) {
            return Err(ProbitError::ResearcherMismatch(e.sds_code.clone()));
        }
        let Some(uda) = sds_to_uda.get(&e.sds_code) else {
            continue;
        };
        let sample = out.entry(uda.clone()).or_default();
        for (id, &p) in &e.entries {
            sample.researcher_ids.push(id.clone());
            sample.early_top.push(p > threshold);
            sample.benchmark_top.push(b.entries[id] > threshold);
        }
    }
    Ok(out)
}

/// Fit outcome per UDA code.
pub type PersistenceReport = Vec<(String, Result<ProbitFit, ProbitError>)>;

/// One fit per UDA; a failing UDA does not affect the others.
pub fn persistence_report(
    early: &[PercentileRanking],
    benchmark: &[PercentileRanking],
    sds_to_uda: &BTreeMap<String, String>,
    threshold: u8,
) -> Result<PersistenceReport, ProbitError> {
    Ok(persistence_samples(early, benchmark, sds_to_uda, threshold)?
        .into_iter()
        .map(|(uda, s)| {
            let fit = fit_probit_for(&uda, &s.benchmark_top, &s.early_top);
            (uda, fit)
        })
        .collect())
}

/// CSV with header `uda_code,n,beta0,beta1,se_beta1,prob_top_given_top,pseudo_r2,log_likelihood,lr_p_value`.
pub fn write_probit_csv<W: Write>(fits: &[ProbitFit], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "uda_code",
        "n",
        "beta0",
        "beta1",
        "se_beta1",
        "prob_top_given_top",
        "pseudo_r2",
        "log_likelihood",
        "lr_p_value",
    ])?;
    for f in fits {
        w.write_record([
            f.uda_code.clone(),
            f.n.to_string(),
            format!("{:.6}", f.beta0),
            format!("{:.6}", f.beta1),
            format!("{:.6}", f.se_beta1),
            format!("{:.6}", f.prob_top_given_top),
            format!("{:.6}", f.pseudo_r2),
            format!("{:.6}", f.log_likelihood),
            format!("{:.6e}", f.p_value_model),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds flag vectors realizing the 2x2 table `cells[x][y]`.
    fn flags(cells: [[usize; 2]; 2]) -> (Vec<bool>, Vec<bool>) {
        let (mut y, mut x) = (Vec::new(), Vec::new());
        for (xi, row) in cells.iter().enumerate() {
            for (yi, &count) in row.iter().enumerate() {
                x.extend(std::iter::repeat_n(xi == 1, count));
                y.extend(std::iter::repeat_n(yi == 1, count));
            }
        }
        (y, x)
    }

    #[test]
    fn ten_ninety_table() {
        let (y, x) = flags([[90, 10], [10, 90]]);
        let fit = fit_probit(&y, &x).unwrap();
        assert!((fit.beta1 - 2.563_103_131_089_201).abs() < 1e-8, "{}", fit.beta1);
        assert!((fit.beta0 + 1.281_551_565_544_600_5).abs() < 1e-8);
        assert!((fit.prob_top_given_top - 0.9).abs() < 1e-8);
        assert!(fit.log_likelihood <= 0.0);
        assert!(fit.pseudo_r2 > 0.0 && fit.pseudo_r2 < 1.0);
        assert!(fit.se_beta1 > 0.0);
        assert!(fit.p_value_model < 1e-10);
    }

    #[test]
    fn symmetric_table_gives_zero_coefficients() {
        let (y, x) = flags([[5, 5], [7, 7]]);
        let fit = fit_probit(&y, &x).unwrap();
        assert!(fit.beta0.abs() < 1e-12 && fit.beta1.abs() < 1e-12);
        assert!((fit.prob_top_given_top - 0.5).abs() < 1e-12);
        assert!(fit.pseudo_r2.abs() < 1e-12);
        assert!((fit.p_value_model - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standard_error_matches_closed_form_information() {
        // With a binary regressor the information decouples per cell:
        // Var(b0 + b1) = 1/I1, Var(b0) = 1/I0, Var(b1) = 1/I0 + 1/I1 where
        // I_x = n_x φ(z_x)² / (p_x (1 - p_x)).
        let cells = [[40, 12], [6, 30]];
        let (y, x) = flags(cells);
        let fit = fit_probit(&y, &x).unwrap();
        let info = |row: [usize; 2]| {
            let n = (row[0] + row[1]) as f64;
            let p = row[1] as f64 / n;
            let z = normal::quantile(p);
            n * normal::pdf(z).powi(2) / (p * (1.0 - p))
        };
        let var_b1 = 1.0 / info(cells[0]) + 1.0 / info(cells[1]);
        assert!((fit.se_beta1 - var_b1.sqrt()).abs() < 1e-8);
        assert!((fit.se_beta0 - (1.0 / info(cells[0])).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn input_errors() {
        let (y, _) = flags([[3, 3], [3, 3]]);
        assert_eq!(fit_probit(&y, &y), Err(ProbitError::Separation { x: 0, y: 1 }));
        assert_eq!(
            fit_probit(&[true; 5], &[true, false, true, false, true]),
            Err(ProbitError::DegenerateResponse(1))
        );
        assert_eq!(
            fit_probit(&[true, false, true, false, true], &[false; 5]),
            Err(ProbitError::DegenerateRegressor(0))
        );
        assert_eq!(
            fit_probit(&[true, false], &[true, false]),
            Err(ProbitError::TooFewObservations(2))
        );
        assert_eq!(
            fit_probit(&[true], &[true, false]),
            Err(ProbitError::LengthMismatch(1, 2))
        );
        let (y, x) = flags([[5, 5], [0, 7]]);
        assert_eq!(fit_probit(&y, &x), Err(ProbitError::Separation { x: 1, y: 0 }));
    }

    #[test]
    fn report_isolates_failing_uda() {
        let ranking = |sds: &str, year: i32, ps: &[u8]| PercentileRanking {
            sds_code: sds.into(),
            observation_year: year,
            entries: ps.iter().enumerate().map(|(i, &p)| (format!("{sds}-{i}"), p)).collect(),
        };
        // SDS A (UDA X): tops persist perfectly -> separation.
        let a_early = ranking("A", 2004, &[100, 90, 10, 20, 30, 40]);
        let a_bench = ranking("A", 2008, &[100, 90, 85, 20, 30, 40]);
        // SDS B (UDA Y): mixed.
        let b_early = ranking("B", 2004, &[100, 90, 10, 20, 85, 40, 95, 0]);
        let b_bench = ranking("B", 2008, &[100, 10, 95, 20, 85, 40, 30, 0]);
        let map: BTreeMap<String, String> = [("A", "X"), ("B", "Y")]
            .into_iter()
            .map(|(a, b)| (a.into(), b.into()))
            .collect();
        let report = persistence_report(&[a_early, b_early], &[a_bench, b_bench], &map, 80).unwrap();
        assert_eq!(report.len(), 2);
        assert_eq!(report[0].0, "X");
        assert!(matches!(report[0].1, Err(ProbitError::Separation { x: 1, y: 0 })));
        let fit = report[1].1.as_ref().unwrap();
        // early tops: 0,1,4,6 -> bench tops among them: 0,4 -> 0.5
        assert!((fit.prob_top_given_top - 0.5).abs() < 1e-8);
    }
}
