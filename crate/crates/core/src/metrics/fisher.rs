//! Two-sided Fisher exact test for 2×2 contingency tables.

use crate::error::{Error, Result};

/// Relative slack when comparing point probabilities with the observed one.
const TIE_SLACK: f64 = 1e-12;

/// `[[a, b], [c, d]]`: rows are ground truth, columns the judgement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contingency2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Contingency2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self> {
        if a + b + c + d == 0 {
            return Err(Error::param("contingency table is empty"));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

impl std::str::FromStr for Contingency2x2 {
    type Err = Error;

    /// Parses `a,b,c,d`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::param(format!("expected a,b,c,d, got {s:?}")));
        }
        let mut v = [0u64; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::param(format!("table entry {p:?} is not a non-negative integer")))?;
        }
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// `ln(i!)` for `i` in `0..=n`, by running sums of logarithms.
fn log_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Sum of hypergeometric probabilities of every table with the observed
/// margins that is no more likely than the observed table.
///
/// A zero row or column margin leaves a single possible table, so `p = 1`.
pub fn fisher_exact_two_sided(t: &Contingency2x2) -> f64 {
    let (r1, r2) = (t.a + t.b, t.c + t.d);
    let c1 = t.a + t.c;
    let n = t.total();
    if r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return 1.0;
    }
    let lf = log_factorials(n);
    let lf = |i: u64| lf[i as usize];
    // Log point probability up to the margin-only constant, which cancels.
    let log_p = |x: u64| -lf(x) - lf(r1 - x) - lf(c1 - x) - lf(r2 + x - c1);
    let observed = log_p(t.a);
    let cutoff = observed + TIE_SLACK.ln_1p();
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let all: Vec<f64> = (lo..=hi).map(log_p).collect();
    // Normalizing by the total of all tables makes an all-inclusive sum exactly 1.
    let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut kept, mut dropped) = (0.0, 0.0);
    for lp in all {
        let w = (lp - max).exp();
        if lp <= cutoff {
            kept += w;
        } else {
            dropped += w;
        }
    }
    (kept / (kept + dropped)).clamp(f64::MIN_POSITIVE, 1.0)
}
