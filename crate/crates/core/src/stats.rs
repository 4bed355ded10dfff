//! Normality and variance checks routing to a parametric (ANOVA + Tukey–Kramer)
//! or rank-based (Kruskal–Wallis + Dunn) comparison of groups.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Significance level used throughout unless overridden.
pub const ALPHA: f64 = 0.05;

/// Named groups of measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedSamples {
    pub names: Vec<String>,
    pub groups: Vec<Vec<f64>>,
}

impl GroupedSamples {
    pub fn new(named: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if named.len() < 2 {
            return Err(Error::InvalidInput(
                "at least two groups are required".into(),
            ));
        }
        let (names, groups): (Vec<_>, Vec<_>) = named.into_iter().unzip();
        for (n, g) in names.iter().zip(&groups) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "group '{n}' has non-finite values"
                )));
            }
        }
        Ok(Self { names, groups })
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro–Wilk W and p-value (Royston's approximation).
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "Shapiro-Wilk needs 3 to 5000 values, got {n}"
        )));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if !(range > 1e-19 * x[n - 1].abs().max(1.0)) {
        return Err(Error::Undefined("Shapiro-Wilk of a constant sample".into()));
    }
    let nn2 = n / 2;
    let an = n as f64;
    // a[i] for i in 0..nn2, coefficients of the lower order statistics.
    let mut a = vec![0.0; nn2];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let norm = std_normal();
        let m: Vec<f64> = (1..=nn2)
            .map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (i1, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            (2, fac)
        } else {
            (
                1,
                ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt(),
            )
        };
        a[0] = a1;
        for i in i1..nn2 {
            a[i] = -m[i] / fac;
        }
    }
    let xbar = mean(&x);
    let ss: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
    let num: f64 = (0..nn2).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ss).min(1.0);

    if n == 3 {
        let pw = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::PI / 3.0);
        return Ok((w, pw.clamp(0.0, 1.0)));
    }
    let w1 = 1.0 - w;
    if w1 <= 0.0 {
        return Ok((w, 1.0));
    }
    let mut y = w1.ln();
    let xx = an.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return Ok((w, 1e-99));
        }
        y = -(gamma - y).ln();
        (
            poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an),
            poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp(),
        )
    } else {
        (
            poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], xx),
            poly(&[-0.4803, -0.082676, 0.0030302], xx).exp(),
        )
    };
    let p = 1.0 - std_normal().cdf((y - m) / s);
    Ok((w, p.clamp(0.0, 1.0)))
}

/// Levene's test on absolute deviations from the group means.
pub fn levene(groups: &[Vec<f64>]) -> Result<(f64, f64)> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput(
            "Levene needs at least two groups".into(),
        ));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InvalidInput(
            "Levene needs at least two values per group".into(),
        ));
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let first = all[0];
    if all.iter().all(|&v| v == first) {
        return Err(Error::Undefined("Levene test on identical values".into()));
    }
    one_way_f(&z).map(|(f, p, _, _)| (f, p))
}

/// One-way ANOVA F, p and the within-group mean square with its degrees of
/// freedom.
fn one_way_f(groups: &[Vec<f64>]) -> Result<(f64, f64, f64, f64)> {
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= k {
        return Err(Error::InvalidInput(
            "not enough values for within-group variance".into(),
        ));
    }
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df1 = (k - 1) as f64;
    let df2 = (n - k) as f64;
    let msw = ssw / df2;
    let scale = groups
        .iter()
        .flatten()
        .map(|v| (v - grand).powi(2))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let (f, p) = if ssb <= 1e-24 * scale {
        (0.0, 1.0)
    } else if ssw <= 1e-24 * scale {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ssb / df1) / msw;
        let dist = FisherSnedecor::new(df1, df2).expect("positive degrees of freedom");
        (f, dist.sf(f).clamp(0.0, 1.0))
    };
    Ok((f, p, msw, df2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub a: String,
    pub b: String,
    /// Tukey q or Dunn z.
    pub statistic: f64,
    /// Adjusted p-value.
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmnibusResult {
    pub test: String,
    pub statistic: f64,
    pub p: f64,
    pub pairs: Vec<PairResult>,
    pub warnings: Vec<String>,
}

fn names_or_default(names: Option<&[String]>, k: usize) -> Vec<String> {
    match names {
        Some(n) => n.to_vec(),
        None => (0..k).map(|i| format!("g{i}")).collect(),
    }
}

/// One-way ANOVA with Tukey–Kramer pairwise comparisons.
pub fn anova_tukey(
    groups: &[Vec<f64>],
    alpha: f64,
    names: Option<&[String]>,
) -> Result<OmnibusResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput(
            "ANOVA needs at least two groups".into(),
        ));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InvalidInput(
            "ANOVA needs at least two values per group".into(),
        ));
    }
    let names = names_or_default(names, k);
    let (f, p, msw, df) = one_way_f(groups)?;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let se =
                (msw / 2.0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let diff = (means[i] - means[j]).abs();
            let (q, padj) = if se > 0.0 {
                let q = diff / se;
                (q, (1.0 - ptukey(q, k as f64, df)).clamp(0.0, 1.0))
            } else if diff > 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                (0.0, 1.0)
            };
            pairs.push(PairResult {
                a: names[i].clone(),
                b: names[j].clone(),
                statistic: q,
                p_adjusted: padj,
                significant: padj < alpha,
            });
        }
    }
    Ok(OmnibusResult {
        test: "anova".into(),
        statistic: f,
        p,
        pairs,
        warnings: Vec::new(),
    })
}

/// Mid-ranks (1-based) of the pooled values and the tie-group sizes.
fn ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (r, ties)
}

/// Kruskal–Wallis H (tie-corrected) with Dunn's pairwise z-tests and
/// Bonferroni adjustment.
pub fn kruskal_dunn(
    groups: &[Vec<f64>],
    alpha: f64,
    names: Option<&[String]>,
) -> Result<OmnibusResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput(
            "Kruskal-Wallis needs at least two groups".into(),
        ));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput(
            "Kruskal-Wallis groups must be non-empty".into(),
        ));
    }
    let names = names_or_default(names, k);
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let (r, ties) = ranks(&pooled);
    let tie_sum: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let correction = 1.0 - tie_sum / (n.powi(3) - n);
    if correction <= 0.0 {
        return Err(Error::Undefined(
            "Kruskal-Wallis on identical values".into(),
        ));
    }
    let mut mean_ranks = Vec::with_capacity(k);
    let mut offset = 0;
    let mut h = 0.0;
    for g in groups {
        let rs: f64 = r[offset..offset + g.len()].iter().sum();
        h += rs * rs / g.len() as f64;
        mean_ranks.push(rs / g.len() as f64);
        offset += g.len();
    }
    h = (12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0)) / correction;
    let h = h.max(0.0);
    let p = ChiSquared::new((k - 1) as f64)
        .expect("positive degrees of freedom")
        .sf(h)
        .clamp(0.0, 1.0);
    let norm = std_normal();
    let m = (k * (k - 1) / 2) as f64;
    let var0 = n * (n + 1.0) / 12.0 - tie_sum / (12.0 * (n - 1.0));
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let se = (var0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let z = (mean_ranks[i] - mean_ranks[j]) / se;
            let praw = 2.0 * (1.0 - norm.cdf(z.abs()));
            let padj = (praw * m).min(1.0);
            pairs.push(PairResult {
                a: names[i].clone(),
                b: names[j].clone(),
                statistic: z,
                p_adjusted: padj,
                significant: padj < alpha,
            });
        }
    }
    let mut warnings = Vec::new();
    if pooled.len() < 5 {
        warnings.push(format!("underpowered: only {} observations", pooled.len()));
    }
    Ok(OmnibusResult {
        test: "kruskal-wallis".into(),
        statistic: h,
        p,
        pairs,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Anova,
    KruskalWallis,
}

impl Route {
    pub fn label(self) -> &'static str {
        match self {
            Route::Anova => "anova+tukey-kramer",
            Route::KruskalWallis => "kruskal-wallis+dunn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub group: String,
    pub w: f64,
    pub p: f64,
    /// False when the group is constant and the test is undefined.
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub alpha: f64,
    pub normality: Vec<NormalityResult>,
    pub levene_statistic: f64,
    pub levene_p: f64,
    pub route: Route,
    pub omnibus: OmnibusResult,
}

impl TestReport {
    pub fn all_normal(&self) -> bool {
        self.normality.iter().all(|n| n.defined && n.p > self.alpha)
    }

    pub fn homoscedastic(&self) -> bool {
        self.levene_p > self.alpha
    }
}

/// Runs the normality and variance checks, then the omnibus test and
/// post-hoc comparisons they select.
///
/// A constant group makes its normality test undefined; it is then treated
/// as non-normal. If every group is constant the normality error is
/// returned.
pub fn select_and_run(samples: &GroupedSamples, alpha: f64) -> Result<TestReport> {
    let mut normality = Vec::new();
    let mut first_err = None;
    for (name, g) in samples.names.iter().zip(&samples.groups) {
        match shapiro_wilk(g) {
            Ok((w, p)) => normality.push(NormalityResult {
                group: name.clone(),
                w,
                p,
                defined: true,
            }),
            Err(Error::Undefined(msg)) => {
                first_err.get_or_insert(Error::Undefined(format!("group '{name}': {msg}")));
                normality.push(NormalityResult {
                    group: name.clone(),
                    w: f64::NAN,
                    p: f64::NAN,
                    defined: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if normality.iter().all(|n| !n.defined) {
        return Err(first_err.expect("at least one group"));
    }
    let (levene_statistic, levene_p) = levene(&samples.groups)?;
    let normal = normality.iter().all(|n| n.defined && n.p > alpha);
    let route = if normal && levene_p > alpha {
        Route::Anova
    } else {
        Route::KruskalWallis
    };
    let omnibus = match route {
        Route::Anova => anova_tukey(&samples.groups, alpha, Some(&samples.names))?,
        Route::KruskalWallis => kruskal_dunn(&samples.groups, alpha, Some(&samples.names))?,
    };
    Ok(TestReport {
        alpha,
        normality,
        levene_statistic,
        levene_p,
        route,
        omnibus,
    })
}

/// Probability that the range of `cc` standard normals, each group of
/// `rr` ranges, is below `w`.
fn wprob(w: f64, rr: f64, cc: f64) -> f64 {
    const NLEG: usize = 12;
    const IHALF: usize = 6;
    const C1: f64 = -30.0;
    const C3: f64 = 60.0;
    const BB: f64 = 8.0;
    const WLAR: f64 = 3.0;
    const XLEG: [f64; IHALF] = [
        0.981560634246719250690549090149,
        0.904117256370474856678465866119,
        0.769902674194304687036893833213,
        0.587317954286617447296702418941,
        0.367831498998180193752691536644,
        0.125233408511468915472441369464,
    ];
    const ALEG: [f64; IHALF] = [
        0.047175336386511827194615961485,
        0.106939325995318430960254718194,
        0.160078328543346226334652529543,
        0.203167426723065921749064455810,
        0.233492536538354808760849898925,
        0.249147045813402785000562436043,
    ];
    let norm = std_normal();
    let qsqz = w * 0.5;
    if qsqz >= BB {
        return 1.0;
    }
    let mut pr_w = 2.0 * norm.cdf(qsqz) - 1.0;
    pr_w = if pr_w >= 1.0 { 1.0 } else { pr_w.powf(cc) };
    let wincr = if w > WLAR { 2 } else { 3 };
    let mut blb = qsqz;
    let binc = (BB - qsqz) / wincr as f64;
    let mut bub = blb + binc;
    let mut einsum = 0.0;
    let cc1 = cc - 1.0;
    for _ in 0..wincr {
        let mut elsum = 0.0;
        let a = 0.5 * (bub + blb);
        let b = 0.5 * (bub - blb);
        for jj in 1..=NLEG {
            let (j, xx) = if IHALF < jj {
                let j = NLEG - jj + 1;
                (j, XLEG[j - 1])
            } else {
                (jj, -XLEG[jj - 1])
            };
            let c = b * xx;
            let ac = a + c;
            let qexpo = ac * ac;
            if qexpo > C3 {
                break;
            }
            let pplus = 2.0 * norm.cdf(ac);
            let pminus = 2.0 * norm.cdf(ac - w);
            let mut rinsum = pplus * 0.5 - pminus * 0.5;
            if rinsum >= (C1 / cc1).exp() {
                rinsum = ALEG[j - 1] * (-(0.5 * qexpo)).exp() * rinsum.powf(cc1);
                elsum += rinsum;
            }
        }
        elsum *= 2.0 * b * cc / (2.0 * std::f64::consts::PI).sqrt();
        einsum += elsum;
        blb = bub;
        bub += binc;
    }
    pr_w += einsum;
    if pr_w <= (C1 / rr).exp() {
        return 0.0;
    }
    pr_w = pr_w.powf(rr);
    pr_w.min(1.0)
}

/// CDF of the studentized range for `nmeans` means and `df` degrees of
/// freedom.
pub fn ptukey(q: f64, nmeans: f64, df: f64) -> f64 {
    const NLEGQ: usize = 16;
    const IHALFQ: usize = 8;
    const EPS1: f64 = -30.0;
    const EPS2: f64 = 1e-14;
    const XLEGQ: [f64; IHALFQ] = [
        0.989400934991649932596154173450,
        0.944575023073232576077988415535,
        0.865631202387831743880467897712,
        0.755404408355003033895101194847,
        0.617876244402643748446671764049,
        0.458016777657227386342419442984,
        0.281603550779258913230460501460,
        0.950125098376374401853193354250e-1,
    ];
    const ALEGQ: [f64; IHALFQ] = [
        0.271524594117540948517805724560e-1,
        0.622535239386478928628438369944e-1,
        0.951585116824927848099251076022e-1,
        0.124628971255533872052476282192,
        0.149595988816576732081501730547,
        0.169156519395002538189312079030,
        0.182603415044923588866763667969,
        0.189450610455068496285396723208,
    ];
    let rr = 1.0;
    let cc = nmeans;
    if q <= 0.0 {
        return 0.0;
    }
    if !q.is_finite() {
        return 1.0;
    }
    assert!(
        df >= 2.0 && cc >= 2.0,
        "ptukey needs df >= 2 and at least two means"
    );
    if df > 25_000.0 {
        return wprob(q, rr, cc);
    }
    let f2 = df * 0.5;
    let mut f2lf = f2 * df.ln() - df * std::f64::consts::LN_2 - ln_gamma(f2);
    let f21 = f2 - 1.0;
    let ff4 = df * 0.25;
    let ulen = if df <= 100.0 {
        1.0
    } else if df <= 800.0 {
        0.5
    } else if df <= 5000.0 {
        0.25
    } else {
        0.125
    };
    f2lf += f64::ln(ulen);
    let mut ans = 0.0;
    for i in 1..=50 {
        let mut otsum = 0.0;
        let twa1 = (2 * i - 1) as f64 * ulen;
        for jj in 1..=NLEGQ {
            let (j, t1) = if IHALFQ < jj {
                let j = jj - IHALFQ - 1;
                let x = XLEGQ[j] * ulen;
                (j, f2lf + f21 * (twa1 + x).ln() - (x + twa1) * ff4)
            } else {
                let j = jj - 1;
                let x = XLEGQ[j] * ulen;
                (j, f2lf + f21 * (twa1 - x).ln() + (x - twa1) * ff4)
            };
            if t1 >= EPS1 {
                let x = XLEGQ[j] * ulen;
                let qsqz = if IHALFQ < jj {
                    q * ((x + twa1) * 0.5).sqrt()
                } else {
                    q * ((twa1 - x) * 0.5).sqrt()
                };
                otsum += wprob(qsqz, rr, cc) * ALEGQ[j] * t1.exp();
            }
        }
        if i as f64 * ulen >= 1.0 && otsum <= EPS2 {
            break;
        }
        ans += otsum;
    }
    ans.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream};
    use rand_distr::{Distribution, StandardNormal};

    fn normal_quantiles(n: usize) -> Vec<f64> {
        let norm = std_normal();
        (1..=n)
            .map(|i| norm.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25)))
            .collect()
    }

    #[test]
    fn shapiro_on_normal_quantiles() {
        let (w, p) = shapiro_wilk(&normal_quantiles(10)).unwrap();
        assert!(w > 0.98, "{w}");
        assert!(p > 0.5);
    }

    #[test]
    fn shapiro_reference_values() {
        // Reference values from scipy.stats.shapiro.
        let x = [2.0, 4.0, 4.5, 5.1, 6.3, 7.2, 7.9, 9.4, 10.5, 13.0];
        let (w, p) = shapiro_wilk(&x).unwrap();
        assert!((w - 0.983_801_554_9).abs() < 1e-8, "{w}");
        assert!((p - 0.982_241).abs() < 1e-4, "{p}");
        let (w, p) = shapiro_wilk(&[1.0, 2.0, 4.0]).unwrap();
        assert!((w - 0.964_286).abs() < 1e-5, "{w}");
        assert!((p - 0.636_887).abs() < 1e-4, "{p}");
    }

    #[test]
    fn shapiro_rejects_exponential_shape() {
        let x: Vec<f64> = (1..=20)
            .map(|i| -(1.0 - (i as f64 - 0.5) / 20.0).ln().powi(3))
            .collect();
        let (_, p) = shapiro_wilk(&x).unwrap();
        assert!(p < 0.01, "{p}");
    }

    #[test]
    fn shapiro_constant_is_error() {
        assert!(matches!(shapiro_wilk(&[3.0; 8]), Err(Error::Undefined(_))));
    }

    #[test]
    fn levene_cases() {
        let (w, p) = levene(&[vec![1.0, 2.0, 3.0, 4.0], vec![11.0, 12.0, 13.0, 14.0]]).unwrap();
        assert_eq!(w, 0.0);
        assert_eq!(p, 1.0);
        let g = vec![
            vec![5.0; 10],
            vec![
                -40.0, 30.0, -25.0, 50.0, -60.0, 45.0, -35.0, 20.0, -55.0, 65.0,
            ],
        ];
        assert!(levene(&g).unwrap().1 < 0.01);
        assert!(levene(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn levene_matches_formula() {
        let g = vec![
            vec![4.2, 5.1, 3.9, 6.0, 5.5],
            vec![7.7, 2.1, 9.0, 4.4],
            vec![5.0, 5.2, 4.9, 5.3, 5.1, 4.8],
        ];
        // Brute force: ANOVA F on |x - group mean|.
        let z: Vec<Vec<f64>> = g
            .iter()
            .map(|v| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m).abs()).collect()
            })
            .collect();
        let n = 15.0;
        let zbar = z.iter().flatten().sum::<f64>() / n;
        let num: f64 = z
            .iter()
            .map(|v| v.len() as f64 * (mean(v) - zbar).powi(2))
            .sum::<f64>()
            / 2.0;
        let den: f64 = z
            .iter()
            .map(|v| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / (n - 3.0);
        let (w, _) = levene(&g).unwrap();
        assert!((w - num / den).abs() < 1e-10 * w.abs().max(1.0));
    }

    #[test]
    fn anova_matches_sum_of_squares() {
        let g = vec![
            vec![6.0, 8.0, 4.0, 5.0, 3.0],
            vec![8.0, 12.0, 9.0, 11.0, 6.0],
            vec![13.0, 9.0, 11.0, 8.0, 7.0],
        ];
        let grand = g.iter().flatten().sum::<f64>() / 15.0;
        let ssb: f64 = g.iter().map(|v| 5.0 * (mean(v) - grand).powi(2)).sum();
        let ssw: f64 = g
            .iter()
            .map(|v| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            })
            .sum();
        let expected = (ssb / 2.0) / (ssw / 12.0);
        let r = anova_tukey(&g, ALPHA, None).unwrap();
        assert!((r.statistic - expected).abs() < 1e-10);
        assert!((expected - 5.842_105_263_157_896).abs() < 1e-12);
        assert!((r.p - 0.016_917_414_854).abs() < 1e-9);
    }

    #[test]
    fn anova_degenerate_and_separated() {
        let r = anova_tukey(&[vec![2.0, 2.0, 2.0], vec![2.0, 2.0, 2.0]], ALPHA, None).unwrap();
        assert_eq!((r.statistic, r.p), (0.0, 1.0));
        let r = anova_tukey(
            &[vec![1.0, 1.1, 0.9, 1.05], vec![10.0, 10.1, 9.9, 10.05]],
            ALPHA,
            None,
        )
        .unwrap();
        assert!(r.pairs[0].significant);
        assert!(anova_tukey(&[vec![1.0], vec![2.0, 3.0]], ALPHA, None).is_err());
    }

    #[test]
    fn ptukey_reference_values() {
        // Reference values from scipy.stats.studentized_range.
        assert!((ptukey(3.877_37, 3.0, 10.0) - 0.950_034).abs() < 1e-5);
        assert!(
            (ptukey(3.0, 4.0, 20.0) - 0.819_527).abs() < 1e-5,
            "{}",
            ptukey(3.0, 4.0, 20.0)
        );
        assert!(
            (ptukey(2.0, 2.0, 5.0) - 0.783_563).abs() < 1e-5,
            "{}",
            ptukey(2.0, 2.0, 5.0)
        );
    }

    #[test]
    fn tukey_two_groups_matches_t_test() {
        // With two groups q = sqrt(2) |t| and the Tukey p equals the t-test p.
        let g = vec![
            vec![1.0, 2.5, 3.1, 2.2, 1.9],
            vec![2.8, 3.9, 4.2, 3.3, 3.0, 4.4],
        ];
        let r = anova_tukey(&g, ALPHA, None).unwrap();
        assert!(
            (r.pairs[0].p_adjusted - r.p).abs() < 1e-6,
            "{} vs {}",
            r.pairs[0].p_adjusted,
            r.p
        );
    }

    #[test]
    fn kruskal_rank_blocks() {
        let g: Vec<Vec<f64>> = (0..3)
            .map(|b| (1..=5).map(|i| (b * 5 + i) as f64).collect())
            .collect();
        let r = kruskal_dunn(&g, ALPHA, None).unwrap();
        // Rank sums 15, 40, 65 with n = 15.
        let h = 12.0 / (15.0 * 16.0) * (15f64.powi(2) + 40f64.powi(2) + 65f64.powi(2)) / 5.0 - 48.0;
        assert!((r.statistic - h).abs() < 1e-10);
        assert!(r.p < 0.01);
        let same = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = kruskal_dunn(&same, ALPHA, None).unwrap();
        assert!(r.statistic.abs() < 1e-12 && (r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kruskal_ties_match_hand_formula() {
        let g = vec![
            vec![1.0, 2.0, 2.0, 3.0],
            vec![2.0, 3.0, 3.0, 4.0, 4.0],
            vec![1.0, 1.0, 5.0],
        ];
        // Pooled sorted: 1,1,1 (ranks 2), 2,2,2 (5), 3,3,3 (8), 4,4 (10.5), 5 (12).
        let rsum = [
            2.0 + 5.0 + 5.0 + 8.0,
            5.0 + 8.0 + 8.0 + 10.5 + 10.5,
            2.0 + 2.0 + 12.0,
        ];
        let n: f64 = 12.0;
        let raw = 12.0 / (n * (n + 1.0))
            * (rsum[0] * rsum[0] / 4.0 + rsum[1] * rsum[1] / 5.0 + rsum[2] * rsum[2] / 3.0)
            - 3.0 * (n + 1.0);
        let ties = 3.0 * (27.0 - 3.0) + (8.0 - 2.0);
        let h = raw / (1.0 - ties / (n.powi(3) - n));
        let r = kruskal_dunn(&g, ALPHA, None).unwrap();
        assert!((r.statistic - h).abs() < 1e-10, "{} vs {h}", r.statistic);
    }

    #[test]
    fn kruskal_warns_when_underpowered() {
        let r = kruskal_dunn(&[vec![1.0, 2.0], vec![3.0, 4.0]], ALPHA, None).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(kruskal_dunn(&[vec![1.0, 1.0], vec![1.0]], ALPHA, None).is_err());
    }

    fn draw_normal(root: &RngStream, idx: u64, n: usize, mu: f64, sd: f64) -> Vec<f64> {
        let mut s = root.substream(idx, Purpose::Sampling, 0);
        (0..n)
            .map(|_| mu + sd * Distribution::<f64>::sample(&StandardNormal, &mut s))
            .collect()
    }

    #[test]
    fn routing_examples() {
        let root = RngStream::new(21);
        let clean = GroupedSamples::new(
            (0..3)
                .map(|i| (format!("g{i}"), draw_normal(&root, i, 15, 10.0, 1.0)))
                .collect(),
        )
        .unwrap();
        let r = select_and_run(&clean, ALPHA).unwrap();
        assert_eq!(r.route, Route::Anova);
        let mut skewed = clean.clone();
        skewed.groups[1] = (1..=15).map(|i| (i as f64 * 0.35).exp()).collect();
        assert_eq!(
            select_and_run(&skewed, ALPHA).unwrap().route,
            Route::KruskalWallis
        );
        let constant =
            GroupedSamples::new(vec![("a".into(), vec![1.0; 5]), ("b".into(), vec![1.0; 5])])
                .unwrap();
        assert!(matches!(
            select_and_run(&constant, ALPHA),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn statistics_are_permutation_and_scale_invariant() {
        let g = vec![
            vec![3.1, 4.7, 2.2, 5.9, 4.4],
            vec![6.3, 7.1, 5.5, 8.8],
            vec![1.2, 2.8, 2.0, 3.3, 1.9, 2.5],
        ];
        let rev: Vec<Vec<f64>> = g.iter().rev().cloned().collect();
        let scaled: Vec<Vec<f64>> = g
            .iter()
            .map(|v| v.iter().map(|x| 3.5 * x).collect())
            .collect();
        let kw = kruskal_dunn(&g, ALPHA, None).unwrap();
        assert!((kw.statistic - kruskal_dunn(&rev, ALPHA, None).unwrap().statistic).abs() < 1e-12);
        assert!(
            (kw.statistic - kruskal_dunn(&scaled, ALPHA, None).unwrap().statistic).abs() < 1e-12
        );
        let lv = levene(&g).unwrap();
        assert!((lv.0 - levene(&rev).unwrap().0).abs() < 1e-10);
        assert!((lv.0 - levene(&scaled).unwrap().0).abs() < 1e-10);
        let an = anova_tukey(&g, ALPHA, None).unwrap();
        assert!((an.statistic - anova_tukey(&rev, ALPHA, None).unwrap().statistic).abs() < 1e-10);
    }
}
