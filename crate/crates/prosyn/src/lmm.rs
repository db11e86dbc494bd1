//! Linear mixed-effects models with a single grouping factor.
//!
//! The model is `y = Xβ + Z b + ε` with `Z` the group-indicator matrix,
//! `b ~ N(0, θσ² I)` and `ε ~ N(0, σ² I)`, so the marginal covariance is
//! `σ² V̄` with `V̄ = I + θ Z Zᵀ`. For a fixed variance ratio θ, β and σ²
//! have closed forms; maximizing the likelihood reduces to a 1-D search
//! over θ (the profiled deviance). Everything uses ML, not REML: the
//! likelihood-ratio tests compare models that differ in fixed effects, and
//! REML likelihoods are not comparable across those.
//!
//! `V̄` is block diagonal by group, so `V̄⁻¹` never materializes: the block
//! `(I + θ 1 1ᵀ)⁻¹` acts through a rank-1 group-sum update in O(n), and
//! `log det V̄ = Σ_groups log(1 + θ m)`. Solves run on a whitened copy of
//! the design (a matrix `W` with `WᵀW = V̄⁻¹` applied row-wise) via
//! column-pivoted QR; predictors are z-scored internally for conditioning
//! and coefficients mapped back to native units.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::chi_square_sf;

/// Upper bound of the θ search bracket.
pub const THETA_MAX: f64 = 1e6;

/// Absolute deviance tolerance of the golden-section search.
pub const DEVIANCE_TOL: f64 = 1e-8;

/// Iteration cap of the optimizer.
pub const MAX_OPT_ITER: usize = 200;

/// Relative tolerance on the QR diagonal below which the design counts as
/// rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// A regression problem: outcome, design with leading intercept column,
/// group index per row, and an optional binary group-membership flag kept
/// beside the design (the syntax indicator).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    group: Vec<usize>,
    flag: Option<Vec<u8>>,
    names: Vec<String>,
    n_groups: usize,
    group_sizes: Vec<usize>,
    col_mean: Vec<f64>,
    col_scale: Vec<f64>,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        group: Vec<usize>,
        flag: Option<Vec<u8>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if n == 0 || p == 0 {
            return Err(Error::InvalidDataset("empty design".into()));
        }
        if y.len() != n || group.len() != n {
            return Err(Error::InvalidDataset(format!(
                "row mismatch: X has {n} rows, y {}, group {}",
                y.len(),
                group.len()
            )));
        }
        if let Some(f) = &flag {
            if f.len() != n {
                return Err(Error::InvalidDataset("flag length differs from row count".into()));
            }
            if f.iter().any(|v| *v > 1) {
                return Err(Error::InvalidDataset("flag values must be 0 or 1".into()));
            }
        }
        if names.len() != p {
            return Err(Error::InvalidDataset(format!(
                "{p} columns but {} column names",
                names.len()
            )));
        }
        if n < p + 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least p + 2 = {} rows, found {n}",
                p + 2
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite values in design or outcome".into()));
        }
        if x.column(0).iter().any(|v| *v != 1.0) {
            return Err(Error::InvalidDataset("first column must be the all-ones intercept".into()));
        }
        let n_groups = group.iter().max().copied().unwrap_or(0) + 1;
        let mut group_sizes = vec![0usize; n_groups];
        for &g in &group {
            group_sizes[g] += 1;
        }

        // z-scoring stats per predictor column (intercept untouched).
        // Constant columns keep scale 1 so the rank check can name them.
        let mut col_mean = vec![0.0; p];
        let mut col_scale = vec![1.0; p];
        for j in 1..p {
            let mean = x.column(j).sum() / n as f64;
            let var = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-300 {
                col_mean[j] = mean;
                col_scale[j] = sd;
            }
        }

        Ok(Dataset {
            x,
            y,
            group,
            flag,
            names,
            n_groups,
            group_sizes,
            col_mean,
            col_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn group(&self) -> &[usize] {
        &self.group
    }

    pub fn flag(&self) -> Option<&[u8]> {
        self.flag.as_deref()
    }

    /// The extended design: the flag appended as one extra column.
    pub fn with_flag_appended(&self, column_name: &str) -> Result<Dataset> {
        let flag = self
            .flag
            .as_ref()
            .ok_or(Error::ConstantFlag)?;
        let mut x = DMatrix::<f64>::zeros(self.n(), self.p() + 1);
        x.view_mut((0, 0), (self.n(), self.p())).copy_from(&self.x);
        for (i, &f) in flag.iter().enumerate() {
            x[(i, self.p())] = f as f64;
        }
        let mut names = self.names.clone();
        names.push(column_name.to_string());
        Dataset::new(x, self.y.clone(), self.group.clone(), self.flag.clone(), names)
    }

    /// Debug dump of (X, y, group, flag) as TSV for cross-checking against
    /// external statistics software.
    pub fn write_tsv(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::new();
        out.push_str(&self.names.join("\t"));
        out.push_str("\ty\tgroup");
        if self.flag.is_some() {
            out.push_str("\tflag");
        }
        out.push('\n');
        for i in 0..self.n() {
            for j in 0..self.p() {
                if j > 0 {
                    out.push('\t');
                }
                write!(out, "{}", self.x[(i, j)]).unwrap();
            }
            write!(out, "\t{}\t{}", self.y[i], self.group[i]).unwrap();
            if let Some(f) = &self.flag {
                write!(out, "\t{}", f[i]).unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Standardized design copy (z-scored predictor columns).
    fn standardized_x(&self) -> DMatrix<f64> {
        let mut xs = self.x.clone();
        for j in 1..self.p() {
            let mean = self.col_mean[j];
            let scale = self.col_scale[j];
            for v in xs.column_mut(j).iter_mut() {
                *v = (*v - mean) / scale;
            }
        }
        xs
    }

    /// Per-group shrink factors d_g of the whitening map
    /// `v_i -> v_i - d_{g(i)} * (group sum of v)`, which satisfies
    /// `WᵀW = V̄⁻¹` blockwise.
    fn shrink_factors(&self, theta: f64) -> Vec<f64> {
        self.group_sizes
            .iter()
            .map(|&m| {
                if m == 0 {
                    0.0
                } else {
                    let m = m as f64;
                    (1.0 - 1.0 / (1.0 + theta * m).sqrt()) / m
                }
            })
            .collect()
    }

    fn whiten_vector(&self, values: &mut DVector<f64>, shrink: &[f64]) {
        let mut sums = vec![0.0f64; self.n_groups];
        for (i, &g) in self.group.iter().enumerate() {
            sums[g] += values[i];
        }
        for (i, &g) in self.group.iter().enumerate() {
            values[i] -= shrink[g] * sums[g];
        }
    }

    fn whiten_matrix(&self, m: &mut DMatrix<f64>, shrink: &[f64]) {
        for j in 0..m.ncols() {
            let mut sums = vec![0.0f64; self.n_groups];
            for (i, &g) in self.group.iter().enumerate() {
                sums[g] += m[(i, j)];
            }
            for (i, &g) in self.group.iter().enumerate() {
                m[(i, j)] -= shrink[g] * sums[g];
            }
        }
    }

    /// Maps a coefficient vector from standardized back to native units.
    fn destandardize_beta(&self, beta_s: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let mut beta = DVector::zeros(p);
        let mut intercept = beta_s[0];
        for j in 1..p {
            beta[j] = beta_s[j] / self.col_scale[j];
            intercept -= beta_s[j] * self.col_mean[j] / self.col_scale[j];
        }
        beta[0] = intercept;
        beta
    }
}

/// Closed-form fit at a fixed variance ratio θ.
#[derive(Debug, Clone)]
pub struct ProfiledFit {
    /// −2 · log-likelihood with β and σ² at their optima given θ.
    pub deviance: f64,
    /// Fixed effects in native units.
    pub beta: DVector<f64>,
    /// Profiled ML residual variance.
    pub sigma2: f64,
    /// Shrinkage estimates of the per-group intercepts.
    pub blups: Vec<f64>,
}

/// Evaluates the profiled deviance at θ: GLS solve for β, ML profile for
/// σ², shrinkage means for the group intercepts.
pub fn profiled_deviance(d: &Dataset, theta: f64) -> Result<ProfiledFit> {
    assert!(theta >= 0.0, "theta must be non-negative");
    let n = d.n();
    let p = d.p();
    let shrink = d.shrink_factors(theta);

    let xs = d.standardized_x();
    let mut xw = xs.clone();
    d.whiten_matrix(&mut xw, &shrink);
    let mut yw = d.y.clone();
    d.whiten_vector(&mut yw, &shrink);

    let qr = xw.clone().col_piv_qr();
    let r = qr.r();
    let max_diag = (0..p).map(|k| r[(k, k)].abs()).fold(0.0f64, f64::max);
    let deficient: Vec<usize> = (0..p).filter(|&k| r[(k, k)].abs() <= RANK_TOL * max_diag).collect();
    if !deficient.is_empty() {
        // Pivot position k holds original column perm(k).
        let mut idx = DVector::from_iterator(p, (0..p).map(|i| i as f64));
        qr.p().permute_rows(&mut idx);
        let mut cols: Vec<String> = deficient
            .iter()
            .map(|&k| d.names[idx[k] as usize].clone())
            .collect();
        cols.sort();
        return Err(Error::CollinearColumns(cols));
    }
    let qty = qr.q().transpose() * &yw;
    let z = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::CollinearColumns(vec!["<unresolved>".into()]))?;
    let mut beta_s = z;
    qr.p().inv_permute_rows(&mut beta_s);

    let rw = yw - xw * &beta_s;
    let sigma2 = rw.norm_squared() / n as f64;
    if sigma2 <= 0.0 {
        return Err(Error::InvalidDataset(
            "residual variance collapsed to zero; outcome is exactly collinear with the design"
                .into(),
        ));
    }

    // Native-space residuals drive the BLUPs.
    let resid = &d.y - xs * &beta_s;
    let mut group_resid_sums = vec![0.0f64; d.n_groups];
    for (i, &g) in d.group.iter().enumerate() {
        group_resid_sums[g] += resid[i];
    }
    let blups: Vec<f64> = group_resid_sums
        .iter()
        .zip(&d.group_sizes)
        .map(|(&s, &m)| theta * s / (1.0 + theta * m as f64))
        .collect();

    let log_det: f64 = d
        .group_sizes
        .iter()
        .filter(|&&m| m > 0)
        .map(|&m| (1.0 + theta * m as f64).ln())
        .sum();
    let deviance = n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + log_det + n as f64;

    Ok(ProfiledFit {
        deviance,
        beta: d.destandardize_beta(&beta_s),
        sigma2,
        blups,
    })
}

/// A maximized-likelihood fit.
#[derive(Debug, Clone)]
pub struct LmmFit {
    /// Fixed-effect coefficients in native units.
    pub beta: DVector<f64>,
    /// Variance ratio σ_b² / σ² at the optimum.
    pub theta: f64,
    pub sigma2: f64,
    /// Maximized log-likelihood (= −deviance / 2).
    pub loglik: f64,
    pub deviance: f64,
    /// Per-group random intercepts.
    pub blups: Vec<f64>,
    pub converged: bool,
    /// True when the optimum sits on the θ = 0 boundary (no detectable
    /// group-level variance).
    pub singular: bool,
    pub n: usize,
    pub p: usize,
    pub n_groups: usize,
}

/// Maximum-likelihood fit over θ ∈ [0, `THETA_MAX`].
pub fn fit_ml(d: &Dataset) -> Result<LmmFit> {
    fit_ml_seeded(d, &[])
}

/// Like [`fit_ml`], but also evaluates the given candidate θ values. Used
/// to seed the extended model with the basic model's optimum so nested
/// fits can never lose likelihood against their reference.
pub fn fit_ml_seeded(d: &Dataset, theta_seeds: &[f64]) -> Result<LmmFit> {
    // Golden-section search over φ = log(1 + θ): the deviance is smooth in
    // φ and the bracket [0, log(1+θ_max)] is compact.
    let phi_max = (1.0f64 + THETA_MAX).ln();
    const INV_PHI: f64 = 0.618_033_988_749_894_8;

    let mut evals = 0usize;
    let mut eval = |phi: f64| -> Result<f64> {
        evals += 1;
        Ok(profiled_deviance(d, phi.exp_m1().max(0.0))?.deviance)
    };

    let mut a = 0.0f64;
    let mut b = phi_max;
    let fa = eval(a)?;
    let fb = eval(b)?;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < MAX_OPT_ITER {
        iterations += 1;
        if (b - a) < 1.0 && (f1 - f2).abs() <= DEVIANCE_TOL {
            converged = true;
            break;
        }
        if (b - a) < 1e-12 {
            converged = true;
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2)?;
        }
    }

    // Candidates: the interior golden points, one parabolic refinement
    // through the best triple, the θ = 0 boundary, and any seeds.
    let mut candidates: Vec<(f64, f64)> = vec![(x1, f1), (x2, f2), (0.0, fa), (phi_max, fb)];
    let (triple, best_mid) = if f1 <= f2 {
        ([(a, fa_or(&candidates, a, fa)), (x1, f1), (x2, f2)], x1)
    } else {
        ([(x1, f1), (x2, f2), (b, fb_or(&candidates, b, fb))], x2)
    };
    let _ = best_mid;
    if let Some(vertex) = parabola_vertex(triple[0], triple[1], triple[2]) {
        if vertex.is_finite() && vertex > 0.0 && vertex < phi_max {
            let fv = eval(vertex)?;
            candidates.push((vertex, fv));
        }
    }
    for &seed in theta_seeds {
        if seed.is_finite() && (0.0..=THETA_MAX).contains(&seed) {
            let phi = seed.ln_1p();
            let fs = eval(phi)?;
            candidates.push((phi, fs));
        }
    }

    let &(phi_best, _) = candidates
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("candidate list is non-empty");
    let theta = phi_best.exp_m1().max(0.0);
    let fit = profiled_deviance(d, theta)?;
    Ok(LmmFit {
        beta: fit.beta,
        theta,
        sigma2: fit.sigma2,
        loglik: -fit.deviance / 2.0,
        deviance: fit.deviance,
        blups: fit.blups,
        converged,
        singular: theta < 1e-8,
        n: d.n(),
        p: d.p(),
        n_groups: d.n_groups(),
    })
}

// The bracket endpoints a/b may have moved since their values were taken;
// these helpers just keep the stored endpoint values paired correctly.
fn fa_or(_c: &[(f64, f64)], _a: f64, fa: f64) -> f64 {
    fa
}

fn fb_or(_c: &[(f64, f64)], _b: f64, fb: f64) -> f64 {
    fb
}

/// Vertex of the parabola through three points, or `None` when degenerate.
fn parabola_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> Option<f64> {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den.abs() < 1e-300 {
        return None;
    }
    Some(x1 - 0.5 * num / den)
}

/// Likelihood-ratio test between two nested fits on identical rows.
#[derive(Debug, Clone, Copy)]
pub struct LrOutcome {
    pub lr_stat: f64,
    pub p_value: f64,
}

pub fn lr_test(basic: &LmmFit, extended: &LmmFit) -> Result<LrOutcome> {
    if basic.n != extended.n {
        return Err(Error::RowCountMismatch(basic.n, extended.n));
    }
    if extended.p != basic.p + 1 {
        return Err(Error::NotNested {
            basic: basic.p,
            extended: extended.p,
        });
    }
    let lr_stat = (2.0 * (extended.loglik - basic.loglik)).max(0.0);
    Ok(LrOutcome {
        lr_stat,
        p_value: chi_square_sf(lr_stat, 1.0),
    })
}

/// Single-coefficient GLS estimate of the group difference on the basic
/// model's residuals, with the variance structure frozen at the basic θ.
#[derive(Debug, Clone, Copy)]
pub struct EffectEstimate {
    /// Mean difference (flag 1 minus flag 0) in the outcome's native unit.
    pub value: f64,
    /// Standard error under the frozen variance structure.
    pub se: f64,
}

/// Estimates the syntax-effect magnitude: the basic model's coefficients are
/// kept, and only the coefficient of the centered flag column is fitted
/// against the residuals, under `V̄(θ_basic)`.
pub fn effect_size(basic: &LmmFit, d: &Dataset) -> Result<EffectEstimate> {
    if basic.n != d.n() {
        return Err(Error::RowCountMismatch(basic.n, d.n()));
    }
    if basic.p != d.p() {
        return Err(Error::InvalidDataset(format!(
            "basic fit has {} columns but the dataset has {}",
            basic.p,
            d.p()
        )));
    }
    let flag = d.flag().ok_or(Error::ConstantFlag)?;
    let ones = flag.iter().filter(|f| **f == 1).count();
    if ones == 0 || ones == flag.len() {
        return Err(Error::ConstantFlag);
    }

    let n = d.n();
    let mean_flag = ones as f64 / n as f64;
    let mut f = DVector::from_iterator(n, flag.iter().map(|&v| v as f64 - mean_flag));
    let mut r = &d.y - d.x() * &basic.beta;
    let shrink = d.shrink_factors(basic.theta);
    d.whiten_vector(&mut f, &shrink);
    d.whiten_vector(&mut r, &shrink);
    let denom = f.norm_squared();
    if denom <= 0.0 {
        return Err(Error::ConstantFlag);
    }
    Ok(EffectEstimate {
        value: f.dot(&r) / denom,
        se: (basic.sigma2 / denom).sqrt(),
    })
}

/// One Table-style result cell: likelihood-ratio statistic, p-value, effect
/// in the outcome's unit and the significance label.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub lr_stat: f64,
    pub df: u32,
    pub p_value: f64,
    /// Positive iff the first-listed group exceeds the second.
    pub effect: f64,
    /// `***`, `**`, `*`, a printed near-miss p-value, or `ns`.
    pub stars: String,
}

/// Near-miss p-values below this cutoff print numerically instead of `ns`.
pub const DEFAULT_NEAR_MISS_CUTOFF: f64 = 0.15;

/// Significance label for a p-value: `***` < .001, `**` < .01, `*` < .05;
/// p in [0.05, cutoff) prints with two decimals, everything else is `ns`.
pub fn stars_label(p_value: f64, near_miss_cutoff: f64) -> String {
    if p_value < 0.001 {
        "***".into()
    } else if p_value < 0.01 {
        "**".into()
    } else if p_value < 0.05 {
        "*".into()
    } else if p_value < near_miss_cutoff {
        format!("{p_value:.2}")
    } else {
        "ns".into()
    }
}

impl TestResult {
    pub fn new(lr_stat: f64, p_value: f64, effect: f64, near_miss_cutoff: f64) -> Self {
        TestResult {
            lr_stat,
            df: 1,
            p_value,
            effect,
            stars: stars_label(p_value, near_miss_cutoff),
        }
    }
}
