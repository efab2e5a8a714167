//! Converse side: the two three-variable convex programs whose optimal value
//! lower-bounds the rate, closed-form KKT certificates for their candidate
//! minimizer, an independent numerical minimizer, and the matrix identities
//! behind the constraint set.
//!
//! Both programs share one template parameterized by the fictitious noise
//! level `lambda_w`. Program `P` fixes `lambda_w = lambda_s2` (used when
//! `lambda_s1^(j) >= lambda_s2 > 0`), program `P-hat` fixes
//! `lambda_w = lambda_s1^(j)` (used when `lambda_s2 >= lambda_s1^(j) > 0`).
//! Over variables `(d1, d2, delta)` the template is
//!
//! ```text
//! minimize  (1/2k) log(s1k^2 / ((s1k - w) d1 + s1k w))
//!         + ((k-1)/2k) log(s2^2 / ((s2 - w) d2 + s2 w))
//!         + (1/2) log(w / delta)
//! s.t.      0 < d1 <= s1k,  0 < d2 <= s2,  delta > 0,
//!           delta <= (1/d1 + 1/w - 1/s1k)^-1,
//!           delta <= (1/d2 + 1/w - 1/s2)^-1,
//!           (x1k/s1k)^2 d1 + x1k - x1k^2/s1k
//!             + (k-1) ((x2/s2)^2 d2 + x2 - x2^2/s2) <= k d_k.
//! ```
//!
//! With `w = s2` the middle log term vanishes and the second coupling
//! constraint reduces to `delta <= d2`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::rdcore::{harmonic, rate_at, solve_lambda_q};
use crate::spectra::SourceModel;

/// Default absolute tolerance on KKT residuals.
pub const STATIONARITY_TOL: f64 = 1e-9;

/// Default slack on Loewner-order checks (minimum eigenvalue).
pub const PSD_ORDER_TOL: f64 = 1e-10;

const GOLDEN_STEPS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Case {
    /// `lambda_w = lambda_s2`.
    #[serde(rename = "P")]
    P,
    /// `lambda_w = lambda_s1^(j)`.
    #[serde(rename = "P-hat")]
    PHat,
}

impl Case {
    fn prime(self) -> &'static str {
        match self {
            Case::P => "",
            Case::PHat => "'",
        }
    }
}

/// Pick the program matching the spectrum ordering at `j`: `P` when
/// `lambda_s1^(j) >= lambda_s2`, `P-hat` otherwise.
pub fn select_case(model: &SourceModel, j: usize) -> Result<Case> {
    model.check_index("j", j, 1)?;
    let s1 = model.s.lambda1(j);
    let s2 = model.s.lambda2();
    if s1 <= 0.0 || s2 <= 0.0 {
        return Err(Error::DegenerateSpectrum(format!(
            "programs need lambda_s1^({j}) > 0 and lambda_s2 > 0 (got {s1}, {s2}); \
             use the degenerate closed forms"
        )));
    }
    Ok(if s1 >= s2 { Case::P } else { Case::PHat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasiblePoint {
    pub d1: f64,
    pub d2: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multipliers {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

impl Multipliers {
    pub fn nonnegative(&self) -> bool {
        [self.a1, self.a2, self.b1, self.b2, self.c]
            .iter()
            .all(|&m| m >= 0.0)
    }
}

/// Spectral constants of one program instance.
#[derive(Debug, Clone, Copy)]
struct Program {
    case: Case,
    k: usize,
    /// `lambda_w`.
    w: f64,
    s1k: f64,
    s2: f64,
    x1k: f64,
    x2: f64,
}

impl Program {
    fn new(model: &SourceModel, k: usize, j: usize, case: Case) -> Result<Self> {
        model.check_index("k", k, 1)?;
        model.check_index("j", j, k)?;
        let s1j = model.s.lambda1(j);
        let s2 = model.s.lambda2();
        let w = match case {
            Case::P if s1j >= s2 && s2 > 0.0 => s2,
            Case::PHat if s2 >= s1j && s1j > 0.0 => s1j,
            _ => {
                return Err(Error::CasePrecondition(format!(
                    "{case:?} needs {} (lambda_s1^({j}) = {s1j}, lambda_s2 = {s2})",
                    match case {
                        Case::P => "lambda_s1^(j) >= lambda_s2 > 0",
                        Case::PHat => "lambda_s2 >= lambda_s1^(j) > 0",
                    }
                )))
            }
        };
        Ok(Self {
            case,
            k,
            w,
            s1k: model.s.lambda1(k),
            s2,
            x1k: model.x.lambda1(k),
            x2: model.x.lambda2(),
        })
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    /// `(1/d + 1/w - 1/l)^-1`.
    fn coupling(&self, d: f64, l: f64) -> f64 {
        1.0 / (1.0 / d + 1.0 / self.w - 1.0 / l)
    }

    /// Derivative of [`coupling`](Self::coupling) in `d`.
    fn coupling_slope(&self, d: f64, l: f64) -> f64 {
        (1.0 + d / self.w - d / l).powi(-2)
    }

    fn a1_coef(&self) -> f64 {
        (self.x1k / self.s1k).powi(2)
    }

    fn b2_coef(&self) -> f64 {
        (self.x2 / self.s2).powi(2)
    }

    /// Left side of the distortion budget constraint.
    fn budget_lhs(&self, p: &FeasiblePoint) -> f64 {
        let lead = self.a1_coef() * p.d1 + self.x1k - self.x1k * self.x1k / self.s1k;
        let rest = if self.k > 1 {
            (self.kf() - 1.0) * (self.b2_coef() * p.d2 + self.x2 - self.x2 * self.x2 / self.s2)
        } else {
            0.0
        };
        lead + rest
    }

    fn objective(&self, p: &FeasiblePoint) -> Result<f64> {
        let kf = self.kf();
        let arg1 = (self.s1k - self.w) * p.d1 + self.s1k * self.w;
        let arg2 = (self.s2 - self.w) * p.d2 + self.s2 * self.w;
        if arg1 <= 0.0 || p.delta <= 0.0 || (self.k > 1 && arg2 <= 0.0) {
            return Err(Error::LogDomain("program objective"));
        }
        let mut value =
            (self.s1k * self.s1k / arg1).ln() / (2.0 * kf) + 0.5 * (self.w / p.delta).ln();
        if self.k > 1 {
            value += (kf - 1.0) / (2.0 * kf) * (self.s2 * self.s2 / arg2).ln();
        }
        Ok(value)
    }

    fn candidate(&self, lambda_q: f64) -> FeasiblePoint {
        FeasiblePoint {
            d1: harmonic(self.s1k, lambda_q),
            d2: harmonic(self.s2, lambda_q),
            delta: harmonic(self.w, lambda_q),
        }
    }

    fn multipliers(&self, p: &FeasiblePoint) -> Multipliers {
        let kf = self.kf();
        let a1c = self.a1_coef();
        let b2c = self.b2_coef();
        let c = (p.d1 + (kf - 1.0) * p.d2)
            / (a1c * p.d1 * p.d1 + (kf - 1.0) * b2c * p.d2 * p.d2)
            / (2.0 * kf);
        let (b1, b2) = match self.case {
            Case::P => (
                (p.d2 - p.d1 + 2.0 * kf * c * a1c * p.d1 * p.d1) / (2.0 * kf * p.d2 * p.d2),
                (kf - 1.0) * c * b2c,
            ),
            Case::PHat => {
                let dd = 2.0 * kf * p.delta * p.delta;
                (
                    (p.delta - p.d1 + 2.0 * kf * c * a1c * p.d1 * p.d1) / dd,
                    ((kf - 1.0) * (p.delta - p.d2) + 2.0 * kf * (kf - 1.0) * c * b2c * p.d2 * p.d2)
                        / dd,
                )
            }
        };
        Multipliers {
            a1: 0.0,
            a2: 0.0,
            b1,
            b2,
            c,
        }
    }

    fn stationarity(&self, p: &FeasiblePoint, m: &Multipliers) -> [f64; 3] {
        let kf = self.kf();
        let grad_d1 =
            (self.w - self.s1k) / (2.0 * kf * ((self.s1k - self.w) * p.d1 + self.s1k * self.w));
        let grad_d2 = (kf - 1.0) * (self.w - self.s2)
            / (2.0 * kf * ((self.s2 - self.w) * p.d2 + self.s2 * self.w));
        [
            grad_d1 + m.a1 - m.b1 * self.coupling_slope(p.d1, self.s1k) + m.c * self.a1_coef(),
            grad_d2 + m.a2 - m.b2 * self.coupling_slope(p.d2, self.s2)
                + m.c * (kf - 1.0) * self.b2_coef(),
            -1.0 / (2.0 * p.delta) + m.b1 + m.b2,
        ]
    }

    /// Constraint values `g(x) <= 0` paired with labels, in the order the
    /// complementary-slackness equations use.
    fn constraints(&self, p: &FeasiblePoint, d_k: f64) -> [(&'static str, f64, f64); 5] {
        let (e2, e3, c2, c3, e7) = match self.case {
            Case::P => ("equiv2", "equiv3", "2case1", "3case1", "equiv7"),
            Case::PHat => ("equiv2", "equiv3", "2case1'", "3case1'", "equiv7"),
        };
        let kd = self.kf() * d_k;
        [
            (e2, p.d1 - self.s1k, self.s1k),
            (e3, p.d2 - self.s2, self.s2),
            (c2, p.delta - self.coupling(p.d1, self.s1k), p.delta),
            (c3, p.delta - self.coupling(p.d2, self.s2), p.delta),
            (e7, self.budget_lhs(p) - kd, kd),
        ]
    }
}

/// `eta(d1, d2, delta)`: the objective of program `P`.
pub fn objective_eta(model: &SourceModel, k: usize, point: &FeasiblePoint) -> Result<f64> {
    model.check_index("k", k, 1)?;
    let s2 = model.s.lambda2();
    if s2 <= 0.0 {
        return Err(Error::LogDomain("eta (lambda_s2 = 0)"));
    }
    Program {
        case: Case::P,
        k,
        w: s2,
        s1k: model.s.lambda1(k),
        s2,
        x1k: model.x.lambda1(k),
        x2: model.x.lambda2(),
    }
    .objective(point)
}

/// `eta-hat(d1, d2, delta)`: the objective of program `P-hat` at sub-dimension `j`.
pub fn objective_eta_hat(
    model: &SourceModel,
    k: usize,
    j: usize,
    point: &FeasiblePoint,
) -> Result<f64> {
    model.check_index("k", k, 1)?;
    model.check_index("j", j, k)?;
    let s1j = model.s.lambda1(j);
    if s1j <= 0.0 {
        return Err(Error::LogDomain("eta-hat (lambda_s1^(j) = 0)"));
    }
    Program {
        case: Case::PHat,
        k,
        w: s1j,
        s1k: model.s.lambda1(k),
        s2: model.s.lambda2(),
        x1k: model.x.lambda1(k),
        x2: model.x.lambda2(),
    }
    .objective(point)
}

/// The minimizer candidate built from the test-channel noise `lambda_q`:
/// `d1`, `d2`, `delta` are the harmonic combinations of `lambda_q` with
/// `lambda_s1^(k)`, `lambda_s2`, and `lambda_w`.
pub fn candidate_minimizer(
    model: &SourceModel,
    k: usize,
    j: usize,
    d_k: f64,
    case: Case,
) -> Result<FeasiblePoint> {
    let program = Program::new(model, k, j, case)?;
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    Ok(program.candidate(lambda_q))
}

/// Closed-form multipliers at the candidate minimizer. They may come out
/// negative; that signals the matching condition fails, not an error.
pub fn kkt_multipliers(
    model: &SourceModel,
    k: usize,
    j: usize,
    d_k: f64,
    case: Case,
) -> Result<Multipliers> {
    let program = Program::new(model, k, j, case)?;
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    Ok(program.multipliers(&program.candidate(lambda_q)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KKTCertificate {
    pub case: Case,
    pub k: usize,
    pub j: usize,
    pub d_k: f64,
    pub tol: f64,
    pub point: FeasiblePoint,
    pub multipliers: Multipliers,
    /// Stationarity in `d1`, `d2`, `delta`.
    pub stationarity: Vec<Residual>,
    /// Complementary slackness products.
    pub complementarity: Vec<Residual>,
    /// Constraint values `g(x)`; feasible when `<= 0` up to tolerance.
    pub primal: Vec<Residual>,
    pub objective: f64,
    pub rate_bar: f64,
    /// Labels of every failed check, in evaluation order.
    pub violations: Vec<String>,
    pub valid: bool,
}

impl KKTCertificate {
    /// True when the only failures are negative multipliers, i.e. the
    /// candidate satisfies every equation but the sign requirement.
    pub fn fails_only_on_sign(&self) -> bool {
        !self.valid && self.violations.iter().all(|v| v.ends_with("<0"))
    }

    pub fn max_stationarity_residual(&self) -> f64 {
        self.stationarity
            .iter()
            .map(|r| r.value.abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluate the KKT system of `case` at an arbitrary point and multiplier
/// set. Residuals use absolute tolerance `tol`; primal constraints use
/// `tol` relative to the size of their right side.
#[allow(clippy::too_many_arguments)]
pub fn kkt_residuals(
    model: &SourceModel,
    k: usize,
    j: usize,
    d_k: f64,
    case: Case,
    point: &FeasiblePoint,
    multipliers: &Multipliers,
    tol: f64,
) -> Result<KKTCertificate> {
    let program = Program::new(model, k, j, case)?;
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    let prime = case.prime();
    let m = multipliers;
    let mut violations = Vec::new();

    let stationarity: Vec<Residual> = program
        .stationarity(point, m)
        .iter()
        .enumerate()
        .map(|(i, &value)| Residual {
            label: format!("kkt{}{prime}", i + 1),
            value,
        })
        .collect();

    let constraints = program.constraints(point, d_k);
    let weights = [m.a1, m.a2, m.b1, m.b2, m.c];
    let complementarity: Vec<Residual> = constraints
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (&(_, g, _), weight))| Residual {
            label: format!("kkt{}{prime}", i + 4),
            value: weight * g,
        })
        .collect();

    let mut primal: Vec<Residual> = vec![
        Residual {
            label: "d1>0".into(),
            value: -point.d1,
        },
        Residual {
            label: "d2>0".into(),
            value: -point.d2,
        },
        Residual {
            label: "equiv4".into(),
            value: -point.delta,
        },
    ];
    let positivity_failed: Vec<String> = primal
        .iter()
        .filter(|r| r.value >= 0.0)
        .map(|r| r.label.clone())
        .collect();
    primal.extend(constraints.iter().map(|&(label, g, _)| Residual {
        label: label.into(),
        value: g,
    }));

    for r in stationarity.iter().chain(&complementarity) {
        if !(r.value.abs() <= tol) {
            violations.push(r.label.clone());
        }
    }
    violations.extend(positivity_failed);
    for &(label, g, scale) in &constraints {
        if !(g <= tol * scale.abs().max(1.0)) {
            violations.push(label.to_string());
        }
    }
    for (name, value) in [
        ("a1", m.a1),
        ("a2", m.a2),
        ("b1", m.b1),
        ("b2", m.b2),
        ("c", m.c),
    ] {
        if !(value >= 0.0) {
            violations.push(format!("{name}<0"));
        }
    }

    let objective = program.objective(point).unwrap_or(f64::NAN);
    Ok(KKTCertificate {
        case,
        k,
        j,
        d_k,
        tol,
        point: *point,
        multipliers: *multipliers,
        stationarity,
        complementarity,
        primal,
        objective,
        rate_bar: rate_at(model, k, lambda_q),
        valid: violations.is_empty(),
        violations,
    })
}

/// Certificate for the closed-form candidate and multipliers.
pub fn verify_kkt(
    model: &SourceModel,
    k: usize,
    j: usize,
    d_k: f64,
    case: Case,
    tol: f64,
) -> Result<KKTCertificate> {
    let point = candidate_minimizer(model, k, j, d_k, case)?;
    let multipliers = kkt_multipliers(model, k, j, d_k, case)?;
    kkt_residuals(model, k, j, d_k, case, &point, &multipliers, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericOptimum {
    pub point: FeasiblePoint,
    pub objective: f64,
}

/// Minimize the program numerically without reference to the candidate.
///
/// `delta` is projected onto its upper constraint surface
/// `min(coupling(d1), coupling(d2))`, which is optimal because the
/// objective decreases in `delta`. The objective also does not increase in
/// `d1` or `d2`, so an optimum sits on the face where the distortion budget
/// is tight; that face is a segment parameterized by `d1`, and the convex
/// restriction of the objective to it is minimized by golden-section search.
pub fn solve_numeric(
    model: &SourceModel,
    k: usize,
    j: usize,
    d_k: f64,
    case: Case,
) -> Result<NumericOptimum> {
    let program = Program::new(model, k, j, case)?;
    crate::rdcore::check_distortion(model, k, d_k)?;
    let kf = k as f64;

    // Budget: a1 d1 + e2 d2 <= room.
    let a1 = program.a1_coef();
    let e2 = if k > 1 {
        (kf - 1.0) * program.b2_coef()
    } else {
        0.0
    };
    let zero = FeasiblePoint {
        d1: 0.0,
        d2: 0.0,
        delta: 0.0,
    };
    let room = kf * d_k - program.budget_lhs(&zero);
    if room <= 0.0 {
        return Err(Error::Inconsistent(format!(
            "distortion budget is empty (room = {room})"
        )));
    }

    let d2_of = |d1: f64| -> f64 {
        if e2 > 0.0 {
            ((room - a1 * d1) / e2).min(program.s2)
        } else {
            program.s2
        }
    };
    let (lo, hi) = if a1 > 0.0 {
        let hi = program.s1k.min(room / a1);
        let lo = if e2 > 0.0 {
            ((room - e2 * program.s2) / a1).max(0.0)
        } else {
            hi
        };
        (lo, hi)
    } else {
        (program.s1k, program.s1k)
    };

    let point_at = |d1: f64| -> FeasiblePoint {
        let d1 = d1.max(f64::MIN_POSITIVE);
        let d2 = d2_of(d1).max(f64::MIN_POSITIVE);
        let delta = program
            .coupling(d1, program.s1k)
            .min(program.coupling(d2, program.s2));
        FeasiblePoint { d1, d2, delta }
    };
    let value_at = |d1: f64| -> f64 { program.objective(&point_at(d1)).unwrap_or(f64::INFINITY) };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (value_at(x1), value_at(x2));
    for _ in 0..GOLDEN_STEPS {
        if b - a <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = value_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = value_at(x2);
        }
    }
    let best = [a, x1, x2, b]
        .into_iter()
        .map(|t| (t, value_at(t)))
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .map(|(t, _)| t)
        .unwrap_or(hi);
    let point = point_at(best);
    Ok(NumericOptimum {
        point,
        objective: program.objective(&point)?,
    })
}

/// Lower bound on `d_j` implied by a per-encoder residual `delta`.
pub fn dj_lower_bound(
    model: &SourceModel,
    k: usize,
    j: usize,
    delta: f64,
    case: Case,
) -> Result<f64> {
    Program::new(model, k, j, case)?;
    if !(delta > 0.0) {
        return Err(Error::LogDomain("dj_lower_bound (delta must be positive)"));
    }
    let jf = j as f64;
    let x1 = model.x.lambda1(j);
    let s1 = model.s.lambda1(j);
    let x2 = model.x.lambda2();
    let s2 = model.s.lambda2();
    let inner_inv = |a: f64, b: f64| -> Result<f64> {
        let inner = 1.0 / delta + 1.0 / a - 1.0 / b;
        if inner > 0.0 {
            Ok(1.0 / inner)
        } else {
            Err(Error::LogDomain(
                "dj_lower_bound (nonpositive inner inverse)",
            ))
        }
    };
    let (lead_d, rest_d) = match case {
        Case::P => (inner_inv(s1, s2)?, delta),
        Case::PHat => (delta, inner_inv(s2, s1)?),
    };
    let lead = (x1 / s1).powi(2) * lead_d + x1 - x1 * x1 / s1;
    let rest = (x2 / s2).powi(2) * rest_d + x2 - x2 * x2 / s2;
    Ok(lead / jf + (jf - 1.0) / jf * rest)
}

/// `Gamma_U Gamma_S^-1 D Gamma_S^-1 Gamma_U + Gamma_U - Gamma_U Gamma_S^-1 Gamma_U`:
/// the error covariance of estimating `U` from whatever yields error
/// covariance `D` on `S`, when `U` is observed only through `S`.
pub fn sigma_identity(
    gamma_u: &DMatrix<f64>,
    gamma_s: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let gs_inv = spd_inverse(gamma_s, "Gamma_S")?;
    let gain = gamma_u * &gs_inv;
    Ok(&gain * d * gain.transpose() + gamma_u - &gain * gamma_u)
}

/// `(D^-1 + lambda_w^-1 I - Gamma_S^-1)^-1`, the Loewner upper bound on the
/// error covariance of `S` given `U` and the decoder output.
pub fn delta_bound(
    d: &DMatrix<f64>,
    lambda_w: f64,
    gamma_s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if !(lambda_w > 0.0) {
        return Err(Error::LambdaWOutOfRange {
            lambda_w,
            upper: f64::INFINITY,
        });
    }
    let n = d.nrows();
    let inner = spd_inverse(d, "D")? + DMatrix::identity(n, n) / lambda_w
        - spd_inverse(gamma_s, "Gamma_S")?;
    spd_inverse(&inner, "D^-1 + Lambda_W^-1 - Gamma_S^-1")
}

/// `bound((D1 + D2)/2) - (bound(D1) + bound(D2))/2`; positive semidefinite
/// by matrix concavity of `(A^-1 + B^-1)^-1` in `A`.
pub fn concavity_gap(
    d1: &DMatrix<f64>,
    d2: &DMatrix<f64>,
    lambda_w: f64,
    gamma_s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mid = (d1 + d2) * 0.5;
    let at_mid = delta_bound(&mid, lambda_w, gamma_s)?;
    let avg = (delta_bound(d1, lambda_w, gamma_s)? + delta_bound(d2, lambda_w, gamma_s)?) * 0.5;
    Ok(at_mid - avg)
}
