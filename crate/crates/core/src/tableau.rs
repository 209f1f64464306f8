//! IMEX Butcher pairs, the coefficients of their discrete adjoint, and an
//! order-condition checker for the combined forward/adjoint scheme.
//!
//! A pair consists of a strictly lower triangular explicit matrix `ã` with
//! weights `ω̃` (used for transport) and a lower triangular implicit matrix
//! `a` with weights `ω` (used for the relaxation source). The adjoint
//! coefficients are
//!
//! ```text
//! α̃_ij = ω̃_j − (ω̃_j / ω̃_i) ã_ji      α_ij = ω_j − (ω_j / ω̃_i) ã_ji
//! β̃_ij = ω̃_j − (ω̃_j / ω_i)  a_ji      β_ij = ω_j − (ω_j / ω_i)  a_ji
//! ```
//!
//! and exist only when every weight is nonzero.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result, WeightFamily};

/// Default tolerance for order-condition residuals.
pub const ORDER_TOL: f64 = 1e-12;

/// Dense row-major square matrix of stage coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTableau(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// An explicit/implicit Runge–Kutta pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ImexTableau {
    name: String,
    a_tilde: SquareMatrix,
    a_impl: SquareMatrix,
    w_tilde: Vec<f64>,
    w: Vec<f64>,
    c_tilde: Vec<f64>,
    c: Vec<f64>,
}

impl ImexTableau {
    pub fn new(
        name: impl Into<String>,
        a_tilde: &[Vec<f64>],
        a_impl: &[Vec<f64>],
        w_tilde: Vec<f64>,
        w: Vec<f64>,
    ) -> Result<Self> {
        let s = a_tilde.len();
        if s == 0 {
            return Err(Error::InvalidTableau("zero stages".to_string()));
        }
        if a_impl.len() != s || w_tilde.len() != s || w.len() != s {
            return Err(Error::InvalidTableau(format!(
                "inconsistent stage counts: ã {s}, a {}, ω̃ {}, ω {}",
                a_impl.len(),
                w_tilde.len(),
                w.len()
            )));
        }
        let a_tilde = SquareMatrix::from_rows(a_tilde)?;
        let a_impl = SquareMatrix::from_rows(a_impl)?;
        let all = a_tilde.data.iter().chain(&a_impl.data).chain(&w_tilde).chain(&w);
        if !all.into_iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidTableau("non-finite coefficient".to_string()));
        }
        for i in 0..s {
            for j in i..s {
                if a_tilde[(i, j)] != 0.0 {
                    return Err(Error::InvalidTableau(format!(
                        "explicit matrix must be strictly lower triangular (ã[{}][{}] = {})",
                        i + 1,
                        j + 1,
                        a_tilde[(i, j)]
                    )));
                }
                if j > i && a_impl[(i, j)] != 0.0 {
                    return Err(Error::InvalidTableau(format!(
                        "implicit matrix must be lower triangular (a[{}][{}] = {})",
                        i + 1,
                        j + 1,
                        a_impl[(i, j)]
                    )));
                }
            }
        }
        let c_tilde = a_tilde.row_sums();
        let c = a_impl.row_sums();
        Ok(Self { name: name.into(), a_tilde, a_impl, w_tilde, w, c_tilde, c })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn stages(&self) -> usize {
        self.w.len()
    }

    pub fn a_tilde(&self) -> &SquareMatrix {
        &self.a_tilde
    }

    pub fn a_impl(&self) -> &SquareMatrix {
        &self.a_impl
    }

    pub fn w_tilde(&self) -> &[f64] {
        &self.w_tilde
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn c_tilde(&self) -> &[f64] {
        &self.c_tilde
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// First zero weight, explicit row first.
    pub fn zero_weight(&self) -> Option<(WeightFamily, usize)> {
        if let Some(i) = self.w_tilde.iter().position(|&x| x == 0.0) {
            return Some((WeightFamily::Explicit, i));
        }
        self.w.iter().position(|&x| x == 0.0).map(|i| (WeightFamily::Implicit, i))
    }

    /// Returns a copy with one coefficient shifted; used to probe the checker.
    pub fn perturbed(&self, which: Coefficient, delta: f64) -> Result<Self> {
        let s = self.stages();
        let in_range = match which {
            Coefficient::ATilde(i, j) | Coefficient::AImpl(i, j) => i < s && j < s,
            Coefficient::WTilde(i) | Coefficient::W(i) => i < s,
        };
        if !in_range {
            return Err(Error::InvalidParameter { name: "coefficient", reason: format!("{which:?} outside a {s}-stage tableau") });
        }
        let mut t = self.clone();
        match which {
            Coefficient::ATilde(i, j) => t.a_tilde[(i, j)] += delta,
            Coefficient::AImpl(i, j) => t.a_impl[(i, j)] += delta,
            Coefficient::WTilde(i) => t.w_tilde[i] += delta,
            Coefficient::W(i) => t.w[i] += delta,
        }
        let rows = |m: &SquareMatrix| (0..m.n).map(|i| m.row(i).to_vec()).collect::<Vec<_>>();
        Self::new(
            format!("{}+perturbed", self.name),
            &rows(&t.a_tilde),
            &rows(&t.a_impl),
            t.w_tilde,
            t.w,
        )
    }
}

/// Address of a single tableau coefficient (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    ATilde(usize, usize),
    AImpl(usize, usize),
    WTilde(usize),
    W(usize),
}

/// Coefficients of the adjoint Runge–Kutta scheme and their row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointCoeffs {
    pub alpha_tilde: SquareMatrix,
    pub alpha: SquareMatrix,
    pub beta_tilde: SquareMatrix,
    pub beta: SquareMatrix,
    pub gamma: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_tilde: Vec<f64>,
}

pub fn adjoint_coeffs(tab: &ImexTableau) -> Result<AdjointCoeffs> {
    if let Some((family, index)) = tab.zero_weight() {
        return Err(Error::ZeroWeight { family, index });
    }
    let s = tab.stages();
    let (wt, w) = (&tab.w_tilde, &tab.w);
    let (at, a) = (&tab.a_tilde, &tab.a_impl);
    let mut alpha_tilde = SquareMatrix::zeros(s);
    let mut alpha = SquareMatrix::zeros(s);
    let mut beta_tilde = SquareMatrix::zeros(s);
    let mut beta = SquareMatrix::zeros(s);
    for i in 0..s {
        for j in 0..s {
            alpha_tilde[(i, j)] = wt[j] - wt[j] / wt[i] * at[(j, i)];
            alpha[(i, j)] = w[j] - w[j] / wt[i] * at[(j, i)];
            beta_tilde[(i, j)] = wt[j] - wt[j] / w[i] * a[(j, i)];
            beta[(i, j)] = w[j] - w[j] / w[i] * a[(j, i)];
        }
    }
    Ok(AdjointCoeffs {
        gamma: alpha.row_sums(),
        gamma_tilde: alpha_tilde.row_sums(),
        delta: beta.row_sums(),
        delta_tilde: beta_tilde.row_sums(),
        alpha_tilde,
        alpha,
        beta_tilde,
        beta,
    })
}

/// How a condition enters the order report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    /// Standard additive Runge–Kutta condition of the forward pair.
    Forward,
    /// `Σ ω γ² = Σ ω γ̃² = Σ ω γ γ̃ = 1/3`.
    GammaBranch,
    /// `Σ ω a γ = Σ ω ã γ̃ = 1/6` plus one of `Σ ω a γ̃`, `Σ ω ã γ`.
    CouplingBranch,
    /// Recorded but never used to decide the order (δ-sums).
    Informational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResidual {
    pub label: String,
    pub order: u8,
    pub kind: ConditionKind,
    pub residual: f64,
}

/// Which alternative established third order for the adjoint system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThirdOrderBranch {
    /// Forward order below 3; nothing to check.
    NotRequired,
    Gamma,
    Coupling,
    /// Zero weights: adjoint coefficients do not exist.
    Unavailable,
    /// Forward order 3 but no branch holds.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub tableau: String,
    pub forward_order: u8,
    pub adjoint_system_order: u8,
    pub residuals: Vec<ConditionResidual>,
    pub branch_used: ThirdOrderBranch,
    pub tol: f64,
}

impl OrderReport {
    /// Largest residual among the forward conditions of order `<= k`.
    pub fn max_forward_residual(&self, k: u8) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.kind == ConditionKind::Forward && r.order <= k)
            .fold(0.0, |m, r| m.max(r.residual))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

/// `Σ_ij b_i M_ij c_j`
fn bmc(b: &[f64], m: &SquareMatrix, c: &[f64]) -> f64 {
    (0..b.len()).map(|i| b[i] * dot(m.row(i), c)).sum()
}

/// Checks the order conditions of the pair (up to three) and the extra
/// third-order conditions of the combined forward/adjoint scheme.
///
/// `coeffs` must come from [`adjoint_coeffs`] on the same tableau; pass
/// `None` when the tableau has zero weights.
pub fn check_order(tab: &ImexTableau, coeffs: Option<&AdjointCoeffs>, tol: f64) -> OrderReport {
    let mut residuals = Vec::new();
    let mut push = |label: String, order: u8, kind: ConditionKind, lhs: f64, rhs: f64| {
        residuals.push(ConditionResidual { label, order, kind, residual: (lhs - rhs).abs() });
    };
    let weights = [("ω̃", tab.w_tilde()), ("ω", tab.w())];
    let abscissae = [("c̃", tab.c_tilde()), ("c", tab.c())];
    let matrices = [("ã", tab.a_tilde()), ("a", tab.a_impl())];

    for (bn, b) in weights {
        push(format!("Σ{bn} = 1"), 1, ConditionKind::Forward, b.iter().sum(), 1.0);
    }
    for (bn, b) in weights {
        for (cn, c) in abscissae {
            push(format!("Σ{bn}{cn} = 1/2"), 2, ConditionKind::Forward, dot(b, c), 0.5);
        }
    }
    for (bn, b) in weights {
        for (p, q) in [(0, 0), (0, 1), (1, 1)] {
            let (pn, pc) = abscissae[p];
            let (qn, qc) = abscissae[q];
            push(format!("Σ{bn}{pn}{qn} = 1/3"), 3, ConditionKind::Forward, dot3(b, pc, qc), 1.0 / 3.0);
        }
        for (mn, m) in matrices {
            for (cn, c) in abscissae {
                push(format!("Σ{bn}{mn}{cn} = 1/6"), 3, ConditionKind::Forward, bmc(b, m, c), 1.0 / 6.0);
            }
        }
    }

    let w = tab.w();
    if let Some(k) = coeffs {
        let (g, gt) = (&k.gamma, &k.gamma_tilde);
        push("Σωγγ = 1/3".to_string(), 3, ConditionKind::GammaBranch, dot3(w, g, g), 1.0 / 3.0);
        push("Σωγ̃γ̃ = 1/3".to_string(), 3, ConditionKind::GammaBranch, dot3(w, gt, gt), 1.0 / 3.0);
        push("Σωγγ̃ = 1/3".to_string(), 3, ConditionKind::GammaBranch, dot3(w, g, gt), 1.0 / 3.0);
        push("Σωaγ = 1/6".to_string(), 3, ConditionKind::CouplingBranch, bmc(w, tab.a_impl(), g), 1.0 / 6.0);
        push("Σωãγ̃ = 1/6".to_string(), 3, ConditionKind::CouplingBranch, bmc(w, tab.a_tilde(), gt), 1.0 / 6.0);
        push("Σωaγ̃ = 1/6".to_string(), 3, ConditionKind::CouplingBranch, bmc(w, tab.a_impl(), gt), 1.0 / 6.0);
        push("Σωãγ = 1/6".to_string(), 3, ConditionKind::CouplingBranch, bmc(w, tab.a_tilde(), g), 1.0 / 6.0);
        let (d, dt) = (&k.delta, &k.delta_tilde);
        push("Σωδδ = 1/3".to_string(), 3, ConditionKind::Informational, dot3(w, d, d), 1.0 / 3.0);
        push("Σωδ̃δ̃ = 1/3".to_string(), 3, ConditionKind::Informational, dot3(w, dt, dt), 1.0 / 3.0);
        push("Σωδδ̃ = 1/3".to_string(), 3, ConditionKind::Informational, dot3(w, d, dt), 1.0 / 3.0);
    }

    let holds = |r: &ConditionResidual| r.residual <= tol;
    let mut forward_order = 0;
    for k in 1..=3u8 {
        let ok = residuals
            .iter()
            .filter(|r| r.kind == ConditionKind::Forward && r.order == k)
            .all(holds);
        if !ok {
            break;
        }
        forward_order = k;
    }

    let (adjoint_system_order, branch_used) = if forward_order < 3 {
        (forward_order, ThirdOrderBranch::NotRequired)
    } else if coeffs.is_none() {
        (2, ThirdOrderBranch::Unavailable)
    } else {
        let of = |kind| residuals.iter().filter(move |r: &&ConditionResidual| r.kind == kind);
        let gamma_ok = of(ConditionKind::GammaBranch).all(holds);
        let c: Vec<bool> = of(ConditionKind::CouplingBranch).map(holds).collect();
        let coupling_ok = c[0] && c[1] && (c[2] || c[3]);
        if gamma_ok {
            (3, ThirdOrderBranch::Gamma)
        } else if coupling_ok {
            (3, ThirdOrderBranch::Coupling)
        } else {
            (2, ThirdOrderBranch::Failed)
        }
    };

    OrderReport {
        tableau: tab.name().to_string(),
        forward_order,
        adjoint_system_order,
        residuals,
        branch_used,
        tol,
    }
}

/// Convenience wrapper: derives the adjoint coefficients when they exist.
pub fn order_report(tab: &ImexTableau, tol: f64) -> OrderReport {
    let coeffs = adjoint_coeffs(tab).ok();
    check_order(tab, coeffs.as_ref(), tol)
}

/// Names accepted by [`builtin_tableau`] with the order each one claims.
pub const BUILTIN_TABLEAUS: &[(&str, u8)] = &[
    ("imex-euler", 1),
    ("ars-222", 2),
    ("ssp2-222", 2),
    ("ars-443", 3),
    ("kutta3-imex", 3),
    ("ssp3-imex", 3),
];

pub fn builtin_names() -> String {
    BUILTIN_TABLEAUS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

pub fn builtin_tableau(name: &str) -> Result<ImexTableau> {
    let Some(&(_, claimed)) = BUILTIN_TABLEAUS.iter().find(|(n, _)| *n == name) else {
        return Err(Error::UnknownTableau { name: name.to_string(), known: builtin_names() });
    };
    let tab = match name {
        "imex-euler" => imex_euler(),
        "ars-222" => ars_222(),
        "ssp2-222" => ssp2_222(),
        "ars-443" => ars_443(),
        "kutta3-imex" => kutta3_imex(),
        "ssp3-imex" => ssp3_imex(),
        _ => unreachable!("registry and constructors out of sync"),
    }?;
    let report = order_report(&tab, ORDER_TOL);
    if report.forward_order != claimed {
        return Err(Error::InvalidTableau(format!(
            "{name} claims order {claimed} but satisfies order {}",
            report.forward_order
        )));
    }
    Ok(tab)
}

/// Forward–backward Euler: `ã = 0`, `a = 1`.
fn imex_euler() -> Result<ImexTableau> {
    ImexTableau::new("imex-euler", &[vec![0.0]], &[vec![1.0]], vec![1.0], vec![1.0])
}

/// Ascher–Ruuth–Spiteri (2,2,2), stiffly accurate, explicit first stage.
fn ars_222() -> Result<ImexTableau> {
    let g = 1.0 - 1.0 / libm::sqrt(2.0);
    let d = 1.0 - 1.0 / (2.0 * g);
    ImexTableau::new(
        "ars-222",
        &[vec![0.0, 0.0, 0.0], vec![g, 0.0, 0.0], vec![d, 1.0 - d, 0.0]],
        &[vec![0.0, 0.0, 0.0], vec![0.0, g, 0.0], vec![0.0, 1.0 - g, g]],
        vec![d, 1.0 - d, 0.0],
        vec![0.0, 1.0 - g, g],
    )
}

/// Pareschi–Russo IMEX-SSP2(2,2,2); every weight nonzero.
fn ssp2_222() -> Result<ImexTableau> {
    let g = 1.0 - 1.0 / libm::sqrt(2.0);
    ImexTableau::new(
        "ssp2-222",
        &[vec![0.0, 0.0], vec![1.0, 0.0]],
        &[vec![g, 0.0], vec![1.0 - 2.0 * g, g]],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
    )
}

/// Ascher–Ruuth–Spiteri (4,4,3), stiffly accurate, explicit first stage.
fn ars_443() -> Result<ImexTableau> {
    let h = 0.5;
    ImexTableau::new(
        "ars-443",
        &[
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![h, 0.0, 0.0, 0.0, 0.0],
            vec![11.0 / 18.0, 1.0 / 18.0, 0.0, 0.0, 0.0],
            vec![5.0 / 6.0, -5.0 / 6.0, h, 0.0, 0.0],
            vec![0.25, 1.75, 0.75, -1.75, 0.0],
        ],
        &[
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, h, 0.0, 0.0, 0.0],
            vec![0.0, 1.0 / 6.0, h, 0.0, 0.0],
            vec![0.0, -h, h, h, 0.0],
            vec![0.0, 1.5, -1.5, h, h],
        ],
        vec![0.25, 1.75, 0.75, -1.75, 0.0],
        vec![0.0, 1.5, -1.5, h, h],
    )
}

/// Kutta's third-order method paired with a lower triangular implicit part
/// sharing its weights and abscissae. All weights are nonzero and both
/// third-order adjoint branches hold. The implicit part has an explicit
/// first stage with nonzero weight, so it is meant for non-stiff `eps`.
fn kutta3_imex() -> Result<ImexTableau> {
    ImexTableau::new(
        "kutta3-imex",
        &[vec![0.0, 0.0, 0.0], vec![0.5, 0.0, 0.0], vec![-1.0, 2.0, 0.0]],
        &[vec![0.0, 0.0, 0.0], vec![0.25, 0.25, 0.0], vec![0.25, 0.5, 0.25]],
        vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    )
}

/// Three-stage SSP explicit method with a matching implicit part. Third
/// order as a pair, but every third-order adjoint branch fails. Same
/// non-stiff caveat as [`kutta3_imex`].
fn ssp3_imex() -> Result<ImexTableau> {
    ImexTableau::new(
        "ssp3-imex",
        &[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.25, 0.25, 0.0]],
        &[vec![0.0, 0.0, 0.0], vec![0.5, 0.5, 0.0], vec![0.25, 0.0, 0.25]],
        vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_adjoint_coefficients() {
        let k = adjoint_coeffs(&builtin_tableau("imex-euler").unwrap()).unwrap();
        assert_eq!(k.alpha_tilde[(0, 0)], 1.0);
        assert_eq!(k.alpha[(0, 0)], 1.0);
        assert_eq!(k.beta_tilde[(0, 0)], 0.0);
        assert_eq!(k.beta[(0, 0)], 0.0);
    }

    #[test]
    fn row_sums_are_stored_exactly() {
        for (name, _) in BUILTIN_TABLEAUS {
            let tab = builtin_tableau(name).unwrap();
            let Ok(k) = adjoint_coeffs(&tab) else { continue };
            for i in 0..tab.stages() {
                assert_eq!(k.alpha.row(i).iter().sum::<f64>(), k.gamma[i]);
                assert_eq!(k.alpha_tilde.row(i).iter().sum::<f64>(), k.gamma_tilde[i]);
                assert_eq!(k.beta.row(i).iter().sum::<f64>(), k.delta[i]);
                assert_eq!(k.beta_tilde.row(i).iter().sum::<f64>(), k.delta_tilde[i]);
            }
        }
    }

    #[test]
    fn abscissae_equal_row_sums() {
        for (name, _) in BUILTIN_TABLEAUS {
            let tab = builtin_tableau(name).unwrap();
            assert_eq!(tab.c(), tab.a_impl().row_sums().as_slice());
            assert_eq!(tab.c_tilde(), tab.a_tilde().row_sums().as_slice());
        }
    }

    #[test]
    fn zero_weights_are_reported() {
        let ars = builtin_tableau("ars-222").unwrap();
        assert_eq!(
            adjoint_coeffs(&ars),
            Err(Error::ZeroWeight { family: WeightFamily::Explicit, index: 2 })
        );
        let ars = builtin_tableau("ars-443").unwrap();
        assert!(matches!(adjoint_coeffs(&ars), Err(Error::ZeroWeight { .. })));
    }

    #[test]
    fn claimed_orders() {
        let expect = [
            ("imex-euler", 1, 1, ThirdOrderBranch::NotRequired),
            ("ars-222", 2, 2, ThirdOrderBranch::NotRequired),
            ("ssp2-222", 2, 2, ThirdOrderBranch::NotRequired),
            ("ars-443", 3, 2, ThirdOrderBranch::Unavailable),
            ("kutta3-imex", 3, 3, ThirdOrderBranch::Gamma),
            ("ssp3-imex", 3, 2, ThirdOrderBranch::Failed),
        ];
        for (name, fwd, adj, branch) in expect {
            let r = order_report(&builtin_tableau(name).unwrap(), ORDER_TOL);
            assert_eq!(r.forward_order, fwd, "{name}");
            assert_eq!(r.adjoint_system_order, adj, "{name}");
            assert_eq!(r.branch_used, branch, "{name}");
            assert!(r.max_forward_residual(fwd) <= 1e-14, "{name}: {}", r.max_forward_residual(fwd));
        }
    }

    #[test]
    fn failing_branch_residuals_are_reported() {
        let r = order_report(&builtin_tableau("ssp3-imex").unwrap(), ORDER_TOL);
        let branch: Vec<f64> = r
            .residuals
            .iter()
            .filter(|c| matches!(c.kind, ConditionKind::GammaBranch | ConditionKind::CouplingBranch))
            .map(|c| c.residual)
            .collect();
        // exact values: 1/2 for each γ condition, 1/4, 1/2, 1/4, 1/2 for coupling
        let expected = [0.5, 0.5, 0.5, 0.25, 0.5, 0.25, 0.5];
        assert_eq!(branch.len(), expected.len());
        for (r, e) in branch.iter().zip(expected) {
            assert!((r - e).abs() < 1e-14, "{r} vs {e}");
        }
    }

    #[test]
    fn gammas_of_kutta_pair() {
        let k = adjoint_coeffs(&builtin_tableau("kutta3-imex").unwrap()).unwrap();
        for (g, e) in k.gamma.iter().zip([0.0, 0.5, 1.0]) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn perturbation_lowers_order() {
        let cases = [
            ("imex-euler", Coefficient::W(0), 1),
            ("ars-222", Coefficient::AImpl(1, 1), 2),
            ("ssp2-222", Coefficient::ATilde(1, 0), 2),
            ("ars-443", Coefficient::AImpl(2, 1), 3),
            ("kutta3-imex", Coefficient::ATilde(2, 1), 3),
        ];
        for (name, which, nominal) in cases {
            let tab = builtin_tableau(name).unwrap().perturbed(which, 1e-3).unwrap();
            let r = order_report(&tab, ORDER_TOL);
            assert!(r.forward_order < nominal, "{name} still order {}", r.forward_order);
        }
        let euler = builtin_tableau("imex-euler").unwrap();
        assert!(matches!(euler.perturbed(Coefficient::W(1), 1e-3), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn structure_is_validated() {
        let upper = ImexTableau::new("x", &[vec![0.0, 1.0], vec![0.0, 0.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], vec![0.5, 0.5]);
        assert!(matches!(upper, Err(Error::InvalidTableau(_))));
        let diag = ImexTableau::new("x", &[vec![1.0]], &[vec![1.0]], vec![1.0], vec![1.0]);
        assert!(matches!(diag, Err(Error::InvalidTableau(_))));
        let ragged = ImexTableau::new("x", &[vec![0.0, 0.0], vec![1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], vec![0.5, 0.5]);
        assert!(matches!(ragged, Err(Error::InvalidTableau(_))));
        assert!(matches!(builtin_tableau("bogus"), Err(Error::UnknownTableau { .. })));
    }

    #[test]
    fn monotone_report() {
        for (name, _) in BUILTIN_TABLEAUS {
            let r = order_report(&builtin_tableau(name).unwrap(), ORDER_TOL);
            for k in 1..=r.forward_order {
                assert!(r.max_forward_residual(k) <= ORDER_TOL);
            }
        }
    }
}
