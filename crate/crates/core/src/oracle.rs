//! Exact extremes of a linear risk over the set of joint laws compatible with
//! fixed observable marginals, by enumerating basic feasible solutions.

use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::additivity::{classify, Regime};
use crate::distributions::{
    build_marginal_matrix, kernel_basis, JointModel, MarginalMatrix, ObservableVariant,
};
use crate::error::{Error, Result};
use crate::linalg::{solve_square, Matrix, Rref};
use crate::random::interior_law;
use crate::rational::{self, Rational};
use crate::risk::Policy;
use crate::space::{LossTensor, Spaces};

/// Largest joint-law length the oracle accepts.
pub const MAX_JOINT_CELLS: usize = 40;
/// Largest number of candidate bases enumerated.
pub const MAX_BASES: u128 = 200_000;

/// Minimum and maximum of a linear objective over a polytope, with a vertex
/// attaining each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RiskInterval {
    #[serde(with = "rational::serde_str")]
    pub min: Rational,
    #[serde(with = "rational::serde_str")]
    pub max: Rational,
    #[serde(with = "rational::serde_vec")]
    pub argmin: Vec<Rational>,
    #[serde(with = "rational::serde_vec")]
    pub argmax: Vec<Rational>,
}

impl RiskInterval {
    pub fn width(&self) -> Rational {
        &self.max - &self.min
    }

    pub fn identifiable(&self) -> bool {
        self.max == self.min
    }
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// All `r`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..r).rev().find(|&i| idx[i] != i + n - r) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Component {
    columns: Vec<usize>,
    rows: Vec<usize>,
}

/// Optimises `cᵀx` over the bounded polytope `{x ≥ 0, A x = b}`.
///
/// Coordinates forced to zero by an all-nonnegative row with zero right-hand
/// side are removed first; the reduced system is then split into blocks that
/// share no variable, and each block's bases are enumerated independently.
pub fn linear_extrema(a: &Matrix, b: &[Rational], c: &[Rational]) -> Result<RiskInterval> {
    let n = a.cols();
    let mut forced = vec![false; n];
    for i in 0..a.rows() {
        let row = a.row(i);
        if b[i].is_zero()
            && (row.iter().all(|v| !v.is_negative()) || row.iter().all(|v| !v.is_positive()))
        {
            for (j, v) in row.iter().enumerate() {
                if !v.is_zero() {
                    forced[j] = true;
                }
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| !forced[j]).collect();
    let sub = a.select_columns(&free);
    let rref = Rref::new(&sub);
    if rref.solve(b).is_none() {
        return Err(Error::InfeasibleMarginals);
    }
    let r = rref.rank();
    let reduced = rref.reduced();
    let rhs = rref.transform().mul_vec(b);

    // Union-find over columns linked by a reduced row.
    let mut parent: Vec<usize> = (0..free.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..r {
        let nz: Vec<usize> = (0..free.len())
            .filter(|&j| !reduced.get(i, j).is_zero())
            .collect();
        for w in nz.windows(2) {
            let (x, y) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[x] = y;
        }
    }
    let mut comps: Vec<Component> = Vec::new();
    let mut slot = vec![usize::MAX; free.len()];
    for j in 0..free.len() {
        let root = find(&mut parent, j);
        if slot[root] == usize::MAX {
            slot[root] = comps.len();
            comps.push(Component {
                columns: Vec::new(),
                rows: Vec::new(),
            });
        }
        comps[slot[root]].columns.push(j);
    }
    for i in 0..r {
        let j = (0..free.len())
            .find(|&j| !reduced.get(i, j).is_zero())
            .expect("reduced rows are nonzero");
        comps[slot[find(&mut parent, j)]].rows.push(i);
    }
    let total: u128 = comps
        .iter()
        .map(|cp| binomial(cp.columns.len(), cp.rows.len()))
        .fold(0, u128::saturating_add);
    if total > MAX_BASES {
        return Err(Error::TooLarge(format!(
            "{total} candidate bases exceed the limit of {MAX_BASES}"
        )));
    }

    let mut min = Rational::zero();
    let mut max = Rational::zero();
    let mut argmin = vec![Rational::zero(); n];
    let mut argmax = vec![Rational::zero(); n];
    for cp in &comps {
        if cp.rows.is_empty() {
            return Err(Error::InvalidArgument(
                "polytope is unbounded: a variable appears in no constraint".into(),
            ));
        }
        let rc = cp.rows.len();
        let candidates = subsets(cp.columns.len(), rc);
        let vertices: Vec<(usize, Rational, Vec<Rational>)> = candidates
            .par_iter()
            .enumerate()
            .filter_map(|(idx, basis)| {
                let cols: Vec<usize> = basis.iter().map(|&t| cp.columns[t]).collect();
                let m = Matrix::from_fn(rc, rc, |i, j| reduced.get(cp.rows[i], cols[j]).clone());
                let rhs_c: Vec<Rational> = cp.rows.iter().map(|&i| rhs[i].clone()).collect();
                let x = solve_square(&m, &rhs_c)?;
                if x.iter().any(Signed::is_negative) {
                    return None;
                }
                let value = cols
                    .iter()
                    .zip(&x)
                    .map(|(&j, v)| &c[free[j]] * v)
                    .sum::<Rational>();
                let mut point = vec![Rational::zero(); cp.columns.len()];
                for (&t, v) in basis.iter().zip(x) {
                    point[t] = v;
                }
                Some((idx, value, point))
            })
            .collect();
        let lo = vertices
            .iter()
            .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
            .ok_or(Error::InfeasibleMarginals)?;
        let hi = vertices
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        min += &lo.1;
        max += &hi.1;
        for (pos, &j) in cp.columns.iter().enumerate() {
            argmin[free[j]] = lo.2[pos].clone();
            argmax[free[j]] = hi.2[pos].clone();
        }
    }
    Ok(RiskInterval {
        min,
        max,
        argmin,
        argmax,
    })
}

fn ones_row(n: usize) -> Matrix {
    Matrix::from_fn(1, n, |_, _| rational::one())
}

/// `ℓᵀp` over `{p ≥ 0, C p = q, 1ᵀp = 1}` for one stratum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiberProblem {
    loss: Vec<Rational>,
    matrix: MarginalMatrix,
    q: Vec<Rational>,
}

impl FiberProblem {
    pub fn new(
        spaces: &Spaces,
        loss: Vec<Rational>,
        variant: ObservableVariant,
        q: Vec<Rational>,
    ) -> Result<Self> {
        let matrix = build_marginal_matrix(spaces, variant);
        if loss.len() != matrix.matrix().cols() || q.len() != matrix.matrix().rows() {
            return Err(Error::DimensionMismatch(format!(
                "fiber needs a loss of length {} and marginals of length {}",
                matrix.matrix().cols(),
                matrix.matrix().rows()
            )));
        }
        Ok(Self { loss, matrix, q })
    }

    /// Stratum `s` of `loss` with the marginals of `model`.
    pub fn from_model(
        loss: &LossTensor,
        model: &JointModel,
        variant: ObservableVariant,
        s: usize,
    ) -> Result<Self> {
        if !loss.spaces().same_shape(model.spaces()) {
            return Err(Error::DimensionMismatch(
                "loss and model shapes differ".into(),
            ));
        }
        let matrix = build_marginal_matrix(model.spaces(), variant);
        let q = matrix.apply(model.joint(s));
        Ok(Self {
            loss: loss.stratum(s).to_vec(),
            matrix,
            q,
        })
    }

    pub fn q(&self) -> &[Rational] {
        &self.q
    }

    pub fn loss(&self) -> &[Rational] {
        &self.loss
    }

    pub fn matrix(&self) -> &MarginalMatrix {
        &self.matrix
    }
}

pub fn risk_bounds(problem: &FiberProblem) -> Result<RiskInterval> {
    let n = problem.loss.len();
    if n > MAX_JOINT_CELLS {
        return Err(Error::TooLarge(format!(
            "N = {n} joint cells exceed the limit of {MAX_JOINT_CELLS}"
        )));
    }
    let a = problem.matrix.matrix().stack(&ones_row(n));
    let mut b = problem.q.clone();
    b.push(rational::one());
    linear_extrema(&a, &b, &problem.loss)
}

/// `ℓᵀp₁ − ℓᵀp₂` over pairs of joint laws for two decision-making systems on
/// one population: `C p₁ = q₁`, `C p₂ = q₂`, and both share the law of `Y(·)`.
///
/// Vertices are reported as `[p₁; p₂]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DifferenceProblem {
    spaces: Spaces,
    loss: Vec<Rational>,
    matrix: MarginalMatrix,
    q: [Vec<Rational>; 2],
}

impl DifferenceProblem {
    pub fn new(
        spaces: &Spaces,
        loss: Vec<Rational>,
        variant: ObservableVariant,
        first: Vec<Rational>,
        second: Vec<Rational>,
    ) -> Result<Self> {
        let single = FiberProblem::new(spaces, loss, variant, first)?;
        if second.len() != single.q.len() {
            return Err(Error::DimensionMismatch("marginal lengths differ".into()));
        }
        Ok(Self {
            spaces: spaces.clone(),
            loss: single.loss,
            matrix: single.matrix,
            q: [single.q, second],
        })
    }

    pub fn from_models(
        loss: &LossTensor,
        first: &JointModel,
        second: &JointModel,
        variant: ObservableVariant,
        s: usize,
    ) -> Result<Self> {
        let a = FiberProblem::from_model(loss, first, variant, s)?;
        let b = FiberProblem::from_model(loss, second, variant, s)?;
        Ok(Self {
            spaces: first.spaces().clone(),
            loss: a.loss,
            matrix: a.matrix,
            q: [a.q, b.q],
        })
    }

    pub fn q(&self, i: usize) -> &[Rational] {
        &self.q[i]
    }
}

pub fn difference_bounds(problem: &DifferenceProblem) -> Result<RiskInterval> {
    let sp = &problem.spaces;
    let n = sp.n_joint();
    if n > MAX_JOINT_CELLS {
        return Err(Error::TooLarge(format!(
            "N = {n} joint cells exceed the limit of {MAX_JOINT_CELLS}"
        )));
    }
    let c = problem.matrix.matrix();
    let rows = c.rows();
    let per = sp.n_outcome_vectors();
    let total_rows = 2 * (rows + 1) + per;
    let mut a = Matrix::zeros(total_rows, 2 * n);
    for i in 0..rows {
        for j in 0..n {
            a.set(i, j, c.get(i, j).clone());
            a.set(rows + 1 + i, n + j, c.get(i, j).clone());
        }
    }
    for j in 0..n {
        a.set(rows, j, rational::one());
        a.set(2 * rows + 1, n + j, rational::one());
        let y = j % per;
        a.set(2 * (rows + 1) + y, j, rational::one());
        a.set(2 * (rows + 1) + y, n + j, -rational::one());
    }
    let mut b = problem.q[0].clone();
    b.push(rational::one());
    b.extend(problem.q[1].iter().cloned());
    b.push(rational::one());
    b.extend(std::iter::repeat_n(Rational::zero(), per));
    let objective: Vec<Rational> = problem
        .loss
        .iter()
        .cloned()
        .chain(problem.loss.iter().map(|v| -v))
        .collect();
    linear_extrema(&a, &b, &objective)
}

/// Difference bounds for two policies drawn independently of `Y(·)`, whose
/// law in stratum `s` is `outcome_law`.
///
/// Equal policies are one decision-making system, so `D*₁ = D*₂` unit by unit
/// and the difference is zero at every point `[p; p]` of the single fiber.
pub fn policy_difference_bounds(
    loss: &LossTensor,
    policies: (&Policy, &Policy),
    outcome_law: &[Rational],
    variant: ObservableVariant,
    s: usize,
) -> Result<RiskInterval> {
    let sp = loss.spaces();
    policies.0.validate(sp)?;
    policies.1.validate(sp)?;
    if outcome_law.len() != sp.n_outcome_vectors() {
        return Err(Error::DimensionMismatch(
            "outcome law needs M^K entries".into(),
        ));
    }
    let c = build_marginal_matrix(sp, variant);
    let joint = |pol: &Policy| -> Vec<Rational> {
        pol.probabilities(s, sp.decisions())
            .iter()
            .flat_map(|pd| outcome_law.iter().map(move |py| pd * py))
            .collect()
    };
    if policies.0 == policies.1 {
        let p = joint(policies.0);
        let single = risk_bounds(&FiberProblem {
            loss: loss.stratum(s).to_vec(),
            q: c.apply(&p),
            matrix: c,
        })?;
        let doubled = |v: &[Rational]| [v, v].concat();
        return Ok(RiskInterval {
            min: Rational::zero(),
            max: Rational::zero(),
            argmin: doubled(&single.argmin),
            argmax: doubled(&single.argmax),
        });
    }
    let problem = DifferenceProblem {
        spaces: sp.clone(),
        loss: loss.stratum(s).to_vec(),
        q: [c.apply(&joint(policies.0)), c.apply(&joint(policies.1))],
        matrix: c,
    };
    difference_bounds(&problem)
}

/// Two joint laws with the same marginals but different risk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub stratum: String,
    pub trial: usize,
    #[serde(with = "rational::serde_vec")]
    pub q: Vec<Rational>,
    #[serde(with = "rational::serde_vec")]
    pub p1: Vec<Rational>,
    #[serde(with = "rational::serde_vec")]
    pub p2: Vec<Rational>,
    #[serde(with = "rational::serde_str")]
    pub gap: Rational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    EmpiricallyIdentifiable,
    NonIdentifiable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrialWidths {
    pub stratum: usize,
    #[serde(with = "rational::serde_str")]
    pub level: Rational,
    #[serde(with = "rational::serde_str")]
    pub difference: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentifiabilityReport {
    pub variant: ObservableVariant,
    pub trials: usize,
    pub seed: u64,
    /// Verdict on risk levels.
    pub level: Verdict,
    /// Verdict on risk differences between two systems on one population.
    pub difference: Verdict,
    pub widths: Vec<TrialWidths>,
    pub counterexample: Option<Counterexample>,
    pub regime: Regime,
    /// Whether both verdicts are what `regime` predicts for this view.
    pub agrees: bool,
}

impl IdentifiabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Interior law of `(D*, Y(·))` with the given law of `Y(·)`.
fn joint_with_outcome_law(rng: &mut ChaCha8Rng, spaces: &Spaces, py: &[Rational]) -> Vec<Rational> {
    let per = spaces.n_outcome_vectors();
    let kk = spaces.decisions();
    let mut p = vec![Rational::zero(); spaces.n_joint()];
    for (i, pyi) in py.iter().enumerate() {
        let cond = interior_law(rng, kk);
        for d in 0..kk {
            p[d * per + i] = pyi * &cond[d];
        }
    }
    p
}

/// Samples interior joint laws and checks every fiber width.
///
/// Each trial uses its own stream of a ChaCha8 generator seeded with `seed`,
/// so trials run in parallel and the report depends only on the arguments.
pub fn certify_identifiability(
    loss: &LossTensor,
    variant: ObservableVariant,
    trials: usize,
    seed: u64,
) -> Result<IdentifiabilityReport> {
    let sp = loss.spaces();
    if sp.n_joint() > MAX_JOINT_CELLS {
        return Err(Error::TooLarge(format!(
            "N = {} joint cells exceed the limit of {MAX_JOINT_CELLS}",
            sp.n_joint()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let c = build_marginal_matrix(sp, variant);
    let kernel = kernel_basis(&c);
    let outcomes: Vec<Result<(Vec<TrialWidths>, Option<Counterexample>)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut widths = Vec::new();
            let mut example = None;
            for s in 0..sp.n_strata() {
                let lv = loss.stratum(s);
                let p = interior_law(&mut rng, sp.n_joint());
                let q = c.apply(&p);
                let level = risk_bounds(&FiberProblem {
                    loss: lv.to_vec(),
                    matrix: c.clone(),
                    q: q.clone(),
                })?;
                let py = interior_law(&mut rng, sp.n_outcome_vectors());
                let p1 = joint_with_outcome_law(&mut rng, sp, &py);
                let p2 = joint_with_outcome_law(&mut rng, sp, &py);
                let diff = difference_bounds(&DifferenceProblem {
                    spaces: sp.clone(),
                    loss: lv.to_vec(),
                    matrix: c.clone(),
                    q: [c.apply(&p1), c.apply(&p2)],
                })?;
                if example.is_none() && !level.identifiable() {
                    if let Some(v) = kernel.iter().find(|v| !rational::dot(lv, v).is_zero()) {
                        let min_p = p.iter().min().expect("nonempty").clone();
                        let alpha = min_p / (rational::int(2) * rational::max_abs(v));
                        let moved: Vec<Rational> =
                            p.iter().zip(v).map(|(a, b)| a + &alpha * b).collect();
                        example = Some(Counterexample {
                            stratum: sp.strata()[s].clone(),
                            trial: t,
                            gap: rational::dot(lv, &moved) - rational::dot(lv, &p),
                            q: q.clone(),
                            p1: p.clone(),
                            p2: moved,
                        });
                    }
                }
                widths.push(TrialWidths {
                    stratum: s,
                    level: level.width(),
                    difference: diff.width(),
                });
            }
            Ok((widths, example))
        })
        .collect();
    let mut widths = Vec::new();
    let mut counterexample = None;
    for o in outcomes {
        let (w, e) = o?;
        widths.extend(w);
        if counterexample.is_none() {
            counterexample = e;
        }
    }
    let verdict = |zero: bool| {
        if zero {
            Verdict::EmpiricallyIdentifiable
        } else {
            Verdict::NonIdentifiable
        }
    };
    let level = verdict(widths.iter().all(|w| w.level.is_zero()));
    let difference = verdict(widths.iter().all(|w| w.difference.is_zero()));
    let regime = classify(loss).regime;
    let expected_level = match variant {
        ObservableVariant::MarginalsOnly => regime == Regime::Exact,
        ObservableVariant::Extended => regime != Regime::Unidentifiable,
    };
    let expected_difference = regime != Regime::Unidentifiable;
    let agrees = (level == Verdict::EmpiricallyIdentifiable) == expected_level
        && (difference == Verdict::EmpiricallyIdentifiable) == expected_difference;
    Ok(IdentifiabilityReport {
        variant,
        trials,
        seed,
        level,
        difference,
        widths,
        counterexample,
        regime,
        agrees,
    })
}
