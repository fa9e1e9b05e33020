//! Batch property suites over seeded random instances. Failures are results:
//! each carries the instance seed and a printable dump for replay.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::PlayerMap;
use crate::error::{Error, Result};
use crate::fairness::{demographic_parity, dr_dataset, joint_histogram, ColumnBinning, DrScale};
use crate::fairshap::{fairshap_modify, theorem_c2_diagnostic, FairshapConfig, ThresholdMode};
use crate::matching::{nearest_neighbor_match, sinkhorn_ot_match, MatchingPlan, SinkhornParams};
use crate::matrix::Matrix;
use crate::model::{predict_label, sigmoid, DEFAULT_THRESHOLD};
use crate::rng::{self, derive_seed, Rng};
use crate::shapley::{exact_shapley, DrGameContext, EstimatorConfig};

pub const SHAPLEY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Suite {
    ShapleyAxioms,
    TheoremD1,
    TheoremD2,
    TheoremC2Diagnostic,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::ShapleyAxioms,
        Suite::TheoremD1,
        Suite::TheoremD2,
        Suite::TheoremC2Diagnostic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ShapleyAxioms => "shapley_axioms",
            Suite::TheoremD1 => "theorem_d1",
            Suite::TheoremD2 => "theorem_d2",
            Suite::TheoremC2Diagnostic => "theorem_c2_diagnostic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite `{name}`")))
    }

    pub fn default_instances(self) -> usize {
        match self {
            Suite::ShapleyAxioms => 100,
            Suite::TheoremD1 | Suite::TheoremD2 => 50,
            Suite::TheoremC2Diagnostic => 50,
        }
    }
}

/// Deliberate corruption used to check that failures are reported.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Adds this offset to the baseline term before the efficiency check.
    Efficiency(f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counterexample {
    pub instance: usize,
    pub seed: u64,
    pub detail: String,
}

/// Summary statistics of the partial-replacement gap.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapStats {
    pub rows: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub grand_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub instances: usize,
    pub passed: usize,
    pub counterexamples: Vec<Counterexample>,
    /// Largest violation seen (0 when every check has slack).
    pub worst: f64,
    pub gap_stats: Option<GapStats>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.counterexamples.is_empty() && self.passed == self.instances
    }
}

pub fn run_suite(suite: Suite, instances: usize, seed: u64, fault: Fault) -> SuiteReport {
    let mut report = SuiteReport {
        suite,
        seed,
        instances,
        passed: 0,
        counterexamples: Vec::new(),
        worst: 0.0,
        gap_stats: None,
    };
    let mut gaps = Vec::new();
    let mut grand_max: f64 = 0.0;
    for k in 0..instances {
        let s = derive_seed(seed, k as u64);
        let outcome = match suite {
            Suite::ShapleyAxioms => shapley_axioms_instance(s, fault),
            Suite::TheoremD1 => theorem_d1_instance(s),
            Suite::TheoremD2 => theorem_d2_instance(s),
            Suite::TheoremC2Diagnostic => theorem_c2_instance(s, fault).map(|(g, grand, failure)| {
                gaps.extend(g);
                grand_max = grand_max.max(grand);
                match failure {
                    None => Check::Pass(grand),
                    Some(d) => Check::Fail(grand, d),
                }
            }),
        };
        let violation = match outcome {
            Ok(v) => v,
            Err(e) => {
                report.counterexamples.push(Counterexample {
                    instance: k,
                    seed: s,
                    detail: format!("error: {e}"),
                });
                continue;
            }
        };
        report.worst = report.worst.max(violation.amount());
        match violation {
            Check::Pass(_) => report.passed += 1,
            Check::Fail(_, detail) => report.counterexamples.push(Counterexample {
                instance: k,
                seed: s,
                detail,
            }),
        }
    }
    if suite == Suite::TheoremC2Diagnostic {
        gaps.sort_by(f64::total_cmp);
        let rows = gaps.len();
        report.gap_stats = Some(GapStats {
            rows,
            mean: if rows == 0 { 0.0 } else { gaps.iter().sum::<f64>() / rows as f64 },
            median: if rows == 0 { 0.0 } else { gaps[rows / 2] },
            max: gaps.last().copied().unwrap_or(0.0),
            grand_max,
        });
    }
    report
}

enum Check {
    Pass(f64),
    Fail(f64, String),
}

impl Check {
    fn amount(&self) -> f64 {
        match self {
            Check::Pass(v) | Check::Fail(v, _) => *v,
        }
    }
}

/// Random nonlinear scorer with a dummy feature and a symmetric pair.
#[derive(Debug, Clone)]
struct RandomScorer {
    w: Vec<f64>,
    u: Vec<f64>,
    bias: f64,
    interaction: Option<(usize, usize, f64)>,
}

impl RandomScorer {
    fn logit(&self, x: &[f64], a: u8) -> f64 {
        let mut z = self.bias;
        for k in 0..x.len() {
            z += (self.w[k] + a as f64 * self.u[k]) * x[k];
        }
        if let Some((p, q, c)) = self.interaction {
            z += c * x[p] * x[q];
        }
        z
    }

    fn proba(&self, x: &[f64], a: u8) -> f64 {
        sigmoid(self.logit(x, a))
    }
}

struct AxiomInstance {
    scorer: RandomScorer,
    target: Matrix,
    other: Matrix,
    plan: MatchingPlan,
    dummy: usize,
    pair: (usize, usize),
}

fn normal(r: &mut Rng) -> f64 {
    // Box-Muller
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

fn random_group(r: &mut Rng, rows: usize, d: usize, pair: (usize, usize)) -> Matrix {
    let mut m = Matrix::zeros(rows, d);
    for i in 0..rows {
        for k in 0..d {
            m.set(i, k, normal(r));
        }
        let v = m.get(i, pair.0);
        m.set(i, pair.1, v);
    }
    m
}

fn axiom_instance(seed: u64) -> Result<AxiomInstance> {
    let mut r = rng::seeded(seed);
    let d = r.random_range(3..=8);
    let dummy = d - 1;
    let pair = (0, 1);
    let mut w: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
    let mut u: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
    w[dummy] = 0.0;
    u[dummy] = 0.0;
    w[pair.1] = w[pair.0];
    u[pair.1] = u[pair.0];
    let interaction = (d >= 5).then(|| (2, 3, normal(&mut r)));
    let scorer = RandomScorer {
        w,
        u,
        bias: normal(&mut r),
        interaction,
    };
    let (n_target, n_other) = (r.random_range(1..=4), r.random_range(1..=5));
    let target = random_group(&mut r, n_target, d, pair);
    let other = random_group(&mut r, n_other, d, pair);
    let plan = if r.random_bool(0.5) {
        nearest_neighbor_match(&target, &other)?
    } else {
        sinkhorn_ot_match(&target, &other, &SinkhornParams::default())?
    };
    Ok(AxiomInstance {
        scorer,
        target,
        other,
        plan,
        dummy,
        pair,
    })
}

fn shapley_axioms_instance(seed: u64, fault: Fault) -> Result<Check> {
    let inst = axiom_instance(seed)?;
    let f = |x: &[f64], a: u8| inst.scorer.proba(x, a);
    let players = PlayerMap::singletons(inst.target.cols());
    let ctx = DrGameContext::new(&f, &inst.target, &inst.other, &inst.plan, &players, DrScale::Probability)?;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..inst.target.rows() {
        let game = ctx.game(i)?;
        let values = exact_shapley(&game)?;
        let mut phi0 = game.reference_dr();
        if let Fault::Efficiency(offset) = fault {
            phi0 += offset;
        }
        let efficiency = (phi0 + values.phi.iter().sum::<f64>() - game.target_dr()).abs();
        let dummy = values.phi[inst.dummy].abs();
        let symmetry = (values.phi[inst.pair.0] - values.phi[inst.pair.1]).abs();
        for (name, v) in [("efficiency", efficiency), ("dummy", dummy), ("symmetry", symmetry)] {
            worst = worst.max(v);
            if !(v <= SHAPLEY_TOLERANCE) {
                failures.push(format!("row {i}: {name} violated by {v:e}"));
            }
        }
    }
    Ok(if failures.is_empty() {
        Check::Pass(worst)
    } else {
        Check::Fail(
            worst,
            format!(
                "{}; scorer={:?}; target={:?}; other={:?}",
                failures.join(", "),
                inst.scorer,
                inst.target,
                inst.other
            ),
        )
    })
}

/// Indicator-valued predictor: thresholded random linear score over features
/// and the sensitive attribute.
fn indicator_scorer(r: &mut Rng, d: usize) -> RandomScorer {
    RandomScorer {
        w: (0..d).map(|_| normal(r)).collect(),
        u: (0..d).map(|_| normal(r)).collect(),
        bias: normal(r),
        interaction: None,
    }
}

fn indicator(s: &RandomScorer, x: &[f64], a: u8) -> f64 {
    predict_label(&|x: &[f64], a: u8| s.proba(x, a), x, a, DEFAULT_THRESHOLD) as f64
}

fn discrete_rows(r: &mut Rng, rows: usize, d: usize, levels: u32, skew: &[f64]) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..d)
                .map(|k| {
                    // biased level draw so the groups can differ
                    let u: f64 = r.random::<f64>();
                    let level = libm::floor(libm::pow(u, skew[k]) * levels as f64) as u32;
                    level.min(levels - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Exact rational comparison of `DP <= DR (+ TV)` from counts.
struct Tally {
    n0: i128,
    n1: i128,
    positive: [i128; 2],
    dr_count: i128,
    tv_numerator: i128,
}

impl Tally {
    /// Returns `(lhs, rhs)` scaled to the common denominator `2 n0 n1 (n0+n1)`.
    fn scaled(&self, with_tv: bool) -> (i128, i128) {
        let (n0, n1) = (self.n0, self.n1);
        let n = n0 + n1;
        let dp = (self.positive[0] * n1 - self.positive[1] * n0).abs() * 2 * n;
        let dr = self.dr_count * 2 * n0 * n1;
        let tv = if with_tv { self.tv_numerator * n } else { 0 };
        (dp, dr + tv)
    }
}

fn tally(s: &RandomScorer, d0: &Matrix, d1: &Matrix) -> Result<Tally> {
    let positive = [
        d0.iter_rows().map(|x| indicator(s, x, 0) as i128).sum(),
        d1.iter_rows().map(|x| indicator(s, x, 1) as i128).sum(),
    ];
    let dr_count = d0
        .iter_rows()
        .chain(d1.iter_rows())
        .map(|x| (indicator(s, x, 0) != indicator(s, x, 1)) as i128)
        .sum();
    let binning = alloc::vec![ColumnBinning::Exact; d0.cols()];
    let (n0, n1) = (d0.rows() as i128, d1.rows() as i128);
    let tv_numerator = joint_histogram(d0, d1, &binning)?
        .values()
        .map(|&(c0, c1)| (c0 as i128 * n1 - c1 as i128 * n0).abs())
        .sum();
    Ok(Tally {
        n0,
        n1,
        positive,
        dr_count,
        tv_numerator,
    })
}

fn stacked(d0: &Matrix, d1: &Matrix) -> Result<(Matrix, Vec<u8>)> {
    let rows: Vec<&[f64]> = d0.iter_rows().chain(d1.iter_rows()).collect();
    let x = Matrix::from_rows(&rows)?;
    let mut a = alloc::vec![0u8; d0.rows()];
    a.extend(core::iter::repeat_n(1u8, d1.rows()));
    Ok((x, a))
}

fn theorem_check(s: &RandomScorer, d0: &Matrix, d1: &Matrix, with_tv: bool) -> Result<Check> {
    let t = tally(s, d0, d1)?;
    let (lhs, rhs) = t.scaled(with_tv);
    let (x, a) = stacked(d0, d1)?;
    let f = |x: &[f64], a: u8| indicator(s, x, a);
    let dp = demographic_parity(&f, &x, &a)?;
    let dr = dr_dataset(&f, &x, DrScale::Probability)?;
    let slack = (lhs - rhs).max(0) as f64;
    if lhs <= rhs {
        Ok(Check::Pass(0.0))
    } else {
        Ok(Check::Fail(
            slack,
            format!(
                "dp={dp} dr={dr} scaled lhs={lhs} rhs={rhs}; scorer={s:?}; d0={d0:?}; d1={d1:?}"
            ),
        ))
    }
}

fn theorem_d1_instance(seed: u64) -> Result<Check> {
    let mut r = rng::seeded(seed);
    let d = r.random_range(1..=4);
    let rows = r.random_range(1..=12);
    let skew: Vec<f64> = (0..d).map(|_| r.random_range(0.3..3.0)).collect();
    let base = discrete_rows(&mut r, rows, d, 3, &skew);
    let copies = r.random_range(1..=3);
    let mut g0 = Vec::new();
    let mut g1 = Vec::new();
    for row in &base {
        for _ in 0..copies {
            g0.push(row.clone());
        }
        g1.push(row.clone());
    }
    // same empirical distribution: every row appears `copies` times in g0 and once in g1
    let d0 = Matrix::from_rows(&g0)?;
    let d1 = Matrix::from_rows(&g1)?;
    let s = indicator_scorer(&mut r, d);
    let t = tally(&s, &d0, &d1)?;
    if t.tv_numerator != 0 {
        return Err(Error::Dataset("constructed groups differ in distribution".into()));
    }
    theorem_check(&s, &d0, &d1, false)
}

fn theorem_d2_instance(seed: u64) -> Result<Check> {
    let mut r = rng::seeded(seed);
    let d = r.random_range(1..=4);
    let skew0: Vec<f64> = (0..d).map(|_| r.random_range(0.3..3.0)).collect();
    let skew1: Vec<f64> = (0..d).map(|_| r.random_range(0.3..3.0)).collect();
    let n0 = r.random_range(1..=30);
    let n1 = r.random_range(1..=30);
    let d0 = Matrix::from_rows(&discrete_rows(&mut r, n0, d, 3, &skew0))?;
    let d1 = Matrix::from_rows(&discrete_rows(&mut r, n1, d, 3, &skew1))?;
    let s = indicator_scorer(&mut r, d);
    theorem_check(&s, &d0, &d1, true)
}

fn theorem_c2_instance(seed: u64, fault: Fault) -> Result<(Vec<f64>, f64, Option<String>)> {
    let inst = axiom_instance(seed)?;
    let f = |x: &[f64], a: u8| inst.scorer.proba(x, a);
    let players = PlayerMap::singletons(inst.target.cols());
    let cfg = FairshapConfig {
        threshold: 0.0,
        threshold_mode: ThresholdMode::Absolute,
        estimator: EstimatorConfig::exact(),
        ..FairshapConfig::default()
    };
    let direction = fairshap_modify(&inst.target, &inst.other, 0, &f, &players, &cfg)?;
    let mut diag = theorem_c2_diagnostic(&f, &inst.target, &direction, &players, &cfg)?;
    if let Fault::Efficiency(offset) = fault {
        diag.grand_max_gap += offset.abs();
    }
    let failure = (!(diag.grand_max_gap <= SHAPLEY_TOLERANCE)).then(|| {
        format!(
            "grand coalition gap {:e}; target={:?}; other={:?}",
            diag.grand_max_gap, inst.target, inst.other
        )
    });
    Ok((diag.gaps, diag.grand_max_gap, failure))
}
