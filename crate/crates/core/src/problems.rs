//! Built-in benchmark problems with starting points and reference data.
//!
//! Twelve problems are hand-coded with analytic derivatives through third
//! order. The remaining rows of the reference table are read from the text
//! encodings in `problems/*.nlp` (see [`crate::text`]).

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::{Analytic, ComposedProblem, NlpProblem, SmoothFunction};
use crate::solver::{MultiplierStart, SolverConfig, StartPoint, Variant};

/// One row of the published benchmark table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub name: &'static str,
    pub objective: f64,
    pub iterations: usize,
    pub conv_phi: f64,
    pub seconds: f64,
}

const TABLE: [TableRow; 17] = [
    TableRow { name: "16", objective: 0.25, iterations: 22, conv_phi: 1.2313e-15, seconds: 0.231982 },
    TableRow { name: "17", objective: 1.0, iterations: 22, conv_phi: 1.3279e-15, seconds: 0.229433 },
    TableRow { name: "19", objective: -6961.8139, iterations: 22, conv_phi: 7.563e-11, seconds: 0.206065 },
    TableRow { name: "23", objective: 2.0, iterations: 22, conv_phi: 3.0712e-13, seconds: 0.253886 },
    TableRow { name: "32", objective: 1.0, iterations: 22, conv_phi: 7.6672e-16, seconds: 0.273155 },
    TableRow { name: "59", objective: -7.8028, iterations: 24, conv_phi: 2.4705e-12, seconds: 0.253580 },
    TableRow { name: "64", objective: 6299.8424, iterations: 19, conv_phi: 1.139e-10, seconds: 0.167498 },
    TableRow { name: "66", objective: 0.51816, iterations: 22, conv_phi: 1.5841e-12, seconds: 0.275467 },
    TableRow { name: "71", objective: 17.014, iterations: 37, conv_phi: 3.1672e-13, seconds: 0.576570 },
    TableRow { name: "80", objective: 0.05395, iterations: 20, conv_phi: 5.7296e-15, seconds: 0.432452 },
    TableRow { name: "84", objective: -5280335.2971, iterations: 27, conv_phi: 6.1572e-05, seconds: 0.689569 },
    TableRow { name: "95", objective: 0.015621, iterations: 23, conv_phi: 4.4154e-13, seconds: 0.656584 },
    TableRow { name: "96", objective: 0.015621, iterations: 20, conv_phi: 3.6668e-13, seconds: 0.520563 },
    TableRow { name: "97", objective: 4.6451, iterations: 25, conv_phi: 2.6823e-11, seconds: 0.662390 },
    TableRow { name: "98", objective: 4.6451, iterations: 26, conv_phi: 6.9447e-12, seconds: 0.793426 },
    TableRow { name: "101", objective: 1809.7648, iterations: 53, conv_phi: 1.5096e-09, seconds: 10.802482 },
    TableRow { name: "108", objective: -0.86603, iterations: 22, conv_phi: 1.1108e-15, seconds: 1.674474 },
];

/// The published table, verbatim.
pub fn reference_table() -> &'static [TableRow] {
    &TABLE
}

/// Table row for a registered name such as `"HS19"`.
pub fn table_row(name: &str) -> Option<&'static TableRow> {
    let key = name.strip_prefix("HS")?;
    TABLE.iter().find(|r| r.name == key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    HandCoded,
    TextFormat,
}

#[derive(Clone)]
pub struct BenchmarkEntry {
    pub name: String,
    pub problem: Arc<dyn NlpProblem>,
    pub standard_start: DVector<f64>,
    /// Strictly feasible for every inequality row.
    pub interior_start: DVector<f64>,
    /// How the interior start was obtained from the standard one.
    pub start_note: String,
    /// Initial inequality multipliers paired with the interior start.
    pub multipliers: MultiplierStart,
    pub reference_objective: f64,
    pub reference_solution: Option<DVector<f64>>,
    pub table: Option<&'static TableRow>,
    /// Merit tolerance replacing the solver default for this problem.
    pub epsilon: Option<f64>,
    pub source: Source,
    /// Known structural defect (e.g. constraint qualification failure).
    pub note: Option<String>,
}

impl std::fmt::Debug for BenchmarkEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkEntry")
            .field("name", &self.name)
            .field("n", &self.problem.n())
            .field("m", &self.problem.m())
            .field("p", &self.problem.p())
            .field("reference_objective", &self.reference_objective)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown problem '{name}'; available: {}", available.join(", "))]
pub struct UnknownProblem {
    pub name: String,
    pub available: Vec<String>,
}

/// Looks up a registered problem by name (case-insensitive).
pub fn get_problem(name: &str) -> Result<BenchmarkEntry, UnknownProblem> {
    registry()
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| UnknownProblem { name: name.to_string(), available: names() })
}

pub fn names() -> Vec<String> {
    registry().iter().map(|e| e.name.clone()).collect()
}

pub fn all() -> &'static [BenchmarkEntry] {
    registry()
}

/// Problem sets accepted by the benchmark driver.
pub fn problem_set(set: &str) -> Option<Vec<BenchmarkEntry>> {
    let pick = |names: &[&str]| names.iter().map(|n| get_problem(n).expect("registered")).collect();
    match set {
        "all" => Some(registry().to_vec()),
        "hs-subset" => Some(pick(&["HS16", "HS17", "HS19", "HS23", "HS32", "HS64", "HS66", "HS71", "HS80", "HS108"])),
        "table" => Some(registry().iter().filter(|e| e.table.is_some()).cloned().collect()),
        "hand-coded" => Some(registry().iter().filter(|e| e.source == Source::HandCoded).cloned().collect()),
        "hard" => Some(pick(&["WB", "HS13"])),
        _ => None,
    }
}

pub const PROBLEM_SETS: [&str; 5] = ["all", "hs-subset", "table", "hand-coded", "hard"];

fn registry() -> &'static Vec<BenchmarkEntry> {
    static REGISTRY: OnceLock<Vec<BenchmarkEntry>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut entries = hand_coded();
        for (file, text) in crate::text::BUILTIN_FILES {
            let parsed = crate::text::parse_problem(text).unwrap_or_else(|e| panic!("built-in file {file}: {e}"));
            entries.push(parsed.into_entry());
        }
        for e in &entries {
            let g = e.problem.g(&e.interior_start);
            assert!(
                g.iter().all(|&c| c > 0.0),
                "interior start of {} is not strictly feasible: {g:?}",
                e.name
            );
        }
        entries
    })
}

// ---------------------------------------------------------------------------
// Components

/// `Σ c x_i x_j + Σ b x_i + k` from sparse terms (zero-based indices).
#[derive(Debug, Clone)]
pub struct Quadratic {
    n: usize,
    terms: Vec<(usize, usize, f64)>,
    linear: Vec<(usize, f64)>,
    constant: f64,
}

pub fn quad(n: usize, terms: &[(usize, usize, f64)], linear: &[(usize, f64)], constant: f64) -> Quadratic {
    Quadratic { n, terms: terms.to_vec(), linear: linear.to_vec(), constant }
}

impl SmoothFunction for Quadratic {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let q: f64 = self.terms.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum();
        let l: f64 = self.linear.iter().map(|&(i, b)| b * x[i]).sum();
        q + l + self.constant
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for &(i, j, c) in &self.terms {
            g[i] += c * x[j];
            g[j] += c * x[i];
        }
        for &(i, b) in &self.linear {
            g[i] += b;
        }
        g
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for &(i, j, c) in &self.terms {
            h[(i, j)] += c;
            h[(j, i)] += c;
        }
        h
    }

    fn third(&self, _x: &DVector<f64>, _d: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.n))
    }
}

/// `scale · (x_i − shift)²` expanded into quadratic terms.
fn shifted_square(i: usize, shift: f64, scale: f64) -> (Vec<(usize, usize, f64)>, Vec<(usize, f64)>, f64) {
    (vec![(i, i, scale)], vec![(i, -2.0 * shift * scale)], scale * shift * shift)
}

/// Sum of `scale_k (x_{i_k} − shift_k)²` plus a constant.
fn sum_of_squares(n: usize, parts: &[(usize, f64, f64)], constant: f64) -> Quadratic {
    let mut terms = Vec::new();
    let mut linear = Vec::new();
    let mut k = constant;
    for &(i, shift, scale) in parts {
        let (t, l, c) = shifted_square(i, shift, scale);
        terms.extend(t);
        linear.extend(l);
        k += c;
    }
    Quadratic { n, terms, linear, constant: k }
}

/// `100 (x₂ − x₁²)² + (1 − x₁)²`
const ROSENBROCK: Analytic = Analytic {
    value: |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
    gradient: |x| {
        let u = x[1] - x[0] * x[0];
        vec![-400.0 * x[0] * u - 2.0 * (1.0 - x[0]), 200.0 * u]
    },
    hessian: |x| {
        let h11 = -400.0 * x[1] + 1200.0 * x[0] * x[0] + 2.0;
        let h12 = -400.0 * x[0];
        vec![h11, h12, h12, 200.0]
    },
    third: |x, d| vec![2400.0 * x[0] * d[0] * d[0] - 800.0 * d[0] * d[1], -400.0 * d[0] * d[0]],
};

fn hs13() -> BenchmarkEntry {
    let f = sum_of_squares(2, &[(0, 2.0, 1.0), (1, 0.0, 1.0)], 0.0);
    let g1 = Analytic {
        value: |x| (1.0 - x[0]).powi(3) - x[1],
        gradient: |x| vec![-3.0 * (1.0 - x[0]).powi(2), -1.0],
        hessian: |x| vec![6.0 * (1.0 - x[0]), 0.0, 0.0, 0.0],
        third: |_x, d| vec![-6.0 * d[0] * d[0], 0.0],
    };
    let prob = ComposedProblem::new("HS13", 2, f)
        .inequality(g1)
        .bounds(0, Some(0.0), None)
        .bounds(1, Some(0.0), None);
    entry(prob, &[-2.0, -2.0], &[0.1, 0.1], "bounds clamped to margin 0.1: (-2,-2) -> (0.1,0.1)", 1.0, Some(&[1.0, 0.0]))
        .with_note("constraint qualification fails at the solution (1,0); the merit function cannot reach zero")
}

fn hs16() -> BenchmarkEntry {
    let prob = ComposedProblem::new("HS16", 2, ROSENBROCK)
        .inequality(quad(2, &[(1, 1, 1.0)], &[(0, 1.0)], 0.0))
        .inequality(quad(2, &[(0, 0, 1.0)], &[(1, 1.0)], 0.0))
        .bounds(0, Some(-0.5), Some(0.5))
        .bounds(1, None, Some(1.0));
    let mut e = entry(
        prob,
        &[-2.0, 1.0],
        &[0.4, 0.3],
        "clamping (-2,1) into the box with margin 0.1 gives (-0.4,0.9), which leads to the local minimizer (-0.5, 0.7071) with f = 23.14; \
         (0.4,0.3) sits 0.1 inside x1 <= 0.5 with both nonlinear rows >= 0.46",
        0.25,
        Some(&[0.5, 0.25]),
    );
    // the bound multiplier at the solution is 1, so f is only as accurate as
    // the slack; phi <= 1e-8 leaves it about 1e-4 above 0.25
    e.epsilon = Some(1e-12);
    e
}

fn hs17() -> BenchmarkEntry {
    let prob = ComposedProblem::new("HS17", 2, ROSENBROCK)
        .inequality(quad(2, &[(1, 1, 1.0)], &[(0, -1.0)], 0.0))
        .inequality(quad(2, &[(0, 0, 1.0)], &[(1, -1.0)], 0.0))
        .bounds(0, Some(-0.5), Some(0.5))
        .bounds(1, None, Some(1.0));
    entry(
        prob,
        &[-2.0, 1.0],
        &[-0.4, 0.1],
        "x1 clamped to margin 0.1 (-0.4); x2 lowered to x1^2 - 0.06 = 0.1 so that x1^2 - x2 > 0",
        1.0,
        Some(&[0.0, 0.0]),
    )
}

fn hs19() -> BenchmarkEntry {
    let f = Analytic {
        value: |x| (x[0] - 10.0).powi(3) + (x[1] - 20.0).powi(3),
        gradient: |x| vec![3.0 * (x[0] - 10.0).powi(2), 3.0 * (x[1] - 20.0).powi(2)],
        hessian: |x| vec![6.0 * (x[0] - 10.0), 0.0, 0.0, 6.0 * (x[1] - 20.0)],
        third: |_x, d| vec![6.0 * d[0] * d[0], 6.0 * d[1] * d[1]],
    };
    let prob = ComposedProblem::new("HS19", 2, f)
        .inequality(sum_of_squares(2, &[(0, 5.0, 1.0), (1, 5.0, 1.0)], -100.0))
        .inequality(sum_of_squares(2, &[(0, 6.0, -1.0), (1, 5.0, -1.0)], 82.81))
        .bounds(0, Some(13.0), Some(100.0))
        .bounds(1, Some(0.0), Some(100.0));
    // both circles active: x1 from their difference, x2 on the lower branch
    let x1 = 14.095;
    let x2 = 5.0 - (100.0 - (x1 - 5.0f64).powi(2)).sqrt();
    entry(
        prob,
        &[20.1, 5.84],
        &[15.0, 4.0],
        "the standard start violates (x1-6)^2 + (x2-5)^2 <= 82.81; (15,4) lies in the crescent with g = (1, 0.81, ...). \
         With unit multipliers the iterates drift along the crescent away from the solution, so w0 is scaled by |grad f(x0)|_inf = 768",
        -6961.81387558,
        Some(&[x1, x2]),
    )
    .with_multipliers(MultiplierStart::GradientScaled)
}

fn hs23() -> BenchmarkEntry {
    let mut prob = ComposedProblem::new("HS23", 2, quad(2, &[(0, 0, 1.0), (1, 1, 1.0)], &[], 0.0))
        .inequality(quad(2, &[], &[(0, 1.0), (1, 1.0)], -1.0))
        .inequality(quad(2, &[(0, 0, 1.0), (1, 1, 1.0)], &[], -1.0))
        .inequality(quad(2, &[(0, 0, 9.0), (1, 1, 1.0)], &[], -9.0))
        .inequality(quad(2, &[(0, 0, 1.0)], &[(1, -1.0)], 0.0))
        .inequality(quad(2, &[(1, 1, 1.0)], &[(0, -1.0)], 0.0));
    for i in 0..2 {
        prob = prob.bounds(i, Some(-50.0), Some(50.0));
    }
    entry(prob, &[3.0, 1.0], &[3.0, 1.9], "x2 raised from 1 to 1.9 so that x2^2 - x1 > 0", 2.0, Some(&[1.0, 1.0]))
}

fn hs32() -> BenchmarkEntry {
    // (x1 + 3x2 + x3)² + 4(x1 − x2)²
    let f = quad(
        3,
        &[(0, 0, 5.0), (1, 1, 13.0), (2, 2, 1.0), (0, 1, -2.0), (0, 2, 2.0), (1, 2, 6.0)],
        &[],
        0.0,
    );
    let g1 = Analytic {
        value: |x| 6.0 * x[1] + 4.0 * x[2] - x[0].powi(3) - 3.0,
        gradient: |x| vec![-3.0 * x[0] * x[0], 6.0, 4.0],
        hessian: |x| {
            let mut h = vec![0.0; 9];
            h[0] = -6.0 * x[0];
            h
        },
        third: |_x, d| vec![-6.0 * d[0] * d[0], 0.0, 0.0],
    };
    let mut prob = ComposedProblem::new("HS32", 3, f)
        .equality(quad(3, &[], &[(0, -1.0), (1, -1.0), (2, -1.0)], 1.0))
        .inequality(g1);
    for i in 0..3 {
        prob = prob.bounds(i, Some(0.0), None);
    }
    entry(prob, &[0.1, 0.7, 0.2], &[0.1, 0.7, 0.2], "standard start is interior", 1.0, Some(&[0.0, 0.0, 1.0]))
}

fn hs64() -> BenchmarkEntry {
    let f = Analytic {
        value: |x| 5.0 * x[0] + 50000.0 / x[0] + 20.0 * x[1] + 72000.0 / x[1] + 10.0 * x[2] + 144000.0 / x[2],
        gradient: |x| {
            vec![
                5.0 - 50000.0 / (x[0] * x[0]),
                20.0 - 72000.0 / (x[1] * x[1]),
                10.0 - 144000.0 / (x[2] * x[2]),
            ]
        },
        hessian: |x| {
            let mut h = vec![0.0; 9];
            h[0] = 100000.0 / x[0].powi(3);
            h[4] = 144000.0 / x[1].powi(3);
            h[8] = 288000.0 / x[2].powi(3);
            h
        },
        third: |x, d| {
            vec![
                -300000.0 / x[0].powi(4) * d[0] * d[0],
                -432000.0 / x[1].powi(4) * d[1] * d[1],
                -864000.0 / x[2].powi(4) * d[2] * d[2],
            ]
        },
    };
    let g1 = Analytic {
        value: |x| 1.0 - 4.0 / x[0] - 32.0 / x[1] - 120.0 / x[2],
        gradient: |x| vec![4.0 / (x[0] * x[0]), 32.0 / (x[1] * x[1]), 120.0 / (x[2] * x[2])],
        hessian: |x| {
            let mut h = vec![0.0; 9];
            h[0] = -8.0 / x[0].powi(3);
            h[4] = -64.0 / x[1].powi(3);
            h[8] = -240.0 / x[2].powi(3);
            h
        },
        third: |x, d| {
            vec![
                24.0 / x[0].powi(4) * d[0] * d[0],
                192.0 / x[1].powi(4) * d[1] * d[1],
                720.0 / x[2].powi(4) * d[2] * d[2],
            ]
        },
    };
    let mut prob = ComposedProblem::new("HS64", 3, f).inequality(g1);
    for i in 0..3 {
        prob = prob.bounds(i, Some(1e-5), None);
    }
    entry(
        prob,
        &[1.0, 1.0, 1.0],
        &[100.0, 100.0, 300.0],
        "the standard start violates 1 - 4/x1 - 32/x2 - 120/x3 >= 0; (100,100,300) gives 0.24",
        6299.842428,
        Some(&[108.7347175, 85.12613942, 204.3247078]),
    )
}

fn hs66() -> BenchmarkEntry {
    let f = quad(3, &[], &[(0, -0.8), (2, 0.2)], 0.0);
    let g1 = Analytic {
        value: |x| x[1] - x[0].exp(),
        gradient: |x| vec![-x[0].exp(), 1.0, 0.0],
        hessian: |x| {
            let mut h = vec![0.0; 9];
            h[0] = -x[0].exp();
            h
        },
        third: |x, d| vec![-x[0].exp() * d[0] * d[0], 0.0, 0.0],
    };
    let g2 = Analytic {
        value: |x| x[2] - x[1].exp(),
        gradient: |x| vec![0.0, -x[1].exp(), 1.0],
        hessian: |x| {
            let mut h = vec![0.0; 9];
            h[4] = -x[1].exp();
            h
        },
        third: |x, d| vec![0.0, -x[1].exp() * d[1] * d[1], 0.0],
    };
    let prob = ComposedProblem::new("HS66", 3, f)
        .inequality(g1)
        .inequality(g2)
        .bounds(0, Some(0.0), Some(100.0))
        .bounds(1, Some(0.0), Some(100.0))
        .bounds(2, Some(0.0), Some(10.0));
    entry(
        prob,
        &[0.0, 1.05, 2.9],
        &[0.1, 1.25, 3.6],
        "x1 moved off its bound by 0.1; x2, x3 raised to keep x2 > exp(x1) and x3 > exp(x2)",
        0.5181632741,
        Some(&[0.1841264879, 1.202167873, 3.327322322]),
    )
}

fn hs71() -> BenchmarkEntry {
    let f = Analytic {
        value: |x| x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2],
        gradient: |x| {
            vec![
                x[3] * (2.0 * x[0] + x[1] + x[2]),
                x[0] * x[3],
                x[0] * x[3] + 1.0,
                x[0] * (x[0] + x[1] + x[2]),
            ]
        },
        hessian: |x| {
            let a = 2.0 * x[0] + x[1] + x[2];
            vec![
                2.0 * x[3], x[3], x[3], a, //
                x[3], 0.0, 0.0, x[0], //
                x[3], 0.0, 0.0, x[0], //
                a, x[0], x[0], 0.0,
            ]
        },
        third: |_x, d| {
            vec![
                4.0 * d[0] * d[3] + 2.0 * d[1] * d[3] + 2.0 * d[2] * d[3],
                2.0 * d[0] * d[3],
                2.0 * d[0] * d[3],
                2.0 * d[0] * d[0] + 2.0 * d[0] * d[1] + 2.0 * d[0] * d[2],
            ]
        },
    };
    let g1 = Analytic {
        value: |x| x[0] * x[1] * x[2] * x[3] - 25.0,
        gradient: |x| (0..4).map(|i| product_except(x, &[i])).collect(),
        hessian: |x| {
            let mut h = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        h[i * 4 + j] = product_except(x, &[i, j]);
                    }
                }
            }
            h
        },
        third: |x, d| {
            (0..4)
                .map(|i| {
                    let mut t = 0.0;
                    for j in 0..4 {
                        for k in 0..4 {
                            if i != j && j != k && i != k {
                                t += product_except(x, &[i, j, k]) * d[j] * d[k];
                            }
                        }
                    }
                    t
                })
                .collect()
        },
    };
    let mut prob = ComposedProblem::new("HS71", 4, f)
        .equality(quad(4, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)], &[], -40.0))
        .inequality(g1);
    for i in 0..4 {
        prob = prob.bounds(i, Some(1.0), Some(5.0));
    }
    entry(
        prob,
        &[1.0, 5.0, 5.0, 1.0],
        &[1.1, 4.9, 4.9, 1.1],
        "bounds clamped to margin 0.1: (1,5,5,1) -> (1.1,4.9,4.9,1.1)",
        17.0140173,
        Some(&[1.0, 4.742999643, 3.821149984, 1.379408293]),
    )
}

fn product_except(x: &[f64], skip: &[usize]) -> f64 {
    x.iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, v)| v)
        .product()
}

fn hs80() -> BenchmarkEntry {
    // exp(P), P = x1 x2 x3 x4 x5, q_i = ∂P/∂x_i, r_ij = ∂²P/∂x_i∂x_j
    let f = Analytic {
        value: |x| x.iter().product::<f64>().exp(),
        gradient: |x| {
            let e = x.iter().product::<f64>().exp();
            (0..5).map(|i| e * product_except(x, &[i])).collect()
        },
        hessian: |x| {
            let e = x.iter().product::<f64>().exp();
            let q: Vec<f64> = (0..5).map(|i| product_except(x, &[i])).collect();
            let mut h = vec![0.0; 25];
            for i in 0..5 {
                for j in 0..5 {
                    let r = if i == j { 0.0 } else { product_except(x, &[i, j]) };
                    h[i * 5 + j] = e * (q[i] * q[j] + r);
                }
            }
            h
        },
        third: |x, d| {
            let e = x.iter().product::<f64>().exp();
            let q: Vec<f64> = (0..5).map(|i| product_except(x, &[i])).collect();
            let r = |i: usize, j: usize| if i == j { 0.0 } else { product_except(x, &[i, j]) };
            let qd: f64 = (0..5).map(|i| q[i] * d[i]).sum();
            let rd: Vec<f64> = (0..5).map(|i| (0..5).map(|j| r(i, j) * d[j]).sum()).collect();
            let drd: f64 = (0..5).map(|i| d[i] * rd[i]).sum();
            (0..5)
                .map(|i| {
                    let mut t = 0.0;
                    for j in 0..5 {
                        for k in 0..5 {
                            if i != j && j != k && i != k {
                                t += product_except(x, &[i, j, k]) * d[j] * d[k];
                            }
                        }
                    }
                    e * (q[i] * qd * qd + 2.0 * qd * rd[i] + q[i] * drd + t)
                })
                .collect()
        },
    };
    let h3 = Analytic {
        value: |x| x[0].powi(3) + x[1].powi(3) + 1.0,
        gradient: |x| vec![3.0 * x[0] * x[0], 3.0 * x[1] * x[1], 0.0, 0.0, 0.0],
        hessian: |x| {
            let mut h = vec![0.0; 25];
            h[0] = 6.0 * x[0];
            h[6] = 6.0 * x[1];
            h
        },
        third: |_x, d| vec![6.0 * d[0] * d[0], 6.0 * d[1] * d[1], 0.0, 0.0, 0.0],
    };
    let mut prob = ComposedProblem::new("HS80", 5, f)
        .equality(quad(5, &(0..5).map(|i| (i, i, 1.0)).collect::<Vec<_>>(), &[], -10.0))
        .equality(quad(5, &[(1, 2, 1.0), (3, 4, -5.0)], &[], 0.0))
        .equality(h3);
    for i in 0..5 {
        let b = if i < 2 { 2.3 } else { 3.2 };
        prob = prob.bounds(i, Some(-b), Some(b));
    }
    entry(
        prob,
        &[-2.0, 2.0, 2.0, -1.0, -1.0],
        &[-2.0, 2.0, 2.0, -1.0, -1.0],
        "standard start is interior",
        0.0539498478,
        Some(&[-1.717142, 1.595708, 1.827248, -0.7636429, -0.7636435]),
    )
}

fn hs108() -> BenchmarkEntry {
    // indices: x1..x9 -> 0..8
    let f = quad(9, &[(0, 3, -0.5), (1, 2, 0.5), (2, 8, -0.5), (4, 8, 0.5), (4, 7, -0.5), (5, 6, 0.5)], &[], 0.0);
    let dist = |a: usize, b: usize, c: usize, d: usize| {
        // 1 − (x_a − x_c)² − (x_b − x_d)²
        quad(9, &[(a, a, -1.0), (c, c, -1.0), (a, c, 2.0), (b, b, -1.0), (d, d, -1.0), (b, d, 2.0)], &[], 1.0)
    };
    let prob = ComposedProblem::new("HS108", 9, f)
        .inequality(quad(9, &[(2, 2, -1.0), (3, 3, -1.0)], &[], 1.0))
        .inequality(quad(9, &[(8, 8, -1.0)], &[], 1.0))
        .inequality(quad(9, &[(4, 4, -1.0), (5, 5, -1.0)], &[], 1.0))
        .inequality(quad(9, &[(0, 0, -1.0), (1, 1, -1.0), (8, 8, -1.0), (1, 8, 2.0)], &[], 1.0))
        .inequality(dist(0, 1, 4, 5))
        .inequality(dist(0, 1, 6, 7))
        .inequality(dist(2, 3, 4, 5))
        .inequality(dist(2, 3, 6, 7))
        .inequality(quad(9, &[(6, 6, -1.0), (7, 7, -1.0), (8, 8, -1.0), (7, 8, 2.0)], &[], 1.0))
        .inequality(quad(9, &[(0, 3, 1.0), (1, 2, -1.0)], &[], 0.0))
        .inequality(quad(9, &[(2, 8, 1.0)], &[], 0.0))
        .inequality(quad(9, &[(4, 8, -1.0)], &[], 0.0))
        .inequality(quad(9, &[(4, 7, 1.0), (5, 6, -1.0)], &[], 0.0))
        .bounds(8, Some(0.0), None);
    entry(
        prob,
        &[1.0; 9],
        &[-0.289, -0.276, 0.507, -0.372, -0.415, -0.348, 0.445, 0.012, 0.361],
        "the standard start violates several rows, and -x5 x9 > 0 forces x5 < 0. The start is a numerical max-min point \
         (smallest row value 0.149, rounded to 3 digits) in the basin of a global maximizer; the max-min point \
         (0.4459, 0.5739, 0.2648, 0.7935, -0.2648, 0.6565, -0.3415, 0.1373, 0.7094) leads to a KKT point with f = -0.6713",
        -0.8660254038,
        None,
    )
}

fn wachter_biegler() -> BenchmarkEntry {
    let prob = ComposedProblem::new("WB", 3, quad(3, &[], &[(0, 1.0)], 0.0))
        .equality(quad(3, &[(0, 0, 1.0)], &[(1, -1.0)], -1.0))
        .equality(quad(3, &[], &[(0, 1.0), (2, -1.0)], -2.0))
        .bounds(1, Some(0.0), None)
        .bounds(2, Some(0.0), None);
    let mut e = entry(prob, &[-4.0, 1.0, 1.0], &[-4.0, 1.0, 1.0], "standard start is interior", 2.0, Some(&[2.0, 3.0, 0.0]));
    // the limit has z3 -> 1 while x3 -> 0; a tight merit tolerance pins x3 below 1e-6
    e.epsilon = Some(1e-14);
    e
}

fn entry(
    prob: ComposedProblem,
    standard: &[f64],
    interior: &[f64],
    note: &str,
    objective: f64,
    solution: Option<&[f64]>,
) -> BenchmarkEntry {
    let prob = prob.validated().expect("built-in problem shape");
    let name = prob.name().to_string();
    BenchmarkEntry {
        table: table_row(&name),
        name,
        problem: Arc::new(prob),
        standard_start: DVector::from_row_slice(standard),
        interior_start: DVector::from_row_slice(interior),
        start_note: note.to_string(),
        multipliers: MultiplierStart::Unit,
        reference_objective: objective,
        reference_solution: solution.map(DVector::from_row_slice),
        epsilon: None,
        source: Source::HandCoded,
        note: None,
    }
}

impl BenchmarkEntry {
    /// The documented interior start with its multiplier rule applied.
    pub fn start(&self) -> StartPoint {
        StartPoint::with_multipliers(self.problem.as_ref(), self.interior_start.clone(), self.multipliers)
    }

    /// Default settings for `variant` with this problem's merit tolerance.
    pub fn config(&self, variant: Variant) -> SolverConfig {
        let mut cfg = SolverConfig::with_variant(variant);
        if let Some(eps) = self.epsilon {
            cfg.epsilon = eps;
        }
        cfg
    }

    fn with_multipliers(mut self, rule: MultiplierStart) -> Self {
        self.multipliers = rule;
        self
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }
}

fn hand_coded() -> Vec<BenchmarkEntry> {
    vec![hs13(), hs16(), hs17(), hs19(), hs23(), hs32(), hs64(), hs66(), hs71(), hs80(), hs108(), wachter_biegler()]
}
