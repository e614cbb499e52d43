use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::simplex::{LinearProgram, LpError};
use super::Bounded;
use crate::error::{Error, Result};
use crate::params::{IntensityLabel, IntensityTriple};
use crate::units::poisson_pmf;

/// Phase-randomised gains keyed by (Alice, Bob) intensity.
pub type GainTable = BTreeMap<(IntensityLabel, IntensityLabel), f64>;

/// Upper bounds on the yields `Y_mn` for `m, n ≤ n_cut`. Entries with
/// `m + n ≥ y_cut` are not estimated and hold 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldMatrixBounds {
    pub n_cut: u32,
    pub y_cut: u32,
    entries: Vec<f64>,
}

impl YieldMatrixBounds {
    /// Matrix with every entry equal to `value`.
    pub fn filled(n_cut: u32, y_cut: u32, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidParameter(format!("yield {value} outside [0, 1]")));
        }
        let n = n_cut as usize + 1;
        Ok(Self {
            n_cut,
            y_cut,
            entries: vec![value; n * n],
        })
    }

    fn index(&self, m: u32, n: u32) -> usize {
        assert!(m <= self.n_cut && n <= self.n_cut, "({m}, {n}) beyond n_cut {}", self.n_cut);
        m as usize * (self.n_cut as usize + 1) + n as usize
    }

    pub fn get(&self, m: u32, n: u32) -> f64 {
        self.entries[self.index(m, n)]
    }

    pub fn set(&mut self, m: u32, n: u32, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidParameter(format!("yield {value} outside [0, 1]")));
        }
        let i = self.index(m, n);
        self.entries[i] = value;
        Ok(())
    }

    /// `g_mn`: the bound below the cut, 1 above it.
    pub fn g(&self, m: u32, n: u32) -> f64 {
        if m + n < self.y_cut {
            self.get(m, n)
        } else {
            1.0
        }
    }
}

fn combo_name(a: IntensityLabel, b: IntensityLabel) -> String {
    format!("Q_{}{}", a.as_char(), b.as_char())
}

/// Maximises every `Y_mn` with `m + n < y_cut` subject to the measured gains.
///
/// Each gain `Q_ab` constrains the truncated sum
/// `Σ_{j,k ≤ n_cut} P(j; a) P(k; b) Y_jk` to `[Q_ab − tail, Q_ab]`, where
/// `tail` is the Poisson pair mass beyond the truncation. Rows are scaled by
/// `1/Q_ab` before solving.
pub fn yield_matrix_upper_bounds(
    gains: &GainTable,
    intensities: &IntensityTriple,
    n_cut: u32,
    y_cut: u32,
) -> Result<YieldMatrixBounds> {
    use IntensityLabel::*;
    for (a, b) in [(U, U), (U, V), (U, W), (V, V), (V, W), (W, W)] {
        if !gains.contains_key(&(a, b)) && !gains.contains_key(&(b, a)) {
            return Err(Error::MissingInput(format!("gain {} is required", combo_name(a, b))));
        }
    }
    if y_cut > 2 * n_cut + 1 {
        return Err(Error::InvalidParameter(format!("y_cut {y_cut} exceeds 2 n_cut + 1")));
    }
    let n = n_cut as usize + 1;
    let mut lp = LinearProgram::new(n * n);
    for j in 0..n * n {
        lp.set_bounds(j, 0.0, 1.0);
    }
    let mut names = Vec::new();
    for (&(a, b), &q) in gains {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("{} = {q} outside [0, 1]", combo_name(a, b))));
        }
        let pa: Vec<f64> = (0..n as u32).map(|j| poisson_pmf(j, intensities.get(a))).collect();
        let pb: Vec<f64> = (0..n as u32).map(|k| poisson_pmf(k, intensities.get(b))).collect();
        let mut row: Vec<f64> = pa.iter().flat_map(|x| pb.iter().map(move |y| x * y)).collect();
        let tail = (1.0 - row.iter().sum::<f64>()).max(0.0);
        let scale = if q > 0.0 { 1.0 / q } else { 1.0 };
        row.iter_mut().for_each(|c| *c *= scale);
        lp.add_row(&row, (q - tail) * scale, q * scale);
        names.push(combo_name(a, b));
    }

    let mut bounds = YieldMatrixBounds::filled(n_cut, y_cut, 1.0)?;
    for m in 0..=n_cut {
        for k in 0..=n_cut {
            if m + k >= y_cut {
                continue;
            }
            let mut c = vec![0.0; n * n];
            c[m as usize * n + k as usize] = 1.0;
            lp.set_objective(&c);
            let sol = lp.maximize().map_err(|e| match e {
                LpError::Infeasible { rows } => Error::Infeasible {
                    constraint: rows.iter().map(|&r| names[r].clone()).collect::<Vec<_>>().join(", "),
                },
                other => Error::EstimationFailure(format!("yield LP for Y_{m}{k}: {other}")),
            })?;
            bounds.set(m, k, sol.objective.clamp(0.0, 1.0))?;
        }
    }
    Ok(bounds)
}

/// Phase-error upper bound of the encoding basis.
///
/// `mu` is the mean photon number of one user's signal pulse; the
/// coefficients `c_k` are Poisson amplitudes of that pulse, split by parity.
pub fn phase_error_curty(bounds: &YieldMatrixBounds, mu: f64, q_z: f64) -> Result<Bounded> {
    if !(q_z > 0.0) {
        return Err(Error::EstimationFailure(format!("encoding gain {q_z} is not positive")));
    }
    if !(mu >= 0.0) {
        return Err(Error::InvalidParameter(format!("mean photon number {mu} is negative")));
    }
    let c: Vec<f64> = (0..=bounds.n_cut).map(|k| poisson_pmf(k, mu).sqrt()).collect();
    let mut total = 0.0;
    for parity in 0..2 {
        let mut s = 0.0;
        for m in (parity..=bounds.n_cut).step_by(2) {
            for n in (parity..=bounds.n_cut).step_by(2) {
                s += c[m as usize] * c[n as usize] * bounds.g(m, n).sqrt();
            }
        }
        total += s * s;
    }
    Ok(Bounded::clamp(total / q_z, 0.0, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use IntensityLabel::*;

    fn table_ii() -> (GainTable, IntensityTriple) {
        let g: GainTable = [
            ((U, U), 1.71e-6),
            ((V, V), 18.2e-6),
            ((W, W), 0.026e-6),
            ((U, V), 8.77e-6),
            ((U, W), 0.913e-6),
            ((V, W), 8.74e-6),
        ]
        .into_iter()
        .collect();
        (g, IntensityTriple::new(0.02, 0.2, 5e-6).unwrap())
    }

    fn synthetic_gains(mu: &IntensityTriple, eta: f64, y0: f64) -> GainTable {
        let mut g = GainTable::new();
        for a in IntensityLabel::ALL {
            for b in IntensityLabel::ALL {
                let mut q = 0.0;
                for j in 0..60 {
                    for k in 0..60 {
                        let y = 1.0 - (1.0 - y0) * (1.0 - eta).powi(j + k);
                        q += poisson_pmf(j as u32, mu.get(a)) * poisson_pmf(k as u32, mu.get(b)) * y;
                    }
                }
                g.insert((a, b), q);
            }
        }
        g
    }

    #[test]
    fn one_dimensional_lp() {
        let mu = IntensityTriple::new(0.5, 0.2, 0.01).unwrap();
        let mut g = synthetic_gains(&mu, 0.1, 1e-3);
        g.retain(|(a, b), _| a <= b);
        let b = yield_matrix_upper_bounds(&g, &mu, 0, 1).unwrap();
        let expect = g
            .iter()
            .map(|(&(x, y), &q)| (q / (poisson_pmf(0, mu.get(x)) * poisson_pmf(0, mu.get(y)))).min(1.0))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(b.get(0, 0), expect, max_relative = 1e-9);
    }

    #[test]
    fn table_ii_bounds() {
        // reference optimum from an independent dual-simplex solver at 1e-10 tolerances
        let (g, mu) = table_ii();
        let b = yield_matrix_upper_bounds(&g, &mu, 20, 5).unwrap();
        let expect = [
            (0, 0, 2.5588325044085006e-08),
            (0, 1, 4.242619656458729e-05),
            (0, 2, 8.396630918375511e-05),
            (0, 3, 0.0011449691032081148),
            (0, 4, 0.02269303484908568),
            (1, 0, 4.5282976720477e-05),
            (1, 1, 0.00017998926553384613),
            (1, 2, 0.0017998476591469825),
            (1, 3, 0.02699771487033112),
            (2, 0, 8.84796146056524e-05),
            (2, 1, 0.0016362660503076887),
            (2, 2, 0.01636225144679071),
            (3, 0, 0.0012065127784231943),
            (3, 1, 0.024322873720789492),
            (4, 0, 0.023912816904761533),
        ];
        for (m, n, y) in expect {
            assert_relative_eq!(b.get(m, n), y, max_relative = 1e-7);
        }
        assert_eq!(b.get(3, 2), 1.0);
        let e = phase_error_curty(&b, 0.02, 1.79e-6).unwrap();
        assert_relative_eq!(e.value, 0.17776877999198273, max_relative = 1e-7);
    }

    #[test]
    fn missing_combo() {
        let (mut g, mu) = table_ii();
        g.remove(&(V, W));
        assert!(matches!(yield_matrix_upper_bounds(&g, &mu, 5, 3), Err(Error::MissingInput(_))));
        // the reversed ordering satisfies the requirement
        g.insert((W, V), 8.74e-6);
        assert!(!matches!(yield_matrix_upper_bounds(&g, &mu, 5, 3), Err(Error::MissingInput(_))));
    }

    #[test]
    fn infeasible_combo_identified() {
        let (mut g, mu) = table_ii();
        // w-w gain larger than anything the weak pulses can produce
        g.insert((W, W), 0.9);
        match yield_matrix_upper_bounds(&g, &mu, 6, 3) {
            Err(Error::Infeasible { constraint }) => assert!(constraint.contains("Q_"), "{constraint}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_search_toy() {
        // n_cut = 2: nine unknowns on a grid of step 1/STEPS; the grid optimum
        // never beats the LP and trails it by at most one grid step
        const STEPS: usize = 5;
        let mu = IntensityTriple::new(1.5, 1.0, 0.4).unwrap();
        let g = synthetic_gains(&mu, 0.3, 0.1);
        let b = yield_matrix_upper_bounds(&g, &mu, 2, 5).unwrap();
        let p = |j: usize, l: IntensityLabel| poisson_pmf(j as u32, mu.get(l));
        let rows: Vec<([f64; 9], f64, f64)> = g
            .iter()
            .map(|(&(x, y), &q)| {
                let mut c = [0.0; 9];
                for j in 0..3 {
                    for k in 0..3 {
                        c[3 * j + k] = p(j, x) * p(k, y);
                    }
                }
                let tail = 1.0 - c.iter().sum::<f64>();
                (c, q - tail, q)
            })
            .collect();
        let mut best = [f64::NEG_INFINITY; 9];
        let mut y = [0.0; 9];
        for code in 0..(STEPS + 1).pow(9) {
            let mut c = code;
            for v in y.iter_mut() {
                *v = (c % (STEPS + 1)) as f64 / STEPS as f64;
                c /= STEPS + 1;
            }
            let ok = rows.iter().all(|(c, lo, hi)| {
                let s: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
                s >= *lo - 1e-12 && s <= *hi + 1e-12
            });
            if ok {
                for k in 0..9 {
                    best[k] = best[k].max(y[k]);
                }
            }
        }
        for k in 0..9 {
            let lp = b.get((k / 3) as u32, (k % 3) as u32);
            assert!(best[k].is_finite(), "no feasible grid point");
            assert!(best[k] <= lp + 1e-9, "{k}: grid {} lp {lp}", best[k]);
            assert!(lp - best[k] <= 1.0 / STEPS as f64 + 1e-9, "{k}: grid {} lp {lp}", best[k]);
        }
    }

    #[test]
    fn all_zero_yields() {
        let b = YieldMatrixBounds::filled(3, 8, 0.0).unwrap();
        assert_eq!(phase_error_curty(&b, 0.1, 1e-3).unwrap().value, 0.0);
    }

    #[test]
    fn zeroth_order_term() {
        let mut b = YieldMatrixBounds::filled(4, 1, 1.0).unwrap();
        b.set(0, 0, 0.25).unwrap();
        let mu = 1e-9;
        let q = 1.0;
        let e = phase_error_curty(&b, mu, q).unwrap().raw;
        // j=0: (c0^2 * 0.5 + O(mu))^2, j=1: O(mu^2)
        assert_relative_eq!(e, 0.25, max_relative = 1e-6);
    }

    #[test]
    fn zero_gain_fails() {
        let b = YieldMatrixBounds::filled(2, 2, 0.5).unwrap();
        assert!(matches!(phase_error_curty(&b, 0.1, 0.0), Err(Error::EstimationFailure(_))));
    }

    #[test]
    fn extra_constraint_never_loosens() {
        let mu = IntensityTriple::new(0.5, 0.2, 0.01).unwrap();
        let full = synthetic_gains(&mu, 0.05, 1e-4);
        let six: GainTable = full.iter().filter(|((a, b), _)| a <= b).map(|(k, v)| (*k, *v)).collect();
        let b6 = yield_matrix_upper_bounds(&six, &mu, 8, 4).unwrap();
        let b9 = yield_matrix_upper_bounds(&full, &mu, 8, 4).unwrap();
        for m in 0..4 {
            for n in 0..4 - m {
                assert!(b9.get(m, n) <= b6.get(m, n) + 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn phase_error_monotone(m in 0u32..4, n in 0u32..4, base in 0.0f64..0.9, bump in 0.0f64..0.1) {
            let mut b = YieldMatrixBounds::filled(6, 6, 0.0).unwrap();
            for i in 0..=6 {
                for k in 0..=6 {
                    b.set(i, k, (base * (1 + i + k) as f64 / 13.0).min(1.0)).unwrap();
                }
            }
            let e0 = phase_error_curty(&b, 0.3, 0.5).unwrap().raw;
            let v = b.get(m, n);
            b.set(m, n, (v + bump).min(1.0)).unwrap();
            let e1 = phase_error_curty(&b, 0.3, 0.5).unwrap().raw;
            prop_assert!(e1 >= e0 - 1e-15);
        }

        #[test]
        fn bounds_cover_true_yields(eta in 0.01f64..0.5, y0 in 1e-6f64..1e-2) {
            let mu = IntensityTriple::new(0.4, 0.15, 0.01).unwrap();
            let g = synthetic_gains(&mu, eta, y0);
            let b = yield_matrix_upper_bounds(&g, &mu, 8, 3).unwrap();
            for m in 0..3 {
                for n in 0..3 - m {
                    let truth = 1.0 - (1.0 - y0) * (1.0 - eta).powi((m + n) as i32);
                    prop_assert!(b.get(m, n) >= truth * (1.0 - 1e-7) - 1e-12);
                    prop_assert!((0.0..=1.0).contains(&b.get(m, n)));
                }
            }
        }
    }
}
