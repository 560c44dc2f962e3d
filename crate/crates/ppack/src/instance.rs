//! Packing-instance data model shared by every other module.
//!
//! A packing instance is a 0-1 constraint matrix stored row-sparse (each row
//! is a sorted list of column indices), a right-hand-side vector, and
//! per-variable objective weights normalized so the largest weight is 1.
//! Rows drive the walk updates; a lazily built column-to-rows inverted index
//! serves dependency queries.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

/// Absolute slack tolerance used by [`validate`].
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance must have at least one variable")]
    NoVariables,
    #[error("row {row}: column index {index} out of range (n_vars = {n_vars})")]
    IndexOutOfRange { row: usize, index: usize, n_vars: usize },
    #[error("row {row}: indices must be strictly increasing (duplicate or unsorted at position {pos})")]
    UnsortedRow { row: usize, pos: usize },
    #[error("row {row}: size {size} outside [2, n-1] = [2, {max}] (use the lenient constructor for degenerate rows)")]
    DegenerateRow { row: usize, size: usize, max: usize },
    #[error("rhs length {got} does not match row count {want}")]
    RhsLength { got: usize, want: usize },
    #[error("rhs[{row}] = {value} is negative")]
    NegativeRhs { row: usize, value: f64 },
    #[error("weights length {got} does not match n_vars {want}")]
    WeightsLength { got: usize, want: usize },
    #[error("weight[{index}] = {value} not in (0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("weights must be normalized to max 1 (max = {max}); use PackingInstance::normalized")]
    WeightsNotNormalized { max: f64 },
    #[error("point length {got} does not match n_vars {want}")]
    PointLength { got: usize, want: usize },
    #[error("point value [{index}] = {value} not in [0, 1]")]
    PointValueOutOfRange { index: usize, value: f64 },
    #[error("solution length {got} does not match n_vars {want}")]
    SolutionLength { got: usize, want: usize },
    #[error("solution entry [{index}] = {value} not in {{0, 1}}")]
    SolutionEntry { index: usize, value: u8 },
    #[error("point infeasible: max violation {max_violation:.6e} in {} row(s), first offenders {offending:?}", offending.len())]
    Infeasible { max_violation: f64, offending: Vec<usize> },
}

/// A 0-1 packing constraint system with objective weights.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug)]
pub struct PackingInstance {
    rows: Vec<Vec<usize>>,
    n_vars: usize,
    rhs: Vec<f64>,
    weights: Vec<f64>,
    weight_floor: f64,
    weight_scale: f64,
    cols: OnceLock<Vec<Vec<usize>>>,
}

impl Clone for PackingInstance {
    fn clone(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            n_vars: self.n_vars,
            rhs: self.rhs.clone(),
            weights: self.weights.clone(),
            weight_floor: self.weight_floor,
            weight_scale: self.weight_scale,
            cols: OnceLock::new(),
        }
    }
}

impl PartialEq for PackingInstance {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.n_vars == other.n_vars
            && self.rhs == other.rhs
            && self.weights == other.weights
    }
}

impl PackingInstance {
    /// Strict constructor: rejects rows with fewer than 2 or more than
    /// `n_vars - 1` columns. Weights must already be normalized (max 1).
    pub fn new(
        rows: Vec<Vec<usize>>,
        n_vars: usize,
        rhs: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let inst = Self::new_lenient(rows, n_vars, rhs, weights)?;
        for (j, row) in inst.rows.iter().enumerate() {
            if row.len() < 2 || row.len() + 1 > n_vars {
                return Err(ModelError::DegenerateRow {
                    row: j,
                    size: row.len(),
                    max: n_vars.saturating_sub(1),
                });
            }
        }
        Ok(inst)
    }

    /// Lenient constructor: permits degenerate rows (empty, singleton, or
    /// full-width) for test fixtures and generator output.
    pub fn new_lenient(
        rows: Vec<Vec<usize>>,
        n_vars: usize,
        rhs: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if n_vars == 0 {
            return Err(ModelError::NoVariables);
        }
        if rhs.len() != rows.len() {
            return Err(ModelError::RhsLength { got: rhs.len(), want: rows.len() });
        }
        if weights.len() != n_vars {
            return Err(ModelError::WeightsLength { got: weights.len(), want: n_vars });
        }
        for (j, row) in rows.iter().enumerate() {
            for (pos, &i) in row.iter().enumerate() {
                if i >= n_vars {
                    return Err(ModelError::IndexOutOfRange { row: j, index: i, n_vars });
                }
                if pos > 0 && row[pos - 1] >= i {
                    return Err(ModelError::UnsortedRow { row: j, pos });
                }
            }
        }
        for (j, &b) in rhs.iter().enumerate() {
            if !(b >= 0.0) {
                return Err(ModelError::NegativeRhs { row: j, value: b });
            }
        }
        let mut max_w = f64::NEG_INFINITY;
        let mut min_w = f64::INFINITY;
        for (i, &c) in weights.iter().enumerate() {
            if !(c > 0.0 && c <= 1.0) {
                return Err(ModelError::WeightOutOfRange { index: i, value: c });
            }
            max_w = max_w.max(c);
            min_w = min_w.min(c);
        }
        if max_w != 1.0 {
            return Err(ModelError::WeightsNotNormalized { max: max_w });
        }
        Ok(Self {
            rows,
            n_vars,
            rhs,
            weights,
            weight_floor: 1.0 / min_w,
            weight_scale: 1.0,
            cols: OnceLock::new(),
        })
    }

    /// Normalizing constructor: divides all weights by their maximum and
    /// records the divisor. Accepts any positive raw weights.
    pub fn normalized(
        rows: Vec<Vec<usize>>,
        n_vars: usize,
        rhs: Vec<f64>,
        raw_weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mut max_w = f64::NEG_INFINITY;
        for (i, &c) in raw_weights.iter().enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ModelError::WeightOutOfRange { index: i, value: c });
            }
            max_w = max_w.max(c);
        }
        if raw_weights.is_empty() {
            return Err(ModelError::WeightsLength { got: 0, want: n_vars });
        }
        let weights: Vec<f64> = raw_weights.iter().map(|&c| c / max_w).collect();
        let mut inst = Self::new_lenient(rows, n_vars, rhs, weights)?;
        inst.weight_scale = max_w;
        Ok(inst)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `p` such that `min_i weights[i] >= 1/p` (equality at construction).
    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    /// Divisor applied by [`PackingInstance::normalized`]; 1 otherwise.
    pub fn weight_scale(&self) -> f64 {
        self.weight_scale
    }

    /// Largest row cardinality (the nominal `k` of generated families).
    pub fn max_row_size(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Column-to-rows inverted index, built on first use.
    pub fn cols(&self) -> &[Vec<usize>] {
        self.cols.get_or_init(|| {
            let mut cols = vec![Vec::new(); self.n_vars];
            for (j, row) in self.rows.iter().enumerate() {
                for &i in row {
                    cols[i].push(j);
                }
            }
            cols
        })
    }

    /// True when every row shares the same right-hand side.
    pub fn uniform_rhs(&self) -> Option<f64> {
        let first = *self.rhs.first()?;
        self.rhs.iter().all(|&b| b == first).then_some(first)
    }

    /// Row sums `A x` for a fractional vector.
    pub fn row_loads(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&i| x[i]).sum())
            .collect()
    }
}

/// A point in `[0,1]^n`, optionally validated against an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalPoint {
    values: Vec<f64>,
    slack_checked: bool,
}

impl FractionalPoint {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::PointValueOutOfRange { index: i, value: v });
            }
        }
        Ok(Self { values, slack_checked: false })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slack_checked(&self) -> bool {
        self.slack_checked
    }

    /// Fractional objective `<c, x>`.
    pub fn objective(&self, instance: &PackingInstance) -> f64 {
        self.values
            .iter()
            .zip(instance.weights())
            .map(|(&v, &c)| v * c)
            .sum()
    }
}

/// Check a fractional point against every constraint of an instance.
///
/// On success returns the point with its `slack_checked` flag set. A
/// violation above [`FEASIBILITY_TOLERANCE`] reports the maximum violation
/// and the offending rows.
pub fn validate(
    instance: &PackingInstance,
    point: FractionalPoint,
) -> Result<FractionalPoint, ModelError> {
    if point.len() != instance.n_vars() {
        return Err(ModelError::PointLength { got: point.len(), want: instance.n_vars() });
    }
    let mut max_violation = 0.0_f64;
    let mut offending = Vec::new();
    for (j, row) in instance.rows().iter().enumerate() {
        let sum: f64 = row.iter().map(|&i| point.values[i]).sum();
        let violation = sum - instance.rhs()[j];
        if violation > FEASIBILITY_TOLERANCE {
            if offending.len() < 16 {
                offending.push(j);
            }
            max_violation = max_violation.max(violation);
        }
    }
    if !offending.is_empty() {
        return Err(ModelError::Infeasible { max_violation, offending });
    }
    Ok(FractionalPoint { values: point.values, slack_checked: true })
}

/// Result of rounding: a 0-1 vector with its measured load and objective.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundingOutcome {
    pub solution: Vec<u8>,
    pub linf_load: u64,
    pub objective: f64,
    pub stats: BTreeMap<String, u64>,
}

/// Compute the outcome fields for a 0-1 solution vector.
pub fn evaluate(instance: &PackingInstance, solution: &[u8]) -> Result<RoundingOutcome, ModelError> {
    if solution.len() != instance.n_vars() {
        return Err(ModelError::SolutionLength { got: solution.len(), want: instance.n_vars() });
    }
    for (i, &s) in solution.iter().enumerate() {
        if s > 1 {
            return Err(ModelError::SolutionEntry { index: i, value: s });
        }
    }
    let linf_load = instance
        .rows()
        .iter()
        .map(|row| row.iter().map(|&i| u64::from(solution[i])).sum())
        .max()
        .unwrap_or(0);
    let objective = solution
        .iter()
        .zip(instance.weights())
        .map(|(&s, &c)| f64::from(s) * c)
        .sum();
    Ok(RoundingOutcome {
        solution: solution.to_vec(),
        linf_load,
        objective,
        stats: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_row_instance() -> PackingInstance {
        PackingInstance::new(
            vec![vec![0, 1], vec![1, 2]],
            3,
            vec![1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn validate_accepts_feasible_point() {
        let inst = two_row_instance();
        let p = FractionalPoint::uniform(3, 0.5).unwrap();
        let p = validate(&inst, p).unwrap();
        assert!(p.slack_checked());
        let loads = inst.row_loads(p.values());
        assert_eq!(loads, vec![1.0, 1.0]);
    }

    #[test]
    fn validate_reports_offending_rows() {
        let inst = two_row_instance();
        let p = FractionalPoint::new(vec![1.0, 1.0, 0.0]).unwrap();
        match validate(&inst, p) {
            Err(ModelError::Infeasible { max_violation, offending }) => {
                assert!((max_violation - 1.0).abs() < 1e-12);
                assert_eq!(offending, vec![0]);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let inst = two_row_instance();
        let p = FractionalPoint::uniform(4, 0.1).unwrap();
        assert!(matches!(validate(&inst, p), Err(ModelError::PointLength { .. })));
    }

    #[test]
    fn validate_k_sparse_rows_sum_to_exactly_one() {
        let inst = crate::gen::random_k_sparse(8, 16, 4, 7).unwrap();
        let p = FractionalPoint::uniform(16, 0.25).unwrap();
        let p = validate(&inst, p).unwrap();
        for load in inst.row_loads(p.values()) {
            assert_eq!(load, 1.0);
        }
    }

    #[test]
    fn evaluate_zero_solution() {
        let inst = two_row_instance();
        let out = evaluate(&inst, &[0, 0, 0]).unwrap();
        assert_eq!(out.linf_load, 0);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn evaluate_counts_loads_and_objective() {
        let inst = two_row_instance();
        let out = evaluate(&inst, &[1, 1, 0]).unwrap();
        assert_eq!(out.linf_load, 2);
        assert_eq!(out.objective, 2.0);
    }

    #[test]
    fn evaluate_duplicate_singleton_rows() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0], vec![0], vec![0]],
            1,
            vec![1.0; 3],
            vec![1.0],
        )
        .unwrap();
        let out = evaluate(&inst, &[1]).unwrap();
        assert_eq!(out.linf_load, 1);
        assert_eq!(out.objective, 1.0);
        for row in inst.rows() {
            assert_eq!(row.iter().map(|&i| u64::from(out.solution[i])).sum::<u64>(), 1);
        }
    }

    #[test]
    fn evaluate_is_deterministic() {
        let inst = two_row_instance();
        let a = evaluate(&inst, &[1, 0, 1]).unwrap();
        let b = evaluate(&inst, &[1, 0, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strict_constructor_rejects_degenerate_rows() {
        let r = PackingInstance::new(vec![vec![0]], 3, vec![1.0], vec![1.0; 3]);
        assert!(matches!(r, Err(ModelError::DegenerateRow { .. })));
        let r = PackingInstance::new(vec![vec![0, 1, 2]], 3, vec![1.0], vec![1.0; 3]);
        assert!(matches!(r, Err(ModelError::DegenerateRow { .. })));
        assert!(PackingInstance::new_lenient(vec![vec![0]], 3, vec![1.0], vec![1.0; 3]).is_ok());
    }

    #[test]
    fn constructor_rejects_bad_rows() {
        let r = PackingInstance::new(vec![vec![0, 3]], 3, vec![1.0], vec![1.0; 3]);
        assert!(matches!(r, Err(ModelError::IndexOutOfRange { .. })));
        let r = PackingInstance::new(vec![vec![1, 1]], 3, vec![1.0], vec![1.0; 3]);
        assert!(matches!(r, Err(ModelError::UnsortedRow { .. })));
        let r = PackingInstance::new(vec![vec![1, 0]], 3, vec![1.0], vec![1.0; 3]);
        assert!(matches!(r, Err(ModelError::UnsortedRow { .. })));
    }

    #[test]
    fn normalized_divides_and_records_scale() {
        let inst = PackingInstance::normalized(
            vec![vec![0, 1]],
            2,
            vec![1.0],
            vec![2.0, 4.0],
        )
        .unwrap();
        assert_eq!(inst.weights(), &[0.5, 1.0]);
        assert_eq!(inst.weight_scale(), 4.0);
        assert_eq!(inst.weight_floor(), 2.0);
        assert!(inst.weights().iter().all(|&c| c >= 1.0 / inst.weight_floor()));
    }

    #[test]
    fn column_index_inverts_rows() {
        let inst = two_row_instance();
        let cols = inst.cols();
        assert_eq!(cols[0], vec![0]);
        assert_eq!(cols[1], vec![0, 1]);
        assert_eq!(cols[2], vec![1]);
    }
}
