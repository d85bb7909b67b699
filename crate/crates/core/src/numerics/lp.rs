//! Dense two-phase primal simplex.
//!
//! Problems are stated as `maximize c·x` subject to equality rows, `≤` rows and
//! optional per-variable lower bounds (variables without a bound are free).
//! Internally every variable is shifted or split so the tableau only carries
//! nonnegative columns. Pivoting uses Dantzig's rule and switches to Bland's
//! rule after a configurable number of pivots, which rules out cycling.

use super::NumericsError;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub equalities: Vec<(Vec<f64>, f64)>,
    pub inequalities: Vec<(Vec<f64>, f64)>,
    pub lower_bounds: Vec<Option<f64>>,
}

impl LpProblem {
    /// New problem maximizing `objective · x` over free variables.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            lower_bounds: vec![None; n],
        }
    }

    /// Minimizes `objective · x`; the reported value is the negated minimum.
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::maximize(objective.into_iter().map(|c| -c).collect())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn equal(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.equalities.push((coeffs, rhs));
        self
    }

    pub fn at_most(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.inequalities.push((coeffs, rhs));
        self
    }

    pub fn at_least(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.inequalities
            .push((coeffs.into_iter().map(|c| -c).collect(), -rhs));
        self
    }

    pub fn lower_bound(&mut self, var: usize, bound: f64) -> &mut Self {
        self.lower_bounds[var] = Some(bound);
        self
    }

    pub fn nonnegative(&mut self) -> &mut Self {
        self.lower_bounds.iter_mut().for_each(|b| *b = Some(0.0));
        self
    }

    fn validate(&self) -> Result<(), NumericsError> {
        let n = self.num_vars();
        if self.lower_bounds.len() != n {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} lower bounds for {} variables",
                self.lower_bounds.len(),
                n
            )));
        }
        for (row, rhs) in self.equalities.iter().chain(self.inequalities.iter()) {
            if row.len() != n {
                return Err(NumericsError::DimensionMismatch(format!(
                    "constraint row of length {} for {} variables",
                    row.len(),
                    n
                )));
            }
            if !rhs.is_finite() || row.iter().any(|c| !c.is_finite()) {
                return Err(NumericsError::NonFinite);
            }
        }
        if self.objective.iter().any(|c| !c.is_finite())
            || self.lower_bounds.iter().flatten().any(|b| !b.is_finite())
        {
            return Err(NumericsError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Optimal value; `-inf` when infeasible and `+inf` when unbounded.
    pub value: f64,
    pub optimizer: Option<Vec<f64>>,
}

impl LpOutcome {
    fn infeasible() -> Self {
        LpOutcome {
            status: LpStatus::Infeasible,
            value: f64::NEG_INFINITY,
            optimizer: None,
        }
    }

    fn unbounded() -> Self {
        LpOutcome {
            status: LpStatus::Unbounded,
            value: f64::INFINITY,
            optimizer: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Hard cap on the total number of pivots over both phases.
    pub max_pivots: usize,
    /// Number of Dantzig pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Feasibility / optimality tolerance.
    pub tolerance: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_pivots: 100_000,
            bland_after: 500,
            tolerance: 1e-9,
            pivot_tolerance: 1e-11,
        }
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome, NumericsError> {
    solve_lp_with(p, &SimplexOptions::default())
}

/// How an original variable maps onto tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shifted { col: usize, shift: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// Row-major, `width = cols + 1`, last entry of a row is the rhs.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Reduced costs (improving when positive) with `-objective` in the last slot.
    obj: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.data[r * w + c];
        {
            let row = &mut self.data[r * w..(r + 1) * w];
            row.iter_mut().for_each(|v| *v /= p);
            row[c] = 1.0;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for other in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = other[c];
            if f != 0.0 {
                for (o, pv) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * pv;
                }
                other[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (o, pv) in self.obj.iter_mut().zip(prow.iter()) {
                *o -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Loads the cost vector `cost` (maximize) as reduced costs for the current basis.
    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.width();
        let mut obj = vec![0.0; w];
        obj[..self.cols].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * w..(r + 1) * w];
                for (o, v) in obj.iter_mut().zip(row.iter()) {
                    *o -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            obj[b] = 0.0;
        }
        self.obj = obj;
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.cols]
    }

    /// Runs primal simplex on the loaded costs. `allowed` masks entering columns.
    fn optimize(&mut self, allowed: &[bool], opts: &SimplexOptions) -> Result<bool, NumericsError> {
        loop {
            if self.pivots >= opts.max_pivots {
                return Err(NumericsError::CycleLimitExceeded {
                    pivots: self.pivots,
                });
            }
            let bland = self.pivots >= opts.bland_after;
            let mut entering = None;
            let mut best = opts.tolerance;
            for (c, &ok) in allowed.iter().enumerate().take(self.cols) {
                if !ok {
                    continue;
                }
                let d = self.obj[c];
                if d > best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a > opts.pivot_tolerance {
                    let ratio = self.rhs(r).max(0.0) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            if ratio < lratio && !tie
                                || tie && self.basis[r] < self.basis[lr]
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

pub fn solve_lp_with(p: &LpProblem, opts: &SimplexOptions) -> Result<LpOutcome, NumericsError> {
    p.validate()?;
    let n = p.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    for lb in &p.lower_bounds {
        match lb {
            Some(shift) => {
                maps.push(VarMap::Shifted {
                    col: ncols,
                    shift: *shift,
                });
                ncols += 1;
            }
            None => {
                maps.push(VarMap::Split {
                    pos: ncols,
                    neg: ncols + 1,
                });
                ncols += 2;
            }
        }
    }
    let n_ineq = p.inequalities.len();
    let n_slack_start = ncols;
    ncols += n_ineq;

    // Rows in transformed coordinates: (coeffs over struct+slack, rhs, has_unit_slack)
    let total_rows = p.equalities.len() + n_ineq;
    let mut rows: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::with_capacity(total_rows);
    let mut push_row = |coeffs: &[f64], rhs: f64, slack: Option<usize>| {
        let mut row = vec![0.0; ncols];
        let mut rhs = rhs;
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shifted { col, shift } => {
                    row[col] += a;
                    rhs -= a * shift;
                }
                VarMap::Split { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        // Row equilibration; slack columns are rescaled along with their row.
        let scale = row.iter().fold(rhs.abs(), |m, v| m.max(v.abs()));
        if scale > 0.0 && scale.is_finite() {
            row.iter_mut().for_each(|v| *v /= scale);
            rhs /= scale;
        }
        if let Some(s) = slack {
            row[s] = 1.0;
        }
        let mut unit = slack;
        if rhs < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
            unit = None;
        }
        rows.push((row, rhs, unit));
    };
    for (coeffs, rhs) in &p.equalities {
        push_row(coeffs, *rhs, None);
    }
    for (k, (coeffs, rhs)) in p.inequalities.iter().enumerate() {
        push_row(coeffs, *rhs, Some(n_slack_start + k));
    }

    let n_art = rows.iter().filter(|r| r.2.is_none()).count();
    let art_start = ncols;
    let cols = ncols + n_art;
    let width = cols + 1;
    let mut data = vec![0.0; rows.len() * width];
    let mut basis = Vec::with_capacity(rows.len());
    let mut next_art = art_start;
    for (r, (row, rhs, unit)) in rows.iter().enumerate() {
        let dst = &mut data[r * width..(r + 1) * width];
        dst[..ncols].copy_from_slice(row);
        dst[cols] = *rhs;
        match unit {
            Some(s) => basis.push(*s),
            None => {
                dst[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau {
        data,
        rows: rows.len(),
        cols,
        basis,
        obj: vec![0.0; width],
        pivots: 0,
    };
    let rhs_scale = 1.0 + (0..tab.rows).fold(0.0f64, |m, r| m.max(tab.rhs(r)));

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        cost[art_start..].iter_mut().for_each(|c| *c = -1.0);
        tab.set_costs(&cost);
        let allowed = vec![true; cols];
        tab.optimize(&allowed, opts)?;
        if tab.objective_value() < -opts.tolerance * rhs_scale {
            return Ok(LpOutcome::infeasible());
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        let mut r = 0;
        while r < tab.rows {
            if tab.basis[r] >= art_start {
                let pick = (0..art_start)
                    .filter(|&c| tab.at(r, c).abs() > 1e-9)
                    .max_by(|&a, &b| tab.at(r, a).abs().total_cmp(&tab.at(r, b).abs()));
                match pick {
                    Some(c) => tab.pivot(r, c),
                    None => {
                        // Redundant row: drop it.
                        let w = tab.width();
                        tab.data.drain(r * w..(r + 1) * w);
                        tab.basis.remove(r);
                        tab.rows -= 1;
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    for (j, m) in maps.iter().enumerate() {
        let c = p.objective[j];
        match *m {
            VarMap::Shifted { col, .. } => cost[col] = c,
            VarMap::Split { pos, neg } => {
                cost[pos] = c;
                cost[neg] = -c;
            }
        }
    }
    tab.set_costs(&cost);
    let mut allowed = vec![true; cols];
    allowed[art_start..].iter_mut().for_each(|a| *a = false);
    if !tab.optimize(&allowed, opts)? {
        return Ok(LpOutcome::unbounded());
    }

    let mut z = vec![0.0; cols];
    for r in 0..tab.rows {
        z[tab.basis[r]] = tab.rhs(r).max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, shift } => shift + z[col],
            VarMap::Split { pos, neg } => z[pos] - z[neg],
        })
        .collect();
    let value = x.iter().zip(p.objective.iter()).map(|(a, b)| a * b).sum();
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        value,
        optimizer: Some(x),
    })
}
