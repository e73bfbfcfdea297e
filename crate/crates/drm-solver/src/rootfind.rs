//! Safeguarded Newton iteration for strictly decreasing scalar functions
//! with at most one positive root.
//!
//! The caller supplies a warm-start hint. A bracket `[lo, hi]` with
//! `f(lo) >= 0 >= f(hi)` is grown from the hint by doubling or halving;
//! Newton steps that stay inside the bracket are taken as-is, anything else
//! falls back to the bracket's geometric midpoint (roots routinely span
//! many decades, so arithmetic midpoints would stall).
//!
//! When no sign change appears within the bracket budget or the
//! representable range, the search reports where it stopped instead of
//! failing: the caller treats that probe as a partial step and absorbs it
//! into log-domain offsets before trying again.

/// Iteration controls. `rel_tol` stops on the relative change of adjacent
/// iterates; `abs_residual_floor` additionally stops once `|f|` is
/// negligible, so flat residual plateaus terminate.
#[derive(Debug, Clone)]
pub struct NewtonCfg {
    pub rel_tol: f64,
    pub abs_residual_floor: f64,
    pub max_iters: usize,
    /// Budget of doublings/halvings when growing the initial bracket.
    pub max_bracket_steps: usize,
}

impl Default for NewtonCfg {
    fn default() -> Self {
        Self { rel_tol: 1e-5, abs_residual_floor: 0.0, max_iters: 100, max_bracket_steps: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootOutcome {
    Converged {
        root: f64,
        /// Function evaluations spent (bracketing plus Newton/bisection).
        iters: usize,
    },
    /// No sign change within the bracket budget or the representable range;
    /// `at` is the furthest probe reached and `f` still has the hint's sign
    /// there. Moving to `at` is a valid partial step toward the root (if one
    /// exists at all beyond numeric range).
    Saturated { at: f64, iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RootError {
    #[error("function evaluated to a non-finite value")]
    NonFinite,

    #[error("iteration budget exhausted before the tolerance was met")]
    IterationBudget,
}

/// Smallest and largest positive iterates ever evaluated.
pub const X_MIN: f64 = 1e-300;
pub const X_MAX: f64 = 1e300;

/// Finds the positive root of a strictly decreasing `f`, given `f` and its
/// derivative. Returns the final iterate after the stopping rule fires; the
/// residual there is fresh (the root was just evaluated).
pub fn newton_root(
    f: impl Fn(f64) -> (f64, f64),
    hint: f64,
    cfg: &NewtonCfg,
) -> Result<RootOutcome, RootError> {
    let mut evals = 0usize;
    let mut eval = |x: f64| -> Result<(f64, f64), RootError> {
        let (fx, dfx) = f(x);
        evals += 1;
        if fx.is_nan() || dfx.is_nan() {
            return Err(RootError::NonFinite);
        }
        Ok((fx, dfx))
    };

    let start = hint.clamp(X_MIN, X_MAX);
    let (f0, _) = eval(start)?;
    if f0 == 0.0 {
        return Ok(RootOutcome::Converged { root: start, iters: evals });
    }

    // Grow the bracket away from the hint. f decreasing: positive values
    // lie left of the root, negative values right of it.
    let (mut lo, mut hi, mut x, mut fx, mut dfx);
    if f0 > 0.0 {
        lo = start;
        let mut probe = start;
        let mut steps = 0usize;
        loop {
            if probe >= X_MAX || steps >= cfg.max_bracket_steps {
                return Ok(RootOutcome::Saturated { at: probe, iters: evals });
            }
            steps += 1;
            probe = (probe * 2.0).min(X_MAX);
            let (fp, dp) = eval(probe)?;
            if fp <= 0.0 {
                hi = probe;
                x = probe;
                fx = fp;
                dfx = dp;
                break;
            }
            lo = probe;
        }
    } else {
        hi = start;
        let mut probe = start;
        let mut steps = 0usize;
        loop {
            if probe <= X_MIN || steps >= cfg.max_bracket_steps {
                return Ok(RootOutcome::Saturated { at: probe, iters: evals });
            }
            steps += 1;
            probe = (probe * 0.5).max(X_MIN);
            let (fp, dp) = eval(probe)?;
            if fp >= 0.0 {
                lo = probe;
                x = probe;
                fx = fp;
                dfx = dp;
                break;
            }
            hi = probe;
        }
    }
    if fx == 0.0 {
        return Ok(RootOutcome::Converged { root: x, iters: evals });
    }

    for _ in 0..cfg.max_iters {
        // tighten the bracket with the current sign
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }

        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            // geometric midpoint; sqrt factors avoid overflow of lo * hi
            let mid = lo.sqrt() * hi.sqrt();
            if mid > lo && mid < hi {
                mid
            } else {
                let mid = lo + 0.5 * (hi - lo);
                if mid > lo && mid < hi {
                    mid
                } else {
                    // bracket has collapsed to adjacent floats
                    return Ok(RootOutcome::Converged { root: x, iters: evals });
                }
            }
        };

        let rel_change = (next - x).abs() / next.abs().max(X_MIN);
        let (fn_, dn) = eval(next)?;
        x = next;
        fx = fn_;
        dfx = dn;
        if rel_change <= cfg.rel_tol || fx.abs() <= cfg.abs_residual_floor {
            return Ok(RootOutcome::Converged { root: x, iters: evals });
        }
    }
    Err(RootError::IterationBudget)
}
