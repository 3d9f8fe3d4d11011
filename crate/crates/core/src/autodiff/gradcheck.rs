use serde::Serialize;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step `h`.
    pub step: f64,
    /// Pass threshold on the per-group max relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so that gradients that
    /// are zero up to roundoff do not register as infinite relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub elements: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub step: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_err)
            .fold(0.0, f64::max)
    }
}

fn evaluate<F>(params: &[(String, Tensor)], f: &F) -> Result<(Tape, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|(name, t)| tape.param(name.clone(), t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    Ok((tape, loss))
}

/// Compares tape gradients of the scalar program `f` against central
/// differences `(f(p+h) - f(p-h)) / 2h`, element by element.
pub fn grad_check<F>(
    params: &[(String, Tensor)],
    f: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, loss) = evaluate(params, &f)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = grads.into_named().into_iter().map(|(_, g)| g).collect();
    compare_gradients(params, f, &analytic, opts)
}

/// Checks a supplied set of gradients (one per parameter) against central
/// differences of `f`.
pub fn compare_gradients<F>(
    params: &[(String, Tensor)],
    f: F,
    analytic: &[Tensor],
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut work: Vec<(String, Tensor)> = params.to_vec();
    let mut groups = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut report = GroupReport {
            name: params[pi].0.clone(),
            elements: grad.len(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            passed: true,
        };
        for e in 0..grad.len() {
            let orig = work[pi].1.data()[e];
            work[pi].1.data_mut()[e] = orig + opts.step;
            let (t, l) = evaluate(&work, &f)?;
            let plus = t.value(l).item();
            work[pi].1.data_mut()[e] = orig - opts.step;
            let (t, l) = evaluate(&work, &f)?;
            let minus = t.value(l).item();
            work[pi].1.data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.data()[e];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_err || e == 0 {
                report.max_rel_err = rel;
                report.worst_index = e;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        report.passed = report.max_rel_err < opts.tol;
        groups.push(report);
    }
    Ok(GradCheckReport {
        tol: opts.tol,
        step: opts.step,
        groups,
    })
}
