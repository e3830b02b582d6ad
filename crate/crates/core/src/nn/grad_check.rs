use super::Tensor2;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// (tensor index, row, col) of the worst entry.
    pub worst: (usize, usize, usize),
    pub checked: usize,
}

/// `|a - n| / (|a| + |n| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8)
}

/// Compare analytic gradients of the scalar `f` with central differences of
/// step `h`, on every entry of every tensor in `inputs`.
pub fn grad_check<F>(f: F, inputs: &[Tensor2], analytic: &[Tensor2], h: f64) -> GradCheck
where
    F: Fn(&[Tensor2]) -> f64,
{
    let entries: Vec<(usize, usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(t, x)| (0..x.nrows()).flat_map(move |r| (0..x.ncols()).map(move |c| (t, r, c))))
        .collect();
    grad_check_entries(f, inputs, analytic, h, &entries)
}

/// Like [`grad_check`] but only on the listed `(tensor, row, col)` entries.
pub fn grad_check_entries<F>(
    f: F,
    inputs: &[Tensor2],
    analytic: &[Tensor2],
    h: f64,
    entries: &[(usize, usize, usize)],
) -> GradCheck
where
    F: Fn(&[Tensor2]) -> f64,
{
    assert_eq!(inputs.len(), analytic.len(), "one analytic gradient per input");
    let mut work = inputs.to_vec();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0, 0),
        checked: 0,
    };
    for &(t, r, c) in entries {
        let orig = work[t][[r, c]];
        work[t][[r, c]] = orig + h;
        let up = f(&work);
        work[t][[r, c]] = orig - h;
        let down = f(&work);
        work[t][[r, c]] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[t][[r, c]], numeric);
        if err > out.max_rel_error || err.is_nan() {
            out.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            out.worst = (t, r, c);
        }
        out.checked += 1;
    }
    out
}
