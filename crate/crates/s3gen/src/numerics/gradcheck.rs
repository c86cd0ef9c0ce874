use super::params::ParamStore;
use super::rng::Rng;
use super::tensor::NumericsError;

/// Outcome of a finite-difference comparison between analytic gradients
/// and central-difference estimates.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error per parameter tensor, in store order.
    pub per_param: Vec<(String, f64)>,
    /// Worst relative error over every checked coordinate.
    pub max_rel_err: f64,
    /// Parameter name and flat offset of the worst coordinate.
    pub worst: (String, usize),
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, err) in &self.per_param {
            writeln!(f, "  {name:<28} max_rel_err {err:.3e}")?;
        }
        writeln!(
            f,
            "  worst: {} [{}] rel_err {:.3e} over {} coords",
            self.worst.0, self.worst.1, self.max_rel_err, self.coords_checked
        )
    }
}

/// Compares `analytic` gradients against central differences of
/// `objective` for every coordinate of every parameter.
///
/// The objective is evaluated twice up front; the results must be
/// bit-identical, otherwise the comparison is meaningless and an error
/// is returned. Relative error uses max(|analytic|, |numeric|, 1e-8)
/// in the denominator so near-zero gradients do not blow up the ratio.
pub fn finite_diff_check<F>(
    params: &ParamStore,
    analytic: &ParamStore,
    objective: F,
    epsilon: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&ParamStore) -> f64,
{
    check_coords(params, analytic, objective, epsilon, None)
}

/// Like [`finite_diff_check`] but checks at most `max_per_param`
/// coordinates of each tensor, chosen by a seeded shuffle so the subset
/// is stable across runs. Used for large tensors where the exhaustive
/// sweep would dominate test time.
pub fn finite_diff_check_sampled<F>(
    params: &ParamStore,
    analytic: &ParamStore,
    objective: F,
    epsilon: f64,
    max_per_param: usize,
    seed: u64,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&ParamStore) -> f64,
{
    check_coords(params, analytic, objective, epsilon, Some((max_per_param, seed)))
}

fn check_coords<F>(
    params: &ParamStore,
    analytic: &ParamStore,
    objective: F,
    epsilon: f64,
    sample: Option<(usize, u64)>,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&ParamStore) -> f64,
{
    if !(1e-5..=1e-2).contains(&epsilon) {
        return Err(NumericsError::EpsilonOutOfRange(epsilon));
    }
    let f0a = objective(params);
    let f0b = objective(params);
    if f0a.to_bits() != f0b.to_bits() {
        return Err(NumericsError::NonDeterministic(f0a, f0b));
    }
    if !f0a.is_finite() {
        return Err(NumericsError::NonFinite("objective at base point".into()));
    }

    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut max_rel = 0.0f64;
    let mut worst = (String::new(), 0usize);
    let mut checked = 0usize;

    let names: Vec<String> = params.names().cloned().collect();
    for name in &names {
        let len = params.get(name).len();
        let grad = analytic.try_get(name)?;
        let coords: Vec<usize> = match sample {
            Some((k, seed)) if len > k => {
                let mut idx: Vec<usize> = (0..len).collect();
                let mut rng = Rng::new(seed ^ hash_name(name));
                rng.shuffle(&mut idx);
                idx.truncate(k);
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        };
        let mut param_max = 0.0f64;
        for &off in &coords {
            let old = work.get(name).data()[off];
            work.get_mut(name).data_mut()[off] = old + epsilon;
            let f_plus = objective(&work);
            work.get_mut(name).data_mut()[off] = old - epsilon;
            let f_minus = objective(&work);
            work.get_mut(name).data_mut()[off] = old;
            let numeric = (f_plus - f_minus) / (2.0 * epsilon);
            let a = grad.data()[off];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            checked += 1;
            if rel > param_max {
                param_max = rel;
            }
            if rel > max_rel {
                max_rel = rel;
                worst = (name.clone(), off);
            }
        }
        per_param.push((name.clone(), param_max));
    }

    Ok(GradCheckReport {
        per_param,
        max_rel_err: max_rel,
        worst,
        coords_checked: checked,
    })
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a; only used to give each tensor its own sampling stream.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
