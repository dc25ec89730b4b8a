use super::Param;

/// Something with trainable parameters and a scalar objective.
pub trait Differentiable {
    fn params_mut(&mut self) -> Vec<&mut Param>;
    /// Objective at the current parameter values, without touching gradients.
    fn objective(&mut self) -> f64;
    /// Zeroes gradients, then evaluates the objective and accumulates
    /// analytic gradients into every parameter.
    fn objective_and_gradient(&mut self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f32,
    /// Maximum relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so that gradients
    /// dominated by `f32` rounding noise are compared absolutely.
    pub floor: f64,
    /// An entry whose forward and backward one-sided differences disagree by
    /// more than this fraction of the gradient scale straddles a ReLU or
    /// max-pool kink; it is counted as non-smooth instead of compared.
    pub kink_ratio: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-3,
            floor: 0.1,
            kink_ratio: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries skipped because the probe interval crosses a kink.
    pub nonsmooth: usize,
    pub failures: Vec<GradMismatch>,
    pub worst: Option<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares every analytic gradient entry with a central finite difference.
pub fn gradient_check<F: Differentiable + ?Sized>(f: &mut F, config: GradCheckConfig) -> GradCheckReport {
    let centre = f.objective_and_gradient();
    let analytic: Vec<Vec<f32>> = f.params_mut().iter().map(|p| p.grad.values.clone()).collect();
    let names: Vec<String> = f.params_mut().iter().map(|p| p.name.clone()).collect();

    let mut report = GradCheckReport::default();
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = f.params_mut()[pi].value.values[i];
            f.params_mut()[pi].value.values[i] = original + config.step;
            let up = f.objective();
            f.params_mut()[pi].value.values[i] = original - config.step;
            let down = f.objective();
            f.params_mut()[pi].value.values[i] = original;

            let h = config.step as f64;
            let numeric = (up - down) / (2.0 * h);
            let a = a as f64;
            let denom = a.abs().max(numeric.abs()).max(config.floor);
            let forward = (up - centre) / h;
            let backward = (centre - down) / h;
            if (forward - backward).abs() > config.kink_ratio * denom {
                report.nonsmooth += 1;
                continue;
            }
            let rel = (a - numeric).abs() / denom;
            let entry = GradMismatch {
                param: names[pi].clone(),
                index: i,
                analytic: a,
                numeric,
                relative_error: rel,
            };
            report.checked += 1;
            if report.worst.as_ref().map_or(true, |w| rel > w.relative_error) {
                report.worst = Some(entry.clone());
            }
            if !(rel <= config.tolerance) {
                report.failures.push(entry);
            }
        }
    }
    report
}
