use serde::Serialize;

/// Outcome of one numerical identity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    /// Number of cases examined (histories, basis elements, observables).
    pub checked: usize,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Hilbert-space dimensions involved, for the operator checks.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<usize>,
}

impl CheckReport {
    pub fn new(tolerance: f64) -> Self {
        CheckReport { checked: 0, max_abs_deviation: 0.0, tolerance, pass: false, dims: Vec::new() }
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Self {
        self.dims = dims;
        self
    }

    /// Records one deviation; NaN counts as an unbounded deviation.
    pub fn record(&mut self, deviation: f64) {
        let d = if deviation.is_nan() { f64::INFINITY } else { deviation };
        self.max_abs_deviation = self.max_abs_deviation.max(d);
    }

    pub fn merge(&mut self, other: &CheckReport) {
        self.checked += other.checked;
        self.record(other.max_abs_deviation);
    }

    pub fn finish(mut self) -> Self {
        self.pass = self.max_abs_deviation <= self.tolerance;
        self
    }
}
