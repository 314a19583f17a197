//! Plain-text `key = value` serialization of analysis results.

use std::fmt::Write;

use super::lipschitz::LipschitzEstimate;
use super::monotone::MonotoneEstimate;
use super::robustness::RobustnessReport;

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

fn fmt_array(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    format!("[{}]", inner.join(", "))
}

pub trait ToKeyValue {
    fn to_key_value(&self) -> String;
}

impl ToKeyValue for LipschitzEstimate {
    fn to_key_value(&self) -> String {
        let mut s = String::new();
        writeln!(s, "value_squared = {}", fmt_f64(self.value_squared)).unwrap();
        writeln!(s, "value = {}", fmt_f64(self.value)).unwrap();
        writeln!(s, "ascent_steps = {}", self.ascent_steps).unwrap();
        writeln!(s, "perturbation_norm = {}", fmt_f64(self.perturbation.norm())).unwrap();
        s
    }
}

impl ToKeyValue for MonotoneEstimate {
    fn to_key_value(&self) -> String {
        let mut s = String::new();
        writeln!(s, "m_hat = {}", fmt_f64(self.m_hat)).unwrap();
        writeln!(s, "num_pairs = {}", self.num_pairs).unwrap();
        writeln!(s, "f_lipschitz = {}", fmt_f64(self.f_lipschitz)).unwrap();
        writeln!(s, "h_lipschitz = {}", fmt_f64(self.h_lipschitz)).unwrap();
        s
    }
}

impl ToKeyValue for RobustnessReport {
    fn to_key_value(&self) -> String {
        let mut s = String::new();
        writeln!(s, "bound_factor = {}", fmt_f64(self.bound_factor)).unwrap();
        writeln!(s, "m_hat = {}", fmt_f64(self.m_hat)).unwrap();
        writeln!(s, "max_ratio = {}", fmt_f64(self.max_ratio)).unwrap();
        writeln!(s, "violated = {}", self.violated).unwrap();
        writeln!(s, "skipped_trials = {}", self.skipped_trials).unwrap();
        writeln!(s, "nonconverged_trials = {}", self.nonconverged_trials).unwrap();
        writeln!(s, "empirical_ratios = {}", fmt_array(&self.empirical_ratios)).unwrap();
        s
    }
}

/// Parses the `key = value` lines produced by [`ToKeyValue`].
pub fn parse_key_value(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robustness_report_serializes() {
        let r = RobustnessReport {
            bound_factor: f64::INFINITY,
            m_hat: 0.5,
            empirical_ratios: vec![0.25, 0.5],
            max_ratio: 0.5,
            violated: false,
            skipped_trials: 1,
            nonconverged_trials: 0,
        };
        let kv = parse_key_value(&r.to_key_value());
        assert!(kv.contains(&("bound_factor".into(), "inf".into())));
        assert!(kv.contains(&("violated".into(), "false".into())));
        assert!(kv.contains(&("empirical_ratios".into(), "[2.5e-1, 5e-1]".into())));
    }
}
