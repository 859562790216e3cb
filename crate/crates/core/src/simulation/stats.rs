use std::fmt::Write as _;

use statrs::function::erf::erfc;

use crate::config::parse_kv;

/// Pooled two-proportion z-test with a two-sided p-value.
///
/// `z` is positive when the first proportion is the larger one. A pooled
/// proportion of exactly 0 or 1 has no variance and yields `(0, 1)`.
pub fn two_proportion_ztest(clicks_a: u64, n_a: u64, clicks_b: u64, n_b: u64) -> (f64, f64) {
    assert!(n_a >= 1 && n_b >= 1, "both samples must be non-empty");
    let (na, nb) = (n_a as f64, n_b as f64);
    let pooled = (clicks_a + clicks_b) as f64 / (na + nb);
    if pooled <= 0.0 || pooled >= 1.0 {
        return (0.0, 1.0);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    let z = (clicks_a as f64 / na - clicks_b as f64 / nb) / se;
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    (z, p)
}

/// Per-arm engagement and the significance of their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftReport {
    pub impressions_control: u64,
    pub clicks_control: u64,
    pub impressions_treatment: u64,
    pub clicks_treatment: u64,
    pub ctr_control: f64,
    pub ctr_treatment: f64,
    /// `ctr_treatment / ctr_control - 1`; zero when control never clicked.
    pub relative_lift: f64,
    pub z_statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

const KEYS: [&str; 11] = [
    "impressions_control",
    "clicks_control",
    "impressions_treatment",
    "clicks_treatment",
    "ctr_control",
    "ctr_treatment",
    "relative_lift",
    "z_statistic",
    "p_value",
    "alpha",
    "significant",
];

impl LiftReport {
    /// Returns `None` if either arm has no impressions.
    pub fn from_counts(
        impressions_control: u64,
        clicks_control: u64,
        impressions_treatment: u64,
        clicks_treatment: u64,
        alpha: f64,
    ) -> Option<Self> {
        if impressions_control == 0 || impressions_treatment == 0 {
            return None;
        }
        let ctr_control = clicks_control as f64 / impressions_control as f64;
        let ctr_treatment = clicks_treatment as f64 / impressions_treatment as f64;
        let relative_lift = if ctr_control > 0.0 {
            ctr_treatment / ctr_control - 1.0
        } else {
            0.0
        };
        let (z_statistic, p_value) = two_proportion_ztest(
            clicks_treatment,
            impressions_treatment,
            clicks_control,
            impressions_control,
        );
        Some(Self {
            impressions_control,
            clicks_control,
            impressions_treatment,
            clicks_treatment,
            ctr_control,
            ctr_treatment,
            relative_lift,
            z_statistic,
            p_value,
            alpha,
            significant: p_value < alpha,
        })
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let values = [
            self.impressions_control.to_string(),
            self.clicks_control.to_string(),
            self.impressions_treatment.to_string(),
            self.clicks_treatment.to_string(),
            format!("{:.9}", self.ctr_control),
            format!("{:.9}", self.ctr_treatment),
            format!("{:.9}", self.relative_lift),
            format!("{:.9}", self.z_statistic),
            format!("{:.9}", self.p_value),
            self.alpha.to_string(),
            self.significant.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_kv(text: &str) -> Result<Self, String> {
        let kv = parse_kv(text).map_err(|e| e.to_string())?;
        let get = |k: &str| kv.get(k).ok_or_else(|| format!("missing `{k}`"));
        let int = |k: &str| get(k)?.parse::<u64>().map_err(|e| format!("{k}: {e}"));
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|e| format!("{k}: {e}"));
        Ok(Self {
            impressions_control: int("impressions_control")?,
            clicks_control: int("clicks_control")?,
            impressions_treatment: int("impressions_treatment")?,
            clicks_treatment: int("clicks_treatment")?,
            ctr_control: num("ctr_control")?,
            ctr_treatment: num("ctr_treatment")?,
            relative_lift: num("relative_lift")?,
            z_statistic: num("z_statistic")?,
            p_value: num("p_value")?,
            alpha: num("alpha")?,
            significant: get("significant")?.parse().map_err(|e| format!("significant: {e}"))?,
        })
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "A/B experiment report");
        let _ = writeln!(out, "  arm        impressions      clicks        ctr");
        let _ = writeln!(
            out,
            "  control    {:>11}  {:>10}  {:>9.6}",
            self.impressions_control, self.clicks_control, self.ctr_control
        );
        let _ = writeln!(
            out,
            "  treatment  {:>11}  {:>10}  {:>9.6}",
            self.impressions_treatment, self.clicks_treatment, self.ctr_treatment
        );
        let _ = writeln!(out, "  relative lift  {:+.4}%", self.relative_lift * 100.0);
        let _ = writeln!(out, "  z statistic    {:.4}", self.z_statistic);
        let _ = writeln!(out, "  p value        {:.6}", self.p_value);
        let _ = writeln!(
            out,
            "  significant at alpha={}: {}",
            self.alpha,
            if self.significant { "yes" } else { "no" }
        );
        out
    }
}
