//! Run configuration: one TOML file with a flat section per command,
//! overridable through `BLOWUPLAB_<SECTION>_<KEY>` environment variables.

use std::fmt;
use std::path::Path;

use blowuplab_core::manifolds::CenterGrid;
use blowuplab_core::passage::PassageConfig;
use blowuplab_core::pdecheck::LimitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "BLOWUPLAB_";

/// Section names, also the subcommand names.
pub const SECTIONS: [&str; 5] = ["coeffs", "passage", "sweep", "converge", "pdecheck"];

/// Invalid or unreadable configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub coeffs: CoeffsConfig,
    /// Single passage; also the base configuration of `sweep`.
    pub passage: PassageConfig,
    pub sweep: SweepConfig,
    pub converge: ConvergeConfig,
    pub pdecheck: PdecheckConfig,
}

/// Oracle-versus-closed-form grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffsConfig {
    pub k0_list: Vec<usize>,
    pub mu_list: Vec<f64>,
    pub c_list: Vec<f64>,
    pub a_list: Vec<f64>,
    /// Chart-K1 base points `a₁*`; empty skips the chart.
    pub a1_list: Vec<f64>,
    /// Pass threshold on the max relative deviation.
    pub rtol: f64,
}

impl Default for CoeffsConfig {
    fn default() -> Self {
        CoeffsConfig {
            k0_list: vec![1, 2, 3, 8],
            mu_list: vec![0.0, 0.5, 1.0, 2.0],
            c_list: vec![-0.1, -0.5],
            a_list: vec![0.5, 1.0],
            a1_list: vec![0.0, 0.2],
            rtol: 1e-8,
        }
    }
}

/// Passage grid on top of the `[passage]` base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mu_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub k0_list: Vec<usize>,
    /// Accepted exit-slope window `target ± window`.
    pub slope_target: f64,
    pub slope_window: f64,
    /// Max deviation of a per-`k0` slope from their mean.
    pub slope_stability: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mu_list: vec![0.5, 2.0],
            eps_list: vec![1e-3, 1e-4, 1e-5],
            k0_list: vec![4, 8, 16],
            slope_target: 0.25,
            slope_window: 0.1,
            slope_stability: 0.02,
        }
    }
}

/// Manifold convergence against a reference truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub k0_list: Vec<usize>,
    pub k_ref: usize,
    pub c: f64,
    pub mu: f64,
    pub a: f64,
    pub grid_n: usize,
    pub v1_half_width: f64,
    pub sigma_max: f64,
    pub eps_max: f64,
    /// Draw the mode pattern from the seed instead of `(−1)^k`.
    pub random_theta: bool,
    pub min_decay_exponent: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        let g = CenterGrid::default();
        ConvergeConfig {
            k0_list: vec![2, 4, 8, 16, 32],
            k_ref: blowuplab_core::manifolds::K_REF,
            c: -0.1,
            mu: 0.5,
            a: 1.0,
            grid_n: g.n,
            v1_half_width: g.v1_half_width,
            sigma_max: g.sigma_max,
            eps_max: g.eps_max,
            random_theta: false,
            min_decay_exponent: 1.0,
        }
    }
}

/// Planar-limit comparison plus the modal identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdecheckConfig {
    pub a: f64,
    pub mu: f64,
    pub eps_list: Vec<f64>,
    pub k0: usize,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub u0: f64,
    pub v0: f64,
    pub perturbation: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Modal identity over `k0 = 1..=modal_k0_max`.
    pub modal_k0_max: usize,
    /// Random chart-K1 points per `k0`.
    pub modal_samples: usize,
    pub modal_tol: f64,
    /// Bound for the constant first-mode data at `r₂ = 0`.
    pub exact_tol: f64,
}

impl Default for PdecheckConfig {
    fn default() -> Self {
        let l = LimitConfig::default();
        PdecheckConfig {
            a: l.a,
            mu: l.mu,
            eps_list: l.eps_list,
            k0: l.k0,
            t_end: l.t_end,
            snapshots: l.snapshots,
            u0: l.u0,
            v0: l.v0,
            perturbation: l.perturbation,
            rtol: l.rtol,
            atol: l.atol,
            modal_k0_max: 12,
            modal_samples: 10,
            modal_tol: 1e-10,
            exact_tol: 1e-8,
        }
    }
}

impl PdecheckConfig {
    pub fn limit(&self) -> LimitConfig {
        LimitConfig {
            a: self.a,
            mu: self.mu,
            eps_list: self.eps_list.clone(),
            k0: self.k0,
            t_end: self.t_end,
            snapshots: self.snapshots.clone(),
            u0: self.u0,
            v0: self.v0,
            perturbation: self.perturbation,
            rtol: self.rtol,
            atol: self.atol,
        }
    }
}

/// Parses an override value as a TOML value, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `BLOWUPLAB_<SECTION>_<KEY>=value` pairs to a parsed table.
pub fn apply_overrides(
    table: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<(), ConfigError> {
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let rest = rest.to_ascii_lowercase();
        let Some(section) = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_"))) else {
            return Err(ConfigError(format!("{name}: unknown section")));
        };
        let key = &rest[section.len() + 1..];
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sec) = entry else {
            return Err(ConfigError(format!("[{section}] is not a table")));
        };
        sec.insert(key.to_string(), parse_value(&raw));
    }
    Ok(())
}

impl RunConfig {
    /// Reads `path` (defaults when absent) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_parts(&text, std::env::vars())
    }

    pub fn from_parts(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        apply_overrides(&mut table, vars)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))
    }
}

/// SHA-256 of the JSON form of the effective settings of one command.
pub fn config_hash<T: Serialize>(section: &T, seed: u64, tol: Option<f64>) -> String {
    let payload = serde_json::json!({ "section": section, "seed": seed, "tol": tol });
    Sha256::digest(payload.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::from_parts("", env(&[])).unwrap(), RunConfig::default());
    }

    #[test]
    fn file_values_and_overrides() {
        let text = "[passage]\nmu = 2.0\neps = 1e-3\n[sweep]\nk0_list = [4]\n";
        let cfg = RunConfig::from_parts(
            text,
            env(&[
                ("BLOWUPLAB_PASSAGE_EPS", "1e-5"),
                ("BLOWUPLAB_SWEEP_MU_LIST", "[0.5, 3.0]"),
                ("BLOWUPLAB_PASSAGE_SCALING", "fixed_a"),
                ("HOME", "/root"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.passage.mu, 2.0);
        assert_eq!(cfg.passage.eps, 1e-5);
        assert_eq!(cfg.sweep.mu_list, vec![0.5, 3.0]);
        assert_eq!(cfg.sweep.k0_list, vec![4]);
        assert_eq!(cfg.passage.scaling, blowuplab_core::passage::Scaling::FixedA);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(RunConfig::from_parts("[coeffs]\nbogus = 1\n", env(&[])).is_err());
        assert!(RunConfig::from_parts("", env(&[("BLOWUPLAB_NOPE_X", "1")])).is_err());
    }

    #[test]
    fn hash_depends_on_settings_and_seed() {
        let a = config_hash(&CoeffsConfig::default(), 0, None);
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&CoeffsConfig::default(), 0, None));
        assert_ne!(a, config_hash(&CoeffsConfig::default(), 1, None));
        assert_ne!(a, config_hash(&CoeffsConfig::default(), 0, Some(1e-6)));
    }
}
