use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use swarmcvt::gaussian_ot::GmmRecord;
use swarmcvt::gcvt::GcvtParams;
use swarmcvt::{Gmm, PlanParams, Polygon, Workspace};

use crate::error::{CliError, CliResult};

pub const SCENARIO_SCHEMA: &str = "swarmcvt.scenario/1";

/// Bundled 20 × 16 km scenario with reconstructed obstacles.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub workspace: WorkspaceSpec,
    pub initial: GmmRecord,
    pub target: GmmRecord,
    #[serde(default)]
    pub params: ParamSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSpec {
    /// km.
    pub width: f64,
    /// km.
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_h: Option<f64>,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
}

/// Optional parameters; omitted ones take the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_th: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lloyd_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lloyd_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_p: Option<f64>,
}

pub const DEFAULT_GRID_H: f64 = 0.1;
pub const DEFAULT_COMPONENTS: usize = 500;
pub const DEFAULT_ROBOTS: usize = 400;

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub grid_h: f64,
    pub plan: PlanParams,
    pub robots: usize,
    /// `"field = value"` for every default that was filled in.
    pub defaults_applied: Vec<String>,
}

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_toml()?).map_err(|e| CliError::io(path, e))
    }

    pub fn validate(&self) -> CliResult<()> {
        let invalid = |field: &str, msg: String| Err(CliError::Validation(format!("{field}: {msg}")));
        if self.schema != SCENARIO_SCHEMA {
            return invalid("schema", format!("'{}' is not '{SCENARIO_SCHEMA}'", self.schema));
        }
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                invalid(field, format!("{v} must be positive"))
            }
        };
        positive("workspace.width", self.workspace.width)?;
        positive("workspace.height", self.workspace.height)?;
        if let Some(h) = self.workspace.grid_h {
            positive("workspace.grid_h", h)?;
        }
        let p = &self.params;
        for (field, v) in [
            ("params.d_th", p.d_th),
            ("params.nu", p.nu),
            ("params.rho_max", p.rho_max),
            ("params.kappa", p.kappa),
            ("params.dt", p.dt),
            ("params.lloyd_tol", p.lloyd_tol),
            ("params.lambda_p", p.lambda_p),
        ] {
            if let Some(v) = v {
                positive(field, v)?;
            }
        }
        for (field, v) in [("params.eta_b", p.eta_b), ("params.eta_v", p.eta_v)] {
            if let Some(v) = v {
                if !(v > 0.0 && v < 1.0) {
                    return invalid(field, format!("{v} not in (0, 1)"));
                }
            }
        }
        for (field, v) in [
            ("params.components", p.components),
            ("params.robots", p.robots),
            ("params.lloyd_iters", p.lloyd_iters),
        ] {
            if v == Some(0) {
                return invalid(field, "must be positive".into());
            }
        }
        Gmm::try_from(&self.initial).map_err(|e| CliError::Validation(format!("initial: {e}")))?;
        Gmm::try_from(&self.target).map_err(|e| CliError::Validation(format!("target: {e}")))?;
        Ok(())
    }

    pub fn initial_gmm(&self) -> CliResult<Gmm> {
        Ok(Gmm::try_from(&self.initial)?)
    }

    pub fn target_gmm(&self) -> CliResult<Gmm> {
        Ok(Gmm::try_from(&self.target)?)
    }

    pub fn workspace(&self) -> CliResult<Workspace> {
        let h = self.workspace.grid_h.unwrap_or(DEFAULT_GRID_H);
        Ok(Workspace::new(self.workspace.width, self.workspace.height, self.workspace.obstacles.clone(), h)?)
    }

    /// Fills omitted parameters, overriding `K` and the seed when given.
    pub fn resolve(&self, components: Option<usize>, seed: u64) -> Resolved {
        let mut applied = Vec::new();
        let gd = GcvtParams::default();
        let pd = PlanParams::default();
        macro_rules! pick {
            ($field:ident, $default:expr) => {
                self.params.$field.unwrap_or_else(|| {
                    applied.push(format!("{} = {}", stringify!($field), $default));
                    $default
                })
            };
        }
        let grid_h = self.workspace.grid_h.unwrap_or_else(|| {
            applied.push(format!("grid_h = {DEFAULT_GRID_H}"));
            DEFAULT_GRID_H
        });
        let k = match components {
            Some(k) => k,
            None => pick!(components, DEFAULT_COMPONENTS),
        };
        let gcvt = GcvtParams {
            k,
            eta_b: pick!(eta_b, gd.eta_b),
            eta_v: pick!(eta_v, gd.eta_v),
            rho_max: pick!(rho_max, gd.rho_max),
            kappa: pick!(kappa, gd.kappa),
            lloyd_iters: pick!(lloyd_iters, gd.lloyd_iters),
            lloyd_tol: pick!(lloyd_tol, gd.lloyd_tol),
            seed,
        };
        let plan = PlanParams {
            gcvt,
            d_th: pick!(d_th, pd.d_th),
            nu: pick!(nu, pd.nu),
            dt: pick!(dt, pd.dt),
            lambda_p: pick!(lambda_p, pd.lambda_p),
        };
        let robots = pick!(robots, DEFAULT_ROBOTS);
        Resolved { grid_h, plan, robots, defaults_applied: applied }
    }

    /// Copy pinned to one run: `K` and the seed list made explicit.
    pub fn pinned(&self, k: usize, seed: u64) -> Self {
        let mut s = self.clone();
        s.params.components = Some(k);
        s.seeds = vec![seed];
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_defaults_to_500_components() {
        let s = Scenario::bundled();
        let r = s.resolve(None, 0);
        assert_eq!(r.plan.gcvt.k, 500);
        assert_eq!(r.plan.gcvt.eta_b, 0.05);
        assert_eq!(r.plan.d_th, 3.0);
        assert_eq!(s.workspace.width, 20.0);
        assert_eq!(s.workspace.height, 16.0);
    }

    #[test]
    fn out_of_range_threshold_names_the_field() {
        let text = DEFAULT_SCENARIO.replace("eta_b = 0.05", "eta_b = 1.5");
        match Scenario::parse(&text) {
            Err(CliError::Validation(m)) => assert!(m.contains("params.eta_b"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_location() {
        let text = DEFAULT_SCENARIO.replace("[params]", "[params]\nspeed = 3.0");
        match Scenario::parse(&text) {
            Err(CliError::Parse(m)) => assert!(m.contains("speed") && m.contains("line"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_then_load_is_identity() {
        let s = Scenario::bundled();
        assert_eq!(Scenario::parse(&s.to_toml().unwrap()).unwrap(), s);
    }

    #[test]
    fn omitted_params_are_recorded() {
        let mut s = Scenario::bundled();
        s.params = ParamSpec::default();
        let r = s.resolve(Some(40), 3);
        assert_eq!(r.plan.gcvt.k, 40);
        assert_eq!(r.plan.gcvt.seed, 3);
        assert!(r.defaults_applied.iter().any(|d| d.starts_with("kappa")));
        assert!(!r.defaults_applied.iter().any(|d| d.starts_with("components")));
    }
}
