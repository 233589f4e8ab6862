use serde::Deserialize;

use sepode::experiments::{Design, Distribution, McConfig, NoiseSpec, Pipeline, StepWeighting};
use sepode::ode::{self, OdeModel};
use sepode::smoothing::{default_bandwidth, kernel_by_name, BandwidthScale, SmootherConfig};
use sepode::Error;

pub const KEYS_HELP: &str = "\
CONFIG KEYS (TOML; unknown keys are rejected)
  [model]    name = builtin model (fitzhugh-nagumo, fitzhugh-nagumo-cubic-third,
                    lotka-volterra, exponential, duplicated-column)
             nu = true interest parameter | theta = true natural parameter
                  (theta only for identity-link models)
             xi = true initial state
  [design]   kind = \"grid\" | \"repeated\"
             horizon = T
             n = points on [0, T] (grid) | times = explicit list
             i, j = time points and replicates per point (repeated;
                    t_i = i T / I unless times is given)
  [noise]    distribution = \"gaussian\" | \"laplace\"
             variance = [per component] | sd = [per component]
  [pipeline] kind = \"smooth\" | \"step\"
             order, bandwidth (default n^-1/3),
             bandwidth_scale = \"normalized\" | \"absolute\",
             kernel = \"epanechnikov\" | \"triweight\", bootstrap = B (smooth)
             weighting = \"observation-times\" | \"lebesgue\" (step)
             refine = grid subdivisions (default 4)
  [run]      seed, replicates, error_horizon, ladder = [n, ...]";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub design: DesignSection,
    pub noise: Option<NoiseSection>,
    pub pipeline: Option<PipelineSection>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    pub nu: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum DesignKind {
    Grid,
    Repeated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub kind: DesignKind,
    pub horizon: f64,
    pub n: Option<usize>,
    pub times: Option<Vec<f64>>,
    pub i: Option<usize>,
    pub j: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "gaussian")]
    pub distribution: String,
    pub variance: Option<Vec<f64>>,
    pub sd: Option<Vec<f64>>,
}

fn gaussian() -> String {
    "gaussian".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum PipelineKind {
    Smooth,
    Step,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub kind: PipelineKind,
    pub order: Option<usize>,
    pub bandwidth: Option<f64>,
    pub bandwidth_scale: Option<String>,
    pub kernel: Option<String>,
    pub bootstrap: Option<usize>,
    pub weighting: Option<String>,
    pub refine: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub error_horizon: Option<f64>,
    pub ladder: Option<Vec<usize>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {}", e.message())))
    }

    pub fn model(&self) -> Result<OdeModel, Error> {
        ode::builtin(&self.model.name).ok_or_else(|| {
            invalid(format!("unknown model '{}'; builtins: {}", self.model.name, ode::BUILTIN_NAMES.join(", ")))
        })
    }

    /// True `nu`, from `nu` or (identity link only) `theta`.
    pub fn nu(&self, model: &OdeModel) -> Result<Vec<f64>, Error> {
        match (&self.model.nu, &self.model.theta) {
            (Some(nu), None) => Ok(nu.clone()),
            (None, Some(theta)) if model.has_identity_link() => Ok(theta.clone()),
            (None, Some(_)) => Err(invalid("model.theta is only accepted for identity-link models; give model.nu")),
            (Some(_), Some(_)) => Err(invalid("give model.nu or model.theta, not both")),
            (None, None) => Err(invalid("missing model.nu (or model.theta)")),
        }
    }

    pub fn xi(&self) -> Result<Vec<f64>, Error> {
        self.model.xi.clone().ok_or_else(|| invalid("missing model.xi"))
    }

    pub fn design(&self) -> Result<Design, Error> {
        let d = &self.design;
        let design = match d.kind {
            DesignKind::Grid => {
                if d.i.is_some() || d.j.is_some() {
                    return Err(invalid("design.i / design.j only apply to repeated designs"));
                }
                match (&d.times, d.n) {
                    (Some(t), None) => Design::Grid { times: t.clone(), horizon: d.horizon },
                    (None, Some(n)) => Design::uniform_grid(d.horizon, n),
                    _ => return Err(invalid("grid design needs exactly one of design.n, design.times")),
                }
            }
            DesignKind::Repeated => {
                if d.n.is_some() {
                    return Err(invalid("design.n only applies to grid designs"));
                }
                let j = d.j.ok_or_else(|| invalid("repeated design needs design.j"))?;
                match (&d.times, d.i) {
                    (Some(t), None) => Design::Repeated { times: t.clone(), replicates: j, horizon: d.horizon },
                    (None, Some(i)) => Design::uniform_repeated(d.horizon, i, j),
                    _ => return Err(invalid("repeated design needs exactly one of design.i, design.times")),
                }
            }
        };
        design.validate()?;
        Ok(design)
    }

    pub fn noise(&self, d: usize) -> Result<NoiseSpec, Error> {
        let n = self.noise.as_ref().ok_or_else(|| invalid("missing [noise] section"))?;
        let distribution = match n.distribution.as_str() {
            "gaussian" => Distribution::Gaussian,
            "laplace" => Distribution::Laplace,
            other => return Err(invalid(format!("unknown noise distribution '{other}'"))),
        };
        let variances = match (&n.variance, &n.sd) {
            (Some(v), None) => v.clone(),
            (None, Some(s)) => s.iter().map(|s| s * s).collect(),
            _ => return Err(invalid("noise needs exactly one of noise.variance, noise.sd")),
        };
        let variances = if variances.len() == 1 { vec![variances[0]; d] } else { variances };
        NoiseSpec::new(distribution, variances)
    }

    pub fn pipeline(&self, design: &Design) -> Result<Pipeline, Error> {
        let p = self.pipeline.as_ref().ok_or_else(|| invalid("missing [pipeline] section"))?;
        let refine = p.refine.unwrap_or(sepode::estimator::DEFAULT_REFINE);
        match p.kind {
            PipelineKind::Smooth => {
                if p.weighting.is_some() {
                    return Err(invalid("pipeline.weighting only applies to the step pipeline"));
                }
                let scale = match p.bandwidth_scale.as_deref() {
                    None | Some("normalized") => BandwidthScale::Normalized,
                    Some("absolute") => BandwidthScale::Absolute,
                    Some(other) => return Err(invalid(format!("unknown bandwidth_scale '{other}'"))),
                };
                let kernel_name = p.kernel.as_deref().unwrap_or("epanechnikov");
                let kernel =
                    kernel_by_name(kernel_name).ok_or_else(|| invalid(format!("unknown kernel '{kernel_name}'")))?;
                let bandwidth = match p.bandwidth {
                    Some(b) => b,
                    None => default_bandwidth(design.size(), None)?,
                };
                let smoother = SmootherConfig::new(p.order.unwrap_or(1), bandwidth, scale, kernel)?;
                Ok(Pipeline::Smooth { smoother, refine, bootstrap: p.bootstrap.unwrap_or(0) })
            }
            PipelineKind::Step => {
                if p.order.is_some() || p.bandwidth.is_some() || p.kernel.is_some() || p.bootstrap.is_some() {
                    return Err(invalid("smoother keys do not apply to the step pipeline"));
                }
                let weighting = match p.weighting.as_deref() {
                    None | Some("observation-times") => StepWeighting::ObservationTimes,
                    Some("lebesgue") => StepWeighting::Lebesgue,
                    Some(other) => return Err(invalid(format!("unknown step weighting '{other}'"))),
                };
                Ok(Pipeline::Step { weighting, refine })
            }
        }
    }

    /// Everything a Monte Carlo run needs, validated up front.
    pub fn mc_config(&self, seed: Option<u64>, replicates: Option<usize>) -> Result<McConfig, Error> {
        let model = self.model()?;
        let design = self.design()?;
        let cfg = McConfig {
            nu: self.nu(&model)?,
            xi: self.xi()?,
            noise: self.noise(model.dim())?,
            pipeline: self.pipeline(&design)?,
            design,
            replicates: replicates.or(self.run.replicates).unwrap_or(100),
            seed: seed.or(self.run.seed).unwrap_or(0),
            error_horizon: self.run.error_horizon,
            model,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FHN: &str = r#"
[model]
name = "fitzhugh-nagumo"
nu = [0.34, 0.2, 3.0]
xi = [0.0, 0.1]

[design]
kind = "grid"
horizon = 20.0
n = 201

[noise]
sd = [0.05, 0.05]

[pipeline]
kind = "smooth"
bandwidth_scale = "absolute"
bootstrap = 10
"#;

    #[test]
    fn parses_fhn() {
        let cfg = ConfigFile::parse(FHN).unwrap().mc_config(None, None).unwrap();
        assert_eq!(cfg.design.size(), 201);
        assert!((cfg.noise.variances[0] - 0.0025).abs() < 1e-15);
        let Pipeline::Smooth { smoother, bootstrap, .. } = cfg.pipeline else { panic!() };
        assert_eq!(bootstrap, 10);
        assert!((smoother.bandwidth - 201f64.powf(-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = FHN.replace("n = 201", "n = 201\nbogus = 1");
        assert!(ConfigFile::parse(&bad).is_err());
    }

    #[test]
    fn pipeline_design_mismatch_rejected() {
        let bad = FHN.replace("kind = \"smooth\"", "kind = \"step\"").replace("bootstrap = 10\n", "");
        let bad = bad.replace("bandwidth_scale = \"absolute\"\n", "");
        assert!(ConfigFile::parse(&bad).unwrap().mc_config(None, None).is_err());
    }
}
