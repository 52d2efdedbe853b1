//! JSON run configuration. Every key is optional; flags override it and
//! built-in defaults fill the rest.

use std::path::Path;

use romkit_core::interp::{InterpolatorConfig, InterpolatorKind};
use romkit_core::{Error, RankSpec, Result};
use serde::Deserialize;

use crate::{InterpArgs, KernelArg, RankArgs};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rank: Option<usize>,
    pub energy: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub interpolator: Option<InterpolatorConfig>,
    pub neighbors: Option<usize>,
    pub active_dim: Option<usize>,
    pub active_energy: Option<f64>,
    pub power: Option<f64>,
    pub weld: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::format(
                format!("{} line {}, column {}", path.display(), e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    pub fn rank_spec(&self, flags: &RankArgs) -> Result<RankSpec> {
        let pick = |rank: Option<usize>, energy: Option<f64>, source: &str| match (rank, energy) {
            (Some(_), Some(_)) => Err(Error::Validation(format!("{source} sets both rank and energy"))),
            (Some(r), None) => Ok(Some(RankSpec::Fixed(r))),
            (None, Some(t)) => Ok(Some(RankSpec::Energy(t))),
            (None, None) => Ok(None),
        };
        let from_flags = pick(flags.rank, flags.energy, "command line")?;
        let from_config = pick(self.rank, self.energy, "config file")?;
        Ok(from_flags.or(from_config).unwrap_or(RankSpec::Full))
    }

    /// Starts from the configured interpolator (or `default`), then applies flags.
    pub fn interpolator(&self, flags: &InterpArgs, default: InterpolatorConfig) -> Result<InterpolatorConfig> {
        let mut cfg = self.interpolator.unwrap_or(default);
        if let Some(kind) = flags.interp {
            cfg.kind = match kind {
                KernelArg::Idw => InterpolatorKind::Idw { power: 2.0 },
                KernelArg::RbfGaussian => InterpolatorKind::RbfGaussian { epsilon: 1.0 },
                KernelArg::RbfThinPlate => InterpolatorKind::RbfThinPlate,
                KernelArg::RbfMultiquadric => InterpolatorKind::RbfMultiquadric { epsilon: 1.0 },
            };
        }
        if let Some(e) = flags.epsilon {
            match &mut cfg.kind {
                InterpolatorKind::RbfGaussian { epsilon } | InterpolatorKind::RbfMultiquadric { epsilon } => *epsilon = e,
                _ => return Err(Error::Validation("--epsilon only applies to gaussian and multiquadric kernels".into())),
            }
        }
        if let Some(p) = flags.power {
            match &mut cfg.kind {
                InterpolatorKind::Idw { power } => *power = p,
                _ => return Err(Error::Validation("--power only applies to idw".into())),
            }
        }
        if let Some(l) = flags.regularization {
            cfg.regularization = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
