//! Run configuration: a TOML file with named sections and key = value
//! entries. SI values come in here; everything leaves dimensionless.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use squidw_core::dynamics::IntegratorConfig;
use squidw_core::model::{ModelParams, PulseShape};
use squidw_core::squid::{
    coupling_constants, solve_flux_levels, CouplingGeometry, FluxGrid, SquidSpec,
};

use crate::units::Quantity;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: Option<DeviceSection>,
    pub model: ModelSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
    pub mc: Option<McSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// Junction capacitance (F).
    pub capacitance: f64,
    /// Loop inductance (H).
    pub inductance: f64,
    /// Critical current (A); alternative to josephson_energy.
    pub critical_current: Option<f64>,
    /// Josephson energy (J); alternative to critical_current.
    pub josephson_energy: Option<f64>,
    /// Bias flux (weber, or "x phi0").
    pub bias_flux: Quantity,
    pub grid: GridSection,
    pub geometry: GeometrySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub phi_min: Quantity,
    pub phi_max: Quantity,
    pub num_points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// Cavity frequency (rad/s).
    pub cavity_frequency: f64,
    /// Cavity overlap integral (T m^2 per unit mode amplitude).
    pub cavity_overlap: f64,
    #[serde(default = "default_ratio")]
    pub drive_overlap_ratio: f64,
}

fn default_ratio() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    /// Reference coupling; required unless [device] is present. SI only.
    pub g: Option<Quantity>,
    pub gamma: Quantity,
    pub kappa: Quantity,
    /// Per-qubit couplings in units of g; defaults to all 1.
    pub couplings: Option<Vec<f64>>,
    /// Dark-state constant K.
    pub dark_k: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    /// "gaussian" (default) or "piecewise".
    pub shape: Option<String>,
    pub amplitude: Option<Quantity>,
    pub width: Option<Quantity>,
    pub center: Option<Quantity>,
    /// Piecewise knots as (time in 1/g, envelope in g) pairs.
    pub knots: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// "generate" (default), "prepare", or "full".
    pub mode: Option<String>,
    pub prep_duration: Option<Quantity>,
    pub gen_duration: Option<Quantity>,
    /// Peak of the mirrored preparation rise (units of g rate).
    pub prep_amplitude: Option<Quantity>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: Option<Quantity>,
    pub norm_check_interval: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Integration steps between recorded samples.
    pub sample_stride: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub trajectories: usize,
}

/// Stage selection for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Prepare,
    Generate,
    Full,
}

/// Everything dimensionless and ready to run.
#[derive(Debug)]
pub struct Setup {
    /// Reference coupling in SI (s^-1), for unit conversion on the way out.
    pub g_si: f64,
    pub params: ModelParams,
    pub pulse: PulseShape,
    pub mode: Mode,
    pub prep_duration: f64,
    pub gen_duration: f64,
    pub prep_amplitude: f64,
    pub integrator: IntegratorConfig,
    pub mc_trajectories: Option<usize>,
    /// Present when the config carried a [device] section.
    pub device: Option<DeviceSetup>,
}

#[derive(Debug)]
pub struct DeviceSetup {
    pub spec: SquidSpec,
    pub grid: FluxGrid,
    pub geometry: CouplingGeometry,
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let config: RunConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    Ok(config)
}

impl RunConfig {
    /// Resolve units and derive g from the device section if necessary.
    pub fn setup(&self) -> Result<Setup> {
        let device = self
            .device
            .as_ref()
            .map(|d| d.build())
            .transpose()
            .context("invalid [device] section")?;

        let g_si = match (&self.model.g, &device) {
            (Some(q), _) => {
                let (value, unit) = match q {
                    Quantity::Bare(_) => (None, None),
                    Quantity::Tagged(text) => {
                        let mut parts = text.split_whitespace();
                        let v = parts.next().and_then(|p| p.parse::<f64>().ok());
                        (v, parts.next())
                    }
                };
                match (value, unit) {
                    (Some(v), Some("s^-1")) | (Some(v), Some("1/s")) => v,
                    _ => bail!("[model.g] must be given in SI, e.g. \"1.8e8 s^-1\""),
                }
            }
            (None, Some(device)) => {
                let levels = solve_flux_levels(&device.spec, &device.grid, 3)
                    .context("flux-level solve for the [device] section failed")?;
                let coupling = coupling_constants(&levels, &device.geometry, &device.spec)?;
                let g = coupling.g.abs();
                if !(g > 0.0) {
                    bail!("[device] yields zero cavity coupling; cannot set the reference g");
                }
                g
            }
            (None, None) => bail!("either [model] g or a [device] section must be present"),
        };

        let n = self.model.n;
        if n < 1 {
            bail!("[model.n] must be at least 1");
        }
        let couplings = match &self.model.couplings {
            Some(c) => {
                if c.len() != n {
                    bail!(
                        "[model.couplings] has {} entries for n = {n} qubits",
                        c.len()
                    );
                }
                c.clone()
            }
            None => vec![1.0; n],
        };
        let gamma = self.model.gamma.rate_in_g(g_si, "model.gamma")?;
        let kappa = self.model.kappa.rate_in_g(g_si, "model.kappa")?;
        let dark_k = self.model.dark_k.unwrap_or(1.0);
        let params = ModelParams::new(couplings, gamma, kappa, dark_k)?;

        let amplitude = self
            .pulse
            .amplitude
            .as_ref()
            .map(|q| q.rate_in_g(g_si, "pulse.amplitude"))
            .transpose()?
            .unwrap_or(40.0);
        let width = self
            .pulse
            .width
            .as_ref()
            .map(|q| q.time_in_inverse_g(g_si, "pulse.width"))
            .transpose()?
            .unwrap_or(4.0);
        let center = self
            .pulse
            .center
            .as_ref()
            .map(|q| q.time_in_inverse_g(g_si, "pulse.center"))
            .transpose()?
            .unwrap_or(0.0);
        let pulse = match self.pulse.shape.as_deref() {
            None | Some("gaussian") => PulseShape::gaussian(amplitude, width, center)?,
            Some("piecewise") => {
                let knots = self
                    .pulse
                    .knots
                    .as_ref()
                    .context("[pulse.knots] required for shape = \"piecewise\"")?;
                PulseShape::piecewise_linear(knots.iter().map(|k| (k[0], k[1])).collect())?
            }
            Some(other) => bail!("[pulse.shape]: unknown shape {other:?}"),
        };

        let mode = match self.protocol.mode.as_deref() {
            None | Some("generate") => Mode::Generate,
            Some("prepare") => Mode::Prepare,
            Some("full") => Mode::Full,
            Some(other) => bail!("[protocol.mode]: unknown mode {other:?}"),
        };
        let prep_duration = self
            .protocol
            .prep_duration
            .as_ref()
            .map(|q| q.time_in_inverse_g(g_si, "protocol.prep_duration"))
            .transpose()?
            .unwrap_or(25.0);
        let gen_duration = self
            .protocol
            .gen_duration
            .as_ref()
            .map(|q| q.time_in_inverse_g(g_si, "protocol.gen_duration"))
            .transpose()?
            .unwrap_or(25.0);
        let prep_amplitude = self
            .protocol
            .prep_amplitude
            .as_ref()
            .map(|q| q.rate_in_g(g_si, "protocol.prep_amplitude"))
            .transpose()?
            .unwrap_or(amplitude);

        let dt = self
            .integrator
            .dt
            .as_ref()
            .map(|q| q.time_in_inverse_g(g_si, "integrator.dt"))
            .transpose()?
            .unwrap_or(1e-3);
        let integrator = IntegratorConfig {
            dt,
            norm_check_interval: self.integrator.norm_check_interval.unwrap_or(1),
            sample_every: self.output.sample_stride.unwrap_or(10),
            ..Default::default()
        };

        Ok(Setup {
            g_si,
            params,
            pulse,
            mode,
            prep_duration,
            gen_duration,
            prep_amplitude,
            integrator,
            mc_trajectories: self.mc.as_ref().map(|m| m.trajectories),
            device,
        })
    }
}

impl DeviceSection {
    fn build(&self) -> Result<DeviceSetup> {
        let bias = self.bias_flux.flux_weber("device.bias_flux")?;
        let spec = match (self.josephson_energy, self.critical_current) {
            (Some(ej), Some(ic)) => {
                SquidSpec::from_both(self.capacitance, self.inductance, ej, ic, bias)?
            }
            (Some(ej), None) => SquidSpec::new(self.capacitance, self.inductance, ej, bias)?,
            (None, Some(ic)) => {
                SquidSpec::from_critical_current(self.capacitance, self.inductance, ic, bias)?
            }
            (None, None) => {
                bail!("[device] needs critical_current or josephson_energy")
            }
        };
        let grid = FluxGrid::new(
            self.grid.phi_min.flux_weber("device.grid.phi_min")?,
            self.grid.phi_max.flux_weber("device.grid.phi_max")?,
            self.grid.num_points,
        )?;
        let geometry = CouplingGeometry {
            cavity_frequency: self.geometry.cavity_frequency,
            cavity_overlap: self.geometry.cavity_overlap,
            drive_overlap_ratio: self.geometry.drive_overlap_ratio,
        };
        geometry.validate()?;
        Ok(DeviceSetup {
            spec,
            grid,
            geometry,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Setup> {
        let config: RunConfig = toml::from_str(text)?;
        config.setup()
    }

    #[test]
    fn reference_config_resolves() {
        let setup = parse(
            r#"
            [model]
            n = 3
            g = "1.8e8 s^-1"
            gamma = "4e5 s^-1"
            kappa = "1.32e6 s^-1"

            [pulse]
            amplitude = "40 g"
            width = "4 /g"

            [protocol]
            gen_duration = "25 /g"
        "#,
        )
        .unwrap();
        assert_eq!(setup.g_si, 1.8e8);
        assert!((setup.params.gamma - 4.0e5 / 1.8e8).abs() <= 1e-15);
        assert!((setup.params.kappa - 1.32e6 / 1.8e8).abs() <= 1e-15);
        assert_eq!(setup.gen_duration, 25.0);
        assert_eq!(setup.mode, Mode::Generate);
        assert!((setup.pulse.value(0.0) - 40.0).abs() <= 1e-12);
    }

    #[test]
    fn missing_g_and_device_is_an_error() {
        let err = parse(
            r#"
            [model]
            n = 3
            gamma = "4e5 s^-1"
            kappa = "1.32e6 s^-1"
        "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("[device]"), "{err}");
    }

    #[test]
    fn rates_in_units_of_g_are_accepted() {
        let setup = parse(
            r#"
            [model]
            n = 2
            g = "2e8 s^-1"
            gamma = "1e-3 g"
            kappa = "0 g"
        "#,
        )
        .unwrap();
        assert_eq!(setup.params.gamma, 1e-3);
        assert_eq!(setup.params.kappa, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>(
            r#"
            [model]
            n = 3
            g = "1.8e8 s^-1"
            gamma = "4e5 s^-1"
            kappa = "1.32e6 s^-1"
            typo_field = 1
        "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("typo_field"));
    }
}
