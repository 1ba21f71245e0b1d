//! Sensitivity adjustment of the anesthesia effect for violations of the
//! separability assumptions. Both bias parameters (`gamma` for a direct
//! surgery effect on the outcome, `eta` for an anesthesia effect on the
//! mediators) act as positive divisors of the identified ratio.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityKind {
    Gamma,
    Eta,
}

impl SensitivityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SensitivityKind::Gamma => "gamma",
            SensitivityKind::Eta => "eta",
        }
    }
}

impl std::str::FromStr for SensitivityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SensitivityKind::Gamma),
            "eta" => Ok(SensitivityKind::Eta),
            other => Err(Error::InvalidInput(format!(
                "unknown sensitivity parameter `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoints {
    pub null_at_lower: f64,
    pub null_at_point: f64,
    pub null_at_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub kind: SensitivityKind,
    pub grid: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

pub fn adjusted_effect(unadjusted: f64, param: f64) -> Result<f64> {
    check_positive("unadjusted effect", unadjusted)?;
    check_positive("sensitivity parameter", param)?;
    Ok(unadjusted / param)
}

/// Parameter values at which the adjusted lower bound, point estimate and
/// upper bound reach 1. Dividing by `g` reaches 1 exactly at `g = x`.
pub fn crossing_points(point: f64, lower: f64, upper: f64) -> Result<CrossingPoints> {
    check_positive("point estimate", point)?;
    check_positive("lower bound", lower)?;
    check_positive("upper bound", upper)?;
    if lower > upper {
        return Err(Error::InvalidInput(format!(
            "lower bound {lower} exceeds upper bound {upper}"
        )));
    }
    Ok(CrossingPoints {
        null_at_lower: lower,
        null_at_point: point,
        null_at_upper: upper,
    })
}

/// Adjusted anesthesia effect and percentile interval at each grid value.
pub fn sensitivity_curve(
    boot: &BootstrapResult,
    kind: SensitivityKind,
    grid: &[f64],
) -> Result<SensitivityCurve> {
    let ci = boot.ci.anesthesia;
    curve_from_triple(boot.point.anesthesia, ci.lower, ci.upper, kind, grid)
}

/// [`sensitivity_curve`] for an explicit `(estimate, lower, upper)` triple.
pub fn curve_from_triple(
    estimate: f64,
    lower: f64,
    upper: f64,
    kind: SensitivityKind,
    grid: &[f64],
) -> Result<SensitivityCurve> {
    let mut curve = SensitivityCurve {
        kind,
        grid: grid.to_vec(),
        adjusted: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
    };
    for &g in grid {
        curve.adjusted.push(adjusted_effect(estimate, g)?);
        curve.lower.push(adjusted_effect(lower, g)?);
        curve.upper.push(adjusted_effect(upper, g)?);
    }
    Ok(curve)
}

impl SensitivityCurve {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Rows `param,kind,estimate,lower,upper`.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "param,kind,estimate,lower,upper")?;
        for i in 0..self.grid.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.grid[i],
                self.kind.as_str(),
                self.adjusted[i],
                self.lower[i],
                self.upper[i]
            )?;
        }
        Ok(())
    }
}

/// Inclusive grid `start, start+step, ...` up to `stop`, with values rounded
/// to 12 decimals so that `0.9:1.6:0.05` lands on the intended points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidInput(format!("grid must look like start:stop:step, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_anchors() {
        assert_eq!(adjusted_effect(1.37, 1.0).unwrap(), 1.37);
        assert_eq!(adjusted_effect(1.13, 1.13).unwrap(), 1.0);
        assert_eq!(adjusted_effect(1.28, 1.28).unwrap(), 1.0);
        assert!(adjusted_effect(1.0, 0.0).is_err());
        assert!(adjusted_effect(-1.0, 1.0).is_err());
    }

    #[test]
    fn crossings_are_the_inputs() {
        let c = crossing_points(1.13, 1.10, 1.16).unwrap();
        assert_eq!(
            (c.null_at_lower, c.null_at_point, c.null_at_upper),
            (1.10, 1.13, 1.16)
        );
        assert_eq!(crossing_points(1.0, 0.9, 1.1).unwrap().null_at_point, 1.0);
        assert!(crossing_points(1.0, 1.2, 1.1).is_err());
    }

    #[test]
    fn lower_endpoint_reaches_null() {
        let c = curve_from_triple(1.13, 1.10, 1.16, SensitivityKind::Gamma, &[1.10]).unwrap();
        assert_eq!(c.lower[0], 1.0);
        let unit = curve_from_triple(1.13, 1.10, 1.16, SensitivityKind::Eta, &[1.0]).unwrap();
        assert_eq!(
            (unit.adjusted[0], unit.lower[0], unit.upper[0]),
            (1.13, 1.10, 1.16)
        );
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.9:1.6:0.05").unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 0.9);
        assert_eq!(g[2], 1.0);
        assert_eq!(g[14], 1.6);
        assert_eq!(parse_grid("1:1:0.1").unwrap(), vec![1.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("1:2").is_err());
    }
}
