use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bergman::{DiskSymbol, TruncationRule};
use crate::symbol::{Symbol, SymbolFamily};
use crate::symplectic::{FormKind, Region, SymplecticChart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chart: ChartConfig,
    pub symbols: Vec<SymbolConfig>,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormName {
    Standard,
    BergmanDisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub n: usize,
    pub region: Region,
    #[serde(default = "default_form")]
    pub form: FormName,
    #[serde(default = "default_form_constant")]
    pub form_constant: f64,
}

fn default_form() -> FormName {
    FormName::Standard
}

fn default_form_constant() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    pub name: String,
    pub expr: String,
    /// Imaginary part; only the `toeplitz` command accepts complex symbols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Nodes per axis of the lattice used for brackets and the richness scan.
    pub lattice_nodes: Option<usize>,
    pub leaf_half_width: f64,
    pub leaf_spacing: f64,
    /// Leaf base points; chosen among regular lattice nodes when empty.
    pub base_points: Vec<Vec<f64>>,
    /// Number of default base points.
    pub default_leaves: usize,
    /// Points `(x, y)` where the `toeplitz` command evaluates Wick symbols.
    pub wick_samples: Vec<[f64; 2]>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lattice_nodes: None,
            leaf_half_width: PI,
            leaf_spacing: PI / 32.0,
            base_points: Vec::new(),
            default_leaves: 3,
            wick_samples: Vec::new(),
        }
    }
}

impl GridConfig {
    pub fn lattice_nodes_for(&self, n: usize) -> usize {
        self.lattice_nodes.unwrap_or(match n {
            1 => 64,
            2 => 9,
            3 => 5,
            _ => 3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub tau_rank: f64,
    pub tau_comm: f64,
    pub fd_step: f64,
    pub rk4_step: f64,
    pub h_list: Vec<f64>,
    pub truncation: TruncationRule,
    pub slope_band: [f64; 2],
    pub max_singular_fraction: f64,
    pub constancy_tol: f64,
    pub lagrangian_tol: f64,
    pub isotropy_tol: f64,
    pub flow_commutation_tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            tau_rank: 1e-8,
            tau_comm: 1e-9,
            fd_step: 1e-4,
            rk4_step: 1e-3,
            h_list: vec![0.4, 0.2, 0.1],
            truncation: TruncationRule::default(),
            slope_band: [0.8, 1.2],
            max_singular_fraction: 0.1,
            constancy_tol: 1e-8,
            lagrangian_tol: 1e-4,
            isotropy_tol: 1e-10,
            flow_commutation_tol: 1e-9,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let chart = self.chart()?;
        if self.symbols.is_empty() {
            return Err(HarnessError::Config("at least one symbol is required".into()));
        }
        let mut names = BTreeSet::new();
        for s in &self.symbols {
            if !names.insert(s.name.as_str()) {
                return Err(HarnessError::Config(format!("duplicate symbol name '{}'", s.name)));
            }
            for text in std::iter::once(&s.expr).chain(s.imag.as_ref()) {
                Symbol::parse(text, self.chart.n)
                    .map_err(|e| HarnessError::Config(format!("symbol '{}': {e}", s.name)))?;
            }
        }
        let nm = &self.numerics;
        let positive = [
            ("tau_rank", nm.tau_rank),
            ("tau_comm", nm.tau_comm),
            ("fd_step", nm.fd_step),
            ("rk4_step", nm.rk4_step),
            ("max_singular_fraction", nm.max_singular_fraction),
            ("constancy_tol", nm.constancy_tol),
            ("lagrangian_tol", nm.lagrangian_tol),
            ("isotropy_tol", nm.isotropy_tol),
            ("flow_commutation_tol", nm.flow_commutation_tol),
            ("leaf_spacing", self.grids.leaf_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if nm.h_list.is_empty() || nm.h_list.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
            return Err(HarnessError::Config(format!("h_list must be a nonempty subset of (0, 1), got {:?}", nm.h_list)));
        }
        match nm.truncation {
            TruncationRule::Fixed(0) => return Err(HarnessError::Config("truncation degree must be positive".into())),
            TruncationRule::Scaled { factor, cap } if !(factor > 0.0) || cap == 0 => {
                return Err(HarnessError::Config("scaled truncation needs factor > 0 and cap > 0".into()))
            }
            _ => {}
        }
        if !(nm.slope_band[0] < nm.slope_band[1]) {
            return Err(HarnessError::Config(format!("slope_band {:?} is empty", nm.slope_band)));
        }
        if self.grids.leaf_half_width < self.grids.leaf_spacing {
            return Err(HarnessError::Config("leaf_half_width must be at least leaf_spacing".into()));
        }
        if nm.rk4_step > self.grids.leaf_spacing {
            return Err(HarnessError::Config("rk4_step must not exceed leaf_spacing".into()));
        }
        if self.grids.lattice_nodes_for(self.chart.n) < 2 {
            return Err(HarnessError::Config("lattice_nodes must be at least 2".into()));
        }
        for p in &self.grids.base_points {
            if p.len() != chart.dim() || !chart.contains(p) {
                return Err(HarnessError::Config(format!("base point {p:?} is not a point of the chart")));
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> Result<SymplecticChart, HarnessError> {
        let form = match self.chart.form {
            FormName::Standard => FormKind::Standard,
            FormName::BergmanDisk => FormKind::BergmanDisk {
                constant: self.chart.form_constant,
            },
        };
        SymplecticChart::new(self.chart.n, self.chart.region, form).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// The real parts of the configured symbols.
    pub fn family(&self) -> Result<SymbolFamily, HarnessError> {
        let members = self
            .symbols
            .iter()
            .map(|s| Symbol::parse(&s.expr, self.chart.n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let names = self.symbols.iter().map(|s| s.name.clone()).collect();
        SymbolFamily::new(members, names).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn disk_symbols(&self) -> Result<Vec<(String, DiskSymbol)>, HarnessError> {
        let parse = |t: &str| Symbol::parse(t, 1).map_err(|e| HarnessError::Config(e.to_string()));
        self.symbols
            .iter()
            .map(|s| {
                let re = parse(&s.expr)?;
                let sym = match &s.imag {
                    Some(im) => DiskSymbol::complex(re, parse(im)?),
                    None => DiskSymbol::real(re),
                }
                .map_err(|e| HarnessError::Config(e.to_string()))?;
                Ok((s.name.clone(), sym))
            })
            .collect()
    }

    /// True when the chart is the disk in one complex variable, where the
    /// Bergman stages apply.
    pub fn is_disk(&self) -> bool {
        self.chart.n == 1 && matches!(self.chart.region, Region::Disk { .. })
    }

    pub fn has_complex_symbols(&self) -> bool {
        self.symbols.iter().any(|s| s.imag.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "chart": {"n": 1, "region": {"disk": {"radius": 0.95}}, "form": "bergman-disk"},
        "symbols": [{"name": "r2", "expr": "x1^2 + y1^2"}]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.chart.form_constant, 2.0);
        assert_eq!(c.numerics.tau_rank, 1e-8);
        assert_eq!(c.grids.lattice_nodes_for(1), 64);
        assert!(c.is_disk());
        assert_eq!(c.chart().unwrap().n(), 1);
    }

    #[test]
    fn rejects_malformed_configs() {
        let bad = [
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.95}}}, "symbols": [], "extra": 1}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.95}}}, "symbols": []}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.95}}}, "symbols": [{"name": "a", "expr": "x2"}]}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.95}}}, "symbols": [{"name": "a", "expr": "x1"}, {"name": "a", "expr": "y1"}]}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.95}}}, "symbols": [{"name": "a", "expr": "x1"}], "numerics": {"h_list": [1.5]}}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.95}}}, "symbols": [{"name": "a", "expr": "x1"}], "numerics": {"tau_comm": -1}}"#,
            r#"{"chart": {"n": 2, "region": {"disk": {"radius": 0.95}}}, "symbols": [{"name": "a", "expr": "x1"}]}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 1.5}}, "form": "bergman-disk"}, "symbols": [{"name": "a", "expr": "x1"}]}"#,
            r#"{"chart": {"n": 1, "region": {"disk": {"radius": 0.5}}}, "symbols": [{"name": "a", "expr": "x1"}], "grids": {"base_points": [[0.9, 0.0]]}}"#,
            r#"not json"#,
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_json(text), Err(HarnessError::Config(_))), "{text}");
        }
    }
}
