//! Throughput and energy efficiency of an optical stack.
//!
//! Every one of `total_nodes` outputs is connected to every input, so one
//! clock tick performs `2 * total_nodes^2` floating-point operations
//! (a multiply and an add per connection).

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub layers: u64,
    /// `N^2`; zero when the node count was given directly.
    pub nodes_per_layer: u64,
    pub total_nodes: u64,
    pub clock_rate: f64,
    pub flops_per_second: f64,
    pub total_power: f64,
    pub flops_per_joule: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl EnergyReport {
    /// Report for `layers` layers of `grid x grid` nodes. `nodes` overrides
    /// the total node count (for quoting a rounded figure).
    pub fn new(
        layers: u64,
        grid: u64,
        clock_rate: f64,
        total_power: f64,
        nodes: Option<u64>,
    ) -> Result<Self> {
        if layers == 0 || grid == 0 {
            return Err(Error::Config("layers and grid must be positive".into()));
        }
        if nodes == Some(0) {
            return Err(Error::Config("node count must be positive".into()));
        }
        positive("clock rate", clock_rate)?;
        positive("power", total_power)?;
        let nodes_per_layer = grid * grid;
        let total_nodes = nodes.unwrap_or(layers * nodes_per_layer);
        let n = total_nodes as f64;
        let flops_per_second = 2.0 * n * n * clock_rate;
        Ok(EnergyReport {
            layers,
            nodes_per_layer,
            total_nodes,
            clock_rate,
            flops_per_second,
            total_power,
            flops_per_joule: flops_per_second / total_power,
        })
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "layers            {}", self.layers)?;
        writeln!(f, "nodes_per_layer   {}", self.nodes_per_layer)?;
        writeln!(f, "total_nodes       {}", self.total_nodes)?;
        writeln!(f, "clock_rate_hz     {:e}", self.clock_rate)?;
        writeln!(f, "flops_per_second  {:e}", self.flops_per_second)?;
        writeln!(f, "total_power_w     {}", self.total_power)?;
        write!(f, "flops_per_joule   {:e}", self.flops_per_joule)
    }
}
