//! The ablation runner: every cell of the order × attention × direction ×
//! depth matrix is trained with the same seeds on the same data.

use std::fs;
use std::path::Path;

use pinet_core::pinet::{evaluate, train};
use pinet_core::synth::read_dataset;
use pinet_core::{MetricComparison, ModelConfig, OrderMode, Scene};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub order: OrderMode,
    pub attention: bool,
    pub bidirectional: bool,
    pub gru_layers: usize,
}

impl Cell {
    pub fn name(&self) -> String {
        format!(
            "{}_att-{}_bi-{}_l{}",
            self.order.as_str(),
            on_off(self.attention),
            on_off(self.bidirectional),
            self.gru_layers
        )
    }

    pub fn model(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            order: self.order,
            use_attention: self.attention,
            bidirectional: self.bidirectional,
            gru_layers: self.gru_layers,
            ..base.clone()
        }
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub name: String,
    /// Medians over seeds of the refined metrics.
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pck_150: f64,
    pub seeds: Vec<SeedResult>,
}

pub fn cells(cfg: &RunConfig) -> Vec<Cell> {
    let a = &cfg.ablate;
    let mut out = Vec::new();
    for &order in &a.orders {
        for &attention in &a.attention {
            for &bidirectional in &a.bidirectional {
                for &gru_layers in &a.gru_layers {
                    out.push(Cell {
                        order,
                        attention,
                        bidirectional,
                        gru_layers,
                    });
                }
            }
        }
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Trains and evaluates every (cell, seed) pair, in parallel on the current
/// thread pool.
pub fn run_matrix(cfg: &RunConfig, train_set: &[Scene], test_set: &[Scene]) -> CliResult<Vec<CellResult>> {
    let cells = cells(cfg);
    if cells.is_empty() || cfg.ablate.seeds.is_empty() {
        return Err(CliError::Config("ablation matrix is empty".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| cfg.ablate.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<SeedResult> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let model = cells[c].model(&cfg.model);
            let tcfg = pinet_core::TrainConfig { seed, ..cfg.train.clone() };
            let ckpt = train(train_set, &model, &tcfg)?;
            Ok(SeedResult {
                seed,
                metrics: evaluate(&ckpt, test_set)?,
            })
        })
        .collect::<CliResult<_>>()?;
    let per = cfg.ablate.seeds.len();
    Ok(cells
        .iter()
        .zip(results.chunks(per))
        .map(|(cell, seeds)| {
            let mut m: Vec<f64> = seeds.iter().map(|s| s.metrics.refined.mpjpe).collect();
            let mut pa: Vec<f64> = seeds.iter().map(|s| s.metrics.refined.pa_mpjpe).collect();
            let mut pck: Vec<f64> = seeds.iter().map(|s| s.metrics.refined.pck_150).collect();
            CellResult {
                cell: *cell,
                name: cell.name(),
                mpjpe: median(&mut m),
                pa_mpjpe: median(&mut pa),
                pck_150: median(&mut pck),
                seeds: seeds.to_vec(),
            }
        })
        .collect())
}

/// Order, attention/bidirectionality and depth tables. Each varies one
/// factor around the base model's setting of the others.
pub fn tables(results: &[CellResult], base: &ModelConfig) -> String {
    let find = |order, attention, bidirectional, gru_layers| {
        results.iter().find(|r| {
            r.cell
                == Cell {
                    order,
                    attention,
                    bidirectional,
                    gru_layers,
                }
        })
    };
    let row = |label: &str, r: &CellResult| format!("{label:<28} {:>9.2} {:>9.2}\n", r.mpjpe, r.pa_mpjpe);
    let header = |title: &str| format!("{title:<28} {:>9} {:>9}\n", "MPJPE", "PA-MPJPE");
    let (att, bi, layers) = (base.use_attention, base.bidirectional, base.gru_layers);

    let mut out = header("Input order");
    for order in [OrderMode::Intuitive, OrderMode::Reverse, OrderMode::Random] {
        if let Some(r) = find(order, att, bi, layers) {
            out.push_str(&row(order.as_str(), r));
        }
    }
    out.push('\n');
    out.push_str(&header("Attention / direction"));
    for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
        if let Some(r) = find(base.order, a, b, layers) {
            let label = format!(
                "{} attention, {}",
                if a { "with" } else { "without" },
                if b { "bidirectional" } else { "unidirectional" }
            );
            out.push_str(&row(&label, r));
        }
    }
    out.push('\n');
    out.push_str(&header("GRU layers"));
    let mut depths: Vec<usize> = results.iter().map(|r| r.cell.gru_layers).collect();
    depths.sort_unstable();
    depths.dedup();
    for l in depths {
        if let Some(r) = find(base.order, att, bi, l) {
            out.push_str(&row(&format!("{l} layers"), r));
        }
    }
    out
}

pub fn cmd_ablate(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<()> {
    let (train_file, test_file) = read_dataset(data)?;
    let mut test = test_file.scenes;
    if cfg.ablate.max_test_scenes > 0 {
        test.truncate(cfg.ablate.max_test_scenes);
    }
    let results = run_matrix(cfg, &train_file.scenes, &test)?;
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    for r in &results {
        let dir = out.join("cells").join(&r.name);
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let mut cell_cfg = cfg.clone();
        cell_cfg.model = r.cell.model(&cfg.model);
        cell_cfg.archive(&dir.join("config.toml"))?;
        let path = dir.join("metrics.json");
        fs::write(&path, serde_json::to_string_pretty(r).expect("result serializes")).map_err(|e| io(&path, e))?;
    }
    let summary = out.join("summary.json");
    fs::write(&summary, serde_json::to_string_pretty(&results).expect("results serialize")).map_err(|e| io(&summary, e))?;
    let text = tables(&results, &cfg.model);
    let path = out.join("tables.txt");
    fs::write(&path, &text).map_err(|e| io(&path, e))?;
    cfg.archive(&out.join("resolved_config.toml"))?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_matrix_has_36_distinct_cells() {
        let c = cells(&RunConfig::default());
        assert_eq!(c.len(), 36);
        let mut names: Vec<String> = c.iter().map(Cell::name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 36);
    }

    #[test]
    fn cell_overrides_only_ablated_factors() {
        let base = ModelConfig {
            hidden: 16,
            ..ModelConfig::default()
        };
        let cell = Cell {
            order: OrderMode::Reverse,
            attention: false,
            bidirectional: false,
            gru_layers: 4,
        };
        let m = cell.model(&base);
        assert_eq!((m.order, m.use_attention, m.bidirectional, m.gru_layers), (OrderMode::Reverse, false, false, 4));
        assert_eq!(m.hidden, 16);
        assert_eq!(m.mlp_hidden, base.mlp_hidden);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
