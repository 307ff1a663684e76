//! Built-in experiment presets.

use uos_transfer::filter::EmptyPolicy;
use uos_transfer::synthesis::{InputGen, MismatchSpec};

use crate::config::{ExperimentConfig, ExperimentId, SynthesisGraph, SystemSpec};

pub const DEFAULT_MASTER_SEED: u64 = 20_190_601;

/// `r_s / r` in {1e-3, 1e-2, ..., 1e3}.
pub fn default_ratios() -> Vec<f64> {
    (-3..=3).map(|k| 10f64.powi(k)).collect()
}

fn named(name: &str, factor: f64) -> SystemSpec {
    SystemSpec::Named {
        name: name.to_string(),
        factor,
    }
}

/// Parameters of the given experiment. `Custom` starts from experiment 1
/// with a single source.
pub fn preset(id: ExperimentId) -> ExperimentConfig {
    let base = ExperimentConfig {
        experiment_id: id,
        system: named("system2", 1.0),
        n_sources: vec![1],
        ratios: default_ratios(),
        r: 1e-3,
        rho: 1e-5,
        horizon: 50,
        t_lo: 1,
        mc_runs: 500,
        mismatch: MismatchSpec::None,
        synthesis_graph: SynthesisGraph::V,
        alpha: 0.0,
        prior_halfwidth: 1.0,
        input_gen: InputGen::Zero,
        empty_policy: EmptyPolicy::DiscardRun,
        master_seed: DEFAULT_MASTER_SEED,
        initial_state: None,
    };
    match id {
        ExperimentId::Custom => base,
        ExperimentId::Preset(1) => ExperimentConfig {
            n_sources: vec![1, 10, 100, 1000],
            ..base
        },
        ExperimentId::Preset(2) => ExperimentConfig {
            horizon: 4000,
            t_lo: 2000,
            mc_runs: 50,
            ..base
        },
        ExperimentId::Preset(3) => ExperimentConfig {
            horizon: 4000,
            t_lo: 2000,
            mc_runs: 50,
            mismatch: MismatchSpec::Rotation(0.067),
            ..base
        },
        ExperimentId::Preset(4) => ExperimentConfig {
            system: named("system3", 1.0),
            horizon: 400,
            t_lo: 200,
            mc_runs: 500,
            mismatch: MismatchSpec::Dilation(1.4),
            ..base
        },
        ExperimentId::Preset(5) => ExperimentConfig {
            system: named("system3", 1.4),
            rho: 1e-2,
            horizon: 400,
            t_lo: 50,
            mc_runs: 200,
            mismatch: MismatchSpec::StateNoise(0.4),
            synthesis_graph: SynthesisGraph::U,
            alpha: 0.4,
            ..base
        },
        ExperimentId::Preset(n) => panic!("no preset {n}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let p1 = preset(ExperimentId::Preset(1));
        assert_eq!((p1.rho, p1.r, p1.horizon, p1.t_lo, p1.mc_runs), (1e-5, 1e-3, 50, 1, 500));
        assert_eq!(p1.n_sources, vec![1, 10, 100, 1000]);
        let p2 = preset(ExperimentId::Preset(2));
        assert_eq!((p2.t_lo, p2.horizon, p2.mc_runs), (2000, 4000, 50));
        let p4 = preset(ExperimentId::Preset(4));
        assert_eq!((p4.t_lo, p4.horizon, p4.mc_runs), (200, 400, 500));
        assert_eq!(p4.mismatch, MismatchSpec::Dilation(1.4));
        let p5 = preset(ExperimentId::Preset(5));
        assert_eq!((p5.alpha, p5.rho, p5.t_lo, p5.horizon, p5.mc_runs), (0.4, 1e-2, 50, 400, 200));
        for id in 1..=5 {
            preset(ExperimentId::Preset(id)).validate().unwrap();
        }
        assert_eq!(default_ratios().len(), 7);
    }
}
