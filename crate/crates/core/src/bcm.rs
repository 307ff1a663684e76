//! Complete-modelling baseline: one central filter that knows every channel's
//! observation model and processes all raw observations itself.

use nalgebra::DVector;

use crate::filter::{
    channel_update, check_inputs, ChannelModel, DataUpdate, EmptyPolicy, FilterError, FilterRun,
    StateModel, UosFilter,
};
use crate::geometry::Orthotope;

/// Sequential per-channel data updates, each followed by its own box
/// circumscription, in the order given.
pub fn bcm_data_update(
    prior: &Orthotope,
    observations: &[(&DVector<f64>, &ChannelModel)],
    policy: EmptyPolicy,
) -> Result<DataUpdate, FilterError> {
    let mut posterior = prior.clone();
    let mut skipped = false;
    for (y, channel) in observations {
        let upd = channel_update(&posterior, y, channel, policy)?;
        skipped |= upd.skipped;
        posterior = upd.posterior;
    }
    Ok(DataUpdate { posterior, skipped })
}

/// `observations[i][t]` is channel `i` at step `t + 1`.
pub fn run_bcm(
    state: &StateModel,
    channels: &[ChannelModel],
    prior: Orthotope,
    observations: &[Vec<DVector<f64>>],
    inputs: &[DVector<f64>],
    policy: EmptyPolicy,
) -> Result<FilterRun, FilterError> {
    if channels.len() != observations.len() || channels.is_empty() {
        return Err(FilterError::Length {
            what: "channel observation sets",
            expected: channels.len().max(1),
            found: observations.len(),
        });
    }
    let horizon = observations[0].len();
    check_inputs(horizon, inputs)?;
    if let Some(bad) = observations.iter().find(|o| o.len() != horizon) {
        return Err(FilterError::Length {
            what: "channel observations",
            expected: horizon,
            found: bad.len(),
        });
    }
    let mut filter = UosFilter::new(state, prior)?;
    let mut states = Vec::with_capacity(horizon);
    let mut empty = 0;
    let mut step_obs = Vec::with_capacity(channels.len());
    for t in 0..horizon {
        step_obs.clear();
        step_obs.extend(observations.iter().zip(channels).map(|(o, c)| (&o[t], c)));
        let (st, skips) = filter.assimilate(&step_obs, policy)?;
        empty += skips;
        if t + 1 < horizon {
            filter.advance(&st.posterior, &inputs[t])?;
        }
        states.push(st);
    }
    Ok(FilterRun {
        states,
        empty_data_updates: empty,
    })
}
