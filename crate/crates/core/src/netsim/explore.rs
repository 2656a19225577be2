use super::{Automaton, Network};
use crate::error::{Error, Result};

/// Guard against state-space blowup during enumeration.
#[derive(Clone, Copy, Debug)]
pub struct ExploreLimit {
    pub max_schedules: usize,
}

impl Default for ExploreLimit {
    fn default() -> Self {
        ExploreLimit {
            max_schedules: 1_000_000,
        }
    }
}

/// Runs `net` to quiescence under every delivery order, noise-free, calling
/// `visit` on each final network. Returns the number of complete schedules.
///
/// Depth-first over cloned networks: at every state each in-flight envelope is
/// tried as the next delivery.
pub fn for_each_schedule<A, F>(net: Network<A>, limit: ExploreLimit, mut visit: F) -> Result<usize>
where
    A: Automaton + Clone,
    F: FnMut(&Network<A>),
{
    let mut stack = vec![net];
    let mut complete = 0;
    while let Some(state) = stack.pop() {
        if state.is_quiescent() {
            complete += 1;
            if complete > limit.max_schedules {
                return Err(Error::ExplorationLimit(limit.max_schedules));
            }
            visit(&state);
            continue;
        }
        let choices = state.in_flight().len().max(1);
        for i in (1..choices).rev() {
            let mut next = state.clone();
            next.deliver(i, None)?;
            stack.push(next);
        }
        let mut first = state;
        first.deliver(0, None)?;
        stack.push(first);
    }
    Ok(complete)
}
