use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Fixed disjoint partition into `⌊n/S⌋` batches; one is drawn uniformly
    /// per sync round. The tail `n mod S` samples are never used.
    #[default]
    PartitionCycle,
    /// `S` fresh indices without replacement every sync round.
    UniformResample,
}

/// The minibatch every party uses at each sync round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub schedule: Vec<Vec<usize>>,
    pub batch_size: usize,
    /// Number of partition batches (`B`); `0` in resampling mode.
    pub num_batches: usize,
    pub partition: Vec<Vec<usize>>,
    pub mode: SamplingMode,
    pub seed: u64,
}

impl BatchPlan {
    pub fn batch(&self, round: usize) -> &[usize] {
        &self.schedule[round]
    }

    pub fn rounds(&self) -> usize {
        self.schedule.len()
    }
}

pub fn make_batch_plan(
    n: usize,
    batch_size: usize,
    rounds: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<BatchPlan> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::Config(format!(
            "batch size {batch_size} must lie in 1..={n}"
        )));
    }
    let mut rng = SeededRng::new(seed, crate::streams::BATCHES);
    let (schedule, partition) = match mode {
        SamplingMode::PartitionCycle => {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let partition: Vec<Vec<usize>> = idx
                .chunks_exact(batch_size)
                .map(|c| {
                    let mut c = c.to_vec();
                    c.sort_unstable();
                    c
                })
                .collect();
            let schedule = (0..rounds)
                .map(|_| partition[rng.below(partition.len())].clone())
                .collect();
            (schedule, partition)
        }
        SamplingMode::UniformResample => {
            let schedule = (0..rounds)
                .map(|_| rng.sample_without_replacement(n, batch_size))
                .collect();
            (schedule, Vec::new())
        }
    };
    Ok(BatchPlan {
        schedule,
        batch_size,
        num_batches: partition.len(),
        partition,
        mode,
        seed,
    })
}
