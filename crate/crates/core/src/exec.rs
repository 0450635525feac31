//! Multi-worker execution.
//!
//! Subtasks are dealt round-robin to `W` workers, each worker owns one
//! [`MemoryLedger`] (one emulated device), results land in a slot per task,
//! and the final merge walks the slots in task order so the output never
//! depends on scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::MemoryLedger;

/// One unit of work: a block description plus a dense id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubTask<B> {
    pub task_id: usize,
    pub block: B,
}

/// Deal blocks round-robin by task id.
pub fn distribute<B: Clone>(blocks: &[B], workers: usize) -> Result<Vec<Vec<SubTask<B>>>> {
    if workers == 0 {
        return Err(Error::InvalidParameter("need at least one worker".into()));
    }
    let mut out: Vec<Vec<SubTask<B>>> = (0..workers).map(|_| Vec::new()).collect();
    for (task_id, block) in blocks.iter().enumerate() {
        out[task_id % workers].push(SubTask {
            task_id,
            block: block.clone(),
        });
    }
    Ok(out)
}

/// Write-once slots keyed by task id.
#[derive(Debug)]
pub struct ResultContainer<R> {
    slots: Vec<OnceLock<R>>,
    completed: AtomicUsize,
}

impl<R> ResultContainer<R> {
    pub fn new(total: usize) -> Self {
        Self {
            slots: (0..total).map(|_| OnceLock::new()).collect(),
            completed: AtomicUsize::new(0),
        }
    }

    pub fn total(&self) -> usize {
        self.slots.len()
    }

    pub fn completed(&self) -> usize {
        self.completed.load(Ordering::Acquire)
    }

    pub fn is_complete(&self) -> bool {
        self.completed() == self.total()
    }

    /// Store the result for `task_id`. A slot can only be written once.
    pub fn put(&self, task_id: usize, value: R) -> Result<()> {
        let slot = self
            .slots
            .get(task_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no slot for task {task_id}")))?;
        slot.set(value)
            .map_err(|_| Error::InvalidParameter(format!("slot {task_id} written twice")))?;
        self.completed.fetch_add(1, Ordering::AcqRel);
        Ok(())
    }

    /// Results in task order. Fails unless every slot is filled.
    pub fn into_ordered(self) -> Result<Vec<R>> {
        let total = self.total();
        let filled = self.completed();
        if filled != total {
            return Err(Error::Incomplete { filled, total });
        }
        Ok(self
            .slots
            .into_iter()
            .map(|s| s.into_inner().expect("counted slot is filled"))
            .collect())
    }
}

/// Merge a complete container in ascending task order.
pub fn aggregate_results<R, O>(
    container: ResultContainer<R>,
    merge: impl FnOnce(Vec<R>) -> Result<O>,
) -> Result<O> {
    merge(container.into_ordered()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerMode {
    /// Every worker has its own budget, like one device each.
    PerWorker,
    /// All workers draw on one shared budget.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub workers: usize,
    pub budget_bytes: u64,
    /// Upper bound on the block size chosen by the planner.
    pub batch_size: Option<usize>,
    pub ledger_mode: LedgerMode,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            budget_bytes: 1 << 30,
            batch_size: None,
            ledger_mode: LedgerMode::PerWorker,
        }
    }
}

/// Per-worker accounting reported in run summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecStats {
    pub per_worker_tasks: Vec<usize>,
    pub per_worker_peak_bytes: Vec<u64>,
}

/// Runs batched operators on `W` workers with their ledgers.
#[derive(Debug)]
pub struct Executor {
    config: ExecConfig,
    ledgers: Vec<MemoryLedger>,
    tasks: Mutex<Vec<usize>>,
}

impl Executor {
    pub fn new(config: ExecConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::InvalidParameter("need at least one worker".into()));
        }
        let n_ledgers = match config.ledger_mode {
            LedgerMode::PerWorker => config.workers,
            LedgerMode::Global => 1,
        };
        Ok(Self {
            ledgers: (0..n_ledgers).map(|_| MemoryLedger::new(config.budget_bytes)).collect(),
            tasks: Mutex::new(vec![0; config.workers]),
            config,
        })
    }

    /// One worker, effectively unlimited memory.
    pub fn sequential() -> Self {
        Self::new(ExecConfig {
            budget_bytes: u64::MAX,
            ..ExecConfig::default()
        })
        .expect("valid config")
    }

    pub fn with_workers(workers: usize) -> Result<Self> {
        Self::new(ExecConfig {
            workers,
            budget_bytes: u64::MAX,
            ..ExecConfig::default()
        })
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    /// The budget one block may use. Under a global ledger the concurrent
    /// workers split it.
    pub fn block_budget(&self) -> u64 {
        match self.config.ledger_mode {
            LedgerMode::PerWorker => self.config.budget_bytes,
            LedgerMode::Global => self.config.budget_bytes / self.config.workers as u64,
        }
    }

    pub fn ledger(&self, worker: usize) -> &MemoryLedger {
        &self.ledgers[worker % self.ledgers.len()]
    }

    pub fn peak_bytes(&self) -> u64 {
        self.ledgers.iter().map(|l| l.peak_bytes()).max().unwrap_or(0)
    }

    pub fn reset_peaks(&self) {
        for l in &self.ledgers {
            l.reset_peak();
        }
    }

    pub fn stats(&self) -> ExecStats {
        let per_worker_peak_bytes = (0..self.config.workers).map(|w| self.ledger(w).peak_bytes()).collect();
        ExecStats {
            per_worker_tasks: self.tasks.lock().unwrap().clone(),
            per_worker_peak_bytes,
        }
    }

    /// Run `f` on every block and return the results in block order.
    ///
    /// On failure the error of the smallest failing task id is returned;
    /// tasks with larger ids that have not started are skipped.
    pub fn run<B, R, F>(&self, blocks: &[B], f: F) -> Result<Vec<R>>
    where
        B: Clone + Send + Sync,
        R: Send + Sync,
        F: Fn(&B, &MemoryLedger) -> Result<R> + Sync,
    {
        let container = self.execute(distribute(blocks, self.config.workers)?, &f)?;
        aggregate_results(container, Ok)
    }

    /// Execute pre-distributed subtasks. Worker `w` runs `assignments[w]`.
    pub fn execute<B, R, F>(&self, assignments: Vec<Vec<SubTask<B>>>, f: &F) -> Result<ResultContainer<R>>
    where
        B: Send + Sync,
        R: Send + Sync,
        F: Fn(&B, &MemoryLedger) -> Result<R> + Sync,
    {
        let total: usize = assignments.iter().map(Vec::len).sum();
        let container = ResultContainer::new(total);
        let first_failure = AtomicUsize::new(usize::MAX);
        let errors: Mutex<Vec<(usize, Error)>> = Mutex::new(Vec::new());

        let work = |w: usize, tasks: &[SubTask<B>]| {
            let ledger = self.ledger(w);
            let mut done = 0;
            for t in tasks {
                if t.task_id > first_failure.load(Ordering::Acquire) {
                    break;
                }
                match f(&t.block, ledger) {
                    Ok(r) => {
                        container.put(t.task_id, r).expect("task ids are unique");
                        done += 1;
                    }
                    Err(e) => {
                        first_failure.fetch_min(t.task_id, Ordering::AcqRel);
                        errors.lock().unwrap().push((t.task_id, e));
                        break;
                    }
                }
            }
            self.tasks.lock().unwrap()[w] += done;
        };

        if assignments.len() == 1 {
            work(0, &assignments[0]);
        } else {
            std::thread::scope(|s| {
                for (w, tasks) in assignments.iter().enumerate() {
                    if tasks.is_empty() {
                        continue;
                    }
                    let work = &work;
                    s.spawn(move || work(w, tasks));
                }
            });
        }

        let mut errors = errors.into_inner().unwrap();
        if let Some(pos) = (0..errors.len()).min_by_key(|&i| errors[i].0) {
            let (task_id, source) = errors.swap_remove(pos);
            return Err(Error::SubTask {
                task_id,
                source: Box::new(source),
            });
        }
        Ok(container)
    }
}

impl Error {
    /// Strip subtask wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::SubTask { source, .. } => source.root(),
            e => e,
        }
    }
}
