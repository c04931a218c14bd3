use super::identify::IdentifyReport;
use super::mmi::{mmi_statistics, report_from_statistics, MmiReport};
use super::{decode_and, decode_com, decode_or, identify_state, Codebook, JointOptions, Task, Verdict};
use crate::channel::{CavcModel, Family};
use crate::error::{CavcError, Result};

/// A decoder acting on one received block of fixed length.
pub trait Decoder: Sync {
    fn task(&self) -> Task;
    /// Length of the blocks this decoder accepts.
    fn block_len(&self) -> usize;
    fn decode(&self, y: &[usize]) -> Result<Verdict>;
}

/// Threshold MMI for the communication task.
#[derive(Debug, Clone)]
pub struct MmiDecoder {
    pub codebook: Codebook,
    pub ny: usize,
    pub threshold: f64,
}

impl MmiDecoder {
    pub fn new(codebook: Codebook, ny: usize, delta: f64) -> Self {
        let threshold = codebook.rate() + delta;
        MmiDecoder { codebook, ny, threshold }
    }

    pub fn report(&self, y: &[usize]) -> Result<MmiReport> {
        Ok(report_from_statistics(&mmi_statistics(&self.codebook, y, self.ny)?, self.threshold))
    }
}

impl Decoder for MmiDecoder {
    fn task(&self) -> Task {
        Task::Com
    }

    fn block_len(&self) -> usize {
        self.codebook.n()
    }

    fn decode(&self, y: &[usize]) -> Result<Verdict> {
        Ok(self.report(y)?.verdict)
    }
}

/// Joint-type decoders on a fixed codebook.
#[derive(Debug, Clone)]
pub struct JointDecoder {
    pub codebook: Codebook,
    pub model: CavcModel,
    pub task: Task,
    pub opts: JointOptions,
}

impl JointDecoder {
    pub fn new(codebook: Codebook, model: CavcModel, task: Task, opts: JointOptions) -> Result<Self> {
        if task == Task::Identify {
            return Err(CavcError::Config("joint-type decoding has no identify-only form".into()));
        }
        Ok(JointDecoder {
            codebook,
            model,
            task,
            opts,
        })
    }
}

impl Decoder for JointDecoder {
    fn task(&self) -> Task {
        self.task
    }

    fn block_len(&self) -> usize {
        self.codebook.n()
    }

    fn decode(&self, y: &[usize]) -> Result<Verdict> {
        let report = match self.task {
            Task::Com => decode_com(&self.codebook, y, &self.model, self.opts)?,
            Task::And => decode_and(&self.codebook, y, &self.model, self.opts)?,
            Task::Or => decode_or(&self.codebook, y, &self.model, self.opts)?,
            Task::Identify => unreachable!(),
        };
        Ok(report.verdict)
    }
}

/// Identification from a known training sequence alone.
#[derive(Debug, Clone)]
pub struct IdentifyDecoder {
    pub training: Vec<usize>,
    pub model: CavcModel,
    pub eps: f64,
}

impl Decoder for IdentifyDecoder {
    fn task(&self) -> Task {
        Task::Identify
    }

    fn block_len(&self) -> usize {
        self.training.len()
    }

    fn decode(&self, y: &[usize]) -> Result<Verdict> {
        Ok(identify_state(&self.training, y, &self.model, self.eps)?.verdict)
    }
}

/// Combines the MMI outcome on the payload part with the training-part
/// identification, per task: `and` pairs them, `or` prefers a unique message
/// and otherwise names the identified state.
pub fn combine_frame_outcomes(task: Task, mmi: &MmiReport, ident: &IdentifyReport) -> Verdict {
    match task {
        Task::Com => mmi.verdict.clone(),
        Task::Identify => ident.verdict.clone(),
        Task::And => {
            let message = mmi.unique().unwrap_or(0);
            let state = ident.verdict.decoded_state().unwrap_or(Family::One);
            let mut v = Verdict::message_state(message, state);
            v.fallback = mmi.verdict.fallback || ident.verdict.fallback;
            v.flags = mmi.verdict.flags.iter().chain(&ident.verdict.flags).copied().collect();
            v.flags.dedup();
            v
        }
        Task::Or => match mmi.unique() {
            Some(m) => Verdict::message(Task::Or, m),
            None => {
                let mut v = ident.verdict.clone();
                v.task = Task::Or;
                v
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::codec::{Payload, VerdictFlag};

    fn book() -> Codebook {
        Codebook::from_codewords(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0, 1]], 2).unwrap()
    }

    #[test]
    fn block_decoders_report_their_task() {
        let d = MmiDecoder::new(book(), 2, 0.1);
        assert_eq!(d.task(), Task::Com);
        assert_eq!(d.decode(&[0, 0, 0, 1, 1, 1]).unwrap(), Verdict::message(Task::Com, 0));
        let j = JointDecoder::new(book(), catalog::disjoint_output_noiseless(), Task::And, JointOptions::default()).unwrap();
        assert_eq!(j.block_len(), 6);
        assert_eq!(j.decode(&[2, 3, 2, 3, 2, 3]).unwrap(), Verdict::message_state(1, Family::Two));
        assert!(JointDecoder::new(book(), catalog::noiseless_vs_flip(), Task::Identify, JointOptions::default()).is_err());
    }

    #[test]
    fn frame_outcomes_combine_per_task() {
        let m = catalog::noiseless_vs_flip();
        let d = MmiDecoder::new(book(), 2, 0.1);
        let hit = d.report(&[0, 0, 0, 1, 1, 1]).unwrap();
        let miss = d.report(&[1; 6]).unwrap();
        let ident = identify_state(&[0, 0, 1, 1], &[1, 1, 0, 0], &m, 0.1).unwrap();
        assert_eq!(combine_frame_outcomes(Task::And, &hit, &ident), Verdict::message_state(0, Family::Two));
        let v = combine_frame_outcomes(Task::And, &miss, &ident);
        assert!(v.fallback);
        assert_eq!(v.payload, Payload::MessageState { message: 0, state: Family::Two });
        assert_eq!(v.flags, vec![VerdictFlag::NoCandidate]);
        assert_eq!(combine_frame_outcomes(Task::Or, &hit, &ident), Verdict::message(Task::Or, 0));
        assert_eq!(combine_frame_outcomes(Task::Or, &miss, &ident), Verdict::state(Task::Or, Family::Two));
    }
}
