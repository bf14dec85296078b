use super::{Adversary, History};
use crate::model::Sample;

type Factory = Box<dyn FnMut(usize) -> Box<dyn Adversary> + Send>;

/// Cumulative segment ends `T0, 33 T0, 33^2 T0, ...`: every new segment is
/// 32 times as long as everything played before it.
pub fn amplifier_checkpoints(t0: usize) -> impl Iterator<Item = usize> {
    std::iter::successors(Some(t0.max(1)), |&c: &usize| c.checked_mul(33))
}

/// Turns a fixed-horizon adversary family into an anytime adversary by
/// restarting it on segments of geometrically growing length.
pub struct AnytimeAmplifier {
    factory: Factory,
    n: usize,
    current: Box<dyn Adversary>,
    segment_start: usize,
    segment_end: usize,
    round: usize,
}

impl AnytimeAmplifier {
    pub fn new<F>(t0: usize, mut factory: F) -> Self
    where
        F: FnMut(usize) -> Box<dyn Adversary> + Send + 'static,
    {
        let t0 = t0.max(1);
        let current = factory(t0);
        Self {
            n: current.n(),
            factory: Box::new(factory),
            current,
            segment_start: 0,
            segment_end: t0,
            round: 0,
        }
    }

    /// Rounds at which the segment in progress started and will end.
    pub fn segment(&self) -> (usize, usize) {
        (self.segment_start, self.segment_end)
    }
}

impl Adversary for AnytimeAmplifier {
    fn n(&self) -> usize {
        self.n
    }

    fn next_sample(&mut self, history: &History<'_>) -> Sample {
        if self.round == self.segment_end {
            let len = 32 * self.segment_end;
            self.current = (self.factory)(len);
            self.segment_start = self.segment_end;
            self.segment_end += len;
        }
        self.round += 1;
        self.current.next_sample(&history.since(self.segment_start.min(history.rounds())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversaries::{MirrorAdversary, SequenceAdversary};

    #[test]
    fn checkpoints_grow_by_33() {
        let c: Vec<_> = amplifier_checkpoints(1).take(4).collect();
        assert_eq!(c, vec![1, 33, 1089, 35937]);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn point_mass_stays_point_mass() {
        let mut amp = AnytimeAmplifier::new(1, |t| Box::new(SequenceAdversary::new(4, vec![3; t]).unwrap()));
        for _ in 0..1200 {
            assert_eq!(amp.next_sample(&History::EMPTY), 3);
        }
    }

    #[test]
    fn segments_restart_factory() {
        let mut amp = AnytimeAmplifier::new(2, |t| Box::new(SequenceAdversary::new(200, (1..=t).map(|i| i.min(200)).collect()).unwrap()));
        let xs: Vec<_> = (0..70).map(|_| amp.next_sample(&History::EMPTY)).collect();
        assert_eq!(&xs[..3], &[1, 2, 1]);
        assert_eq!(xs[65], 64);
        assert_eq!(xs[66], 1);
        assert_eq!(amp.segment(), (66, 66 + 32 * 66));
    }

    #[test]
    fn history_is_segment_local() {
        let mut amp = AnytimeAmplifier::new(1, |_| Box::new(MirrorAdversary::new(8).unwrap()));
        let queries = [7usize];
        let feedback = [true];
        let samples = [4usize];
        let h = History {
            queries: &queries,
            feedback: &feedback,
            samples: &samples,
        };
        assert_eq!(amp.next_sample(&History::EMPTY), 4);
        // Round 2 opens a fresh segment, so the mirror sees no prior query.
        assert_eq!(amp.next_sample(&h), 4);
    }
}
