use std::fmt;

use super::LabError;

/// Enumeration is exponential in program length; past this many combined
/// steps we refuse.
pub const MAX_COMBINED_STEPS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    /// `local = shared`
    Fetch,
    /// `shared = local + 1`
    Set,
}

/// A step tagged with the (1-based) thread that performs it, printed as
/// `f1`, `s2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StepLabel {
    pub step: Step,
    pub thread: usize,
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.step {
            Step::Fetch => 'f',
            Step::Set => 's',
        };
        write!(f, "{c}{}", self.thread)
    }
}

/// The straight-line fetch/set program run by one thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepProgram {
    thread: usize,
    steps: Vec<Step>,
}

impl StepProgram {
    /// Every set must come after at least one fetch of the same thread.
    pub fn new(thread: usize, steps: Vec<Step>) -> Result<Self, LabError> {
        let mut fetched = false;
        for (i, step) in steps.iter().enumerate() {
            match step {
                Step::Fetch => fetched = true,
                Step::Set if !fetched => return Err(LabError::SetBeforeFetch(i)),
                Step::Set => {}
            }
        }
        Ok(StepProgram { thread, steps })
    }

    /// One unprotected increment: fetch, then set.
    pub fn increment(thread: usize) -> Self {
        Self::increments(thread, 1)
    }

    pub fn increments(thread: usize, count: usize) -> Self {
        let steps = (0..count).flat_map(|_| [Step::Fetch, Step::Set]).collect();
        StepProgram { thread, steps }
    }

    pub fn empty(thread: usize) -> Self {
        StepProgram { thread, steps: Vec::new() }
    }

    pub fn thread(&self) -> usize {
        self.thread
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterleavingResult {
    pub schedule: Vec<StepLabel>,
    /// How much `shared` grew when the schedule ran from zero.
    pub final_delta: i64,
}

impl InterleavingResult {
    pub fn schedule_string(&self) -> String {
        self.schedule.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
    }
}

/// Every order-preserving merge of the two programs, each simulated with
/// atomic, sequentially consistent steps. Schedules come out with `a`'s
/// steps preferred first, so two single increments yield
/// `f1 s1 f2 s2, f1 f2 s1 s2, f1 f2 s2 s1, f2 f1 s1 s2, f2 f1 s2 s1, f2 s2 f1 s1`.
pub fn enumerate_interleavings(a: &StepProgram, b: &StepProgram) -> Result<Vec<InterleavingResult>, LabError> {
    let total = a.len() + b.len();
    if total > MAX_COMBINED_STEPS {
        return Err(LabError::TooManySteps(total));
    }
    let mut out = Vec::new();
    let mut schedule = Vec::with_capacity(total);
    merge(a, b, 0, 0, &mut schedule, &mut out);
    Ok(out)
}

fn merge(
    a: &StepProgram,
    b: &StepProgram,
    i: usize,
    j: usize,
    schedule: &mut Vec<StepLabel>,
    out: &mut Vec<InterleavingResult>,
) {
    if i == a.len() && j == b.len() {
        out.push(InterleavingResult {
            final_delta: simulate(schedule),
            schedule: schedule.clone(),
        });
        return;
    }
    if i < a.len() {
        schedule.push(StepLabel { step: a.steps[i], thread: a.thread });
        merge(a, b, i + 1, j, schedule, out);
        schedule.pop();
    }
    if j < b.len() {
        schedule.push(StepLabel { step: b.steps[j], thread: b.thread });
        merge(a, b, i, j + 1, schedule, out);
        schedule.pop();
    }
}

fn simulate(schedule: &[StepLabel]) -> i64 {
    let mut shared = 0i64;
    let mut locals: Vec<(usize, i64)> = Vec::new();
    for label in schedule {
        let slot = match locals.iter().position(|(t, _)| *t == label.thread) {
            Some(i) => i,
            None => {
                locals.push((label.thread, 0));
                locals.len() - 1
            }
        };
        match label.step {
            Step::Fetch => locals[slot].1 = shared,
            Step::Set => shared = locals[slot].1 + 1,
        }
    }
    shared
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    // Independent oracle: permute all steps, keep the order-preserving ones.
    fn brute_force(a: &StepProgram, b: &StepProgram) -> BTreeSet<Vec<(usize, usize)>> {
        let items: Vec<(usize, usize)> = (0..a.len())
            .map(|i| (a.thread(), i))
            .chain((0..b.len()).map(|j| (b.thread(), j)))
            .collect();
        let mut found = BTreeSet::new();
        let mut perm = items.clone();
        permute(&mut perm, 0, &mut |p| {
            let in_order = |t: usize| {
                let idx: Vec<usize> = p.iter().filter(|(tt, _)| *tt == t).map(|(_, i)| *i).collect();
                idx.windows(2).all(|w| w[0] < w[1])
            };
            if in_order(a.thread()) && in_order(b.thread()) {
                found.insert(p.to_vec());
            }
        });
        found
    }

    fn permute(v: &mut Vec<(usize, usize)>, k: usize, visit: &mut impl FnMut(&[(usize, usize)])) {
        if k == v.len() {
            visit(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, visit);
            v.swap(k, i);
        }
    }

    #[test]
    fn two_increments_give_six_schedules() {
        let r = enumerate_interleavings(&StepProgram::increment(1), &StepProgram::increment(2)).unwrap();
        let listed: Vec<(String, i64)> = r.iter().map(|x| (x.schedule_string(), x.final_delta)).collect();
        assert_eq!(
            listed,
            vec![
                ("f1 s1 f2 s2".to_owned(), 2),
                ("f1 f2 s1 s2".to_owned(), 1),
                ("f1 f2 s2 s1".to_owned(), 1),
                ("f2 f1 s1 s2".to_owned(), 1),
                ("f2 f1 s2 s1".to_owned(), 1),
                ("f2 s2 f1 s1".to_owned(), 2),
            ]
        );
    }

    #[test]
    fn single_program_against_empty_has_one_schedule() {
        let r = enumerate_interleavings(&StepProgram::increment(1), &StepProgram::empty(2)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].final_delta, 1);
    }

    #[test]
    fn schedule_counts_match_binomial_and_brute_force() {
        for m in 0..=4 {
            for n in 0..=4 {
                let a = StepProgram::new(1, (0..m).map(|i| if i % 2 == 0 { Step::Fetch } else { Step::Set }).collect())
                    .unwrap();
                let b = StepProgram::new(2, (0..n).map(|i| if i % 2 == 0 { Step::Fetch } else { Step::Set }).collect())
                    .unwrap();
                let got = enumerate_interleavings(&a, &b).unwrap();
                assert_eq!(got.len() as u64, binomial((m + n) as u64, m as u64), "m={m} n={n}");
                let as_idx: BTreeSet<Vec<(usize, usize)>> = got
                    .iter()
                    .map(|r| {
                        let (mut i, mut j) = (0, 0);
                        r.schedule
                            .iter()
                            .map(|l| {
                                if l.thread == 1 {
                                    i += 1;
                                    (1, i - 1)
                                } else {
                                    j += 1;
                                    (2, j - 1)
                                }
                            })
                            .collect()
                    })
                    .collect();
                assert_eq!(as_idx, brute_force(&a, &b), "m={m} n={n}");
            }
        }
    }

    #[test]
    fn multi_increment_deltas_bounded() {
        let r = enumerate_interleavings(&StepProgram::increments(1, 2), &StepProgram::increments(2, 2)).unwrap();
        assert_eq!(r.len(), 70);
        let deltas: BTreeSet<i64> = r.iter().map(|x| x.final_delta).collect();
        assert_eq!(deltas, BTreeSet::from([2, 3, 4]));
    }

    #[test]
    fn set_before_fetch_is_rejected() {
        assert_eq!(
            StepProgram::new(1, vec![Step::Set, Step::Fetch]),
            Err(LabError::SetBeforeFetch(0))
        );
    }

    #[test]
    fn oversized_programs_are_refused() {
        let r = enumerate_interleavings(&StepProgram::increments(1, 5), &StepProgram::increments(2, 4));
        assert_eq!(r, Err(LabError::TooManySteps(18)));
    }
}
