//! Bounded click counter in a Model-View-Adapter arrangement.

use std::fmt;
use std::str::FromStr;

pub const DEFAULT_MIN: i64 = 0;
pub const DEFAULT_MAX: i64 = 10;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CounterError {
    #[error("counter is at its maximum")]
    CounterFull,
    #[error("counter is at its minimum")]
    CounterEmpty,
    #[error("invalid range: min {min} > max {max}")]
    InvalidRange { min: i64, max: i64 },
    #[error("saved value {value} is outside [{min}, {max}]")]
    OutOfRange { value: i64, min: i64, max: i64 },
}

/// Passive integer counter that always stays within `min..=max`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundedCounter {
    value: i64,
    min: i64,
    max: i64,
}

impl BoundedCounter {
    /// Starts at `min`.
    pub fn new(min: i64, max: i64) -> Result<Self, CounterError> {
        if min > max {
            return Err(CounterError::InvalidRange { min, max });
        }
        Ok(BoundedCounter { value: min, min, max })
    }

    pub fn value(&self) -> i64 {
        self.value
    }

    pub fn min(&self) -> i64 {
        self.min
    }

    pub fn max(&self) -> i64 {
        self.max
    }

    pub fn is_full(&self) -> bool {
        self.value == self.max
    }

    pub fn is_empty(&self) -> bool {
        self.value == self.min
    }

    pub fn increment(&mut self) -> Result<(), CounterError> {
        if self.is_full() {
            return Err(CounterError::CounterFull);
        }
        self.value += 1;
        Ok(())
    }

    pub fn decrement(&mut self) -> Result<(), CounterError> {
        if self.is_empty() {
            return Err(CounterError::CounterEmpty);
        }
        self.value -= 1;
        Ok(())
    }

    /// Back to `min`.
    pub fn reset(&mut self) {
        self.value = self.min;
    }

    /// Saved form is just the value; the range comes from configuration.
    pub fn save(&self) -> i64 {
        self.value
    }

    pub fn restore(&mut self, saved: i64) -> Result<(), CounterError> {
        if saved < self.min || saved > self.max {
            return Err(CounterError::OutOfRange {
                value: saved,
                min: self.min,
                max: self.max,
            });
        }
        self.value = saved;
        Ok(())
    }

    /// `Minimum` wins when the range is a single value.
    pub fn state(&self) -> CounterState {
        if self.is_empty() {
            CounterState::Minimum
        } else if self.is_full() {
            CounterState::Maximum
        } else {
            CounterState::Counting
        }
    }
}

impl Default for BoundedCounter {
    fn default() -> Self {
        BoundedCounter {
            value: DEFAULT_MIN,
            min: DEFAULT_MIN,
            max: DEFAULT_MAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CounterState {
    Minimum,
    Counting,
    Maximum,
}

/// What the view shows and which controls it affords.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterViewState {
    pub displayed: i64,
    pub inc_enabled: bool,
    pub dec_enabled: bool,
    pub reset_enabled: bool,
}

pub fn project_view(model: &BoundedCounter) -> CounterViewState {
    CounterViewState {
        displayed: model.value(),
        inc_enabled: !model.is_full(),
        dec_enabled: !model.is_empty(),
        reset_enabled: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CounterEvent {
    Increment,
    Decrement,
    Reset,
}

impl CounterEvent {
    pub const ALL: [CounterEvent; 3] = [CounterEvent::Increment, CounterEvent::Decrement, CounterEvent::Reset];

    pub fn name(self) -> &'static str {
        match self {
            CounterEvent::Increment => "increment",
            CounterEvent::Decrement => "decrement",
            CounterEvent::Reset => "reset",
        }
    }
}

impl fmt::Display for CounterEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CounterEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CounterEvent::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown counter event {s:?}"))
    }
}

type ViewSink = Box<dyn FnMut(&CounterViewState) + Send + Sync>;

/// Mediates between view events and the model. Every event produces exactly
/// one view update, including events for controls that are disabled.
pub struct CounterAdapter {
    model: BoundedCounter,
    sink: ViewSink,
    last: CounterViewState,
}

impl CounterAdapter {
    pub fn new(model: BoundedCounter, sink: impl FnMut(&CounterViewState) + Send + Sync + 'static) -> Self {
        let last = project_view(&model);
        CounterAdapter {
            model,
            sink: Box::new(sink),
            last,
        }
    }

    pub fn model(&self) -> &BoundedCounter {
        &self.model
    }

    pub fn last_view(&self) -> CounterViewState {
        self.last
    }

    pub fn on_event(&mut self, event: CounterEvent) -> CounterViewState {
        let outcome = match event {
            CounterEvent::Increment => self.model.increment(),
            CounterEvent::Decrement => self.model.decrement(),
            CounterEvent::Reset => {
                self.model.reset();
                Ok(())
            }
        };
        if let Err(e) = outcome {
            log::info!("ignoring {event} on disabled control: {e}");
        }
        self.update_view()
    }

    /// Re-emits the current view.
    pub fn update_view(&mut self) -> CounterViewState {
        self.last = project_view(&self.model);
        (self.sink)(&self.last);
        self.last
    }

    pub fn save_state(&self) -> i64 {
        self.model.save()
    }

    pub fn restore_state(&mut self, saved: i64) -> Result<CounterViewState, CounterError> {
        self.model.restore(saved)?;
        Ok(self.update_view())
    }
}

impl fmt::Debug for CounterAdapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CounterAdapter")
            .field("model", &self.model)
            .field("last", &self.last)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet, VecDeque};
    use std::sync::{Arc, Mutex};

    use proptest::prelude::*;

    use super::*;

    fn view(displayed: i64, inc: bool, dec: bool) -> CounterViewState {
        CounterViewState {
            displayed,
            inc_enabled: inc,
            dec_enabled: dec,
            reset_enabled: true,
        }
    }

    #[test]
    fn increment_and_decrement() {
        let mut c = BoundedCounter::new(0, 10).unwrap();
        c.increment().unwrap();
        assert_eq!(c.value(), 1);
        c.decrement().unwrap();
        assert_eq!(c.value(), 0);
        assert_eq!(c.decrement(), Err(CounterError::CounterEmpty));
        assert_eq!(c.value(), 0);
    }

    #[test]
    fn full_counter_rejects_increment() {
        let mut c = BoundedCounter::new(0, 10).unwrap();
        c.restore(10).unwrap();
        assert_eq!(c.increment(), Err(CounterError::CounterFull));
        assert_eq!(c.value(), 10);
    }

    #[test]
    fn degenerate_range() {
        let mut c = BoundedCounter::new(0, 0).unwrap();
        assert_eq!(c.increment(), Err(CounterError::CounterFull));
        assert_eq!(c.state(), CounterState::Minimum);
        assert!(BoundedCounter::new(3, 2).is_err());
    }

    #[test]
    fn reset_goes_to_min() {
        let mut c = BoundedCounter::new(0, 10).unwrap();
        c.restore(7).unwrap();
        c.reset();
        assert_eq!(c.value(), 0);
        c.reset();
        assert_eq!(c.value(), 0);
        let mut c = BoundedCounter::new(5, 10).unwrap();
        c.increment().unwrap();
        c.reset();
        assert_eq!(c.value(), 5);
    }

    #[test]
    fn view_projection_for_the_three_states() {
        let mut c = BoundedCounter::new(0, 10).unwrap();
        assert_eq!(project_view(&c), view(0, true, false));
        c.restore(5).unwrap();
        assert_eq!(project_view(&c), view(5, true, true));
        c.restore(10).unwrap();
        assert_eq!(project_view(&c), view(10, false, true));
    }

    fn recording_adapter(min: i64, max: i64) -> (CounterAdapter, Arc<Mutex<Vec<CounterViewState>>>) {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let s = seen.clone();
        let adapter = CounterAdapter::new(BoundedCounter::new(min, max).unwrap(), move |v| s.lock().unwrap().push(*v));
        (adapter, seen)
    }

    #[test]
    fn reset_inc_reset_scenario() {
        let (mut a, seen) = recording_adapter(0, 10);
        a.on_event(CounterEvent::Reset);
        a.on_event(CounterEvent::Increment);
        a.on_event(CounterEvent::Reset);
        assert_eq!(
            *seen.lock().unwrap(),
            vec![view(0, true, false), view(1, true, true), view(0, true, false)]
        );
    }

    #[test]
    fn save_restore_round_trip() {
        let (mut a, _) = recording_adapter(0, 10);
        for _ in 0..3 {
            a.on_event(CounterEvent::Increment);
        }
        let saved = a.save_state();
        let (mut b, seen) = recording_adapter(0, 10);
        b.restore_state(saved).unwrap();
        assert_eq!(b.last_view().displayed, 3);
        assert_eq!(seen.lock().unwrap().last().unwrap().displayed, 3);
    }

    #[test]
    fn disabled_control_still_refreshes_once() {
        let (mut a, seen) = recording_adapter(0, 1);
        a.on_event(CounterEvent::Increment);
        a.on_event(CounterEvent::Increment);
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0], seen[1]);
        assert_eq!(a.model().value(), 1);
    }

    #[test]
    fn event_names_round_trip() {
        for e in CounterEvent::ALL {
            assert_eq!(e.name().parse::<CounterEvent>(), Ok(e));
        }
        assert!("explode".parse::<CounterEvent>().is_err());
    }

    // Expected transition table, written from the diagram rather than the model.
    fn expected(from: CounterState, value: i64, max: i64, event: CounterEvent) -> Option<CounterState> {
        use CounterEvent::*;
        use CounterState::*;
        match (from, event) {
            (_, Reset) => Some(Minimum),
            (Minimum, Increment) if max == 1 => Some(Maximum),
            (Minimum, Increment) => Some(Counting),
            (Minimum, Decrement) => None,
            (Counting, Increment) if value + 1 == max => Some(Maximum),
            (Counting, Increment) => Some(Counting),
            (Counting, Decrement) if value - 1 == 0 => Some(Minimum),
            (Counting, Decrement) => Some(Counting),
            (Maximum, Increment) => None,
            (Maximum, Decrement) if max == 1 => Some(Minimum),
            (Maximum, Decrement) => Some(Counting),
        }
    }

    #[test]
    fn exhaustive_state_exploration() {
        for max in 1..=12 {
            let start = BoundedCounter::new(0, max).unwrap();
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            let mut partition: BTreeMap<CounterState, BTreeSet<i64>> = BTreeMap::new();
            while let Some(c) = queue.pop_front() {
                if !seen.insert(c.value()) {
                    continue;
                }
                partition.entry(c.state()).or_default().insert(c.value());
                for e in CounterEvent::ALL {
                    let mut next = c.clone();
                    let r = match e {
                        CounterEvent::Increment => next.increment(),
                        CounterEvent::Decrement => next.decrement(),
                        CounterEvent::Reset => {
                            next.reset();
                            Ok(())
                        }
                    };
                    let got = r.as_ref().ok().map(|_| next.state());
                    assert_eq!(got, expected(c.state(), c.value(), max, e), "max={max} v={} {e}", c.value());
                    if r.is_ok() {
                        queue.push_back(next);
                    }
                }
            }
            assert_eq!(seen, (0..=max).collect::<BTreeSet<_>>());
            assert_eq!(partition[&CounterState::Minimum], BTreeSet::from([0]));
            assert_eq!(partition[&CounterState::Maximum], BTreeSet::from([max]));
            let counting = partition.get(&CounterState::Counting).cloned().unwrap_or_default();
            assert_eq!(counting, (1..max).collect::<BTreeSet<_>>());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn invariant_holds_under_random_events(
            min in -5i64..5,
            span in 0i64..15,
            events in proptest::collection::vec(0usize..3, 0..10_000),
        ) {
            let (mut a, seen) = recording_adapter(min, min + span);
            for (i, e) in events.iter().enumerate() {
                let v = a.on_event(CounterEvent::ALL[*e]);
                let m = a.model();
                prop_assert!(m.min() <= m.value() && m.value() <= m.max());
                prop_assert_eq!(v, project_view(m));
                prop_assert_eq!(seen.lock().unwrap().len(), i + 1);
            }
        }
    }
}
