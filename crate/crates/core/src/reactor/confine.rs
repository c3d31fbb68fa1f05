use std::fmt;
use std::sync::{RwLock, TryLockError};
use std::thread::{self, ThreadId};

use super::LoopHandle;

/// Raised when loop-confined state is touched from any thread other than the
/// loop thread.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ConfinementViolation {
    pub owner: ThreadId,
    pub offender: ThreadId,
    pub offender_name: Option<String>,
}

impl ConfinementViolation {
    pub(crate) fn current(owner: ThreadId) -> Self {
        let me = thread::current();
        ConfinementViolation {
            owner,
            offender: me.id(),
            offender_name: me.name().map(str::to_owned),
        }
    }
}

impl fmt::Display for ConfinementViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "loop-confined state accessed from thread {} ({:?}); the loop thread is {:?}",
            self.offender_name.as_deref().unwrap_or("<unnamed>"),
            self.offender,
            self.owner
        )
    }
}

/// A value that may only be read or written on the loop thread.
///
/// Every access checks the caller's thread identity against the loop that
/// owns the cell. Off-loop access returns [`ConfinementViolation`] and never
/// reaches the value.
pub struct ConfinedCell<V> {
    value: RwLock<V>,
    owner: LoopHandle,
}

impl<V> ConfinedCell<V> {
    pub fn new(owner: &LoopHandle, value: V) -> Self {
        ConfinedCell {
            value: RwLock::new(value),
            owner: owner.clone(),
        }
    }

    pub fn owner(&self) -> &LoopHandle {
        &self.owner
    }

    pub fn assert_confined(&self) -> Result<(), ConfinementViolation> {
        self.owner.assert_on_loop()
    }

    pub fn with<R>(&self, f: impl FnOnce(&V) -> R) -> Result<R, ConfinementViolation> {
        self.assert_confined()?;
        let guard = match self.value.try_read() {
            Ok(g) => g,
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
            Err(TryLockError::WouldBlock) => {
                panic!("ConfinedCell is mutably borrowed by an enclosing access")
            }
        };
        Ok(f(&guard))
    }

    pub fn with_mut<R>(&self, f: impl FnOnce(&mut V) -> R) -> Result<R, ConfinementViolation> {
        self.assert_confined()?;
        let mut guard = match self.value.try_write() {
            Ok(g) => g,
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
            Err(TryLockError::WouldBlock) => {
                panic!("ConfinedCell is already borrowed by an enclosing access")
            }
        };
        Ok(f(&mut guard))
    }

    pub fn get(&self) -> Result<V, ConfinementViolation>
    where
        V: Clone,
    {
        self.with(V::clone)
    }

    pub fn set(&self, value: V) -> Result<(), ConfinementViolation> {
        self.with_mut(|v| *v = value)
    }
}

impl<V> fmt::Debug for ConfinedCell<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConfinedCell").finish_non_exhaustive()
    }
}
