//! Boundary self-verification shared by every decomposition routine, plus a
//! thread-local fault injector used to prove the checks fire.

use crate::error::{Error, Result};
use crate::qsystem::SignedQSystem;
use crate::subspace::Subspace;
use std::cell::Cell;

thread_local! {
    static FAULT: Cell<bool> = const { Cell::new(false) };
}

/// While alive, decomposition routines on this thread corrupt their output
/// just before the final boundary check.
pub struct FaultGuard {
    prev: bool,
}

pub fn inject_faults() -> FaultGuard {
    let prev = FAULT.with(|f| f.replace(true));
    FaultGuard { prev }
}

impl Drop for FaultGuard {
    fn drop(&mut self) {
        FAULT.with(|f| f.set(self.prev));
    }
}

pub fn faults_enabled() -> bool {
    FAULT.with(|f| f.get())
}

/// Adds one copy of some s-space to Φ when fault injection is on.
pub(crate) fn maybe_corrupt(phi: &mut SignedQSystem) {
    if !faults_enabled() {
        return;
    }
    let key = phi.support().next().cloned().unwrap_or_else(|| {
        Subspace::coordinate(phi.q(), phi.n(), &(0..phi.k()).collect::<Vec<_>>())
    });
    phi.add_term(key, 1);
}

/// Fails unless ∂_{k,r} Φ = target exactly.
pub fn check_boundary(phi: &SignedQSystem, target: &SignedQSystem, what: &str) -> Result<()> {
    let b = phi.boundary(target.k())?;
    if b != *target {
        let diff = b.minus(target)?;
        return Err(Error::Verification(format!(
            "{}: boundary differs from target on {} r-spaces",
            what,
            diff.len()
        )));
    }
    Ok(())
}
