//! Double-double division. `twofloat` 0.8 rounds `TwoFloat / TwoFloat` and
//! `recip` to about `f64` precision; one remainder correction restores the
//! full width.

use twofloat::TwoFloat;

/// `a / b` to double-double accuracy.
pub(crate) fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b.hi();
    let r = a - q * b;
    q + r / b.hi()
}

pub(crate) fn recip(b: TwoFloat) -> TwoFloat {
    div(TwoFloat::from(1.0), b)
}
