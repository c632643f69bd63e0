//! Coefficient expressions over `x`, compiled at configuration time.
//!
//! The evaluator follows the mathematical precedence convention, so
//! `exp(-x^2)` means exp(-(x squared)). Its bound closure is not shareable
//! across threads while the parsed expression is; each worker thread
//! therefore binds its own copy on first use, cached by the source text.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use slab_transport::ScalarFn;

/// Compile an expression of the single variable `x` into a scalar function.
/// Parse and binding errors surface here; evaluation cannot fail afterwards.
pub fn compile(source: &str) -> Result<ScalarFn, String> {
    let parsed: meval::Expr = source
        .parse()
        .map_err(|e| format!("cannot parse expression {source:?}: {e}"))?;
    let _ = parsed
        .clone()
        .bind("x")
        .map_err(|e| format!("expression {source:?} must use only the variable x: {e}"))?;
    let key = source.to_owned();
    Ok(ScalarFn::new(move |x| {
        thread_local! {
            static BOUND: RefCell<HashMap<String, Rc<dyn Fn(f64) -> f64>>> =
                RefCell::new(HashMap::new());
        }
        BOUND.with(|cell| {
            let cached = cell.borrow().get(&key).cloned();
            let f = match cached {
                Some(f) => f,
                None => {
                    let f: Rc<dyn Fn(f64) -> f64> = Rc::new(
                        parsed
                            .clone()
                            .bind("x")
                            .expect("expression was bound at compile time"),
                    );
                    cell.borrow_mut().insert(key.clone(), f.clone());
                    f
                }
            };
            f(x)
        })
    }))
}
