"""How fast a chain settles, and the inequality that drives it.

d_n is the sup-distance between consecutive log-density fits along a chain.
The adaptive rule stops once `window` consecutive d_n fall below epsilon.

For any concave g the fitted density puts at least as much weight on g as the
empirical measure does.  Because of this, the log-likelihood of a fixed concave
function is a submartingale along the chain.  The last part of this script
checks that identity by Monte Carlo.
"""
import numpy as np

from lcmartingale import (
    PiecewiseLinear,
    StopRule,
    derive_stream,
    initial_state,
    predictive_identity_check,
    run_chain,
    simulate,
    step,
    submartingale_gap,
)

x = simulate("laplace(0,1)", 70, seed=4)

_, fixed = run_chain(x, StopRule.fixed(1070), derive_stream(4, 1))
d = fixed.sup_diffs
for lo in range(0, d.size, 200):
    print(f"steps {lo + 1:4d}-{lo + 200:4d}: median d = {np.median(d[lo:lo + 200]):.2e}")

_, adaptive = run_chain(x, StopRule.adaptive(5e-3, 5, 2070), derive_stream(4, 1))
print(f"\nadaptive rule (eps 5e-3, window 5) stopped at n = {adaptive.stopped_at}")

state = initial_state(x, derive_stream(4, 2))
for _ in range(50):
    state = step(state)
lo, hi = state.fit.support
mid = 0.5 * (lo + hi)
tent = PiecewiseLinear([lo, mid, hi], [0.0, 1.0, -0.5])  # concave
print(f"\nint g dF_hat - int g dF_n = {submartingale_gap(tent, state):.3e} (>= 0)")
check = predictive_identity_check(tent, state, 20_000)
print(f"predictive identity: |MC - closed form| = {check.deviation:.2e}, "
      f"4 sd/sqrt(T) = {check.band:.2e}")
