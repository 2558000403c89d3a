"""Walk through one preference update in two dimensions, by hand.

The query starts at (1, 0). A human preferred the item at (0, 1) over the
item at (1, 0), so the update should rotate the query toward the winner.
Every number printed here can be checked on paper.
"""

import numpy as np

from prefadapt import (
    AdaptConfig,
    Embedding,
    PreferencePair,
    adapt,
    adapt_step,
    finite_diff_grad,
    pair_outcome,
    similarity,
)

query = Embedding([1.0, 0.0])
pair = PreferencePair(winner=Embedding([0.0, 1.0]), loser=Embedding([1.0, 0.0]))
config = AdaptConfig(epsilon=0.1, temperature=1.0, renormalize=False)

print("similarities: winner", similarity(query, pair.winner),
      " loser", similarity(query, pair.loser))

outcome = pair_outcome(query, pair, config)
print(f"P(winner beats loser)  = {outcome.win_probability:.6f}   (sigmoid of 0 - 1)")
print(f"loss = -ln p           = {outcome.loss:.6f}")
print(f"closed-form gradient   = {np.round(outcome.gradient, 6)}")

numeric = finite_diff_grad(query, pair, config)
print(f"finite-difference grad = {np.round(numeric, 6)}   "
      f"(max abs diff {np.abs(numeric - outcome.gradient).max():.2e})")

stepped = adapt_step(query, [pair], config)
print(f"\nafter one step (eps=0.1): {np.round(stepped.values, 6)}")
margin_before = similarity(query, pair.winner) - similarity(query, pair.loser)
margin_after = similarity(stepped, pair.winner) - similarity(stepped, pair.loser)
print(f"margin: {margin_before:.6f} -> {margin_after:.6f} "
      f"(gain {margin_after - margin_before:.6f} = eps * (1-p) * |w-l|^2)")

# Several steps drive the loss down monotonically on a single pair.
final, trace = adapt(query, [pair], AdaptConfig(epsilon=0.3, steps=6, renormalize=False))
print("\nsix-step trace (loss before each step):")
for k, record in enumerate(trace.steps, start=1):
    print(f"  step {k}: loss {record.loss_before:.6f}  |grad| {record.gradient_norm:.6f}")
print(f"final query: {np.round(final.values, 6)}")
