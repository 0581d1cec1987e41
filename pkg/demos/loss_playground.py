"""Exercise the dual-branch loss stack on synthetic decoder outputs.

Simulates a 12-step, 50-word decoder: the "original" branch sees clean
logits, the "augmented" branch sees a perturbed copy. Computes the two
cross-entropy terms, all three consistency variants, and the combined
objective across a lambda sweep, then spot-checks the analytic gradients
against finite differences.
"""

import numpy as np

from qacap import losskit

rng = np.random.default_rng(11)
steps, vocab = 12, 50

targets = rng.integers(0, vocab, size=steps)
logits_orig = rng.normal(size=(steps, vocab)) * 2.0
logits_orig[np.arange(steps), targets] += 4.0   # roughly right predictions
logits_aug = logits_orig + rng.normal(size=(steps, vocab)) * 0.8

latent_orig = rng.normal(size=(8, 16))
latent_aug = latent_orig + rng.normal(size=(8, 16)) * 0.3

probs_orig = losskit.softmax(logits_orig)
probs_aug = losskit.softmax(logits_aug)

xe_orig = losskit.xe_loss(probs_orig, targets)
xe_aug = losskit.xe_loss(probs_aug, targets)
print(f"xe_orig = {xe_orig:.4f}   xe_aug = {xe_aug:.4f}")

consistency = {
    "lac (latent)": losskit.lac_loss(latent_orig, latent_aug),
    "loc (logits)": losskit.loc_loss(logits_orig, logits_aug),
    "lbc (labels)": losskit.lbc_loss(probs_orig, probs_aug),
}
for name, value in consistency.items():
    print(f"{name:>13} = {value:.4f}")

print("\nlambda sweep of the combined objective (label consistency):")
lbc = consistency["lbc (labels)"]
for lam in (0.0, 0.25, 0.5, 1.0, 2.0):
    bundle = losskit.combined_loss(xe_orig, xe_aug, lbc, lam)
    note = "  <- consistency disabled" if lam == 0.0 else ""
    print(f"  lambda={lam:4.2f}  total={bundle.total:.4f}{note}")

# --- gradient spot checks against central finite differences
def fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g

small = rng.normal(size=(4, 6))
small_targets = rng.integers(0, 6, size=4)
analytic = losskit.xe_grad(small, small_targets)
numeric = fd(lambda m: losskit.xe_loss_from_logits(m, small_targets), small)
print(f"\nxe gradient max |analytic - fd| = {np.abs(analytic - numeric).max():.2e}")

a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
analytic = losskit.frobenius_grad(a, b)[0]
numeric = fd(lambda m: losskit.frobenius_distance(m, b), a)
print(f"frobenius gradient max |analytic - fd| = {np.abs(analytic - numeric).max():.2e}")

# --- the full self-check table (what `qacap losscheck` prints)
print("\nself-check suite:")
for check in losskit.run_losscheck(seed=0):
    status = "PASS" if check.passed else "FAIL"
    print(f"  {status}  {check.name}")
