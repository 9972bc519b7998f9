"""Central finite differences against every hand-written backward pass.

Run: python demos/gradient_check.py
"""
from textspine.gradcheck import CHECKS, TOLERANCE, run_checks

results = run_checks(trials=5, seed=0)
for name in CHECKS:
    errs = [r.error for r in results if r.op == name]
    print(f"{name:>14}: worst relative error {max(errs):.2e}")

# Negative control: perturb the analytic gradients and watch every check fail.
broken = run_checks(["conv", "lcau"], trials=3, seed=0, inject_bug=True)
print("\nwith injected bug, failures:", sum(not r.passed for r in broken), "of", len(broken),
      f"(tolerance {TOLERANCE:g})")
