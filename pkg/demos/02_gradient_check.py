"""
Checking the hand-written gradients
===================================

Every parameter gradient of every model variant is compared against a
central finite difference on a tiny random problem. Breaking one adjoint
on purpose shows the check has teeth.
"""

from dyged.autodiff import Op, corrupted_adjoint
from dyged.gradcheck import GradcheckConfig, check_all, check_variant

cfg = GradcheckConfig()
checks = check_all(cfg)
worst = max(checks, key=lambda c: c.max_rel_error)
print(f"{len(checks)} tensors checked, all within {cfg.tol}: {all(c.passed for c in checks)}")
print(f"worst: {worst.variant}:{worst.name} relative error {worst.max_rel_error:.2e}")

# scale the relu adjoint by 1.5; every tensor upstream of a relu should fail
with corrupted_adjoint(Op.RELU):
    broken = check_variant("full", cfg)
for c in broken:
    print(f"  {c.name:<12} {c.max_rel_error:9.2e}  {'ok' if c.passed else 'FAIL'}")
