"""Infinite eigenvalues via the homogeneous mode.

A quadratic with a singular leading coefficient has eigenvalues at infinity.
In homogeneous mode the solver works with projective points (alpha, beta),
so lam = alpha/beta = inf is just the point (1, 0) and converges like any
finite eigenvalue.  Two cases:

  1. singular leading coefficient, simple at infinity: found and registered
  2. gyroscopic problem, defective double at infinity: registration refuses
     the pair and the point goes on the blocked list, so the solver spends
     the rest of the run on finite eigenvalues instead of reconverging to it
"""
import math

import numpy as np

from eigensel import homogeneous as hom
from eigensel.jdsolver import JDOptions, jd_solve
from eigensel.problems import PolyProblem, gen_gyroscopic

# case 1: A has a zero on the diagonal, so det(A) = 0 and inf is simple
n = 8
rng = np.random.default_rng(8)
A = np.diag(np.r_[0.0, rng.uniform(1.0, 2.0, n - 1)])
B = np.eye(n)
C = np.diag(-rng.uniform(1.0, 2.0, n))
prob = PolyProblem([C, B, A])        # coefficients ascending in lam

opts = JDOptions(target=1e8, num_pairs=1, tol=1e-9, mindim=4, maxdim=8,
                 mode="homogeneous", seed=0)
res = jd_solve(prob, opts)
t = res.registry[0]
print(f"case 1: value={t.value}, point=({t.point.alpha:.3g}, "
      f"{t.point.beta:.3g}), residual={t.residual:.2e}")
print(f"        eigenvector weight on the null direction of A: "
      f"{abs(t.right[0]):.6f}")

# case 2: gyroscopic mass matrix also singular, but infinity is defective.
# registering it would divide by a zero Jacobian, so the attempt is
# rejected and the point is blocked.
prob2 = gen_gyroscopic(16, seed=1)
opts2 = JDOptions(target=1e9, num_pairs=2, tol=1e-8, mindim=4, maxdim=8,
                  max_outer=40, mode="homogeneous", seed=0)
res2 = jd_solve(prob2, opts2)

blocked_inf = [b for b in res2.blocked
               if (b.is_infinite if isinstance(b, hom.ProjectivePoint)
                   else (isinstance(b, float) and math.isinf(b)))]
print(f"case 2: blocked points at infinity: {len(blocked_inf)}")
for r in res2.records:
    if r.event.startswith("rejected"):
        print(f"        iteration {r.iteration}: {r.event}")
        break
finite = [t.value for t in res2.registry if t.value != math.inf]
print(f"        finite eigenvalues registered instead: {len(finite)}")
