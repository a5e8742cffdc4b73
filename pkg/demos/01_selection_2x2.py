"""Why angle-based duplicate filtering fails and the selection value does not.

The 2x2 pencil A - lam*I with A = [[0, eps], [0, delta]] has eigenvalues 0
and delta = 1e-6 whose eigenvectors are almost parallel (angle ~ delta/eps).
A filter that rejects candidates by eigenvector angle against found pairs
would throw the second eigenvalue away.  The divided-difference value keeps
them apart: it scores the registered eigenvector 1 and the true second
eigenvector 0, because the left vector of the first eigenvalue annihilates
the second one exactly.
"""
import numpy as np

from eigensel.jdsolver import JDOptions, jd_solve
from eigensel.problems import gen_example_2x2
from eigensel.selection import CandidatePair, criterion_value, register

delta, eps = 1e-6, 1e-3
prob = gen_example_2x2(delta, eps)

x1 = np.array([1.0, 0.0])            # eigenvector of 0
x2 = np.array([eps, delta])          # eigenvector of delta, nearly parallel
x2 = x2 / np.linalg.norm(x2)
angle = np.arccos(min(1.0, abs(np.vdot(x1, x2))))
print(f"eigenvalues 0 and {delta:g}, eigenvector angle {angle:.2e} rad")

registry = []
register(prob, registry, 0.0, x1, np.array([delta, -eps]))

for label, theta, v in [("registered pair itself", 0.0, x1),
                        ("true second eigenpair ", delta, x2)]:
    val = criterion_value(prob, registry, CandidatePair(theta, v))
    print(f"selection value, {label}: {val:.3e}")

# the solver run: both eigenvalues, no duplicate, no angle heuristics
opts = JDOptions(target=0.0, num_pairs=2, tol=1e-12, mindim=1, maxdim=2,
                 max_outer=50, seed=0)
res = jd_solve(prob, opts)
print("jd_solve returned:", sorted(t.value.real for t in res.registry))
