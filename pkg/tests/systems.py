"""Small hand-built state-space systems shared by the tests."""
import numpy as np

from trendcycle.spec import baseline_spec, reference_parameters
from trendcycle.statespace import StateSpaceSystem, assemble, cycle_system, local_level_system


def ar1_system(phi=0.7, var=0.5, noise=0.1):
    P1 = np.array([[var / (1 - phi * phi)]])
    return StateSpaceSystem(np.ones((1, 1)), np.array([0.3]), np.array([[phi]]), np.array([0.1]),
                            np.ones((1, 1)), np.array([[var]]), ("x",), np.array([False]),
                            np.array([0.1 / (1 - phi)]), P1, ("y",), np.array([noise]))


def trend_cycle_system(noise=0.0):
    """Two observables sharing a random-walk-with-drift trend and a cycle."""
    Tc = cycle_system(0.85, 0.4, 0.3).T
    T = np.zeros((4, 4))
    T[:2, :2] = Tc
    T[2, 2] = 1.0
    T[3, 3] = 1.0
    Z = np.array([[1.0, 0.0, 1.0, 0.0], [0.6, 0.0, 0.5, 1.0]])
    Q = np.diag([0.3, 0.3, 0.05, 0.02])
    P1 = np.zeros((4, 4))
    P1[:2, :2] = cycle_system(0.85, 0.4, 0.3).P1
    return StateSpaceSystem(Z, np.array([0.0, 0.2]), T, np.array([0.0, 0.0, 0.1, -0.05]), np.eye(4), Q,
                            ("psi", "psi*", "mu1", "mu2"), np.array([False, False, True, True]),
                            np.array([0.0, 0.0, 5.0, 1.0]), P1, ("a", "b"), np.full(2, noise))


def baseline_system(jitter=0.0):
    spec = baseline_spec()
    return assemble(spec, reference_parameters(spec), jitter=jitter)


def oracle_systems():
    """(name, system, T) cases for the dense likelihood comparison."""
    return [
        ("local_level", local_level_system(0.3, 0.8), 6),
        ("local_level_proper", local_level_system(0.3, 0.8, a1=1.0, diffuse=False, P1=2.0), 5),
        ("ar1", ar1_system(), 6),
        ("cycle", cycle_system(0.9, 0.5, 0.4), 6),
        ("trend_cycle", trend_cycle_system(), 5),
        ("trend_cycle_noisy", trend_cycle_system(0.05), 5),
        ("baseline", baseline_system(), 5),
    ]


def synthetic_data(sys, nT, seed, missing=0.2):
    rng = np.random.default_rng(seed)
    a = sys.a1 + rng.normal(size=sys.m) * sys.diffuse
    ys = np.empty((nT, sys.n))
    L = np.linalg.cholesky(sys.P1 + 1e-12 * np.eye(sys.m))
    a = a + L @ rng.normal(size=sys.m)
    Lq = np.sqrt(np.diag(sys.Q))
    for t in range(nT):
        ys[t] = sys.d + sys.Z @ a + np.sqrt(sys.H) * rng.normal(size=sys.n)
        a = sys.c + sys.T @ a + sys.R @ (Lq * rng.normal(size=Lq.size))
    mask = rng.uniform(size=ys.shape) < missing
    mask[0] = False
    ys[mask] = np.nan
    return ys
