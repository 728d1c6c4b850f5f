"""scikit-learn style front end: phases in, eigenvalues out.

``fit`` validates the parameter regime and fixes the ambient box; nothing is
learned from data.  ``predict`` maps a column of phases x to E(x), the
eigenvalue whose eigenvector is localised at the origin.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .model import Frequency, LatticeBox, PotentialSpec, check_diophantine
from .oracle import label_branches
from .scheme import SchemeParams, run_scheme


def _phases(X):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError("expected a single column of phases")
        X = X[:, 0]
    return X


class _PhaseEstimator(BaseEstimator):
    def _build(self):
        spec = PotentialSpec(self.kind, alpha=self.alpha, power=self.power)
        freq = Frequency(tuple(np.atleast_1d(self.omega)), self.rho, self.mu)
        return spec, freq

    def fit(self, X=None, y=None):
        spec, freq = self._build()
        self.diophantine_ = check_diophantine(freq, self.diophantine_N)
        self.potential_ = spec
        self.frequency_ = freq
        self.ambient_ = LatticeBox.cube(freq.dim, self.ambient_radius)
        return self

    def predict(self, X):
        check_is_fitted(self, "ambient_")
        return np.array([self._energy(float(x)) for x in _phases(X)])


class QuasiperiodicDiagonalizer(_PhaseEstimator):
    """E(x) from the covariant rotation scheme; ``eigenpairs`` also returns
    the eigenvectors (one row per phase) and residuals."""

    def __init__(self, eps, delta, beta, M, kind="sawtooth-power", alpha=1.0, power=1.0,
                 omega=(0.6180339887498949,), rho=2.0, mu=1.0, s_max=5, ambient_radius=20,
                 residual_target=1e-12, diophantine_N=1000):
        self.eps = eps
        self.delta = delta
        self.beta = beta
        self.M = M
        self.kind = kind
        self.alpha = alpha
        self.power = power
        self.omega = omega
        self.rho = rho
        self.mu = mu
        self.s_max = s_max
        self.ambient_radius = ambient_radius
        self.residual_target = residual_target
        self.diophantine_N = diophantine_N

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.params_ = SchemeParams(self.potential_, self.frequency_, self.eps, self.delta,
                                    self.beta, self.M, s_max=self.s_max,
                                    residual_target=self.residual_target)
        return self

    def _energy(self, x):
        return run_scheme(self.params_, x, self.ambient_).E

    def eigenpairs(self, X):
        check_is_fitted(self, "params_")
        runs = [run_scheme(self.params_, float(x), self.ambient_) for x in _phases(X)]
        return (np.array([r.E for r in runs]), np.array([r.psi for r in runs]),
                np.array([r.residual for r in runs]))


class OracleDiagonalizer(_PhaseEstimator):
    """E_0(x) from dense diagonalisation and phase-ordered branch labels."""

    def __init__(self, eps, kind="sawtooth-power", alpha=1.0, power=1.0,
                 omega=(0.6180339887498949,), rho=2.0, mu=1.0, ambient_radius=20,
                 diophantine_N=1000):
        self.eps = eps
        self.kind = kind
        self.alpha = alpha
        self.power = power
        self.omega = omega
        self.rho = rho
        self.mu = mu
        self.ambient_radius = ambient_radius
        self.diophantine_N = diophantine_N

    def _energy(self, x):
        table = label_branches(self.potential_, self.eps, self.frequency_, x, self.ambient_)
        return table.energy(np.zeros(self.frequency_.dim, dtype=int))
