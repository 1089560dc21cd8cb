"""Plant, noise, cost-weight and scheduler parameter definitions.

A SystemModel bundles the linear dynamics x' = Ax + Bu + w, the measurement
y = Cx + v, the noise covariances, and the quadratic cost weights. Structural
and definiteness requirements are enforced at construction; the rank
conditions needed by the steady-state theory are checked separately by
validate_model so that deliberately degenerate models (B = 0, W = 0) can
still be built for unit-level work.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DefinitenessError, ModelError, ValidationFailure

SYMMETRY_TOL = 1e-10
PSD_EIG_FLOOR = -1e-10
PD_EIG_MIN = 1e-10
MAX_DIM = 64


def symmetrize(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero.

    Inputs are PSD only up to tolerance, so eigh plus clamping is the
    robust factorization here.
    """
    vals, vecs = np.linalg.eigh(symmetrize(M))
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    return arr


def _check_symmetric(M: np.ndarray, name: str) -> np.ndarray:
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > SYMMETRY_TOL:
        raise DefinitenessError(
            f"{name} is not symmetric: max |M - M^T| = {asym:.3e} > {SYMMETRY_TOL:g}"
        )
    return symmetrize(M)


def _min_eig(M: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(M))) if M.size else 0.0


@dataclass(frozen=True)
class SystemModel:
    """Immutable LTI plant with Gaussian noise and quadratic cost weights.

    A: n x n dynamics, B: n x m input map, C: p x n output map.
    W, V: process/measurement noise covariances. Q, Qf, R: running state,
    terminal state and input cost weights. x0_mean, X0: initial state mean
    and covariance.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    Qf: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    X0: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got {A.shape}")
        B = _as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise ModelError(f"B must have {n} rows to match A, got {B.shape}")
        m = B.shape[1]
        C = _as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise ModelError(f"C must have {n} columns to match A, got {C.shape}")
        p = C.shape[0]
        if max(n, m, p) > MAX_DIM:
            raise ModelError(
                f"dimensions (n={n}, m={m}, p={p}) exceed the supported cap {MAX_DIM}"
            )

        shapes = {"W": (n, n), "V": (p, p), "Q": (n, n), "Qf": (n, n),
                  "R": (m, m), "X0": (n, n)}
        mats = {}
        for name, want in shapes.items():
            M = _as_matrix(getattr(self, name), name)
            if M.shape != want:
                raise ModelError(f"{name} must be {want[0]}x{want[1]}, got {M.shape}")
            mats[name] = _check_symmetric(M, name)

        for name in ("W", "Q", "Qf", "X0"):
            ev = _min_eig(mats[name])
            if ev < PSD_EIG_FLOOR:
                raise DefinitenessError(
                    f"{name} must be positive semidefinite: min eigenvalue {ev:.3e}"
                )
        for name in ("V", "R"):
            ev = _min_eig(mats[name])
            if ev <= PD_EIG_MIN:
                raise DefinitenessError(
                    f"{name} must be positive definite: min eigenvalue {ev:.3e}"
                )

        x0 = np.asarray(self.x0_mean, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ModelError(f"x0_mean must have length {n}, got {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ModelError("x0_mean contains non-finite entries")

        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        for name, M in mats.items():
            object.__setattr__(self, name, M)
        object.__setattr__(self, "x0_mean", x0)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(n, m, p) = state, input, output dimensions."""
        return self.A.shape[0], self.B.shape[1], self.C.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SystemModel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("A", "B", "C", "W", "V", "Q", "Qf", "R", "x0_mean", "X0")
        )


@dataclass(frozen=True)
class SchedulerParams:
    """Trigger sensitivity and timeout of the transmission scheduler.

    lam: positive scalar weight on the squared comparison error inside the
         non-transmit probability exp(-lam * |e|^2).
    timeout: hard upper bound on consecutive non-transmissions.
    """

    lam: float
    timeout: int

    def __post_init__(self):
        lam = float(self.lam)
        if not np.isfinite(lam) or lam <= 0:
            raise ModelError(f"lam must be a positive finite scalar, got {self.lam!r}")
        timeout = self.timeout
        if not isinstance(timeout, (int, np.integer)) or isinstance(timeout, bool):
            raise ModelError(f"timeout must be an integer, got {self.timeout!r}")
        if timeout < 1:
            raise ModelError(f"timeout must be >= 1, got {timeout}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "timeout", int(timeout))


def controllability_rank(A: np.ndarray, B: np.ndarray) -> int:
    """Numerical rank of [B, AB, ..., A^(n-1)B].

    Uses the SVD threshold max(n, n*m) * sigma_max * eps, i.e. numpy's
    default relative tolerance for an n x (n*m) matrix.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ModelError(f"incompatible shapes for controllability test: {A.shape}, {B.shape}")
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def observability_rank(A: np.ndarray, C: np.ndarray) -> int:
    return controllability_rank(np.asarray(A, dtype=float).T,
                                np.asarray(C, dtype=float).T)


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    measured: float
    requirement: str
    required: bool = True


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ValidationCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else ("FAIL" if c.required else "warn")
            out.append(f"[{status}] {c.name}: measured {c.measured:g} ({c.requirement})")
        return out


def validate_model(model: SystemModel) -> ValidationReport:
    """Full validation report: definiteness measurements plus rank tests.

    The gating rank checks are (A,B) and (A,W^{1/2}) controllable, (A,C) and
    (A,Q^{1/2}) observable. Controllability of (A,V^{1/2}) is reported as
    informational when p == n (it is dimensionally undefined otherwise) since
    the steady-state results only need the W version.
    Deterministic and side-effect free.
    """
    n, m, p = model.dims
    checks: list[ValidationCheck] = []

    for name in ("W", "V", "Q", "Qf", "R", "X0"):
        M = getattr(model, name)
        asym = float(np.max(np.abs(M - M.T)))
        checks.append(ValidationCheck(
            f"symmetry({name})", asym <= SYMMETRY_TOL, asym,
            f"max |M - M^T| <= {SYMMETRY_TOL:g}"))
    for name in ("W", "Q", "Qf", "X0"):
        ev = _min_eig(getattr(model, name))
        checks.append(ValidationCheck(
            f"psd({name})", ev >= PSD_EIG_FLOOR, ev,
            f"min eigenvalue >= {PSD_EIG_FLOOR:g}"))
    for name in ("V", "R"):
        ev = _min_eig(getattr(model, name))
        checks.append(ValidationCheck(
            f"pd({name})", ev > PD_EIG_MIN, ev,
            f"min eigenvalue > {PD_EIG_MIN:g}"))

    rank_ab = controllability_rank(model.A, model.B)
    checks.append(ValidationCheck(
        "controllable(A,B)", rank_ab == n, rank_ab, f"rank == {n}"))
    rank_ac = observability_rank(model.A, model.C)
    checks.append(ValidationCheck(
        "observable(A,C)", rank_ac == n, rank_ac, f"rank == {n}"))
    rank_aw = controllability_rank(model.A, psd_sqrt(model.W))
    checks.append(ValidationCheck(
        "controllable(A,sqrt(W))", rank_aw == n, rank_aw, f"rank == {n}"))
    rank_aq = observability_rank(model.A, psd_sqrt(model.Q))
    checks.append(ValidationCheck(
        "observable(A,sqrt(Q))", rank_aq == n, rank_aq, f"rank == {n}"))
    if p == n:
        rank_av = controllability_rank(model.A, psd_sqrt(model.V))
        checks.append(ValidationCheck(
            "controllable(A,sqrt(V))", rank_av == n, rank_av,
            f"rank == {n}, informational", required=False))

    return ValidationReport(tuple(checks))


def require_valid(model: SystemModel) -> ValidationReport:
    """validate_model that raises ValidationFailure when a gating check fails."""
    report = validate_model(model)
    if not report.passed:
        raise ValidationFailure(report)
    return report
