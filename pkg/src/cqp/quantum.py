"""Dense state-vector register over named qubits.

Basis index convention: the first qubit in ``order`` is the most significant
bit, so ``|q0 q1 ... q_{n-1}>`` has index ``sum(b_k * 2**(n-1-k))``.
All operations return new states.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
PRUNE_TOL = 1e-12


class QuantumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Unitary:
    arity: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        dim = 2 ** self.arity
        if self.matrix.shape != (dim, dim):
            raise QuantumError(f"matrix shape {self.matrix.shape} does not match arity {self.arity}")

    def is_unitary(self, tol: float = 1e-10) -> bool:
        m = self.matrix
        return bool(np.allclose(m @ m.conj().T, np.eye(len(m)), atol=tol, rtol=0))


_S = 1 / np.sqrt(2)
_GATES = {
    "H": np.array([[_S, _S], [_S, -_S]], dtype=complex),
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "CNot": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
}
_ALIASES = {"sigma0": "I", "sigma1": "X", "sigma2": "Y", "sigma3": "Z"}


def builtin_gate(name: str) -> Unitary:
    name = _ALIASES.get(name, name)
    try:
        m = _GATES[name]
    except KeyError:
        raise QuantumError(f"unknown gate {name!r}") from None
    m = m.copy()
    m.flags.writeable = False
    return Unitary(int(np.log2(len(m))), m)


@dataclass(frozen=True, eq=False)
class QState:
    order: tuple[str, ...]
    amps: np.ndarray

    def __post_init__(self) -> None:
        if len(set(self.order)) != len(self.order):
            raise QuantumError(f"duplicate qubit names in {self.order}")
        if self.amps.shape != (2 ** len(self.order),):
            raise QuantumError("amplitude vector length must be 2**n")
        if not np.all(np.isfinite(self.amps)):
            raise QuantumError("amplitudes must be finite")
        self.amps.flags.writeable = False

    @classmethod
    def empty(cls) -> "QState":
        return cls((), np.ones(1, dtype=complex))

    @classmethod
    def from_amplitudes(cls, order: Sequence[str], amps: Sequence[complex]) -> "QState":
        return cls(tuple(order), np.array(amps, dtype=complex))

    @property
    def n(self) -> int:
        return len(self.order)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def index_of(self, name: str) -> int:
        try:
            return self.order.index(name)
        except ValueError:
            raise QuantumError(f"unknown qubit {name!r}") from None

    def tensor(self, other: "QState") -> "QState":
        return QState(self.order + other.order, np.kron(self.amps, other.amps))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QState):
            return NotImplemented
        return self.order == other.order and bool(np.array_equal(self.amps, other.amps))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"QState({render_state(self)})"


@dataclass(frozen=True, eq=False)
class MeasOutcome:
    result: int
    probability: float
    post: QState


def allocate(s: QState, fresh: str) -> QState:
    if fresh in s.order:
        raise QuantumError(f"qubit name {fresh!r} already allocated")
    amps = np.stack([s.amps, np.zeros_like(s.amps)], axis=-1).reshape(-1)
    return QState(s.order + (fresh,), amps)


def _positions(s: QState, targets: Sequence[str]) -> list[int]:
    pos = [s.index_of(t) for t in targets]
    if len(set(pos)) != len(pos):
        raise QuantumError(f"duplicate targets {list(targets)}")
    return pos


def apply_unitary(s: QState, targets: Sequence[str], u: Unitary) -> QState:
    if len(targets) != u.arity:
        raise QuantumError(f"gate of arity {u.arity} applied to {len(targets)} qubit(s)")
    pos = _positions(s, targets)
    n, r = s.n, u.arity
    psi = np.moveaxis(s.amps.reshape((2,) * n), pos, range(r))
    shape = psi.shape
    out = (u.matrix @ psi.reshape(2 ** r, -1)).reshape(shape)
    out = np.moveaxis(out, range(r), pos)
    return QState(s.order, np.ascontiguousarray(out).reshape(-1))


def _blocks(s: QState, pos: list[int]) -> tuple[np.ndarray, tuple[int, ...]]:
    psi = np.moveaxis(s.amps.reshape((2,) * s.n), pos, range(len(pos)))
    return psi.reshape(2 ** len(pos), -1), psi.shape


def measure_probabilities(s: QState, targets: Sequence[str]) -> list[tuple[int, float]]:
    """Outcomes ``(m, p_m)`` with ``p_m`` at least the pruning threshold."""
    pos = _positions(s, targets)
    if not pos:
        raise QuantumError("measure needs at least one qubit")
    blocks, _ = _blocks(s, pos)
    probs = np.sum(blocks.real ** 2 + blocks.imag ** 2, axis=1)
    total = float(probs.sum())
    return [(m, float(p) / total) for m, p in enumerate(probs) if p >= PRUNE_TOL]


def collapse(s: QState, targets: Sequence[str], m: int) -> QState:
    """Post-measurement state for outcome ``m``, renormalised by ``sqrt(p_m)``."""
    pos = _positions(s, targets)
    blocks, shape = _blocks(s, pos)
    if not 0 <= m < len(blocks):
        raise QuantumError(f"outcome {m} out of range")
    p = float(np.sum(np.abs(blocks[m]) ** 2))
    if p < PRUNE_TOL:
        raise QuantumError(f"outcome {m} has probability {p:.3g}")
    post = np.zeros_like(blocks)
    post[m] = blocks[m] / np.sqrt(p)
    post = np.moveaxis(post.reshape(shape), range(len(pos)), pos)
    return QState(s.order, np.ascontiguousarray(post).reshape(-1))


def measure(s: QState, targets: Sequence[str]) -> list[MeasOutcome]:
    """Standard-basis measurement of ``targets``; first target is the high bit."""
    return [MeasOutcome(m, p, collapse(s, targets, m)) for m, p in measure_probabilities(s, targets)]


def permute(s: QState, new_order: Sequence[str]) -> QState:
    new_order = tuple(new_order)
    if sorted(new_order) != sorted(s.order) or len(set(new_order)) != len(new_order):
        raise QuantumError(f"{new_order} is not a permutation of {s.order}")
    axes = [s.order.index(q) for q in new_order]
    psi = np.transpose(s.amps.reshape((2,) * s.n), axes)
    return QState(new_order, np.ascontiguousarray(psi).reshape(-1))


def states_equal_up_to_phase(a: QState, b: QState, tol: float = 1e-9) -> bool:
    if sorted(a.order) != sorted(b.order):
        raise QuantumError(f"different qubit sets {a.order} / {b.order}")
    bv = permute(b, a.order).amps
    overlap = np.vdot(bv, a.amps)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(a.amps - phase * bv)) <= tol


def subsystem_fidelity(s: QState, qubits: Sequence[str], target: Sequence[complex]) -> float:
    """Probability mass of ``s`` inside ``|target> (x) anything`` on ``qubits``.

    Equals 1 exactly when those qubits are unentangled from the rest and in
    ``target`` up to a global phase.
    """
    pos = _positions(s, qubits)
    k = len(pos)
    t = np.asarray(target, dtype=complex)
    t = t / np.linalg.norm(t)
    psi = np.moveaxis(s.amps.reshape((2,) * s.n), pos, range(k)).reshape(2 ** k, -1)
    return float(np.linalg.norm(t.conj() @ psi) ** 2)


def basis_state(order: Sequence[str], bits: str) -> QState:
    amps = np.zeros(2 ** len(order), dtype=complex)
    amps[int(bits, 2) if bits else 0] = 1
    return QState(tuple(order), amps)


def extract_subsystem(s: QState, qubits: Sequence[str], tol: float = 1e-9) -> QState | None:
    """Pure state of ``qubits`` if they are unentangled from the rest, else ``None``."""
    pos = _positions(s, qubits)
    blocks, _ = _blocks(s, pos)
    u, sv, _ = np.linalg.svd(blocks, full_matrices=False)
    if len(sv) > 1 and float(np.sum(sv[1:] ** 2)) > tol:
        return None
    vec = u[:, 0]
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])  # fix the phase: largest entry real positive
    return QState(tuple(qubits), np.ascontiguousarray(vec))


# ---------------------------------------------------------------------------
# Rendering

RENDER_EPS = 1e-9


def _fmt(x: float) -> str:
    s = f"{x:.6g}"
    return "0" if s in ("-0", "0") else s


def _fmt_amp(a: complex) -> tuple[str, str]:
    """Return (sign, magnitude text) for one amplitude."""
    re_, im = a.real, a.imag
    if abs(im) < RENDER_EPS:
        return ("-" if re_ < 0 else "+"), _fmt(abs(re_))
    if abs(re_) < RENDER_EPS:
        return ("-" if im < 0 else "+"), _fmt(abs(im)) + "i"
    sign = "-" if im < 0 else "+"
    return "+", f"({_fmt(re_)}{sign}{_fmt(abs(im))}i)"


def render_state(s: QState) -> str:
    """``x,y = 0.707107|00> + 0.707107|11>`` with 6 significant digits."""
    if s.n == 0:
        return "(no qubits)"
    terms = []
    for k, a in enumerate(s.amps):
        if abs(a) < RENDER_EPS:
            continue
        sign, mag = _fmt_amp(complex(a))
        ket = "|" + format(k, f"0{s.n}b") + ">"
        if not terms:
            terms.append(("-" if sign == "-" else "") + mag + ket)
        else:
            terms.append(f"{sign} {mag}{ket}")
    return ",".join(s.order) + " = " + " ".join(terms)
