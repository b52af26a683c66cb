"""Exact dynamics of small blockaded ensembles.

The state space is the product basis of N two-level atoms; bit ``k`` of a
basis index is set when atom ``k`` is in the Rydberg state.  The Hamiltonian

    H / hbar = 2 pi [ sum_i (Omega/2) sigma_x^i - Delta sum_i n_i + sum_{i<j} V_ij n_i n_j ]

is built densely (N <= 12) and propagated by Hermitian eigendecomposition, so
evolution to any set of times costs a single diagonalisation.  Shot-to-shot
laser noise is quasi-static: each shot samples its own detuning and Rabi
frequency and is otherwise exact.
"""
from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis.fitting import fit_damped_cosine
from .atom_light import vdw_interaction
from .cavity import point_generators
from .core_types import TWO_PI

MAX_ATOMS = 12


def popcounts(n_atoms):
    idx = np.arange(2**n_atoms)
    return ((idx[:, None] >> np.arange(n_atoms)) & 1).sum(axis=1)


@dataclass(frozen=True, eq=False)
class QuantumState:
    amplitudes: np.ndarray

    @property
    def n_atoms(self):
        return int(round(math.log2(self.amplitudes.shape[-1])))

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def ground(cls, n_atoms):
        psi = np.zeros(2**n_atoms, dtype=complex)
        psi[0] = 1.0
        return cls(psi)

    @classmethod
    def w_state(cls, n_atoms):
        psi = np.zeros(2**n_atoms, dtype=complex)
        psi[[1 << k for k in range(n_atoms)]] = 1.0 / math.sqrt(n_atoms)
        return cls(psi)


@dataclass(frozen=True, eq=False)
class BlockadeHamiltonian:
    """Drive parameters in Hz; ``vmat`` is the symmetric pair-interaction matrix (Hz)."""

    n_atoms: int
    omega: float
    detuning: float
    vmat: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_atoms <= MAX_ATOMS:
            raise ValueError(f"n_atoms must lie in 1..{MAX_ATOMS} (dense propagation memory guard)")
        v = np.asarray(self.vmat, dtype=float)
        if v.shape != (self.n_atoms, self.n_atoms):
            raise ValueError("vmat must be n_atoms x n_atoms")
        if not np.allclose(v, v.T, rtol=0, atol=0) or np.any(np.diag(v) != 0):
            raise ValueError("vmat must be symmetric with zero diagonal")
        object.__setattr__(self, "vmat", v)

    @property
    def dim(self):
        return 2**self.n_atoms

    def diagonal(self):
        """Diagonal in Hz: -Delta * n_exc + sum of V_ij over excited pairs."""
        n = self.n_atoms
        bits = (np.arange(self.dim)[:, None] >> np.arange(n)) & 1
        diag = -self.detuning * bits.sum(axis=1).astype(float)
        for i, j in itertools.combinations(range(n), 2):
            if self.vmat[i, j]:
                diag += self.vmat[i, j] * (bits[:, i] & bits[:, j])
        return diag

    def matrix(self):
        """Dense Hamiltonian in angular-frequency units (rad/s)."""
        d = self.dim
        h = np.zeros((d, d))
        states = np.arange(d)
        for k in range(self.n_atoms):
            h[states ^ (1 << k), states] = 0.5 * self.omega
        h[states, states] = self.diagonal()
        return TWO_PI * h

    def with_drive(self, omega=None, detuning=None):
        return BlockadeHamiltonian(
            self.n_atoms,
            self.omega if omega is None else omega,
            self.detuning if detuning is None else detuning,
            self.vmat,
        )


def interaction_matrix(positions, c6):
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = pos.shape[0]
    v = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        r = float(np.linalg.norm(pos[i] - pos[j]))
        if r <= 0:
            raise ValueError(f"atoms {i} and {j} coincide")
        v[i, j] = v[j, i] = vdw_interaction(c6, r)
    return v


def build_hamiltonian(positions, c6, omega, detuning=0.0):
    """Blockade Hamiltonian for atoms at ``positions`` (m) with V_ij = C6 / R_ij^6."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if pos.shape[0] < 1:
        raise ValueError("need at least one atom")
    if pos.shape[0] > MAX_ATOMS:
        raise ValueError(f"{pos.shape[0]} atoms exceed the hard cap of {MAX_ATOMS}")
    return BlockadeHamiltonian(pos.shape[0], omega, detuning, interaction_matrix(pos, c6))


class Propagator:
    """exp(-i H t) from one Hermitian eigendecomposition, reused for every t."""

    def __init__(self, h):
        mat = h.matrix() if isinstance(h, BlockadeHamiltonian) else np.asarray(h)
        self.energies, self.vectors = np.linalg.eigh(mat)

    def evolve(self, psi0, times):
        """Amplitudes at each time, shape ``(len(times), dim)``."""
        psi0 = psi0.amplitudes if isinstance(psi0, QuantumState) else np.asarray(psi0)
        if psi0.shape[-1] != self.vectors.shape[0]:
            raise ValueError("state and Hamiltonian dimensions differ")
        t = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(t < 0):
            raise ValueError("t must be >= 0")
        coef = self.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(t, self.energies))
        return (phases * coef) @ self.vectors.T


def evolve(state, h, t):
    """State after time ``t`` (s) under ``h`` (BlockadeHamiltonian or rad/s matrix)."""
    amps = Propagator(h).evolve(state, [t])[0]
    return QuantumState(amps)


def excitation_distribution(state):
    """Probability of each excitation number k = 0..N.

    Accepts a :class:`QuantumState` or an amplitude array whose last axis is
    the basis; returns ``(P, p_le1)`` with ``P[..., k]``.
    """
    amps = state.amplitudes if isinstance(state, QuantumState) else np.asarray(state)
    n = int(round(math.log2(amps.shape[-1])))
    pk = popcounts(n)
    prob = np.abs(amps) ** 2
    out = np.zeros(prob.shape[:-1] + (n + 1,))
    for k in range(n + 1):
        out[..., k] = prob[..., pk == k].sum(axis=-1)
    return out, out[..., 0] + (out[..., 1] if n >= 1 else 0.0)


# --------------------------------------------------------------------------
# collective Rabi scans
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Quasi-static Gaussian spreads: detuning (Hz) and relative Rabi amplitude."""

    sigma_delta: float = 0.0
    sigma_omega_rel: float = 0.0

    def __post_init__(self):
        if self.sigma_delta < 0 or self.sigma_omega_rel < 0:
            raise ValueError("noise spreads must be >= 0")


@dataclass(frozen=True)
class ShotRecord:
    time: float
    n_initial: int
    excitation_counts: np.ndarray
    p_le1: float


@dataclass
class RabiScanResult:
    n_atoms: int
    times: np.ndarray
    probabilities: np.ndarray
    observable: np.ndarray
    fit: object
    shots: int
    max_double: float = field(default=0.0)

    @property
    def omega(self):
        return self.fit["omega"]

    @property
    def tau(self):
        return self.fit["tau"]

    @property
    def quality_factor(self):
        return self.omega * self.tau

    @property
    def records(self):
        return [
            ShotRecord(float(t), self.n_atoms, self.probabilities[i], float(self.probabilities[i, :2].sum()))
            for i, t in enumerate(self.times)
        ]

    def summary(self):
        fit = self.fit
        return {
            "n_group": self.n_atoms,
            "omega_hz": fit["omega"],
            "omega_sigma_hz": fit.sigma("omega"),
            "tau_s": fit["tau"],
            "tau_sigma_s": fit.sigma("tau"),
            "tau_lower_bound_s": fit.info.get("tau_lower_bound"),
            "quality_factor": self.quality_factor,
            "max_double_excitation": self.max_double,
            "fit": fit.to_dict(),
        }


def blockade_group(n_atoms, spacing):
    """First ``n_atoms`` sites of a square 2x2 (or larger square) group with the given pitch (m)."""
    side = max(2, math.ceil(math.sqrt(n_atoms)))
    sites = [(col * spacing, row * spacing, 0.0) for row in range(side) for col in range(side)]
    return np.array(sites[:n_atoms])


def _shot(h0, times, rng, noise, extra_detuning, projection):
    delta = h0.detuning
    omega = h0.omega
    if noise.sigma_delta:
        delta += rng.normal(0.0, noise.sigma_delta)
    if noise.sigma_omega_rel:
        omega *= 1.0 + rng.normal(0.0, noise.sigma_omega_rel)
    if extra_detuning is not None:
        delta += extra_detuning(rng)
    h = h0.with_drive(omega=omega, detuning=delta)
    amps = Propagator(h).evolve(QuantumState.ground(h.n_atoms), times)
    probs, _ = excitation_distribution(amps)
    if projection:
        # one projective measurement of the excitation number per time point
        cum = np.cumsum(probs, axis=1)
        u = rng.random((len(times), 1))
        k = np.minimum((u > cum).sum(axis=1), h.n_atoms)
        probs = np.zeros_like(probs)
        probs[np.arange(len(times)), k] = 1.0
    return probs


def collective_rabi_scan(h, times, noise=NoiseModel(), shots=1, seed=0, extra_detuning=None,
                         projection_noise=False, threads=1):
    """Drive ``h`` from all-ground, average over shots and fit the Rabi oscillation.

    The fitted observable is the single-excitation probability postselected on
    at most one excitation, ``P1 / (P0 + P1)``; the oscillation starts at the
    sudden switch-on, so the fit holds ``t0 = 0``.  ``extra_detuning`` is an
    optional callable ``rng -> Hz`` adding a per-shot detuning (e.g. a
    quasi-static Stark shift).  With ``projection_noise`` each shot records a
    single measured excitation number per time instead of exact probabilities.
    """
    times = np.asarray(times, dtype=float)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be non-empty and strictly ascending")
    gens = point_generators(seed, shots)

    def work(g):
        return _shot(h, times, g, noise, extra_detuning, projection_noise)

    if threads > 1 and shots > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, gens))
    else:
        parts = [work(g) for g in gens]
    total = np.zeros((times.size, h.n_atoms + 1))
    for part in parts:  # fixed order keeps the sum bit-reproducible
        total += part
    probs = total / shots

    denom = probs[:, 0] + (probs[:, 1] if h.n_atoms >= 1 else 0.0)
    obs = np.divide(probs[:, 1], denom, out=np.zeros_like(denom), where=denom > 0)
    guess = {"A": 0.5, "omega": h.omega * math.sqrt(h.n_atoms), "phi": 0.0}
    fit = fit_damped_cosine(times, obs, init=guess, fixed={"t0": 0.0})
    double = float(probs[:, 2:].sum(axis=1).max()) if h.n_atoms >= 2 else 0.0
    return RabiScanResult(h.n_atoms, times, probs, obs, fit, shots, double)


def double_excitation_fraction(result):
    """Largest probability of two or more excitations over the scan."""
    probs = result.probabilities if isinstance(result, RabiScanResult) else np.asarray(result)
    if probs.shape[1] < 3:
        return 0.0
    return float(probs[:, 2:].sum(axis=1).max())


def write_trajectory_csv(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "p0", "p1", "p2plus", "p_le1", "n_group"])
        for res in results:
            p = res.probabilities
            for i, t in enumerate(res.times):
                p2 = float(p[i, 2:].sum()) if p.shape[1] > 2 else 0.0
                w.writerow([repr(float(t)), repr(float(p[i, 0])), repr(float(p[i, 1])), repr(p2),
                            repr(float(p[i, 0] + p[i, 1])), res.n_atoms])
