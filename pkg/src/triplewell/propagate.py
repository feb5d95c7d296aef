"""Ground-state relaxation and real-time propagation.

Both use short-iterative Lanczos: a Krylov space is built from the current
state, the exponential of the small tridiagonal matrix is applied in its
eigenbasis, and the step length is the largest one whose a-posteriori error
estimate stays below the local tolerance.  Output times falling inside a
step are evaluated from the same Krylov space, so sampling is decoupled from
the internal step size.

For long horizons on large grids, ``method="chebyshev"`` expands the
propagator over each sampling interval in Chebyshev polynomials of the
Hamiltonian rescaled to its spectral interval; it needs roughly a third of
the matrix-vector products of the Lanczos scheme and no orthogonalization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from .discretization import WELLS, Domain, PotentialSpec, aligned_full_grid, sub_grid_of
from .errors import ConfigurationError, NumericalError
from .manybody import ManyBodyOperator, ManyBodyState, assemble_hamiltonian, build_basis
from .numberstate import (
    LEAKAGE_LIMIT, NumberStateLabel, NumberStateWavefunction, SubsetState, embed_number_state,
)

log = logging.getLogger(__name__)


class _RealOperator:
    """Applies a real symmetric sparse matrix to complex vectors without upcasting it."""

    def __init__(self, matrix):
        self.matrix = sp.csr_matrix(matrix)
        self.is_real = not np.iscomplexobj(self.matrix.data)

    def __call__(self, v):
        if self.is_real and np.iscomplexobj(v):
            return self.matrix @ v.real + 1j * (self.matrix @ v.imag)
        return self.matrix @ v


@dataclass
class KrylovSpace:
    basis: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    norm: float

    def __post_init__(self):
        if len(self.alpha) > 1:
            self.theta, self.vectors = eigh_tridiagonal(self.alpha, self.beta)
        else:
            self.theta, self.vectors = self.alpha.copy(), np.ones((1, 1))
        self.first = self.vectors[0, :]

    @property
    def dimension(self) -> int:
        return len(self.alpha)

    def coefficients(self, tau, imaginary=False):
        """Krylov-space coefficients of the propagated state.

        Imaginary-time weights are taken relative to the lowest Ritz value so
        long steps do not underflow; callers renormalize.
        """
        if imaginary:
            phase = np.exp(-(self.theta - self.theta.min()) * tau)
        else:
            phase = np.exp(-1j * self.theta * tau)
        return self.vectors @ (phase * self.first)

    def error(self, tau, imaginary=False) -> float:
        if self.residual == 0.0:
            return 0.0
        return self.residual * abs(self.coefficients(tau, imaginary)[-1])

    def state(self, tau, imaginary=False):
        return self.norm * (self.coefficients(tau, imaginary) @ self.basis)


def lanczos(apply, v, m) -> KrylovSpace:
    """m-step Lanczos with full reorthogonalization, stopping on breakdown."""
    norm = float(np.linalg.norm(v))
    dim = v.shape[0]
    m = min(m, dim)
    basis = np.empty((m, dim), dtype=complex)
    basis[0] = v / norm
    alpha, beta = [], []
    residual = 0.0
    for j in range(m):
        w = apply(basis[j])
        a = float(np.vdot(basis[j], w).real)
        alpha.append(a)
        w = w - a * basis[j]
        if j > 0:
            w -= beta[-1] * basis[j - 1]
        block = basis[:j + 1]
        w -= block.T @ (block.conj() @ w)
        b = float(np.linalg.norm(w))
        if b < 1e-12 * max(1.0, abs(a)):
            residual = 0.0
            basis = basis[:j + 1]
            break
        if j == m - 1:
            residual = b
            break
        beta.append(b)
        basis[j + 1] = w / b
    else:
        basis = basis[:m]
    return KrylovSpace(basis[:len(alpha)], np.array(alpha), np.array(beta[:len(alpha) - 1]), residual, norm)


def propagate_state(coefficients, hamiltonian, t, tol=1e-9, krylov_dim=30, max_steps=10_000_000):
    """exp(-i H t) applied to ``coefficients`` (t may be negative)."""
    apply = _RealOperator(hamiltonian.matrix if isinstance(hamiltonian, ManyBodyOperator) else hamiltonian)
    psi = np.asarray(coefficients, dtype=complex)
    sign = 1.0 if t >= 0 else -1.0
    remaining = abs(t)
    tau_prev = remaining
    steps = 0
    while remaining > 0:
        space = lanczos(apply, psi, krylov_dim)
        tau = _step_length(space, min(remaining, 2 * tau_prev), tol, sign, abs(t))
        psi = space.state(sign * tau)
        remaining -= tau
        tau_prev = tau
        steps += 1
        if steps > max_steps:
            raise NumericalError("propagation exceeded the step budget")
    return psi


def _step_length(space, tau, tol, sign, horizon):
    floor = 1e-13 * max(1.0, horizon)
    while space.error(sign * tau) > tol:
        tau *= 0.6
        if tau < floor:
            raise NumericalError(
                f"Krylov step underflow: tau={tau:.3e} with dimension {space.dimension}, "
                f"residual {space.residual:.3e}; raise krylov_dim or loosen the tolerance"
            )
    return tau


def spectral_bounds(matrix) -> tuple:
    """Gershgorin interval containing the spectrum of a symmetric matrix."""
    m = sp.csr_matrix(matrix)
    diag = m.diagonal()
    radius = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    return float((diag - radius).min()), float((diag + radius).max())


def extremal_eigenvalues(matrix, rtol: float = 1e-6) -> tuple:
    """Lowest and highest eigenvalue, falling back to Gershgorin on failure."""
    lo_g, hi_g = spectral_bounds(matrix)
    if matrix.shape[0] < 64:
        vals = np.linalg.eigvalsh(sp.csr_matrix(matrix).toarray())
        return float(vals[0]), float(vals[-1])
    try:
        v0 = np.ones(matrix.shape[0])  # fixed start keeps repeated runs bit-identical
        lo = sla.eigsh(matrix, k=1, which="SA", tol=rtol, v0=v0, return_eigenvectors=False)[0]
        hi = sla.eigsh(matrix, k=1, which="LA", tol=rtol, v0=v0, return_eigenvectors=False)[0]
    except sla.ArpackNoConvergence:
        return lo_g, hi_g
    pad = rtol * (hi - lo) * 10
    return float(max(lo - pad, lo_g)), float(min(hi + pad, hi_g))


class ChebyshevPropagator:
    """exp(-i H dt) for a fixed real symmetric H, expanded in Chebyshev polynomials.

    The real matrix acts on the real and imaginary parts separately, which
    avoids a complex copy of the matrix.
    """

    def __init__(self, matrix, tol: float = 1e-12):
        matrix = sp.csr_matrix(matrix)
        lo, hi = extremal_eigenvalues(matrix)
        self.center = 0.5 * (hi + lo)
        self.half_width = 0.5 * (hi - lo) * 1.001 + 1e-12
        self.scaled = ((matrix - self.center * sp.identity(matrix.shape[0], format="csr"))
                       / self.half_width).tocsr()
        self.tol = tol
        self._coefficients = {}

    def coefficients(self, dt):
        key = float(dt)
        if key not in self._coefficients:
            z = self.half_width * abs(dt)
            n = int(z + 12 * max(z, 1.0) ** (1 / 3) + 30)
            while abs(jv(n, z)) > self.tol * 1e-3:
                n += 10
            k = np.arange(n)
            c = jv(k, z) * (-1j * np.sign(dt)) ** k * np.where(k == 0, 1.0, 2.0)
            self._coefficients[key] = c * np.exp(-1j * self.center * dt)
        return self._coefficients[key]

    def matvecs(self, dt) -> int:
        return len(self.coefficients(dt))

    def __call__(self, psi, dt):
        c = self.coefficients(dt)
        h = self.scaled
        # real and imaginary parts run through the same real recurrence
        prev = [np.ascontiguousarray(psi.real), np.ascontiguousarray(psi.imag)]
        cur = [h @ prev[0], h @ prev[1]]
        acc_re = c[0].real * prev[0] - c[0].imag * prev[1] + c[1].real * cur[0] - c[1].imag * cur[1]
        acc_im = c[0].real * prev[1] + c[0].imag * prev[0] + c[1].real * cur[1] + c[1].imag * cur[0]
        for ck in c[2:]:
            nxt = []
            for p, q in zip(prev, cur):
                v = h @ q
                v *= 2.0
                v -= p
                nxt.append(v)
            acc_re += ck.real * nxt[0] - ck.imag * nxt[1]
            acc_im += ck.real * nxt[1] + ck.imag * nxt[0]
            prev, cur = cur, nxt
        return acc_re + 1j * acc_im


class ParitySector:
    """Restriction of a grid-backend problem to one sector of the mirror x -> -x.

    The mirror maps grid site ``j`` to ``n - 1 - j``; columns of ``basis`` are
    the normalized (anti)symmetric combinations of each configuration and its
    image.  Applies only when the Hamiltonian commutes with the mirror.
    """

    def __init__(self, basis, sign: int):
        if basis.backend != "grid":
            raise ValueError("parity sectors are defined for the grid backend")
        mirrored = np.sort(basis.n_orbitals - 1 - basis.configs, axis=1)
        image = basis.index(mirrored)
        i = np.arange(basis.dimension)
        keep = i <= image if sign > 0 else i < image
        rows, cols, vals = [], [], []
        for col, (a, b) in enumerate(zip(i[keep], image[keep])):
            if a == b:
                rows.append(a), cols.append(col), vals.append(1.0)
            else:
                rows += [a, b]
                cols += [col, col]
                vals += [np.sqrt(0.5), sign * np.sqrt(0.5)]
        self.sign = sign
        self.image = image
        self.basis = sp.csr_matrix((vals, (rows, cols)), shape=(basis.dimension, int(keep.sum())))

    @classmethod
    def detect(cls, state: ManyBodyState, hamiltonian: ManyBodyOperator, tol: float = 1e-10):
        """The sector holding ``state`` if it has definite parity under a mirror-symmetric H, else None."""
        basis = state.basis
        if basis.backend != "grid":
            return None
        pot = hamiltonian.potential
        if pot is not None and pot.tilt != 0.0:
            return None
        image = np.sort(basis.n_orbitals - 1 - basis.configs, axis=1)
        image = basis.index(image)
        c = state.coefficients
        for sign in (1, -1):
            if np.linalg.norm(c[image] - sign * c) < tol:
                h = hamiltonian.matrix.tocsr()
                if abs(h[image][:, image] - h).max() > tol:
                    return None
                return cls(basis, sign)
        return None

    def restrict(self, matrix):
        return (self.basis.T @ matrix @ self.basis).tocsr()

    def project(self, c):
        return self.basis.T @ c

    def lift(self, y):
        return self.basis @ y


@dataclass
class Trajectory:
    times: np.ndarray
    states: list | None
    observables: dict
    meta: dict = field(default_factory=dict)
    steps: int = 0


def evolve(state: ManyBodyState, hamiltonian: ManyBodyOperator, t_final: float, dt_out: float,
           tol: float = 1e-9, krylov_dim: int = 30, observer=None, store_states: bool = False,
           method: str = "krylov", use_parity: bool = True) -> Trajectory:
    """Real-time propagation with samples every ``dt_out`` up to ``t_final``.

    ``observer(t, coefficients) -> dict`` is called at every sample; its
    scalar or array results are stacked into ``Trajectory.observables``.
    ``method="chebyshev"`` propagates sample to sample with a Chebyshev
    expansion accurate to ``tol`` per interval; ``method="eigen"``
    diagonalizes the dense Hamiltonian once and suits only small bases.
    With ``use_parity`` a state of definite mirror parity under an untilted
    grid Hamiltonian is propagated inside its parity sector.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if dt_out <= 0:
        raise ValueError("dt_out must be positive")
    norm0 = state.norm()
    if abs(norm0 - 1) > 1e-8:
        raise NumericalError(f"initial state norm {norm0} is not 1")
    n_out = int(np.floor(t_final / dt_out + 1e-9))
    times = state.time + dt_out * np.arange(n_out + 1)
    if times[-1] < state.time + t_final - 1e-12:
        times = np.append(times, state.time + t_final)
    records, stored = [], []

    def sample(t, c):
        if store_states:
            stored.append(c.copy())
        rec = {"norm": float(np.linalg.norm(c)), "energy": hamiltonian.expectation(c)}
        if observer is not None:
            rec.update(observer(t, c))
        records.append(rec)

    psi = state.coefficients.astype(complex)
    sample(times[0], psi)
    matrix = hamiltonian.matrix
    sector = ParitySector.detect(state, hamiltonian) if use_parity else None
    if sector is not None:
        matrix = sector.restrict(matrix)
        psi = sector.project(psi)
        inner = sample

        def sample(t, c):
            inner(t, sector.lift(c))

    steps = 0
    if method == "eigen":
        vals, vecs = np.linalg.eigh(matrix.toarray())
        proj = vecs.T @ psi
        for t in times[1:]:
            sample(t, vecs @ (np.exp(-1j * vals * (t - times[0])) * proj))
        steps = 1
    elif method == "chebyshev":
        prop = ChebyshevPropagator(matrix, tol)
        for t_prev, t in zip(times[:-1], times[1:]):
            psi = prop(psi, t - t_prev)
            sample(t, psi)
            steps += prop.matvecs(t - t_prev)
    elif method == "krylov":
        apply = _RealOperator(matrix)
        t_now = times[0]
        next_out = 1
        tau_prev = dt_out
        while next_out < len(times):
            remaining = times[-1] - t_now
            space = lanczos(apply, psi, krylov_dim)
            tau = _step_length(space, min(remaining, max(2 * tau_prev, 1e-12)), tol, 1.0, t_final)
            if remaining - tau < 1e-12 * t_final:
                tau = remaining
            t_end = t_now + tau
            while next_out < len(times) and times[next_out] <= t_end + 1e-12:
                sample(times[next_out], space.state(times[next_out] - t_now))
                next_out += 1
            psi = space.state(tau)
            t_now = t_end
            tau_prev = tau
            steps += 1
    else:
        raise ValueError(f"unknown propagation method {method!r}")
    observables = {}
    for key in records[0]:
        observables[key] = np.array([r[key] for r in records])
    meta = {"g": hamiltonian.coupling, "basis": hamiltonian.basis.backend,
            "dimension": hamiltonian.basis.dimension, "orbitals": hamiltonian.basis.n_orbitals,
            "tolerance": tol, "krylov_dim": krylov_dim, "method": method,
            "parity_sector": None if sector is None else sector.sign,
            "propagated_dimension": matrix.shape[0]}
    if hamiltonian.potential is not None:
        meta.update(V0=hamiltonian.potential.depth, tilt=hamiltonian.potential.tilt)
    log.info("propagated to t=%g in %d steps", times[-1], steps)
    return Trajectory(times, stored if store_states else None, observables, meta, steps)


@dataclass
class Relaxation:
    state: ManyBodyState
    energy: float
    residual: float
    energies: list
    iterations: int


def relax_ground_state(hamiltonian: ManyBodyOperator, guess: ManyBodyState | None = None,
                       tol: float = 1e-8, krylov_dim: int = 30, max_iterations: int = 500,
                       seed: int = 0) -> Relaxation:
    """Imaginary-time relaxation with Krylov steps of growing length.

    The energy history is monotonically non-increasing; convergence means
    ``||H psi - E psi|| < tol``.  A zero-overlap guess (detected by a stalled
    energy above the lowest Ritz value) is retried with a random vector.
    """
    apply = _RealOperator(hamiltonian.matrix)
    dim = hamiltonian.shape[0]
    rng = np.random.default_rng(seed)
    if guess is None:
        psi = rng.standard_normal(dim).astype(complex)
    else:
        psi = guess.coefficients.astype(complex)
    psi /= np.linalg.norm(psi)
    energies = [hamiltonian.expectation(psi)]
    tau = 0.1
    for it in range(1, max_iterations + 1):
        space = lanczos(apply, psi, krylov_dim)
        while True:
            new = space.state(tau, imaginary=True)
            new /= np.linalg.norm(new)
            if space.error(tau, imaginary=True) / max(np.linalg.norm(space.coefficients(tau, True)), 1e-300) < 1e-6:
                break
            tau *= 0.5
        energy = hamiltonian.expectation(new)
        if energy > energies[-1] + 1e-12 * max(1.0, abs(energy)):
            tau *= 0.5
            continue
        psi = new
        energies.append(energy)
        hpsi = apply(psi)
        residual = float(np.linalg.norm(hpsi - energy * psi))
        if residual < tol:
            state = ManyBodyState(hamiltonian.basis, psi, 0.0, {"relaxation_iterations": it})
            return Relaxation(state, energy, residual, energies, it)
        if it == 25 and space.theta[0] < energy - 10 * max(residual, 1e-6) and guess is not None:
            if abs(np.vdot(psi, space.basis[0])) > 1 - 1e-12 and residual > 1e-3:
                psi = rng.standard_normal(dim).astype(complex)
                psi /= np.linalg.norm(psi)
        tau *= 2.0
    raise NumericalError(
        f"imaginary-time relaxation did not converge in {max_iterations} iterations "
        f"(last residual {residual:.3e}, energy {energies[-1]:.10g})"
    )


def prepare_localized_state(well: str, n_bosons: int, g: float, target, *, depth: float,
                            tilt: float = 0.0, scheme: str = "fd", tol: float = 1e-8,
                            leakage_limit: float = LEAKAGE_LIMIT) -> ManyBodyState:
    """Ground state of ``n_bosons`` relaxed behind hard walls around ``well``, in ``target``.

    The walls sit at the well's barrier tops; the relaxed state is embedded
    into the full-domain basis exactly as a number state with all bosons in
    ``well`` and index 0.
    """
    if well not in WELLS:
        raise ConfigurationError(f"unknown well {well!r}")
    full = target.grid
    if not full.matches(Domain.FULL_TRIPLE) or (full.n_points - 2) % 3:
        raise ConfigurationError("target must live on a wall-aligned full-domain grid")
    n_sub = (full.n_points - 2) // 3
    if aligned_full_grid(n_sub) != full:
        raise ConfigurationError("target grid is not wall aligned")
    sub, _ = sub_grid_of(full, well)
    basis = build_basis(n_bosons, grid=sub)
    h = assemble_hamiltonian(basis, PotentialSpec(depth, tilt, Domain.for_well(well)), g, scheme)
    guess = ManyBodyState(basis, np.ones(basis.dimension) / np.sqrt(basis.dimension))
    relaxed = relax_ground_state(h, guess, tol=tol)
    c = relaxed.state.coefficients
    c = c * np.exp(-1j * np.angle(c[np.argmax(np.abs(c))]))
    factors = {w: SubsetState(0.0, np.ones(1), None) for w in WELLS}
    factors[well] = SubsetState(relaxed.energy, c.real, basis)
    counts = tuple(n_bosons if w == well else 0 for w in WELLS)
    wave = NumberStateWavefunction(NumberStateLabel(counts), (0, 0, 0), 0, relaxed.energy, g, factors)
    state = embed_number_state(wave, target, full, leakage_limit)
    state.meta.update(relaxation_iterations=relaxed.iterations, residual=relaxed.residual)
    return state
