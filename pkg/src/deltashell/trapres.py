"""Two atoms in displaced harmonic traps: relative-motion spectrum versus separation.

For traps displaced by ``delta_z`` along z the relative Hamiltonian is the
isotropic trap plus the pair interaction, minus ``delta_z * z`` and plus the
constant ``delta_z**2 / 2``.  In a basis of spherical trap states
(biorthogonal when the interaction is a shell pseudopotential) the linear
term couples l to l +- 1 at fixed m.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

#: Largest tolerated |Im E| / max(1, |E|) of an eigenvalue that should be real.
IMAG_TOL = 1e-8
#: Track continuation warns below this overlap.
OVERLAP_WARN = 0.6


class NonRealSpectrumError(ArithmeticError):
    """An eigenvalue expected to be real has a significant imaginary part."""


class SelfConsistencyError(ArithmeticError):
    """The fixed-point search for a level failed."""


def thread_count():
    """Worker threads allowed by the DELTASHELL_THREADS environment variable."""
    try:
        n = int(os.environ.get("DELTASHELL_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


# ---------------------------------------------------------------------------
# Matrix elements


def angular_coupling(l, lp, m=0):
    """<lp, m| cos(theta) |l, m>."""
    if abs(m) > l or abs(m) > lp:
        return 0.0
    if lp == l + 1:
        return math.sqrt(((l + 1) ** 2 - m * m) / ((2 * l + 1) * (2 * l + 3)))
    if lp == l - 1:
        return math.sqrt((l * l - m * m) / ((2 * l - 1) * (2 * l + 1)))
    return 0.0


def coupling_matrix(basis):
    """Matrix K_mn = <l_m|cos theta|l_n> int P_m r F_n r^2 dr."""
    ls = basis.ls
    ang = np.array([[angular_coupling(ln, lm, basis.m) for ln in ls] for lm in ls])
    return ang * basis.radial_matrix()


@dataclass
class SeparationHamiltonian:
    """Matrix of the relative Hamiltonian at one separation in a given basis."""

    delta_z: float
    matrix: np.ndarray
    energies: np.ndarray
    labels: list


def build_h_matrix(basis, delta_z, coupling=None):
    """H = diag(E_n) - delta_z K + (delta_z^2 / 2) I."""
    if not np.isfinite(delta_z) or delta_z < 0:
        raise ValueError("delta_z must be finite and non-negative")
    K = coupling_matrix(basis) if coupling is None else coupling
    E = basis.energies
    H = np.diag(E) - delta_z * K + 0.5 * delta_z ** 2 * np.eye(E.size)
    return SeparationHamiltonian(float(delta_z), H, E, basis.labels)


def real_eigensystem(H, imag_tol=IMAG_TOL):
    """Eigenvalues (ascending) with right and left eigenvectors of a real matrix.

    Left vectors are scaled so that L^T R = I.

    Raises
    ------
    NonRealSpectrumError
        If any eigenvalue has a relative imaginary part above ``imag_tol``.
    """
    w, vl, vr = linalg.eig(H, left=True, right=True)
    rel = np.abs(w.imag) / np.maximum(1.0, np.abs(w.real))
    if np.any(rel > imag_tol):
        raise NonRealSpectrumError(f"eigenvalue imaginary part {rel.max():.2e} exceeds {imag_tol:.0e}")
    order = np.argsort(w.real)
    w = w.real[order]
    vr = vr[:, order].real
    vl = vl[:, order].real
    norms = np.sum(vl * vr, axis=0)
    vl = vl / norms
    return w, vr, vl


# ---------------------------------------------------------------------------
# Self-consistent spectrum


@dataclass
class Level:
    """One self-consistent eigenvalue.

    ``E0`` is the reference energy of the basis in which it was found,
    ``E0 = E - delta_z**2 / 2``.  ``right`` and ``left`` are the eigenvector
    components over ``labels``.
    """

    E: float
    E0: float
    index: int
    right: np.ndarray
    left: np.ndarray
    labels: list
    ls: np.ndarray
    multi_root: bool = False
    residual: float = 0.0

    @property
    def l_weights(self):
        wts = {}
        prod = self.left * self.right
        for l in np.unique(self.ls):
            wts[int(l)] = float(np.sum(prod[self.ls == l]))
        return wts

    @property
    def l_character(self):
        w = self.l_weights
        return max(w, key=lambda k: abs(w[k]))


class ReferenceEnergyModel:
    """Basis energies and coupling matrices as functions of the reference energy.

    Bases are built lazily on a lattice of reference energies (multiples of
    ``e0_step``) and reordered to a common label order.  Between lattice
    points the diagonal energies and the coupling matrix are interpolated
    with local cubics; :meth:`fresh` builds the basis at the exact energy.
    """

    def __init__(self, factory, e0_step=0.05):
        self.factory = factory
        self.e0_step = float(e0_step)
        self.labels = None
        self._lattice = {}
        self._fresh = {}

    def _canonical(self, basis):
        order = sorted(range(len(basis.states)), key=lambda i: basis.labels[i])
        labels = [basis.labels[i] for i in order]
        if self.labels is None:
            self.labels = labels
            self.ls = np.array([lab[0] for lab in labels])
        elif labels != self.labels:
            raise SelfConsistencyError("basis layout changed with the reference energy; "
                                       "fix the number of states per channel")
        K = coupling_matrix(basis)[np.ix_(order, order)]
        return basis.energies[order], K

    def fresh(self, E0):
        key = round(float(E0), 12)
        if key not in self._fresh:
            self._fresh[key] = self._canonical(self.factory(float(E0)))
        return self._fresh[key]

    def node(self, j):
        if j not in self._lattice:
            self._lattice[j] = self.fresh(j * self.e0_step)
        return self._lattice[j]

    def prefetch(self, lo, hi):
        js = range(int(math.floor(lo / self.e0_step)) - 1, int(math.ceil(hi / self.e0_step)) + 2)
        todo = [j for j in js if j not in self._lattice]
        n = thread_count()
        if n > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=n) as pool:
                built = list(pool.map(lambda j: self._canonical(self.factory(j * self.e0_step)), todo))
            for j, b in zip(todo, built):
                self._lattice[j] = b
        else:
            for j in todo:
                self.node(j)

    def interpolated(self, E0):
        x = E0 / self.e0_step
        j0 = int(math.floor(x)) - 1
        js = [j0, j0 + 1, j0 + 2, j0 + 3]
        wts = []
        for a in range(4):
            w = 1.0
            for b in range(4):
                if a != b:
                    w *= (x - js[b]) / (js[a] - js[b])
            wts.append(w)
        E = sum(w * self.node(j)[0] for w, j in zip(wts, js))
        K = sum(w * self.node(j)[1] for w, j in zip(wts, js))
        return E, K

    def matrices(self, E0, mode="interpolate"):
        if mode == "exact":
            return self.fresh(E0)
        j = E0 / self.e0_step
        if abs(j - round(j)) < 1e-9:
            return self.node(int(round(j)))
        return self.interpolated(E0)


def _shifted_eigs(model, E0, delta_z, mode):
    E, K = model.matrices(E0, mode)
    return real_eigensystem(np.diag(E) - delta_z * K)


def self_consistent_spectrum(model, delta_z, *, e0_window, refine="interpolate", tol=1e-10,
                             n_states=None):
    """Self-consistent levels at one separation.

    A level is a pair (E0, i) where the i-th eigenvalue of the Hamiltonian
    built at reference energy E0, without the constant delta_z^2/2, equals
    E0.  Sign changes of mu_i(E0) - E0 on the reference-energy lattice are
    refined with Brent's method, on interpolated matrices
    (``refine="interpolate"``) or on freshly built bases (``"exact"``).
    Each level carries the residual |mu_i(E0) - E0| of a fresh basis when
    ``refine="exact"``.
    """
    lo, hi = e0_window
    step = model.e0_step
    js = np.arange(int(math.floor(lo / step)), int(math.ceil(hi / step)) + 1)
    model.prefetch(lo, hi)
    grid = js * step
    mus = np.array([real_eigensystem(np.diag(model.node(j)[0]) - delta_z * model.node(j)[1])[0]
                    for j in js])
    dim = mus.shape[1]
    levels = []
    for i in range(dim):
        h = mus[:, i] - grid
        for j in np.flatnonzero(np.sign(h[:-1]) * np.sign(h[1:]) < 0):
            fn = lambda e, i=i: _shifted_eigs(model, e, delta_z, refine)[0][i] - e
            a, b = grid[j], grid[j + 1]
            if refine == "exact":
                fa, fb = fn(a), fn(b)
                if np.sign(fa) == np.sign(fb):
                    raise SelfConsistencyError(f"bracket lost on refinement near E0={a}")
            root = optimize.brentq(fn, a, b, xtol=tol, rtol=4 * np.finfo(float).eps)
            w, vr, vl = _shifted_eigs(model, root, delta_z, refine)
            lv = Level(float(w[i] + 0.5 * delta_z ** 2), float(root), i,
                       vr[:, i].copy(), vl[:, i].copy(), model.labels, model.ls)
            lv.residual = abs(float(w[i] - root))
            levels.append(lv)
        for j in np.flatnonzero(h == 0.0):
            w, vr, vl = _shifted_eigs(model, grid[j], delta_z, "interpolate")
            lv = Level(float(w[i] + 0.5 * delta_z ** 2), float(grid[j]), i,
                       vr[:, i].copy(), vl[:, i].copy(), model.labels, model.ls)
            levels.append(lv)
    levels.sort(key=lambda lv: lv.E)
    counts = {}
    for lv in levels:
        counts[lv.index] = counts.get(lv.index, 0) + 1
    for lv in levels:
        lv.multi_root = counts[lv.index] > 1
    if n_states is not None:
        levels = levels[:n_states]
    return levels


def fixed_basis_spectrum(basis, delta_z, coupling=None):
    """Levels of a basis that does not depend on energy (e.g. the exact reference)."""
    H = build_h_matrix(basis, delta_z, coupling)
    w, vr, vl = real_eigensystem(H.matrix)
    return [Level(float(w[i]), float(w[i] - 0.5 * delta_z ** 2), i, vr[:, i].copy(),
                  vl[:, i].copy(), basis.labels, basis.ls) for i in range(w.size)]


# ---------------------------------------------------------------------------
# Sweeps and tracks


@dataclass
class SpectrumCurve:
    """Energy tracks versus separation.

    ``E[i, t]`` is the energy of track t at ``delta_z[i]``; ``overlap[i, t]``
    is the continuation overlap that assigned it (1 at the first point).
    """

    delta_z: np.ndarray
    E: np.ndarray
    E0: np.ndarray
    overlap: np.ndarray
    l_character: np.ndarray
    sorted_E: np.ndarray
    warnings: list = field(default_factory=list)
    solver: str = "pseudo"

    def rows(self):
        for i, dz in enumerate(self.delta_z):
            for t in range(self.E.shape[1]):
                yield {"delta_z": float(dz), "track_id": t, "E": float(self.E[i, t]),
                       "E0": float(self.E0[i, t]), "l_character": int(self.l_character[t]),
                       "dominant_overlap": float(self.overlap[i, t])}


def _vector_on_labels(level, labels):
    idx = {lab: k for k, lab in enumerate(level.labels)}
    R = np.zeros(len(labels))
    L = np.zeros(len(labels))
    for k, lab in enumerate(labels):
        j = idx.get(lab)
        if j is not None:
            R[k] = level.right[j]
            L[k] = level.left[j]
    return R, L


def track_levels(delta_z, level_lists, n_tracks):
    """Assign levels at consecutive separations to continuous tracks.

    Uses the biorthogonal overlap |<left_prev|right_new>| between neighbours,
    expressed on common basis labels, and an optimal assignment.
    """
    from scipy.optimize import linear_sum_assignment

    labels = sorted({lab for lv in level_lists for lev in lv for lab in lev.labels})
    nz = len(delta_z)
    E = np.full((nz, n_tracks), np.nan)
    E0 = np.full((nz, n_tracks), np.nan)
    ov = np.ones((nz, n_tracks))
    sorted_E = np.full((nz, n_tracks), np.nan)
    warn = []
    current = level_lists[0][:n_tracks]
    if len(current) < n_tracks:
        raise SelfConsistencyError(f"only {len(current)} levels at delta_z={delta_z[0]}")
    lchar = np.array([lv.l_character for lv in current])
    for t, lv in enumerate(current):
        E[0, t], E0[0, t] = lv.E, lv.E0
    sorted_E[0] = [lv.E for lv in current]
    for i in range(1, nz):
        cand = level_lists[i][: n_tracks + 4]
        if len(cand) < n_tracks:
            raise SelfConsistencyError(f"only {len(cand)} levels at delta_z={delta_z[i]}")
        sorted_E[i] = [lv.E for lv in cand[:n_tracks]]
        prevL = np.array([_vector_on_labels(lv, labels)[1] for lv in current])
        newR = np.array([_vector_on_labels(lv, labels)[0] for lv in cand])
        O = np.abs(prevL @ newR.T)
        # restrict to the lowest n_tracks candidates unless a track clearly leaves
        rows, cols = linear_sum_assignment(-O)
        nxt = [None] * n_tracks
        for r_, c_ in zip(rows, cols):
            nxt[r_] = cand[c_]
            E[i, r_], E0[i, r_] = cand[c_].E, cand[c_].E0
            ov[i, r_] = O[r_, c_]
            if O[r_, c_] < OVERLAP_WARN:
                warn.append({"delta_z": float(delta_z[i]), "track": int(r_),
                             "overlap": float(O[r_, c_])})
        current = nxt
    return E, E0, ov, lchar, sorted_E, warn


def sweep_separation(levels_at, delta_z, n_tracks, solver="pseudo"):
    """Run ``levels_at(dz)`` over a separation grid and build tracks."""
    delta_z = np.asarray(delta_z, dtype=float)
    lists = [levels_at(float(dz)) for dz in delta_z]
    E, E0, ov, lchar, sorted_E, warn = track_levels(delta_z, lists, n_tracks)
    for w in warn:
        warnings.warn(f"weak track continuation at delta_z={w['delta_z']:.3f} "
                      f"(track {w['track']}, overlap {w['overlap']:.2f})", stacklevel=2)
    return SpectrumCurve(delta_z, E, E0, ov, lchar, sorted_E, warn, solver)


def pseudo_sweep(model, delta_z, n_tracks, *, e_ref, margin=1.0, refine="interpolate"):
    """Self-consistent pseudopotential sweep.

    ``e_ref`` are the level energies at zero separation.  A level keeps its
    energy roughly while E0 = E - delta_z^2/2 drops, except a molecular level
    whose E0 stays put, so the search window spans both.
    """
    e_ref = np.sort(np.asarray(e_ref, dtype=float))
    e_lo = float(e_ref[0])
    e_hi = float(e_ref[min(n_tracks + 1, e_ref.size - 1)])

    def levels_at(dz):
        shift = 0.5 * dz * dz
        win = (min(e_lo, e_lo - shift) - margin, max(e_lo, e_hi - shift) + margin)
        return self_consistent_spectrum(model, dz, e0_window=win, refine=refine)

    return sweep_separation(levels_at, delta_z, n_tracks, "pseudo")


def exact_sweep(basis, delta_z, n_tracks):
    K = coupling_matrix(basis)
    return sweep_separation(lambda dz: fixed_basis_spectrum(basis, dz, K), delta_z, n_tracks, "exact")


# ---------------------------------------------------------------------------
# Resonances


@dataclass
class Resonance:
    kind: str            # "avoided" or "crossing"
    delta_z: float
    gap: float
    track_a: int
    track_b: int

    def to_dict(self):
        return {"kind": self.kind, "delta_z": self.delta_z, "gap": self.gap,
                "track_a": self.track_a, "track_b": self.track_b}


def find_resonances(curve, gap_threshold=0.2, crossing_gap=1e-3):
    """Avoided crossings and true crossings between neighbouring sorted levels.

    Local minima of E_{i+1} - E_i below ``gap_threshold`` are refined by
    fitting gap^2 = g^2 + s^2 (x - x0)^2 through the three points around the
    minimum.  A fitted gap below ``crossing_gap`` is reported as a crossing.
    ``track_a``/``track_b`` are the sorted-level indices i and i+1.
    """
    dz = curve.delta_z
    S = curve.sorted_E
    out = []
    for i in range(S.shape[1] - 1):
        gap = S[:, i + 1] - S[:, i]
        for j in range(1, len(dz) - 1):
            if not (gap[j] <= gap[j - 1] and gap[j] < gap[j + 1] and gap[j] < gap_threshold):
                continue
            x = dz[j - 1:j + 2]
            y = gap[j - 1:j + 2] ** 2
            c2, c1, c0 = np.polyfit(x, y, 2)
            if c2 > 0:
                x0 = -c1 / (2 * c2)
                g2 = c0 - c1 * c1 / (4 * c2)
                x0 = float(np.clip(x0, x[0], x[-1]))
            else:
                x0, g2 = float(dz[j]), gap[j] ** 2
            g = math.sqrt(max(g2, 0.0))
            kind = "crossing" if g < crossing_gap else "avoided"
            out.append(Resonance(kind, x0, float(min(g, gap[j])) if kind == "avoided" else g, i, i + 1))
    out.sort(key=lambda r: (r.delta_z, r.track_a))
    return out


def match_resonances(a, b, tol=0.05):
    """Pair resonances by track indices; return the largest location difference."""
    worst = 0.0
    unmatched = []
    for r in a:
        cands = [s for s in b if (s.track_a, s.track_b) == (r.track_a, r.track_b)]
        if not cands:
            unmatched.append(r)
            continue
        best = min(cands, key=lambda s: abs(s.delta_z - r.delta_z))
        worst = max(worst, abs(best.delta_z - r.delta_z))
    return worst, unmatched
