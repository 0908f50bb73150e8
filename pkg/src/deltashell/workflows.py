"""End-to-end runs shared by the command line and the reproduction checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exactref import exact_basis
from .freespace import SquareWell, scattering_length_fn
from .trapbasis import build_basis
from .trapres import (ReferenceEnergyModel, exact_sweep, find_resonances, fixed_basis_spectrum,
                      pseudo_sweep)


@dataclass
class SpectrumConfig:
    """Parameters of a separation sweep comparing the two solvers."""

    V0: float = 489.9
    R0: float = 0.1
    r_s: float = 0.05
    l_max: int = 8
    E_cut: float = 24.0
    dz_min: float = 0.0
    dz_max: float = 3.0
    dz_step: float = 0.05
    n_tracks: int = 8
    m: int = 0
    interacting_l: tuple = (0, 1)
    E_min: float = -20.0
    e0_step: float = 0.05
    gap_threshold: float = 0.2

    @property
    def delta_z(self):
        n = int(round((self.dz_max - self.dz_min) / self.dz_step))
        return np.round(self.dz_min + self.dz_step * np.arange(n + 1), 12)

    def to_dict(self):
        d = asdict(self)
        d["interacting_l"] = list(self.interacting_l)
        return d


def beta_functions(well, ls=(0, 1), E_min=-30.0, E_max=60.0):
    return {l: scattering_length_fn(well, l, E_min, E_max) for l in ls}


@dataclass
class SpectrumRun:
    config: SpectrumConfig
    pseudo: object
    exact: object
    pseudo_resonances: list
    exact_resonances: list
    n_per_l: dict = field(default_factory=dict)


def make_pseudo_model(cfg, betas=None):
    """Reference-energy model of the pseudopotential basis with a fixed layout."""
    well = SquareWell(cfg.V0, cfg.R0)
    betas = betas or beta_functions(well, cfg.interacting_l, E_max=cfg.E_cut + 40.0)
    probe = build_basis(cfg.l_max, cfg.r_s, 1.5, betas, E_cut=cfg.E_cut, E_min=cfg.E_min, m=cfg.m)
    n_per_l = {l: int(np.sum(probe.ls == l)) for l in range(abs(cfg.m), cfg.l_max + 1)}

    def factory(E0):
        return build_basis(cfg.l_max, cfg.r_s, E0, betas, E_cut=cfg.E_cut, E_min=cfg.E_min,
                           m=cfg.m, n_per_l=n_per_l)

    return ReferenceEnergyModel(factory, cfg.e0_step), n_per_l


def run_spectrum(cfg, solvers=("pseudo", "exact")):
    """Sweep the separation with the requested solvers and locate resonances."""
    well = SquareWell(cfg.V0, cfg.R0)
    dz = cfg.delta_z
    pseudo = exact = None
    pres = eres = []
    n_per_l = {}
    if "pseudo" in solvers:
        model, n_per_l = make_pseudo_model(cfg)
        # reference levels at zero separation size the reference-energy window
        from .trapres import self_consistent_spectrum
        e_ref = [lv.E for lv in self_consistent_spectrum(model, 0.0, e0_window=(-8.0, 9.0))]
        pseudo = pseudo_sweep(model, dz, cfg.n_tracks, e_ref=e_ref)
        pres = find_resonances(pseudo, cfg.gap_threshold)
    if "exact" in solvers:
        eb = exact_basis(well, cfg.l_max, cfg.E_cut, m=cfg.m, interacting_l=cfg.interacting_l,
                         E_min=cfg.E_min, n_per_l=n_per_l or None)
        exact = exact_sweep(eb, dz, cfg.n_tracks)
        eres = find_resonances(exact, cfg.gap_threshold)
    return SpectrumRun(cfg, pseudo, exact, pres, eres, n_per_l)


def compare_runs(run, exclusion=0.1):
    """Largest |E_pseudo - E_exact| over the lowest tracks, away from gaps.

    Points within ``exclusion`` of any resonance of either solver are
    skipped.  Levels are compared in sorted order.
    """
    dz = run.config.delta_z
    near = np.zeros(dz.shape, dtype=bool)
    for r in list(run.pseudo_resonances) + list(run.exact_resonances):
        near |= np.abs(dz - r.delta_z) < exclusion
    diff = np.abs(run.pseudo.sorted_E - run.exact.sorted_E)
    return float(np.max(diff[~near])) if np.any(~near) else math.nan
