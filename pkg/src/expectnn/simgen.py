"""Synthetic genotypes and phenotypes for the three simulation designs.

Genotypes follow Hardy-Weinberg proportions: each SNP gets a minor
allele frequency drawn from ``maf_range`` and entries are
Binomial(2, maf). Every random component is drawn from its own named
sub-stream of the seed (``genotypes``, ``mafs``, ``betas``, ``select``,
``gammas``, ``noise``), so pinning one component to a fixed value leaves
the draws of all others unchanged.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .models import GENOTYPE, Dataset

SIM1_SCENARIOS = ("linear", "hyperbolic", "mixed", "quadratic", "cubic")
SIM2_SCENARIOS = {
    "interact2mult": "mult2",
    "interact2thresh": "thresh2",
    "interact3": "three_way",
    "no_interaction": "none",
}
SIM2_KINDS = ("mult2", "thresh2", "three_way", "none")
SCENARIOS = SIM1_SCENARIOS + tuple(SIM2_SCENARIOS) + ("gene_gene",)
_ARITY = {"mult2": 2, "thresh2": 2, "three_way": 3, "none": 0}


def normalize_scenario(name: str) -> str:
    """Accept Sim II kind names (``mult2`` ...) as scenario aliases."""
    aliases = {v: k for k, v in SIM2_SCENARIOS.items()}
    name = aliases.get(name, name)
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS + SIM2_KINDS)}")
    return name


@dataclass(frozen=True)
class SimulationSpec:
    scenario: str
    n: int = 500
    p: int = 50
    maf_range: Tuple[float, float] = (0.05, 0.5)
    interaction_fraction: float = 0.2
    seed: int = 0
    snps_per_gene: int = 4

    def __post_init__(self):
        object.__setattr__(self, "scenario", normalize_scenario(self.scenario))
        lo, hi = (float(v) for v in self.maf_range)
        object.__setattr__(self, "maf_range", (lo, hi))
        if self.n < 5:
            raise ValueError("n must be at least 5")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if not (0.0 < lo <= hi <= 0.5):
            raise ValueError("maf_range must satisfy 0 < lo <= hi <= 0.5")
        if not (0.0 <= self.interaction_fraction <= 1.0):
            raise ValueError("interaction_fraction must lie in [0, 1]")
        if self.snps_per_gene < 1:
            raise ValueError("snps_per_gene must be at least 1")

    def with_seed(self, seed: int) -> "SimulationSpec":
        return replace(self, seed=seed)


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named component of a seeded draw."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def simulate_genotypes(n: int, p: int, maf_range=(0.05, 0.5), seed: int = 0) -> np.ndarray:
    lo, hi = maf_range
    maf = stream(seed, "mafs").uniform(lo, hi, size=p)
    return stream(seed, "genotypes").binomial(2, maf, size=(n, p)).astype(float)


def phenotype_link(scenario: str, alpha):
    a = np.asarray(alpha, dtype=float)
    if scenario == "linear":
        out = a
    elif scenario == "hyperbolic":
        out = np.abs(a) / (1.0 + np.abs(a))
    elif scenario == "mixed":
        out = np.sin(a) + 2.0 * np.exp(-16.0 * a * a)
    elif scenario == "quadratic":
        out = a * a
    elif scenario == "cubic":
        out = a**3
    else:
        raise ValueError(f"unknown link {scenario!r}")
    return float(out) if out.ndim == 0 else out


def _main_effects(genotypes, seed, beta):
    p = genotypes.shape[1]
    if beta is None:
        beta = stream(seed, "betas").uniform(-1.0, 1.0, size=p)
    return genotypes @ np.broadcast_to(np.asarray(beta, dtype=float), (p,))


def _noise(n, seed):
    return stream(seed, "noise").standard_normal(n)


def simulate_phenotype_simI(genotypes, scenario: str, seed: int = 0, beta=None) -> np.ndarray:
    """``y = link(x'beta) + N(0, 1)`` with ``beta ~ U(-1, 1)`` unless given."""
    if scenario not in SIM1_SCENARIOS:
        raise ValueError(f"{scenario!r} is not a nonlinear-link scenario")
    g = np.asarray(genotypes, dtype=float)
    alpha = _main_effects(g, seed, beta)
    return phenotype_link(scenario, alpha) + _noise(g.shape[0], seed)


def interaction_groups(p: int, kind: str, fraction: float, seed: int):
    """Disjoint random groups of SNP columns that interact."""
    arity = _ARITY[kind]
    if arity == 0:
        return []
    k = int(np.floor(fraction * p + 0.5))
    if k < arity:
        raise ValueError(f"{kind} needs at least {arity} selected SNPs, fraction*p gives {k}")
    chosen = stream(seed, "select").permutation(p)[:k]
    m = k // arity
    return [tuple(int(c) for c in chosen[i * arity : (i + 1) * arity]) for i in range(m)]


def simulate_phenotype_simII(genotypes, kind: str, fraction: float = 0.2, seed: int = 0, beta=None, gamma=None) -> np.ndarray:
    """Additive main effects on every SNP plus interactions among a
    random ``fraction`` of SNPs, paired (or tripled) disjointly.

    ``thresh2`` uses the carrier indicator ``1[x >= 1]`` for both SNPs.
    """
    if kind not in _ARITY:
        raise ValueError(f"unknown interaction kind {kind!r}")
    g = np.asarray(genotypes, dtype=float)
    signal = _main_effects(g, seed, beta)
    groups = interaction_groups(g.shape[1], kind, fraction, seed)
    if groups:
        if gamma is None:
            gamma = stream(seed, "gammas").uniform(-1.0, 1.0, size=len(groups))
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (len(groups),))
        for coef, cols in zip(gamma, groups):
            if kind == "thresh2":
                term = np.prod(g[:, cols] >= 1, axis=1).astype(float)
            else:
                term = np.prod(g[:, cols], axis=1)
            signal = signal + coef * term
    return signal + _noise(g.shape[0], seed)


def simulate_gene_gene(n: int, snps_per_gene: int = 4, seed: int = 0, maf_range=(0.05, 0.5), gamma=None) -> Dataset:
    """Two genes with additive gene scores and a multiplicative gene-gene term."""
    if n < 5:
        raise ValueError("n must be at least 5")
    p = 2 * snps_per_gene
    x = simulate_genotypes(n, p, maf_range, seed)
    beta = stream(seed, "betas").uniform(-1.0, 1.0, size=p)
    if gamma is None:
        gamma = stream(seed, "gammas").uniform(-1.0, 1.0)
    g1 = x[:, :snps_per_gene] @ beta[:snps_per_gene]
    g2 = x[:, snps_per_gene:] @ beta[snps_per_gene:]
    y = g1 + g2 + gamma * g1 * g2 + _noise(n, seed)
    groups = {"gene1": tuple(range(snps_per_gene)), "gene2": tuple(range(snps_per_gene, p))}
    return Dataset(x, y, (GENOTYPE,) * p, groups, snp_names(p))


def snp_names(p: int) -> tuple:
    return tuple(f"snp_{j + 1}" for j in range(p))


def simulate(spec: SimulationSpec) -> Dataset:
    if spec.scenario == "gene_gene":
        return simulate_gene_gene(spec.n, spec.snps_per_gene, spec.seed, spec.maf_range)
    x = simulate_genotypes(spec.n, spec.p, spec.maf_range, spec.seed)
    if spec.scenario in SIM1_SCENARIOS:
        y = simulate_phenotype_simI(x, spec.scenario, spec.seed)
    else:
        y = simulate_phenotype_simII(x, SIM2_SCENARIOS[spec.scenario], spec.interaction_fraction, spec.seed)
    return Dataset(x, y, (GENOTYPE,) * spec.p, None, snp_names(spec.p))
