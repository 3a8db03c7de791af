"""Differentially private, projection-free bandit convex optimization."""

from privbandit.bench_audit import AdversarySpec, comparator_loss, make_losses, regret, run_experiment
from privbandit.geometry import (DecisionSet, Hypercube, L1Ball, L2Ball, PartitionMatroidBase,
                                 Simplex, domain_from_config, shrink_wrap)
from privbandit.private_bandit import BanditParams, Privacy, RegretTrace, schedule
from privbandit.randomness import NoiseSpec, RandomSource
from privbandit.smoothing import LossOracle
from privbandit.tree_agg import TreeAggregator

__all__ = [
    "AdversarySpec", "BanditParams", "DecisionSet", "Hypercube", "L1Ball", "L2Ball", "LossOracle",
    "NoiseSpec", "PartitionMatroidBase", "Privacy", "RandomSource", "RegretTrace", "Simplex",
    "TreeAggregator", "comparator_loss", "domain_from_config", "make_losses", "regret",
    "run_experiment", "schedule", "shrink_wrap",
]
