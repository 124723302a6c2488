"""Solvers for one-sided partially observable stochastic games on the
lateral-movement honeypot domain: exact HSVI over full beliefs and HSVI over
per-vertex marginal infection probabilities."""

from .graph import (LayeredDag, chain, chain_oracle, enumerate_paths, generate_instance, infection_update,
                    load_instance, path_cost, prefix_until, save_instance, shortest_costs, stage_cost)
from .posg import ExplicitPosg, belief_update, build_lateral_posg, characteristic_vector
from .exact import hsvi_exact
from .compact import CompactAlpha, CompactBounds, hsvi_compact, init_bounds_compact, lb_eval, ub_eval

__version__ = "0.1.0"
